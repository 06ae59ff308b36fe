//! Physical constants and unit conversions.
//!
//! Energies are carried internally as frequencies in GHz (E/h). Everything
//! that enters from the outside in Kelvin or Tesla passes through here.

/// Boltzmann constant over Planck constant, GHz per Kelvin.
pub const KB_GHZ_PER_K: f64 = 20.836619;

/// Bohr magneton over Planck constant, GHz per Tesla (equivalently MHz per mT).
pub const MUB_GHZ_PER_T: f64 = 13.996245;

/// Avogadro's number times the Bohr magneton in cgs units, emu·G/mol.
pub const NA_MUB_EMU: f64 = 5585.0;

/// Oersted per Tesla for the free-space field H = B/μ0.
pub const OE_PER_T: f64 = 1.0e4;

#[inline]
pub fn kelvin_to_ghz(t: f64) -> f64 {
    t * KB_GHZ_PER_K
}

#[inline]
pub fn ghz_to_kelvin(f: f64) -> f64 {
    f / KB_GHZ_PER_K
}

#[inline]
pub fn mt_to_tesla(b: f64) -> f64 {
    b * 1e-3
}

#[inline]
pub fn tesla_to_mt(b: f64) -> f64 {
    b * 1e3
}
