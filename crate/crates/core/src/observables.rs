//! Thermodynamics from eigenspectra: Boltzmann populations, Schottky heat
//! capacity, magnetization and the χT product, powder- and strain-averaged.

use crate::ensemble::{ensemble_mean, EnsembleSpec};
use crate::error::{Error, Result};
use crate::spin::{eigensolve, EigenSystem, FieldSpec, SpinSystem};
use crate::units::{KB_GHZ_PER_K, MUB_GHZ_PER_T, NA_MUB_EMU, OE_PER_T};

/// Ascending temperatures (K) at a fixed field.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalGrid {
    pub temperatures: Vec<f64>,
    pub field: FieldSpec,
}

impl ThermalGrid {
    pub fn new(temperatures: Vec<f64>, field: FieldSpec) -> Result<Self> {
        if temperatures.is_empty() {
            return Err(Error::Empty("temperature grid"));
        }
        if temperatures.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter { name: "temperatures", reason: "must be positive and finite".into() });
        }
        if temperatures.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter { name: "temperatures", reason: "must be strictly ascending".into() });
        }
        Ok(Self { temperatures, field })
    }

    /// `n` log-spaced temperatures from `t_min` to `t_max` inclusive.
    pub fn log_spaced(t_min: f64, t_max: f64, n: usize, field: FieldSpec) -> Result<Self> {
        if n < 2 || !(t_min > 0.0 && t_max > t_min) {
            return Err(Error::InvalidParameter { name: "temperature range", reason: format!("[{t_min}, {t_max}] with {n} points") });
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let temps = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        Self::new(temps, field)
    }
}

/// Boltzmann weights at temperature `t` (K), shifted by the ground energy.
pub fn populations(es: &EigenSystem, t: f64) -> Result<Vec<f64>> {
    boltzmann(&es.energies, t)
}

pub(crate) fn boltzmann(energies_ghz: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTemperature(t));
    }
    let kt = KB_GHZ_PER_K * t;
    let e0 = energies_ghz.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = energies_ghz.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    Ok(w)
}

/// c/R of one spectrum: (⟨(E/kB)²⟩ − ⟨E/kB⟩²)/t².
pub fn spectrum_heat_capacity(energies_ghz: &[f64], t: f64) -> Result<f64> {
    let p = boltzmann(energies_ghz, t)?;
    let e0 = energies_ghz.iter().copied().fold(f64::INFINITY, f64::min);
    // energies relative to the ground level, in units of kB·t
    let x: Vec<f64> = energies_ghz.iter().map(|e| (e - e0) / (KB_GHZ_PER_K * t)).collect();
    let mean: f64 = p.iter().zip(&x).map(|(p, x)| p * x).sum();
    let var: f64 = p.iter().zip(&x).map(|(p, x)| p * (x - mean).powi(2)).sum();
    Ok(var)
}

/// Magnetic heat capacity c/R per molecule on the grid, averaged over the
/// ensemble (an average of heat capacities, not of spectra).
pub fn heat_capacity(system: &SpinSystem, ensemble: &EnsembleSpec, grid: &ThermalGrid) -> Result<Vec<f64>> {
    system.validate()?;
    ensemble.validate()?;
    if grid.temperatures.is_empty() {
        return Err(Error::Empty("temperature grid"));
    }
    let samples = ensemble.strain_samples(system);
    let dirs = ensemble.orientations(&grid.field);
    ensemble_mean(&samples, &dirs, |sys, n| {
        let field = FieldSpec { magnitude: grid.field.magnitude, direction: n };
        let es = sys.eigensystem(&field)?;
        grid.temperatures.iter().map(|&t| spectrum_heat_capacity(&es.energies, t)).collect()
    })
}

/// Closed-form Schottky heat capacity of a two-level system with gap `gap_k` (K).
pub fn two_level_schottky(gap_k: f64, t: f64) -> f64 {
    let x = gap_k / t;
    let e = (-x).exp();
    x * x * e / (1.0 + e).powi(2)
}

/// Magnetic entropy S/R accumulated over the grid, ∫ (c/R) d(ln t) by the trapezoid rule.
pub fn entropy_from_heat_capacity(temperatures: &[f64], c_over_r: &[f64]) -> f64 {
    temperatures
        .windows(2)
        .zip(c_over_r.windows(2))
        .map(|(t, c)| 0.5 * (c[0] + c[1]) * (t[1] / t[0]).ln())
        .sum()
}

/// Tabulated non-magnetic (lattice) heat capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTable {
    rows: Vec<(f64, f64)>,
}

impl BaselineTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("baseline table"));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParameter { name: "baseline", reason: "temperatures must be strictly ascending".into() });
        }
        if rows.iter().any(|&(t, c)| !(t.is_finite() && c.is_finite()) || c < 0.0) {
            return Err(Error::InvalidParameter { name: "baseline", reason: "c/R must be finite and non-negative".into() });
        }
        Ok(Self { rows })
    }

    /// Parses the two-column `T_K,c_over_R` CSV. Lines starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "T_K,c_over_R" {
                    return Err(Error::InvalidParameter { name: "baseline header", reason: format!("expected `T_K,c_over_R`, got `{line}`") });
                }
                header_seen = true;
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::InvalidParameter {
                    name: "baseline row",
                    reason: format!("line {}: cannot parse `{line}`", lineno + 1),
                })
            };
            let mut cols = line.split(',');
            rows.push((parse(cols.next())?, parse(cols.next())?));
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Linear interpolation; no extrapolation.
    pub fn at(&self, t: f64) -> Result<f64> {
        let (t_min, t_max) = (self.rows[0].0, self.rows[self.rows.len() - 1].0);
        if !(t >= t_min && t <= t_max) {
            return Err(Error::OutOfRange { what: "baseline temperature", value: t, min: t_min, max: t_max });
        }
        let i = self.rows.partition_point(|r| r.0 <= t);
        if i == 0 {
            return Ok(self.rows[0].1);
        }
        if i == self.rows.len() {
            return Ok(self.rows[i - 1].1);
        }
        let (t0, c0) = self.rows[i - 1];
        let (t1, c1) = self.rows[i];
        Ok(c0 + (c1 - c0) * (t - t0) / (t1 - t0))
    }
}

/// Adds the lattice baseline to a magnetic c/R curve, pointwise on its grid.
pub fn add_lattice_baseline(temperatures: &[f64], magnetic: &[f64], baseline: &BaselineTable) -> Result<Vec<f64>> {
    if temperatures.len() != magnetic.len() {
        return Err(Error::DimensionMismatch { expected: temperatures.len(), got: magnetic.len() });
    }
    temperatures.iter().zip(magnetic).map(|(&t, &c)| Ok(c + baseline.at(t)?)).collect()
}

struct ThermalMoments {
    /// ⟨n·M⟩ in μB
    moment: f64,
    /// −kT ln Z in GHz
    free_energy: f64,
}

fn thermal_moments(sys: &SpinSystem, field: &FieldSpec, t: f64) -> Result<ThermalMoments> {
    let m = sys.matrices()?;
    let mn = m.moment_along(field.direction);
    let es = eigensolve(&m.hamiltonian(field.magnitude, &mn))?;
    let p = populations(&es, t)?;
    let mu = es.diagonal_expectations(&mn);
    let kt = KB_GHZ_PER_K * t;
    let e0 = es.energies[0];
    let z: f64 = es.energies.iter().map(|e| (-(e - e0) / kt).exp()).sum();
    Ok(ThermalMoments { moment: p.iter().zip(&mu).map(|(p, m)| p * m).sum(), free_energy: e0 - kt * z.ln() })
}

/// Thermal, ensemble-averaged moment along the field, μB per molecule.
pub fn magnetization(system: &SpinSystem, ensemble: &EnsembleSpec, field: &FieldSpec, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTemperature(t));
    }
    system.validate()?;
    ensemble.validate()?;
    let samples = ensemble.strain_samples(system);
    let dirs = ensemble.orientations(field);
    let v = ensemble_mean(&samples, &dirs, |sys, n| {
        Ok(vec![thermal_moments(sys, &FieldSpec { magnitude: field.magnitude, direction: n }, t)?.moment])
    })?;
    Ok(v[0])
}

/// Ensemble-averaged Helmholtz free energy, GHz.
pub fn free_energy(system: &SpinSystem, ensemble: &EnsembleSpec, field: &FieldSpec, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTemperature(t));
    }
    ensemble.validate()?;
    let samples = ensemble.strain_samples(system);
    let dirs = ensemble.orientations(field);
    let v = ensemble_mean(&samples, &dirs, |sys, n| {
        Ok(vec![thermal_moments(sys, &FieldSpec { magnitude: field.magnitude, direction: n }, t)?.free_energy])
    })?;
    Ok(v[0])
}

/// −∂F/∂B by central difference, in μB. Used as an independent check on [`magnetization`].
pub fn magnetization_from_free_energy(
    system: &SpinSystem,
    ensemble: &EnsembleSpec,
    field: &FieldSpec,
    t: f64,
    delta_b: f64,
) -> Result<f64> {
    let f_plus = free_energy(system, ensemble, &field.with_magnitude(field.magnitude + delta_b), t)?;
    let f_minus = free_energy(system, ensemble, &field.with_magnitude(field.magnitude - delta_b), t)?;
    Ok(-(f_plus - f_minus) / (2.0 * delta_b) / MUB_GHZ_PER_T)
}

/// Default probe field for χ = M/H, Tesla.
pub const DEFAULT_PROBE_FIELD_T: f64 = 0.1;

/// χT in emu·K·mol⁻¹ from M/H at a small probe field.
///
/// The probe field direction comes from `grid.field`; its magnitude is
/// ignored in favour of `probe_field`.
pub fn chi_t_curve(system: &SpinSystem, ensemble: &EnsembleSpec, grid: &ThermalGrid, probe_field: f64) -> Result<Vec<f64>> {
    if !(probe_field > 0.0 && probe_field.is_finite()) {
        return Err(Error::InvalidParameter { name: "probe_field", reason: format!("must be positive, got {probe_field}") });
    }
    system.validate()?;
    ensemble.validate()?;
    let field = grid.field.with_magnitude(probe_field);
    let samples = ensemble.strain_samples(system);
    let dirs = ensemble.orientations(&field);
    let m = ensemble_mean(&samples, &dirs, |sys, n| {
        let mats = sys.matrices()?;
        let mn = mats.moment_along(n);
        let es = eigensolve(&mats.hamiltonian(probe_field, &mn))?;
        let mu = es.diagonal_expectations(&mn);
        grid.temperatures
            .iter()
            .map(|&t| Ok(populations(&es, t)?.iter().zip(&mu).map(|(p, m)| p * m).sum()))
            .collect()
    })?;
    Ok(m.iter()
        .zip(&grid.temperatures)
        .map(|(m, t)| m * NA_MUB_EMU / (probe_field * OE_PER_T) * t)
        .collect())
}
