//! Inhomogeneous ensembles: powder orientations and D/E (optionally J) strain.
//!
//! Every observable that averages over an ensemble evaluates members in
//! parallel and sums the per-member results in member order, so results do
//! not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin::{FieldSpec, SingleIonParams, SpinSystem};

/// FWHM / σ for a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    /// Number of powder orientations. `1` means an oriented sample: the
    /// field direction given by the caller is used as is.
    pub n_orientations: usize,
    /// FWHM of the D distribution as a fraction of |D|.
    pub d_strain: f64,
    /// FWHM of the E distribution as a fraction of |E|.
    pub e_strain: f64,
    /// Absolute FWHM of an optional J distribution, Kelvin.
    pub j_strain: f64,
    pub n_strain_samples: usize,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { n_orientations: 230, d_strain: 0.0, e_strain: 0.0, j_strain: 0.0, n_strain_samples: 1, seed: 0 }
    }
}

impl EnsembleSpec {
    /// Single orientation, no strain.
    pub fn oriented() -> Self {
        Self { n_orientations: 1, ..Self::default() }
    }

    pub fn powder(n_orientations: usize) -> Self {
        Self { n_orientations, ..Self::default() }
    }

    pub fn with_strain(mut self, d_strain: f64, e_strain: f64, n_samples: usize, seed: u64) -> Self {
        self.d_strain = d_strain;
        self.e_strain = e_strain;
        self.n_strain_samples = n_samples;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_orientations == 0 {
            return Err(Error::InvalidParameter { name: "n_orientations", reason: "must be at least 1".into() });
        }
        if self.n_strain_samples == 0 {
            return Err(Error::InvalidParameter { name: "n_strain_samples", reason: "must be at least 1".into() });
        }
        for (name, w) in [("d_strain", self.d_strain), ("e_strain", self.e_strain), ("j_strain", self.j_strain)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("must be finite and >= 0, got {w}") });
            }
        }
        Ok(())
    }

    pub fn has_strain(&self) -> bool {
        self.d_strain > 0.0 || self.e_strain > 0.0 || self.j_strain > 0.0
    }

    /// Strain-sampled copies of `system`. Without strain this is just `[system]`.
    ///
    /// Sample k draws standard normals from its own ChaCha stream in the order
    /// (D₁, E₁, D₂, E₂, J), so a sample does not depend on how many others are drawn.
    pub fn strain_samples(&self, system: &SpinSystem) -> Vec<SpinSystem> {
        if !self.has_strain() {
            return vec![*system];
        }
        (0..self.n_strain_samples)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(k as u64);
                let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
                let mut site = |p: &SingleIonParams| SingleIonParams {
                    d_zfs: p.d_zfs + self.d_strain * p.d_zfs.abs() / FWHM_PER_SIGMA * z(),
                    e_zfs: p.e_zfs + self.e_strain * p.e_zfs.abs() / FWHM_PER_SIGMA * z(),
                    ..*p
                };
                match system {
                    SpinSystem::Single(p) => SpinSystem::Single(site(p)),
                    SpinSystem::Dimer(p) => {
                        let site1 = site(&p.site1);
                        let site2 = site(&p.site2);
                        let j_exchange = p.j_exchange + self.j_strain / FWHM_PER_SIGMA * z();
                        SpinSystem::Dimer(crate::spin::DimerParams { site1, site2, j_exchange, ..*p })
                    }
                }
            })
            .collect()
    }

    /// Field directions to average over. A zero field has no preferred
    /// direction, so a single orientation is returned.
    pub fn orientations(&self, field: &FieldSpec) -> Vec<[f64; 3]> {
        if self.n_orientations == 1 || field.magnitude == 0.0 {
            vec![field.direction]
        } else {
            powder_directions(self.n_orientations)
        }
    }
}

/// Equal-area spiral (Fibonacci) points on the upper hemisphere.
///
/// The spin Hamiltonians here are time-reversal symmetric, so B·n and −B·n
/// give identical spectra and thermodynamics and a hemisphere suffices.
pub fn powder_directions(n: usize) -> Vec<[f64; 3]> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Evaluates `f` on every (strain sample, orientation) pair and returns the
/// element-wise mean of the resulting vectors, summed in member order.
pub fn ensemble_mean<F>(samples: &[SpinSystem], orientations: &[[f64; 3]], f: F) -> Result<Vec<f64>>
where
    F: Fn(&SpinSystem, [f64; 3]) -> Result<Vec<f64>> + Sync,
{
    let members: Vec<(usize, usize)> =
        (0..samples.len()).flat_map(|s| (0..orientations.len()).map(move |o| (s, o))).collect();
    let results: Vec<Result<Vec<f64>>> =
        members.par_iter().map(|&(s, o)| f(&samples[s], orientations[o])).collect();
    let mut acc: Option<Vec<f64>> = None;
    for r in results {
        let v = r?;
        match acc.as_mut() {
            None => acc = Some(v),
            Some(a) => {
                if a.len() != v.len() {
                    return Err(Error::DimensionMismatch { expected: a.len(), got: v.len() });
                }
                a.iter_mut().zip(&v).for_each(|(x, y)| *x += y);
            }
        }
    }
    let mut acc = acc.ok_or(Error::Empty("ensemble"))?;
    let n = members.len() as f64;
    acc.iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}
