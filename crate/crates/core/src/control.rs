//! Transition-frequency and Rabi-rate maps between eigenstates.
//!
//! The rate is Ω_R/b₁ = (g·μB/h)·|⟨n|S·d̂|m⟩| in MHz per mT of drive
//! amplitude, with S the total spin and d̂ the drive direction. The map is
//! built from matrix elements only; no thermal weighting is applied.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spin::hamiltonian::{norm3, scale3};
use crate::spin::system::combine;
use crate::spin::{CMatrix, EigenSystem, SpinSystem};
use crate::units::MUB_GHZ_PER_T;

/// How Ω_R relates to the drive amplitude b₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RabiConvention {
    /// Ω_R = g·μB·b₁·|⟨n|S_d|m⟩|/h.
    #[default]
    Full,
    /// Rotating-wave form with an extra factor ½, for sensitivity studies.
    RotatingWave,
}

impl RabiConvention {
    fn factor(self) -> f64 {
        match self {
            RabiConvention::Full => 1.0,
            RabiConvention::RotatingWave => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RabiMap {
    /// Ω_R/b₁ in MHz/mT, symmetric with zero diagonal.
    pub rate: DMatrix<f64>,
    /// |E_n − E_m| in GHz.
    pub freq: DMatrix<f64>,
    pub drive_direction: [f64; 3],
}

impl RabiMap {
    pub fn d(&self) -> usize {
        self.rate.nrows()
    }

    /// Number of unordered pairs whose rate exceeds `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        let d = self.d();
        (0..d).flat_map(|n| (n + 1..d).map(move |m| (n, m))).filter(|&(n, m)| self.rate[(n, m)] > threshold).count()
    }

    /// Upper-triangle rows `n,m,freq_GHz,rate_MHz_per_mT`, levels numbered from 1.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("n,m,freq_GHz,rate_MHz_per_mT\n");
        let d = self.d();
        for n in 0..d {
            for m in n + 1..d {
                out.push_str(&format!("{},{},{:.9},{:.9e}\n", n + 1, m + 1, self.freq[(n, m)], self.rate[(n, m)]));
            }
        }
        out
    }
}

/// |E_n − E_m| for every pair of levels, GHz.
pub fn transition_frequencies(es: &EigenSystem) -> DMatrix<f64> {
    let e = &es.energies;
    DMatrix::from_fn(e.len(), e.len(), |n, m| (e[n] - e[m]).abs())
}

/// Drive direction used by default when the static field lies along the
/// (1,1,1) diagonal: (1,−1,0)/√2, perpendicular to it.
pub fn default_drive_direction() -> [f64; 3] {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    [c, -c, 0.0]
}

/// Rabi map for a drive along `drive_direction` coupling to the total spin of `system`.
///
/// The drive is best chosen perpendicular to the static field; this is not enforced.
pub fn rabi_map(es: &EigenSystem, system: &SpinSystem, drive_direction: [f64; 3], g: f64) -> Result<RabiMap> {
    rabi_map_with(es, &system.total_spin()?, drive_direction, g, RabiConvention::Full)
}

pub fn rabi_map_with(
    es: &EigenSystem,
    spin: &[CMatrix; 3],
    drive_direction: [f64; 3],
    g: f64,
    convention: RabiConvention,
) -> Result<RabiMap> {
    let norm = norm3(drive_direction);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidParameter { name: "drive_direction", reason: "zero or non-finite vector".into() });
    }
    if spin[0].nrows() != es.dimension() {
        return Err(Error::DimensionMismatch { expected: es.dimension(), got: spin[0].nrows() });
    }
    let d_hat = scale3(drive_direction, 1.0 / norm);
    let elements = es.in_eigenbasis(&combine(spin, d_hat));
    let scale = convention.factor() * g * MUB_GHZ_PER_T;
    let d = es.dimension();
    let rate = DMatrix::from_fn(d, d, |n, m| {
        if n == m {
            0.0
        } else {
            // average the two triangles so the map is exactly symmetric
            scale * 0.5 * (elements[(n, m)].norm() + elements[(m, n)].norm())
        }
    });
    Ok(RabiMap { rate, freq: transition_frequencies(es), drive_direction: d_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{DimerParams, FieldSpec, SingleIonParams};

    fn zeeman_only() -> SpinSystem {
        SpinSystem::Single(SingleIonParams::new(0.0, 0.0, 1.99))
    }

    #[test]
    fn equal_zeeman_gaps() {
        let es = zeeman_only().eigensystem(&FieldSpec::along_z(0.5)).unwrap();
        let f = transition_frequencies(&es);
        for n in 0..7 {
            assert!((f[(n, n + 1)] - 13.926).abs() < 1e-3);
        }
    }

    #[test]
    fn anisotropic_gaps_are_distinct() {
        let sys = SpinSystem::Single(SingleIonParams::new(0.096, -0.032, 1.99));
        let es = sys.eigensystem(&FieldSpec::along_z(0.5)).unwrap();
        let f = transition_frequencies(&es);
        let gaps: Vec<f64> = (0..7).map(|n| f[(n, n + 1)]).collect();
        for a in 0..7 {
            for b in a + 1..7 {
                assert!((gaps[a] - gaps[b]).abs() > 0.010, "{gaps:?}");
            }
        }
    }

    #[test]
    fn diagonal_hamiltonian_differences() {
        let energies = vec![-2.0, 0.5, 0.75, 4.0];
        let es = EigenSystem { energies: energies.clone(), states: CMatrix::identity(4, 4) };
        let f = transition_frequencies(&es);
        for n in 0..4 {
            for m in 0..4 {
                assert_eq!(f[(n, m)], (energies[n] - energies[m]).abs());
            }
        }
    }

    #[test]
    fn central_transition_rate() {
        let sys = zeeman_only();
        let es = sys.eigensystem(&FieldSpec::along_z(0.5)).unwrap();
        let map = rabi_map(&es, &sys, [1.0, 0.0, 0.0], 1.99).unwrap();
        // ascending energy: index 3 is m = +1/2, index 4 is m = −1/2 for B ∥ +z (−gμB·B·Sz)
        let rate = map.rate[(3, 4)];
        assert!((rate / (2.0 * 1.99 * MUB_GHZ_PER_T) - 1.0).abs() < 1e-12);
        assert!((rate - 55.7).abs() / 55.7 < 1e-3);
        let rw = rabi_map_with(&es, &sys.total_spin().unwrap(), [1.0, 0.0, 0.0], 1.99, RabiConvention::RotatingWave).unwrap();
        assert!((rw.rate[(3, 4)] - 0.5 * rate).abs() < 1e-12);
    }

    #[test]
    fn selection_rule_zeeman_dominated() {
        let sys = SpinSystem::Single(SingleIonParams::new(0.096, 0.0, 1.99));
        let es = sys.eigensystem(&FieldSpec::along_z(0.5)).unwrap();
        let map = rabi_map(&es, &sys, [1.0, 0.0, 0.0], 1.99).unwrap();
        // E = 0 and B ∥ z keep the m basis; energy order is monotone in m here
        for n in 0..8 {
            for m in 0..8 {
                if (n as i64 - m as i64).abs() != 1 {
                    assert!(map.rate[(n, m)] < 1e-9, "rate[{n}][{m}] = {}", map.rate[(n, m)]);
                }
            }
        }
    }

    #[test]
    fn map_invariants() {
        let p = DimerParams::collinear(SingleIonParams::new(0.096, -0.032, 1.99), SingleIonParams::new(0.115, 0.038, 1.99), -0.02);
        let sys = SpinSystem::Dimer(p);
        let es = sys.eigensystem(&FieldSpec::diagonal(0.5)).unwrap();
        let map = rabi_map(&es, &sys, default_drive_direction(), 1.99).unwrap();
        for n in 0..64 {
            assert_eq!(map.rate[(n, n)], 0.0);
            assert_eq!(map.freq[(n, n)], 0.0);
            for m in 0..64 {
                assert_eq!(map.rate[(n, m)], map.rate[(m, n)]);
                assert!(map.rate[(n, m)] >= 0.0);
                assert_eq!(map.freq[(n, m)], map.freq[(m, n)]);
            }
        }
        assert!(map.count_above(10.0) >= 20);
    }

    #[test]
    fn regauging_leaves_rates_unchanged() {
        let sys = SpinSystem::Single(SingleIonParams::new(0.096, -0.032, 1.99));
        let mut es = sys.eigensystem(&FieldSpec::diagonal(0.5)).unwrap();
        let before = rabi_map(&es, &sys, default_drive_direction(), 1.99).unwrap();
        for c in 0..8 {
            let col = es.states.column(c) * num_complex::Complex64::from_polar(1.0, 0.9 * c as f64);
            es.states.set_column(c, &col);
        }
        let after = rabi_map(&es, &sys, default_drive_direction(), 1.99).unwrap();
        for (a, b) in before.rate.iter().zip(after.rate.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uncoupled_dimer_cannot_flip_two_spins() {
        let p = DimerParams::collinear(SingleIonParams::new(0.096, -0.032, 1.99), SingleIonParams::new(0.115, 0.038, 1.99), 0.0);
        let sys = SpinSystem::Dimer(p);
        let field = FieldSpec::diagonal(0.5);
        // Degenerate sums make the solver's dimer eigenvectors arbitrary mixtures,
        // so work in the product basis V₁⊗V₂, which is a valid eigenbasis at J = 0.
        let m1 = SpinSystem::Single(p.site1).eigensystem(&field).unwrap();
        let m2 = SpinSystem::Single(p.site2).eigensystem(&field).unwrap();
        let states = crate::spin::operators::kron(&m1.states, &m2.states);
        let energies: Vec<f64> = (0..64).map(|k| m1.energies[k / 8] + m2.energies[k % 8]).collect();
        let mut sorted = energies.clone();
        sorted.sort_by(f64::total_cmp);
        let direct = sys.eigensystem(&field).unwrap();
        for (a, b) in sorted.iter().zip(direct.energies.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let es = EigenSystem { energies, states };
        let map = rabi_map(&es, &sys, default_drive_direction(), 1.99).unwrap();
        for n in 0..64 {
            for m in 0..64 {
                if n / 8 != m / 8 && n % 8 != m % 8 {
                    assert!(map.rate[(n, m)] < 1e-9);
                }
            }
        }
        assert!(map.count_above(1.0) > 0);
    }

    #[test]
    fn threshold_set_scales_with_b1() {
        let sys = SpinSystem::Single(SingleIonParams::new(0.096, -0.032, 1.99));
        let es = sys.eigensystem(&FieldSpec::diagonal(0.5)).unwrap();
        let map = rabi_map(&es, &sys, default_drive_direction(), 1.99).unwrap();
        for b1 in [0.092, 0.16, 0.275, 3.0] {
            let scaled = map.rate.map(|r| r * b1);
            let thr = 5.0;
            let a: Vec<bool> = map.rate.iter().map(|&r| r > thr).collect();
            let b: Vec<bool> = scaled.iter().map(|&r| r > thr * b1).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_drive_rejected() {
        let sys = zeeman_only();
        let es = sys.eigensystem(&FieldSpec::along_z(0.5)).unwrap();
        assert!(rabi_map(&es, &sys, [0.0; 3], 1.99).is_err());
    }

    #[test]
    fn csv_upper_triangle() {
        let sys = SpinSystem::Single(SingleIonParams::new(0.0, 0.0, 2.0).with_spin(1.0));
        let es = sys.eigensystem(&FieldSpec::along_z(0.5)).unwrap();
        let csv = rabi_map(&es, &sys, [1.0, 0.0, 0.0], 2.0).unwrap().to_csv(&[]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,m,freq_GHz,rate_MHz_per_mT");
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[1].starts_with("1,2,"));
    }
}
