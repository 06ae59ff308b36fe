//! Single-ion and dimer spin Hamiltonians.
//!
//! Sign conventions: H = −D·Sz² + E·(Sx² − Sy²) − g·μB·B·(n·S) per ion, and
//! −J·S₁·S₂ for the exchange, so J < 0 is antiferromagnetic. Inputs are in
//! Kelvin and Tesla; the returned matrices are in GHz.

use num_complex::Complex64;

use super::operators::{kron, spin_operators, CMatrix, SpinOperatorSet};
use crate::error::{Error, Result};
use crate::units::{kelvin_to_ghz, MUB_GHZ_PER_T};

/// Zero-field splitting and g-factor of one ion.
///
/// |E| ≤ |D|/3 is deliberately not enforced: the fitted parameters of real
/// compounds do not always respect the conventional rhombicity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleIonParams {
    /// Axial anisotropy D/kB in Kelvin.
    pub d_zfs: f64,
    /// Rhombic anisotropy E/kB in Kelvin.
    pub e_zfs: f64,
    pub g: f64,
    pub s: f64,
}

impl SingleIonParams {
    pub const GD_SPIN: f64 = 3.5;

    pub fn new(d_zfs: f64, e_zfs: f64, g: f64) -> Self {
        Self { d_zfs, e_zfs, g, s: Self::GD_SPIN }
    }

    pub fn with_spin(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_zfs.is_finite() && self.e_zfs.is_finite()) {
            return Err(Error::InvalidParameter { name: "D/E", reason: "must be finite".into() });
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter { name: "g", reason: format!("must be positive, got {}", self.g) });
        }
        if self.s <= 0.0 {
            return Err(Error::InvalidSpin(self.s));
        }
        super::operators::multiplicity(self.s)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        (2.0 * self.s).round() as usize + 1
    }
}

/// Two ions coupled by isotropic exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerParams {
    pub site1: SingleIonParams,
    pub site2: SingleIonParams,
    /// J/kB in Kelvin; negative is antiferromagnetic.
    pub j_exchange: f64,
    /// ZYZ Euler angles (radians) of the site-2 anisotropy frame in the site-1 frame.
    pub axes_rotation: [f64; 3],
}

impl DimerParams {
    pub fn collinear(site1: SingleIonParams, site2: SingleIonParams, j_exchange: f64) -> Self {
        Self { site1, site2, j_exchange, axes_rotation: [0.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        self.site1.validate()?;
        self.site2.validate()?;
        if !self.j_exchange.is_finite() {
            return Err(Error::InvalidParameter { name: "J", reason: "must be finite".into() });
        }
        if self.axes_rotation.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter { name: "axes_rotation", reason: "must be finite".into() });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.site1.dim() * self.site2.dim()
    }
}

/// Static field: magnitude in Tesla and a unit direction in the site-1 frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub magnitude: f64,
    pub direction: [f64; 3],
}

impl FieldSpec {
    /// Normalizes `direction`. A zero direction is only accepted for a zero field.
    pub fn new(magnitude: f64, direction: [f64; 3]) -> Result<Self> {
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "field magnitude",
                reason: format!("must be finite and non-negative, got {magnitude}"),
            });
        }
        let norm = norm3(direction);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter { name: "field direction", reason: "zero or non-finite vector".into() });
        }
        Ok(Self { magnitude, direction: scale3(direction, 1.0 / norm) })
    }

    pub fn zero() -> Self {
        Self { magnitude: 0.0, direction: [0.0, 0.0, 1.0] }
    }

    pub fn along_z(magnitude: f64) -> Self {
        Self { magnitude, direction: [0.0, 0.0, 1.0] }
    }

    /// Field along the (1,1,1) diagonal of the anisotropy axes.
    pub fn diagonal(magnitude: f64) -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self { magnitude, direction: [c, c, c] }
    }

    pub fn with_magnitude(self, magnitude: f64) -> Self {
        Self { magnitude, ..self }
    }

    /// Field vector in Tesla.
    pub fn vector(&self) -> [f64; 3] {
        scale3(self.direction, self.magnitude)
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn scale3(v: [f64; 3], a: f64) -> [f64; 3] {
    [v[0] * a, v[1] * a, v[2] * a]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Rotation matrix Rz(α)·Ry(β)·Rz(γ). Column k is local axis k expressed in the parent frame.
pub fn euler_zyz(angles: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, c] = angles;
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    [
        [ca * cb * cc - sa * sc, -ca * cb * sc - sa * cc, ca * sb],
        [sa * cb * cc + ca * sc, -sa * cb * sc + ca * cc, sa * sb],
        [-sb * cc, sb * sc, cb],
    ]
}

fn zfs_term(p: &SingleIonParams, ops: &SpinOperatorSet, frame: Option<&[[f64; 3]; 3]>) -> CMatrix {
    let (x, y, z) = match frame {
        None => (ops.sx.clone(), ops.sy.clone(), ops.sz.clone()),
        Some(r) => {
            let axis = |k: usize| ops.along([r[0][k], r[1][k], r[2][k]]);
            (axis(0), axis(1), axis(2))
        }
    };
    let d = kelvin_to_ghz(p.d_zfs);
    let e = kelvin_to_ghz(p.e_zfs);
    (&z * &z) * Complex64::from(-d) + (&x * &x - &y * &y) * Complex64::from(e)
}

fn zeeman_term(g: f64, ops: &SpinOperatorSet, f: &FieldSpec) -> CMatrix {
    ops.along(f.vector()) * Complex64::from(-g * MUB_GHZ_PER_T)
}

/// −D·Sz² + E·(Sx² − Sy²) − g·μB·B·(n·S), in GHz.
pub fn single_ion_hamiltonian(p: &SingleIonParams, f: &FieldSpec) -> Result<CMatrix> {
    p.validate()?;
    let ops = spin_operators(p.s)?;
    Ok(zfs_term(p, &ops, None) + zeeman_term(p.g, &ops, f))
}

/// H₁ ⊗ I + I ⊗ H₂ − J·S₁·S₂, in GHz.
pub fn dimer_hamiltonian(p: &DimerParams, f: &FieldSpec) -> Result<CMatrix> {
    p.validate()?;
    let ops1 = spin_operators(p.site1.s)?;
    let ops2 = spin_operators(p.site2.s)?;
    let id1 = CMatrix::identity(ops1.dim(), ops1.dim());
    let id2 = CMatrix::identity(ops2.dim(), ops2.dim());

    let h1 = zfs_term(&p.site1, &ops1, None) + zeeman_term(p.site1.g, &ops1, f);
    let collinear = p.axes_rotation.iter().all(|&a| a == 0.0);
    let frame = euler_zyz(p.axes_rotation);
    let h2 = zfs_term(&p.site2, &ops2, if collinear { None } else { Some(&frame) })
        + zeeman_term(p.site2.g, &ops2, f);

    let mut h = kron(&h1, &id2) + kron(&id1, &h2);
    let j = kelvin_to_ghz(p.j_exchange);
    if j != 0.0 {
        for (a, b) in ops1.components().into_iter().zip(ops2.components()) {
            h -= kron(a, b) * Complex64::from(j);
        }
    }
    Ok(h)
}

/// Total spin component operators of the dimer, (S₁ + S₂)_x,y,z on the product space.
pub fn dimer_total_spin(p: &DimerParams) -> Result<[CMatrix; 3]> {
    let ops1 = spin_operators(p.site1.s)?;
    let ops2 = spin_operators(p.site2.s)?;
    let id1 = CMatrix::identity(ops1.dim(), ops1.dim());
    let id2 = CMatrix::identity(ops2.dim(), ops2.dim());
    let total = |a: &CMatrix, b: &CMatrix| kron(a, &id2) + kron(&id1, b);
    Ok([total(&ops1.sx, &ops2.sx), total(&ops1.sy, &ops2.sy), total(&ops1.sz, &ops2.sz)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::eigen::eigensolve;
    use crate::spin::operators::hermiticity_defect;
    use crate::units::KB_GHZ_PER_K;

    fn lagd() -> SingleIonParams {
        SingleIonParams::new(0.096, -0.032, 1.99)
    }

    #[test]
    fn zeeman_ladder_spacing() {
        let p = SingleIonParams::new(0.0, 0.0, 1.99);
        let h = single_ion_hamiltonian(&p, &FieldSpec::along_z(1.0)).unwrap();
        let es = eigensolve(&h).unwrap();
        assert_eq!(es.energies.len(), 8);
        for w in es.energies.windows(2) {
            // 1.99 · 13.996245 GHz
            assert!((w[1] - w[0] - 27.853).abs() < 1e-3);
        }
    }

    #[test]
    fn axial_zero_field_levels() {
        let p = SingleIonParams::new(0.1, 0.0, 2.0);
        let es = eigensolve(&single_ion_hamiltonian(&p, &FieldSpec::zero()).unwrap()).unwrap();
        let mut expected: Vec<f64> = [3.5f64, 2.5, 1.5, 0.5]
            .iter()
            .flat_map(|m| [-0.1 * m * m * KB_GHZ_PER_K; 2])
            .collect();
        expected.sort_by(f64::total_cmp);
        for (e, x) in es.energies.iter().zip(&expected) {
            assert!((e - x).abs() < 1e-10);
        }
    }

    #[test]
    fn kramers_doublets_at_zero_field() {
        let es = eigensolve(&single_ion_hamiltonian(&lagd(), &FieldSpec::zero()).unwrap()).unwrap();
        for pair in es.energies.chunks(2) {
            assert!((pair[1] - pair[0]).abs() < 1e-9);
        }
        let spread = (es.energies[7] - es.energies[0]) / KB_GHZ_PER_K;
        assert!((0.8..=2.0).contains(&spread), "spread {spread} K");
    }

    #[test]
    fn dimer_dimension_and_hermiticity() {
        let p = DimerParams::collinear(lagd(), SingleIonParams::new(0.115, 0.038, 1.99), -0.02);
        let h = dimer_hamiltonian(&p, &FieldSpec::diagonal(0.5)).unwrap();
        assert_eq!(h.nrows(), 64);
        assert!(hermiticity_defect(&h) < 1e-12);
    }

    #[test]
    fn heisenberg_dimer_closed_form() {
        let iso = SingleIonParams::new(0.0, 0.0, 1.99);
        let j = -0.02;
        let p = DimerParams::collinear(iso, iso, j);
        let es = eigensolve(&dimer_hamiltonian(&p, &FieldSpec::zero()).unwrap()).unwrap();
        // E(S) = −(J/2)[S(S+1) − 2·s(s+1)], multiplicity 2S+1
        let mut expected = Vec::new();
        for s_tot in 0..=7 {
            let s = s_tot as f64;
            let e = -(j / 2.0) * (s * (s + 1.0) - 31.5) * KB_GHZ_PER_K;
            expected.extend(std::iter::repeat_n(e, 2 * s_tot + 1));
        }
        expected.sort_by(f64::total_cmp);
        for (e, x) in es.energies.iter().zip(&expected) {
            assert!((e - x).abs() < 1e-9);
        }
        assert!((es.energies[0] / KB_GHZ_PER_K + 0.315).abs() < 1e-10);
    }

    #[test]
    fn rotated_site_two_matches_rotated_field() {
        // Rotating the site-2 frame by β about y is equivalent, for a lone
        // site-2 spectrum, to rotating the field by −β.
        let site = SingleIonParams::new(0.2, 0.05, 2.0);
        let zero = SingleIonParams::new(0.0, 0.0, 2.0);
        let beta = 0.7;
        let mut p = DimerParams::collinear(zero, site, 0.0);
        p.axes_rotation = [0.0, beta, 0.0];
        let rotated = eigensolve(&dimer_hamiltonian(&p, &FieldSpec::along_z(0.0)).unwrap()).unwrap();
        let plain = eigensolve(&single_ion_hamiltonian(&site, &FieldSpec::zero()).unwrap()).unwrap();
        // At zero field only the site-2 ZFS contributes, 8-fold repeated.
        for (k, e) in rotated.energies.iter().enumerate() {
            assert!((e - plain.energies[k / 8]).abs() < 1e-9);
        }
        let f = FieldSpec::new(0.3, [0.0, 0.0, 1.0]).unwrap();
        let with_field = eigensolve(&dimer_hamiltonian(&p, &f).unwrap()).unwrap();
        let back = FieldSpec::new(0.3, [-beta.sin(), 0.0, beta.cos()]).unwrap();
        let reference_site2 = eigensolve(&single_ion_hamiltonian(&site, &back).unwrap()).unwrap();
        let reference_site1 = eigensolve(&single_ion_hamiltonian(&zero, &f).unwrap()).unwrap();
        let mut sums: Vec<f64> = reference_site1
            .energies
            .iter()
            .flat_map(|a| reference_site2.energies.iter().map(move |b| a + b))
            .collect();
        sums.sort_by(f64::total_cmp);
        for (e, x) in with_field.energies.iter().zip(&sums) {
            assert!((e - x).abs() < 1e-8);
        }
    }

    #[test]
    fn field_spec_validation() {
        assert!(FieldSpec::new(-1.0, [0.0, 0.0, 1.0]).is_err());
        assert!(FieldSpec::new(1.0, [0.0, 0.0, 0.0]).is_err());
        let f = FieldSpec::new(2.0, [3.0, 0.0, 4.0]).unwrap();
        assert!((norm3(f.direction) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(single_ion_hamiltonian(&SingleIonParams::new(0.1, 0.0, 0.0), &FieldSpec::zero()).is_err());
        assert!(single_ion_hamiltonian(&SingleIonParams::new(0.1, 0.0, 2.0).with_spin(1.2), &FieldSpec::zero()).is_err());
    }
}
