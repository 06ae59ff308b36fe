use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Cartesian spin matrices for a single spin `s` (ħ = 1).
///
/// Basis order is |s⟩, |s−1⟩, …, |−s⟩, so index 0 carries the largest m.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperatorSet {
    pub s: f64,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
}

impl SpinOperatorSet {
    pub fn dim(&self) -> usize {
        self.sz.nrows()
    }

    /// m value of basis index `i`.
    pub fn m(&self, i: usize) -> f64 {
        self.s - i as f64
    }

    /// Component along an arbitrary (not necessarily unit) direction.
    pub fn along(&self, n: [f64; 3]) -> CMatrix {
        &self.sx * Complex64::from(n[0]) + &self.sy * Complex64::from(n[1]) + &self.sz * Complex64::from(n[2])
    }

    pub fn components(&self) -> [&CMatrix; 3] {
        [&self.sx, &self.sy, &self.sz]
    }
}

/// Number of levels 2s+1, validating that 2s is a non-negative integer.
pub fn multiplicity(s: f64) -> Result<usize> {
    let two_s = 2.0 * s;
    if !s.is_finite() || s < 0.0 || (two_s - two_s.round()).abs() > 1e-9 {
        return Err(Error::InvalidSpin(s));
    }
    Ok(two_s.round() as usize + 1)
}

/// Ladder-operator construction of Sx, Sy, Sz.
pub fn spin_operators(s: f64) -> Result<SpinOperatorSet> {
    let dim = multiplicity(s)?;
    let s = (dim - 1) as f64 / 2.0;
    let mut s_plus = CMatrix::zeros(dim, dim);
    let mut sz = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let m = s - i as f64;
        sz[(i, i)] = Complex64::from(m);
        // ⟨m+1|S+|m⟩ sits at row i-1, column i
        if i > 0 {
            s_plus[(i - 1, i)] = Complex64::from((s * (s + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let s_minus = s_plus.adjoint();
    let sx = (&s_plus + &s_minus) * Complex64::from(0.5);
    let sy = (&s_plus - &s_minus) * Complex64::new(0.0, -0.5);
    Ok(SpinOperatorSet { s, sx, sy, sz })
}

/// Largest absolute element of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest absolute element of `h - h†`.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    if !h.is_square() {
        return f64::INFINITY;
    }
    let n = h.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// A ⊗ B.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn check_algebra(s: f64) {
        let ops = spin_operators(s).unwrap();
        let i = Complex64::new(0.0, 1.0);
        for c in ops.components() {
            assert!(hermiticity_defect(c) < TOL);
            assert!(c.trace().norm() < TOL);
        }
        let (sx, sy, sz) = (&ops.sx, &ops.sy, &ops.sz);
        assert!(max_abs_diff(&commutator(sx, sy), &(sz * i)) < TOL);
        assert!(max_abs_diff(&commutator(sy, sz), &(sx * i)) < TOL);
        assert!(max_abs_diff(&commutator(sz, sx), &(sy * i)) < TOL);
        let casimir = sx * sx + sy * sy + sz * sz;
        let expected = CMatrix::identity(ops.dim(), ops.dim()) * Complex64::from(s * (s + 1.0));
        assert!(max_abs_diff(&casimir, &expected) < TOL);
    }

    #[test]
    fn algebra_holds_for_common_spins() {
        for s in [0.5, 1.0, 1.5, 2.0, 2.5, 3.5, 7.0] {
            check_algebra(s);
        }
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let ops = spin_operators(0.5).unwrap();
        assert_eq!(ops.sz[(0, 0)], Complex64::from(0.5));
        assert_eq!(ops.sz[(1, 1)], Complex64::from(-0.5));
        assert_eq!(ops.sx[(0, 1)], Complex64::from(0.5));
        assert_eq!(ops.sx[(1, 0)], Complex64::from(0.5));
    }

    #[test]
    fn central_element_for_seven_halves() {
        let ops = spin_operators(3.5).unwrap();
        // m = +1/2 is index 3, m = -1/2 is index 4
        assert!((ops.m(3) - 0.5).abs() < 1e-15);
        assert!((ops.sx[(4, 3)].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_half_integer() {
        assert!(matches!(spin_operators(0.3), Err(Error::InvalidSpin(_))));
        assert!(matches!(spin_operators(-0.5), Err(Error::InvalidSpin(_))));
        assert!(spin_operators(f64::NAN).is_err());
    }
}
