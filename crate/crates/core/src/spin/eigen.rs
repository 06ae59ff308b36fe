use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use super::operators::{hermiticity_defect, CMatrix};
use crate::error::{Error, Result};

/// Eigenvalues (ascending, GHz) and the unitary whose columns are the eigenvectors.
///
/// Within a degenerate subspace the choice of vectors is arbitrary; only
/// gauge-invariant quantities should be derived from `states`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub states: CMatrix,
}

impl EigenSystem {
    pub fn dimension(&self) -> usize {
        self.energies.len()
    }

    /// V†·A·V, the operator in the eigenbasis.
    pub fn in_eigenbasis(&self, op: &CMatrix) -> CMatrix {
        self.states.adjoint() * op * &self.states
    }

    /// V·diag(E)·V†.
    pub fn reconstruct(&self) -> CMatrix {
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dimension(),
            self.energies.iter().map(|&e| Complex64::from(e)),
        ));
        &self.states * diag * self.states.adjoint()
    }

    /// ⟨n|A|n⟩ for every eigenstate.
    pub fn diagonal_expectations(&self, op: &CMatrix) -> Vec<f64> {
        let av = op * &self.states;
        (0..self.dimension())
            .map(|n| self.states.column(n).dotc(&av.column(n)).re)
            .collect()
    }
}

/// Hermiticity tolerance, relative to max(1, largest element).
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Full diagonalization of a Hermitian matrix, eigenpairs sorted by energy.
pub fn eigensolve(h: &CMatrix) -> Result<EigenSystem> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: h.ncols() });
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let deviation = hermiticity_defect(h);
    if !(deviation <= HERMITIAN_TOL * scale) {
        return Err(Error::NotHermitian { deviation });
    }
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let states = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem { energies, states })
}
