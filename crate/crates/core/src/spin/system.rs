use num_complex::Complex64;

use super::hamiltonian::{dimer_total_spin, DimerParams, FieldSpec, SingleIonParams};
use super::operators::{kron, spin_operators, CMatrix};
use super::{dimer_hamiltonian, eigensolve, single_ion_hamiltonian, EigenSystem};
use crate::error::Result;
use crate::units::MUB_GHZ_PER_T;

/// Either an isolated ion or an exchange-coupled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinSystem {
    Single(SingleIonParams),
    Dimer(DimerParams),
}

impl From<SingleIonParams> for SpinSystem {
    fn from(p: SingleIonParams) -> Self {
        SpinSystem::Single(p)
    }
}

impl From<DimerParams> for SpinSystem {
    fn from(p: DimerParams) -> Self {
        SpinSystem::Dimer(p)
    }
}

impl SpinSystem {
    pub fn dim(&self) -> usize {
        match self {
            SpinSystem::Single(p) => p.dim(),
            SpinSystem::Dimer(p) => p.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpinSystem::Single(p) => p.validate(),
            SpinSystem::Dimer(p) => p.validate(),
        }
    }

    pub fn hamiltonian(&self, field: &FieldSpec) -> Result<CMatrix> {
        match self {
            SpinSystem::Single(p) => single_ion_hamiltonian(p, field),
            SpinSystem::Dimer(p) => dimer_hamiltonian(p, field),
        }
    }

    pub fn eigensystem(&self, field: &FieldSpec) -> Result<EigenSystem> {
        eigensolve(&self.hamiltonian(field)?)
    }

    /// g-factor of the first (or only) ion, used for drive-rate scaling.
    pub fn g(&self) -> f64 {
        match self {
            SpinSystem::Single(p) => p.g,
            SpinSystem::Dimer(p) => p.site1.g,
        }
    }

    /// Σᵢ Sᵢ, Cartesian components on the full space.
    pub fn total_spin(&self) -> Result<[CMatrix; 3]> {
        match self {
            SpinSystem::Single(p) => {
                let ops = spin_operators(p.s)?;
                Ok([ops.sx, ops.sy, ops.sz])
            }
            SpinSystem::Dimer(p) => dimer_total_spin(p),
        }
    }

    /// Σᵢ gᵢ·Sᵢ, the magnetic moment in units of μB.
    pub fn moment(&self) -> Result<[CMatrix; 3]> {
        match self {
            SpinSystem::Single(p) => {
                let ops = spin_operators(p.s)?;
                let g = Complex64::from(p.g);
                Ok([ops.sx * g, ops.sy * g, ops.sz * g])
            }
            SpinSystem::Dimer(p) => {
                let o1 = spin_operators(p.site1.s)?;
                let o2 = spin_operators(p.site2.s)?;
                let id1 = CMatrix::identity(o1.dim(), o1.dim());
                let id2 = CMatrix::identity(o2.dim(), o2.dim());
                let (g1, g2) = (Complex64::from(p.site1.g), Complex64::from(p.site2.g));
                let c = |a: &CMatrix, b: &CMatrix| kron(a, &id2) * g1 + kron(&id1, b) * g2;
                Ok([c(&o1.sx, &o2.sx), c(&o1.sy, &o2.sy), c(&o1.sz, &o2.sz)])
            }
        }
    }

    /// Field-independent part plus the moment operators, so that
    /// H(B·n) = H₀ − μB·B·(n·M) can be assembled without rebuilding Kronecker products.
    pub fn matrices(&self) -> Result<SystemMatrices> {
        Ok(SystemMatrices {
            h0: self.hamiltonian(&FieldSpec::zero())?,
            moment: self.moment()?,
            spin: self.total_spin()?,
        })
    }
}

/// Pre-assembled operators of a [`SpinSystem`], all in the product basis.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    /// Zero-field Hamiltonian, GHz.
    pub h0: CMatrix,
    /// Σ gᵢSᵢ components.
    pub moment: [CMatrix; 3],
    /// Σ Sᵢ components.
    pub spin: [CMatrix; 3],
}

impl SystemMatrices {
    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    /// n·M for a direction n.
    pub fn moment_along(&self, n: [f64; 3]) -> CMatrix {
        combine(&self.moment, n)
    }

    pub fn spin_along(&self, n: [f64; 3]) -> CMatrix {
        combine(&self.spin, n)
    }

    /// H₀ − μB·B·(n·M), GHz.
    pub fn hamiltonian(&self, b_tesla: f64, moment_along_n: &CMatrix) -> CMatrix {
        &self.h0 - moment_along_n * Complex64::from(MUB_GHZ_PER_T * b_tesla)
    }

    pub fn eigensystem(&self, field: &FieldSpec) -> Result<EigenSystem> {
        eigensolve(&self.hamiltonian(field.magnitude, &self.moment_along(field.direction)))
    }
}

pub(crate) fn combine(ops: &[CMatrix; 3], n: [f64; 3]) -> CMatrix {
    &ops[0] * Complex64::from(n[0]) + &ops[1] * Complex64::from(n[1]) + &ops[2] * Complex64::from(n[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::operators::max_abs_diff;

    #[test]
    fn assembled_hamiltonian_matches_direct() {
        let p = DimerParams::collinear(SingleIonParams::new(0.096, -0.032, 1.99), SingleIonParams::new(0.115, 0.038, 2.01), -0.02);
        let sys = SpinSystem::from(p);
        let field = FieldSpec::new(0.7, [0.2, -0.4, 0.9]).unwrap();
        let m = sys.matrices().unwrap();
        let assembled = m.hamiltonian(field.magnitude, &m.moment_along(field.direction));
        assert!(max_abs_diff(&assembled, &sys.hamiltonian(&field).unwrap()) < 1e-12);
    }
}
