//! Spin operators, the single-ion and exchange-coupled dimer Hamiltonians,
//! and the Hermitian eigensolver every observable is built on.

pub mod eigen;
pub mod hamiltonian;
pub mod operators;
pub mod system;

pub use eigen::{eigensolve, EigenSystem};
pub use hamiltonian::{
    dimer_hamiltonian, dimer_total_spin, euler_zyz, single_ion_hamiltonian, DimerParams, FieldSpec,
    SingleIonParams,
};
pub use operators::{spin_operators, CMatrix, SpinOperatorSet};
pub use system::{SpinSystem, SystemMatrices};
