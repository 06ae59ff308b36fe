//! Pulsed-EPR analysis: echo-decay fits and nutation spectra.

pub mod fit;
pub mod nutation;
pub mod trace;

pub use fit::{field_sweep_summary, fit_decay, fit_many, initial_guess, synthesize, sweep_to_csv, DecayFit, FitFlag, SweepRow};
pub use nutation::{larmor, nutation_fft, Nucleus, NutationOptions, NutationResult, Peak, PeakLabel, Window};
pub use trace::{DecayTrace, TraceKind};
