// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod ensemble;
pub mod epr;
pub mod error;
pub mod observables;
pub mod pulse;
pub mod spin;
pub mod universality;
pub mod units;

pub use error::{Error, Result};
