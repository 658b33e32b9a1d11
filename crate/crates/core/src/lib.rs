// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod fit;
pub mod ibm;
pub mod kernels;
pub mod macro_solver;
pub mod measures;
pub mod ode;
pub mod rates;
pub mod stability;
pub mod totals;

pub use error::{Error, Result};
pub use measures::{GridMeasure, TraitGrid};
