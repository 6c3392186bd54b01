//! Open-system dynamics of stroboscopic gate-sequence simulators and their
//! target Hamiltonians.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bath;
pub mod bounds;
pub mod error;
pub mod models;
pub mod operator;
pub mod oracle;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod tcl2;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Operator = operator::Operator<f64>;
pub type SpectralDecomposition = operator::SpectralDecomposition<f64>;
pub type SuperOperator = operator::SuperOperator<f64>;
