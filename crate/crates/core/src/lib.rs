#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assimilation;
pub mod error;
pub mod experiment;
pub mod field;
pub mod identification;
pub mod io;
pub mod isotherm;
pub mod library;
pub mod params;
pub mod preprocess;
pub mod regression;
pub mod scenario;
pub mod transport;
pub mod tridiag;
