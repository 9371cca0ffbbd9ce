//! Numerical models of cusp eta invariants, suspended determinants and the
//! determinant line bundle of indicial families.

pub mod cli;
pub mod cuspmodel;
pub mod error;
pub mod eta;
pub mod fixtures;
pub mod groups;
pub mod linalg;
pub mod numerics;
pub mod psorders;
pub mod star;
pub mod susdet;
pub mod trivialize;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
