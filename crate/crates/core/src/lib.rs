//! Numerical machinery for the first moment of symmetric-square L-values
//! over holomorphic newforms of prime level.

pub mod afe;
pub mod arith;
pub mod error;
pub mod expsums;
pub mod moment;
pub mod sieve;
pub mod specdata;
pub mod specfun;
pub mod sum;

pub use error::{Error, Result};
