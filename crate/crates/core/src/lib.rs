//! Numerical verification of Hardy, Rellich, Caffarelli–Kohn–Nirenberg and
//! uncertainty-type inequalities on stratified groups.

pub mod battery;
pub mod cli;
pub mod error;
pub mod field;
pub mod group;
pub mod hcalc;
pub mod ineq;
pub mod jet;
pub mod quad;
pub mod sharpness;

pub use error::{Error, Result};
