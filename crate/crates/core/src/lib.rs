#![no_std]
extern crate alloc;

pub mod error;
pub mod operator;
pub mod squeezing;
pub mod hierarchy;
pub mod integrator;
pub mod markovian;
pub mod trajectories;
pub mod spectra;
pub mod fitting;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Shortest round-trip text for CSV output, in exponent form outside
/// `[1e-4, 1e15)`.
pub fn csv_number(x: f64) -> alloc::string::String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        alloc::format!("{x:e}")
    } else {
        alloc::format!("{x}")
    }
}
