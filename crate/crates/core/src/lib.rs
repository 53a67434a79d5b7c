//! Point-scatterer dynamics for waves interacting with a small inclusion of
//! high contrast.
//!
//! The crate computes the Newton-potential spectrum of an inclusion shape,
//! the modulation signal `q(t)` that drives the monopole correction, the
//! resulting effective field, and a brute-force FDTD solution of the full
//! contrast wave equation used to check the expansion.
//!
//! Module map:
//!
//! - [`geometry`]: inclusion shapes, voxelization, quadrature rules.
//! - [`newton`]: Newton potential operator, eigenpairs, couplings.
//! - [`freewave`]: Cauchy data, Kirchhoff/Duhamel evaluation, forcing `h(t)`.
//! - [`effective`]: modulation signal and the effective field.
//! - [`fdtd`]: leapfrog solver for the contrast wave equation.
//! - [`harness`]: configuration, ε-sweeps, reports and export.

pub mod effective;
pub mod error;
pub mod fdtd;
pub mod freewave;
pub mod geometry;
pub mod harness;
pub mod newton;

pub use error::{Error, Result};

/// Point or vector in R³.
pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Crate version embedded in exported artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest round-trip formatting of a float for text artifacts, switching
/// to exponent notation far from unit scale.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-5..1e7).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}
