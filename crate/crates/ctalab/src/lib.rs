//! Desk-scale reconstruction machinery for semilinear elliptic inverse problems on
//! conformally transversally anisotropic manifolds `I x M` with metric `c((dx0)^2 + g)`.
//!
//! Geometry lives in [`manifold`], Jacobi fields in [`jacobi`], weighted ray transforms in
//! [`raytransform`], the cylinder right inverse in [`cylinder`], Gaussian quasimodes in
//! [`cgo`], the discretized direct problem in [`pde`], and the inversion driver in [`recon`].

pub mod cgo;
pub mod cylinder;
pub mod error;
pub mod jacobi;
pub mod manifold;
pub mod pde;
pub mod potential;
pub mod quad;
pub mod raytransform;
pub mod recon;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
