//! mcflab: a desk-scale laboratory for mean-convex mean curvature flow.
//!
//! The flow of a mean-convex hypersurface is recovered from its time-of-arrival
//! function `u`: the level set `{u = t}` is the surface at time `t`. Instead of
//! marching the surface in time, `mcflab` solves the translating-soliton graph
//! equation
//!
//! ```text
//!     div(Df / W) = -lambda / W,        W = sqrt(1 + |Df|^2),
//! ```
//!
//! on a fixed domain for a ladder of increasing `lambda`. The rescaled solutions
//! `u_lambda = f_lambda / lambda` converge to the arrival function, so the whole
//! space-time flow (neckpinches included) is read off a family of elliptic
//! solves. On top of that sit curvature diagnostics (principal curvatures of the
//! level sets, the scale-invariant ratio `kappa_1 / h`), maximum-principle
//! inequality checks, singularity detection/classification, and flows with
//! prescribed boundary motion.

pub mod arrival;
pub mod boundary;
// pub mod cli;
// pub mod config;
pub mod domain;
pub mod error;
pub mod linsys;
pub mod mesh;
pub mod regularize;
pub mod singular;
pub mod translator;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
