//! Adaptive multilevel Monte Carlo finite elements for the stochastic
//! drift-diffusion-Poisson system.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the numerical
//! pieces of the method:
//!
//! - [`mesh`]: conforming triangulations of the double-gate device with
//!   newest-vertex bisection and red refinement,
//! - [`device`]: device parameters, random dopant samples and contact data,
//! - [`fem`]: P1 spaces, assembly, sparse solvers, norms and prolongation,
//! - [`ddp`]: the per-sample Gummel solver in Slotboom variables,
//! - [`estimator`]: residual a-posteriori indicators,
//! - [`adapt`]: Dörfler marking and the adaptive mesh hierarchy,
//! - [`mlmc`]: Monte Carlo / multilevel estimators and sample allocation.
//!
//! File formats, configuration parsing, the thread pool and the command line
//! live in the companion `amlmc` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adapt;
pub mod ddp;
pub mod device;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod fem;
pub(crate) mod math;
pub mod mesh;
pub mod mlmc;
pub mod rng;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use mesh::{BoundaryTag, Mesh, Point, RegionTag};
