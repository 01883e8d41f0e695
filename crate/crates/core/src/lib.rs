//! Marcinkiewicz-Zygmund inequalities and positive quadrature on model
//! compact manifolds.

pub mod battery;
pub mod error;
pub mod io;
pub mod kernels;
pub mod lp;
pub mod manifolds;
pub mod measures;
pub mod mzanalysis;
pub mod nnls;
pub mod partition;
pub mod pointsets;
pub mod polynomials;
pub mod quadrature;
pub mod spatial;

pub use error::{MzError, Result};
pub use manifolds::{Manifold, ManifoldKind, Point};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
