//! Nonparametric estimation of the intensity of a doubly stochastic Poisson
//! process driven by a continuously observed covariate.
//!
//! The counting process `N` has intensity `λ_t = n·q(X_t)`. Given a sampled
//! covariate path and the event times, this crate estimates `q` on an interval
//! with a local polynomial smoother, selects the bandwidth by a penalized
//! comparison against the smallest candidate bandwidth, and tests parametric
//! hypotheses about `q`. A simulator for seasonal temperature paths, Cox
//! events and spike price paths, plus a Monte-Carlo harness, are included.
//!
//! ```
//! use cox_intensity::kernels::Kernel;
//!
//! let k = Kernel::epanechnikov();
//! assert_eq!(k.eval(0.0), 0.75);
//! ```

pub mod error;
pub mod experiment;
pub mod gof;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod localpoly;
pub mod path;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use kernels::{Kernel, MonomialBasis};
pub use localpoly::{BandwidthGrid, CurveEstimate, Estimator, EstimatorConfig, SelectionResult};
pub use path::{EventRecord, Interval, SampledPath};
