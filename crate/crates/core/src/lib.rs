//! Full-likelihood and k-wise composite-likelihood inference for two-level
//! random-intercept probit models, plus the asymptotic machinery to compute
//! pseudo-true limits of both estimators when the random-effect distribution
//! is misspecified.
//!
//! The crate is organized around:
//!
//! * [`model`]: parameter points, random-effect laws, clusters, subset
//!   schemes;
//! * [`quadrature`]: probabilists' Gauss-Hermite rules and law
//!   expectations;
//! * [`likelihood`]: cluster and composite log-likelihoods, scores, and
//!   quasi-Newton fitting;
//! * [`asymptotics`]: pseudo-true limits as maximizers of the expected
//!   (composite) log-likelihood, limit surfaces over (m, sigma-tilde);
//! * [`laplace`]: posterior-mode profiling, Laplace approximation error,
//!   and the score-gap diagnostics relating the mixed model to the linear
//!   model in the true linear predictor;
//! * [`sim`]: reproducible synthetic-data experiments comparing estimators
//!   against their theoretical limits;
//! * [`io`]: CSV ingestion and emission for all of the above.
//!
//! Heavy loops (surface cells, simulation replicates, dataset cells) are
//! data-parallel via rayon under the `parallel` feature (enabled by
//! default) and fall back to sequential iteration without it; numeric
//! results are bit-identical either way.

pub mod asymptotics;
pub mod error;
mod exec;
pub mod io;
pub mod laplace;
pub mod likelihood;
pub mod model;
mod optim;
mod posterior;
pub mod quadrature;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use model::{ClusterData, CovariateLaw, Params, SigmaMode, SubsetScheme, TrueLaw};
