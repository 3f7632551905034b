//! Latent-modularity Bayesian model for multi-view clustering.
//!
//! Every subject carries a baseline label `c0` and one label per view. View
//! labels are drawn around the baseline through subject-specific Dirichlet
//! weights, so views share cluster structure without being forced to agree.
//!
//! The crate is split into:
//!
//! * [`numerics`]: special functions, spline bases, random variates, adaptive
//!   random-walk proposals and seeded RNG streams.
//! * [`model`]: hyperparameters, allocation and weight state, prior samplers
//!   and closed-form label laws.
//! * [`partition`]: set partitions, the view partition law given the baseline,
//!   joint/conditional partition pmfs and the Monte Carlo prior studies.
//! * [`mcmc`]: the Metropolis-within-Gibbs engine over unnormalized weights,
//!   generic over [`mcmc::ViewModel`] plugins.
//! * [`summaries`]: co-clustering matrices, Binder/VI point estimates and
//!   clustering metrics.

pub mod error;
pub mod mcmc;
pub mod model;
pub mod numerics;
pub mod partition;
pub mod summaries;

pub use error::{Error, Result};
