//! Special functions, spline bases, random variates, sample summaries and the
//! adaptive random-walk machinery shared by the rest of the crate.

pub mod adaptive;
pub mod random;
pub mod rng;
pub mod special;
pub mod spline;
pub mod stats;

pub use adaptive::AdaptiveProposalState;
pub use rng::{StreamRng, Streams};
pub use special::{log_gamma, log_sum_exp};
pub use spline::{SplineBasisSpec, SplineKind};
pub use stats::{batch_means, mean_var};
