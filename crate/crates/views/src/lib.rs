//! View models plugged into the `latmod_core` sampler, and synthetic-data
//! generators for each.

pub mod ctmc;
pub mod gaussian;
pub mod gusto;
pub mod series;
pub mod zbmi;
pub mod zip;

pub use ctmc::CtmcView;
pub use gaussian::GaussianView;
pub use series::{Covariates, Series};
pub use zbmi::ZbmiView;
pub use zip::ZipView;

use latmod_core::numerics::StreamRng;

/// Metropolis accept/reject on a log acceptance ratio.
pub(crate) fn metropolis_accept(log_ratio: f64, rng: &mut StreamRng) -> bool {
    log_ratio >= 0.0 || rand::Rng::random::<f64>(rng).ln() < log_ratio
}

/// Sum of a per-subject quantity, computed in parallel and reduced in order.
pub(crate) fn ordered_sum<F: Fn(usize) -> f64 + Sync + Send>(n: usize, f: F) -> f64 {
    use rayon::prelude::*;
    let parts: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    parts.iter().sum()
}
