//! Haario-style adaptive random-walk Metropolis proposals.
//!
//! The running mean and covariance of the chain history are maintained with
//! Welford recursions. Until `warmup` samples have been absorbed the proposal
//! covariance is the fixed initial diagonal; afterwards it is
//! `scale * (cov + jitter * I)` with `scale = 2.38^2 / dim * exp(log_tune)`,
//! where `log_tune` follows a Robbins-Monro recursion towards the target
//! acceptance rate with a decaying step size.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::numerics::random::standard_normal;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveProposalState {
    dim: usize,
    running_mean: Vec<f64>,
    // Sum of outer products of deviations (Welford's M2).
    m2: DMatrix<f64>,
    count: u64,
    initial_diag: Vec<f64>,
    log_tune: f64,
    accepted_count: u64,
    total_count: u64,
    warmup: u64,
    target_accept: f64,
    jitter: f64,
}

impl AdaptiveProposalState {
    pub const DEFAULT_JITTER: f64 = 1e-6;

    /// New state with initial proposal variances `initial_diag` and adaptation
    /// starting after `warmup` samples. The target acceptance is 0.44 in one
    /// dimension and 0.234 otherwise.
    pub fn new(initial_diag: Vec<f64>, warmup: u64) -> Result<Self> {
        if initial_diag.is_empty() || initial_diag.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("initial proposal variances must be positive"));
        }
        let dim = initial_diag.len();
        Ok(AdaptiveProposalState {
            dim,
            running_mean: vec![0.0; dim],
            m2: DMatrix::zeros(dim, dim),
            count: 0,
            initial_diag,
            log_tune: 0.0,
            accepted_count: 0,
            total_count: 0,
            warmup,
            target_accept: if dim == 1 { 0.44 } else { 0.234 },
            jitter: Self::DEFAULT_JITTER,
        })
    }

    pub fn with_target_accept(mut self, target: f64) -> Self {
        self.target_accept = target;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn accepted_count(&self) -> u64 {
        self.accepted_count
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.accepted_count as f64 / self.total_count as f64
        }
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    /// Unbiased sample covariance of the absorbed samples (zero before two samples).
    pub fn running_covariance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            DMatrix::zeros(self.dim, self.dim)
        } else {
            &self.m2 / (self.count - 1) as f64
        }
    }

    pub fn is_adapting(&self) -> bool {
        self.count >= self.warmup.max(2)
    }

    /// Multiplier applied to the empirical covariance once adapting.
    pub fn scale(&self) -> f64 {
        2.38 * 2.38 / self.dim as f64 * self.log_tune.exp()
    }

    pub fn proposal_covariance(&self) -> DMatrix<f64> {
        if self.is_adapting() {
            let mut c = self.running_covariance();
            for k in 0..self.dim {
                c[(k, k)] += self.jitter;
            }
            c * self.scale()
        } else {
            DMatrix::from_diagonal(&DVector::from_vec(self.initial_diag.clone()))
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if current.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: current.len(),
            });
        }
        let cov = self.proposal_covariance();
        let chol = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                // Fall back to the diagonal if round-off broke definiteness.
                DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(self.jitter).sqrt()))
            }
        };
        let z = DVector::from_iterator(self.dim, (0..self.dim).map(|_| standard_normal(rng)));
        let step = chol * z;
        Ok(current.iter().zip(step.iter()).map(|(c, s)| c + s).collect())
    }

    /// Absorb the chain's current value after an MH step.
    pub fn update(&mut self, sample: &[f64], accepted: bool) -> Result<()> {
        if sample.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: sample.len(),
            });
        }
        let was_adapting = self.is_adapting();
        self.total_count += 1;
        if accepted {
            self.accepted_count += 1;
        }
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = sample.iter().zip(&self.running_mean).map(|(x, m)| x - m).collect();
        for (m, d) in self.running_mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for a in 0..self.dim {
            let post_a = sample[a] - self.running_mean[a];
            for b in 0..self.dim {
                self.m2[(b, a)] += delta[b] * post_a;
            }
        }
        if was_adapting {
            let k = (self.count - self.warmup.max(2)) as f64 + 1.0;
            let acc = if accepted { 1.0 } else { 0.0 };
            self.log_tune = (self.log_tune + (acc - self.target_accept) / k.powf(0.6)).clamp(-20.0, 20.0);
        }
        Ok(())
    }
}
