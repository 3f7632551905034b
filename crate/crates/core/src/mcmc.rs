//! Metropolis-within-Gibbs sampler over the unnormalized-weights state,
//! generic over view models, with an optional update of the number of
//! components.
//!
//! Sweep order: `c0, u0, s0, c_j, u_i, s_i, theta, M`.

use rayon::prelude::*;

use crate::model::{AllocationState, Hyperparams, PriorOnM, WeightState};
use crate::numerics::random::{sample_categorical, sample_gamma, sample_poisson, sample_positive_gamma};
use crate::numerics::{StreamRng, Streams};
use crate::{Error, Result};

/// A data view with its own component and shared parameters.
///
/// Components are indexed `0..n_components()`; the engine keeps that count
/// equal to the number of mixture components.
pub trait ViewModel: Send + Sync {
    fn name(&self) -> &str;

    fn n_subjects(&self) -> usize;

    fn n_components(&self) -> usize;

    /// `ln f_j(y_ji | theta*_jm)` under the current parameters.
    fn log_likelihood(&self, i: usize, m: usize) -> f64;

    /// Append one component drawn from the prior.
    fn push_prior_component(&mut self, rng: &mut StreamRng) -> Result<()>;

    /// Keep the listed components, in that order.
    fn retain_components(&mut self, keep: &[usize]);

    /// Draw component parameters from their full conditionals given `labels`;
    /// components with no subjects are drawn from the prior.
    fn update_components(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()>;

    /// Update parameters shared across components (and any latent variables).
    fn update_shared(&mut self, _labels: &[usize], _rng: &mut StreamRng) -> Result<()> {
        Ok(())
    }

    /// Replace all parameters by a prior draw with `m` components.
    fn sample_prior(&mut self, m: usize, rng: &mut StreamRng) -> Result<()>;

    /// Replace the data by a draw from the likelihood given `labels`.
    fn simulate_data(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()>;

    /// Flat summary of the parameters of component `m`, for traces.
    fn component_params(&self, m: usize) -> Vec<f64>;

    fn box_clone(&self) -> Box<dyn ViewModel>;

    /// Access to the concrete view, e.g. to read simulated data back.
    fn as_any(&self) -> &dyn std::any::Any;
}

impl Clone for Box<dyn ViewModel> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iteration at which proposal adaptation may start (used by view constructors).
    pub adapt_start: usize,
    /// Initial number of components in random-M mode.
    pub m_init: usize,
    pub store_params: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            total_iterations: 1000,
            burn_in: 500,
            thin: 1,
            seed: 1,
            adapt_start: 100,
            m_init: 5,
            store_params: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.total_iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than total_iterations ({})",
                self.burn_in, self.total_iterations
            )));
        }
        if self.m_init == 0 {
            return Err(Error::Config("m_init must be at least 1".into()));
        }
        Ok(())
    }
}

/// Full sampler state.
pub struct ChainState {
    pub alloc: AllocationState,
    pub weights: WeightState,
    pub views: Vec<Box<dyn ViewModel>>,
}

impl Clone for ChainState {
    fn clone(&self) -> Self {
        ChainState {
            alloc: self.alloc.clone(),
            weights: self.weights.clone(),
            views: self.views.clone(),
        }
    }
}

impl ChainState {
    pub fn m(&self) -> usize {
        self.alloc.m
    }

    pub fn n(&self) -> usize {
        self.alloc.n()
    }

    /// Checks labels, dimensions, cached totals and (optionally) that
    /// allocated components lead.
    pub fn check_invariants(&self, compacted: bool) -> Result<()> {
        self.alloc.validate()?;
        let m = self.m();
        if self.weights.m() != m || self.weights.n() != self.n() {
            return Err(Error::Numeric("weight dimensions out of sync".into()));
        }
        if self.views.iter().any(|v| v.n_components() != m) {
            return Err(Error::Numeric("view component count out of sync".into()));
        }
        if self.weights.total_drift() > 1e-10 * (1.0 + self.weights.t0()) {
            return Err(Error::Numeric("cached weight totals drifted".into()));
        }
        if compacted {
            let mask = self.alloc.allocated_mask();
            let k = mask.iter().filter(|&&b| b).count();
            if mask[..k].iter().any(|b| !b) {
                return Err(Error::Numeric("allocated components are not leading".into()));
            }
        }
        Ok(())
    }
}

// Stream tags, one per update.
const TAG_C0: u64 = 1;
const TAG_U0: u64 = 2;
const TAG_S0: u64 = 3;
const TAG_CJ: u64 = 4;
const TAG_UI: u64 = 5;
const TAG_SI: u64 = 6;
const TAG_THETA: u64 = 7;
const TAG_M: u64 = 8;
const TAG_INIT: u64 = 9;

/// `P(c0_i = m | .) ∝ s0_m s_im`, independently over subjects.
pub fn update_c0(state: &mut ChainState, streams: &Streams, iter: u64) {
    let w = &state.weights;
    let c0: Vec<usize> = (0..state.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(&[iter, TAG_C0, i as u64]);
            let probs: Vec<f64> = w.s0().iter().zip(w.s(i)).map(|(a, b)| a * b).collect();
            sample_categorical(&probs, &mut rng)
        })
        .collect();
    state.alloc.c0 = c0;
}

/// `u0 | . ~ Gamma(n, t0)`.
pub fn update_u0(state: &mut ChainState, streams: &Streams, iter: u64) -> Result<()> {
    let mut rng = streams.rng(&[iter, TAG_U0]);
    state.weights.u0 = sample_gamma(state.n() as f64, state.weights.t0(), &mut rng)?.max(f64::MIN_POSITIVE);
    Ok(())
}

/// `s0_m | . ~ Gamma(alpha0 + n_0m, u0 + 1)`.
pub fn update_s0(state: &mut ChainState, hyper: &Hyperparams, streams: &Streams, iter: u64) -> Result<()> {
    let mut rng = streams.rng(&[iter, TAG_S0]);
    let rate = state.weights.u0 + 1.0;
    let s0 = state
        .alloc
        .baseline_counts()
        .into_iter()
        .map(|c| sample_positive_gamma(hyper.alpha0 + c as f64, rate, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    state.weights.set_s0(s0);
    Ok(())
}

/// `P(c_ji = m | .) ∝ s_im f_j(y_ji | theta*_jm)`.
pub fn update_cj(state: &mut ChainState, streams: &Streams, iter: u64) -> Result<()> {
    let m = state.m();
    for (j, view) in state.views.iter().enumerate() {
        let w = &state.weights;
        let labels = (0..state.alloc.n())
            .into_par_iter()
            .map(|i| {
                let mut rng = streams.rng(&[iter, TAG_CJ, j as u64, i as u64]);
                let mut logw = Vec::with_capacity(m);
                for (k, s) in w.s(i).iter().enumerate() {
                    let ll = view.log_likelihood(i, k);
                    if ll.is_nan() || ll == f64::INFINITY {
                        return Err(Error::NonFiniteLikelihood {
                            view: j,
                            subject: i,
                            component: k,
                        });
                    }
                    logw.push(s.ln() + ll);
                }
                let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return Err(Error::NonFiniteLikelihood {
                        view: j,
                        subject: i,
                        component: 0,
                    });
                }
                let probs: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
                Ok(sample_categorical(&probs, &mut rng))
            })
            .collect::<Result<Vec<_>>>()?;
        state.alloc.c[j] = labels;
    }
    Ok(())
}

/// `u_i | . ~ Gamma(J, t_i)`.
pub fn update_ui(state: &mut ChainState, streams: &Streams, iter: u64) -> Result<()> {
    let j = state.alloc.n_views() as f64;
    let w = &state.weights;
    state.weights.u = (0..state.alloc.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(&[iter, TAG_UI, i as u64]);
            Ok(sample_gamma(j, w.t(i), &mut rng)?.max(f64::MIN_POSITIVE))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// `s_im | . ~ Gamma(alpha + 1{c0_i = m} + n_im, u_i + 1)`.
pub fn update_si(state: &mut ChainState, hyper: &Hyperparams, streams: &Streams, iter: u64) -> Result<()> {
    let alloc = &state.alloc;
    let w = &state.weights;
    let rows = (0..alloc.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(&[iter, TAG_SI, i as u64]);
            let counts = alloc.subject_view_counts(i);
            let rate = w.u[i] + 1.0;
            counts
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let shape = hyper.alpha + if alloc.c0[i] == k { 1.0 } else { 0.0 } + c as f64;
                    sample_positive_gamma(shape, rate, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, row) in rows.into_iter().enumerate() {
        state.weights.set_s(i, row);
    }
    Ok(())
}

/// Component and shared parameter updates, one stream per view.
pub fn update_theta(state: &mut ChainState, streams: &Streams, iter: u64) -> Result<()> {
    let alloc = &state.alloc;
    state
        .views
        .par_iter_mut()
        .enumerate()
        .map(|(j, view)| {
            let mut rng = streams.rng(&[iter, TAG_THETA, j as u64]);
            view.update_components(&alloc.c[j], &mut rng)?;
            view.update_shared(&alloc.c[j], &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// Parameters of the two-part mixture for the number of non-allocated components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonAllocatedLaw {
    /// Probability of the unshifted part.
    pub weight_unshifted: f64,
    /// Common Poisson rate `Lambda * psi(u)`.
    pub rate: f64,
}

impl NonAllocatedLaw {
    pub fn new(k: usize, lambda: f64, log_psi: f64) -> Self {
        let rate = lambda * log_psi.exp();
        NonAllocatedLaw {
            weight_unshifted: k as f64 / (k as f64 + rate),
            rate,
        }
    }

    pub fn mean(&self) -> f64 {
        self.rate + (1.0 - self.weight_unshifted)
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<usize> {
        let shift = usize::from(rand::Rng::random::<f64>(rng) >= self.weight_unshifted);
        Ok(shift + sample_poisson(self.rate, rng)? as usize)
    }
}

/// Compact allocated components to the front (those used by `c0` or any
/// view), draw the number of non-allocated components and refresh them from
/// their no-data conditionals. No-op under a fixed `M`.
pub fn update_m(state: &mut ChainState, hyper: &Hyperparams, streams: &Streams, iter: u64) -> Result<()> {
    let lambda = match hyper.q_m {
        PriorOnM::Fixed { .. } => return Ok(()),
        PriorOnM::ShiftedPoisson { lambda } => lambda,
    };
    let mut rng = streams.rng(&[iter, TAG_M]);
    let mask = state.alloc.allocated_mask();
    let keep: Vec<usize> = (0..state.m()).filter(|&k| mask[k]).collect();
    let k = keep.len();
    let law = NonAllocatedLaw::new(k, lambda, state.weights.log_psi(hyper));
    let m_na = law.sample(&mut rng)?;

    let mut relabel = vec![usize::MAX; state.m()];
    for (new, &old) in keep.iter().enumerate() {
        relabel[old] = new;
    }
    for l in state.alloc.c0.iter_mut().chain(state.alloc.c.iter_mut().flatten()) {
        *l = relabel[*l];
    }
    state.alloc.m = k + m_na;

    let rate0 = state.weights.u0 + 1.0;
    let extra_s0 = (0..m_na)
        .map(|_| sample_positive_gamma(hyper.alpha0, rate0, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let extra_s = state
        .weights
        .u
        .clone()
        .into_iter()
        .map(|u| {
            (0..m_na)
                .map(|_| sample_positive_gamma(hyper.alpha, u + 1.0, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    state.weights.reindex(&keep, &extra_s0, &extra_s);
    for view in state.views.iter_mut() {
        view.retain_components(&keep);
        for _ in 0..m_na {
            view.push_prior_component(&mut rng)?;
        }
    }
    Ok(())
}

/// Sampler bound to a hyperparameter set and a seed.
pub struct Sampler {
    pub hyper: Hyperparams,
    pub streams: Streams,
    pub state: ChainState,
}

impl Sampler {
    /// Initial state: `m` components (the fixed value under a fixed `M`),
    /// uniform random labels, weights from the prior and view parameters
    /// from one conditional update.
    pub fn new(views: Vec<Box<dyn ViewModel>>, hyper: Hyperparams, seed: u64, m_init: usize) -> Result<Self> {
        let streams = Streams::new(seed);
        let m = match hyper.q_m {
            PriorOnM::Fixed { m } => m,
            PriorOnM::ShiftedPoisson { .. } => m_init.max(1),
        };
        let n = views.first().map(|v| v.n_subjects()).ok_or_else(|| Error::Config("no views".into()))?;
        if n == 0 {
            return Err(Error::Config("views have no subjects".into()));
        }
        if let Some(v) = views.iter().find(|v| v.n_subjects() != n) {
            return Err(Error::Config(format!(
                "view '{}' has {} subjects, expected {n}",
                v.name(),
                v.n_subjects()
            )));
        }
        let mut rng = streams.rng(&[u64::MAX, TAG_INIT]);
        let draw = |rng: &mut StreamRng| rand::Rng::random_range(rng, 0..m);
        let c0: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
        let c: Vec<Vec<usize>> = views.iter().map(|_| (0..n).map(|_| draw(&mut rng)).collect()).collect();
        let alloc = AllocationState::new(m, c0, c)?;
        let s0 = (0..m)
            .map(|_| sample_positive_gamma(hyper.alpha0, 1.0, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let s = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| sample_positive_gamma(hyper.alpha + 1.0, 1.0, &mut rng))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = WeightState::new(s0, s, 1.0, vec![1.0; n])?;
        let mut state = ChainState { alloc, weights, views };
        for (j, view) in state.views.iter_mut().enumerate() {
            view.sample_prior(m, &mut rng)?;
            view.update_components(&state.alloc.c[j], &mut rng)?;
        }
        Ok(Sampler { hyper, streams, state })
    }

    /// Sampler over a given state (used by joint-distribution tests).
    pub fn from_state(state: ChainState, hyper: Hyperparams, seed: u64) -> Self {
        Sampler {
            hyper,
            streams: Streams::new(seed),
            state,
        }
    }

    pub fn is_random_m(&self) -> bool {
        matches!(self.hyper.q_m, PriorOnM::ShiftedPoisson { .. })
    }

    /// One full sweep.
    pub fn sweep(&mut self, iter: u64) -> Result<()> {
        let (st, h, s) = (&mut self.state, &self.hyper, &self.streams);
        update_c0(st, s, iter);
        update_u0(st, s, iter)?;
        update_s0(st, h, s, iter)?;
        update_cj(st, s, iter)?;
        update_ui(st, s, iter)?;
        update_si(st, h, s, iter)?;
        update_theta(st, s, iter)?;
        update_m(st, h, s, iter)?;
        Ok(())
    }
}

/// Post-burn-in, thinned samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainTrace {
    pub iterations: Vec<usize>,
    pub c0: Vec<Vec<usize>>,
    /// `c[j][s]`: labels of view `j` at sample `s`.
    pub c: Vec<Vec<Vec<usize>>>,
    pub m: Vec<usize>,
    /// Number of distinct baseline labels.
    pub kn: Vec<usize>,
    /// `params[s][j][k]`: flat parameters of component `k` in view `j`.
    pub params: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    fn record(&mut self, iter: usize, st: &ChainState, store_params: bool) {
        self.iterations.push(iter);
        self.c0.push(st.alloc.c0.clone());
        if self.c.len() != st.alloc.n_views() {
            self.c = vec![Vec::new(); st.alloc.n_views()];
        }
        for (j, row) in st.alloc.c.iter().enumerate() {
            self.c[j].push(row.clone());
        }
        self.m.push(st.m());
        self.kn.push(st.alloc.k_baseline());
        if store_params {
            self.params.push(
                st.views
                    .iter()
                    .map(|v| (0..v.n_components()).map(|k| v.component_params(k)).collect())
                    .collect(),
            );
        }
    }
}

/// Run a chain and record post-burn-in samples every `thin` iterations.
pub fn run_chain(views: Vec<Box<dyn ViewModel>>, hyper: &Hyperparams, config: &McmcConfig) -> Result<ChainTrace> {
    run_chain_with(views, hyper, config, |_, _| {})
}

/// As [`run_chain`], calling `progress(iteration, state)` after every sweep.
pub fn run_chain_with<F: FnMut(usize, &ChainState)>(
    views: Vec<Box<dyn ViewModel>>,
    hyper: &Hyperparams,
    config: &McmcConfig,
    mut progress: F,
) -> Result<ChainTrace> {
    config.validate()?;
    let mut sampler = Sampler::new(views, *hyper, config.seed, config.m_init)?;
    let mut trace = ChainTrace::default();
    for iter in 0..config.total_iterations {
        sampler.sweep(iter as u64)?;
        progress(iter, &sampler.state);
        if iter >= config.burn_in && (iter - config.burn_in).is_multiple_of(config.thin) {
            trace.record(iter, &sampler.state, config.store_params);
        }
    }
    Ok(trace)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::random::sample_normal;
    use crate::numerics::special::ln_gamma;

    /// Normal view with known variance and a N(0, tau2) prior on the means.
    #[derive(Clone)]
    pub(crate) struct KnownVarNormal {
        pub y: Vec<f64>,
        pub means: Vec<f64>,
        pub sigma2: f64,
        pub tau2: f64,
    }

    impl KnownVarNormal {
        pub fn new(y: Vec<f64>, sigma2: f64, tau2: f64) -> Self {
            KnownVarNormal {
                y,
                means: Vec::new(),
                sigma2,
                tau2,
            }
        }
    }

    impl ViewModel for KnownVarNormal {
        fn name(&self) -> &str {
            "known-variance normal"
        }
        fn n_subjects(&self) -> usize {
            self.y.len()
        }
        fn n_components(&self) -> usize {
            self.means.len()
        }
        fn log_likelihood(&self, i: usize, m: usize) -> f64 {
            let d = self.y[i] - self.means[m];
            -0.5 * (2.0 * std::f64::consts::PI * self.sigma2).ln() - 0.5 * d * d / self.sigma2
        }
        fn push_prior_component(&mut self, rng: &mut StreamRng) -> Result<()> {
            self.means.push(sample_normal(0.0, self.tau2.sqrt(), rng)?);
            Ok(())
        }
        fn retain_components(&mut self, keep: &[usize]) {
            self.means = keep.iter().map(|&k| self.means[k]).collect();
        }
        fn update_components(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
            for k in 0..self.means.len() {
                let (mut cnt, mut sum) = (0.0, 0.0);
                for (i, &l) in labels.iter().enumerate() {
                    if l == k {
                        cnt += 1.0;
                        sum += self.y[i];
                    }
                }
                let prec = 1.0 / self.tau2 + cnt / self.sigma2;
                self.means[k] = sample_normal(sum / self.sigma2 / prec, prec.recip().sqrt(), rng)?;
            }
            Ok(())
        }
        fn sample_prior(&mut self, m: usize, rng: &mut StreamRng) -> Result<()> {
            self.means.clear();
            for _ in 0..m {
                self.push_prior_component(rng)?;
            }
            Ok(())
        }
        fn simulate_data(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
            for (i, &l) in labels.iter().enumerate() {
                self.y[i] = sample_normal(self.means[l], self.sigma2.sqrt(), rng)?;
            }
            Ok(())
        }
        fn component_params(&self, m: usize) -> Vec<f64> {
            vec![self.means[m]]
        }
        fn box_clone(&self) -> Box<dyn ViewModel> {
            Box::new(self.clone())
        }

        fn as_any(&self) -> &dyn std::any::Any {
            self
        }
    }

    fn state_with(m: usize, s0: Vec<f64>, s: Vec<Vec<f64>>, views: Vec<Box<dyn ViewModel>>) -> ChainState {
        let n = s.len();
        let alloc = AllocationState::new(m, vec![0; n], vec![vec![0; n]; views.len()]).unwrap();
        let weights = WeightState::new(s0, s, 1.0, vec![1.0; n]).unwrap();
        ChainState { alloc, weights, views }
    }

    fn flat_view(n: usize, m: usize) -> Box<dyn ViewModel> {
        let mut v = KnownVarNormal::new(vec![0.0; n], 1.0, 1.0);
        v.means = vec![0.0; m];
        Box::new(v)
    }

    #[test]
    fn c0_single_component_and_frequencies() {
        let mut st = state_with(1, vec![1.0], vec![vec![1.0]; 3], vec![flat_view(3, 1)]);
        update_c0(&mut st, &Streams::new(1), 0);
        assert_eq!(st.alloc.c0, vec![0, 0, 0]);

        let n = 100_000;
        let mut st = state_with(2, vec![2.0, 1.0], vec![vec![1.0, 1.0]; n], vec![flat_view(n, 2)]);
        update_c0(&mut st, &Streams::new(2), 0);
        let p = st.alloc.c0.iter().filter(|&&l| l == 0).count() as f64 / n as f64;
        let se = ((2.0 / 9.0) / n as f64).sqrt();
        assert!((p - 2.0 / 3.0).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn cj_likelihood_ratio() {
        let n = 100_000;
        let mut v = KnownVarNormal::new(vec![0.0; n], 1.0, 1.0);
        // ln f ratio of 3:1 between component 0 and 1.
        v.means = vec![0.0, (2.0 * 3f64.ln()).sqrt()];
        let mut st = state_with(2, vec![1.0, 1.0], vec![vec![1.0, 1.0]; n], vec![Box::new(v)]);
        update_cj(&mut st, &Streams::new(3), 0).unwrap();
        let p = st.alloc.c[0].iter().filter(|&&l| l == 0).count() as f64 / n as f64;
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * se, "{p}");

        // Flat likelihood: proportional to s_i.
        let mut st = state_with(2, vec![1.0, 1.0], vec![vec![1.0, 3.0]; n], vec![flat_view(n, 2)]);
        update_cj(&mut st, &Streams::new(4), 0).unwrap();
        let p = st.alloc.c[0].iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        assert!((p - 0.75).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn cj_reports_non_finite_likelihood() {
        let mut v = KnownVarNormal::new(vec![f64::NAN, 0.0], 1.0, 1.0);
        v.means = vec![0.0, 1.0];
        let mut st = state_with(2, vec![1.0, 1.0], vec![vec![1.0, 1.0]; 2], vec![Box::new(v)]);
        let err = update_cj(&mut st, &Streams::new(1), 0).unwrap_err();
        assert_eq!(
            err,
            Error::NonFiniteLikelihood {
                view: 0,
                subject: 0,
                component: 0
            }
        );
    }

    #[test]
    fn u_and_s_updates_follow_gamma_conditionals() {
        let reps = 20_000;
        let streams = Streams::new(5);
        let hyper = Hyperparams::fixed(0.1, 0.1, 2).unwrap();
        let mut st = state_with(2, vec![1.0, 1.0], vec![vec![2.0, 2.0]; 10], vec![flat_view(10, 2), flat_view(10, 2)]);
        let (mut u0, mut u1, mut s_empty, mut s_target) = (0.0, 0.0, 0.0, 0.0);
        // Subject 0: c0 = 0 and both views on 0 -> s_00 ~ Gamma(2.1 + 1, u + 1).
        for r in 0..reps {
            let it = r as u64;
            update_u0(&mut st, &streams, it).unwrap();
            u0 += st.weights.u0;
            update_ui(&mut st, &streams, it).unwrap();
            u1 += st.weights.u[0];
            st.weights.u0 = 0.5;
            st.alloc.c0 = vec![0; 10];
            update_s0(&mut st, &hyper, &streams, it).unwrap();
            s_empty += st.weights.s0()[1];
            st.weights.u[0] = 1.0;
            update_si(&mut st, &hyper, &streams, it).unwrap();
            s_target += st.weights.s(0)[0];
            assert!(st.weights.total_drift() < 1e-12);
            st.weights.set_s0(vec![1.0, 1.0]);
            for i in 0..10 {
                st.weights.set_s(i, vec![2.0, 2.0]);
            }
        }
        let r = reps as f64;
        // Gamma(10, 2): mean 5, var 2.5.
        assert!((u0 / r - 5.0).abs() < 3.0 * (2.5 / r).sqrt());
        // Gamma(2, 4): mean 0.5, var 0.125.
        assert!((u1 / r - 0.5).abs() < 3.0 * (0.125 / r).sqrt());
        // Gamma(0.1, 1.5): mean 1/15, var 0.1/2.25.
        assert!((s_empty / r - 0.1 / 1.5).abs() < 3.0 * (0.1 / 2.25 / r).sqrt());
        // Gamma(3.1, 2): mean 1.55, var 0.775.
        assert!((s_target / r - 1.55).abs() < 3.0 * (0.775 / r).sqrt());
    }

    #[test]
    fn non_allocated_mixture() {
        let law = NonAllocatedLaw::new(3, 5.0, 0.2f64.ln());
        assert!((law.weight_unshifted - 0.75).abs() < 1e-15);
        assert!((law.rate - 1.0).abs() < 1e-15);
        let mut rng = Streams::new(6).rng(&[0]);
        let draws = 1_000_000;
        let xs: Vec<f64> = (0..draws).map(|_| law.sample(&mut rng).unwrap() as f64).collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
        let expect = 1.0 + 1.0 / (3.0 + 1.0);
        assert!((law.mean() - expect).abs() < 1e-15);
        assert!((mean - expect).abs() < 3.0 * (var / draws as f64).sqrt());
    }

    #[test]
    fn psi_in_log_space() {
        let h = Hyperparams::shifted_poisson(0.7, 1.3, 2.0).unwrap();
        let u: Vec<f64> = (0..50).map(|i| 0.05 * i as f64).collect();
        let w = WeightState::new(vec![1.0], vec![vec![1.0]; 50], 2.5, u.iter().map(|x| x + 1e-9).collect()).unwrap();
        let direct = (2.5f64 + 1.0).powf(-0.7) * w.u.iter().map(|x| (x + 1.0).powf(-1.3)).product::<f64>();
        assert!((w.log_psi(&h).exp() - direct).abs() < 1e-12 * direct.max(1e-300) + 1e-300);
        assert!(w.log_psi(&h) < 0.0);
    }

    #[test]
    fn m_update_compacts_and_keeps_invariants() {
        let hyper = Hyperparams::shifted_poisson(1.0, 1.0, 3.0).unwrap();
        let n = 6;
        let mut v = KnownVarNormal::new(vec![0.0; n], 1.0, 1.0);
        v.means = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let mut st = state_with(5, vec![1.0; 5], vec![vec![1.0; 5]; n], vec![Box::new(v)]);
        st.alloc.c0 = vec![4, 4, 2, 2, 4, 2];
        st.alloc.c[0] = vec![4, 1, 2, 2, 4, 2];
        let before = crate::partition::Partition::from_labels(&st.alloc.c[0]);
        update_m(&mut st, &hyper, &Streams::new(7), 0).unwrap();
        st.check_invariants(true).unwrap();
        assert_eq!(st.alloc.c0, vec![2, 2, 1, 1, 2, 1]);
        assert_eq!(crate::partition::Partition::from_labels(&st.alloc.c[0]), before);
        assert_eq!(&st.views[0].component_params(0), &[1.0]);
        assert_eq!(&st.views[0].component_params(2), &[4.0]);
        assert!(st.m() >= 3);
    }

    #[test]
    fn single_subject_fixed_m_is_conjugate() {
        let v = KnownVarNormal::new(vec![1.5], 0.5, 2.0);
        let hyper = Hyperparams::fixed(1.0, 1.0, 1).unwrap();
        let config = McmcConfig {
            total_iterations: 40_000,
            burn_in: 100,
            thin: 1,
            seed: 3,
            store_params: true,
            ..McmcConfig::default()
        };
        let trace = run_chain(vec![Box::new(v)], &hyper, &config).unwrap();
        let mu: Vec<f64> = trace.params.iter().map(|p| p[0][0][0]).collect();
        let mean = mu.iter().sum::<f64>() / mu.len() as f64;
        // Posterior N(1.5 * 2 / 2.5, 0.5 * 2 / 2.5), draws are independent.
        let (pm, pv) = (1.2, 0.4);
        assert!((mean - pm).abs() < 3.0 * (pv / mu.len() as f64).sqrt());
        assert!(trace.c0.iter().all(|c| c == &[0]));
    }

    fn log_normal_marginal(ys: &[f64], sigma2: f64, tau2: f64) -> f64 {
        // y ~ N(0, sigma2 I + tau2 11^T)
        let n = ys.len() as f64;
        if ys.is_empty() {
            return 0.0;
        }
        let s: f64 = ys.iter().sum();
        let ss: f64 = ys.iter().map(|y| y * y).sum();
        let det = sigma2.powf(n - 1.0) * (sigma2 + n * tau2);
        let quad = ss / sigma2 - tau2 * s * s / (sigma2 * (sigma2 + n * tau2));
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
    }

    #[test]
    fn stationary_allocations_match_enumeration() {
        let (m, alpha0, alpha) = (2usize, 1.0, 0.5);
        let (sigma2, tau2) = (0.5, 4.0);
        let y = vec![-1.0, 1.2];
        let hyper = Hyperparams::fixed(alpha0, alpha, m).unwrap();
        // Exact posterior over (c0, c1) in [2]^2 x [2]^2.
        let mut exact = [0.0; 16];
        for (code, slot) in exact.iter_mut().enumerate() {
            let c0 = [code & 1, (code >> 1) & 1];
            let c1 = [(code >> 2) & 1, (code >> 3) & 1];
            let n0: Vec<usize> = (0..m).map(|k| c0.iter().filter(|&&l| l == k).count()).collect();
            let lp0 = ln_gamma(m as f64 * alpha0) - ln_gamma(2.0 + m as f64 * alpha0)
                + n0.iter().map(|&c| ln_gamma(alpha0 + c as f64) - ln_gamma(alpha0)).sum::<f64>();
            let st = AllocationState::new(m, c0.to_vec(), vec![c1.to_vec()]).unwrap();
            let lp1 = crate::model::cond_label_logprob(&st, alpha).unwrap();
            let ly: f64 = (0..m)
                .map(|k| {
                    let ys: Vec<f64> = (0..2).filter(|&i| c1[i] == k).map(|i| y[i]).collect();
                    log_normal_marginal(&ys, sigma2, tau2)
                })
                .sum();
            *slot = (lp0 + lp1 + ly).exp();
        }
        let z: f64 = exact.iter().sum();
        exact.iter_mut().for_each(|p| *p /= z);

        let v = KnownVarNormal::new(y, sigma2, tau2);
        let config = McmcConfig {
            total_iterations: 200_000,
            burn_in: 1000,
            thin: 1,
            seed: 11,
            ..McmcConfig::default()
        };
        let trace = run_chain(vec![Box::new(v)], &hyper, &config).unwrap();
        let codes: Vec<usize> = (0..trace.len())
            .map(|s| trace.c0[s][0] | trace.c0[s][1] << 1 | trace.c[0][s][0] << 2 | trace.c[0][s][1] << 3)
            .collect();
        for (code, &p) in exact.iter().enumerate() {
            let ind: Vec<f64> = codes.iter().map(|&c| f64::from(u8::from(c == code))).collect();
            let est = crate::numerics::batch_means(&ind, 50);
            assert!((est.0 - p).abs() < 3.5 * est.1.max(1e-4), "state {code}: {} vs {p} (se {})", est.0, est.1);
        }
    }

    #[test]
    fn chains_are_deterministic() {
        let hyper = Hyperparams::shifted_poisson(1.0, 1.0, 2.0).unwrap();
        let config = McmcConfig {
            total_iterations: 200,
            burn_in: 50,
            thin: 3,
            seed: 42,
            m_init: 3,
            ..McmcConfig::default()
        };
        let mk = || -> Vec<Box<dyn ViewModel>> {
            vec![
                Box::new(KnownVarNormal::new(vec![-2.0, -1.9, 0.1, 2.0, 2.2], 0.3, 4.0)),
                Box::new(KnownVarNormal::new(vec![1.0, 1.1, -1.0, -1.1, 0.0], 0.3, 4.0)),
            ]
        };
        let mut checks = 0;
        let a = run_chain_with(mk(), &hyper, &config, |_, st| {
            st.check_invariants(true).unwrap();
            checks += 1;
        })
        .unwrap();
        let b = run_chain(mk(), &hyper, &config).unwrap();
        assert_eq!(checks, 200);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert!(McmcConfig { burn_in: 10, total_iterations: 10, ..config.clone() }.validate().is_err());
        assert!(McmcConfig { thin: 0, ..config }.validate().is_err());
    }
}
