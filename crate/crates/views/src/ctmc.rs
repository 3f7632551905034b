//! Two-state continuous-time Markov chain view for binary panel data.
//!
//! Subject intensities are `lambda_i,rs = lambda*_{c_i,rs} * exp(eta_rs . x_i)`;
//! the first state of each subject is conditioned on.

use latmod_core::mcmc::ViewModel;
use latmod_core::numerics::random::{sample_inv_gamma, sample_normal};
use latmod_core::numerics::{AdaptiveProposalState, StreamRng};
use latmod_core::{Error, Result};
use serde::{Deserialize, Serialize};
use rand::Rng;

use crate::series::{Covariates, Series};
use crate::{metropolis_accept, ordered_sum};

/// Transition matrix `P(eps)` of the chain with intensities `(l01, l10)`.
pub fn transition_matrix(eps: f64, l01: f64, l10: f64) -> [[f64; 2]; 2] {
    let total = l01 + l10;
    let decay = -(-total * eps).exp_m1();
    let p01 = l01 / total * decay;
    let p10 = l10 / total * decay;
    [[1.0 - p01, p01], [p10, 1.0 - p10]]
}

/// `ln P(to | from)` over an interval of length `eps`.
pub fn log_transition(from: u8, to: u8, eps: f64, l01: f64, l10: f64) -> f64 {
    let total = l01 + l10;
    let decay = -(-total * eps).exp_m1();
    let rate = if from == 0 { l01 } else { l10 };
    let p_move = rate / total * decay;
    if from == to {
        (-p_move).ln_1p()
    } else {
        p_move.ln()
    }
}

/// Log-likelihood of a binary path given its first state.
pub fn subject_log_likelihood(s: &Series<u8>, l01: f64, l10: f64) -> f64 {
    s.times
        .windows(2)
        .zip(s.values.windows(2))
        .map(|(t, h)| log_transition(h[0], h[1], t[1] - t[0], l01, l10))
        .sum()
}

/// Forward-simulate a path at `times` starting from `first`.
pub fn simulate_path(times: &[f64], first: u8, l01: f64, l10: f64, rng: &mut StreamRng) -> Vec<u8> {
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return out;
    }
    out.push(first);
    for w in times.windows(2) {
        let from = *out.last().unwrap();
        let p = transition_matrix(w[1] - w[0], l01, l10);
        let u: f64 = rng.random();
        out.push(if u < p[from as usize][1] { 1 } else { 0 });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtmcPrior {
    /// Prior mean of `(ln lambda*_01, ln lambda*_10)`.
    pub mu_lambda: [f64; 2],
    /// Inverse-Gamma shape and scale for the log-intensity variances.
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    /// Independent Normal prior on every covariate effect.
    pub eta_mean: f64,
    pub eta_var: f64,
}

impl Default for CtmcPrior {
    fn default() -> Self {
        CtmcPrior {
            mu_lambda: [0.0, 0.0],
            sigma2_shape: 3.0,
            sigma2_scale: 2.0,
            eta_mean: 0.0,
            eta_var: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Component {
    log_lambda: [f64; 2],
    proposal: AdaptiveProposalState,
}

#[derive(Debug, Clone)]
pub struct CtmcView {
    name: String,
    data: Vec<Series<u8>>,
    x: Covariates,
    prior: CtmcPrior,
    comps: Vec<Component>,
    sigma2: [f64; 2],
    eta: [Vec<f64>; 2],
    eta_proposal: [Option<AdaptiveProposalState>; 2],
    fresh_proposal: AdaptiveProposalState,
}

impl CtmcView {
    /// Proposal adaptation starts after `adapt_warmup` updates of each state.
    pub fn new(
        name: impl Into<String>,
        data: Vec<Series<u8>>,
        x: Covariates,
        prior: CtmcPrior,
        adapt_warmup: u64,
    ) -> Result<Self> {
        if x.n() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: x.n(),
            });
        }
        if data.iter().flat_map(|s| &s.values).any(|&h| h > 1) {
            return Err(Error::Domain("hypertension states must be 0 or 1".into()));
        }
        if !(prior.sigma2_shape > 0.0 && prior.sigma2_scale > 0.0 && prior.eta_var > 0.0) {
            return Err(Error::Domain("invalid CTMC prior".into()));
        }
        let q = x.q();
        let eta_state = || -> Result<Option<AdaptiveProposalState>> {
            if q == 0 {
                Ok(None)
            } else {
                Ok(Some(AdaptiveProposalState::new(vec![0.01; q], adapt_warmup)?))
            }
        };
        Ok(CtmcView {
            name: name.into(),
            x,
            prior,
            comps: Vec::new(),
            sigma2: [1.0, 1.0],
            eta: [vec![0.0; q], vec![0.0; q]],
            eta_proposal: [eta_state()?, eta_state()?],
            fresh_proposal: AdaptiveProposalState::new(vec![0.05, 0.05], adapt_warmup)?,
            data,
        })
    }

    pub fn data(&self) -> &[Series<u8>] {
        &self.data
    }

    pub fn covariates(&self) -> &Covariates {
        &self.x
    }

    /// `(lambda*_01, lambda*_10)` of component `m`.
    pub fn lambda(&self, m: usize) -> [f64; 2] {
        let l = self.comps[m].log_lambda;
        [l[0].exp(), l[1].exp()]
    }

    pub fn set_lambdas(&mut self, lambdas: &[[f64; 2]]) {
        self.comps = lambdas
            .iter()
            .map(|l| Component {
                log_lambda: [l[0].ln(), l[1].ln()],
                proposal: self.fresh_proposal.clone(),
            })
            .collect();
    }

    pub fn sigma2(&self) -> [f64; 2] {
        self.sigma2
    }

    pub fn set_sigma2(&mut self, s: [f64; 2]) {
        self.sigma2 = s;
    }

    pub fn eta(&self, rs: usize) -> &[f64] {
        &self.eta[rs]
    }

    pub fn set_eta(&mut self, rs: usize, eta: Vec<f64>) {
        self.eta[rs] = eta;
    }

    /// Inverse-Gamma `(shape, scale)` full conditionals of the two log-intensity variances.
    pub fn sigma2_conditional(&self) -> [(f64, f64); 2] {
        let m = self.comps.len() as f64;
        let mut out = [(0.0, 0.0); 2];
        for (rs, o) in out.iter_mut().enumerate() {
            let ss: f64 = self
                .comps
                .iter()
                .map(|c| (c.log_lambda[rs] - self.prior.mu_lambda[rs]).powi(2))
                .sum();
            *o = (self.prior.sigma2_shape + 0.5 * m, self.prior.sigma2_scale + 0.5 * ss);
        }
        out
    }

    fn subject_loglik(&self, i: usize, log_lambda: [f64; 2], eta: [&[f64]; 2]) -> f64 {
        let l01 = (log_lambda[0] + self.x.dot(i, eta[0])).exp();
        let l10 = (log_lambda[1] + self.x.dot(i, eta[1])).exp();
        subject_log_likelihood(&self.data[i], l01, l10)
    }

    fn log_prior_lambda(&self, l: [f64; 2]) -> f64 {
        (0..2)
            .map(|rs| -0.5 * (l[rs] - self.prior.mu_lambda[rs]).powi(2) / self.sigma2[rs])
            .sum()
    }

    fn prior_component(&self, rng: &mut StreamRng) -> Result<Component> {
        let mut l = [0.0; 2];
        for rs in 0..2 {
            l[rs] = sample_normal(self.prior.mu_lambda[rs], self.sigma2[rs].sqrt(), rng)?;
        }
        Ok(Component {
            log_lambda: l,
            proposal: self.fresh_proposal.clone(),
        })
    }

    fn update_eta(&mut self, rs: usize, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        let Some(mut prop) = self.eta_proposal[rs].take() else {
            return Ok(());
        };
        let n = self.data.len();
        let cur = self.eta[rs].clone();
        let new = prop.propose(&cur, rng)?;
        let loglik = |e: &[f64]| {
            let mut pair = [self.eta[0].as_slice(), self.eta[1].as_slice()];
            pair[rs] = e;
            ordered_sum(n, |i| self.subject_loglik(i, self.comps[labels[i]].log_lambda, pair))
        };
        let lp = |e: &[f64]| -0.5 * e.iter().map(|v| (v - self.prior.eta_mean).powi(2)).sum::<f64>() / self.prior.eta_var;
        let log_ratio = loglik(&new) - loglik(&cur) + lp(&new) - lp(&cur);
        let accepted = log_ratio.is_finite() && metropolis_accept(log_ratio, rng);
        if accepted {
            self.eta[rs] = new;
        }
        prop.update(&self.eta[rs], accepted)?;
        self.eta_proposal[rs] = Some(prop);
        Ok(())
    }
}

impl ViewModel for CtmcView {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_subjects(&self) -> usize {
        self.data.len()
    }

    fn n_components(&self) -> usize {
        self.comps.len()
    }

    fn log_likelihood(&self, i: usize, m: usize) -> f64 {
        self.subject_loglik(i, self.comps[m].log_lambda, [&self.eta[0], &self.eta[1]])
    }

    fn push_prior_component(&mut self, rng: &mut StreamRng) -> Result<()> {
        let c = self.prior_component(rng)?;
        self.comps.push(c);
        Ok(())
    }

    fn retain_components(&mut self, keep: &[usize]) {
        self.comps = keep.iter().map(|&k| self.comps[k].clone()).collect();
    }

    fn update_components(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        let mut members = vec![Vec::new(); self.comps.len()];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let eta = [self.eta[0].as_slice(), self.eta[1].as_slice()];
        for (m, idx) in members.iter().enumerate() {
            if idx.is_empty() {
                let fresh = self.prior_component(rng)?;
                self.comps[m].log_lambda = fresh.log_lambda;
                continue;
            }
            let cur = self.comps[m].log_lambda;
            let v = self.comps[m].proposal.propose(&cur, rng)?;
            let new = [v[0], v[1]];
            let ll = |l: [f64; 2]| -> f64 { idx.iter().map(|&i| self.subject_loglik(i, l, eta)).sum() };
            let log_ratio = ll(new) - ll(cur) + self.log_prior_lambda(new) - self.log_prior_lambda(cur);
            let accepted = log_ratio.is_finite() && metropolis_accept(log_ratio, rng);
            let c = &mut self.comps[m];
            if accepted {
                c.log_lambda = new;
            }
            c.proposal.update(&c.log_lambda, accepted)?;
        }
        Ok(())
    }

    fn update_shared(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        let cond = self.sigma2_conditional();
        for rs in 0..2 {
            self.sigma2[rs] = sample_inv_gamma(cond[rs].0, cond[rs].1, rng)?;
        }
        for rs in 0..2 {
            self.update_eta(rs, labels, rng)?;
        }
        Ok(())
    }

    fn sample_prior(&mut self, m: usize, rng: &mut StreamRng) -> Result<()> {
        for rs in 0..2 {
            self.sigma2[rs] = sample_inv_gamma(self.prior.sigma2_shape, self.prior.sigma2_scale, rng)?;
            for e in self.eta[rs].iter_mut() {
                *e = sample_normal(self.prior.eta_mean, self.prior.eta_var.sqrt(), rng)?;
            }
        }
        self.comps = (0..m).map(|_| self.prior_component(rng)).collect::<Result<_>>()?;
        Ok(())
    }

    fn simulate_data(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        for i in 0..self.data.len() {
            let l = self.comps[labels[i]].log_lambda;
            let l01 = (l[0] + self.x.dot(i, &self.eta[0])).exp();
            let l10 = (l[1] + self.x.dot(i, &self.eta[1])).exp();
            let first = u8::from(rng.random::<f64>() < l01 / (l01 + l10));
            self.data[i].values = simulate_path(&self.data[i].times, first, l01, l10, rng);
        }
        Ok(())
    }

    fn component_params(&self, m: usize) -> Vec<f64> {
        self.lambda(m).to_vec()
    }

    fn box_clone(&self) -> Box<dyn ViewModel> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use latmod_core::numerics::Streams;

    fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    }

    #[test]
    fn transition_matrix_properties() {
        assert_eq!(transition_matrix(0.0, 0.7, 1.3), [[1.0, 0.0], [0.0, 1.0]]);
        let p = transition_matrix(1e3, 1.0, 1.0);
        assert!((p[0][1] - 0.5).abs() < 1e-12);
        let mut rng = Streams::new(1).rng(&[0]);
        for _ in 0..1000 {
            let l01 = (rng.random::<f64>() * 6.0 - 3.0).exp();
            let l10 = (rng.random::<f64>() * 6.0 - 3.0).exp();
            let (e1, e2) = (rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0);
            let p1 = transition_matrix(e1, l01, l10);
            let prod = matmul(p1, transition_matrix(e2, l01, l10));
            let direct = transition_matrix(e1 + e2, l01, l10);
            for r in 0..2 {
                assert!((p1[r][0] + p1[r][1] - 1.0).abs() < 1e-14);
                for c in 0..2 {
                    assert!((0.0..=1.0).contains(&p1[r][c]));
                    assert!((prod[r][c] - direct[r][c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn likelihood_values() {
        let s = Series::new(vec![0.0, 1.0], vec![0u8, 1]).unwrap();
        let expected = (0.5 * (1.0 - (-2.0f64).exp())).ln();
        assert!((subject_log_likelihood(&s, 1.0, 1.0) - expected).abs() < 1e-14);
        let single = Series::new(vec![2.0], vec![1u8]).unwrap();
        assert_eq!(subject_log_likelihood(&single, 1.0, 1.0), 0.0);
        let flat = Series::new(vec![0.0, 1e-9, 2e-9], vec![1u8, 1, 1]).unwrap();
        assert!(subject_log_likelihood(&flat, 1.0, 2.0).abs() < 1e-8);
        let agrees = log_transition(1, 0, 0.3, 0.4, 0.9).exp();
        assert!((agrees - transition_matrix(0.3, 0.4, 0.9)[1][0]).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_binary() {
        let s = Series::new(vec![0.0, 1.0], vec![0u8, 2]).unwrap();
        assert!(CtmcView::new("h", vec![s], Covariates::empty(1), CtmcPrior::default(), 100).is_err());
    }

    #[test]
    fn metropolis_zero_ratio_accepts() {
        let mut rng = Streams::new(2).rng(&[0]);
        assert!((0..1000).all(|_| metropolis_accept(0.0, &mut rng)));
        assert!(!(0..1000).any(|_| metropolis_accept(f64::NEG_INFINITY, &mut rng)));
    }

    #[test]
    fn sigma2_conditional_at_prior_mean() {
        let prior = CtmcPrior::default();
        let mut v = CtmcView::new("h", Vec::new(), Covariates::empty(0), prior, 100).unwrap();
        v.set_lambdas(&[[1.0, 1.0], [1.0, 1.0]]);
        for (shape, scale) in v.sigma2_conditional() {
            assert_eq!(shape, prior.sigma2_shape + 1.0);
            assert_eq!(scale, prior.sigma2_scale);
        }
    }

    #[test]
    fn simulated_paths_follow_stationary_law() {
        let mut rng = Streams::new(3).rng(&[0]);
        let times: Vec<f64> = (0..200).map(|t| t as f64 * 5.0).collect();
        let path = simulate_path(&times, 0, 0.5, 1.5, &mut rng);
        let frac = path.iter().filter(|&&h| h == 1).count() as f64 / path.len() as f64;
        assert!((frac - 0.25).abs() < 0.1);
        let sticky = simulate_path(&times, 0, 1e-6, 50.0, &mut rng);
        assert!(sticky.iter().filter(|&&h| h == 1).count() <= 2);
    }

    #[test]
    fn recovers_rates_with_fixed_allocation() {
        let (n, t) = (200, 8);
        let streams = Streams::new(4);
        let mut rng = streams.rng(&[0]);
        let times: Vec<f64> = (0..t).map(|k| k as f64).collect();
        let data: Vec<Series<u8>> = (0..n)
            .map(|_| {
                let first = u8::from(rng.random::<f64>() < 0.25);
                Series::new(times.clone(), simulate_path(&times, first, 0.5, 1.5, &mut rng)).unwrap()
            })
            .collect();
        let mut v = CtmcView::new("h", data, Covariates::empty(n), CtmcPrior::default(), 100).unwrap();
        v.set_lambdas(&[[1.0, 1.0]]);
        let labels = vec![0; n];
        let mut draws = [Vec::new(), Vec::new()];
        for it in 0..3000 {
            v.update_components(&labels, &mut rng).unwrap();
            v.update_shared(&labels, &mut rng).unwrap();
            if it >= 500 {
                let l = v.lambda(0);
                draws[0].push(l[0]);
                draws[1].push(l[1]);
            }
        }
        for (d, truth) in draws.iter_mut().zip([0.5, 1.5]) {
            d.sort_by(f64::total_cmp);
            let (lo, hi) = (d[d.len() / 40], d[d.len() * 39 / 40]);
            assert!(lo < truth && truth < hi, "({lo}, {hi}) vs {truth}");
        }
    }

    #[test]
    fn covariate_effect_moves_towards_truth() {
        let n = 300;
        let mut rng = Streams::new(5).rng(&[0]);
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 2.0 - 1.0]).collect();
        let data: Vec<Series<u8>> = x
            .iter()
            .map(|xi| {
                let l01 = 0.6 * (0.8 * xi[0]).exp();
                Series::new(times.clone(), simulate_path(&times, 0, l01, 1.0, &mut rng)).unwrap()
            })
            .collect();
        let mut v = CtmcView::new("h", data, Covariates::new(x).unwrap(), CtmcPrior::default(), 100).unwrap();
        v.set_lambdas(&[[1.0, 1.0]]);
        let labels = vec![0; n];
        let mut eta = Vec::new();
        for it in 0..2000 {
            v.update_components(&labels, &mut rng).unwrap();
            v.update_shared(&labels, &mut rng).unwrap();
            if it >= 500 {
                eta.push(v.eta(0)[0]);
            }
        }
        let mean = eta.iter().sum::<f64>() / eta.len() as f64;
        assert!((mean - 0.8).abs() < 0.3, "{mean}");
    }
}
