//! Zero-inflated Poisson panel-count view with monotone I-spline intensities.
//!
//! `W_it = b_it Y_it`, `b_it ~ Bern(1 - p*_{c_i})`, `Y_it ~ Poi(mu_it)` with
//! `mu_it = exp(eta . x_i) sum_l r_il dI_l(t)`, where `dI_l(t)` is the increment
//! of the l-th I-spline since the previous observation (the window start for
//! the first one) and `r_il ~ Exp(zeta*_{c_i})`.

use latmod_core::mcmc::ViewModel;
use latmod_core::numerics::random::{sample_beta, sample_gamma, sample_multinomial, sample_normal, sample_poisson};
use latmod_core::numerics::special::poisson_log_pmf;
use latmod_core::numerics::{AdaptiveProposalState, SplineBasisSpec, SplineKind, StreamRng, Streams};
use latmod_core::{Error, Result};
use serde::{Deserialize, Serialize};
use rand::Rng;
use rayon::prelude::*;

use crate::series::{Covariates, Series};
use crate::{metropolis_accept, ordered_sum};

/// `P(W = w)` under the zero-inflated Poisson law.
pub fn pointmass_prob(w: u64, p: f64, mu: f64) -> f64 {
    log_pmf(w, p, mu).exp()
}

pub fn log_pmf(w: u64, p: f64, mu: f64) -> f64 {
    if w == 0 {
        (p + (1.0 - p) * (-mu).exp()).ln()
    } else {
        (-p).ln_1p() + poisson_log_pmf(w, mu)
    }
}

/// `P(b = 1 | W = 0)`: the zero came from the Poisson part.
pub fn prob_poisson_zero(p: f64, mu: f64) -> f64 {
    let e = (1.0 - p) * (-mu).exp();
    e / (p + e)
}

/// Indicators `b_t` given the counts, intensities and zero-inflation probability.
pub fn sample_b(counts: &[u64], mu: &[f64], p: f64, rng: &mut StreamRng) -> Vec<bool> {
    counts
        .iter()
        .zip(mu)
        .map(|(&w, &m)| w > 0 || rng.random::<f64>() < prob_poisson_zero(p, m))
        .collect()
}

/// Split of a Poisson-attributed count over the basis terms, proportional to `mu_l`.
pub fn sample_split(w: u64, mu_l: &[f64], rng: &mut StreamRng) -> Result<Vec<u64>> {
    sample_multinomial(w, mu_l, rng)
}

/// Sizes of the point-mass zeros, Poisson zeros and positive counts.
pub fn abc_counts(counts: &[u64], b: &[bool]) -> (usize, usize, usize) {
    let mut out = (0, 0, 0);
    for (&w, &bt) in counts.iter().zip(b) {
        match (w > 0, bt) {
            (true, _) => out.2 += 1,
            (false, false) => out.0 += 1,
            (false, true) => out.1 += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZipPrior {
    pub p_a: f64,
    pub p_b: f64,
    pub zeta_shape: f64,
    pub zeta_rate: f64,
    pub eta_mean: f64,
    pub eta_var: f64,
}

impl Default for ZipPrior {
    fn default() -> Self {
        ZipPrior {
            p_a: 8.0,
            p_b: 2.0,
            zeta_shape: 2.0,
            zeta_rate: 1.0,
            eta_mean: 0.0,
            eta_var: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Subject {
    counts: Vec<u64>,
    // dI[t][l]
    delta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ZipView {
    name: String,
    subjects: Vec<Subject>,
    x: Covariates,
    prior: ZipPrior,
    n_basis: usize,
    p: Vec<f64>,
    zeta: Vec<f64>,
    r: Vec<Vec<f64>>,
    b: Vec<Vec<bool>>,
    // split[i][t][l]; zero unless W_it > 0.
    split: Vec<Vec<Vec<u64>>>,
    eta: Vec<f64>,
    eta_proposal: Option<AdaptiveProposalState>,
    // mu[i][t] under the current r and eta.
    mu: Vec<Vec<f64>>,
}

impl ZipView {
    /// Observation times must lie in the spline window; the window start is
    /// the left endpoint of the first increment.
    pub fn new(
        name: impl Into<String>,
        spline: &SplineBasisSpec,
        data: &[Series<u64>],
        x: Covariates,
        prior: ZipPrior,
        adapt_warmup: u64,
    ) -> Result<Self> {
        if spline.kind() != SplineKind::ISpline {
            return Err(Error::Config("wheezing view needs an I-spline basis".into()));
        }
        if x.n() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: x.n(),
            });
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(prior.p_a) && pos(prior.p_b) && pos(prior.zeta_shape) && pos(prior.zeta_rate) && pos(prior.eta_var)) {
            return Err(Error::Domain("invalid ZIP prior".into()));
        }
        let n_basis = spline.len();
        let t0 = spline.boundary().0;
        let subjects = data
            .iter()
            .map(|s| {
                let mut prev = spline.ispline_basis(t0)?;
                let mut delta = Vec::with_capacity(s.len());
                for &t in &s.times {
                    let cur = spline.ispline_basis(t)?;
                    delta.push(cur.iter().zip(&prev).map(|(a, b)| (a - b).max(0.0)).collect());
                    prev = cur;
                }
                Ok(Subject {
                    counts: s.values.clone(),
                    delta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let q = x.q();
        let eta_proposal = if q == 0 {
            None
        } else {
            Some(AdaptiveProposalState::new(vec![0.01; q], adapt_warmup)?)
        };
        let mut v = ZipView {
            name: name.into(),
            x,
            prior,
            n_basis,
            p: Vec::new(),
            zeta: Vec::new(),
            r: Vec::new(),
            b: subjects.iter().map(|s| vec![true; s.counts.len()]).collect(),
            split: subjects
                .iter()
                .map(|s| vec![vec![0u64; n_basis]; s.counts.len()])
                .collect(),
            eta: vec![0.0; q],
            eta_proposal,
            mu: Vec::new(),
            subjects,
        };
        v.init_latents();
        Ok(v)
    }

    // Flat r per subject matching its total count, proportional splits.
    fn init_latents(&mut self) {
        let l = self.n_basis;
        self.r = self
            .subjects
            .iter()
            .map(|s| {
                let total: u64 = s.counts.iter().sum();
                let exposure: f64 = s.delta.iter().flatten().sum();
                vec![(total as f64 + 0.5) / exposure.max(1e-6); l]
            })
            .collect();
        self.refresh_mu();
        for (i, s) in self.subjects.iter().enumerate() {
            for (t, &w) in s.counts.iter().enumerate() {
                self.b[i][t] = true;
                let d = &s.delta[t];
                let tot: f64 = d.iter().sum();
                let mut rest = w;
                for (k, cell) in self.split[i][t].iter_mut().enumerate() {
                    let share = if tot > 0.0 { (w as f64 * d[k] / tot).floor() as u64 } else { 0 };
                    *cell = share.min(rest);
                    rest -= *cell;
                }
                if let Some(k) = d.iter().rposition(|&v| v > 0.0) {
                    self.split[i][t][k] += rest;
                } else {
                    self.split[i][t][0] += rest;
                }
            }
        }
    }

    fn refresh_mu(&mut self) {
        self.mu = (0..self.subjects.len()).map(|i| self.subject_mu(i, &self.r[i], &self.eta)).collect();
    }

    fn subject_mu(&self, i: usize, r: &[f64], eta: &[f64]) -> Vec<f64> {
        let scale = self.x.dot(i, eta).exp();
        self.subjects[i]
            .delta
            .iter()
            .map(|d| scale * d.iter().zip(r).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn counts(&self, i: usize) -> &[u64] {
        &self.subjects[i].counts
    }

    pub fn increments(&self, i: usize) -> &[Vec<f64>] {
        &self.subjects[i].delta
    }

    pub fn p(&self, m: usize) -> f64 {
        self.p[m]
    }

    pub fn zeta(&self, m: usize) -> f64 {
        self.zeta[m]
    }

    pub fn set_components(&mut self, p: Vec<f64>, zeta: Vec<f64>) {
        self.p = p;
        self.zeta = zeta;
    }

    pub fn r(&self, i: usize) -> &[f64] {
        &self.r[i]
    }

    pub fn set_r(&mut self, r: Vec<Vec<f64>>) {
        self.r = r;
        self.refresh_mu();
    }

    pub fn b(&self, i: usize) -> &[bool] {
        &self.b[i]
    }

    pub fn set_b(&mut self, b: Vec<Vec<bool>>) {
        self.b = b;
    }

    pub fn split(&self, i: usize) -> &[Vec<u64>] {
        &self.split[i]
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn set_eta(&mut self, eta: Vec<f64>) {
        self.eta = eta;
        self.refresh_mu();
    }

    pub fn mu(&self, i: usize) -> &[f64] {
        &self.mu[i]
    }

    /// Beta parameters of the full conditional of `p*_m`.
    pub fn p_conditional(&self, m: usize, labels: &[usize]) -> (f64, f64) {
        let (mut a, mut bc) = (0usize, 0usize);
        for (i, s) in self.subjects.iter().enumerate() {
            if labels[i] == m {
                let (na, nb, nc) = abc_counts(&s.counts, &self.b[i]);
                a += na;
                bc += nb + nc;
            }
        }
        (a as f64 + self.prior.p_a, bc as f64 + self.prior.p_b)
    }

    /// Gamma `(shape, rate)` of the full conditional of `zeta*_m`.
    pub fn zeta_conditional(&self, m: usize, labels: &[usize]) -> (f64, f64) {
        let (mut n, mut sum) = (0.0, 0.0);
        for (i, r) in self.r.iter().enumerate() {
            if labels[i] == m {
                n += 1.0;
                sum += r.iter().sum::<f64>();
            }
        }
        (
            self.prior.zeta_shape + self.n_basis as f64 * n,
            self.prior.zeta_rate + sum,
        )
    }

    /// Gamma `(shape, rate)` of the full conditional of `r_il` given `zeta = zeta*_{c_i}`.
    pub fn r_conditional(&self, i: usize, l: usize, zeta: f64) -> (f64, f64) {
        let s = &self.subjects[i];
        let scale = self.x.dot(i, &self.eta).exp();
        let (mut shape, mut exposure) = (1.0, 0.0);
        for t in 0..s.counts.len() {
            if self.b[i][t] {
                shape += self.split[i][t][l] as f64;
                exposure += s.delta[t][l];
            }
        }
        (shape, zeta + scale * exposure)
    }

    fn eta_log_target(&self, eta: &[f64]) -> f64 {
        let n = self.subjects.len();
        let lik = ordered_sum(n, |i| {
            let s = &self.subjects[i];
            let xe = self.x.dot(i, eta);
            let (mut pos, mut exposure) = (0u64, 0.0);
            for t in 0..s.counts.len() {
                if self.b[i][t] {
                    pos += s.counts[t];
                    exposure += s.delta[t].iter().zip(&self.r[i]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            xe * pos as f64 - xe.exp() * exposure
        });
        lik - 0.5 * eta.iter().map(|e| (e - self.prior.eta_mean).powi(2)).sum::<f64>() / self.prior.eta_var
    }

    fn update_b(&mut self, labels: &[usize], rng: &mut StreamRng) {
        let streams = Streams::new(rng.random());
        let b: Vec<Vec<bool>> = (0..self.subjects.len())
            .into_par_iter()
            .map(|i| {
                let mut r = streams.rng(&[i as u64]);
                sample_b(&self.subjects[i].counts, &self.mu[i], self.p[labels[i]], &mut r)
            })
            .collect();
        self.b = b;
    }

    fn prior_zeta(&self, rng: &mut StreamRng) -> Result<f64> {
        sample_gamma(self.prior.zeta_shape, self.prior.zeta_rate, rng)
    }
}

impl ViewModel for ZipView {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    fn n_components(&self) -> usize {
        self.p.len()
    }

    fn log_likelihood(&self, i: usize, m: usize) -> f64 {
        let (p, zeta) = (self.p[m], self.zeta[m]);
        let counts: f64 = self.subjects[i]
            .counts
            .iter()
            .zip(&self.mu[i])
            .map(|(&w, &mu)| log_pmf(w, p, mu))
            .sum();
        counts + self.n_basis as f64 * zeta.ln() - zeta * self.r[i].iter().sum::<f64>()
    }

    fn push_prior_component(&mut self, rng: &mut StreamRng) -> Result<()> {
        self.p.push(sample_beta(self.prior.p_a, self.prior.p_b, rng)?);
        let z = self.prior_zeta(rng)?;
        self.zeta.push(z);
        Ok(())
    }

    fn retain_components(&mut self, keep: &[usize]) {
        self.p = keep.iter().map(|&k| self.p[k]).collect();
        self.zeta = keep.iter().map(|&k| self.zeta[k]).collect();
    }

    fn update_components(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        // The allocation step integrates b out, so b is refreshed before it is conditioned on.
        self.update_b(labels, rng);
        for m in 0..self.p.len() {
            let (a, b) = self.p_conditional(m, labels);
            self.p[m] = sample_beta(a, b, rng)?;
            let (shape, rate) = self.zeta_conditional(m, labels);
            self.zeta[m] = sample_gamma(shape, rate, rng)?;
        }
        Ok(())
    }

    fn update_shared(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        let streams = Streams::new(rng.random());
        let l = self.n_basis;
        let this = &*self;
        let updated: Vec<(Vec<Vec<u64>>, Vec<f64>)> = (0..this.subjects.len())
            .into_par_iter()
            .map(|i| -> Result<_> {
                let mut rr = streams.rng(&[i as u64]);
                let s = &this.subjects[i];
                let scale = this.x.dot(i, &this.eta).exp();
                let mut split = vec![vec![0u64; l]; s.counts.len()];
                for (t, &w) in s.counts.iter().enumerate() {
                    if w > 0 {
                        let mu_l: Vec<f64> = s.delta[t].iter().zip(&this.r[i]).map(|(d, r)| d * r).collect();
                        split[t] = sample_split(w, &mu_l, &mut rr)?;
                    }
                }
                let zeta = this.zeta[labels[i]];
                let mut r = vec![0.0; l];
                for (k, rk) in r.iter_mut().enumerate() {
                    let (mut shape, mut exposure) = (1.0, 0.0);
                    for t in 0..s.counts.len() {
                        if this.b[i][t] {
                            shape += split[t][k] as f64;
                            exposure += s.delta[t][k];
                        }
                    }
                    *rk = sample_gamma(shape, zeta + scale * exposure, &mut rr)?;
                }
                Ok((split, r))
            })
            .collect::<Result<_>>()?;
        for (i, (split, r)) in updated.into_iter().enumerate() {
            self.split[i] = split;
            self.r[i] = r;
        }
        if let Some(mut prop) = self.eta_proposal.take() {
            let cur = self.eta.clone();
            let new = prop.propose(&cur, rng)?;
            let log_ratio = self.eta_log_target(&new) - self.eta_log_target(&cur);
            let accepted = log_ratio.is_finite() && metropolis_accept(log_ratio, rng);
            if accepted {
                self.eta = new;
            }
            prop.update(&self.eta, accepted)?;
            self.eta_proposal = Some(prop);
        }
        self.refresh_mu();
        Ok(())
    }

    fn sample_prior(&mut self, m: usize, rng: &mut StreamRng) -> Result<()> {
        for e in self.eta.iter_mut() {
            *e = sample_normal(self.prior.eta_mean, self.prior.eta_var.sqrt(), rng)?;
        }
        self.p.clear();
        self.zeta.clear();
        for _ in 0..m {
            self.push_prior_component(rng)?;
        }
        self.refresh_mu();
        Ok(())
    }

    /// Draws the subject coefficients, indicators and split counts along
    /// with the observed counts.
    fn simulate_data(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        let l = self.n_basis;
        for i in 0..self.subjects.len() {
            let zeta = self.zeta[labels[i]];
            let p = self.p[labels[i]];
            let r: Vec<f64> = (0..l).map(|_| sample_gamma(1.0, zeta, rng)).collect::<Result<_>>()?;
            let scale = self.x.dot(i, &self.eta).exp();
            for t in 0..self.subjects[i].counts.len() {
                let b = rng.random::<f64>() >= p;
                let mut y = vec![0u64; l];
                if b {
                    for k in 0..l {
                        y[k] = sample_poisson(scale * r[k] * self.subjects[i].delta[t][k], rng)?;
                    }
                }
                self.subjects[i].counts[t] = y.iter().sum();
                self.b[i][t] = b;
                self.split[i][t] = y;
            }
            self.r[i] = r;
        }
        self.refresh_mu();
        Ok(())
    }

    fn component_params(&self, m: usize) -> Vec<f64> {
        vec![self.p[m], self.zeta[m]]
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

    #[test]
    fn pmf_values() {
        assert_eq!(pointmass_prob(0, 0.3, 0.0), 1.0);
        assert_eq!(pointmass_prob(2, 0.3, 0.0), 0.0);
        assert!((pointmass_prob(0, 0.5, 2f64.ln()) - 0.75).abs() < 1e-15);
        let total: f64 = (0..200).map(|k| pointmass_prob(k, 0.2, 3.5)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indicator_probabilities() {
        assert!((prob_poisson_zero(0.5, 2f64.ln()) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(prob_poisson_zero(0.0, 1.7), 1.0);
        let mut rng = Streams::new(1).rng(&[0]);
        let b = sample_b(&[3, 1, 7], &[0.1, 0.2, 0.3], 0.99, &mut rng);
        assert!(b.iter().all(|&x| x));
        let n = 30_000;
        let hits = (0..n)
            .filter(|_| sample_b(&[0], &[2f64.ln()], 0.5, &mut rng)[0])
            .count() as f64
            / n as f64;
        let se = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
        assert!((hits - 1.0 / 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn split_probabilities() {
        let mut rng = Streams::new(2).rng(&[0]);
        assert_eq!(sample_split(0, &[0.3, 0.7], &mut rng).unwrap(), vec![0, 0]);
        assert!(sample_split(2, &[0.0, 0.0], &mut rng).is_err());
        let n = 40_000;
        let mut freq = [0usize; 3];
        for _ in 0..n {
            let s = sample_split(2, &[0.4, 0.4], &mut rng).unwrap();
            assert_eq!(s.iter().sum::<u64>(), 2);
            freq[s[0] as usize] += 1;
        }
        for (f, p) in freq.iter().zip([0.25, 0.5, 0.25]) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*f as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }

    // p(b) prod_l Poi(Y_l; mu_l) 1[W = b sum Y], summed over b and all Y.
    #[test]
    fn augmented_joint_marginalizes() {
        let ymax = 80u64;
        for &(p, mu1, mu2) in &[(0.3, 0.4, 1.1), (0.05, 2.0, 0.7), (0.9, 0.01, 0.2)] {
            for w in 0..=4u64 {
                let mut total = 0.0;
                for y1 in 0..ymax {
                    for y2 in 0..ymax {
                        let py = (poisson_log_pmf(y1, mu1) + poisson_log_pmf(y2, mu2)).exp();
                        if w == 0 {
                            total += p * py;
                        }
                        if y1 + y2 == w {
                            total += (1.0 - p) * py;
                        }
                    }
                }
                let direct = pointmass_prob(w, p, mu1 + mu2);
                assert!((total - direct).abs() < 1e-12, "w={w}: {total} vs {direct}");
            }
        }
    }

    fn toy(counts: Vec<Vec<u64>>) -> ZipView {
        let spline = SplineBasisSpec::new(SplineKind::ISpline, 2, vec![0.5], (0.0, 1.0)).unwrap();
        let data: Vec<Series<u64>> = counts
            .into_iter()
            .map(|c| {
                let t = (1..=c.len()).map(|k| k as f64 / c.len() as f64).collect();
                Series::new(t, c).unwrap()
            })
            .collect();
        let n = data.len();
        ZipView::new("w", &spline, &data, Covariates::empty(n), ZipPrior::default(), 100).unwrap()
    }

    #[test]
    fn conditional_parameters() {
        let mut v = toy(vec![vec![0, 0, 0], vec![0, 0], vec![1, 0, 2]]);
        v.set_components(vec![0.5], vec![1.0]);
        v.set_b(vec![vec![false; 3], vec![false; 2], vec![true, false, true]]);
        let prior = ZipPrior::default();
        assert_eq!(v.p_conditional(0, &[0, 0, 1]), (5.0 + prior.p_a, prior.p_b));
        for i in 0..3 {
            let (a, b, c) = abc_counts(v.counts(i), v.b(i));
            assert_eq!(a + b + c, v.counts(i).len());
        }
        // No Poisson-attributed observations: shape 1, rate zeta.
        assert_eq!(v.r_conditional(0, 1, 2.5), (1.0, 2.5));
        let increments: f64 = v.increments(1).iter().flatten().sum();
        assert!(increments > 0.0);
        assert!(v.increments(2).iter().flatten().all(|&d| d >= 0.0));
    }

    #[test]
    fn increments_sum_to_basis_value() {
        let v = toy(vec![vec![0, 1, 0, 2]]);
        // The last observation is at the window end, where every I-spline equals 1.
        for l in 0..v.n_basis() {
            let s: f64 = v.increments(0).iter().map(|d| d[l]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_component_parameters() {
        let n = 300;
        let mut v = toy(vec![vec![0; 10]; n]);
        v.set_components(vec![0.2, 0.7], vec![0.5, 3.0]);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut rng = Streams::new(7).rng(&[0]);
        v.simulate_data(&labels, &mut rng).unwrap();
        v.init_latents();
        v.set_components(vec![0.5, 0.5], vec![1.0, 1.0]);
        let mut draws = vec![Vec::new(); 4];
        for it in 0..1500 {
            v.update_components(&labels, &mut rng).unwrap();
            v.update_shared(&labels, &mut rng).unwrap();
            if it >= 500 {
                draws[0].push(v.p(0));
                draws[1].push(v.p(1));
                draws[2].push(v.zeta(0));
                draws[3].push(v.zeta(1));
            }
        }
        for (d, truth) in draws.iter_mut().zip([0.2, 0.7, 0.5, 3.0]) {
            d.sort_by(f64::total_cmp);
            let (lo, hi) = (d[d.len() / 200], d[d.len() * 199 / 200]);
            assert!(lo < truth && truth < hi, "({lo}, {hi}) vs {truth}");
        }
    }

    #[test]
    fn all_point_mass_gives_zero_counts() {
        let mut v = toy(vec![vec![0; 6]; 5]);
        v.set_components(vec![1.0], vec![1.0]);
        let mut rng = Streams::new(8).rng(&[0]);
        v.simulate_data(&[0; 5], &mut rng).unwrap();
        assert!((0..5).all(|i| v.counts(i).iter().all(|&w| w == 0)));
    }
}
