//! Hyperparameters, allocation/weight state, prior samplers and the
//! closed-form conditional law of view labels given the baseline.
//!
//! Labels are zero-based throughout (`0..m`); files written by the CLI use
//! one-based labels.

use rand::Rng;

use crate::numerics::random::{
    sample_categorical, sample_dirichlet, sample_gamma, sample_poisson, sample_positive_gamma,
};
use crate::numerics::special::{ln_gamma, poisson_log_pmf};
use crate::{Error, Result};

/// Prior on the number of mixture components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorOnM {
    /// `M - 1 ~ Poisson(lambda)`.
    ShiftedPoisson { lambda: f64 },
    /// `M` fixed.
    Fixed { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Baseline Dirichlet concentration.
    pub alpha0: f64,
    /// View-level Dirichlet concentration.
    pub alpha: f64,
    pub q_m: PriorOnM,
}

impl Hyperparams {
    pub fn new(alpha0: f64, alpha: f64, q_m: PriorOnM) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!(
                "concentrations must be positive, got alpha0 = {alpha0}, alpha = {alpha}"
            )));
        }
        match q_m {
            PriorOnM::ShiftedPoisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                return Err(Error::domain(format!("Poisson rate must be positive, got {lambda}")));
            }
            PriorOnM::Fixed { m: 0 } => return Err(Error::domain("fixed M must be at least 1")),
            _ => {}
        }
        Ok(Hyperparams { alpha0, alpha, q_m })
    }

    pub fn shifted_poisson(alpha0: f64, alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(alpha0, alpha, PriorOnM::ShiftedPoisson { lambda })
    }

    pub fn fixed(alpha0: f64, alpha: f64, m: usize) -> Result<Self> {
        Self::new(alpha0, alpha, PriorOnM::Fixed { m })
    }

    /// `ln q_M(m)`.
    pub fn log_q_m(&self, m: usize) -> f64 {
        match self.q_m {
            PriorOnM::ShiftedPoisson { lambda } => {
                if m == 0 {
                    f64::NEG_INFINITY
                } else {
                    poisson_log_pmf(m as u64 - 1, lambda)
                }
            }
            PriorOnM::Fixed { m: fixed } => {
                if m == fixed {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample_m<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match self.q_m {
            PriorOnM::ShiftedPoisson { lambda } => Ok(1 + sample_poisson(lambda, rng)? as usize),
            PriorOnM::Fixed { m } => Ok(m),
        }
    }
}

/// Baseline labels `c0` and view labels `c[j]` over `m` components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationState {
    pub m: usize,
    pub c0: Vec<usize>,
    pub c: Vec<Vec<usize>>,
}

impl AllocationState {
    pub fn new(m: usize, c0: Vec<usize>, c: Vec<Vec<usize>>) -> Result<Self> {
        let st = AllocationState { m, c0, c };
        st.validate()?;
        Ok(st)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::domain("need at least one component"));
        }
        if self.c0.is_empty() {
            return Err(Error::domain("need at least one subject"));
        }
        if self.c.is_empty() {
            return Err(Error::domain("need at least one view"));
        }
        let n = self.c0.len();
        for row in &self.c {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
        }
        for &label in self.c0.iter().chain(self.c.iter().flatten()) {
            if label >= self.m {
                return Err(Error::LabelOutOfRange { label, m: self.m });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.c0.len()
    }

    pub fn n_views(&self) -> usize {
        self.c.len()
    }

    /// Baseline occupancy counts `n_{0m}`.
    pub fn baseline_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m];
        for &l in &self.c0 {
            counts[l] += 1;
        }
        counts
    }

    /// For subject `i`, the number of views allocating it to each component.
    pub fn subject_view_counts(&self, i: usize) -> Vec<usize> {
        let mut counts = vec![0; self.m];
        for row in &self.c {
            counts[row[i]] += 1;
        }
        counts
    }

    /// Number of distinct baseline labels.
    pub fn k_baseline(&self) -> usize {
        distinct(&self.c0, self.m)
    }

    pub fn k_view(&self, j: usize) -> usize {
        distinct(&self.c[j], self.m)
    }

    /// Per-component flag: used by `c0` or by any view.
    pub fn allocated_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m];
        for &l in self.c0.iter().chain(self.c.iter().flatten()) {
            mask[l] = true;
        }
        mask
    }
}

fn distinct(labels: &[usize], m: usize) -> usize {
    let mut seen = vec![false; m];
    let mut k = 0;
    for &l in labels {
        if !seen[l] {
            seen[l] = true;
            k += 1;
        }
    }
    k
}

/// Unnormalized weights and their auxiliary variables.
///
/// Row totals `t0 = sum_m s0[m]` and `t[i] = sum_m s[i][m]` are cached and
/// kept consistent by the setters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    s0: Vec<f64>,
    s: Vec<Vec<f64>>,
    pub u0: f64,
    pub u: Vec<f64>,
    t0: f64,
    t: Vec<f64>,
}

impl WeightState {
    pub fn new(s0: Vec<f64>, s: Vec<Vec<f64>>, u0: f64, u: Vec<f64>) -> Result<Self> {
        let m = s0.len();
        if m == 0 {
            return Err(Error::domain("need at least one component"));
        }
        if s.len() != u.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                found: u.len(),
            });
        }
        for row in &s {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
        }
        let positive = |x: &f64| *x > 0.0 && x.is_finite();
        if !s0.iter().all(positive) || !s.iter().flatten().all(positive) || !positive(&u0) || !u.iter().all(positive) {
            return Err(Error::domain("weights and auxiliary variables must be strictly positive"));
        }
        let t0 = s0.iter().sum();
        let t = s.iter().map(|r| r.iter().sum()).collect();
        Ok(WeightState { s0, s, u0, u, t0, t })
    }

    pub fn m(&self) -> usize {
        self.s0.len()
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn s(&self, i: usize) -> &[f64] {
        &self.s[i]
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t[i]
    }

    pub fn set_s0(&mut self, s0: Vec<f64>) {
        assert_eq!(s0.len(), self.m());
        self.t0 = s0.iter().sum();
        self.s0 = s0;
    }

    pub fn set_s(&mut self, i: usize, row: Vec<f64>) {
        assert_eq!(row.len(), self.m());
        self.t[i] = row.iter().sum();
        self.s[i] = row;
    }

    /// Normalized baseline weights `omega0`.
    pub fn omega0(&self) -> Vec<f64> {
        self.s0.iter().map(|x| x / self.t0).collect()
    }

    pub fn omega(&self, i: usize) -> Vec<f64> {
        self.s[i].iter().map(|x| x / self.t[i]).collect()
    }

    /// Keep the listed components in the given order, then append the
    /// `extra_s0` baseline weights and `extra_s[i]` subject weights.
    pub fn reindex(&mut self, keep: &[usize], extra_s0: &[f64], extra_s: &[Vec<f64>]) {
        let mut s0: Vec<f64> = keep.iter().map(|&k| self.s0[k]).collect();
        s0.extend_from_slice(extra_s0);
        self.t0 = s0.iter().sum();
        self.s0 = s0;
        for i in 0..self.s.len() {
            let mut row: Vec<f64> = keep.iter().map(|&k| self.s[i][k]).collect();
            row.extend_from_slice(&extra_s[i]);
            self.t[i] = row.iter().sum();
            self.s[i] = row;
        }
    }

    /// Largest absolute discrepancy between cached and recomputed totals.
    pub fn total_drift(&self) -> f64 {
        let d0 = (self.t0 - self.s0.iter().sum::<f64>()).abs();
        self.s
            .iter()
            .zip(&self.t)
            .map(|(r, t)| (t - r.iter().sum::<f64>()).abs())
            .fold(d0, f64::max)
    }

    /// `ln psi(u) = -alpha0 ln(u0 + 1) - alpha sum_i ln(u_i + 1)`.
    pub fn log_psi(&self, hyper: &Hyperparams) -> f64 {
        -hyper.alpha0 * self.u0.ln_1p() - hyper.alpha * self.u.iter().map(|u| u.ln_1p()).sum::<f64>()
    }
}

/// Laplace transform of the Gamma(a, 1) density at `u`: `(u + 1)^(-a)`.
pub fn psi(u: f64, a: f64) -> Result<f64> {
    if !(u >= 0.0) || !(a > 0.0) {
        return Err(Error::domain(format!("psi requires u >= 0 and a > 0, got ({u}, {a})")));
    }
    Ok((-a * u.ln_1p()).exp())
}

/// `Gamma(a + n_j) / Gamma(a) * (u + 1)^(-(a + n_j))`.
pub fn kappa(n_j: usize, u: f64, a: f64) -> Result<f64> {
    if !(u >= 0.0) || !(a > 0.0) {
        return Err(Error::domain(format!("kappa requires u >= 0 and a > 0, got ({u}, {a})")));
    }
    let nj = n_j as f64;
    Ok((ln_gamma(a + nj) - ln_gamma(a) - (a + nj) * u.ln_1p()).exp())
}

/// A draw from the hierarchical prior with its normalized weights.
#[derive(Debug, Clone)]
pub struct Model1Draw {
    pub alloc: AllocationState,
    pub omega0: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
}

/// Forward draw from the normalized-weights (Dirichlet) form of the prior.
pub fn sample_prior_model1<R: Rng + ?Sized>(n: usize, n_views: usize, hyper: &Hyperparams, rng: &mut R) -> Result<Model1Draw> {
    let m = hyper.sample_m(rng)?;
    sample_model1_given_m(n, n_views, m, hyper, rng)
}

pub fn sample_model1_given_m<R: Rng + ?Sized>(
    n: usize,
    n_views: usize,
    m: usize,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<Model1Draw> {
    if n == 0 || n_views == 0 {
        return Err(Error::domain("need n >= 1 and J >= 1"));
    }
    let omega0 = sample_dirichlet(&vec![hyper.alpha0; m], rng)?;
    let c0: Vec<usize> = (0..n).map(|_| sample_categorical(&omega0, rng)).collect();
    let (c, omega) = sample_views_given_c0(&c0, n_views, m, hyper.alpha, rng)?;
    Ok(Model1Draw {
        alloc: AllocationState { m, c0, c },
        omega0,
        omega,
    })
}

/// View labels given the baseline: `omega_i ~ Dir(alpha + 1{c0_i})`, `c_ji ~ omega_i`.
pub fn sample_views_given_c0<R: Rng + ?Sized>(
    c0: &[usize],
    n_views: usize,
    m: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    let n = c0.len();
    let mut omega = Vec::with_capacity(n);
    let mut c = vec![vec![0usize; n]; n_views];
    let mut conc = vec![alpha; m];
    for (i, &l) in c0.iter().enumerate() {
        conc[l] += 1.0;
        let w = sample_dirichlet(&conc, rng)?;
        conc[l] -= 1.0;
        for row in c.iter_mut() {
            row[i] = sample_categorical(&w, rng);
        }
        omega.push(w);
    }
    Ok((c, omega))
}

/// Forward draw from the unnormalized-weights form of the prior, including
/// the auxiliary variables `u0 ~ Gamma(n, t0)` and `u_i ~ Gamma(J, t_i)`.
pub fn sample_prior_model2<R: Rng + ?Sized>(
    n: usize,
    n_views: usize,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<(AllocationState, WeightState)> {
    let m = hyper.sample_m(rng)?;
    sample_model2_given_m(n, n_views, m, hyper, rng)
}

pub fn sample_model2_given_m<R: Rng + ?Sized>(
    n: usize,
    n_views: usize,
    m: usize,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<(AllocationState, WeightState)> {
    if n == 0 || n_views == 0 {
        return Err(Error::domain("need n >= 1 and J >= 1"));
    }
    let s0 = (0..m)
        .map(|_| sample_positive_gamma(hyper.alpha0, 1.0, rng))
        .collect::<Result<Vec<_>>>()?;
    let c0: Vec<usize> = (0..n).map(|_| sample_categorical(&s0, rng)).collect();
    let mut s = Vec::with_capacity(n);
    let mut c = vec![vec![0usize; n]; n_views];
    for (i, &l) in c0.iter().enumerate() {
        let row = (0..m)
            .map(|k| sample_positive_gamma(hyper.alpha + if k == l { 1.0 } else { 0.0 }, 1.0, rng))
            .collect::<Result<Vec<_>>>()?;
        for view in c.iter_mut() {
            view[i] = sample_categorical(&row, rng);
        }
        s.push(row);
    }
    let t0: f64 = s0.iter().sum();
    let u0 = sample_gamma(n as f64, t0, rng)?.max(f64::MIN_POSITIVE);
    let u = s
        .iter()
        .map(|r| Ok(sample_gamma(n_views as f64, r.iter().sum(), rng)?.max(f64::MIN_POSITIVE)))
        .collect::<Result<Vec<_>>>()?;
    Ok((AllocationState { m, c0, c }, WeightState::new(s0, s, u0, u)?))
}

/// `ln P(c_1, ..., c_J | c0, alpha, m)` with the Dirichlet weights integrated out.
pub fn cond_label_logprob(state: &AllocationState, alpha: f64) -> Result<f64> {
    state.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    let m = state.m;
    let mf = m as f64;
    let j = state.n_views() as f64;
    let n = state.n() as f64;
    let lg_alpha = ln_gamma(alpha);
    let log_z = n * (mf.ln() + ln_gamma(alpha * mf) - mf * lg_alpha - ln_gamma(alpha * mf + j + 1.0));
    let mut total = log_z;
    let mut counts = vec![0usize; m];
    for i in 0..state.n() {
        counts.iter_mut().for_each(|c| *c = 0);
        counts[state.c0[i]] += 1;
        for row in &state.c {
            counts[row[i]] += 1;
        }
        for &cnt in &counts {
            total += if cnt == 0 { lg_alpha } else { ln_gamma(alpha + cnt as f64) };
        }
    }
    Ok(total)
}

/// Labels of two subjects in two views and at baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelPattern2x2 {
    /// View 1, subject 1.
    pub c11: usize,
    /// View 1, subject 2.
    pub c12: usize,
    /// View 2, subject 1.
    pub c21: usize,
    /// View 2, subject 2.
    pub c22: usize,
    pub c01: usize,
    pub c02: usize,
}

/// Per-unit agreement class of a (baseline, view 1, view 2) label triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TripleClass {
    AllEqual,
    AllDistinct,
    OnePair,
}

fn classify(c0: usize, c1: usize, c2: usize) -> TripleClass {
    match (c0 == c1, c0 == c2, c1 == c2) {
        (true, true, _) => TripleClass::AllEqual,
        (false, false, false) => TripleClass::AllDistinct,
        _ => TripleClass::OnePair,
    }
}

impl LabelPattern2x2 {
    /// `(n_A, n_B, n_C)`: units with all three labels equal, all distinct, or
    /// exactly one coinciding pair.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut out = (0, 0, 0);
        for (c0, c1, c2) in [(self.c01, self.c11, self.c21), (self.c02, self.c12, self.c22)] {
            match classify(c0, c1, c2) {
                TripleClass::AllEqual => out.0 += 1,
                TripleClass::AllDistinct => out.1 += 1,
                TripleClass::OnePair => out.2 += 1,
            }
        }
        out
    }

    pub fn to_state(&self, m: usize) -> Result<AllocationState> {
        AllocationState::new(
            m,
            vec![self.c01, self.c02],
            vec![vec![self.c11, self.c12], vec![self.c21, self.c22]],
        )
    }
}

/// Closed form of the label law for two subjects and two views.
pub fn cond_label_prob_2x2(p: &LabelPattern2x2, alpha: f64, m: usize) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    for label in [p.c11, p.c12, p.c21, p.c22, p.c01, p.c02] {
        if label >= m {
            return Err(Error::LabelOutOfRange { label, m });
        }
    }
    let (na, nb, nc) = p.counts();
    let a = alpha;
    let am = alpha * m as f64;
    let num = ((a + 2.0) * (a + 1.0)).powi(na as i32) * (a * a).powi(nb as i32) * ((a + 1.0) * a).powi(nc as i32);
    let den = ((am + 2.0) * (am + 1.0)).powi(2);
    Ok(num / den)
}

fn check_alpha_m(alpha: f64, m: usize, min_m: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    if m < min_m {
        return Err(Error::domain(format!("m must be at least {min_m}, got {m}")));
    }
    Ok(())
}

/// `P(c11 = c12, c21 = c22 | c01 = c02)`: the two subjects are co-clustered
/// in both views, given that they share a baseline label.
pub fn cocluster_prob_given_equal(alpha: f64, m: usize) -> Result<f64> {
    check_alpha_m(alpha, m, 1)?;
    let a = alpha;
    let mf = m as f64;
    let am = a * mf;
    let num = ((a + 2.0) * (a + 1.0)).powi(2)
        + 3.0 * (mf - 1.0) * ((a + 1.0) * a).powi(2)
        + (mf - 1.0) * (mf - 2.0) * (a * a).powi(2);
    Ok(num / ((am + 2.0) * (am + 1.0)).powi(2))
}

/// As [`cocluster_prob_given_equal`] but for subjects with different baseline labels.
///
/// The numerator collects, over shared view labels `(s, t)`, the cases
/// where both units have one coinciding pair (`s = t` off both baselines,
/// or `(s, t)` equal to the two baselines in some order), and the mixed
/// one-pair/all-distinct cases that arise when exactly one view label hits a
/// baseline.
pub fn cocluster_prob_given_unequal(alpha: f64, m: usize) -> Result<f64> {
    check_alpha_m(alpha, m, 2)?;
    let a = alpha;
    let mf = m as f64;
    let am = a * mf;
    let num = 2.0 * (a + 2.0) * (a + 1.0).powi(2) * a
        + mf * ((a + 1.0) * a).powi(2)
        + 4.0 * (mf - 2.0) * (a + 1.0) * a.powi(3)
        + (mf - 2.0) * (mf - 3.0) * (a * a).powi(2);
    Ok(num / ((am + 2.0) * (am + 1.0)).powi(2))
}
