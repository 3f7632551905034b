//! Set partitions, the per-view EPPF given the baseline labels, the joint and
//! conditional partition laws (exact at small `n`, truncated over `m`), and
//! the Monte Carlo prior studies.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::model::{sample_views_given_c0, Hyperparams, PriorOnM};
use crate::numerics::random::sample_categorical_log;
use crate::numerics::special::{ln_gamma, log_sum_exp, poisson_upper_tail};
use crate::numerics::Streams;
use crate::summaries::adjusted_rand_index;
use crate::{Error, Result};

/// Largest `n` for which the exact label-sum evaluators run.
pub const EXACT_MAX_N: usize = 8;
/// Largest `n` accepted by [`enumerate_partitions`].
pub const ENUMERATE_MAX_N: usize = 12;

/// A set partition of `{0, .., n-1}` in canonical form: blocks sorted by
/// their smallest element, elements sorted within blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    /// Restricted growth string: `labels[i]` is the block index of `i`.
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn from_labels<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> Self {
        let mut map = std::collections::HashMap::with_capacity(labels.len());
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = map.len();
            out.push(*map.entry(l).or_insert(next));
        }
        Partition { k: map.len(), labels: out }
    }

    /// Build from explicit blocks; they must be disjoint, nonempty and cover `0..n`.
    pub fn from_blocks(blocks: &[Vec<usize>]) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::domain("empty block"));
            }
            for &i in block {
                if i >= n || labels[i] != usize::MAX {
                    return Err(Error::domain(format!("blocks do not partition 0..{n}")));
                }
                labels[i] = b;
            }
        }
        Ok(Partition::from_labels(&labels))
    }

    /// One block of size `n`.
    pub fn one_block(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    /// `k` contiguous blocks of (nearly) equal size.
    pub fn equal_blocks(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::domain(format!("cannot split {n} units into {k} blocks")));
        }
        Ok(Partition::from_labels(&(0..n).map(|i| i * k / n).collect::<Vec<_>>()))
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Canonical labels (block index of each element).
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &b) in self.labels.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &b in &self.labels {
            out[b] += 1;
        }
        out
    }

    pub fn together(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (b, block) in self.blocks().iter().enumerate() {
            if b > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (x, i) in block.iter().enumerate() {
                if x > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

pub fn partition_from_labels(labels: &[usize]) -> Partition {
    Partition::from_labels(labels)
}

/// Baseline partition together with one partition per view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionFamily {
    pub rho0: Partition,
    pub rhos: Vec<Partition>,
}

impl PartitionFamily {
    pub fn new(rho0: Partition, rhos: Vec<Partition>) -> Result<Self> {
        if rhos.is_empty() {
            return Err(Error::domain("need at least one view partition"));
        }
        for r in &rhos {
            if r.n() != rho0.n() {
                return Err(Error::DimensionMismatch {
                    expected: rho0.n(),
                    found: r.n(),
                });
            }
        }
        Ok(PartitionFamily { rho0, rhos })
    }

    pub fn n(&self) -> usize {
        self.rho0.n()
    }

    fn max_k(&self) -> usize {
        self.rhos.iter().map(Partition::k).chain([self.rho0.k()]).max().unwrap_or(0)
    }
}

/// All set partitions of `n` elements in restricted-growth (lexicographic) order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if n > ENUMERATE_MAX_N {
        return Err(Error::TooLarge(format!("enumeration limited to n <= {ENUMERATE_MAX_N}, got {n}")));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        let k = maxes[n - 1] + 1;
        out.push(Partition { labels: rgs.clone(), k });
        // Advance to the next restricted growth string.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if rgs[i] <= maxes[i - 1] {
                rgs[i] += 1;
                maxes[i] = maxes[i - 1].max(rgs[i]);
                for t in i + 1..n {
                    rgs[t] = 0;
                    maxes[t] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

fn check_exact(n: usize) -> Result<()> {
    if n > EXACT_MAX_N {
        return Err(Error::TooLarge(format!("exact evaluation limited to n <= {EXACT_MAX_N}, got {n}")));
    }
    Ok(())
}

/// `pi(rho_j | c0, m)`: probability that a view induces `rho_j`, given the
/// baseline labels, with the subject weights integrated out.
///
/// Sums over injective maps from blocks of `rho_j` to labels in `0..m`.
/// Labels unused by `c0` are interchangeable and handled by multiplicity.
pub fn eppf_view_given_c0(rho_j: &Partition, c0: &[usize], m: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    if rho_j.n() != c0.len() {
        return Err(Error::DimensionMismatch {
            expected: c0.len(),
            found: rho_j.n(),
        });
    }
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    if let Some(&label) = c0.iter().find(|&&l| l >= m) {
        return Err(Error::LabelOutOfRange { label, m });
    }
    check_exact(c0.len())?;
    if rho_j.k() > m {
        return Ok(0.0);
    }
    let mut used: Vec<usize> = c0.to_vec();
    used.sort_unstable();
    used.dedup();
    let fresh = m - used.len();
    let scale = 1.0 / (m as f64 * alpha + 1.0);
    let blocks = rho_j.blocks();
    // weights[b][u]: block b mapped to the u-th used label; last entry: fresh label.
    let weights: Vec<Vec<f64>> = blocks
        .iter()
        .map(|block| {
            let mut w: Vec<f64> = used
                .iter()
                .map(|&l| {
                    block
                        .iter()
                        .map(|&i| if c0[i] == l { (alpha + 1.0) * scale } else { alpha * scale })
                        .product()
                })
                .collect();
            w.push((alpha * scale).powi(block.len() as i32));
            w
        })
        .collect();

    fn dfs(b: usize, weights: &[Vec<f64>], taken: &mut [bool], fresh_left: usize) -> f64 {
        if b == weights.len() {
            return 1.0;
        }
        let row = &weights[b];
        let n_used = taken.len();
        let mut total = 0.0;
        for u in 0..n_used {
            if !taken[u] {
                taken[u] = true;
                total += row[u] * dfs(b + 1, weights, taken, fresh_left);
                taken[u] = false;
            }
        }
        if fresh_left > 0 {
            total += fresh_left as f64 * row[n_used] * dfs(b + 1, weights, taken, fresh_left - 1);
        }
        total
    }

    let mut taken = vec![false; used.len()];
    Ok(dfs(0, &weights, &mut taken, fresh))
}

/// Smallest `m_max` such that `P(M > m_max) < tol` under `q_M`.
pub fn m_max_for_tail(q_m: PriorOnM, tol: f64) -> usize {
    match q_m {
        PriorOnM::Fixed { m } => m,
        PriorOnM::ShiftedPoisson { lambda } => {
            let mut m = (lambda.ceil() as usize).max(1);
            while poisson_upper_tail(m as u64, lambda) >= tol {
                m += 1;
            }
            m
        }
    }
}

/// Mass of `q_M` above `m_max`.
fn q_tail(q_m: PriorOnM, m_max: usize) -> f64 {
    match q_m {
        PriorOnM::Fixed { m } => {
            if m > m_max {
                1.0
            } else {
                0.0
            }
        }
        PriorOnM::ShiftedPoisson { lambda } => poisson_upper_tail(m_max as u64, lambda),
    }
}

/// `ln` of `P(rho0 | m) = m!/(m-k0)! * Gamma(m a0)/Gamma(n + m a0) * prod_l Gamma(a0 + n_l)/Gamma(a0)`.
fn log_rho0_given_m(rho0: &Partition, m: usize, alpha0: f64) -> f64 {
    let (n, k0) = (rho0.n(), rho0.k());
    if k0 > m {
        return f64::NEG_INFINITY;
    }
    let mf = m as f64;
    let log_falling = ln_gamma(mf + 1.0) - ln_gamma((m - k0) as f64 + 1.0);
    let lg_a0 = ln_gamma(alpha0);
    log_falling + ln_gamma(mf * alpha0) - ln_gamma(n as f64 + mf * alpha0)
        + rho0.block_sizes().iter().map(|&s| ln_gamma(alpha0 + s as f64) - lg_a0).sum::<f64>()
}

/// `P(rho_1, .., rho_J | c0, m)`: joint law of the view partitions given the
/// baseline labels.
///
/// Views share each subject's weight vector, so for `J > 1` this is not the
/// product of per-view EPPFs. Sums the label law over all label vectors
/// inducing the partitions; labels unused by `c0` are handled canonically
/// (introduced in order, weighted by the number of ways to choose them).
pub fn views_given_c0(rhos: &[Partition], c0: &[usize], m: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    if rhos.is_empty() {
        return Err(Error::domain("need at least one view partition"));
    }
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    let n = c0.len();
    for r in rhos {
        if r.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.n() });
        }
    }
    if let Some(&label) = c0.iter().find(|&&l| l >= m) {
        return Err(Error::LabelOutOfRange { label, m });
    }
    check_exact(n)?;
    if rhos.iter().any(|r| r.k() > m) {
        return Ok(0.0);
    }
    let base = Partition::from_labels(c0);
    let k0 = base.k();
    let j = rhos.len();
    let mf = m as f64;
    let unit_log_norm = mf.ln() + ln_gamma(alpha * mf) - ln_gamma(alpha * mf + j as f64 + 1.0);
    let lg: Vec<f64> = (0..=j + 1).map(|c| ln_gamma(alpha + c as f64) - ln_gamma(alpha)).collect();

    struct Walk<'a> {
        rhos: &'a [Partition],
        base: &'a [usize],
        k0: usize,
        fresh_cap: usize,
        lg: &'a [f64],
        unit_log_norm: f64,
        // labels[v][b]: label of block b in view v (0..k0 baseline labels, k0.. fresh).
        labels: Vec<Vec<usize>>,
    }

    impl Walk<'_> {
        fn leaf(&self, fresh: usize) -> f64 {
            let n = self.base.len();
            let mut log_p = n as f64 * self.unit_log_norm;
            let mut counts = vec![0usize; self.k0 + fresh];
            for i in 0..n {
                counts.iter_mut().for_each(|c| *c = 0);
                counts[self.base[i]] += 1;
                for (v, r) in self.rhos.iter().enumerate() {
                    counts[self.labels[v][r.labels()[i]]] += 1;
                }
                log_p += counts.iter().map(|&c| self.lg[c]).sum::<f64>();
            }
            // Number of ways to pick the fresh labels from the unused ones.
            let ways: f64 = (0..fresh).map(|f| (self.fresh_cap - f) as f64).product();
            ways * log_p.exp()
        }

        fn go(&mut self, v: usize, b: usize, fresh: usize) -> f64 {
            if v == self.rhos.len() {
                return self.leaf(fresh);
            }
            if b == self.rhos[v].k() {
                return self.go(v + 1, 0, fresh);
            }
            let mut total = 0.0;
            let limit = self.k0 + fresh + usize::from(fresh < self.fresh_cap);
            for label in 0..limit {
                if self.labels[v][..b].contains(&label) {
                    continue;
                }
                self.labels[v][b] = label;
                let next_fresh = if label == self.k0 + fresh { fresh + 1 } else { fresh };
                total += self.go(v, b + 1, next_fresh);
            }
            total
        }
    }

    let mut walk = Walk {
        rhos,
        base: base.labels(),
        k0,
        fresh_cap: m - k0,
        lg: &lg,
        unit_log_norm,
        labels: rhos.iter().map(|r| vec![0; r.k()]).collect(),
    };
    Ok(walk.go(0, 0, 0))
}

fn log_views_given_rho0(fam: &PartitionFamily, m: usize, alpha: f64) -> Result<f64> {
    Ok(views_given_c0(&fam.rhos, fam.rho0.labels(), m, alpha)?.ln())
}

fn check_family(fam: &PartitionFamily, m_max: usize) -> Result<()> {
    check_exact(fam.n())?;
    if fam.max_k() > m_max {
        return Err(Error::Infeasible(format!(
            "a partition has {} blocks but m_max = {m_max}",
            fam.max_k()
        )));
    }
    Ok(())
}

/// `ln p(rho_1, .., rho_J, rho0)` with the sum over `m` truncated at `m_max`.
///
/// Returns the log-value and an upper bound on the discarded mass.
pub fn joint_partition_logpmf(fam: &PartitionFamily, hyper: &Hyperparams, m_max: usize) -> Result<(f64, f64)> {
    check_family(fam, m_max)?;
    let mut terms = Vec::new();
    for m in fam.max_k().max(1)..=m_max {
        let lq = hyper.log_q_m(m);
        if lq == f64::NEG_INFINITY {
            continue;
        }
        terms.push(lq + log_rho0_given_m(&fam.rho0, m, hyper.alpha0) + log_views_given_rho0(fam, m, hyper.alpha)?);
    }
    let value = if terms.is_empty() { f64::NEG_INFINITY } else { log_sum_exp(&terms) };
    Ok((value, q_tail(hyper.q_m, m_max)))
}

/// `ln p(rho0)` truncated at `m_max`.
pub fn baseline_partition_logpmf(rho0: &Partition, hyper: &Hyperparams, m_max: usize) -> Result<f64> {
    let terms: Vec<f64> = (rho0.k().max(1)..=m_max)
        .map(|m| hyper.log_q_m(m) + log_rho0_given_m(rho0, m, hyper.alpha0))
        .filter(|t| *t > f64::NEG_INFINITY)
        .collect();
    if terms.is_empty() {
        return Err(Error::Infeasible(format!("{} blocks exceed the support up to m_max = {m_max}", rho0.k())));
    }
    Ok(log_sum_exp(&terms))
}

/// `ln p(rho_1, .., rho_J | rho0)`, numerator and denominator truncated at `m_max`.
pub fn conditional_partition_logpmf(fam: &PartitionFamily, hyper: &Hyperparams, m_max: usize) -> Result<f64> {
    let (num, _) = joint_partition_logpmf(fam, hyper, m_max)?;
    Ok(num - baseline_partition_logpmf(&fam.rho0, hyper, m_max)?)
}

/// Posterior of `M` given `rho0` on `k0..=m_max`, as `(m, probability)` pairs.
pub fn m_given_rho0(rho0: &Partition, hyper: &Hyperparams, m_max: usize) -> Result<Vec<(usize, f64)>> {
    let ms: Vec<usize> = (rho0.k().max(1)..=m_max).collect();
    let logs: Vec<f64> = ms
        .iter()
        .map(|&m| hyper.log_q_m(m) + log_rho0_given_m(rho0, m, hyper.alpha0))
        .collect();
    if logs.iter().all(|l| *l == f64::NEG_INFINITY) {
        return Err(Error::Infeasible(format!("{} blocks exceed the support up to m_max = {m_max}", rho0.k())));
    }
    let z = log_sum_exp(&logs);
    Ok(ms.into_iter().zip(logs.iter().map(|l| (l - z).exp())).collect())
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    fn from_mean(xs: &[f64]) -> Self {
        let s = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / s;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            se: (var / s).sqrt(),
        }
    }

    /// Ratio `sum(a) / sum(b)` with a delta-method standard error.
    fn from_ratio(a: &[f64], b: &[f64]) -> Self {
        let s = a.len() as f64;
        let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
        if sb == 0.0 {
            return Estimate {
                value: f64::NAN,
                se: f64::NAN,
            };
        }
        let r = sa / sb;
        let mean_b = sb / s;
        let resid: f64 = a.iter().zip(b).map(|(x, y)| (x - r * y).powi(2)).sum();
        let se = if a.len() > 1 {
            (resid / (s * (s - 1.0))).sqrt() / mean_b
        } else {
            0.0
        };
        Estimate { value: r, se }
    }
}

/// One row of the prior study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorCurvePoint {
    pub alpha: f64,
    /// `P(c_0i = c_ji)`.
    pub baseline_agreement: Estimate,
    /// `P(c_ji = c_ji' | c_0i = c_0i')`.
    pub cocluster_given_equal: Estimate,
    /// `P(c_ji = c_ji' | c_0i != c_0i')`.
    pub cocluster_given_unequal: Estimate,
    /// `E[ARI(c_j, c_0)]`.
    pub ari: Estimate,
}

/// Settings for [`mc_prior_curves`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorStudy {
    pub n: usize,
    pub n_views: usize,
    pub m: usize,
    pub alpha0: f64,
    pub samples: usize,
}

/// Forward-simulate the prior with `M = m` fixed and estimate, for each
/// `alpha`, the agreement and co-clustering probabilities and the expected ARI.
///
/// Estimates pool over all subjects, subject pairs and views.
pub fn mc_prior_curves(study: &PriorStudy, alphas: &[f64], streams: &Streams) -> Result<Vec<PriorCurvePoint>> {
    let PriorStudy {
        n,
        n_views,
        m,
        alpha0,
        samples,
    } = *study;
    if samples == 0 || n < 2 || n_views == 0 {
        return Err(Error::domain("prior study needs samples >= 1, n >= 2 and J >= 1"));
    }
    alphas
        .iter()
        .enumerate()
        .map(|(a_idx, &alpha)| {
            let hyper = Hyperparams::fixed(alpha0, alpha, m)?;
            let rows: Vec<[f64; 6]> = (0..samples)
                .into_par_iter()
                .map(|s| {
                    let mut rng = streams.rng(&[a_idx as u64, s as u64]);
                    one_prior_sample(n, n_views, &hyper, &mut rng)
                })
                .collect::<Result<_>>()?;
            let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
            Ok(PriorCurvePoint {
                alpha,
                baseline_agreement: Estimate::from_mean(&col(0)),
                cocluster_given_equal: Estimate::from_ratio(&col(1), &col(2)),
                cocluster_given_unequal: Estimate::from_ratio(&col(3), &col(4)),
                ari: Estimate::from_mean(&col(5)),
            })
        })
        .collect()
}

fn one_prior_sample<R: Rng + ?Sized>(n: usize, n_views: usize, hyper: &Hyperparams, rng: &mut R) -> Result<[f64; 6]> {
    let draw = crate::model::sample_prior_model1(n, n_views, hyper, rng)?;
    let a = &draw.alloc;
    let rho0 = Partition::from_labels(&a.c0);
    let mut agree = 0usize;
    let (mut eq_hit, mut eq_tot, mut ne_hit, mut ne_tot) = (0usize, 0usize, 0usize, 0usize);
    let mut ari = 0.0;
    for c in &a.c {
        agree += c.iter().zip(&a.c0).filter(|(x, y)| x == y).count();
        for i in 0..n {
            for k in i + 1..n {
                let hit = (c[i] == c[k]) as usize;
                if a.c0[i] == a.c0[k] {
                    eq_tot += 1;
                    eq_hit += hit;
                } else {
                    ne_tot += 1;
                    ne_hit += hit;
                }
            }
        }
        ari += adjusted_rand_index(&Partition::from_labels(c), &rho0)?;
    }
    let j = n_views as f64;
    Ok([
        agree as f64 / (n as f64 * j),
        eq_hit as f64,
        eq_tot as f64,
        ne_hit as f64,
        ne_tot as f64,
        ari / j,
    ])
}

/// Estimate `P(rho_1 = .. = rho_J | rho0)` by forward simulation from a
/// canonical baseline labelling of `rho0`; with `J = 1` the event is
/// `rho_1 = rho0`.
///
/// Under a random `M`, each replicate first draws `M` from its posterior
/// given `rho0`, truncated where the prior tail falls below `1e-14`.
pub fn mc_equal_partition_prob(
    rho0: &Partition,
    hyper: &Hyperparams,
    n_views: usize,
    samples: usize,
    streams: &Streams,
) -> Result<Estimate> {
    if samples == 0 || n_views == 0 {
        return Err(Error::domain("need samples >= 1 and J >= 1"));
    }
    let m_max = m_max_for_tail(hyper.q_m, 1e-14).max(rho0.k());
    let post = m_given_rho0(rho0, hyper, m_max)?;
    let log_w: Vec<f64> = post.iter().map(|(_, p)| p.ln()).collect();
    let c0 = rho0.labels();
    let hits: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = streams.rng(&[s as u64]);
            let m = post[sample_categorical_log(&log_w, &mut rng)].0;
            let (c, _) = sample_views_given_c0(c0, n_views, m, hyper.alpha, &mut rng)?;
            let first = Partition::from_labels(&c[0]);
            let equal = if n_views == 1 {
                first == *rho0
            } else {
                c[1..].iter().all(|row| Partition::from_labels(row) == first)
            };
            Ok(if equal { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_mean(&hits))
}
