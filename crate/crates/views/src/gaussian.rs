//! Univariate Gaussian view with Normal-Inverse-Gamma components, plus the
//! two-view synthetic designs.

use latmod_core::mcmc::ViewModel;
use latmod_core::model::sample_views_given_c0;
use latmod_core::numerics::random::{sample_inv_gamma, sample_normal};
use latmod_core::numerics::StreamRng;
use latmod_core::{Error, Result};
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `mu | sigma2 ~ N(m0, sigma2 / k0)`, `sigma2 ~ Inv-Gamma(a0, b0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NigPrior {
    pub m0: f64,
    pub k0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        NigPrior {
            m0: 0.0,
            k0: 1.0,
            a0: 3.0,
            b0: 2.0,
        }
    }
}

impl NigPrior {
    pub fn new(m0: f64, k0: f64, a0: f64, b0: f64) -> Result<Self> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !m0.is_finite() || !pos(k0) || !pos(a0) || !pos(b0) {
            return Err(Error::Domain(format!("invalid NIG prior ({m0}, {k0}, {a0}, {b0})")));
        }
        Ok(NigPrior { m0, k0, a0, b0 })
    }

    /// Conjugate posterior given the observations.
    pub fn posterior(&self, ys: &[f64]) -> NigPrior {
        let n = ys.len() as f64;
        if ys.is_empty() {
            return *self;
        }
        let mean = ys.iter().sum::<f64>() / n;
        let ss: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        self.posterior_from_stats(n, mean, ss)
    }

    /// Posterior from count, sample mean and centred sum of squares.
    pub fn posterior_from_stats(&self, n: f64, mean: f64, ss: f64) -> NigPrior {
        if n == 0.0 {
            return *self;
        }
        let k = self.k0 + n;
        NigPrior {
            m0: (self.k0 * self.m0 + n * mean) / k,
            k0: k,
            a0: self.a0 + 0.5 * n,
            b0: self.b0 + 0.5 * (ss + self.k0 * n * (mean - self.m0).powi(2) / k),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<GaussComponent> {
        let sigma2 = sample_inv_gamma(self.a0, self.b0, rng)?;
        let mu = sample_normal(self.m0, (sigma2 / self.k0).sqrt(), rng)?;
        Ok(GaussComponent { mu, sigma2 })
    }

    /// Joint log-density of `(mu, sigma2)`.
    pub fn log_density(&self, c: &GaussComponent) -> f64 {
        let lg = latmod_core::numerics::log_gamma(self.a0).unwrap_or(f64::NAN);
        let ig = self.a0 * self.b0.ln() - lg - (self.a0 + 1.0) * c.sigma2.ln() - self.b0 / c.sigma2;
        let v = c.sigma2 / self.k0;
        ig - 0.5 * (LN_2PI + v.ln()) - 0.5 * (c.mu - self.m0).powi(2) / v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussComponent {
    pub mu: f64,
    pub sigma2: f64,
}

/// Gaussian log-density of `y`.
pub fn log_likelihood(y: f64, c: &GaussComponent) -> f64 {
    -0.5 * (LN_2PI + c.sigma2.ln()) - 0.5 * (y - c.mu).powi(2) / c.sigma2
}

/// One observation per subject, NIG components.
#[derive(Debug, Clone)]
pub struct GaussianView {
    name: String,
    y: Vec<f64>,
    prior: NigPrior,
    comps: Vec<GaussComponent>,
}

impl GaussianView {
    pub fn new(name: impl Into<String>, y: Vec<f64>, prior: NigPrior) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Gaussian view data must be finite".into()));
        }
        Ok(GaussianView {
            name: name.into(),
            y,
            prior,
            comps: Vec::new(),
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }

    pub fn components(&self) -> &[GaussComponent] {
        &self.comps
    }

    pub fn set_components(&mut self, comps: Vec<GaussComponent>) {
        self.comps = comps;
    }
}

impl ViewModel for GaussianView {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_subjects(&self) -> usize {
        self.y.len()
    }

    fn n_components(&self) -> usize {
        self.comps.len()
    }

    fn log_likelihood(&self, i: usize, m: usize) -> f64 {
        log_likelihood(self.y[i], &self.comps[m])
    }

    fn push_prior_component(&mut self, rng: &mut StreamRng) -> Result<()> {
        self.comps.push(self.prior.sample(rng)?);
        Ok(())
    }

    fn retain_components(&mut self, keep: &[usize]) {
        self.comps = keep.iter().map(|&k| self.comps[k]).collect();
    }

    fn update_components(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        let m = self.comps.len();
        let mut n = vec![0.0; m];
        let mut sum = vec![0.0; m];
        for (&l, &y) in labels.iter().zip(&self.y) {
            n[l] += 1.0;
            sum[l] += y;
        }
        let mut ss = vec![0.0; m];
        for (&l, &y) in labels.iter().zip(&self.y) {
            ss[l] += (y - sum[l] / n[l]).powi(2);
        }
        for k in 0..m {
            let mean = if n[k] > 0.0 { sum[k] / n[k] } else { 0.0 };
            self.comps[k] = self.prior.posterior_from_stats(n[k], mean, ss[k]).sample(rng)?;
        }
        Ok(())
    }

    fn sample_prior(&mut self, m: usize, rng: &mut StreamRng) -> Result<()> {
        self.comps = (0..m).map(|_| self.prior.sample(rng)).collect::<Result<_>>()?;
        Ok(())
    }

    fn simulate_data(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        for (y, &l) in self.y.iter_mut().zip(labels) {
            let c = self.comps[l];
            *y = sample_normal(c.mu, c.sigma2.sqrt(), rng)?;
        }
        Ok(())
    }

    fn component_params(&self, m: usize) -> Vec<f64> {
        vec![self.comps[m].mu, self.comps[m].sigma2]
    }

    fn box_clone(&self) -> Box<dyn ViewModel> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Overlap designs for the two-view simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Views agree on one third of the subjects, two clusters each.
    A,
    /// Views agree on two thirds; three clusters in view 1, two in view 2.
    B,
    /// Identical three-cluster partitions.
    C,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            other => Err(Error::Config(format!("unknown scenario '{other}' (expected a, b or c)"))),
        }
    }
}

/// Simulated multi-view Gaussian data with its generating labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianData {
    /// `y[j][i]`.
    pub y: Vec<Vec<f64>>,
    /// True view labels `c[j][i]`.
    pub c: Vec<Vec<usize>>,
    /// True baseline labels, when the design defines them.
    pub c0: Option<Vec<usize>>,
    /// Per-view component parameters used for simulation.
    pub components: Vec<Vec<GaussComponent>>,
}

fn thirds(n: usize) -> Result<Vec<usize>> {
    if n == 0 || n % 3 != 0 {
        return Err(Error::Domain(format!("n must be a positive multiple of 3, got {n}")));
    }
    Ok((0..n).map(|i| 3 * i / n).collect())
}

fn draw_views(c: &[Vec<usize>], comps: &[Vec<GaussComponent>], rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
    c.iter()
        .zip(comps)
        .map(|(labels, cs)| {
            labels
                .iter()
                .map(|&l| sample_normal(cs[l].mu, cs[l].sigma2.sqrt(), rng))
                .collect()
        })
        .collect()
}

fn unit(mus: &[f64], sigma2: f64) -> Vec<GaussComponent> {
    mus.iter().map(|&mu| GaussComponent { mu, sigma2 }).collect()
}

/// Two Gaussian views with fixed label patterns over subject thirds, means
/// in `{-3, 0, 3}` and unit variances.
pub fn simulate_scenarios(scenario: Scenario, n: usize, rng: &mut StreamRng) -> Result<GaussianData> {
    let third = thirds(n)?;
    let (p1, p2, mu1, mu2): ([usize; 3], [usize; 3], &[f64], &[f64]) = match scenario {
        Scenario::A => ([0, 0, 1], [0, 1, 0], &[-3.0, 0.0], &[-3.0, 3.0]),
        Scenario::B => ([0, 1, 2], [0, 1, 0], &[-3.0, 0.0, 3.0], &[-3.0, 3.0]),
        Scenario::C => ([0, 1, 2], [0, 1, 2], &[-3.0, 0.0, 3.0], &[-3.0, 0.0, 3.0]),
    };
    let c1: Vec<usize> = third.iter().map(|&t| p1[t]).collect();
    let c2: Vec<usize> = third.iter().map(|&t| p2[t]).collect();
    let components = vec![unit(mu1, 1.0), unit(mu2, 1.0)];
    let c = vec![c1, c2];
    let y = draw_views(&c, &components, rng)?;
    let c0 = (scenario == Scenario::C).then(|| c[0].clone());
    Ok(GaussianData { y, c, c0, components })
}

/// Two views from five shared components (means evenly spaced on [-3, 3],
/// variance 0.5); the baseline puts equal thirds on components 1, 3 and 5
/// and view labels follow the hierarchical prior with concentration `alpha`.
pub fn simulate_sensitivity(n: usize, alpha: f64, rng: &mut StreamRng) -> Result<GaussianData> {
    let c0: Vec<usize> = thirds(n)?.into_iter().map(|t| 2 * t).collect();
    let mus: Vec<f64> = (0..5).map(|k| -3.0 + 1.5 * k as f64).collect();
    let comps = unit(&mus, 0.5);
    let (c, _) = sample_views_given_c0(&c0, 2, 5, alpha, rng)?;
    let components = vec![comps.clone(), comps];
    let y = draw_views(&c, &components, rng)?;
    Ok(GaussianData {
        y,
        c,
        c0: Some(c0),
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use latmod_core::numerics::{mean_var, Streams};

    #[test]
    fn density_values() {
        let c = GaussComponent { mu: 1.0, sigma2: 1.0 };
        assert!((log_likelihood(1.0, &c) + 0.5 * LN_2PI).abs() < 1e-15);
        assert!((log_likelihood(2.0, &c) + 0.5 * LN_2PI + 0.5).abs() < 1e-15);
        assert_eq!(log_likelihood(1.3, &c), log_likelihood(0.7, &c));
    }

    #[test]
    fn conjugate_update_single_observation() {
        let p = NigPrior::new(0.0, 1.0, 3.0, 2.0).unwrap().posterior(&[4.0]);
        assert_eq!(p.m0, 2.0);
        assert_eq!(p.k0, 2.0);
        assert_eq!(p.a0, 3.5);
        assert_eq!(p.b0, 2.0 + 0.5 * 16.0 / 2.0);
        let prior = NigPrior::default();
        assert_eq!(prior.posterior(&[]), prior);
        assert!(NigPrior::new(0.0, 0.0, 1.0, 1.0).is_err());
    }

    // Grid oracle: normalized posterior density vs normalized likelihood x prior.
    fn grid_tv(ys: &[f64], prior: &NigPrior) -> f64 {
        let post = prior.posterior(ys);
        let (nm, ns) = (200, 200);
        let mut a = Vec::with_capacity(nm * ns);
        let mut b = Vec::with_capacity(nm * ns);
        for im in 0..nm {
            let mu = -8.0 + 16.0 * (im as f64 + 0.5) / nm as f64;
            for is in 0..ns {
                let sigma2 = 0.02 + 12.0 * (is as f64 + 0.5) / ns as f64;
                let c = GaussComponent { mu, sigma2 };
                a.push(post.log_density(&c));
                b.push(prior.log_density(&c) + ys.iter().map(|&y| log_likelihood(y, &c)).sum::<f64>());
            }
        }
        let norm = |v: &[f64]| {
            let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = v.iter().map(|x| (x - mx).exp()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (pa, pb) = (norm(&a), norm(&b));
        0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn posterior_matches_grid() {
        let prior = NigPrior::default();
        assert!(grid_tv(&[-0.4, 1.1, 2.5], &prior) < 1e-6);
        let mut rng = Streams::new(17).rng(&[0]);
        for _ in 0..20 {
            let len = rand::Rng::random_range(&mut rng, 0..=5);
            let ys: Vec<f64> = (0..len).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
            assert!(grid_tv(&ys, &NigPrior::new(0.5, 0.7, 2.5, 1.5).unwrap()) < 1e-6, "{ys:?}");
        }
    }

    #[test]
    fn empty_component_draws_from_prior() {
        let prior = NigPrior::default();
        let mut v = GaussianView::new("v", vec![10.0; 4], prior).unwrap();
        let mut rng = Streams::new(2).rng(&[0]);
        let reps = 20_000;
        let mut mus = Vec::with_capacity(reps);
        for _ in 0..reps {
            v.sample_prior(2, &mut rng).unwrap();
            v.update_components(&[0, 0, 0, 0], &mut rng).unwrap();
            mus.push(v.components()[1].mu);
        }
        // Marginal of mu under the prior: Student-t, mean 0, variance b0 / ((a0 - 1) k0) = 1.
        let (m, var) = mean_var(&mus);
        assert!(m.abs() < 4.0 * (1.0 / reps as f64).sqrt());
        assert!((var - 1.0).abs() < 0.15);
    }

    #[test]
    fn scenario_patterns() {
        let mut rng = Streams::new(3).rng(&[0]);
        let c = simulate_scenarios(Scenario::C, 30, &mut rng).unwrap();
        assert_eq!(c.c[0], c.c[1]);
        assert_eq!(c.c0.as_ref().unwrap(), &c.c[0]);
        for (sc, shared) in [(Scenario::A, 10), (Scenario::B, 20), (Scenario::C, 30)] {
            let d = simulate_scenarios(sc, 30, &mut rng).unwrap();
            assert_eq!(d.c[0].iter().zip(&d.c[1]).filter(|(a, b)| a == b).count(), shared);
            for comps in &d.components {
                assert!(comps.iter().all(|c| [-3.0, 0.0, 3.0].contains(&c.mu) && c.sigma2 == 1.0));
            }
        }
        assert!(simulate_scenarios(Scenario::A, 31, &mut rng).is_err());
        assert!("d".parse::<Scenario>().is_err());
        assert_eq!("B".parse::<Scenario>().unwrap(), Scenario::B);
    }

    #[test]
    fn sensitivity_design() {
        let mut rng = Streams::new(4).rng(&[0]);
        let d = simulate_sensitivity(150, 0.1, &mut rng).unwrap();
        let mus: Vec<f64> = d.components[0].iter().map(|c| c.mu).collect();
        assert_eq!(mus, vec![-3.0, -1.5, 0.0, 1.5, 3.0]);
        assert!(d.components.iter().flatten().all(|c| c.sigma2 == 0.5));
        assert!(d.c0.as_ref().unwrap().iter().all(|l| [0, 2, 4].contains(l)));
    }

    #[test]
    fn simulated_means_match() {
        let mut rng = Streams::new(5).rng(&[0]);
        let d = simulate_scenarios(Scenario::C, 3000, &mut rng).unwrap();
        for j in 0..2 {
            for (k, comp) in d.components[j].iter().enumerate() {
                let ys: Vec<f64> = d.y[j].iter().zip(&d.c[j]).filter(|(_, &l)| l == k).map(|(y, _)| *y).collect();
                let (m, _) = mean_var(&ys);
                assert!((m - comp.mu).abs() < 3.0 / (ys.len() as f64).sqrt());
            }
        }
    }
}
