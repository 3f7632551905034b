//! Synthetic three-view cohort: spline-regression trajectories, binary
//! panel states and zero-inflated panel counts on the same subjects.

use latmod_core::mcmc::ViewModel;
use latmod_core::model::sample_views_given_c0;
use latmod_core::numerics::random::{sample_gamma, sample_normal, sample_poisson};
use latmod_core::numerics::{SplineBasisSpec, SplineKind, StreamRng};
use latmod_core::{Error, Result};
use rand::Rng;

use crate::ctmc::{simulate_path, CtmcPrior, CtmcView};
use crate::series::{Covariates, Series};
use crate::zbmi::{ZbmiPrior, ZbmiView};
use crate::zip::{ZipPrior, ZipView};

/// True parameters and designs of the three views.
#[derive(Debug, Clone, PartialEq)]
pub struct GustoSpec {
    /// Number of covariates, drawn iid N(0, 0.5^2).
    pub q: usize,
    /// Concentration of the view-level weights around the baseline.
    pub alpha_sim: f64,
    /// Probability that a scheduled panel is missing.
    pub missing: f64,
    pub zbmi_grid: Vec<f64>,
    pub zbmi_degree: usize,
    pub zbmi_knots: Vec<f64>,
    /// Spline coefficients per cluster.
    pub zbmi_beta: Vec<Vec<f64>>,
    pub zbmi_sigma2: f64,
    pub zbmi_eta: Vec<f64>,
    pub ctmc_times: Vec<f64>,
    /// `(lambda_01, lambda_10)` per cluster.
    pub ctmc_lambda: Vec<[f64; 2]>,
    pub ctmc_eta: [Vec<f64>; 2],
    pub zip_times: Vec<f64>,
    pub zip_window: (f64, f64),
    pub zip_degree: usize,
    pub zip_knots: Vec<f64>,
    pub zip_p: Vec<f64>,
    pub zip_zeta: Vec<f64>,
    pub zip_eta: Vec<f64>,
}

impl Default for GustoSpec {
    fn default() -> Self {
        GustoSpec {
            q: 2,
            alpha_sim: 0.1,
            missing: 0.1,
            zbmi_grid: (0..12).map(|k| k as f64 * 10.0 / 11.0).collect(),
            zbmi_degree: 3,
            zbmi_knots: vec![10.0 / 3.0, 20.0 / 3.0],
            zbmi_beta: vec![
                vec![-1.0; 6],
                vec![0.0, 0.4, 0.8, 1.2, 1.6, 2.0],
                vec![1.5, 1.0, 0.5, 0.0, -0.5, -1.0],
            ],
            zbmi_sigma2: 0.3,
            zbmi_eta: vec![0.3, -0.2],
            ctmc_times: (0..15).map(f64::from).collect(),
            ctmc_lambda: vec![[0.1, 2.0], [1.0, 1.0], [2.0, 0.1]],
            ctmc_eta: [vec![0.2, 0.0], vec![-0.1, 0.1]],
            zip_times: (1..=12).map(|k| k as f64 * 0.5).collect(),
            zip_window: (0.0, 6.0),
            zip_degree: 3,
            zip_knots: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            zip_p: vec![0.7, 0.3, 0.05],
            zip_zeta: vec![6.0, 1.0, 0.25],
            zip_eta: vec![0.2, 0.1],
        }
    }
}

impl GustoSpec {
    pub fn n_clusters(&self) -> usize {
        self.zbmi_beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_clusters();
        if k == 0 || self.ctmc_lambda.len() != k || self.zip_p.len() != k || self.zip_zeta.len() != k {
            return Err(Error::Config("every view needs one parameter set per cluster".into()));
        }
        if self.zbmi_eta.len() != self.q || self.zip_eta.len() != self.q || self.ctmc_eta.iter().any(|e| e.len() != self.q) {
            return Err(Error::Config(format!("covariate effects must have length q = {}", self.q)));
        }
        if !(0.0..1.0).contains(&self.missing) || !(self.alpha_sim > 0.0) {
            return Err(Error::Config("missing must lie in [0, 1) and alpha_sim be positive".into()));
        }
        let d = self.zbmi_spline()?.len();
        if self.zbmi_beta.iter().any(|b| b.len() != d) {
            return Err(Error::Config(format!("Z-BMI coefficients must have length {d}")));
        }
        self.zip_spline()?;
        Ok(())
    }

    pub fn zbmi_spline(&self) -> Result<SplineBasisSpec> {
        let (lo, hi) = match (self.zbmi_grid.first(), self.zbmi_grid.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::Config("empty Z-BMI grid".into())),
        };
        SplineBasisSpec::new(SplineKind::BSpline, self.zbmi_degree, self.zbmi_knots.clone(), (lo, hi))
    }

    pub fn zip_spline(&self) -> Result<SplineBasisSpec> {
        SplineBasisSpec::new(SplineKind::ISpline, self.zip_degree, self.zip_knots.clone(), self.zip_window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GustoData {
    pub zbmi: Vec<Series<f64>>,
    pub hypertension: Vec<Series<u8>>,
    pub wheeze: Vec<Series<u64>>,
    pub x: Covariates,
    pub c0: Vec<usize>,
    /// True labels of the three views, in the order above.
    pub c: Vec<Vec<usize>>,
}

/// Priors used when fitting the three views.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GustoPriors {
    pub zbmi: ZbmiPrior,
    pub ctmc: CtmcPrior,
    pub zip: ZipPrior,
}

impl GustoData {
    pub fn n(&self) -> usize {
        self.c0.len()
    }

    /// The three view models, ready for the sampler.
    pub fn views(&self, spec: &GustoSpec, priors: &GustoPriors, adapt_warmup: u64) -> Result<Vec<Box<dyn ViewModel>>> {
        let z = ZbmiView::new(
            "zbmi",
            spec.zbmi_grid.clone(),
            &spec.zbmi_spline()?,
            &self.zbmi,
            self.x.clone(),
            priors.zbmi,
        )?;
        let h = CtmcView::new("hypertension", self.hypertension.clone(), self.x.clone(), priors.ctmc, adapt_warmup)?;
        let w = ZipView::new("wheeze", &spec.zip_spline()?, &self.wheeze, self.x.clone(), priors.zip, adapt_warmup)?;
        Ok(vec![Box::new(z), Box::new(h), Box::new(w)])
    }
}

// Scheduled times with independent dropout, keeping at least two.
fn observed(times: &[f64], missing: f64, rng: &mut StreamRng) -> Vec<f64> {
    let kept: Vec<f64> = times.iter().copied().filter(|_| rng.random::<f64>() >= missing).collect();
    if kept.len() >= 2 || times.len() < 2 {
        kept
    } else {
        times.to_vec()
    }
}

fn dot(x: &[f64], e: &[f64]) -> f64 {
    x.iter().zip(e).map(|(a, b)| a * b).sum()
}

/// Forward-simulate `n` subjects. The baseline splits the subjects into
/// consecutive equal blocks, one per cluster; view labels are drawn from the
/// hierarchical prior around it with concentration `spec.alpha_sim`.
pub fn simulate_gusto_like(n: usize, spec: &GustoSpec, rng: &mut StreamRng) -> Result<GustoData> {
    spec.validate()?;
    let k = spec.n_clusters();
    let c0: Vec<usize> = (0..n).map(|i| i * k / n.max(1)).collect();
    let (c, _) = sample_views_given_c0(&c0, 3, k, spec.alpha_sim, rng)?;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..spec.q).map(|_| sample_normal(0.0, 0.5, rng)).collect())
        .collect::<Result<_>>()?;

    let bspline = spec.zbmi_spline()?;
    let mut zbmi = Vec::with_capacity(n);
    for i in 0..n {
        let times = observed(&spec.zbmi_grid, spec.missing, rng);
        let beta = &spec.zbmi_beta[c[0][i]];
        let xe = dot(&x[i], &spec.zbmi_eta);
        let mut z = Vec::with_capacity(times.len());
        for &t in &times {
            let mean = dot(&bspline.bspline_basis(t)?, beta) + xe;
            z.push(sample_normal(mean, spec.zbmi_sigma2.sqrt(), rng)?);
        }
        zbmi.push(Series::new(times, z)?);
    }

    let mut hypertension = Vec::with_capacity(n);
    for i in 0..n {
        let times = observed(&spec.ctmc_times, spec.missing, rng);
        let lam = spec.ctmc_lambda[c[1][i]];
        let l01 = lam[0] * dot(&x[i], &spec.ctmc_eta[0]).exp();
        let l10 = lam[1] * dot(&x[i], &spec.ctmc_eta[1]).exp();
        let first = u8::from(rng.random::<f64>() < l01 / (l01 + l10));
        let path = simulate_path(&times, first, l01, l10, rng);
        hypertension.push(Series::new(times, path)?);
    }

    let ispline = spec.zip_spline()?;
    let n_basis = ispline.len();
    let mut wheeze = Vec::with_capacity(n);
    for i in 0..n {
        let times = observed(&spec.zip_times, spec.missing, rng);
        let m = c[2][i];
        let r: Vec<f64> = (0..n_basis)
            .map(|_| sample_gamma(1.0, spec.zip_zeta[m], rng))
            .collect::<Result<_>>()?;
        let scale = dot(&x[i], &spec.zip_eta).exp();
        let mut prev = ispline.ispline_basis(spec.zip_window.0)?;
        let mut counts = Vec::with_capacity(times.len());
        for &t in &times {
            let cur = ispline.ispline_basis(t)?;
            let mu: f64 = scale * (0..n_basis).map(|l| r[l] * (cur[l] - prev[l]).max(0.0)).sum::<f64>();
            prev = cur;
            let poisson_part = rng.random::<f64>() >= spec.zip_p[m];
            counts.push(if poisson_part { sample_poisson(mu, rng)? } else { 0 });
        }
        wheeze.push(Series::new(times, counts)?);
    }

    Ok(GustoData {
        zbmi,
        hypertension,
        wheeze,
        x: Covariates::new(x)?,
        c0,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use latmod_core::numerics::Streams;

    #[test]
    fn default_spec_is_valid() {
        let spec = GustoSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.zbmi_spline().unwrap().len(), 6);
        assert_eq!(spec.zip_spline().unwrap().len(), 9);
        let bad = GustoSpec {
            zip_p: vec![0.5],
            ..GustoSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn full_grid_without_missingness() {
        let spec = GustoSpec {
            missing: 0.0,
            ..GustoSpec::default()
        };
        let mut rng = Streams::new(1).rng(&[0]);
        let d = simulate_gusto_like(30, &spec, &mut rng).unwrap();
        assert!(d.zbmi.iter().all(|s| s.times == spec.zbmi_grid));
        assert!(d.hypertension.iter().all(|s| s.times == spec.ctmc_times));
        assert!(d.wheeze.iter().all(|s| s.times == spec.zip_times));
        assert_eq!(d.c.len(), 3);
        assert_eq!(d.x.q(), 2);
        let views = d.views(&spec, &GustoPriors::default(), 100).unwrap();
        assert_eq!(views.len(), 3);
        assert!(views.iter().all(|v| v.n_subjects() == 30));
    }

    #[test]
    fn degenerate_parameters() {
        let spec = GustoSpec {
            zip_p: vec![1.0; 3],
            ctmc_lambda: vec![[1e-6, 50.0]; 3],
            ctmc_eta: [vec![0.0; 2], vec![0.0; 2]],
            ..GustoSpec::default()
        };
        let mut rng = Streams::new(2).rng(&[0]);
        let d = simulate_gusto_like(60, &spec, &mut rng).unwrap();
        assert!(d.wheeze.iter().all(|s| s.values.iter().all(|&w| w == 0)));
        let ones: usize = d.hypertension.iter().map(|s| s.values.iter().filter(|&&h| h == 1).count()).sum();
        let total: usize = d.hypertension.iter().map(Series::len).sum();
        assert!((ones as f64) < 0.01 * total as f64);
    }

    #[test]
    fn missingness_rate() {
        let spec = GustoSpec {
            missing: 0.3,
            ..GustoSpec::default()
        };
        let mut rng = Streams::new(3).rng(&[0]);
        let d = simulate_gusto_like(300, &spec, &mut rng).unwrap();
        let kept: usize = d.zbmi.iter().map(Series::len).sum();
        let frac = kept as f64 / (300 * spec.zbmi_grid.len()) as f64;
        assert!((frac - 0.7).abs() < 0.03, "{frac}");
    }
}
