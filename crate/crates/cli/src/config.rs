//! Run configuration, read from a single TOML file.
//!
//! Every section has defaults, so an empty file is a valid configuration for
//! `simulate` and `prior-study`. Relative paths are resolved against the
//! directory holding the configuration file.

use std::path::{Path, PathBuf};

use latmod_core::mcmc::McmcConfig;
use latmod_core::model::Hyperparams;
use latmod_core::numerics::{SplineBasisSpec, SplineKind};
use latmod_views::ctmc::CtmcPrior;
use latmod_views::gaussian::NigPrior;
use latmod_views::zbmi::ZbmiPrior;
use latmod_views::zip::ZipPrior;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_LAMBDA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Covariate table shared by the longitudinal views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
    /// True labels, used by `summarize` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub prior_study: PriorStudyConfig,
    #[serde(default)]
    pub summarize: SummarizeConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub views: Vec<ViewConfig>,
    /// Run facts written into manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<toml::Table>,
}

fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            out: None,
            covariates: None,
            truth: None,
            model: ModelConfig::default(),
            mcmc: McmcSection::default(),
            simulate: SimulateConfig::default(),
            prior_study: PriorStudyConfig::default(),
            summarize: SummarizeConfig::default(),
            views: Vec::new(),
            run: None,
        }
    }
}

/// Concentrations and the prior on `M`: `m` fixes it, otherwise
/// `M = 1 + Poisson(lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha0: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alpha0: 0.1,
            alpha: 0.1,
            lambda: None,
            m: None,
        }
    }
}

impl ModelConfig {
    pub fn hyperparams(&self) -> Result<Hyperparams> {
        match (self.lambda, self.m) {
            (Some(_), Some(_)) => Err(CliError::Config("model: set either `lambda` or `m`, not both".into())),
            (None, Some(m)) => Hyperparams::fixed(self.alpha0, self.alpha, m).map_err(CliError::config),
            (l, None) => Hyperparams::shifted_poisson(self.alpha0, self.alpha, l.unwrap_or(DEFAULT_LAMBDA))
                .map_err(CliError::config),
        }
    }

    /// Same settings with the default `lambda` written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if out.m.is_none() && out.lambda.is_none() {
            out.lambda = Some(DEFAULT_LAMBDA);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub adapt_start: usize,
    pub m_init: usize,
    pub store_params: bool,
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection {
            iterations: 3500,
            burn_in: 1000,
            thin: 1,
            adapt_start: 100,
            m_init: 5,
            store_params: false,
        }
    }
}

impl McmcSection {
    pub fn to_config(&self, seed: u64) -> Result<McmcConfig> {
        let c = McmcConfig {
            total_iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            adapt_start: self.adapt_start,
            m_init: self.m_init,
            store_params: self.store_params,
        };
        c.validate().map_err(CliError::config)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulateKind {
    /// Two Gaussian views with fixed cluster patterns.
    Scenario,
    /// Two Gaussian views drawn around a three-block baseline over five components.
    Sensitivity,
    /// Z-BMI, hypertension and wheeze views.
    GustoLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub kind: SimulateKind,
    /// `a`, `b` or `c`.
    pub scenario: String,
    pub n: usize,
    /// View concentration for the sensitivity and gusto-like generators.
    pub alpha: f64,
    /// Panel dropout probability for the gusto-like generator.
    pub missing: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            kind: SimulateKind::Scenario,
            scenario: "c".into(),
            n: 300,
            alpha: 0.1,
            missing: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorStudyConfig {
    pub n: usize,
    pub views: usize,
    pub m: usize,
    pub alpha0: f64,
    pub samples: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Points of the logarithmic alpha grid.
    pub alpha_points: usize,
    /// Sample sizes for the equal-partition table.
    pub equal_n: Vec<usize>,
    /// Numbers of equal-sized baseline blocks for the equal-partition table.
    pub equal_blocks: Vec<usize>,
}

impl Default for PriorStudyConfig {
    fn default() -> Self {
        PriorStudyConfig {
            n: 10,
            views: 2,
            m: 10,
            alpha0: 1.0,
            samples: 10_000,
            alpha_min: 1e-3,
            alpha_max: 1e3,
            alpha_points: 13,
            equal_n: vec![10, 20, 50],
            equal_blocks: vec![1, 2],
        }
    }
}

impl PriorStudyConfig {
    pub fn alpha_grid(&self) -> Result<Vec<f64>> {
        if !(self.alpha_min > 0.0 && self.alpha_max >= self.alpha_min && self.alpha_max.is_finite()) {
            return Err(CliError::Config("prior_study: need 0 < alpha_min <= alpha_max".into()));
        }
        if self.alpha_points == 0 {
            return Err(CliError::Config("prior_study: alpha_points must be at least 1".into()));
        }
        if self.alpha_points == 1 {
            return Ok(vec![self.alpha_min]);
        }
        let (lo, hi) = (self.alpha_min.log10(), self.alpha_max.log10());
        let step = (hi - lo) / (self.alpha_points - 1) as f64;
        Ok((0..self.alpha_points)
            .map(|k| 10f64.powf(lo + step * k as f64))
            .collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    /// Directory holding `fit` output; defaults to the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traces: Option<PathBuf>,
}

/// One view: its likelihood family, data file and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ViewConfig {
    /// One value per subject, Normal with Normal-Inverse-Gamma prior.
    Gaussian {
        name: String,
        data: PathBuf,
        #[serde(default)]
        prior: NigPrior,
    },
    /// Longitudinal series on a fixed grid, B-spline means.
    Zbmi {
        name: String,
        data: PathBuf,
        grid: Vec<f64>,
        #[serde(default = "default_degree")]
        degree: usize,
        knots: Vec<f64>,
        #[serde(default)]
        prior: ZbmiPrior,
    },
    /// Binary panel states, two-state Markov chain.
    Ctmc {
        name: String,
        data: PathBuf,
        #[serde(default)]
        prior: CtmcPrior,
    },
    /// Cumulative counts, zero-inflated Poisson with I-spline intensities.
    Zip {
        name: String,
        data: PathBuf,
        window: [f64; 2],
        #[serde(default = "default_degree")]
        degree: usize,
        knots: Vec<f64>,
        #[serde(default)]
        prior: ZipPrior,
    },
}

fn default_degree() -> usize {
    3
}

impl ViewConfig {
    pub fn name(&self) -> &str {
        match self {
            ViewConfig::Gaussian { name, .. }
            | ViewConfig::Zbmi { name, .. }
            | ViewConfig::Ctmc { name, .. }
            | ViewConfig::Zip { name, .. } => name,
        }
    }

    pub fn data(&self) -> &Path {
        match self {
            ViewConfig::Gaussian { data, .. }
            | ViewConfig::Zbmi { data, .. }
            | ViewConfig::Ctmc { data, .. }
            | ViewConfig::Zip { data, .. } => data,
        }
    }

    fn data_mut(&mut self) -> &mut PathBuf {
        match self {
            ViewConfig::Gaussian { data, .. }
            | ViewConfig::Zbmi { data, .. }
            | ViewConfig::Ctmc { data, .. }
            | ViewConfig::Zip { data, .. } => data,
        }
    }

    pub fn spline(&self) -> Result<Option<SplineBasisSpec>> {
        let spec = match self {
            ViewConfig::Zbmi {
                grid, degree, knots, ..
            } => {
                let (lo, hi) = match (grid.first(), grid.last()) {
                    (Some(&a), Some(&b)) => (a, b),
                    _ => return Err(CliError::Config(format!("view {}: empty grid", self.name()))),
                };
                SplineBasisSpec::new(SplineKind::BSpline, *degree, knots.clone(), (lo, hi))
            }
            ViewConfig::Zip {
                window, degree, knots, ..
            } => SplineBasisSpec::new(SplineKind::ISpline, *degree, knots.clone(), (window[0], window[1])),
            _ => return Ok(None),
        };
        spec.map(Some)
            .map_err(|e| CliError::Config(format!("view {}: {e}", self.name())))
    }

    fn validate_prior(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let ok = match self {
            ViewConfig::Gaussian { prior, .. } => {
                NigPrior::new(prior.m0, prior.k0, prior.a0, prior.b0).is_ok()
            }
            ViewConfig::Zbmi { prior, .. } => {
                prior.beta_mean.is_finite()
                    && prior.eta_mean.is_finite()
                    && [prior.beta_var, prior.sigma2_shape, prior.sigma2_scale, prior.eta_var]
                        .into_iter()
                        .all(pos)
            }
            ViewConfig::Ctmc { prior, .. } => {
                prior.mu_lambda.iter().all(|m| m.is_finite())
                    && prior.eta_mean.is_finite()
                    && [prior.sigma2_shape, prior.sigma2_scale, prior.eta_var]
                        .into_iter()
                        .all(pos)
            }
            ViewConfig::Zip { prior, .. } => {
                prior.eta_mean.is_finite()
                    && [prior.p_a, prior.p_b, prior.zeta_shape, prior.zeta_rate, prior.eta_var]
                        .into_iter()
                        .all(pos)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "view {}: prior hyperparameters must be finite with positive scales",
                self.name()
            )))
        }
    }
}

impl RunConfig {
    /// Parse a configuration and resolve its paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.run = None;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.out.as_mut(),
            self.covariates.as_mut(),
            self.truth.as_mut(),
            self.summarize.traces.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        for v in &mut self.views {
            join(v.data_mut());
        }
    }

    /// Checks needed before a fit: views, names, files and hyperparameters.
    pub fn validate_for_fit(&self) -> Result<()> {
        self.model.hyperparams()?;
        self.mcmc.to_config(self.seed)?;
        if self.views.is_empty() {
            return Err(CliError::Config("no [[views]] configured; fit needs at least one".into()));
        }
        let mut names = std::collections::HashSet::new();
        for v in &self.views {
            let name = v.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(CliError::Config(format!(
                    "view name `{name}` must be non-empty and use only letters, digits, `-` or `_`"
                )));
            }
            if name == "c0" || !names.insert(name) {
                return Err(CliError::Config(format!("view name `{name}` is reserved or repeated")));
            }
            if !v.data().is_file() {
                return Err(CliError::Config(format!(
                    "view {name}: data file {} does not exist",
                    v.data().display()
                )));
            }
            v.spline()?;
            v.validate_prior()?;
        }
        for (key, p) in [("covariates", &self.covariates), ("truth", &self.truth)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::Config(format!("{key} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Copy with defaults written out and every path made absolute.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.model = self.model.resolved();
        let abs = |p: &mut PathBuf| {
            if let Ok(a) = std::path::absolute(&*p) {
                *p = a;
            }
        };
        for p in [out.covariates.as_mut(), out.truth.as_mut()].into_iter().flatten() {
            abs(p);
        }
        for v in &mut out.views {
            abs(v.data_mut());
        }
        out.out = None;
        out.summarize.traces = None;
        out.run = None;
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))
    }
}
