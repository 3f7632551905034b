//! B-spline longitudinal regression view with time-specific variances.
//!
//! `z_it = B(t) . beta*_{c_i} + x_i . eta + e_it`, `e_it ~ N(0, sigma2_t)`,
//! where `t` indexes a global grid of observation times shared by all
//! subjects; each subject is observed on a subset of the grid.

use latmod_core::mcmc::ViewModel;
use latmod_core::numerics::random::{sample_inv_gamma, sample_mvn_canonical, sample_normal};
use latmod_core::numerics::{SplineBasisSpec, SplineKind, StreamRng};
use latmod_core::{Error, Result};
use serde::{Deserialize, Serialize};
use nalgebra::{DMatrix, DVector};

use crate::series::{Covariates, Series};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZbmiPrior {
    /// `beta* ~ N(beta_mean * 1, beta_var * I)`.
    pub beta_mean: f64,
    pub beta_var: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    /// `eta ~ N(eta_mean * 1, eta_var * I)`.
    pub eta_mean: f64,
    pub eta_var: f64,
}

impl Default for ZbmiPrior {
    fn default() -> Self {
        ZbmiPrior {
            beta_mean: 0.0,
            beta_var: 50.0,
            sigma2_shape: 3.0,
            sigma2_scale: 2.0,
            eta_mean: 0.0,
            eta_var: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Subject {
    // Grid indices of the observations.
    idx: Vec<usize>,
    z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ZbmiView {
    name: String,
    grid: Vec<f64>,
    basis: Vec<DVector<f64>>,
    subjects: Vec<Subject>,
    x: Covariates,
    prior: ZbmiPrior,
    beta: Vec<DVector<f64>>,
    sigma2: Vec<f64>,
    eta: Vec<f64>,
}

impl ZbmiView {
    /// Every observation time must coincide (to 1e-9) with a point of `grid`.
    pub fn new(
        name: impl Into<String>,
        grid: Vec<f64>,
        spline: &SplineBasisSpec,
        data: &[Series<f64>],
        x: Covariates,
        prior: ZbmiPrior,
    ) -> Result<Self> {
        if spline.kind() != SplineKind::BSpline {
            return Err(Error::Config("Z-BMI view needs a B-spline basis".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("time grid must be strictly increasing".into()));
        }
        if x.n() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: x.n(),
            });
        }
        if !(prior.beta_var > 0.0 && prior.sigma2_shape > 0.0 && prior.sigma2_scale > 0.0 && prior.eta_var > 0.0) {
            return Err(Error::Domain("invalid Z-BMI prior".into()));
        }
        let basis = grid
            .iter()
            .map(|&t| spline.bspline_basis(t).map(DVector::from_vec))
            .collect::<Result<Vec<_>>>()?;
        let subjects = data
            .iter()
            .map(|s| {
                if s.values.iter().any(|z| !z.is_finite()) {
                    return Err(Error::Domain("Z-BMI values must be finite".into()));
                }
                let idx = s
                    .times
                    .iter()
                    .map(|&t| {
                        grid.iter()
                            .position(|&g| (g - t).abs() <= 1e-9)
                            .ok_or_else(|| Error::Domain(format!("time {t} is not on the Z-BMI grid")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Subject {
                    idx,
                    z: s.values.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let q = x.q();
        let nt = grid.len();
        Ok(ZbmiView {
            name: name.into(),
            grid,
            basis,
            subjects,
            x,
            prior,
            beta: Vec::new(),
            sigma2: vec![1.0; nt],
            eta: vec![0.0; q],
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn basis_dim(&self) -> usize {
        self.basis.first().map_or(0, DVector::len)
    }

    pub fn beta(&self, m: usize) -> &DVector<f64> {
        &self.beta[m]
    }

    pub fn set_beta(&mut self, beta: Vec<DVector<f64>>) {
        self.beta = beta;
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn set_sigma2(&mut self, s: Vec<f64>) {
        self.sigma2 = s;
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn set_eta(&mut self, eta: Vec<f64>) {
        self.eta = eta;
    }

    /// Values of subject `i` with their grid indices.
    pub fn subject(&self, i: usize) -> (&[usize], &[f64]) {
        (&self.subjects[i].idx, &self.subjects[i].z)
    }

    fn fitted(&self, i: usize, k: usize, beta: &DVector<f64>) -> f64 {
        let s = &self.subjects[i];
        self.basis[s.idx[k]].dot(beta) + self.x.dot(i, &self.eta)
    }

    /// Canonical `(precision, precision * mean)` of the full conditional of `beta*_m`.
    pub fn beta_conditional(&self, m: usize, labels: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.basis_dim();
        let mut prec = DMatrix::identity(d, d) / self.prior.beta_var;
        let mut lin = DVector::from_element(d, self.prior.beta_mean / self.prior.beta_var);
        for (i, s) in self.subjects.iter().enumerate() {
            if labels[i] != m {
                continue;
            }
            let xe = self.x.dot(i, &self.eta);
            for (&t, &z) in s.idx.iter().zip(&s.z) {
                let b = &self.basis[t];
                let w = 1.0 / self.sigma2[t];
                prec.ger(w, b, b, 1.0);
                lin.axpy(w * (z - xe), b, 1.0);
            }
        }
        (prec, lin)
    }

    /// Inverse-Gamma `(shape, scale)` of the full conditional of `sigma2_t`.
    pub fn sigma2_conditional(&self, t: usize, labels: &[usize]) -> (f64, f64) {
        let (mut count, mut ss) = (0.0, 0.0);
        for (i, s) in self.subjects.iter().enumerate() {
            for (k, (&tk, &z)) in s.idx.iter().zip(&s.z).enumerate() {
                if tk == t {
                    count += 1.0;
                    ss += (z - self.fitted(i, k, &self.beta[labels[i]])).powi(2);
                }
            }
        }
        (self.prior.sigma2_shape + 0.5 * count, self.prior.sigma2_scale + 0.5 * ss)
    }

    /// Canonical form of the full conditional of `eta`.
    pub fn eta_conditional(&self, labels: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let q = self.x.q();
        let mut prec = DMatrix::identity(q, q) / self.prior.eta_var;
        let mut lin = DVector::from_element(q, self.prior.eta_mean / self.prior.eta_var);
        for (i, s) in self.subjects.iter().enumerate() {
            let x = DVector::from_column_slice(self.x.row(i));
            let beta = &self.beta[labels[i]];
            let (mut w_sum, mut r_sum) = (0.0, 0.0);
            for (&t, &z) in s.idx.iter().zip(&s.z) {
                w_sum += 1.0 / self.sigma2[t];
                r_sum += (z - self.basis[t].dot(beta)) / self.sigma2[t];
            }
            prec.ger(w_sum, &x, &x, 1.0);
            lin.axpy(r_sum, &x, 1.0);
        }
        (prec, lin)
    }

    fn prior_beta(&self, rng: &mut StreamRng) -> Result<DVector<f64>> {
        let sd = self.prior.beta_var.sqrt();
        let d = self.basis_dim();
        let v = (0..d)
            .map(|_| sample_normal(self.prior.beta_mean, sd, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }
}

impl ViewModel for ZbmiView {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    fn n_components(&self) -> usize {
        self.beta.len()
    }

    fn log_likelihood(&self, i: usize, m: usize) -> f64 {
        let s = &self.subjects[i];
        let xe = self.x.dot(i, &self.eta);
        s.idx
            .iter()
            .zip(&s.z)
            .map(|(&t, &z)| {
                let v = self.sigma2[t];
                let r = z - self.basis[t].dot(&self.beta[m]) - xe;
                -0.5 * (LN_2PI + v.ln() + r * r / v)
            })
            .sum()
    }

    fn push_prior_component(&mut self, rng: &mut StreamRng) -> Result<()> {
        let b = self.prior_beta(rng)?;
        self.beta.push(b);
        Ok(())
    }

    fn retain_components(&mut self, keep: &[usize]) {
        self.beta = keep.iter().map(|&k| self.beta[k].clone()).collect();
    }

    fn update_components(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        for m in 0..self.beta.len() {
            let (prec, lin) = self.beta_conditional(m, labels);
            self.beta[m] = sample_mvn_canonical(&prec, &lin, rng)?.0;
        }
        Ok(())
    }

    fn update_shared(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        for t in 0..self.sigma2.len() {
            let (shape, scale) = self.sigma2_conditional(t, labels);
            self.sigma2[t] = sample_inv_gamma(shape, scale, rng)?;
        }
        if self.x.q() > 0 {
            let (prec, lin) = self.eta_conditional(labels);
            self.eta = sample_mvn_canonical(&prec, &lin, rng)?.0.as_slice().to_vec();
        }
        Ok(())
    }

    fn sample_prior(&mut self, m: usize, rng: &mut StreamRng) -> Result<()> {
        for s in self.sigma2.iter_mut() {
            *s = sample_inv_gamma(self.prior.sigma2_shape, self.prior.sigma2_scale, rng)?;
        }
        for e in self.eta.iter_mut() {
            *e = sample_normal(self.prior.eta_mean, self.prior.eta_var.sqrt(), rng)?;
        }
        self.beta = (0..m).map(|_| self.prior_beta(rng)).collect::<Result<_>>()?;
        Ok(())
    }

    fn simulate_data(&mut self, labels: &[usize], rng: &mut StreamRng) -> Result<()> {
        for i in 0..self.subjects.len() {
            for k in 0..self.subjects[i].z.len() {
                let t = self.subjects[i].idx[k];
                let mean = self.fitted(i, k, &self.beta[labels[i]]);
                self.subjects[i].z[k] = sample_normal(mean, self.sigma2[t].sqrt(), rng)?;
            }
        }
        Ok(())
    }

    fn component_params(&self, m: usize) -> Vec<f64> {
        self.beta[m].as_slice().to_vec()
    }

    fn box_clone(&self) -> Box<dyn ViewModel> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
