//! Random-variate generation on top of `rand_distr`, with parameter checks and
//! the handful of composite draws (Dirichlet, multinomial, categorical from
//! log-weights, multivariate normal) the samplers need.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma, Normal, Poisson, StandardNormal};

use crate::{Error, Result};

/// Draw from Gamma(`shape`, `rate`) (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!(
            "gamma requires positive shape and rate, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::domain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Draw `ln X` for X ~ Gamma(`shape`, 1) without underflow for tiny shapes.
///
/// Uses `X = Y U^{1/shape}` with Y ~ Gamma(shape + 1, 1) when `shape < 1`.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if shape >= 1.0 {
        return Ok(sample_gamma(shape, 1.0, rng)?.ln());
    }
    let y = sample_gamma(shape + 1.0, 1.0, rng)?;
    let u: f64 = 1.0 - rng.random::<f64>();
    Ok(y.ln() + u.ln() / shape)
}

/// Gamma draw clamped away from zero; used for weights that must stay positive.
pub fn sample_positive_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!("gamma rate must be positive, got {rate}")));
    }
    let x = if shape < 1.0 {
        (sample_log_gamma(shape, rng)? - rate.ln()).exp()
    } else {
        sample_gamma(shape, rate, rng)?
    };
    Ok(x.max(f64::MIN_POSITIVE))
}

/// Inverse-Gamma(`shape`, `scale`) draw: the reciprocal of a Gamma(shape, rate = scale).
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, scale, rng)?)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(a, b).map_err(|e| Error::domain(e.to_string()))?;
    Ok(beta.sample(rng))
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> Result<f64> {
    let n = Normal::new(mean, sd).map_err(|e| Error::domain(e.to_string()))?;
    Ok(n.sample(rng))
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::domain(e.to_string()))?;
    Ok(p.sample(rng) as u64)
}

/// Draw from the Dirichlet law with concentration `alphas` by normalizing
/// independent Gamma variates (computed in log space).
pub fn sample_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::domain("dirichlet needs at least one coordinate"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::domain(format!("dirichlet concentration must be positive, got {a}")));
    }
    let logs = alphas
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize_log_weights(&logs))
}

/// Normalized probabilities from log-weights (log-sum-exp stabilized).
pub fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    w
}

/// Index drawn proportionally to nonnegative `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "categorical weights sum to zero");
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    // Round-off fallthrough: last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Index drawn with probabilities proportional to `exp(log_weights)`.
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    sample_categorical(&w, rng)
}

/// Multinomial split of `total` trials over cells with probabilities
/// proportional to `weights`, via sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(total: u64, weights: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let mut out = vec![0u64; weights.len()];
    if total == 0 {
        return Ok(out);
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::domain("multinomial weights must be finite and nonnegative"));
    }
    let mut rest_mass: f64 = weights.iter().sum();
    if !(rest_mass > 0.0) {
        return Err(Error::domain("multinomial weights are all zero with positive count"));
    }
    let mut remaining = total;
    for (k, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == weights.len() || w >= rest_mass {
            out[k] = remaining;
            remaining = 0;
            break;
        }
        let p = (w / rest_mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, p)
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(rng);
        out[k] = draw;
        remaining -= draw;
        rest_mass -= w;
    }
    if remaining > 0 {
        // All leftover mass sat on cells already passed through round-off.
        let k = weights.iter().rposition(|&w| w > 0.0).unwrap();
        out[k] += remaining;
    }
    Ok(out)
}

/// Draw from N(mean, cov) using a Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance not positive definite".into()))?;
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| standard_normal(rng)));
    Ok(mean + chol.l() * z)
}

/// Draw from the Gaussian with precision `prec` and mean `prec^{-1} lin`, the
/// canonical form produced by conjugate updates.
pub fn sample_mvn_canonical<R: Rng + ?Sized>(
    prec: &DMatrix<f64>,
    lin: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = prec
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("posterior precision not positive definite".into()))?;
    let mean = chol.solve(lin);
    let z = DVector::from_iterator(lin.len(), (0..lin.len()).map(|_| standard_normal(rng)));
    // L L^T = prec, so L^{-T} z has covariance prec^{-1}.
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    Ok((&mean + dev, mean))
}
