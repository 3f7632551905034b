use crate::{Error, Result};

/// Natural log of the gamma function for positive arguments.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma(x))
}

/// Unchecked variant for hot loops where the argument is known positive.
#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `ln(Γ(a + n) / Γ(a))`, the log rising factorial.
#[inline]
pub fn log_rising(a: f64, n: usize) -> f64 {
    if n < 16 {
        let mut acc = 0.0;
        for k in 0..n {
            acc += (a + k as f64).ln();
        }
        acc
    } else {
        ln_gamma(a + n as f64) - ln_gamma(a)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(k!)`
#[inline]
pub fn log_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Log pmf of the Poisson law at `k` with mean `mu` (`mu = 0` gives a point mass at 0).
pub fn poisson_log_pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mu.ln() - mu - log_factorial(k)
}

/// Tail mass `P(X >= k)` of a Poisson(`lambda`) law, summed directly to avoid
/// cancellation.
pub fn poisson_upper_tail(k: u64, lambda: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut term = poisson_log_pmf(k, lambda).exp();
    let mut total = 0.0;
    let mut j = k;
    // Terms decrease geometrically once j > lambda.
    loop {
        total += term;
        j += 1;
        term *= lambda / j as f64;
        if (j as f64 > lambda && term < total * 1e-17) || term == 0.0 {
            break;
        }
        if j > k + 100_000 {
            break;
        }
    }
    total.min(1.0)
}
