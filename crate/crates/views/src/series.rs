//! Per-subject longitudinal records and covariates.

use latmod_core::{Error, Result};

/// Observations of one subject at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    pub times: Vec<f64>,
    pub values: Vec<T>,
}

impl<T> Series<T> {
    pub fn new(times: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("observation times must be finite and strictly increasing".into()));
        }
        Ok(Series { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Time-invariant covariates, one row of length `q` per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    rows: Vec<Vec<f64>>,
    q: usize,
}

impl Covariates {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != q) {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: r.len(),
            });
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain("covariates must be finite".into()));
        }
        Ok(Covariates { rows, q })
    }

    /// `n` subjects without covariates.
    pub fn empty(n: usize) -> Self {
        Covariates {
            rows: vec![Vec::new(); n],
            q: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// `x_i . eta`.
    pub fn dot(&self, i: usize, eta: &[f64]) -> f64 {
        self.rows[i].iter().zip(eta).map(|(a, b)| a * b).sum()
    }
}
