//! Clamped B-spline and I-spline bases.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplineKind {
    BSpline,
    ISpline,
}

/// Degree, interior knots and boundary of a spline basis.
///
/// For `BSpline` the basis is the clamped B-spline basis of the given degree
/// (`interior + degree + 1` functions, a partition of unity). For `ISpline`
/// the basis consists of the integrals of the normalized M-splines of the
/// given degree, `interior + degree + 1` monotone functions rising from 0 at
/// the left boundary to 1 at the right boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasisSpec {
    degree: usize,
    interior_knots: Vec<f64>,
    boundary: (f64, f64),
    kind: SplineKind,
    // Clamped knot vector of the underlying B-spline basis (degree + 1 for I-splines).
    knots: Vec<f64>,
}

impl SplineBasisSpec {
    pub fn new(kind: SplineKind, degree: usize, interior_knots: Vec<f64>, boundary: (f64, f64)) -> Result<Self> {
        let (lo, hi) = boundary;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!("invalid spline boundary [{lo}, {hi}]")));
        }
        let mut prev = lo;
        for &k in &interior_knots {
            if !(k > prev && k < hi) {
                return Err(Error::domain(format!(
                    "interior knots must be strictly increasing inside ({lo}, {hi}), got {interior_knots:?}"
                )));
            }
            prev = k;
        }
        let order = match kind {
            SplineKind::BSpline => degree + 1,
            SplineKind::ISpline => degree + 2,
        };
        let mut knots = vec![lo; order];
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat_n(hi, order));
        Ok(SplineBasisSpec {
            degree,
            interior_knots,
            boundary,
            kind,
            knots,
        })
    }

    /// Interior knots at equally spaced quantiles of the distinct observed times.
    pub fn with_quantile_knots(
        kind: SplineKind,
        degree: usize,
        count: usize,
        times: &[f64],
        boundary: (f64, f64),
    ) -> Result<Self> {
        let mut ts: Vec<f64> = times
            .iter()
            .cloned()
            .filter(|t| *t > boundary.0 && *t < boundary.1)
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
        let mut knots = Vec::with_capacity(count);
        if ts.len() >= 2 {
            for k in 1..=count {
                let q = k as f64 / (count + 1) as f64;
                let pos = q * (ts.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let v = ts[lo] + (pos - lo as f64) * (ts[hi] - ts[lo]);
                knots.push(v);
            }
        }
        knots.dedup();
        if knots.len() < count {
            // Too few distinct times: fall back to equal spacing on the boundary.
            knots = (1..=count)
                .map(|k| boundary.0 + (boundary.1 - boundary.0) * k as f64 / (count + 1) as f64)
                .collect();
        }
        Self::new(kind, degree, knots, boundary)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> SplineKind {
        self.kind
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn boundary(&self) -> (f64, f64) {
        self.boundary
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.interior_knots.len() + self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(t >= self.boundary.0 && t <= self.boundary.1) {
            return Err(Error::domain(format!(
                "t = {t} outside spline boundary [{}, {}]",
                self.boundary.0, self.boundary.1
            )));
        }
        Ok(())
    }

    /// Evaluate the basis at `t`, dispatching on the kind.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        match self.kind {
            SplineKind::BSpline => self.bspline_basis(t),
            SplineKind::ISpline => self.ispline_basis(t),
        }
    }

    pub fn bspline_basis(&self, t: f64) -> Result<Vec<f64>> {
        if self.kind != SplineKind::BSpline {
            return Err(Error::domain("bspline_basis called on an I-spline spec"));
        }
        self.check(t)?;
        let n = self.len();
        let mut out = vec![0.0; n];
        let (span, vals) = nonzero_basis(&self.knots, self.degree, n, t);
        for (r, v) in vals.into_iter().enumerate() {
            out[span - self.degree + r] = v;
        }
        Ok(out)
    }

    pub fn ispline_basis(&self, t: f64) -> Result<Vec<f64>> {
        if self.kind != SplineKind::ISpline {
            return Err(Error::domain("ispline_basis called on a B-spline spec"));
        }
        self.check(t)?;
        let len = self.len();
        let p = self.degree + 1;
        let (span, vals) = nonzero_basis(&self.knots, p, len + 1, t);
        let mut b = vec![0.0; len + 1];
        for (r, v) in vals.into_iter().enumerate() {
            b[span - p + r] = v;
        }
        // I_l = sum_{j > l} B_j of the next-higher degree.
        let mut out = vec![0.0; len];
        let mut acc = 0.0;
        for l in (0..len).rev() {
            acc += b[l + 1];
            out[l] = acc.clamp(0.0, 1.0);
        }
        Ok(out)
    }
}

/// Nonzero B-spline values of degree `p` at `t` on a clamped knot vector with
/// `n` basis functions; returns the knot span and the `p + 1` values for basis
/// indices `span - p ..= span`.
fn nonzero_basis(knots: &[f64], p: usize, n: usize, t: f64) -> (usize, Vec<f64>) {
    let span = if t >= knots[n] {
        n - 1
    } else {
        // Last index s with knots[s] <= t, restricted to p..n-1.
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };
    let mut vals = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    vals[0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    (span, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    // Textbook Cox-de Boor recursion, written independently of the span-based
    // evaluator above.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, t: f64, last: bool) -> f64 {
        if p == 0 {
            let inside = knots[i] <= t && t < knots[i + 1];
            // Right-closed final nonempty interval.
            let at_end = last && t == knots[i + 1] && knots[i] < knots[i + 1];
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (t - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, t, last);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - t) / d2 * cox_de_boor(knots, i + 1, p - 1, t, last);
        }
        v
    }

    fn clamped(lo: f64, hi: f64, interior: &[f64], order: usize) -> Vec<f64> {
        let mut k = vec![lo; order];
        k.extend_from_slice(interior);
        k.extend(std::iter::repeat_n(hi, order));
        k
    }

    // Normalized M-spline of degree d: integrates to one.
    fn mspline(knots: &[f64], i: usize, d: usize, t: f64) -> f64 {
        let width = knots[i + d + 1] - knots[i];
        if width <= 0.0 {
            return 0.0;
        }
        (d + 1) as f64 / width * cox_de_boor(knots, i, d, t, false)
    }

    // Composite Gauss-Legendre (5 points) between consecutive breakpoints.
    fn integrate(f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
            for k in 0..5 {
                total += W[k] * h * f(c + h * X[k]);
            }
        }
        total
    }

    #[test]
    fn bspline_counts_and_clamping() {
        let spec = SplineBasisSpec::new(SplineKind::BSpline, 3, vec![0.5], (0.0, 1.0)).unwrap();
        assert_eq!(spec.len(), 5);
        let at_lo = spec.bspline_basis(0.0).unwrap();
        assert_eq!(at_lo[0], 1.0);
        assert!(at_lo[1..].iter().all(|v| *v == 0.0));
        let at_hi = spec.bspline_basis(1.0).unwrap();
        assert_eq!(*at_hi.last().unwrap(), 1.0);
    }

    #[test]
    fn bspline_matches_recursive_oracle() {
        let spec = SplineBasisSpec::new(SplineKind::BSpline, 3, vec![0.5], (0.0, 1.0)).unwrap();
        let knots = clamped(0.0, 1.0, &[0.5], 4);
        let got = spec.bspline_basis(0.25).unwrap();
        for (i, g) in got.iter().enumerate() {
            let want = cox_de_boor(&knots, i, 3, 0.25, false);
            assert!((g - want).abs() < 1e-14, "basis {i}: {g} vs {want}");
        }
        // Exact values at t = 0.25 for knots (0,0,0,0,.5,1,1,1,1).
        let exact = [0.125, 0.59375, 0.25, 0.03125, 0.0];
        for (g, w) in got.iter().zip(exact) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn bspline_partition_of_unity_random_points() {
        let interior = vec![0.7, 2.0, 2.1, 5.5];
        let spec = SplineBasisSpec::new(SplineKind::BSpline, 3, interior.clone(), (0.0, 10.0)).unwrap();
        let knots = clamped(0.0, 10.0, &interior, 4);
        let mut rng = crate::numerics::Streams::new(1).rng(&[0]);
        for k in 0..10_000 {
            let t: f64 = rng.random::<f64>() * 10.0;
            let b = spec.bspline_basis(t).unwrap();
            assert!(b.iter().all(|v| *v >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            if k < 200 {
                for (i, g) in b.iter().enumerate() {
                    assert!((g - cox_de_boor(&knots, i, 3, t, true)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bspline_out_of_range_is_error() {
        let spec = SplineBasisSpec::new(SplineKind::BSpline, 2, vec![], (0.0, 1.0)).unwrap();
        assert!(spec.bspline_basis(-0.1).is_err());
        assert!(spec.bspline_basis(1.1).is_err());
        assert!(spec.ispline_basis(0.5).is_err());
    }

    #[test]
    fn invalid_knots_rejected() {
        assert!(SplineBasisSpec::new(SplineKind::BSpline, 3, vec![0.0], (0.0, 1.0)).is_err());
        assert!(SplineBasisSpec::new(SplineKind::BSpline, 3, vec![0.6, 0.4], (0.0, 1.0)).is_err());
        assert!(SplineBasisSpec::new(SplineKind::BSpline, 3, vec![], (1.0, 1.0)).is_err());
    }

    #[test]
    fn ispline_boundaries() {
        let spec = SplineBasisSpec::new(SplineKind::ISpline, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0], (0.0, 6.0)).unwrap();
        assert_eq!(spec.len(), 9);
        assert!(spec.ispline_basis(0.0).unwrap().iter().all(|v| *v == 0.0));
        assert!(spec.ispline_basis(6.0).unwrap().iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn ispline_matches_mspline_quadrature() {
        let interior = vec![0.4, 1.1, 2.5, 3.0, 4.2];
        let (lo, hi) = (0.0, 6.0);
        let d = 3;
        let spec = SplineBasisSpec::new(SplineKind::ISpline, d, interior.clone(), (lo, hi)).unwrap();
        let mknots = clamped(lo, hi, &interior, d + 1);
        for &t in &[0.1, 0.4, 0.77, 1.9, 2.5, 3.3, 5.99] {
            let got = spec.ispline_basis(t).unwrap();
            let mut breaks: Vec<f64> = mknots.iter().cloned().filter(|k| *k < t).collect();
            breaks.push(t);
            breaks.dedup();
            for (l, g) in got.iter().enumerate() {
                let want = integrate(|x| mspline(&mknots, l, d, x), &breaks);
                assert!((g - want).abs() < 1e-8, "t={t} l={l}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn ispline_monotone() {
        let spec = SplineBasisSpec::new(SplineKind::ISpline, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0], (0.0, 6.0)).unwrap();
        let mut prev = spec.ispline_basis(0.0).unwrap();
        for k in 1..=3000 {
            let t = 6.0 * k as f64 / 3000.0;
            let cur = spec.ispline_basis(t).unwrap();
            for (a, b) in prev.iter().zip(&cur) {
                assert!(*a <= *b + 1e-12);
                assert!((0.0..=1.0).contains(b));
            }
            prev = cur;
        }
    }

    #[test]
    fn quantile_knots_inside_boundary() {
        let times: Vec<f64> = (0..22).map(|k| (k as f64).powf(1.3)).collect();
        let hi = *times.last().unwrap();
        let spec = SplineBasisSpec::with_quantile_knots(SplineKind::BSpline, 3, 2, &times, (0.0, hi)).unwrap();
        assert_eq!(spec.interior_knots().len(), 2);
        assert_eq!(spec.len(), 6);
    }
}
