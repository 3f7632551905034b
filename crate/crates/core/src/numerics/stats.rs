//! Sample summaries for Monte Carlo checks.

/// Mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Mean and batch-means standard error over `batches` contiguous batches
/// (trailing remainder dropped from the SE, kept in the mean).
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let (mean, _) = mean_var(xs);
    let size = xs.len() / batches.max(1);
    if size == 0 || batches < 2 {
        return (mean, f64::NAN);
    }
    let bm: Vec<f64> = xs.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let (_, bvar) = mean_var(&bm);
    (mean, (bvar / batches as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_batch_se_close_to_naive() {
        use rand::Rng;
        let mut rng = crate::numerics::Streams::new(3).rng(&[0]);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let (m, se) = batch_means(&xs, 50);
        let naive = (1.0 / 12.0 / 100_000.0f64).sqrt();
        assert!((m - 0.5).abs() < 4.0 * naive);
        assert!((se / naive - 1.0).abs() < 0.4);
        assert_eq!(mean_var(&[1.0, 3.0]), (2.0, 2.0));
    }
}
