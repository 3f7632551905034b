//! Posterior summaries: co-clustering matrices, Binder and VI point
//! estimates, Rand-type indices, co-clustering error and mode counts.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::partition::Partition;
use crate::{Error, Result};

/// Posterior co-clustering probabilities. Stored as a dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoClusterMatrix {
    n: usize,
    probs: Vec<f64>,
    sample_count: usize,
}

impl CoClusterMatrix {
    /// From a dense row-major matrix; checks symmetry, range and unit diagonal.
    pub fn from_dense(n: usize, probs: Vec<f64>, sample_count: usize) -> Result<Self> {
        if probs.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: probs.len(),
            });
        }
        for i in 0..n {
            if probs[i * n + i] != 1.0 {
                return Err(Error::domain("diagonal must be exactly 1"));
            }
            for j in 0..n {
                let p = probs[i * n + j];
                if !(0.0..=1.0).contains(&p) || p != probs[j * n + i] {
                    return Err(Error::domain("probabilities must be symmetric and in [0, 1]"));
                }
            }
        }
        Ok(CoClusterMatrix { n, probs, sample_count })
    }

    /// Indicator matrix of a single partition.
    pub fn from_partition(p: &Partition) -> Self {
        let n = p.n();
        let l = p.labels();
        let probs = (0..n * n).map(|x| f64::from(u8::from(l[x / n] == l[x % n]))).collect();
        CoClusterMatrix { n, probs, sample_count: 1 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n..(i + 1) * self.n]
    }

    /// Rows and columns permuted: entry `(a, b)` of the result is `(order[a], order[b])`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n;
        let probs = (0..n * n).map(|x| self.get(order[x / n], order[x % n])).collect();
        CoClusterMatrix {
            n,
            probs,
            sample_count: self.sample_count,
        }
    }
}

fn check_trace<L: AsRef<[usize]>>(trace: &[L]) -> Result<usize> {
    let first = trace.first().ok_or_else(|| Error::domain("empty trace"))?;
    let n = first.as_ref().len();
    for row in trace {
        if row.as_ref().len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.as_ref().len(),
            });
        }
    }
    Ok(n)
}

/// Fraction of samples in which each pair shares a label.
pub fn accumulate_cocluster<L: AsRef<[usize]> + Sync>(trace: &[L]) -> Result<CoClusterMatrix> {
    let n = check_trace(trace)?;
    // Row i counts are independent; parallelize over rows for a deterministic result.
    let counts: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0u32; n];
            for s in trace {
                let l = s.as_ref();
                for (j, r) in row.iter_mut().enumerate() {
                    *r += u32::from(l[i] == l[j]);
                }
            }
            row
        })
        .collect();
    let t = trace.len() as f64;
    let probs = counts.into_iter().flatten().map(|c| f64::from(c) / t).collect();
    Ok(CoClusterMatrix {
        n,
        probs,
        sample_count: trace.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Binder,
    Vi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEstimate {
    pub partition: Partition,
    pub loss_kind: LossKind,
    pub loss_value: f64,
    /// Index of the first trace sample equal to the estimate.
    pub sample_index: usize,
}

/// Distinct partitions in first-appearance order, with counts and first index.
fn unique_partitions<L: AsRef<[usize]>>(trace: &[L]) -> Vec<(Partition, usize, usize)> {
    let mut index: HashMap<Partition, usize> = HashMap::new();
    let mut out: Vec<(Partition, usize, usize)> = Vec::new();
    for (s, row) in trace.iter().enumerate() {
        let p = Partition::from_labels(row.as_ref());
        match index.get(&p) {
            Some(&u) => out[u].1 += 1,
            None => {
                index.insert(p.clone(), out.len());
                out.push((p, 1, s));
            }
        }
    }
    out
}

/// Binder loss `sum_{i<j} |1{together} - probs_ij|` of `p`.
pub fn binder_loss(p: &Partition, cc: &CoClusterMatrix) -> Result<f64> {
    if p.n() != cc.n {
        return Err(Error::DimensionMismatch {
            expected: cc.n,
            found: p.n(),
        });
    }
    let l = p.labels();
    let mut loss = 0.0;
    for i in 0..cc.n {
        for j in i + 1..cc.n {
            let ind = if l[i] == l[j] { 1.0 } else { 0.0 };
            loss += (ind - cc.get(i, j)).abs();
        }
    }
    Ok(loss)
}

/// Sampled partition minimizing the Binder loss; ties go to the earliest sample.
pub fn binder_estimate<L: AsRef<[usize]> + Sync>(trace: &[L], cc: &CoClusterMatrix) -> Result<PartitionEstimate> {
    check_trace(trace)?;
    let uniq = unique_partitions(trace);
    let losses = uniq
        .par_iter()
        .map(|(p, _, _)| binder_loss(p, cc))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(&losses);
    Ok(PartitionEstimate {
        partition: uniq[best].0.clone(),
        loss_kind: LossKind::Binder,
        loss_value: losses[best],
        sample_index: uniq[best].2,
    })
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn contingency(a: &Partition, b: &Partition) -> Result<Vec<Vec<usize>>> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    let mut t = vec![vec![0usize; b.k()]; a.k()];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        t[x][y] += 1;
    }
    Ok(t)
}

/// Variation of information (natural log).
pub fn variation_of_information(a: &Partition, b: &Partition) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = a.n() as f64;
    let h = |sizes: &[usize]| -> f64 {
        sizes
            .iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let (sa, sb) = (a.block_sizes(), b.block_sizes());
    let mut mutual = 0.0;
    for (x, row) in t.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mutual += p * (p * n * n / (sa[x] as f64 * sb[y] as f64)).ln();
            }
        }
    }
    Ok((h(&sa) + h(&sb) - 2.0 * mutual).max(0.0))
}

/// Sampled partition minimizing the average VI to the trace.
pub fn vi_estimate<L: AsRef<[usize]> + Sync>(trace: &[L]) -> Result<PartitionEstimate> {
    check_trace(trace)?;
    let uniq = unique_partitions(trace);
    let t = trace.len() as f64;
    let losses = uniq
        .par_iter()
        .map(|(p, _, _)| {
            let mut total = 0.0;
            for (q, count, _) in &uniq {
                total += *count as f64 * variation_of_information(p, q)?;
            }
            Ok(total / t)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(&losses);
    Ok(PartitionEstimate {
        partition: uniq[best].0.clone(),
        loss_kind: LossKind::Vi,
        loss_value: losses[best],
        sample_index: uniq[best].2,
    })
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Fraction of pairs on which the two partitions agree.
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = a.n();
    if n < 2 {
        return Ok(1.0);
    }
    let both: f64 = t.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = a.block_sizes().into_iter().map(choose2).sum();
    let sb: f64 = b.block_sizes().into_iter().map(choose2).sum();
    let pairs = choose2(n);
    Ok((pairs + 2.0 * both - sa - sb) / pairs)
}

/// Hubert-Arabie adjusted Rand index. Returns 1 when the expected and
/// maximal indices coincide (e.g. both partitions trivial).
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = a.n();
    let both: f64 = t.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = a.block_sizes().into_iter().map(choose2).sum();
    let sb: f64 = b.block_sizes().into_iter().map(choose2).sum();
    let pairs = choose2(n);
    if pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / pairs;
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((both - expected) / (max - expected))
}

/// Mean absolute deviation between co-clustering probabilities and the truth
/// over the `n(n-1)/2` pairs.
pub fn cocluster_error(cc: &CoClusterMatrix, truth: &Partition) -> Result<f64> {
    let n = cc.n;
    if n < 2 {
        return binder_loss(truth, cc).map(|_| 0.0);
    }
    Ok(binder_loss(truth, cc)? / choose2(n))
}

/// Co-clustering error using the indicator matrix of a point estimate.
pub fn cocluster_error_indicator(estimate: &Partition, truth: &Partition) -> Result<f64> {
    cocluster_error(&CoClusterMatrix::from_partition(estimate), truth)
}

/// Most frequent value; ties go to the smaller value.
pub fn mode(values: &[usize]) -> Result<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(va, ca), (vb, cb)| ca.cmp(cb).then(vb.cmp(va)))
        .map(|(v, _)| v)
        .ok_or_else(|| Error::domain("empty trace"))
}

/// Posterior modes of `M` and `K_n`.
pub fn mode_counts(m_trace: &[usize], kn_trace: &[usize]) -> Result<(usize, usize)> {
    Ok((mode(m_trace)?, mode(kn_trace)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Streams;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(labels: &[usize]) -> Partition {
        Partition::from_labels(labels)
    }

    #[test]
    fn cocluster_accumulation() {
        let cc = accumulate_cocluster(&[vec![0, 0, 1]]).unwrap();
        assert_eq!(cc.row(0), &[1.0, 1.0, 0.0]);
        let cc = accumulate_cocluster(&[vec![0, 0, 1], vec![0, 1, 1]]).unwrap();
        assert_eq!(cc.get(0, 1), 0.5);
        assert_eq!(cc.get(1, 2), 0.5);
        for i in 0..3 {
            assert_eq!(cc.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(cc.get(i, j), cc.get(j, i));
            }
        }
        assert!(accumulate_cocluster(&[vec![0, 1], vec![0]]).is_err());
        assert!(accumulate_cocluster::<Vec<usize>>(&[]).is_err());
        let empty: Vec<Vec<usize>> = Vec::new();
        assert!(accumulate_cocluster(&empty).is_err());
    }

    #[test]
    fn binder_point_mass_and_weights() {
        let trace = vec![vec![0, 0, 1, 1]; 5];
        let cc = accumulate_cocluster(&trace).unwrap();
        let est = binder_estimate(&trace, &cc).unwrap();
        assert_eq!(est.partition, p(&[0, 0, 1, 1]));
        assert_eq!(est.loss_value, 0.0);

        let mut trace = vec![vec![0, 0, 1, 1]; 9];
        trace.push(vec![0, 1, 1, 1]);
        let cc = accumulate_cocluster(&trace).unwrap();
        let est = binder_estimate(&trace, &cc).unwrap();
        assert_eq!(est.partition, p(&[0, 0, 1, 1]));
        // Pairs (1,2) and (2,3),(2,4) carry 0.1 each.
        assert!((est.loss_value - 0.3).abs() < 1e-12);
        assert!((binder_loss(&est.partition, &cc).unwrap() - est.loss_value).abs() < 1e-15);
    }

    #[test]
    fn vi_values() {
        let v = variation_of_information(&p(&[0, 0]), &p(&[0, 1])).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let trace = vec![vec![2, 2, 1]; 3];
        let est = vi_estimate(&trace).unwrap();
        assert_eq!(est.partition, p(&[0, 0, 1]));
        assert_eq!(est.loss_value, 0.0);
        assert_eq!(est.loss_kind, LossKind::Vi);
    }

    #[test]
    fn rand_indices() {
        assert_eq!(rand_index(&p(&[0, 1, 1]), &p(&[0, 1, 1])).unwrap(), 1.0);
        assert!((rand_index(&p(&[1, 1, 2]), &p(&[1, 2, 2])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(rand_index(&p(&[0, 1]), &p(&[0])).is_err());
        assert_eq!(adjusted_rand_index(&p(&[0, 1, 2, 2]), &p(&[5, 3, 1, 1])).unwrap(), 1.0);
        let n = 200;
        let singles: Vec<usize> = (0..n).collect();
        let ari = adjusted_rand_index(&p(&singles), &p(&vec![0; n])).unwrap();
        assert!(ari.abs() < 1e-12);
    }

    // Pair-counting ARI oracle: agreement indicators over all pairs.
    fn ari_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut sa, mut sb, mut pairs) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let x = (a[i] == a[j]) as u8 as f64;
                let y = (b[i] == b[j]) as u8 as f64;
                both += x * y;
                sa += x;
                sb += y;
                pairs += 1.0;
            }
        }
        let e = sa * sb / pairs;
        let mx = 0.5 * (sa + sb);
        if (mx - e).abs() < 1e-12 {
            1.0
        } else {
            (both - e) / (mx - e)
        }
    }

    #[test]
    fn ari_matches_pair_oracle_and_has_zero_mean() {
        let mut rng = Streams::new(21).rng(&[0]);
        for _ in 0..500 {
            let a: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let ari = adjusted_rand_index(&p(&a), &p(&b)).unwrap();
            assert!((ari - ari_pairs(&a, &b)).abs() < 1e-12);
        }
        let reps = 1000;
        let xs: Vec<f64> = (0..reps)
            .map(|_| {
                let a: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
                let b: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
                adjusted_rand_index(&p(&a), &p(&b)).unwrap()
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn cocluster_error_values() {
        let truth = p(&[0, 0, 1, 1]);
        let cc = CoClusterMatrix::from_partition(&truth);
        assert_eq!(cocluster_error(&cc, &truth).unwrap(), 0.0);
        let singles = p(&[0, 1, 2, 3]);
        let one = p(&[0, 0, 0, 0]);
        assert_eq!(cocluster_error(&CoClusterMatrix::from_partition(&one), &singles).unwrap(), 1.0);
        let n = 4;
        let half: Vec<f64> = (0..n * n).map(|x| if x / n == x % n { 1.0 } else { 0.5 }).collect();
        let cc = CoClusterMatrix::from_dense(n, half, 1).unwrap();
        assert_eq!(cocluster_error(&cc, &truth).unwrap(), 0.5);
        assert_eq!(cocluster_error_indicator(&singles, &one).unwrap(), 1.0);
        assert!(CoClusterMatrix::from_dense(2, vec![1.0, 0.2, 0.3, 1.0], 1).is_err());
    }

    #[test]
    fn modes() {
        assert_eq!(mode(&[4, 4, 4]).unwrap(), 4);
        assert_eq!(mode(&[2, 3, 3]).unwrap(), 3);
        assert_eq!(mode(&[2, 2, 3, 3]).unwrap(), 2);
        assert_eq!(mode(&[3, 3, 2, 2]).unwrap(), 2);
        assert!(mode(&[]).is_err());
        assert_eq!(mode_counts(&[1, 2, 2], &[5]).unwrap(), (2, 5));
    }

    proptest! {
        #[test]
        fn metrics_relabel_invariant(a in prop::collection::vec(0usize..4, 2..12), shift in 1usize..4) {
            let b: Vec<usize> = a.iter().rev().cloned().collect();
            let a2: Vec<usize> = a.iter().map(|x| (x + shift) % 4 + 10).collect();
            let (pa, pb, pa2) = (p(&a), p(&b), p(&a2));
            prop_assert_eq!(rand_index(&pa, &pb).unwrap(), rand_index(&pa2, &pb).unwrap());
            prop_assert_eq!(adjusted_rand_index(&pa, &pb).unwrap(), adjusted_rand_index(&pa2, &pb).unwrap());
            prop_assert!((variation_of_information(&pa, &pb).unwrap() - variation_of_information(&pb, &pa).unwrap()).abs() < 1e-12);
            prop_assert!(variation_of_information(&pa, &pa2).unwrap().abs() < 1e-12);
        }

        #[test]
        fn estimates_never_worse_than_any_sample(trace in prop::collection::vec(prop::collection::vec(0usize..3, 5), 1..15)) {
            let cc = accumulate_cocluster(&trace).unwrap();
            let b = binder_estimate(&trace, &cc).unwrap();
            let v = vi_estimate(&trace).unwrap();
            for row in &trace {
                let q = p(row);
                prop_assert!(b.loss_value <= binder_loss(&q, &cc).unwrap() + 1e-12);
                let avg: f64 = trace.iter().map(|r| variation_of_information(&q, &p(r)).unwrap()).sum::<f64>() / trace.len() as f64;
                prop_assert!(v.loss_value <= avg + 1e-12);
            }
        }
    }
}
