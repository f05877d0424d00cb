//! Order-fixed reductions for Monte Carlo estimators.
//!
//! Per-path results are computed in parallel and collected in path order;
//! all sums then run sequentially with a fixed pairwise tree, so estimates
//! are bit-identical for any number of worker threads.

use rayon::prelude::*;

/// Parallel map over `0..count`, results in index order.
pub fn par_map_paths<T, F>(range: std::ops::Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    range.into_par_iter().map(f).collect()
}

/// Pairwise (cascade) summation with a fixed split point.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Delta-method propagation of a standard error through `sqrt`.
pub fn sqrt_with_stderr(mean: f64, se: f64) -> (f64, f64) {
    let root = mean.max(0.0).sqrt();
    if root == 0.0 {
        return (0.0, se.sqrt());
    }
    (root, se / (2.0 * root))
}

/// Splits `0..total` into `batches` contiguous ranges whose sizes differ by at most one.
pub fn batch_ranges(total: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    let batches = batches.clamp(1, total.max(1));
    let base = total / batches;
    let extra = total % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Element-wise pairwise sum of equally sized rows, in row order.
pub fn pairwise_sum_rows(rows: &[&[f64]]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].to_vec(),
        n if n <= 32 => {
            let mut acc = rows[0].to_vec();
            for row in &rows[1..] {
                for (a, v) in acc.iter_mut().zip(row.iter()) {
                    *a += v;
                }
            }
            acc
        }
        n => {
            let (lo, hi) = rows.split_at(n / 2);
            let mut a = pairwise_sum_rows(lo);
            let b = pairwise_sum_rows(hi);
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integer_sums() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, 1.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(pairwise_sum_rows(&refs), vec![4950.0, 100.0]);
    }

    #[test]
    fn batches_cover_range() {
        let b = batch_ranges(10_003, 10);
        assert_eq!(b.len(), 10);
        assert_eq!(b[0], 0..1001);
        assert_eq!(b.last().unwrap().end, 10_003);
        assert_eq!(batch_ranges(3, 10).len(), 3);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        let (m, se) = mean_and_stderr(&[2.0; 50]);
        assert_eq!((m, se), (2.0, 0.0));
    }

    #[test]
    fn par_map_keeps_order() {
        let v = par_map_paths(0..1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
