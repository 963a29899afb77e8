//! Shared numeric helpers.
//!
//! One quantile definition is used everywhere: linear interpolation between
//! order statistics, `h = (n - 1) q`, `Q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.

use crate::par;

/// Quantile of an ascending, NaN-free slice. Returns NaN when empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Several quantiles of NaN-free `values` without a full sort. `values` is
/// reordered in place.
pub fn quantiles_select(values: &mut [f64], qs: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return vec![f64::NAN; qs.len()];
    }
    let order_stat = |values: &mut [f64], k: usize| -> f64 {
        let (_, v, _) = values.select_nth_unstable_by(k, f64::total_cmp);
        *v
    };
    qs.iter()
        .map(|&q| {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            let a = order_stat(values, lo);
            if frac == 0.0 || lo + 1 >= n {
                return a;
            }
            // After selecting `lo`, the next order statistic is the minimum
            // of the upper partition.
            let b = values[lo + 1..]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            a + frac * (b - a)
        })
        .collect()
}

/// Mean and population standard deviation of the finite-or-infinite,
/// non-NaN values. `None` when there are none.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64, usize)> {
    let valid: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if valid.is_empty() {
        return None;
    }
    let n = valid.len() as f64;
    let mean = par::pairwise_sum(&valid) / n;
    let sq: Vec<f64> = valid.iter().map(|v| (v - mean) * (v - mean)).collect();
    Some((mean, (par::pairwise_sum(&sq) / n).sqrt(), valid.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolated_quartiles() {
        let v: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(quantile_sorted(&v, 0.25), 2.5);
        assert_eq!(quantile_sorted(&v, 0.5), 4.0);
        assert_eq!(quantile_sorted(&v, 0.75), 5.5);
    }

    proptest! {
        #[test]
        fn select_matches_sort(mut v in prop::collection::vec(-1e3f64..1e3, 1..200), q in 0.0f64..=1.0) {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let expected = quantile_sorted(&sorted, q);
            let got = quantiles_select(&mut v, &[q])[0];
            prop_assert!((expected - got).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }
}
