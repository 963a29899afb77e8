use cellscape::stats::quantile_sorted;
use cellscape::summaries::{
    box_stats, boxplot_stats, crosstab, group_means, histogram, histogram_values, Bins, BoxplotParams,
    CrosstabNormalization, HistogramParams,
};
use cellscape::{par, CellTable};
use proptest::prelude::*;
use rand::Rng;

fn random_table(n: usize, seed: u64) -> CellTable {
    let mut rng = par::rng(seed);
    let coords: Vec<(f64, f64)> = (0..n).map(|i| (i as f64, 0.0)).collect();
    let values: Vec<f32> = (0..n * 2)
        .map(|_| if rng.random::<f64>() < 0.05 { f32::NAN } else { rng.random_range(-3.0f32..3.0) })
        .collect();
    let groups: Vec<&str> = (0..n).map(|_| ["a", "b", "c"][rng.random_range(0..3)]).collect();
    let other: Vec<&str> = (0..n).map(|_| ["x", "y"][rng.random_range(0..2)]).collect();
    CellTable::from_parts(&coords, vec!["f0".into(), "f1".into()], values)
        .unwrap()
        .add_annotation("g", &groups)
        .unwrap()
        .add_annotation("h", &other)
        .unwrap()
}

#[test]
fn histogram_parallel_equals_sequential_reference() {
    let t = random_table(200_000, 1);
    let p = HistogramParams {
        feature: Some("f1".into()),
        n_bins: Some(37),
        group_by: Some("g".into()),
        ..Default::default()
    };
    let par4 = par::with_threads(Some(4), || histogram(&t, &p).unwrap());
    let seq = par::with_threads(Some(1), || histogram(&t, &p).unwrap());
    assert_eq!(par4, seq);
    // naive single loop
    let edges = par4.edges.clone().unwrap();
    let codes = t.annotation("g").unwrap().codes();
    let mut reference = vec![vec![0u64; 37]; 3];
    let mut nan = 0;
    for i in 0..t.n_cells() {
        let v = f64::from(t.features().get(i, 1));
        if v.is_nan() {
            nan += 1;
            continue;
        }
        let b = (0..37).find(|&b| v >= edges[b] && (v < edges[b + 1] || b == 36)).unwrap();
        reference[codes[i] as usize][b] += 1;
    }
    for g in 0..3 {
        assert_eq!(par4.groups[g].counts.counts, reference[g]);
    }
    let total: u64 = par4.groups.iter().map(|g| g.counts.counts.iter().sum::<u64>() + g.counts.n_nan).sum();
    assert_eq!(total, t.n_cells() as u64);
    assert_eq!(par4.groups.iter().map(|g| g.counts.n_nan).sum::<u64>(), nan);
}

#[test]
fn boxplot_and_means_thread_invariant() {
    let t = random_table(50_000, 2);
    let bp = BoxplotParams {
        feature: "f0".into(),
        group_by: Some("g".into()),
        ..Default::default()
    };
    let a = par::with_threads(Some(1), || (boxplot_stats(&t, &bp).unwrap(), group_means(&t, None, "g").unwrap()));
    let b = par::with_threads(Some(4), || (boxplot_stats(&t, &bp).unwrap(), group_means(&t, None, "g").unwrap()));
    assert_eq!(a, b);
    // weighted recombination of group means gives the overall mean
    let m = &a.1;
    let col: Vec<f64> = (0..t.n_cells()).map(|i| f64::from(t.features().get(i, 0))).filter(|v| !v.is_nan()).collect();
    let overall = col.iter().sum::<f64>() / col.len() as f64;
    let recombined: f64 = (0..3).map(|g| m.counts[g][0] as f64 * m.means[g][0]).sum::<f64>()
        / (0..3).map(|g| m.counts[g][0] as f64).sum::<f64>();
    assert!((overall - recombined).abs() <= 1e-9 * overall.abs().max(1.0));
}

#[test]
fn crosstab_conservation() {
    let t = random_table(10_000, 3);
    let c = crosstab(&t, "g", "h", CrosstabNormalization::Row).unwrap();
    assert_eq!(c.counts.iter().flatten().sum::<u64>() as usize, t.n_cells() - c.n_missing);
    for row in &c.values {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn box_stats_match_sort_oracle(values in prop::collection::vec(-1000i32..1000, 1..400)) {
        let v: Vec<f64> = values.iter().map(|&x| f64::from(x) / 7.0).collect();
        let s = box_stats(&v, None);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75));
        prop_assert_eq!(s.q1, q1);
        prop_assert_eq!(s.median, quantile_sorted(&sorted, 0.5));
        prop_assert_eq!(s.q3, q3);
        let (lo, hi) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
        let inside: Vec<f64> = sorted.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
        prop_assert_eq!(s.whisker_lo, inside[0]);
        prop_assert_eq!(s.whisker_hi, *inside.last().unwrap());
        prop_assert_eq!(s.n_outliers, sorted.len() - inside.len());
    }

    #[test]
    fn histogram_counts_conserved(values in prop::collection::vec(prop::num::f32::ANY, 0..300), bins in 1usize..20) {
        if let Ok((_, h)) = histogram_values(&values, &Bins::Count(bins)) {
            prop_assert_eq!(h.counts.iter().sum::<u64>() + h.n_nan + h.n_out_of_range, values.len() as u64);
        }
    }
}
