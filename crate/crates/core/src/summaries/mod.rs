//! Plot-ready summaries: histograms, box plots, group means with
//! hierarchical ordering, crosstabs and scatter downsamples.
//!
//! Counting is done per chunk in integers and merged, so results are exact
//! at any thread count. Float means use fixed-block pairwise sums.

mod groups;

use serde::{Deserialize, Serialize};

pub use groups::{
    crosstab, group_means, hierarchical_order, scatter_downsample, Axis, Crosstab, CrosstabNormalization,
    Dendrogram, Flow, GroupMeans, Merge, ScatterSample,
};

use crate::error::{Error, Result};
use crate::par;
use crate::stats::quantiles_select;
use crate::table::{CellTable, Warning, MISSING};

pub const DEFAULT_BINS: usize = 50;
const CHUNK: usize = 1 << 16;

/// Feature values from `layer` (default: raw features) as one column.
pub(crate) fn feature_column(table: &CellTable, feature: &str, layer: Option<&str>) -> Result<Vec<f32>> {
    let j = table.feature_index(feature)?;
    let m = table.layer(layer.unwrap_or(crate::table::FEATURES))?;
    if m.cols() == 1 {
        return Ok(m.as_slice().to_vec());
    }
    Ok((0..m.rows()).map(|i| m.get(i, j)).collect())
}

/// Group code per row (`None` when ungrouped) and the group labels.
fn grouping(table: &CellTable, group_by: Option<&str>) -> Result<(Option<Vec<u32>>, Vec<Option<String>>)> {
    match group_by {
        None => Ok((None, vec![None])),
        Some(name) => {
            let col = table.annotation(name)?;
            Ok((
                Some(col.codes().to_vec()),
                col.categories().iter().cloned().map(Some).collect(),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Bins {
    Count(usize),
    Edges(Vec<f64>),
}

/// Resolved bin edges. Bins are `[e_b, e_b+1)` except the last, which
/// also includes its upper edge.
#[derive(Clone, Debug, PartialEq)]
pub struct BinEdges {
    edges: Vec<f64>,
    uniform: bool,
}

impl BinEdges {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        let width = hi - lo;
        let mut edges: Vec<f64> = (0..=n).map(|b| lo + width * b as f64 / n as f64).collect();
        edges[n] = hi;
        Self { edges, uniform: true }
    }

    pub fn explicit(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("edges", "need at least 2 finite, strictly increasing edges"));
        }
        Ok(Self { edges, uniform: false })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin of `v`, or `None` when outside the edges (or NaN).
    #[inline]
    pub fn index(&self, v: f64) -> Option<usize> {
        let n = self.n_bins();
        let (lo, hi) = (self.edges[0], self.edges[n]);
        if !(v >= lo && v <= hi) {
            return None;
        }
        if !self.uniform {
            return Some((self.edges.partition_point(|&e| e <= v) - 1).min(n - 1));
        }
        let mut b = (((v - lo) / (hi - lo)) * n as f64) as usize;
        b = b.min(n - 1);
        // arithmetic can land one bin off near an edge
        if v < self.edges[b] {
            b -= 1;
        } else if b + 1 < n && v >= self.edges[b + 1] {
            b += 1;
        }
        Some(b)
    }
}

/// Finite min and max, or `None` if there is no finite value.
fn finite_range(values: &[f32]) -> Option<(f64, f64)> {
    par::map_chunks(values, CHUNK, |chunk| {
        chunk.iter().filter(|v| v.is_finite()).fold(None, |acc: Option<(f32, f32)>, &v| {
            Some(acc.map_or((v, v), |(a, b)| (a.min(v), b.max(v))))
        })
    })
    .into_iter()
    .flatten()
    .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    .map(|(a, b)| (f64::from(a), f64::from(b)))
}

fn resolve_bins(values: &[f32], bins: &Bins, warnings: &mut Vec<Warning>) -> Result<BinEdges> {
    match bins {
        Bins::Edges(e) => BinEdges::explicit(e.clone()),
        Bins::Count(0) => Err(Error::param("n_bins", "must be at least 1")),
        &Bins::Count(n) => {
            let (lo, hi) = finite_range(values).ok_or(Error::EmptyColumn)?;
            if lo == hi {
                warnings.push(Warning::new(
                    "constant_column",
                    format!("all values equal {lo}; bins centered on it"),
                ));
                return Ok(BinEdges::uniform(lo - 0.5, hi + 0.5, n));
            }
            Ok(BinEdges::uniform(lo, hi, n))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistogramCounts {
    pub counts: Vec<u64>,
    pub n_nan: u64,
    pub n_out_of_range: u64,
}

impl HistogramCounts {
    fn new(n_bins: usize) -> Self {
        Self {
            counts: vec![0; n_bins],
            ..Self::default()
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_nan += other.n_nan;
        self.n_out_of_range += other.n_out_of_range;
    }

    #[inline]
    fn push(&mut self, edges: &BinEdges, v: f64) {
        if v.is_nan() {
            self.n_nan += 1;
        } else if let Some(b) = edges.index(v) {
            self.counts[b] += 1;
        } else {
            self.n_out_of_range += 1;
        }
    }
}

/// Chunk-parallel counts of raw values; the hot path for large columns.
pub fn histogram_values(values: &[f32], bins: &Bins) -> Result<(BinEdges, HistogramCounts)> {
    let mut warnings = Vec::new();
    let edges = resolve_bins(values, bins, &mut warnings)?;
    let partials = par::map_chunks(values, CHUNK, |chunk| {
        let mut h = HistogramCounts::new(edges.n_bins());
        for &v in chunk {
            h.push(&edges, f64::from(v));
        }
        h
    });
    let mut total = HistogramCounts::new(edges.n_bins());
    for p in &partials {
        total.add(p);
    }
    Ok((edges, total))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramParams {
    /// Feature to bin; exclusive with `annotation`.
    #[serde(default)]
    pub feature: Option<String>,
    /// Annotation whose categories are counted; exclusive with `feature`.
    #[serde(default)]
    pub annotation: Option<String>,
    #[serde(default)]
    pub layer: Option<String>,
    #[serde(default)]
    pub n_bins: Option<usize>,
    #[serde(default)]
    pub edges: Option<Vec<f64>>,
    #[serde(default)]
    pub group_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramGroup {
    pub group: Option<String>,
    #[serde(flatten)]
    pub counts: HistogramCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub feature: Option<String>,
    pub annotation: Option<String>,
    pub layer: Option<String>,
    /// Bin edges for a feature histogram.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    /// Bar labels for an annotation histogram (counts per category).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    pub group_by: Option<String>,
    pub groups: Vec<HistogramGroup>,
    /// Cells left out because their `group_by` value is missing.
    pub n_missing_group: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

/// Per-group counts over row chunks: `value(i)` gives the bin input for
/// row `i`, NaN meaning missing.
fn grouped_counts(
    n: usize,
    group_codes: Option<&[u32]>,
    n_groups: usize,
    n_bins: usize,
    push: impl Fn(&mut HistogramCounts, usize) + Sync + Send,
) -> (Vec<HistogramCounts>, u64) {
    let n_chunks = n.div_ceil(CHUNK);
    let partials = par::map_range(n_chunks, |c| {
        let mut groups = vec![HistogramCounts::new(n_bins); n_groups];
        let mut missing = 0u64;
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let g = group_codes.map_or(0, |codes| codes[i]);
            if g == MISSING {
                missing += 1;
            } else {
                push(&mut groups[g as usize], i);
            }
        }
        (groups, missing)
    });
    let mut groups = vec![HistogramCounts::new(n_bins); n_groups];
    let mut missing = 0;
    for (p, m) in partials {
        for (a, b) in groups.iter_mut().zip(&p) {
            a.add(b);
        }
        missing += m;
    }
    (groups, missing)
}

pub fn histogram(table: &CellTable, params: &HistogramParams) -> Result<Histogram> {
    let (codes, labels) = grouping(table, params.group_by.as_deref())?;
    let n = table.n_cells();
    let mut warnings = Vec::new();
    let (edges, categories, (groups, n_missing_group)) = match (&params.feature, &params.annotation) {
        (Some(feature), None) => {
            let values = feature_column(table, feature, params.layer.as_deref())?;
            let bins = match (&params.edges, params.n_bins) {
                (Some(_), Some(_)) => return Err(Error::param("edges", "give either n_bins or edges")),
                (Some(e), None) => Bins::Edges(e.clone()),
                (None, b) => Bins::Count(b.unwrap_or(DEFAULT_BINS)),
            };
            let edges = resolve_bins(&values, &bins, &mut warnings)?;
            let counted = grouped_counts(n, codes.as_deref(), labels.len(), edges.n_bins(), |h, i| {
                h.push(&edges, f64::from(values[i]))
            });
            (Some(edges.edges().to_vec()), None, counted)
        }
        (None, Some(annotation)) => {
            let col = table.annotation(annotation)?;
            let values = col.codes();
            let counted = grouped_counts(n, codes.as_deref(), labels.len(), col.n_categories(), |h, i| {
                match values[i] {
                    MISSING => h.n_nan += 1,
                    c => h.counts[c as usize] += 1,
                }
            });
            (None, Some(col.categories().to_vec()), counted)
        }
        _ => return Err(Error::param("feature", "give exactly one of feature or annotation")),
    };
    let nan_total: u64 = groups.iter().map(|g| g.n_nan).sum();
    if nan_total > 0 {
        warnings.push(Warning::new(
            "missing_values",
            format!("{nan_total} cells have no value and are not binned"),
        ));
    }
    if n_missing_group > 0 {
        warnings.push(Warning::new(
            "missing_group",
            format!("{n_missing_group} cells have no group label and are excluded"),
        ));
    }
    Ok(Histogram {
        feature: params.feature.clone(),
        annotation: params.annotation.clone(),
        layer: params.layer.clone(),
        edges,
        categories,
        group_by: params.group_by.clone(),
        groups: labels
            .into_iter()
            .zip(groups)
            .map(|(group, counts)| HistogramGroup { group, counts })
            .collect(),
        n_missing_group,
        warnings,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxplotParams {
    pub feature: String,
    #[serde(default)]
    pub layer: Option<String>,
    #[serde(default)]
    pub group_by: Option<String>,
    /// Return up to this many outlier values per group (row order).
    #[serde(default)]
    pub outlier_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub group: Option<String>,
    pub n: usize,
    pub n_nan: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub n_outliers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outliers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub outliers_truncated: bool,
}

/// Box-plot statistics of non-NaN `values`: linear-interpolation
/// quartiles, whiskers at the most extreme values within 1.5 IQR of the
/// quartiles, outliers counted.
pub fn box_stats(values: &[f64], outlier_limit: Option<usize>) -> BoxStats {
    let mut sorted_part: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = sorted_part.len();
    let q = quantiles_select(&mut sorted_part, &[0.25, 0.5, 0.75]);
    let (q1, median, q3) = (q[0], q[1], q[2]);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let (whisker_lo, whisker_hi, n_outliers) = par::map_chunks(&sorted_part, CHUNK, |chunk| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut out = 0usize;
        for &v in chunk {
            if v < lo_fence || v > hi_fence {
                out += 1;
            } else {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi, out)
    })
    .into_iter()
    .fold((f64::INFINITY, f64::NEG_INFINITY, 0), |a, b| (a.0.min(b.0), a.1.max(b.1), a.2 + b.2));
    let (outliers, outliers_truncated) = match outlier_limit {
        Some(limit) => {
            let all = values.iter().filter(|&&v| v < lo_fence || v > hi_fence);
            (Some(all.clone().take(limit).copied().collect()), n_outliers > limit)
        }
        None => (None, false),
    };
    let finite_or_nan = |v: f64| if v.is_finite() { v } else { f64::NAN };
    BoxStats {
        group: None,
        n,
        n_nan: values.len() - n,
        q1,
        median,
        q3,
        whisker_lo: finite_or_nan(whisker_lo),
        whisker_hi: finite_or_nan(whisker_hi),
        n_outliers,
        outliers,
        outliers_truncated,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boxplot {
    pub feature: String,
    pub layer: Option<String>,
    pub group_by: Option<String>,
    pub groups: Vec<BoxStats>,
    pub n_missing_group: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

pub fn boxplot_stats(table: &CellTable, params: &BoxplotParams) -> Result<Boxplot> {
    let values = feature_column(table, &params.feature, params.layer.as_deref())?;
    let (codes, labels) = grouping(table, params.group_by.as_deref())?;
    let mut per_group: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut n_missing_group = 0;
    match &codes {
        None => per_group[0] = values.iter().map(|&v| f64::from(v)).collect(),
        Some(codes) => {
            for (&v, &c) in values.iter().zip(codes) {
                if c == MISSING {
                    n_missing_group += 1;
                } else {
                    per_group[c as usize].push(f64::from(v));
                }
            }
        }
    }
    let mut warnings = Vec::new();
    let groups: Vec<BoxStats> = labels
        .into_iter()
        .zip(&per_group)
        .map(|(group, vals)| {
            let mut s = box_stats(vals, params.outlier_limit);
            if s.n == 0 {
                warnings.push(Warning::new(
                    "empty_group",
                    format!("group {} has no values; statistics are NaN", group.as_deref().unwrap_or("(all)")),
                ));
            }
            s.group = group;
            s
        })
        .collect();
    if n_missing_group > 0 {
        warnings.push(Warning::new(
            "missing_group",
            format!("{n_missing_group} cells have no group label and are excluded"),
        ));
    }
    Ok(Boxplot {
        feature: params.feature.clone(),
        layer: params.layer.clone(),
        group_by: params.group_by.clone(),
        groups,
        n_missing_group,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature(values: &[f32]) -> CellTable {
        let coords: Vec<(f64, f64)> = (0..values.len()).map(|i| (i as f64, 0.0)).collect();
        CellTable::from_parts(&coords, vec!["f".into()], values.to_vec()).unwrap()
    }

    #[test]
    fn last_bin_inclusive() {
        let (edges, h) = histogram_values(&[0.0, 0.5, 1.0], &Bins::Count(2)).unwrap();
        assert_eq!(edges.edges(), &[0.0, 0.5, 1.0]);
        assert_eq!(h.counts, vec![1, 2]);
    }

    #[test]
    fn nan_conservation_and_empty() {
        let t = one_feature(&[1.0, f32::NAN, 3.0, 2.0]);
        let p = HistogramParams {
            feature: Some("f".into()),
            n_bins: Some(3),
            ..Default::default()
        };
        let h = histogram(&t, &p).unwrap();
        let g = &h.groups[0].counts;
        assert_eq!(g.counts.iter().sum::<u64>() + g.n_nan, 4);
        assert_eq!(h.warnings[0].code, "missing_values");
        let t = one_feature(&[f32::NAN]);
        assert!(matches!(histogram(&t, &p), Err(Error::EmptyColumn)));
    }

    #[test]
    fn explicit_edges_out_of_range() {
        let (_, h) = histogram_values(&[-1.0, 0.0, 2.0, 2.5], &Bins::Edges(vec![0.0, 1.0, 2.0])).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.n_out_of_range, 2);
    }

    #[test]
    fn uniform_index_agrees_with_edges() {
        let e = BinEdges::uniform(0.1, 0.7, 6);
        for k in 0..=6000 {
            let v = 0.1 + 0.6 * f64::from(k) / 6000.0;
            let b = e.index(v).unwrap();
            assert!(e.edges()[b] <= v && (v < e.edges()[b + 1] || b == 5), "{v} -> {b}");
        }
    }

    #[test]
    fn box_hand_example() {
        let s = box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], None);
        assert_eq!((s.q1, s.median, s.q3), (2.5, 4.0, 5.5));
        assert_eq!((s.whisker_lo, s.whisker_hi, s.n_outliers), (1.0, 7.0, 0));
        let c = box_stats(&[3.0; 5], None);
        assert_eq!((c.q1, c.median, c.q3, c.whisker_lo, c.whisker_hi, c.n_outliers), (3.0, 3.0, 3.0, 3.0, 3.0, 0));
        let o = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0], Some(5));
        assert_eq!(o.n_outliers, 1);
        assert_eq!(o.outliers, Some(vec![100.0]));
        assert_eq!(o.whisker_hi, 4.0);
    }

    #[test]
    fn annotation_histogram_counts_categories() {
        let t = one_feature(&[0.0; 4]).add_annotation("ph", &["T", "B", "T", "T"]).unwrap();
        let p = HistogramParams {
            annotation: Some("ph".into()),
            ..Default::default()
        };
        let h = histogram(&t, &p).unwrap();
        assert_eq!(h.categories, Some(vec!["T".to_string(), "B".to_string()]));
        assert_eq!(h.groups[0].counts.counts, vec![3, 1]);
    }
}
