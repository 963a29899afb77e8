//! Feature normalization and manual phenotyping.
//!
//! Every transform reads one layer and writes a new one; the source layer is
//! never modified. Columns (features) are processed independently and in
//! parallel.

mod phenotype;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use phenotype::{
    apply_phenotype_rules, parse_pattern, phenotype, threshold_features, PhenotypeRule,
    PhenotypeSpec, RuleSpec, Sign, ThresholdSet,
};

use crate::error::{Error, Result};
use crate::par;
use crate::stats::{mean_std, quantiles_select};
use crate::table::{CellTable, Matrix, ProvenanceRecord, Warning, MISSING};

pub const DEFAULT_COFACTOR: f64 = 5.0;

fn column_f64(m: &Matrix<f32>, j: usize) -> Vec<f64> {
    (0..m.rows()).map(|i| f64::from(m.get(i, j))).collect()
}

fn to_layer(rows: usize, columns: Vec<Vec<f64>>) -> Result<Matrix<f32>> {
    let cols: Vec<Vec<f32>> = columns
        .into_iter()
        .map(|c| c.into_iter().map(|v| v as f32).collect())
        .collect();
    Matrix::from_columns(rows, &cols)
}

/// `asinh(x / cofactor)` elementwise; NaN propagates.
pub fn arcsinh(table: &CellTable, source_layer: &str, cofactor: f64, out_layer: &str) -> Result<CellTable> {
    if !(cofactor > 0.0) || !cofactor.is_finite() {
        return Err(Error::NonPositiveCofactor(cofactor));
    }
    let src = table.layer(source_layer)?;
    let data: Vec<f32> = par::map_chunks(src.as_slice(), par::BLOCK, |chunk| {
        chunk
            .iter()
            .map(|&v| (f64::from(v) / cofactor).asinh() as f32)
            .collect::<Vec<f32>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let layer = Matrix::new(src.rows(), src.cols(), data)?;
    let record = ProvenanceRecord::new(
        "arcsinh",
        json!({ "source_layer": source_layer, "cofactor": cofactor, "out_layer": out_layer }),
    );
    table.with_layer(out_layer, layer, record)
}

/// Standardizes one column with population σ. Returns the warning for a
/// constant column.
fn zscore_column(values: &mut [f64], name: &str) -> Result<Option<Warning>> {
    let (mean, std, n) = mean_std(values).ok_or_else(|| Error::TooFewValues {
        feature: name.to_string(),
    })?;
    if n < 2 {
        return Err(Error::TooFewValues {
            feature: name.to_string(),
        });
    }
    if std == 0.0 {
        values.iter_mut().filter(|v| !v.is_nan()).for_each(|v| *v = 0.0);
        return Ok(Some(Warning::new(
            "constant_feature",
            format!("`{name}` is constant; z-scores set to 0"),
        )));
    }
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    Ok(None)
}

/// Per-feature `(x - μ) / σ` with population σ; NaN excluded from the
/// moments and propagated.
pub fn zscore(table: &CellTable, source_layer: &str, out_layer: &str) -> Result<CellTable> {
    let src = table.layer(source_layer)?;
    let names = table.feature_names();
    let per_feature = par::map_range(src.cols(), |j| {
        let mut col = column_f64(src, j);
        zscore_column(&mut col, &names[j]).map(|w| (col, w))
    });
    let mut columns = Vec::with_capacity(per_feature.len());
    let mut warnings = Vec::new();
    for r in per_feature {
        let (col, w) = r?;
        columns.push(col);
        warnings.extend(w);
    }
    let layer = to_layer(src.rows(), columns)?;
    let record = ProvenanceRecord::new(
        "zscore",
        json!({ "source_layer": source_layer, "out_layer": out_layer }),
    )
    .with_warnings(warnings);
    table.with_layer(out_layer, layer, record)
}

fn rescale_column(values: &mut [f64], q_low: f64, q_high: f64, name: &str) -> Option<Warning> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if finite.is_empty() {
        return Some(Warning::new("empty_feature", format!("`{name}` has no values")));
    }
    let q = quantiles_select(&mut finite, &[q_low, q_high]);
    let (lo, hi) = (q[0], q[1]);
    if hi == lo {
        values.iter_mut().filter(|v| !v.is_nan()).for_each(|v| *v = 0.0);
        return Some(Warning::new(
            "constant_feature",
            format!("`{name}` has zero quantile range; rescaled to 0"),
        ));
    }
    let span = hi - lo;
    values
        .iter_mut()
        .for_each(|v| *v = (v.clamp(lo, hi) - lo) / span);
    None
}

/// Clips each feature to its `[q_low, q_high]` quantiles and maps the
/// result linearly onto `[0, 1]`.
pub fn quantile_rescale(
    table: &CellTable,
    source_layer: &str,
    q_low: f64,
    q_high: f64,
    out_layer: &str,
) -> Result<CellTable> {
    if !(0.0..1.0).contains(&q_low) || !(q_low < q_high && q_high <= 1.0) {
        return Err(Error::InvalidQuantileRange { q_low, q_high });
    }
    let src = table.layer(source_layer)?;
    let names = table.feature_names();
    let per_feature = par::map_range(src.cols(), |j| {
        let mut col = column_f64(src, j);
        let w = rescale_column(&mut col, q_low, q_high, &names[j]);
        (col, w)
    });
    let mut columns = Vec::with_capacity(per_feature.len());
    let mut warnings = Vec::new();
    for (col, w) in per_feature {
        columns.push(col);
        warnings.extend(w);
    }
    let layer = to_layer(src.rows(), columns)?;
    let record = ProvenanceRecord::new(
        "quantile_rescale",
        json!({ "source_layer": source_layer, "q_low": q_low, "q_high": q_high, "out_layer": out_layer }),
    )
    .with_warnings(warnings);
    table.with_layer(out_layer, layer, record)
}

/// Per-feature min-max scaling to `[0, 1]`.
pub fn rescale(table: &CellTable, source_layer: &str, out_layer: &str) -> Result<CellTable> {
    quantile_rescale(table, source_layer, 0.0, 1.0, out_layer)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMethod {
    Zscore,
    #[serde(alias = "median")]
    MedianCenter,
}

/// Applies `method` independently within each level of `batch_annotation`.
/// Cells with a missing batch value get NaN.
pub fn batch_normalize(
    table: &CellTable,
    source_layer: &str,
    batch_annotation: &str,
    method: BatchMethod,
    out_layer: &str,
) -> Result<CellTable> {
    let src = table.layer(source_layer)?;
    let batches = table.annotation(batch_annotation)?;
    let (counts, n_missing) = batches.counts();
    if method == BatchMethod::Zscore {
        if let Some((b, _)) = counts.iter().enumerate().find(|(_, &c)| c == 1) {
            return Err(Error::BatchTooSmall {
                batch: batches.categories()[b].clone(),
            });
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &c) in batches.codes().iter().enumerate() {
        if c != MISSING {
            members[c as usize].push(i);
        }
    }
    let names = table.feature_names();
    let per_feature: Vec<Result<(Vec<f64>, Vec<Warning>)>> = par::map_range(src.cols(), |j| {
        let mut out = vec![f64::NAN; src.rows()];
        let mut warnings = Vec::new();
        for (b, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let mut vals: Vec<f64> = rows.iter().map(|&i| f64::from(src.get(i, j))).collect();
            match method {
                BatchMethod::Zscore => {
                    let label = format!("{} [{}]", names[j], batches.categories()[b]);
                    if let Some(w) = zscore_column(&mut vals, &label)? {
                        warnings.push(w);
                    }
                }
                BatchMethod::MedianCenter => {
                    let mut finite: Vec<f64> = vals.iter().copied().filter(|v| !v.is_nan()).collect();
                    let median = quantiles_select(&mut finite, &[0.5])[0];
                    vals.iter_mut().for_each(|v| *v -= median);
                }
            }
            for (&i, v) in rows.iter().zip(vals) {
                out[i] = v;
            }
        }
        Ok((out, warnings))
    });
    let mut columns = Vec::with_capacity(per_feature.len());
    let mut warnings = Vec::new();
    for r in per_feature {
        let (col, w) = r?;
        columns.push(col);
        warnings.extend(w);
    }
    if n_missing > 0 {
        warnings.push(Warning::new(
            "missing_batch",
            format!("{n_missing} cells have no batch value; output is NaN"),
        ));
    }
    let layer = to_layer(src.rows(), columns)?;
    let record = ProvenanceRecord::new(
        "batch_normalize",
        json!({
            "source_layer": source_layer,
            "batch_annotation": batch_annotation,
            "method": method,
            "out_layer": out_layer,
        }),
    )
    .with_warnings(warnings);
    table.with_layer(out_layer, layer, record)
}
