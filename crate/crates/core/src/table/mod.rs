//! Columnar cell table: coordinates, feature matrix, derived layers,
//! categorical annotations and associated per-cell matrices.

mod categorical;
pub mod container;
mod matrix;
mod provenance;
mod select;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde_json::json;

pub use categorical::{CategoricalColumn, MISSING};
pub use matrix::{BitPattern, Matrix};
pub use provenance::{ProvenanceRecord, Warning};
pub use select::{Cmp, Predicate};

use crate::error::{Error, Result};
use crate::par;

/// Name under which the raw feature matrix is addressed as a layer.
pub const FEATURES: &str = "features";

/// A per-cell numeric matrix other than the features (embeddings,
/// neighborhood profiles) with its column labels.
#[derive(Clone, Debug)]
pub struct AssociatedTable {
    pub matrix: Matrix<f32>,
    pub column_labels: Vec<String>,
    /// Free-form axis metadata (e.g. profile bin edges).
    pub meta: serde_json::Value,
}

impl AssociatedTable {
    pub fn new(matrix: Matrix<f32>, column_labels: Vec<String>) -> Result<Self> {
        if column_labels.len() != matrix.cols() {
            return Err(Error::LengthMismatch {
                what: "associated column labels".into(),
                expected: matrix.cols(),
                actual: column_labels.len(),
            });
        }
        Ok(Self {
            matrix,
            column_labels,
            meta: serde_json::Value::Null,
        })
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }
}

#[derive(Clone, Debug)]
pub struct CellTable {
    cell_ids: Arc<Vec<String>>,
    coords: Matrix<f64>,
    features: Matrix<f32>,
    feature_names: Vec<String>,
    layers: BTreeMap<String, Matrix<f32>>,
    annotations: BTreeMap<String, CategoricalColumn>,
    associated: BTreeMap<String, AssociatedTable>,
    provenance: Vec<ProvenanceRecord>,
    slide_label: Option<String>,
}

impl CellTable {
    /// Creates a table from its mandatory columns. Coordinates must be an
    /// `n × 2` matrix of finite values.
    pub fn new(
        cell_ids: Vec<String>,
        coords: Matrix<f64>,
        features: Matrix<f32>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = cell_ids.len();
        check_rows("coords", n, coords.rows())?;
        check_rows("features", n, features.rows())?;
        if coords.cols() != 2 {
            return Err(Error::InvalidTable(format!(
                "coords must have 2 columns, got {}",
                coords.cols()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::LengthMismatch {
                what: "feature_names".into(),
                expected: features.cols(),
                actual: feature_names.len(),
            });
        }
        check_unique(&feature_names)?;
        if let Some(pos) = coords.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTable(format!(
                "non-finite coordinate at row {}",
                pos / 2
            )));
        }
        Ok(Self {
            cell_ids: Arc::new(cell_ids),
            coords,
            features,
            feature_names,
            layers: BTreeMap::new(),
            annotations: BTreeMap::new(),
            associated: BTreeMap::new(),
            provenance: Vec::new(),
            slide_label: None,
        })
    }

    /// Convenience constructor with row-index ids.
    pub fn from_parts(
        xy: &[(f64, f64)],
        feature_names: Vec<String>,
        features: Vec<f32>,
    ) -> Result<Self> {
        let n = xy.len();
        let ids = (0..n).map(|i| i.to_string()).collect();
        let coords = Matrix::new(n, 2, xy.iter().flat_map(|&(x, y)| [x, y]).collect())?;
        let n_features = feature_names.len();
        let features = Matrix::new(n, n_features, features)?;
        Self::new(ids, coords, features, feature_names)
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn coords(&self) -> &Matrix<f64> {
        &self.coords
    }

    pub fn xy(&self, i: usize) -> [f64; 2] {
        let r = self.coords.row(i);
        [r[0], r[1]]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.n_cells()).map(|i| self.xy(i)).collect()
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn layers(&self) -> &BTreeMap<String, Matrix<f32>> {
        &self.layers
    }

    /// Looks up a layer; [`FEATURES`] names the raw feature matrix.
    pub fn layer(&self, name: &str) -> Result<&Matrix<f32>> {
        if name == FEATURES {
            return Ok(&self.features);
        }
        self.layers
            .get(name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn annotations(&self) -> &BTreeMap<String, CategoricalColumn> {
        &self.annotations
    }

    pub fn annotation(&self, name: &str) -> Result<&CategoricalColumn> {
        self.annotations
            .get(name)
            .ok_or_else(|| Error::UnknownAnnotation(name.to_string()))
    }

    pub fn associated(&self) -> &BTreeMap<String, AssociatedTable> {
        &self.associated
    }

    pub fn provenance(&self) -> &[ProvenanceRecord] {
        &self.provenance
    }

    pub fn slide_label(&self) -> Option<&str> {
        self.slide_label.as_deref()
    }

    pub fn with_slide_label(mut self, label: Option<String>) -> Self {
        self.slide_label = label;
        self
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)`; `None` when empty.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        bounding_box(self.coords.as_slice().chunks_exact(2).map(|c| [c[0], c[1]]))
    }

    pub(crate) fn push_record(&mut self, record: ProvenanceRecord) {
        self.provenance.push(record);
    }

    pub fn with_record(mut self, record: ProvenanceRecord) -> Self {
        self.push_record(record);
        self
    }

    /// Adds a derived layer, appending `record`.
    pub fn with_layer(&self, name: &str, layer: Matrix<f32>, record: ProvenanceRecord) -> Result<Self> {
        if name == FEATURES || self.layers.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if layer.shape() != self.features.shape() {
            return Err(Error::InvalidTable(format!(
                "layer `{name}` has shape {:?}, features have {:?}",
                layer.shape(),
                self.features.shape()
            )));
        }
        let mut out = self.clone();
        out.layers.insert(name.to_string(), layer);
        out.push_record(record);
        Ok(out)
    }

    /// Adds a categorical annotation, appending `record`.
    pub fn with_annotation(
        &self,
        name: &str,
        column: CategoricalColumn,
        record: ProvenanceRecord,
    ) -> Result<Self> {
        if self.annotations.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        check_rows(name, self.n_cells(), column.len())?;
        let mut out = self.clone();
        out.annotations.insert(name.to_string(), column);
        out.push_record(record);
        Ok(out)
    }

    /// Adds an associated matrix, appending `record`.
    pub fn with_associated(
        &self,
        name: &str,
        table: AssociatedTable,
        record: ProvenanceRecord,
    ) -> Result<Self> {
        if self.associated.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        check_rows(name, self.n_cells(), table.matrix.rows())?;
        let mut out = self.clone();
        out.associated.insert(name.to_string(), table);
        out.push_record(record);
        Ok(out)
    }

    /// Adds an annotation from string labels; categories follow first
    /// appearance.
    pub fn add_annotation<S: AsRef<str>>(&self, name: &str, values: &[S]) -> Result<Self> {
        if self.annotations.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        check_rows(name, self.n_cells(), values.len())?;
        let column = CategoricalColumn::from_labels(values);
        let record = ProvenanceRecord::new(
            "add_annotation",
            json!({ "name": name, "n_categories": column.n_categories() }),
        );
        self.with_annotation(name, column, record)
    }

    /// Row subset in the given order. Every column is subset consistently;
    /// provenance is carried over unchanged.
    pub fn take_rows(&self, indices: &[usize]) -> Self {
        Self {
            cell_ids: Arc::new(indices.iter().map(|&i| self.cell_ids[i].clone()).collect()),
            coords: self.coords.take_rows(indices),
            features: self.features.take_rows(indices),
            feature_names: self.feature_names.clone(),
            layers: self
                .layers
                .iter()
                .map(|(k, m)| (k.clone(), m.take_rows(indices)))
                .collect(),
            annotations: self
                .annotations
                .iter()
                .map(|(k, c)| (k.clone(), c.take_rows(indices)))
                .collect(),
            associated: self
                .associated
                .iter()
                .map(|(k, a)| {
                    (
                        k.clone(),
                        AssociatedTable {
                            matrix: a.matrix.take_rows(indices),
                            column_labels: a.column_labels.clone(),
                            meta: a.meta.clone(),
                        },
                    )
                })
                .collect(),
            provenance: self.provenance.clone(),
            slide_label: self.slide_label.clone(),
        }
    }

    /// Rows matching `predicate`, in original order. An empty result is a
    /// valid 0-row table.
    pub fn select(&self, predicate: &Predicate) -> Result<Self> {
        let rows = self.matching_rows(predicate)?;
        let record = ProvenanceRecord::new(
            "select",
            json!({ "predicate": predicate, "n_selected": rows.len() }),
        );
        Ok(self.take_rows(&rows).with_record(record))
    }

    /// Indices of rows satisfying `predicate`.
    pub fn matching_rows(&self, predicate: &Predicate) -> Result<Vec<usize>> {
        let compiled = predicate.compile(self)?;
        let mask = par::map_range(self.n_cells(), |i| compiled.eval(i));
        Ok(mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect())
    }

    /// Deterministic random subsample of `n` cells (see
    /// [`downsample_indices`]).
    pub fn downsample(&self, n: usize, stratify_by: Option<&str>, seed: u64) -> Result<Self> {
        let rows = downsample_indices(self, n, stratify_by, seed)?;
        let record = ProvenanceRecord::new(
            "downsample",
            json!({ "n": n, "stratify_by": stratify_by, "seed": seed, "n_selected": rows.len() }),
        );
        Ok(self.take_rows(&rows).with_record(record))
    }

    /// Field-by-field equality with floats compared by bit pattern.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.cell_ids == other.cell_ids
            && self.coords.bits_eq(&other.coords)
            && self.features.bits_eq(&other.features)
            && self.feature_names == other.feature_names
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(other.layers.iter())
                .all(|((ka, a), (kb, b))| ka == kb && a.bits_eq(b))
            && self.annotations == other.annotations
            && self.associated.len() == other.associated.len()
            && self
                .associated
                .iter()
                .zip(other.associated.iter())
                .all(|((ka, a), (kb, b))| {
                    ka == kb
                        && a.matrix.bits_eq(&b.matrix)
                        && a.column_labels == b.column_labels
                        && a.meta == b.meta
                })
            && self.provenance == other.provenance
            && self.slide_label == other.slide_label
    }

    // Used by the container loader, which restores maps wholesale.
    pub(crate) fn restore(
        mut self,
        layers: BTreeMap<String, Matrix<f32>>,
        annotations: BTreeMap<String, CategoricalColumn>,
        associated: BTreeMap<String, AssociatedTable>,
        provenance: Vec<ProvenanceRecord>,
        slide_label: Option<String>,
    ) -> Result<Self> {
        for (name, layer) in &layers {
            if name == FEATURES || layer.shape() != self.features.shape() {
                return Err(Error::InvalidTable(format!("bad layer `{name}`")));
            }
        }
        for (name, col) in &annotations {
            check_rows(name, self.n_cells(), col.len())?;
        }
        for (name, a) in &associated {
            check_rows(name, self.n_cells(), a.matrix.rows())?;
        }
        self.layers = layers;
        self.annotations = annotations;
        self.associated = associated;
        self.provenance = provenance;
        self.slide_label = slide_label;
        Ok(self)
    }

    pub(crate) fn replace_annotations(&mut self, annotations: BTreeMap<String, CategoricalColumn>) {
        self.annotations = annotations;
    }

    pub(crate) fn replace_layers(&mut self, layers: BTreeMap<String, Matrix<f32>>) {
        self.layers = layers;
    }

    pub(crate) fn replace_associated(&mut self, associated: BTreeMap<String, AssociatedTable>) {
        self.associated = associated;
    }
}

pub(crate) fn bounding_box(points: impl Iterator<Item = [f64; 2]>) -> Option<(f64, f64, f64, f64)> {
    let mut bb: Option<(f64, f64, f64, f64)> = None;
    for [x, y] in points {
        bb = Some(match bb {
            None => (x, x, y, y),
            Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
        });
    }
    bb
}

fn check_rows(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch {
            what: what.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateName(name.clone()));
        }
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` over strata with the given sizes.
/// Remainder ties go to the lower stratum index.
pub fn largest_remainder_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let n = n.min(total);
    let mut quotas: Vec<usize> = Vec::with_capacity(sizes.len());
    // Exact integer arithmetic: quota = floor(n*size/total), remainder = n*size mod total.
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    for (i, &s) in sizes.iter().enumerate() {
        let num = n as u128 * s as u128;
        quotas.push((num / total as u128) as usize);
        remainders.push((num % total as u128, i));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(n - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Sorted row indices of a deterministic subsample.
///
/// Without stratification this is a uniform sample without replacement.
/// With stratification each category (plus missing cells, as their own
/// stratum) receives a largest-remainder quota and is sampled with the seed
/// `derive_seed(seed, stratum index)`. `n >= n_cells` returns every row.
pub fn downsample_indices(
    table: &CellTable,
    n: usize,
    stratify_by: Option<&str>,
    seed: u64,
) -> Result<Vec<usize>> {
    let n_cells = table.n_cells();
    let strata_col = stratify_by.map(|s| table.annotation(s)).transpose()?;
    if n >= n_cells {
        return Ok((0..n_cells).collect());
    }
    let Some(col) = strata_col else {
        let mut rng = par::rng(seed);
        let mut rows = rand::seq::index::sample(&mut rng, n_cells, n).into_vec();
        rows.sort_unstable();
        return Ok(rows);
    };
    let n_strata = col.n_categories() + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for (i, &c) in col.codes().iter().enumerate() {
        let s = if c == MISSING { n_strata - 1 } else { c as usize };
        members[s].push(i);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = largest_remainder_quotas(&sizes, n);
    let mut rows = Vec::with_capacity(n);
    for (s, rows_in) in members.iter().enumerate() {
        if quotas[s] == 0 {
            continue;
        }
        let mut rng = par::rng(par::derive_seed(seed, s as u64));
        let picked = rand::seq::index::sample(&mut rng, rows_in.len(), quotas[s]);
        rows.extend(picked.into_iter().map(|k| rows_in[k]));
    }
    rows.sort_unstable();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_cells() -> CellTable {
        CellTable::from_parts(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            vec!["CD3".into()],
            vec![0.9, 0.1, 0.7],
        )
        .unwrap()
        .add_annotation("phenotype", &["T", "B", "T"])
        .unwrap()
    }

    #[test]
    fn add_annotation_records_provenance() {
        let t = three_cells();
        assert_eq!(t.provenance().len(), 1);
        let col = t.annotation("phenotype").unwrap();
        assert_eq!(col.codes(), &[0, 1, 0]);
    }

    #[test]
    fn add_annotation_errors() {
        let t = three_cells();
        assert!(matches!(
            t.add_annotation("phenotype", &["a", "b", "c"]),
            Err(Error::DuplicateName(_))
        ));
        assert!(matches!(
            t.add_annotation("other", &["a"]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rejects_nan_coordinates() {
        let r = CellTable::from_parts(&[(f64::NAN, 0.0)], vec![], vec![]);
        assert!(matches!(r, Err(Error::InvalidTable(_))));
    }

    #[test]
    fn quotas_largest_remainder() {
        assert_eq!(largest_remainder_quotas(&[900, 100], 100), vec![90, 10]);
        assert_eq!(largest_remainder_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder_quotas(&[5, 3, 2], 5), vec![3, 1, 1]);
        assert_eq!(largest_remainder_quotas(&[0, 0], 5), vec![0, 0]);
    }

    #[test]
    fn downsample_edges() {
        let t = three_cells();
        assert_eq!(t.downsample(3, None, 1).unwrap().n_cells(), 3);
        assert_eq!(t.downsample(10, None, 1).unwrap().cell_ids(), t.cell_ids());
        assert_eq!(t.downsample(0, None, 1).unwrap().n_cells(), 0);
        let a = downsample_indices(&t, 2, None, 9).unwrap();
        assert_eq!(a, downsample_indices(&t, 2, None, 9).unwrap());
    }

    #[test]
    fn stratified_downsample_quotas() {
        let n = 1000;
        let xy: Vec<(f64, f64)> = (0..n).map(|i| (i as f64, 0.0)).collect();
        let labels: Vec<&str> = (0..n).map(|i| if i < 900 { "a" } else { "b" }).collect();
        let t = CellTable::from_parts(&xy, vec![], vec![])
            .unwrap()
            .add_annotation("s", &labels)
            .unwrap();
        let rows = downsample_indices(&t, 100, Some("s"), 3).unwrap();
        assert_eq!(rows.len(), 100);
        assert_eq!(rows.iter().filter(|&&r| r < 900).count(), 90);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
    }
}
