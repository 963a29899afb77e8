//! Loading segmented-cell exports into a [`CellTable`].
//!
//! Column selection is declarative: a [`ColumnMapping`] (usually read from a
//! JSON document) names the coordinate, feature, annotation and id columns.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::table::{
    AssociatedTable, CategoricalColumn, CellTable, Matrix, ProvenanceRecord, Warning, MISSING,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BboxColumns {
    pub xmin: String,
    pub xmax: String,
    pub ymin: String,
    pub ymax: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSelection {
    List(Vec<String>),
    Regex { regex: String },
}

/// Declarative mapping from file columns to table fields.
///
/// ```json
/// {
///   "x_column": "X", "y_column": "Y",
///   "feature_columns": {"regex": "^CD\\d+"},
///   "annotation_columns": ["Phenotype"],
///   "id_column": "CellID",
///   "slide_label": "slide1"
/// }
/// ```
///
/// Exactly one of `x_column`/`y_column` or `bbox_columns` must be given.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    #[serde(default)]
    pub x_column: Option<String>,
    #[serde(default)]
    pub y_column: Option<String>,
    #[serde(default)]
    pub bbox_columns: Option<BboxColumns>,
    pub feature_columns: FeatureSelection,
    #[serde(default)]
    pub annotation_columns: Vec<String>,
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default)]
    pub slide_label: Option<String>,
}

impl ColumnMapping {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    /// Match mapped names to headers ignoring ASCII case.
    pub case_insensitive: bool,
}

/// A single input value, before conversion.
#[derive(Clone, Debug)]
#[cfg_attr(not(feature = "parquet"), allow(dead_code))]
enum Field {
    Null,
    Num(f64),
    Text(String),
}

impl Field {
    fn as_text(&self) -> Option<String> {
        match self {
            Field::Null => None,
            Field::Num(v) => Some(v.to_string()),
            Field::Text(s) => Some(s.clone()),
        }
    }

    /// `Ok(None)` for empty cells; `Err(raw text)` when not a number.
    fn as_number(&self) -> std::result::Result<Option<f64>, String> {
        match self {
            Field::Null => Ok(None),
            Field::Num(v) => Ok(Some(*v)),
            Field::Text(s) => {
                let t = s.trim();
                if t.is_empty() {
                    Ok(None)
                } else {
                    t.parse::<f64>().map(Some).map_err(|_| s.clone())
                }
            }
        }
    }
}

struct Resolved {
    x: Option<usize>,
    y: Option<usize>,
    bbox: Option<[usize; 4]>,
    features: Vec<usize>,
    feature_names: Vec<String>,
    annotations: Vec<usize>,
    annotation_names: Vec<String>,
    id: Option<usize>,
}

fn resolve(headers: &[String], mapping: &ColumnMapping, opts: IngestOptions) -> Result<Resolved> {
    let find = |name: &str| -> Option<usize> {
        headers.iter().position(|h| {
            if opts.case_insensitive {
                h.eq_ignore_ascii_case(name)
            } else {
                h == name
            }
        })
    };
    let mut missing = Vec::new();
    let mut lookup = |name: &str| -> Option<usize> {
        let r = find(name);
        if r.is_none() {
            missing.push(name.to_string());
        }
        r
    };

    let (x, y, bbox) = match (&mapping.x_column, &mapping.y_column, &mapping.bbox_columns) {
        (Some(x), Some(y), None) => (lookup(x), lookup(y), None),
        (None, None, Some(b)) => {
            let cols = [lookup(&b.xmin), lookup(&b.xmax), lookup(&b.ymin), lookup(&b.ymax)];
            let bbox = if cols.iter().all(Option::is_some) {
                Some(cols.map(|c| c.expect("checked")))
            } else {
                None
            };
            (None, None, bbox)
        }
        _ => {
            return Err(Error::InvalidMapping(
                "give either x_column and y_column, or bbox_columns".into(),
            ))
        }
    };
    let id = mapping.id_column.as_deref().and_then(&mut lookup);
    let annotations: Vec<Option<usize>> = mapping
        .annotation_columns
        .iter()
        .map(|a| lookup(a))
        .collect();

    let features: Vec<Option<usize>> = match &mapping.feature_columns {
        FeatureSelection::List(names) => names.iter().map(|f| lookup(f)).collect(),
        FeatureSelection::Regex { regex } => {
            let re = Regex::new(regex)
                .map_err(|e| Error::InvalidMapping(format!("bad feature regex: {e}")))?;
            let mut taken: HashSet<usize> = HashSet::new();
            taken.extend(x);
            taken.extend(y);
            taken.extend(id);
            taken.extend(bbox.iter().flatten().copied());
            taken.extend(annotations.iter().flatten().copied());
            headers
                .iter()
                .enumerate()
                .filter(|(i, h)| !taken.contains(i) && re.is_match(h))
                .map(|(i, _)| Some(i))
                .collect()
        }
    };
    if !missing.is_empty() {
        return Err(Error::MissingColumn(missing));
    }
    let features: Vec<usize> = features.into_iter().flatten().collect();
    let annotations: Vec<usize> = annotations.into_iter().flatten().collect();
    let overlap: Vec<String> = features
        .iter()
        .filter(|f| annotations.contains(f))
        .map(|&f| headers[f].clone())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::InvalidMapping(format!(
            "columns used as both feature and annotation: {}",
            overlap.join(", ")
        )));
    }
    Ok(Resolved {
        x,
        y,
        bbox,
        feature_names: features.iter().map(|&i| headers[i].clone()).collect(),
        features,
        annotation_names: annotations.iter().map(|&i| headers[i].clone()).collect(),
        annotations,
        id,
    })
}

/// Accumulates rows into column buffers.
struct Builder {
    cols: Resolved,
    n_rows: usize,
    xy: Vec<f64>,
    bbox: [Vec<f64>; 4],
    features: Vec<f32>,
    nan_counts: Vec<usize>,
    labels: Vec<Vec<Option<String>>>,
    ids: Vec<String>,
}

impl Builder {
    fn new(cols: Resolved) -> Self {
        let n_features = cols.features.len();
        let n_ann = cols.annotations.len();
        Self {
            cols,
            n_rows: 0,
            xy: Vec::new(),
            bbox: Default::default(),
            features: Vec::new(),
            nan_counts: vec![0; n_features],
            labels: vec![Vec::new(); n_ann],
            ids: Vec::new(),
        }
    }

    fn push(&mut self, row: &[Field], headers: &[String]) -> Result<()> {
        let r = self.n_rows;
        let number = |col: usize| -> Result<f64> {
            match row[col].as_number() {
                Ok(Some(v)) if v.is_finite() => Ok(v),
                Ok(_) => Err(Error::NonNumericFeature {
                    row: r,
                    column: headers[col].clone(),
                    value: String::new(),
                }),
                Err(value) => Err(Error::NonNumericFeature {
                    row: r,
                    column: headers[col].clone(),
                    value,
                }),
            }
        };
        if let (Some(x), Some(y)) = (self.cols.x, self.cols.y) {
            self.xy.push(number(x)?);
            self.xy.push(number(y)?);
        }
        if let Some(b) = self.cols.bbox {
            for (k, &col) in b.iter().enumerate() {
                self.bbox[k].push(number(col)?);
            }
        }
        for (k, &col) in self.cols.features.iter().enumerate() {
            match row[col].as_number() {
                Ok(Some(v)) => self.features.push(v as f32),
                Ok(None) => {
                    self.nan_counts[k] += 1;
                    self.features.push(f32::NAN);
                }
                Err(value) => {
                    return Err(Error::NonNumericFeature {
                        row: r,
                        column: headers[col].clone(),
                        value,
                    })
                }
            }
        }
        for (k, &col) in self.cols.annotations.iter().enumerate() {
            self.labels[k].push(row[col].as_text());
        }
        self.ids.push(match self.cols.id {
            Some(col) => row[col].as_text().unwrap_or_default(),
            None => r.to_string(),
        });
        self.n_rows += 1;
        Ok(())
    }

    fn finish(self, source: &str, mapping: &ColumnMapping) -> Result<CellTable> {
        let n = self.n_rows;
        let coords = if self.cols.bbox.is_some() {
            let [xmin, xmax, ymin, ymax] = &self.bbox;
            let pts = compute_centroids(xmin, xmax, ymin, ymax)?;
            Matrix::new(n, 2, pts.into_iter().flatten().collect())?
        } else {
            Matrix::new(n, 2, self.xy)?
        };
        let features = Matrix::new(n, self.cols.features.len(), self.features)?;
        let mut table = CellTable::new(self.ids, coords, features, self.cols.feature_names.clone())?;
        let mut annotations = BTreeMap::new();
        for (name, labels) in self.cols.annotation_names.iter().zip(&self.labels) {
            annotations.insert(
                name.clone(),
                CategoricalColumn::from_optional_labels(labels.iter().map(|l| l.as_deref())),
            );
        }
        table.replace_annotations(annotations);
        let warnings: Vec<Warning> = self
            .cols
            .feature_names
            .iter()
            .zip(&self.nan_counts)
            .filter(|(_, &c)| c > 0)
            .map(|(f, c)| Warning::new("nan_features", format!("{c} empty values in `{f}`")))
            .collect();
        let nan_counts: BTreeMap<&str, usize> = self
            .cols
            .feature_names
            .iter()
            .map(String::as_str)
            .zip(self.nan_counts.iter().copied())
            .collect();
        let record = ProvenanceRecord::new(
            "ingest",
            json!({ "source": source, "mapping": mapping, "n_cells": n, "nan_counts": nan_counts }),
        )
        .with_warnings(warnings);
        Ok(table
            .with_record(record)
            .with_slide_label(mapping.slide_label.clone()))
    }
}

/// Reads an RFC 4180 CSV with a header row.
pub fn ingest_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<CellTable> {
    ingest_csv_with(path, mapping, IngestOptions::default())
}

pub fn ingest_csv_with(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
    opts: IngestOptions,
) -> Result<CellTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyFile);
    }
    let cols = resolve(&headers, mapping, opts)?;
    let mut builder = Builder::new(cols);
    let mut row = Vec::with_capacity(headers.len());
    for record in reader.records() {
        let record = record?;
        row.clear();
        row.extend(record.iter().map(|s| Field::Text(s.to_string())));
        builder.push(&row, &headers)?;
    }
    builder.finish(&path.display().to_string(), mapping)
}

/// Reads a flat Parquet file. Nested columns are rejected.
#[cfg(feature = "parquet")]
pub fn ingest_parquet(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
    opts: IngestOptions,
) -> Result<CellTable> {
    use parquet::file::reader::{FileReader, SerializedFileReader};
    use parquet::record::Field as PqField;

    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let pq = |e: parquet::errors::ParquetError| Error::Parquet(e.to_string());
    let reader = SerializedFileReader::new(file).map_err(pq)?;
    let schema = reader.metadata().file_metadata().schema_descr_ptr();
    let mut headers = Vec::with_capacity(schema.num_columns());
    for col in schema.columns() {
        if col.path().parts().len() != 1 {
            return Err(Error::Parquet(format!(
                "nested column `{}` is not supported",
                col.path().string()
            )));
        }
        headers.push(col.name().to_string());
    }
    if headers.is_empty() {
        return Err(Error::EmptyFile);
    }
    let cols = resolve(&headers, mapping, opts)?;
    let mut builder = Builder::new(cols);
    let mut fields = vec![Field::Null; headers.len()];
    for row in reader.get_row_iter(None).map_err(pq)? {
        let row = row.map_err(pq)?;
        for (k, (_, value)) in row.get_column_iter().enumerate() {
            fields[k] = match value {
                PqField::Null => Field::Null,
                PqField::Bool(b) => Field::Num(f64::from(u8::from(*b))),
                PqField::Byte(v) => Field::Num(f64::from(*v)),
                PqField::Short(v) => Field::Num(f64::from(*v)),
                PqField::Int(v) => Field::Num(f64::from(*v)),
                PqField::Long(v) => Field::Num(*v as f64),
                PqField::UByte(v) => Field::Num(f64::from(*v)),
                PqField::UShort(v) => Field::Num(f64::from(*v)),
                PqField::UInt(v) => Field::Num(f64::from(*v)),
                PqField::ULong(v) => Field::Num(*v as f64),
                PqField::Float(v) => Field::Num(f64::from(*v)),
                PqField::Double(v) => Field::Num(*v),
                PqField::Str(s) => Field::Text(s.clone()),
                other => {
                    return Err(Error::Parquet(format!(
                        "unsupported value in column `{}`: {other}",
                        headers[k]
                    )))
                }
            };
        }
        builder.push(&fields, &headers)?;
    }
    builder.finish(&path.display().to_string(), mapping)
}

/// Box midpoints. Degenerate boxes are allowed; inverted ones are not.
pub fn compute_centroids(
    xmin: &[f64],
    xmax: &[f64],
    ymin: &[f64],
    ymax: &[f64],
) -> Result<Vec<[f64; 2]>> {
    let n = xmin.len();
    for (what, len) in [("xmax", xmax.len()), ("ymin", ymin.len()), ("ymax", ymax.len())] {
        if len != n {
            return Err(Error::LengthMismatch {
                what: what.into(),
                expected: n,
                actual: len,
            });
        }
    }
    (0..n)
        .map(|i| {
            if xmax[i] < xmin[i] || ymax[i] < ymin[i] {
                Err(Error::InvertedBox { row: i })
            } else {
                Ok([(xmin[i] + xmax[i]) / 2.0, (ymin[i] + ymax[i]) / 2.0])
            }
        })
        .collect()
}

/// Concatenates slides row-wise and records each table's slide label in a
/// new annotation.
///
/// Annotations are merged by name (categories unioned in first-appearance
/// order; tables lacking an annotation contribute missing values). Layers
/// and associated tables survive only when every input has them.
pub fn combine_tables(tables: &[CellTable], slide_annotation_name: &str) -> Result<CellTable> {
    let Some(first) = tables.first() else {
        return Err(Error::InvalidParameter {
            name: "tables".into(),
            reason: "at least one table is required".into(),
        });
    };
    let names = first.feature_names();
    for t in &tables[1..] {
        if t.feature_names() != names {
            let a: HashSet<&String> = names.iter().collect();
            let b: HashSet<&String> = t.feature_names().iter().collect();
            let mut diff: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
            diff.sort();
            if diff.is_empty() {
                diff.push("(same names, different order)".into());
            }
            return Err(Error::FeatureSetMismatch(diff));
        }
    }
    let mut labels = Vec::with_capacity(tables.len());
    let mut seen = HashSet::new();
    for (i, t) in tables.iter().enumerate() {
        let label = t.slide_label().ok_or(Error::MissingSlideLabel(i))?;
        if !seen.insert(label) {
            return Err(Error::DuplicateSlideLabel(label.to_string()));
        }
        labels.push(label.to_string());
    }
    if tables
        .iter()
        .any(|t| t.annotations().contains_key(slide_annotation_name))
    {
        return Err(Error::DuplicateName(slide_annotation_name.to_string()));
    }

    let ids: Vec<String> = tables.iter().flat_map(|t| t.cell_ids().iter().cloned()).collect();
    let coords = Matrix::concat_rows(&tables.iter().map(|t| t.coords()).collect::<Vec<_>>())?;
    let features = Matrix::concat_rows(&tables.iter().map(|t| t.features()).collect::<Vec<_>>())?;
    let mut out = CellTable::new(ids, coords, features, names.to_vec())?;
    let mut warnings = Vec::new();

    let mut layers = BTreeMap::new();
    let mut layer_names: Vec<&String> = tables.iter().flat_map(|t| t.layers().keys()).collect();
    layer_names.sort();
    layer_names.dedup();
    for name in layer_names {
        let parts: Option<Vec<&Matrix<f32>>> = tables.iter().map(|t| t.layers().get(name)).collect();
        match parts {
            Some(parts) => {
                layers.insert(name.clone(), Matrix::concat_rows(&parts)?);
            }
            None => warnings.push(Warning::new(
                "layer_dropped",
                format!("layer `{name}` is not present in every input"),
            )),
        }
    }
    out.replace_layers(layers);

    let mut associated = BTreeMap::new();
    let mut assoc_names: Vec<&String> = tables.iter().flat_map(|t| t.associated().keys()).collect();
    assoc_names.sort();
    assoc_names.dedup();
    for name in assoc_names {
        let parts: Option<Vec<&AssociatedTable>> =
            tables.iter().map(|t| t.associated().get(name)).collect();
        let compatible = parts.as_ref().is_some_and(|p| {
            p.windows(2).all(|w| w[0].column_labels == w[1].column_labels)
        });
        match parts {
            Some(parts) if compatible => {
                let m = Matrix::concat_rows(&parts.iter().map(|a| &a.matrix).collect::<Vec<_>>())?;
                let a = AssociatedTable::new(m, parts[0].column_labels.clone())?
                    .with_meta(parts[0].meta.clone());
                associated.insert(name.clone(), a);
            }
            _ => warnings.push(Warning::new(
                "associated_dropped",
                format!("associated table `{name}` is not present with identical labels in every input"),
            )),
        }
    }
    out.replace_associated(associated);

    let mut annotations = BTreeMap::new();
    let mut ann_names: Vec<&String> = tables.iter().flat_map(|t| t.annotations().keys()).collect();
    ann_names.sort();
    ann_names.dedup();
    for name in ann_names {
        let mut categories: Vec<String> = Vec::new();
        let mut codes = Vec::with_capacity(out.n_cells());
        for t in tables {
            match t.annotations().get(name) {
                Some(col) => {
                    let remap: Vec<u32> = col
                        .categories()
                        .iter()
                        .map(|c| match categories.iter().position(|x| x == c) {
                            Some(p) => p as u32,
                            None => {
                                categories.push(c.clone());
                                (categories.len() - 1) as u32
                            }
                        })
                        .collect();
                    codes.extend(col.codes().iter().map(|&c| {
                        if c == MISSING {
                            MISSING
                        } else {
                            remap[c as usize]
                        }
                    }));
                }
                None => codes.extend(std::iter::repeat_n(MISSING, t.n_cells())),
            }
        }
        annotations.insert(name.clone(), CategoricalColumn::new(codes, categories)?);
    }
    let slide_codes = tables
        .iter()
        .enumerate()
        .flat_map(|(i, t)| std::iter::repeat_n(i as u32, t.n_cells()))
        .collect();
    annotations.insert(
        slide_annotation_name.to_string(),
        CategoricalColumn::new(slide_codes, labels.clone())?,
    );
    out.replace_annotations(annotations);
    let record = ProvenanceRecord::new(
        "combine_tables",
        json!({ "slides": labels, "slide_annotation": slide_annotation_name }),
    )
    .with_warnings(warnings);
    Ok(out.with_record(record))
}

/// Writes the table as CSV: `cell_id,x,y`, then features from `layer`, then
/// annotations. NaN features and missing annotation values are written as
/// empty fields.
pub fn export_csv(table: &CellTable, layer: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let values = table.layer(layer)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["cell_id".to_string(), "x".into(), "y".into()];
    header.extend(table.feature_names().iter().cloned());
    header.extend(table.annotations().keys().cloned());
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..table.n_cells() {
        record.clear();
        let [x, y] = table.xy(i);
        record.push(table.cell_ids()[i].clone());
        record.push(x.to_string());
        record.push(y.to_string());
        for &v in values.row(i) {
            record.push(if v.is_nan() { String::new() } else { v.to_string() });
        }
        for col in table.annotations().values() {
            record.push(col.label(i).unwrap_or("").to_string());
        }
        w.write_record(&record)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Mapping that re-ingests a file produced by [`export_csv`].
pub fn export_mapping(table: &CellTable) -> ColumnMapping {
    ColumnMapping {
        x_column: Some("x".into()),
        y_column: Some("y".into()),
        bbox_columns: None,
        feature_columns: FeatureSelection::List(table.feature_names().to_vec()),
        annotation_columns: table.annotations().keys().cloned().collect(),
        id_column: Some("cell_id".into()),
        slide_label: table.slide_label().map(str::to_string),
    }
}
