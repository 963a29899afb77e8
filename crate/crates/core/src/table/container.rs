//! On-disk "cell container v1".
//!
//! A container is a directory holding `manifest.json` and one binary file per
//! array. Numeric arrays are little-endian IEEE-754 (or `u32` for category
//! codes), matrices row-major. Cell ids are stored as a sequence of
//! `u32` little-endian byte lengths each followed by the UTF-8 bytes. Every
//! file's CRC32C is recorded in the manifest and verified on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AssociatedTable, CategoricalColumn, CellTable, Matrix, ProvenanceRecord};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u64,
    pub n_cells: usize,
    #[serde(default)]
    pub slide_label: Option<String>,
    pub feature_names: Vec<String>,
    pub columns: Vec<ColumnDescriptor>,
    #[serde(default)]
    pub provenance: Vec<ProvenanceRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    CellIds,
    Coords,
    Features,
    Layer,
    Annotation,
    Associated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    Utf8,
    F64,
    F32,
    U32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub name: String,
    pub kind: ColumnKind,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub file: String,
    pub crc32c: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn u32_bytes(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn utf8_bytes(values: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        out.extend_from_slice(v.as_bytes());
    }
    out
}

struct Writer<'a> {
    dir: &'a Path,
    columns: Vec<ColumnDescriptor>,
}

impl Writer<'_> {
    fn write(
        &mut self,
        name: &str,
        kind: ColumnKind,
        dtype: Dtype,
        shape: Vec<usize>,
        file: String,
        bytes: &[u8],
    ) -> Result<&mut ColumnDescriptor> {
        let path = self.dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.columns.push(ColumnDescriptor {
            name: name.to_string(),
            kind,
            dtype,
            shape,
            file,
            crc32c: crc32c::crc32c(bytes),
            categories: None,
            axis_labels: None,
            meta: serde_json::Value::Null,
        });
        Ok(self.columns.last_mut().expect("just pushed"))
    }
}

/// Writes `table` to the directory `path`, creating it if needed.
pub fn save_container(table: &CellTable, path: impl AsRef<Path>) -> Result<()> {
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = table.n_cells();
    let mut w = Writer {
        dir,
        columns: Vec::new(),
    };
    w.write(
        "cell_ids",
        ColumnKind::CellIds,
        Dtype::Utf8,
        vec![n],
        "cell_ids.bin".into(),
        &utf8_bytes(table.cell_ids()),
    )?;
    w.write(
        "coords",
        ColumnKind::Coords,
        Dtype::F64,
        vec![n, 2],
        "coords.f64".into(),
        &f64_bytes(table.coords().as_slice()),
    )?;
    w.write(
        "features",
        ColumnKind::Features,
        Dtype::F32,
        vec![n, table.n_features()],
        "features.f32".into(),
        &f32_bytes(table.features().as_slice()),
    )?;
    for (i, (name, layer)) in table.layers().iter().enumerate() {
        w.write(
            name,
            ColumnKind::Layer,
            Dtype::F32,
            vec![layer.rows(), layer.cols()],
            format!("layer_{i}.f32"),
            &f32_bytes(layer.as_slice()),
        )?;
    }
    for (i, (name, col)) in table.annotations().iter().enumerate() {
        let d = w.write(
            name,
            ColumnKind::Annotation,
            Dtype::U32,
            vec![col.len()],
            format!("annotation_{i}.u32"),
            &u32_bytes(col.codes()),
        )?;
        d.categories = Some(col.categories().to_vec());
    }
    for (i, (name, assoc)) in table.associated().iter().enumerate() {
        let d = w.write(
            name,
            ColumnKind::Associated,
            Dtype::F32,
            vec![assoc.matrix.rows(), assoc.matrix.cols()],
            format!("associated_{i}.f32"),
            &f32_bytes(assoc.matrix.as_slice()),
        )?;
        d.axis_labels = Some(assoc.column_labels.clone());
        d.meta = assoc.meta.clone();
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        n_cells: n,
        slide_label: table.slide_label().map(str::to_string),
        feature_names: table.feature_names().to_vec(),
        columns: w.columns,
        provenance: table.provenance().to_vec(),
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_checked(dir: &Path, desc: &ColumnDescriptor) -> Result<Vec<u8>> {
    let path = dir.join(&desc.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if crc32c::crc32c(&bytes) != desc.crc32c {
        return Err(Error::ChecksumMismatch {
            file: desc.file.clone(),
        });
    }
    Ok(bytes)
}

fn expect_len(desc: &ColumnDescriptor, bytes: &[u8], width: usize) -> Result<usize> {
    let count: usize = desc.shape.iter().product();
    if bytes.len() != count * width {
        return Err(Error::MalformedContainer(format!(
            "`{}` holds {} bytes, shape {:?} needs {}",
            desc.file,
            bytes.len(),
            desc.shape,
            count * width
        )));
    }
    Ok(count)
}

fn decode_f32(desc: &ColumnDescriptor, bytes: &[u8]) -> Result<Vec<f32>> {
    expect_len(desc, bytes, 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn decode_f64(desc: &ColumnDescriptor, bytes: &[u8]) -> Result<Vec<f64>> {
    expect_len(desc, bytes, 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn decode_u32(desc: &ColumnDescriptor, bytes: &[u8]) -> Result<Vec<u32>> {
    expect_len(desc, bytes, 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn decode_utf8(desc: &ColumnDescriptor, bytes: &[u8]) -> Result<Vec<String>> {
    let malformed = || Error::MalformedContainer(format!("bad string data in `{}`", desc.file));
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let len_bytes = bytes.get(pos..pos + 4).ok_or_else(malformed)?;
        let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        pos += 4;
        let s = bytes.get(pos..pos + len).ok_or_else(malformed)?;
        out.push(String::from_utf8(s.to_vec()).map_err(|_| malformed())?);
        pos += len;
    }
    if desc.shape.first() != Some(&out.len()) {
        return Err(malformed());
    }
    Ok(out)
}

fn matrix_shape(desc: &ColumnDescriptor) -> Result<(usize, usize)> {
    match desc.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::MalformedContainer(format!(
            "`{}` must be 2-dimensional",
            desc.name
        ))),
    }
}

/// Reads a container written by [`save_container`].
pub fn load_container(path: impl AsRef<Path>) -> Result<CellTable> {
    let dir = path.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw)?;

    let find = |kind: ColumnKind| {
        manifest
            .columns
            .iter()
            .find(|c| c.kind == kind)
            .ok_or_else(|| Error::MalformedContainer(format!("missing {kind:?} column")))
    };
    let ids_desc = find(ColumnKind::CellIds)?;
    let cell_ids = decode_utf8(ids_desc, &read_checked(dir, ids_desc)?)?;
    let coords_desc = find(ColumnKind::Coords)?;
    let (r, c) = matrix_shape(coords_desc)?;
    let coords = Matrix::new(r, c, decode_f64(coords_desc, &read_checked(dir, coords_desc)?)?)?;
    let feat_desc = find(ColumnKind::Features)?;
    let (r, c) = matrix_shape(feat_desc)?;
    let features = Matrix::new(r, c, decode_f32(feat_desc, &read_checked(dir, feat_desc)?)?)?;
    if cell_ids.len() != manifest.n_cells {
        return Err(Error::MalformedContainer("n_cells disagrees with cell ids".into()));
    }
    let table = CellTable::new(cell_ids, coords, features, manifest.feature_names.clone())?;

    let mut layers = BTreeMap::new();
    let mut annotations = BTreeMap::new();
    let mut associated = BTreeMap::new();
    for desc in &manifest.columns {
        match desc.kind {
            ColumnKind::CellIds | ColumnKind::Coords | ColumnKind::Features => {}
            ColumnKind::Layer => {
                let (r, c) = matrix_shape(desc)?;
                let m = Matrix::new(r, c, decode_f32(desc, &read_checked(dir, desc)?)?)?;
                layers.insert(desc.name.clone(), m);
            }
            ColumnKind::Annotation => {
                let codes = decode_u32(desc, &read_checked(dir, desc)?)?;
                let categories = desc.categories.clone().unwrap_or_default();
                annotations.insert(desc.name.clone(), CategoricalColumn::new(codes, categories)?);
            }
            ColumnKind::Associated => {
                let (r, c) = matrix_shape(desc)?;
                let m = Matrix::new(r, c, decode_f32(desc, &read_checked(dir, desc)?)?)?;
                let labels = desc.axis_labels.clone().unwrap_or_default();
                let a = AssociatedTable::new(m, labels)?.with_meta(desc.meta.clone());
                associated.insert(desc.name.clone(), a);
            }
        }
    }
    table.restore(
        layers,
        annotations,
        associated,
        manifest.provenance,
        manifest.slide_label,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ProvenanceRecord;

    fn sample() -> CellTable {
        let t = CellTable::from_parts(
            &[(0.5, 1.25), (3.0, -2.0), (1e-300, 7.0)],
            vec!["CD3".into(), "CD20".into()],
            vec![1.0, f32::NAN, -0.0, 2.5, f32::MIN_POSITIVE, 3.0],
        )
        .unwrap()
        .add_annotation("phenotype", &["T", "B", "T"])
        .unwrap();
        let layer = Matrix::new(3, 2, vec![0.1; 6]).unwrap();
        let t = t
            .with_layer("arcsinh", layer, ProvenanceRecord::new("arcsinh", serde_json::json!({})))
            .unwrap();
        let assoc = AssociatedTable::new(Matrix::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap(), vec!["u".into()])
            .unwrap()
            .with_meta(serde_json::json!({"k": 1}));
        t.with_associated("emb", assoc, ProvenanceRecord::new("x", serde_json::json!(null)))
            .unwrap()
            .with_slide_label(Some("s1".into()))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let t = sample();
        save_container(&t, dir.path()).unwrap();
        let back = load_container(dir.path()).unwrap();
        assert!(t.bits_eq(&back));
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_container(&sample(), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&p).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        fs::write(&p, text).unwrap();
        assert!(matches!(
            load_container(dir.path()),
            Err(Error::FormatVersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        save_container(&sample(), dir.path()).unwrap();
        let p = dir.path().join("features.f32");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_container(dir.path()),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn missing_directory_is_io_error() {
        assert!(matches!(
            load_container("/nonexistent/container"),
            Err(Error::Io { .. })
        ));
    }
}
