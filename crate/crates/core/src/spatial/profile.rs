//! Distance-binned neighborhood profiles (cells x phenotypes x bins).
//!
//! Bins are half-open `[edges[b], edges[b+1])` on the Euclidean distance.
//! The cell itself is excluded by index, so other cells at the same
//! coordinates count toward a bin starting at 0.

use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::kdtree::KdTree2D;
use super::strata;
use crate::error::{Error, Result};
use crate::par;
use crate::table::{AssociatedTable, CellTable, Matrix, ProvenanceRecord, Warning, MISSING};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileNormalization {
    #[default]
    Counts,
    #[serde(alias = "area_density", alias = "density")]
    AreaDensity,
}

#[derive(Clone, Debug)]
pub struct NeighborhoodProfile {
    pub labels: Vec<String>,
    pub bin_edges: Vec<f64>,
    pub normalization: ProfileNormalization,
    pub stratify_by: Option<String>,
    n_cells: usize,
    // row-major (cell, phenotype, bin)
    values: Vec<f32>,
    pub warnings: Vec<Warning>,
}

impl NeighborhoodProfile {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_cells, self.n_labels(), self.n_bins())
    }

    pub fn get(&self, cell: usize, label: usize, bin: usize) -> f32 {
        self.values[(cell * self.n_labels() + label) * self.n_bins() + bin]
    }

    /// One cell's `n_labels * n_bins` entries, phenotype-major.
    pub fn cell(&self, cell: usize) -> &[f32] {
        let w = self.n_labels() * self.n_bins();
        &self.values[cell * w..(cell + 1) * w]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    /// Column label for flattened column `label * n_bins + bin`.
    fn column_label(&self, label: usize, bin: usize) -> String {
        format!(
            "{}|{}-{}",
            self.labels[label],
            self.bin_edges[bin],
            self.bin_edges[bin + 1]
        )
    }

    /// Flattened `n_cells x (n_labels * n_bins)` table with the axes recorded
    /// in `meta`, ready for export to embedding tools.
    pub fn to_associated(&self) -> Result<AssociatedTable> {
        let cols = self.n_labels() * self.n_bins();
        let labels = (0..self.n_labels())
            .flat_map(|p| (0..self.n_bins()).map(move |b| (p, b)))
            .map(|(p, b)| self.column_label(p, b))
            .collect();
        Ok(AssociatedTable::new(Matrix::new(self.n_cells, cols, self.values.clone())?, labels)?.with_meta(json!({
            "kind": "neighborhood_profile",
            "axes": ["cell", "phenotype", "bin"],
            "shape": [self.n_cells, self.n_labels(), self.n_bins()],
            "phenotypes": self.labels,
            "bin_edges": self.bin_edges,
            "normalization": self.normalization,
            "stratify_by": self.stratify_by,
        })))
    }

    /// Attaches the profile to `table` as associated table `name`.
    pub fn store(&self, table: &CellTable, name: &str, annotation: &str) -> Result<CellTable> {
        let record = ProvenanceRecord::new(
            "neighborhood_profile",
            json!({
                "annotation": annotation,
                "bin_edges": self.bin_edges,
                "normalization": self.normalization,
                "stratify_by": self.stratify_by,
                "out": name,
            }),
        )
        .with_warnings(self.warnings.clone());
        table.with_associated(name, self.to_associated()?, record)
    }
}

impl Serialize for NeighborhoodProfile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let nested: Vec<Vec<&[f32]>> = (0..self.n_cells)
            .map(|i| self.cell(i).chunks(self.n_bins()).collect())
            .collect();
        let mut st = s.serialize_struct("NeighborhoodProfile", 6)?;
        st.serialize_field("labels", &self.labels)?;
        st.serialize_field("bin_edges", &self.bin_edges)?;
        st.serialize_field("normalization", &self.normalization)?;
        st.serialize_field("stratify_by", &self.stratify_by)?;
        st.serialize_field("values", &nested)?;
        st.serialize_field("warnings", &self.warnings)?;
        st.end()
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2
        || edges.iter().any(|e| !e.is_finite() || *e < 0.0)
        || edges.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::BadBinEdges);
    }
    Ok(())
}

pub fn neighborhood_profile(
    table: &CellTable,
    annotation: &str,
    bin_edges: &[f64],
    normalize: ProfileNormalization,
    stratify_by: Option<&str>,
) -> Result<NeighborhoodProfile> {
    check_edges(bin_edges)?;
    let col = table.annotation(annotation)?;
    let codes = col.codes();
    let n_labels = col.n_categories();
    let n_bins = bin_edges.len() - 1;
    let width = n_labels * n_bins;
    let edges2: Vec<f64> = bin_edges.iter().map(|e| e * e).collect();
    let max_edge = bin_edges[n_bins];
    let max2 = edges2[n_bins];
    let scale: Vec<f32> = (0..n_bins)
        .map(|b| match normalize {
            ProfileNormalization::Counts => 1.0,
            ProfileNormalization::AreaDensity => {
                (1.0 / (std::f64::consts::PI * (edges2[b + 1] - edges2[b]))) as f32
            }
        })
        .collect();

    let mut values = vec![f32::NAN; table.n_cells() * width];
    let mut covered = 0;
    for stratum in strata(table, stratify_by)? {
        covered += stratum.rows.len();
        let labeled: Vec<usize> = stratum.rows.iter().copied().filter(|&i| codes[i] != MISSING).collect();
        let tree = KdTree2D::build(&labeled.iter().map(|&i| table.xy(i)).collect::<Vec<_>>());
        let rows: Vec<Vec<f32>> = par::map_slice(&stratum.rows, |&i| {
            let mut counts = vec![0u32; width];
            for (local, d2) in tree.radius_query_dist2(table.xy(i), max_edge) {
                let j = labeled[local];
                if j == i || d2 >= max2 {
                    continue;
                }
                let b = edges2.partition_point(|&e| e <= d2);
                if b == 0 {
                    continue;
                }
                counts[codes[j] as usize * n_bins + b - 1] += 1;
            }
            counts
                .iter()
                .enumerate()
                .map(|(c, &v)| v as f32 * scale[c % n_bins])
                .collect()
        });
        for (&i, row) in stratum.rows.iter().zip(rows) {
            values[i * width..(i + 1) * width].copy_from_slice(&row);
        }
    }
    let mut warnings = Vec::new();
    if covered < table.n_cells() {
        warnings.push(Warning::new(
            "missing_stratum",
            format!(
                "{} cells have no value for the stratification annotation; their profiles are NaN",
                table.n_cells() - covered
            ),
        ));
    }
    Ok(NeighborhoodProfile {
        labels: col.categories().to_vec(),
        bin_edges: bin_edges.to_vec(),
        normalization: normalize,
        stratify_by: stratify_by.map(str::to_string),
        n_cells: table.n_cells(),
        values,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abb() -> CellTable {
        CellTable::from_parts(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)], vec![], vec![])
            .unwrap()
            .add_annotation("ph", &["A", "B", "B"])
            .unwrap()
    }

    #[test]
    fn hand_example() {
        let p = neighborhood_profile(&abb(), "ph", &[0.0, 2.0, 4.0], ProfileNormalization::Counts, None).unwrap();
        assert_eq!(p.shape(), (3, 2, 2));
        assert_eq!((p.get(0, 1, 0), p.get(0, 1, 1)), (1.0, 1.0));
        assert_eq!((p.get(0, 0, 0), p.get(0, 0, 1)), (0.0, 0.0));
        let d = neighborhood_profile(&abb(), "ph", &[0.0, 2.0, 4.0], ProfileNormalization::AreaDensity, None).unwrap();
        assert!((f64::from(d.get(0, 1, 0)) - 0.0796).abs() < 1e-4);
    }

    #[test]
    fn bad_edges() {
        for e in [&[1.0][..], &[2.0, 1.0], &[-1.0, 1.0], &[0.0, 0.0]] {
            assert!(matches!(
                neighborhood_profile(&abb(), "ph", e, ProfileNormalization::Counts, None),
                Err(Error::BadBinEdges)
            ));
        }
    }

    #[test]
    fn stored_as_associated() {
        let t = abb();
        let p = neighborhood_profile(&t, "ph", &[0.0, 2.0, 4.0], ProfileNormalization::Counts, None).unwrap();
        let t2 = p.store(&t, "profile", "ph").unwrap();
        let a = &t2.associated()["profile"];
        assert_eq!(a.matrix.shape(), (3, 4));
        assert_eq!(a.column_labels[2], "B|0-2");
        assert_eq!(a.meta["shape"], json!([3, 2, 2]));
        assert_eq!(t2.provenance().len(), t.provenance().len() + 1);
    }
}
