use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use super::kdtree::KdTree2D;
use super::strata;
use crate::error::Result;
use crate::par;
use crate::table::{CellTable, Matrix, MISSING};

/// Per-cell distance to the nearest cell of each phenotype.
#[derive(Clone, Debug)]
pub struct NnDistances {
    pub labels: Vec<String>,
    pub stratify_by: Option<String>,
    /// `n_cells x n_labels`; NaN where undefined.
    pub distances: Matrix<f64>,
}

impl NnDistances {
    /// Distances from cells labeled `from` to their nearest `to` cell,
    /// NaN entries dropped.
    pub fn pair_values(&self, codes: &[u32], from: usize, to: usize) -> Vec<f64> {
        (0..self.distances.rows())
            .filter(|&i| codes[i] as usize == from)
            .map(|i| self.distances.get(i, to))
            .filter(|d| !d.is_nan())
            .collect()
    }
}

impl Serialize for NnDistances {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.distances.rows()).map(|i| self.distances.row(i)).collect();
        let mut st = s.serialize_struct("NnDistances", 3)?;
        st.serialize_field("labels", &self.labels)?;
        st.serialize_field("stratify_by", &self.stratify_by)?;
        st.serialize_field("distances", &rows)?;
        st.end()
    }
}

/// `D[i][q]`: distance from cell `i` to the nearest other cell labeled `q`
/// in the same stratum. Cells outside every stratum get NaN rows.
pub fn nearest_neighbor_distances(
    table: &CellTable,
    annotation: &str,
    stratify_by: Option<&str>,
) -> Result<NnDistances> {
    let col = table.annotation(annotation)?;
    let codes = col.codes();
    let n_labels = col.n_categories();
    let mut out = vec![f64::NAN; table.n_cells() * n_labels];
    for stratum in strata(table, stratify_by)? {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
        for &i in &stratum.rows {
            if codes[i] != MISSING {
                members[codes[i] as usize].push(i);
            }
        }
        let trees: Vec<KdTree2D> = members
            .iter()
            .map(|m| KdTree2D::build(&m.iter().map(|&i| table.xy(i)).collect::<Vec<_>>()))
            .collect();
        let rows: Vec<Vec<f64>> = par::map_slice(&stratum.rows, |&i| {
            let p = table.xy(i);
            (0..n_labels)
                .map(|q| {
                    let exclude = if codes[i] as usize == q {
                        members[q].binary_search(&i).ok()
                    } else {
                        None
                    };
                    trees[q].nearest_excluding(p, exclude).map_or(f64::NAN, |(_, d)| d)
                })
                .collect()
        });
        for (&i, row) in stratum.rows.iter().zip(rows) {
            out[i * n_labels..(i + 1) * n_labels].copy_from_slice(&row);
        }
    }
    Ok(NnDistances {
        labels: col.categories().to_vec(),
        stratify_by: stratify_by.map(str::to_string),
        distances: Matrix::new(table.n_cells(), n_labels, out)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let t = CellTable::from_parts(&[(0.0, 0.0), (3.0, 0.0), (7.0, 0.0)], vec![], vec![])
            .unwrap()
            .add_annotation("ph", &["A", "B", "B"])
            .unwrap();
        let d = nearest_neighbor_distances(&t, "ph", None).unwrap();
        assert_eq!(d.distances.get(0, 1), 3.0);
        assert_eq!(d.distances.get(1, 1), 4.0);
        assert!(d.distances.get(0, 0).is_nan());
        assert_eq!(d.distances.get(2, 0), 7.0);
        let json = serde_json::to_value(&d).unwrap();
        assert!(json["distances"][0][0].is_null());
    }
}
