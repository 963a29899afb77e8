use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::table::{downsample_indices, CellTable, Warning, MISSING};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub group_by: String,
    pub layer: Option<String>,
    pub groups: Vec<String>,
    pub features: Vec<String>,
    /// Cells per group.
    pub sizes: Vec<usize>,
    /// `groups x features`, NaN-excluded; NaN where a group has no value.
    pub means: Vec<Vec<f64>>,
    /// Non-NaN values behind each mean.
    pub counts: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_order: Option<Vec<usize>>,
}

impl GroupMeans {
    /// Adds average-linkage leaf orders for both heatmap axes.
    pub fn with_order(mut self) -> Self {
        self.row_order = Some(hierarchical_order(&self.means, Axis::Rows).order);
        self.col_order = Some(hierarchical_order(&self.means, Axis::Columns).order);
        self
    }
}

pub fn group_means(table: &CellTable, layer: Option<&str>, group_by: &str) -> Result<GroupMeans> {
    let m = table.layer(layer.unwrap_or(crate::table::FEATURES))?;
    let col = table.annotation(group_by)?;
    let codes = col.codes();
    let n_groups = col.n_categories();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (i, &c) in codes.iter().enumerate() {
        if c != MISSING {
            members[c as usize].push(i);
        }
    }
    // per feature, per group: (mean, count)
    let per_feature: Vec<Vec<(f64, usize)>> = par::map_range(m.cols(), |j| {
        members
            .iter()
            .map(|rows| {
                let vals: Vec<f64> = rows
                    .iter()
                    .map(|&i| f64::from(m.get(i, j)))
                    .filter(|v| !v.is_nan())
                    .collect();
                if vals.is_empty() {
                    (f64::NAN, 0)
                } else {
                    (par::block_sum(&vals, |&v| v) / vals.len() as f64, vals.len())
                }
            })
            .collect()
    });
    Ok(GroupMeans {
        group_by: group_by.to_string(),
        layer: layer.map(str::to_string),
        groups: col.categories().to_vec(),
        features: table.feature_names().to_vec(),
        sizes: members.iter().map(Vec::len).collect(),
        means: (0..n_groups)
            .map(|g| per_feature.iter().map(|f| f[g].0).collect())
            .collect(),
        counts: (0..n_groups)
            .map(|g| per_feature.iter().map(|f| f[g].1).collect())
            .collect(),
        row_order: None,
        col_order: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rows,
    Columns,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Cluster ids: leaves are `0..n`, the merge at step `s` creates `n + s`.
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub order: Vec<usize>,
    pub merges: Vec<Merge>,
}

/// Euclidean distance over the coordinates where both are non-NaN.
fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_nan() && !y.is_nan())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Average-linkage agglomerative clustering of the rows or columns of
/// `matrix`. The closest pair merges first, ties going to the pair with the
/// lowest cluster ids; the leaf order lists the lower-id side first.
pub fn hierarchical_order(matrix: &[Vec<f64>], axis: Axis) -> Dendrogram {
    let items: Vec<Vec<f64>> = match axis {
        Axis::Rows => matrix.to_vec(),
        Axis::Columns => {
            let cols = matrix.first().map_or(0, Vec::len);
            (0..cols).map(|j| matrix.iter().map(|r| r[j]).collect()).collect()
        }
    };
    let n = items.len();
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| distance(&items[i], &items[j])).collect())
        .collect();
    // active clusters: (id, size, leaves), indexed by slot
    let mut active: Vec<Option<(usize, usize, Vec<usize>)>> = (0..n).map(|i| Some((i, 1, vec![i]))).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..n {
            let Some((ida, ..)) = active[a] else { continue };
            for b in a + 1..n {
                let Some((idb, ..)) = active[b] else { continue };
                let d = dist[a][b];
                let key = (ida.min(idb), ida.max(idb));
                let better = match best {
                    None => true,
                    Some((bd, lo, hi, ..)) => d < bd || (d == bd && key < (lo, hi)),
                };
                if better {
                    best = Some((d, key.0, key.1, a, b));
                }
            }
        }
        let (d, _, _, a, b) = best.expect("at least two active clusters");
        let (ida, sa, la) = active[a].take().expect("active");
        let (idb, sb, lb) = active[b].take().expect("active");
        for c in 0..n {
            if c != a && active[c].is_some() {
                let v = (sa as f64 * dist[a][c] + sb as f64 * dist[b][c]) / (sa + sb) as f64;
                dist[a][c] = v;
                dist[c][a] = v;
            }
        }
        let (left, right, leaves) = if ida < idb {
            (ida, idb, [la, lb].concat())
        } else {
            (idb, ida, [lb, la].concat())
        };
        merges.push(Merge {
            left,
            right,
            distance: d,
            size: sa + sb,
        });
        active[a] = Some((n + step, sa + sb, leaves));
    }
    let order = active.into_iter().flatten().flat_map(|(_, _, l)| l).collect();
    Dendrogram { order, merges }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrosstabNormalization {
    #[default]
    None,
    Row,
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub source: String,
    pub target: String,
    pub count: u64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crosstab {
    pub row_annotation: String,
    pub col_annotation: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub normalization: CrosstabNormalization,
    /// `counts` after normalization.
    pub values: Vec<Vec<f64>>,
    /// Non-zero cells as Sankey links.
    pub flows: Vec<Flow>,
    /// Cells missing either label.
    pub n_missing: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

pub fn crosstab(
    table: &CellTable,
    annotation_a: &str,
    annotation_b: &str,
    normalize: CrosstabNormalization,
) -> Result<Crosstab> {
    let a = table.annotation(annotation_a)?;
    let b = table.annotation(annotation_b)?;
    let (na, nb) = (a.n_categories(), b.n_categories());
    let (ca, cb) = (a.codes(), b.codes());
    let partials = par::map_range(ca.len().div_ceil(1 << 16), |c| {
        let mut counts = vec![0u64; na * nb];
        let mut missing = 0usize;
        for i in c << 16..((c + 1) << 16).min(ca.len()) {
            if ca[i] == MISSING || cb[i] == MISSING {
                missing += 1;
            } else {
                counts[ca[i] as usize * nb + cb[i] as usize] += 1;
            }
        }
        (counts, missing)
    });
    let mut flat = vec![0u64; na * nb];
    let mut n_missing = 0;
    for (p, m) in partials {
        for (x, y) in flat.iter_mut().zip(p) {
            *x += y;
        }
        n_missing += m;
    }
    let counts: Vec<Vec<u64>> = flat.chunks(nb.max(1)).take(na).map(<[u64]>::to_vec).collect();
    let total: u64 = flat.iter().sum();
    let values: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            let denom = match normalize {
                CrosstabNormalization::None => 1.0,
                CrosstabNormalization::Row => row.iter().sum::<u64>() as f64,
                CrosstabNormalization::Total => total as f64,
            };
            row.iter()
                .map(|&c| if denom == 0.0 { 0.0 } else { c as f64 / denom })
                .collect()
        })
        .collect();
    let mut flows = Vec::new();
    for p in 0..na {
        for q in 0..nb {
            if counts[p][q] > 0 {
                flows.push(Flow {
                    source: a.categories()[p].clone(),
                    target: b.categories()[q].clone(),
                    count: counts[p][q],
                    value: values[p][q],
                });
            }
        }
    }
    let warnings = if n_missing > 0 {
        vec![Warning::new(
            "missing_labels",
            format!("{n_missing} cells lack one of the labels and are excluded"),
        )]
    } else {
        Vec::new()
    };
    Ok(Crosstab {
        row_annotation: annotation_a.to_string(),
        col_annotation: annotation_b.to_string(),
        row_labels: a.categories().to_vec(),
        col_labels: b.categories().to_vec(),
        counts,
        normalization: normalize,
        values,
        flows,
        n_missing,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterAnnotation {
    pub categories: Vec<String>,
    /// Category code per sampled cell; `null` when missing.
    pub codes: Vec<Option<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterSample {
    pub n_total: usize,
    pub indices: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub annotations: std::collections::BTreeMap<String, ScatterAnnotation>,
}

/// Row subset for plotting under a point budget, with coordinates and the
/// requested annotation codes. Same sampling as `CellTable::downsample`.
pub fn scatter_downsample(
    table: &CellTable,
    max_points: usize,
    stratify_by: Option<&str>,
    seed: u64,
    annotations: &[String],
) -> Result<ScatterSample> {
    if max_points == 0 {
        return Err(Error::param("max_points", "must be at least 1"));
    }
    let indices = downsample_indices(table, max_points, stratify_by, seed)?;
    let mut ann = std::collections::BTreeMap::new();
    for name in annotations {
        let col = table.annotation(name)?;
        let codes = indices
            .iter()
            .map(|&i| Some(col.codes()[i]).filter(|&c| c != MISSING))
            .collect();
        ann.insert(
            name.clone(),
            ScatterAnnotation {
                categories: col.categories().to_vec(),
                codes,
            },
        );
    }
    Ok(ScatterSample {
        n_total: table.n_cells(),
        x: indices.iter().map(|&i| table.xy(i)[0]).collect(),
        y: indices.iter().map(|&i| table.xy(i)[1]).collect(),
        indices,
        annotations: ann,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CellTable {
        CellTable::from_parts(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            vec!["f".into()],
            vec![1.0, 3.0, 5.0],
        )
        .unwrap()
        .add_annotation("a", &["T", "T", "B"])
        .unwrap()
        .add_annotation("b", &["1", "2", "1"])
        .unwrap()
    }

    #[test]
    fn means_hand_example() {
        let m = group_means(&table(), None, "a").unwrap();
        assert_eq!(m.groups, vec!["T", "B"]);
        assert_eq!(m.means, vec![vec![2.0], vec![5.0]]);
        assert_eq!(m.sizes, vec![2, 1]);
    }

    #[test]
    fn crosstab_hand_example() {
        let c = crosstab(&table(), "a", "b", CrosstabNormalization::None).unwrap();
        assert_eq!(c.counts, vec![vec![1, 1], vec![1, 0]]);
        assert_eq!(c.flows.len(), 3);
        let r = crosstab(&table(), "a", "b", CrosstabNormalization::Row).unwrap();
        assert_eq!(r.values, vec![vec![0.5, 0.5], vec![1.0, 0.0]]);
        let t = crosstab(&table(), "a", "b", CrosstabNormalization::Total).unwrap();
        assert!((t.values.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linkage_on_a_line() {
        let d = hierarchical_order(&[vec![0.0], vec![1.0], vec![10.0]], Axis::Rows);
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!(d.merges[0].distance, 1.0);
        // average of 10 and 9
        assert_eq!(d.merges[1].distance, 9.5);
        assert_eq!(d.order, vec![2, 0, 1]);
    }

    #[test]
    fn identical_rows_adjacent() {
        let m = vec![vec![5.0, 1.0], vec![0.0, 0.0], vec![3.0, 3.0], vec![5.0, 1.0]];
        let d = hierarchical_order(&m, Axis::Rows);
        assert_eq!((d.merges[0].left, d.merges[0].right, d.merges[0].distance), (0, 3, 0.0));
        let p0 = d.order.iter().position(|&i| i == 0).unwrap();
        let p3 = d.order.iter().position(|&i| i == 3).unwrap();
        assert_eq!(p0.abs_diff(p3), 1);
        let mut sorted = d.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert_eq!(hierarchical_order(&m, Axis::Columns).order.len(), 2);
    }

    #[test]
    fn scatter_identity_when_budget_large() {
        let s = scatter_downsample(&table(), 10, None, 1, &["a".to_string()]).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert_eq!(s.annotations["a"].codes, vec![Some(0), Some(0), Some(1)]);
    }
}
