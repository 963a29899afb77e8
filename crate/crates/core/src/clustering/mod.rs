//! Unsupervised phenotyping: exact kNN graphs, Jaccard-weighted
//! Phenograph clustering and UTAG-style spatial smoothing.

mod louvain;

use serde_json::json;

pub use louvain::{louvain, modularity, MIN_GAIN};

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::par;
use crate::spatial::{symmetrize, KdTree2D};
use crate::table::{CategoricalColumn, CellTable, Matrix, ProvenanceRecord};

pub const DEFAULT_K: usize = 30;

fn row_f64(data: &Matrix<f32>, i: usize) -> Vec<f64> {
    data.row(i).iter().map(|&v| f64::from(v)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Directed exact Euclidean kNN graph over the rows of `data` (self
/// excluded, ties to the lower index). Uses a KD-tree for two columns and
/// a parallel brute-force scan otherwise.
pub fn knn_graph(data: &Matrix<f32>, k: usize) -> Result<NeighborGraph> {
    let n = data.rows();
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    if let Some(pos) = data.as_slice().iter().position(|v| v.is_nan()) {
        return Err(Error::NaNInput { row: pos / data.cols().max(1) });
    }
    let lists: Vec<Vec<u32>> = if data.cols() == 2 {
        let points: Vec<[f64; 2]> = (0..n)
            .map(|i| [f64::from(data.get(i, 0)), f64::from(data.get(i, 1))])
            .collect();
        let tree = KdTree2D::build(&points);
        let lists: Vec<Result<Vec<u32>>> = par::map_range(n, |i| {
            Ok(tree
                .knn_excluding(points[i], k, Some(i))?
                .into_iter()
                .map(|(j, _)| j as u32)
                .collect())
        });
        lists.into_iter().collect::<Result<_>>()?
    } else {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| row_f64(data, i)).collect();
        par::map_range(n, |i| {
            let mut cand: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&rows[i], &rows[j]), j as u32))
                .collect();
            let order = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, order);
            cand.truncate(k);
            cand.sort_unstable_by(order);
            cand.into_iter().map(|(_, j)| j).collect()
        })
    };
    NeighborGraph::from_lists(&lists, true)
}

/// Undirected Jaccard-weighted graph from a directed kNN graph: an edge
/// joins `i` and `j` when either lists the other, weighted by
/// `|N(i) ∩ N(j)| / |N(i) ∪ N(j)|` over the directed neighbor sets.
/// Zero-weight edges are dropped.
pub fn jaccard_weights(g: &NeighborGraph) -> Result<NeighborGraph> {
    let n = g.n_nodes();
    let sets: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            let mut s = g.neighbors(i).to_vec();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    let candidates = symmetrize(&sets);
    let lists: Vec<Vec<(u32, f32)>> = par::map_range(n, |i| {
        candidates[i]
            .iter()
            .filter_map(|&j| {
                let inter = sorted_intersection(&sets[i], &sets[j as usize]);
                let union = sets[i].len() + sets[j as usize].len() - inter;
                (inter > 0).then(|| (j, (inter as f64 / union as f64) as f32))
            })
            .collect()
    });
    NeighborGraph::from_weighted_lists(&lists, false)
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// kNN graph, Jaccard weights and Louvain on the rows of `layer`; labels
/// are stored as annotation `out_annotation` with categories "0", "1", ...
pub fn phenograph(
    table: &CellTable,
    layer: &str,
    k: usize,
    resolution: f64,
    seed: u64,
    out_annotation: &str,
) -> Result<CellTable> {
    let data = table.layer(layer)?;
    let knn = knn_graph(data, k)?;
    let weighted = jaccard_weights(&knn)?;
    let labels = louvain(&weighted, resolution, seed)?;
    let n_comm = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let q = modularity(&weighted, &labels, resolution);
    let column = CategoricalColumn::new(labels, (0..n_comm).map(|c| c.to_string()).collect())?;
    let record = ProvenanceRecord::new(
        "phenograph",
        json!({
            "layer": layer,
            "k": k,
            "resolution": resolution,
            "seed": seed,
            "out_annotation": out_annotation,
            "n_communities": n_comm,
            "modularity": q,
        }),
    );
    table.with_annotation(out_annotation, column, record)
}

/// Spatial smoothing: each row becomes the mean of itself and every cell
/// within `radius` (closed), per feature over non-NaN values.
pub fn utag_smooth(table: &CellTable, layer: &str, radius: f64, out_layer: &str) -> Result<CellTable> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::NonPositiveRadius(radius));
    }
    let src = table.layer(layer)?;
    let d = src.cols();
    let points = table.points();
    let tree = KdTree2D::build(&points);
    let rows: Vec<Vec<f32>> = par::map_range(table.n_cells(), |i| {
        let mut sum = vec![0.0f64; d];
        let mut count = vec![0u32; d];
        // the query includes i itself at distance 0
        for j in tree.radius_query(points[i], radius) {
            for (f, &v) in src.row(j).iter().enumerate() {
                if !v.is_nan() {
                    sum[f] += f64::from(v);
                    count[f] += 1;
                }
            }
        }
        (0..d)
            .map(|f| {
                if count[f] == 0 {
                    f32::NAN
                } else {
                    (sum[f] / f64::from(count[f])) as f32
                }
            })
            .collect()
    });
    let layer_m = Matrix::new(table.n_cells(), d, rows.into_iter().flatten().collect())?;
    let record = ProvenanceRecord::new(
        "utag_smooth",
        json!({ "layer": layer, "radius": radius, "out_layer": out_layer }),
    );
    table.with_layer(out_layer, layer_m, record)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let na = a.iter().max().map_or(0, |&m| m as usize + 1);
    let nb = b.iter().max().map_or(0, |&m| m as usize + 1);
    let mut table = vec![0u64; na * nb];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize * nb + y as usize] += 1;
    }
    let pairs = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&v| pairs(v)).sum();
    let rows: f64 = (0..na).map(|i| pairs(table[i * nb..(i + 1) * nb].iter().sum())).sum();
    let cols: f64 = (0..nb).map(|j| pairs((0..na).map(|i| table[i * nb + j]).sum())).sum();
    let total = pairs(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_knn() {
        let m = Matrix::new(3, 1, vec![0.0f32, 1.0, 3.0]).unwrap();
        let g = knn_graph(&m, 1).unwrap();
        assert_eq!((g.neighbors(0), g.neighbors(1), g.neighbors(2)), (&[1][..], &[0][..], &[1][..]));
        assert!(matches!(knn_graph(&m, 3), Err(Error::KTooLarge { .. })));
        let m = Matrix::new(2, 1, vec![0.0f32, f32::NAN]).unwrap();
        assert!(matches!(knn_graph(&m, 1), Err(Error::NaNInput { row: 1 })));
    }

    #[test]
    fn complete_graph_at_k_n_minus_1() {
        let m = Matrix::new(4, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        let g = knn_graph(&m, 3).unwrap();
        for i in 0..4 {
            let mut ns = g.neighbors(i).to_vec();
            ns.sort_unstable();
            assert_eq!(ns, (0..4u32).filter(|&j| j as usize != i).collect::<Vec<u32>>());
        }
    }

    #[test]
    fn jaccard_hand_example() {
        // 0 -> {1, 2}, 1 -> {0, 2}, 2 -> {0, 1}, 3 -> {0, 1}
        let lists = vec![vec![1, 2], vec![0, 2], vec![0, 1], vec![0, 1]];
        let g = NeighborGraph::from_lists(&lists, true).unwrap();
        let w = jaccard_weights(&g).unwrap();
        assert!(!w.is_directed());
        // N(0) ∩ N(1) = {2}, union {0, 1, 2}
        let pos = w.neighbors(0).iter().position(|&j| j == 1).unwrap();
        assert!((w.weights(0)[pos] - 1.0 / 3.0).abs() < 1e-7);
        // N(2) = N(3): identical sets {0, 1} but 2 and 3 never list each other
        assert!(!w.neighbors(2).contains(&3));
        // N(0) ∩ N(3) = {1}, union {0, 1, 2}
        let pos = w.neighbors(3).iter().position(|&j| j == 0).unwrap();
        assert!((w.weights(3)[pos] - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn disjoint_sets_dropped() {
        let lists = vec![vec![1], vec![2], vec![1]];
        let w = jaccard_weights(&NeighborGraph::from_lists(&lists, true).unwrap()).unwrap();
        // N(0) = {1}, N(1) = {2}: disjoint, so edge 0-1 is dropped
        assert!(!w.neighbors(0).contains(&1));
        // N(0) = N(2) = {1}, but neither lists the other
        assert_eq!(w.n_edges(), 0);
    }

    #[test]
    fn utag_examples() {
        let t = CellTable::from_parts(
            &[(0.0, 0.0), (1.0, 0.0), (100.0, 0.0)],
            vec!["a".into(), "c".into()],
            vec![0.0, 7.0, 10.0, 7.0, 3.0, 7.0],
        )
        .unwrap();
        let s = utag_smooth(&t, "features", 2.0, "smooth").unwrap();
        let l = s.layer("smooth").unwrap();
        assert_eq!(l.column(0), vec![5.0, 5.0, 3.0]);
        assert_eq!(l.column(1), vec![7.0, 7.0, 7.0]);
        assert!(matches!(
            utag_smooth(&t, "features", 0.0, "x"),
            Err(Error::NonPositiveRadius(_))
        ));
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }
}
