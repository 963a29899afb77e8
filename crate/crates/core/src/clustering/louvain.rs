//! Louvain modularity optimization with a resolution parameter.
//!
//! Fully sequential and deterministic: each level sweeps nodes in a seeded
//! shuffled order, a node moves to the community with the highest score
//! `k_i_in[c] - resolution * k_i * tot[c] / 2m` (lowest community id on
//! ties), sweeps repeat until a sweep gains less than `MIN_GAIN`, then
//! communities are collapsed into nodes. Levels stop once a level gains
//! less than `MIN_GAIN` in modularity.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::par;

pub const MIN_GAIN: f64 = 1e-7;
const MAX_SWEEPS: usize = 1000;

/// Weighted undirected graph at one aggregation level. `adj` excludes
/// self-loops; `internal[i]` is the weight of edges collapsed inside `i`.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    internal: Vec<f64>,
}

impl Level {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.internal[i]
    }
}

/// Community labels `0..C-1`, densified by first appearance.
pub fn louvain(g: &NeighborGraph, resolution: f64, seed: u64) -> Result<Vec<u32>> {
    if g.is_directed() {
        return Err(Error::DirectedGraphError);
    }
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::param("resolution", "must be positive"));
    }
    let n = g.n_nodes();
    let mut level = Level {
        adj: (0..n)
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .zip(g.weights(i))
                    .map(|(&j, &w)| (j as usize, f64::from(w)))
                    .collect()
            })
            .collect(),
        internal: vec![0.0; n],
    };
    // community of each original node
    let mut membership: Vec<usize> = (0..n).collect();
    let m2: f64 = (0..n).map(|i| level.degree(i)).sum();
    if m2 == 0.0 {
        return Ok(densify(&membership));
    }

    for depth in 0.. {
        let (community, gain) = local_moves(&level, resolution, m2, par::derive_seed(seed, depth));
        let dense = densify_usize(&community);
        let n_comm = dense.iter().max().map_or(0, |&c| c + 1);
        for c in membership.iter_mut() {
            *c = dense[*c];
        }
        if gain < MIN_GAIN || n_comm == level.adj.len() {
            break;
        }
        level = aggregate(&level, &dense, n_comm);
    }
    Ok(densify(&membership))
}

/// One level of local moving; returns communities and modularity gain.
fn local_moves(level: &Level, resolution: f64, m2: f64, seed: u64) -> (Vec<usize>, f64) {
    let n = level.adj.len();
    let degree: Vec<f64> = (0..n).map(|i| level.degree(i)).collect();
    let mut community: Vec<usize> = (0..n).collect();
    let mut tot = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut par::rng(seed));

    // scratch: weight from the current node to each community
    let mut links = vec![0.0f64; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut total_gain = 0.0;
    for _ in 0..MAX_SWEEPS {
        let mut sweep_gain = 0.0;
        for &i in &order {
            let ci = community[i];
            let ki = degree[i];
            for &(j, w) in &level.adj[i] {
                let c = community[j];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                links[c] += w;
            }
            tot[ci] -= ki;
            let score = |c: usize, link: f64| link - resolution * ki * tot[c] / m2;
            let stay = score(ci, links[ci]);
            let mut best = (ci, stay);
            for &c in &touched {
                let s = score(c, links[c]);
                if s > best.1 || (s == best.1 && c < best.0) {
                    best = (c, s);
                }
            }
            tot[best.0] += ki;
            community[i] = best.0;
            sweep_gain += best.1 - stay;
            for &c in &touched {
                links[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        // score differences are in units of m = m2 / 2
        let gain = sweep_gain * 2.0 / m2;
        total_gain += gain;
        if gain < MIN_GAIN {
            break;
        }
    }
    (community, total_gain)
}

fn aggregate(level: &Level, community: &[usize], n_comm: usize) -> Level {
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comm];
    let mut internal = vec![0.0; n_comm];
    for (i, edges) in level.adj.iter().enumerate() {
        let ci = community[i];
        internal[ci] += level.internal[i];
        for &(j, w) in edges {
            let cj = community[j];
            if ci == cj {
                // each undirected edge is listed from both ends
                internal[ci] += w / 2.0;
            } else {
                *adj[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    Level {
        adj: adj.into_iter().map(|m| m.into_iter().collect()).collect(),
        internal,
    }
}

fn densify_usize(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |&m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn densify(labels: &[usize]) -> Vec<u32> {
    densify_usize(labels).into_iter().map(|l| l as u32).collect()
}

/// Newman modularity of `labels` on undirected `g` with resolution `gamma`:
/// `sum_c [ L_c / m - gamma * (d_c / 2m)^2 ]`. Zero for an edgeless graph.
pub fn modularity(g: &NeighborGraph, labels: &[u32], gamma: f64) -> f64 {
    let n_comm = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut internal = vec![0.0f64; n_comm];
    let mut degree = vec![0.0f64; n_comm];
    for i in 0..g.n_nodes() {
        let ci = labels[i] as usize;
        for (&j, &w) in g.neighbors(i).iter().zip(g.weights(i)) {
            degree[ci] += f64::from(w);
            if labels[j as usize] as usize == ci {
                internal[ci] += f64::from(w);
            }
        }
    }
    let m2: f64 = degree.iter().sum();
    if m2 == 0.0 {
        return 0.0;
    }
    (0..n_comm)
        .map(|c| internal[c] / m2 - gamma * (degree[c] / m2).powi(2))
        .sum()
}
