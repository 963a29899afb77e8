use crate::error::{Error, Result};

/// Compressed adjacency over cells.
///
/// Neighbors of node `i` are `neighbors[offsets[i]..offsets[i + 1]]` with
/// parallel `weights`. Undirected graphs store each edge in both
/// directions.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f32>,
    directed: bool,
}

impl NeighborGraph {
    pub fn new(offsets: Vec<usize>, neighbors: Vec<u32>, weights: Vec<f32>, directed: bool) -> Result<Self> {
        let invalid = |msg: &str| Err(Error::InvalidParameter {
            name: "graph".into(),
            reason: msg.to_string(),
        });
        if offsets.first() != Some(&0) || offsets.last() != Some(&neighbors.len()) {
            return invalid("offsets must start at 0 and end at the edge count");
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return invalid("offsets must be nondecreasing");
        }
        if weights.len() != neighbors.len() {
            return invalid("weights and neighbors differ in length");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return invalid("weights must be non-negative");
        }
        let n = offsets.len() - 1;
        for i in 0..n {
            for &j in &neighbors[offsets[i]..offsets[i + 1]] {
                if j as usize >= n {
                    return invalid("neighbor index out of range");
                }
                if j as usize == i {
                    return invalid("self-loops are not allowed");
                }
            }
        }
        Ok(Self {
            offsets,
            neighbors,
            weights,
            directed,
        })
    }

    /// Builds from per-node adjacency lists with unit weights.
    pub fn from_lists(lists: &[Vec<u32>], directed: bool) -> Result<Self> {
        let weighted: Vec<Vec<(u32, f32)>> = lists
            .iter()
            .map(|l| l.iter().map(|&j| (j, 1.0)).collect())
            .collect();
        Self::from_weighted_lists(&weighted, directed)
    }

    pub fn from_weighted_lists(lists: &[Vec<(u32, f32)>], directed: bool) -> Result<Self> {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        for l in lists {
            for &(j, w) in l {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Self::new(offsets, neighbors, weights, directed)
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_indices(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn edge_weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weights(&self, i: usize) -> &[f32] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut edges = Vec::new();
        for i in 0..self.n_nodes() {
            for &j in self.neighbors(i) {
                if (i as u32) < j {
                    edges.push((i as u32, j));
                }
            }
        }
        edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_bad_offsets() {
        assert!(NeighborGraph::from_lists(&[vec![0]], true).is_err());
        assert!(NeighborGraph::new(vec![0, 2], vec![1], vec![1.0], true).is_err());
        assert!(NeighborGraph::new(vec![0, 1, 1], vec![1], vec![-1.0], true).is_err());
        let g = NeighborGraph::from_lists(&[vec![1], vec![0]], false).unwrap();
        assert_eq!(g.undirected_edges(), vec![(0, 1)]);
    }
}
