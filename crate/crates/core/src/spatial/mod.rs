//! Spatial statistics over cell coordinates.
//!
//! All radius semantics use the closed ball `d <= r`; neighborhood profile
//! bins are half-open `[lo, hi)`. Undefined values are NaN (serialized as
//! `null`) and come with a machine-readable warning.

mod enrichment;
pub mod kdtree;
mod nn;
mod profile;
mod ripley;

use serde::{Deserialize, Serialize};

pub use enrichment::{
    interaction_matrix, neighborhood_enrichment, EnrichmentParams, EnrichmentResult,
    InteractionNormalization, InteractionResult, DEFAULT_PERMUTATIONS,
};
pub use kdtree::KdTree2D;
pub use nn::{nearest_neighbor_distances, NnDistances};
pub use profile::{neighborhood_profile, NeighborhoodProfile, ProfileNormalization};
pub use ripley::{
    csr_envelope, ripley_l, ripley_points, Envelope, EnvelopeMethod, EnvelopeParams,
    RipleyCurve, RipleyEstimate, RipleyParams, Significance, DEFAULT_ENVELOPE_SIMS,
};

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::par;
use crate::table::{CellTable, MISSING};

/// Axis-aligned analysis region in microns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl RegionBounds {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let b = Self { xmin, xmax, ymin, ymax };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.xmax <= self.xmin || self.ymax <= self.ymin {
            return Err(Error::InvalidBounds(format!(
                "need xmax > xmin and ymax > ymin, got [{}, {}] x [{}, {}]",
                self.xmin, self.xmax, self.ymin, self.ymax
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    /// Distance from `p` to the nearest edge; negative outside the region.
    pub fn border_distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.xmin)
            .min(self.xmax - p[0])
            .min(p[1] - self.ymin)
            .min(self.ymax - p[1])
    }

    pub fn bounding(points: &[[f64; 2]]) -> Result<Self> {
        let (xmin, xmax, ymin, ymax) = crate::table::bounding_box(points.iter().copied())
            .ok_or_else(|| Error::InvalidBounds("no cells to bound".into()))?;
        Self::new(xmin, xmax, ymin, ymax)
    }
}

/// How spatial neighbors are defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    /// Cells within this distance (closed).
    Radius(f64),
    /// Each cell's k nearest, symmetrized (edge if either side selects it).
    Knn(usize),
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GraphSpec::Radius(r) if !(r > 0.0) || !r.is_finite() => Err(Error::NonPositiveRadius(r)),
            GraphSpec::Knn(0) => Err(Error::param("k", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Undirected, unit-weight spatial neighbor graph without self-loops.
pub fn spatial_graph(points: &[[f64; 2]], spec: GraphSpec) -> Result<NeighborGraph> {
    spec.validate()?;
    let n = points.len();
    let tree = KdTree2D::build(points);
    let lists: Vec<Vec<u32>> = match spec {
        GraphSpec::Radius(r) => par::map_range(n, |i| {
            tree.radius_query(points[i], r)
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| j as u32)
                .collect()
        }),
        GraphSpec::Knn(k) => {
            if n > 0 && k >= n {
                return Err(Error::KTooLarge { k, n });
            }
            let directed: Vec<Result<Vec<u32>>> = par::map_range(n, |i| {
                Ok(tree
                    .knn_excluding(points[i], k, Some(i))?
                    .into_iter()
                    .map(|(j, _)| j as u32)
                    .collect())
            });
            let directed: Vec<Vec<u32>> = directed.into_iter().collect::<Result<_>>()?;
            symmetrize(&directed)
        }
    };
    NeighborGraph::from_lists(&lists, false)
}

/// Union of each directed list with its reverse, sorted and deduplicated.
pub(crate) fn symmetrize(directed: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut lists: Vec<Vec<u32>> = directed.to_vec();
    for (i, l) in directed.iter().enumerate() {
        for &j in l {
            lists[j as usize].push(i as u32);
        }
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    lists
}

/// Rows of one stratum; `label` is `None` for the unstratified case.
#[derive(Clone, Debug)]
pub struct Stratum {
    pub label: Option<String>,
    pub rows: Vec<usize>,
}

/// Splits rows by `stratify_by` (cells with a missing value are left out);
/// without it, one stratum covers every row. Strata follow category order.
pub fn strata(table: &CellTable, stratify_by: Option<&str>) -> Result<Vec<Stratum>> {
    let Some(name) = stratify_by else {
        return Ok(vec![Stratum {
            label: None,
            rows: (0..table.n_cells()).collect(),
        }]);
    };
    let col = table.annotation(name)?;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); col.n_categories()];
    for (i, &c) in col.codes().iter().enumerate() {
        if c != MISSING {
            rows[c as usize].push(i);
        }
    }
    Ok(col
        .categories()
        .iter()
        .zip(rows)
        .map(|(label, rows)| Stratum {
            label: Some(label.clone()),
            rows,
        })
        .collect())
}
