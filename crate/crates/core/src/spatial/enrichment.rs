//! Permutation-test neighborhood enrichment and the phenotype interaction
//! matrix, both over an undirected spatial neighbor graph.
//!
//! Cells without a label are left out of the graph. Permutation `t` shuffles
//! labels with seed `derive_seed(seed, t)`; permutation counts are exact
//! integers, so the z matrix is bitwise identical at any thread count.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{spatial_graph, strata, GraphSpec};
use crate::error::{Error, Result};
use crate::par;
use crate::table::{CellTable, Warning, MISSING};

pub const DEFAULT_PERMUTATIONS: usize = 1000;

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichmentParams {
    pub annotation: String,
    pub graph: GraphSpec,
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stratify_by: Option<String>,
}

impl EnrichmentParams {
    pub fn new(annotation: &str, graph: GraphSpec) -> Self {
        Self {
            annotation: annotation.to_string(),
            graph,
            n_permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            stratify_by: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub stratum: Option<String>,
    pub labels: Vec<String>,
    /// Edges per label pair, each undirected edge once, symmetric.
    pub observed: Vec<Vec<u64>>,
    pub z: Vec<Vec<f64>>,
    pub perm_mean: Vec<Vec<f64>>,
    pub perm_std: Vec<Vec<f64>>,
    pub n_permutations: usize,
    pub seed: u64,
    pub n_cells: usize,
    pub n_edges: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

/// Symmetric label-pair edge counts: an edge (p, q) adds one to both
/// `[p][q]` and `[q][p]`, and one to `[p][p]` when `p == q`.
fn pair_counts(edges: &[(u32, u32)], labels: &[u32], n_labels: usize, out: &mut [u64]) {
    out.iter_mut().for_each(|c| *c = 0);
    for &(i, j) in edges {
        let a = labels[i as usize] as usize;
        let b = labels[j as usize] as usize;
        out[a * n_labels + b] += 1;
        if a != b {
            out[b * n_labels + a] += 1;
        }
    }
}

fn to_rows<T: Copy>(flat: &[T], n: usize) -> Vec<Vec<T>> {
    flat.chunks(n.max(1)).take(n).map(<[T]>::to_vec).collect()
}

/// Rows of `rows` with a non-missing label.
fn labeled(rows: &[usize], codes: &[u32]) -> Vec<usize> {
    rows.iter().copied().filter(|&i| codes[i] != MISSING).collect()
}

pub fn neighborhood_enrichment(table: &CellTable, params: &EnrichmentParams) -> Result<Vec<EnrichmentResult>> {
    params.graph.validate()?;
    if params.n_permutations < 2 {
        return Err(Error::param("n_permutations", "must be at least 2"));
    }
    let col = table.annotation(&params.annotation)?;
    let codes = col.codes();
    let n_labels = col.n_categories();
    let stratified = params.stratify_by.is_some();
    let mut results = Vec::new();
    for stratum in strata(table, params.stratify_by.as_deref())? {
        let rows = labeled(&stratum.rows, codes);
        let mut present = vec![false; n_labels];
        for &i in &rows {
            present[codes[i] as usize] = true;
        }
        let n_present = present.iter().filter(|&&p| p).count();
        let edges = if n_present >= 2 {
            let pts: Vec<[f64; 2]> = rows.iter().map(|&i| table.xy(i)).collect();
            spatial_graph(&pts, params.graph)?.undirected_edges()
        } else {
            Vec::new()
        };
        if n_present < 2 || edges.is_empty() {
            let err = if n_present < 2 { Error::SingleLabel } else { Error::EmptyGraph };
            if !stratified {
                return Err(err);
            }
            let nan = vec![vec![f64::NAN; n_labels]; n_labels];
            results.push(EnrichmentResult {
                stratum: stratum.label,
                labels: col.categories().to_vec(),
                observed: vec![vec![0; n_labels]; n_labels],
                z: nan.clone(),
                perm_mean: nan.clone(),
                perm_std: nan,
                n_permutations: params.n_permutations,
                seed: params.seed,
                n_cells: rows.len(),
                n_edges: edges.len(),
                warnings: vec![Warning::new(err.kind(), format!("stratum skipped: {err}"))],
            });
            continue;
        }

        let local: Vec<u32> = rows.iter().map(|&i| codes[i]).collect();
        let cells = n_labels * n_labels;
        let mut observed = vec![0u64; cells];
        pair_counts(&edges, &local, n_labels, &mut observed);

        const PERMS_PER_TASK: usize = 16;
        let n_tasks = params.n_permutations.div_ceil(PERMS_PER_TASK);
        let partials = par::map_range(n_tasks, |task| {
            let mut sum = vec![0u64; cells];
            let mut sumsq = vec![0u128; cells];
            let mut counts = vec![0u64; cells];
            let mut shuffled = local.clone();
            let end = ((task + 1) * PERMS_PER_TASK).min(params.n_permutations);
            for t in task * PERMS_PER_TASK..end {
                shuffled.copy_from_slice(&local);
                let mut rng = par::rng(par::derive_seed(params.seed, t as u64));
                shuffled.shuffle(&mut rng);
                pair_counts(&edges, &shuffled, n_labels, &mut counts);
                for c in 0..cells {
                    sum[c] += counts[c];
                    sumsq[c] += u128::from(counts[c]) * u128::from(counts[c]);
                }
            }
            (sum, sumsq)
        });
        let mut sum = vec![0u64; cells];
        let mut sumsq = vec![0u128; cells];
        for (s, q) in partials {
            for c in 0..cells {
                sum[c] += s[c];
                sumsq[c] += q[c];
            }
        }

        let n = params.n_permutations as u128;
        let mut mean = vec![0.0; cells];
        let mut std = vec![0.0; cells];
        let mut z = vec![0.0; cells];
        let mut degenerate = Vec::new();
        for c in 0..cells {
            let s = u128::from(sum[c]);
            // population variance (n*sumsq - sum^2) / n^2, exact in integers
            let var_num = n * sumsq[c] - s * s;
            mean[c] = s as f64 / n as f64;
            std[c] = (var_num as f64).sqrt() / n as f64;
            if var_num == 0 {
                z[c] = f64::NAN;
                let (p, q) = (c / n_labels, c % n_labels);
                if p <= q {
                    degenerate.push(format!("{}/{}", col.categories()[p], col.categories()[q]));
                }
            } else {
                z[c] = (observed[c] as f64 - mean[c]) / std[c];
            }
        }
        let mut warnings = Vec::new();
        if !degenerate.is_empty() {
            warnings.push(Warning::new(
                "zero_permutation_variance",
                format!("z undefined for pairs {}", degenerate.join(", ")),
            ));
        }
        results.push(EnrichmentResult {
            stratum: stratum.label,
            labels: col.categories().to_vec(),
            observed: to_rows(&observed, n_labels),
            z: to_rows(&z, n_labels),
            perm_mean: to_rows(&mean, n_labels),
            perm_std: to_rows(&std, n_labels),
            n_permutations: params.n_permutations,
            seed: params.seed,
            n_cells: rows.len(),
            n_edges: edges.len(),
            warnings,
        });
    }
    Ok(results)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionNormalization {
    #[default]
    None,
    Row,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionResult {
    pub labels: Vec<String>,
    pub normalization: InteractionNormalization,
    pub matrix: Vec<Vec<f64>>,
    pub n_edges: usize,
}

/// `M[p][q]` = ordered neighbor pairs `(i, j)` with `i` labeled `p` and `j`
/// labeled `q`. Row normalization divides by row sums; empty rows stay 0.
pub fn interaction_matrix(
    table: &CellTable,
    annotation: &str,
    graph: GraphSpec,
    normalize: InteractionNormalization,
) -> Result<InteractionResult> {
    graph.validate()?;
    let col = table.annotation(annotation)?;
    let codes = col.codes();
    let n_labels = col.n_categories();
    let rows: Vec<usize> = labeled(&(0..table.n_cells()).collect::<Vec<_>>(), codes);
    let pts: Vec<[f64; 2]> = rows.iter().map(|&i| table.xy(i)).collect();
    let g = spatial_graph(&pts, graph)?;
    let local: Vec<u32> = rows.iter().map(|&i| codes[i]).collect();
    let mut counts = vec![0u64; n_labels * n_labels];
    for (i, &a) in local.iter().enumerate() {
        for &j in g.neighbors(i) {
            counts[a as usize * n_labels + local[j as usize] as usize] += 1;
        }
    }
    let mut matrix: Vec<Vec<f64>> = to_rows(&counts, n_labels)
        .into_iter()
        .map(|r| r.into_iter().map(|c| c as f64).collect())
        .collect();
    if normalize == InteractionNormalization::Row {
        for row in &mut matrix {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
    }
    Ok(InteractionResult {
        labels: col.categories().to_vec(),
        normalization: normalize,
        matrix,
        n_edges: g.n_edges() / 2,
    })
}
