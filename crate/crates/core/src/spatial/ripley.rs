//! Center/neighbor Ripley's K and L with border-exclusion edge correction,
//! and CSR simulation envelopes.
//!
//! For each radius `r`, only center cells at least `r` from every edge of
//! the region contribute ("minus sampling"):
//!
//! ```text
//! K(r) = A / (n_valid(r) * n_neighbor) * sum over valid centers i of |{j : 0 < d(i, j) <= r}|
//! L(r) = sqrt(K(r) / pi)
//! ```
//!
//! where `j` ranges over neighbor-phenotype cells. The normalization uses
//! the surviving centers `n_valid(r)` at each radius.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree2D;
use super::{strata, RegionBounds};
use crate::error::{Error, Result};
use crate::par;
use crate::stats::quantile_sorted;
use crate::table::{CellTable, Warning};

pub const DEFAULT_ENVELOPE_SIMS: usize = 99;

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeParams {
    #[serde(default = "default_sims")]
    pub n_sims: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_sims() -> usize {
    DEFAULT_ENVELOPE_SIMS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipleyParams {
    pub annotation: String,
    pub center: String,
    pub neighbor: String,
    pub radii: Vec<f64>,
    #[serde(default)]
    pub bounds: Option<RegionBounds>,
    #[serde(default)]
    pub stratify_by: Option<String>,
    /// Border exclusion on/off. Off gives the naive estimator (every center
    /// counted at every radius), kept for comparison.
    #[serde(default = "default_true")]
    pub edge_correction: bool,
    #[serde(default)]
    pub envelope: Option<EnvelopeParams>,
}

impl RipleyParams {
    pub fn new(annotation: &str, center: &str, neighbor: &str, radii: Vec<f64>) -> Self {
        Self {
            annotation: annotation.to_string(),
            center: center.to_string(),
            neighbor: neighbor.to_string(),
            radii,
            bounds: None,
            stratify_by: None,
            edge_correction: true,
            envelope: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMethod {
    MinMax,
    /// 2.5th and 97.5th percentiles (used from 199 simulations up).
    Percentile95,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Above,
    Inside,
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub n_sims: usize,
    pub seed: u64,
    pub method: EnvelopeMethod,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Observed L relative to the band; `null` where either is undefined.
    pub significance: Vec<Option<Significance>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipleyCurve {
    pub stratum: Option<String>,
    pub center: String,
    pub neighbor: String,
    pub radii: Vec<f64>,
    pub k_values: Vec<f64>,
    pub l_values: Vec<f64>,
    pub n_valid_centers: Vec<usize>,
    pub n_center: usize,
    pub n_neighbor: usize,
    pub area: f64,
    pub bounds: RegionBounds,
    pub edge_correction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

/// K, L and valid-center counts for raw point sets.
#[derive(Clone, Debug, PartialEq)]
pub struct RipleyEstimate {
    pub k_values: Vec<f64>,
    pub l_values: Vec<f64>,
    pub n_valid_centers: Vec<usize>,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::EmptyRadii);
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii", "must be positive and strictly increasing"));
    }
    Ok(())
}

/// Estimator on explicit point sets (centers may coincide with neighbors;
/// pairs at distance 0, including a point with itself, are not counted).
pub fn ripley_points(
    centers: &[[f64; 2]],
    neighbors: &[[f64; 2]],
    radii: &[f64],
    bounds: &RegionBounds,
    edge_correction: bool,
) -> Result<RipleyEstimate> {
    check_radii(radii)?;
    bounds.validate()?;
    let n_r = radii.len();
    let radii2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let tree = KdTree2D::build(neighbors);
    let r_max = radii[n_r - 1];

    // Per chunk of centers: pair counts per radius and valid-center counts.
    let partials = par::map_chunks(centers, 256, |chunk| {
        let mut pairs = vec![0u64; n_r];
        let mut valid = vec![0u64; n_r];
        let mut hist = vec![0u64; n_r];
        for &c in chunk {
            // number of radii at which this center survives border exclusion
            let m = if edge_correction {
                let b = bounds.border_distance(c);
                radii.partition_point(|&r| r <= b)
            } else {
                n_r
            };
            if m == 0 {
                continue;
            }
            hist.iter_mut().for_each(|h| *h = 0);
            let reach = if edge_correction { radii[m - 1] } else { r_max };
            for (_, d2) in tree.radius_query_dist2(c, reach) {
                if d2 > 0.0 {
                    let k = radii2.partition_point(|&r2| r2 < d2);
                    if k < m {
                        hist[k] += 1;
                    }
                }
            }
            let mut cumulative = 0;
            for k in 0..m {
                cumulative += hist[k];
                pairs[k] += cumulative;
                valid[k] += 1;
            }
        }
        (pairs, valid)
    });
    let mut pairs = vec![0u64; n_r];
    let mut valid = vec![0u64; n_r];
    for (p, v) in partials {
        for k in 0..n_r {
            pairs[k] += p[k];
            valid[k] += v[k];
        }
    }
    let area = bounds.area();
    let n_neighbor = neighbors.len() as f64;
    let k_values: Vec<f64> = (0..n_r)
        .map(|k| {
            if valid[k] == 0 || neighbors.is_empty() {
                f64::NAN
            } else {
                area * pairs[k] as f64 / (valid[k] as f64 * n_neighbor)
            }
        })
        .collect();
    Ok(RipleyEstimate {
        l_values: k_values.iter().map(|k| (k / std::f64::consts::PI).sqrt()).collect(),
        k_values,
        n_valid_centers: valid.iter().map(|&v| v as usize).collect(),
    })
}

/// Ripley's K/L for one center/neighbor phenotype pair, per stratum.
pub fn ripley_l(table: &CellTable, params: &RipleyParams) -> Result<Vec<RipleyCurve>> {
    check_radii(&params.radii)?;
    if let Some(b) = &params.bounds {
        b.validate()?;
    }
    let labels = table.annotation(&params.annotation)?;
    let center_code = labels
        .code_of(&params.center)
        .ok_or_else(|| Error::UnknownLabel(params.center.clone()))?;
    let neighbor_code = labels
        .code_of(&params.neighbor)
        .ok_or_else(|| Error::UnknownLabel(params.neighbor.clone()))?;
    let codes = labels.codes();

    let mut curves = Vec::new();
    for stratum in strata(table, params.stratify_by.as_deref())? {
        let mut warnings = Vec::new();
        let pts: Vec<[f64; 2]> = stratum.rows.iter().map(|&i| table.xy(i)).collect();
        let bounds = match params.bounds {
            Some(b) => b,
            None => match RegionBounds::bounding(&pts) {
                Ok(b) => b,
                Err(e) => {
                    if stratum.label.is_none() {
                        return Err(e);
                    }
                    warnings.push(Warning::new(
                        "degenerate_region",
                        format!("stratum bounding box is degenerate: {e}"),
                    ));
                    curves.push(undefined_curve(params, stratum.label, warnings));
                    continue;
                }
            },
        };
        let pick = |code: u32| -> Vec<[f64; 2]> {
            stratum
                .rows
                .iter()
                .filter(|&&i| codes[i] == code)
                .map(|&i| table.xy(i))
                .collect()
        };
        let centers = pick(center_code);
        let neighbors = if center_code == neighbor_code {
            centers.clone()
        } else {
            pick(neighbor_code)
        };
        let est = ripley_points(&centers, &neighbors, &params.radii, &bounds, params.edge_correction)?;
        if centers.is_empty() || neighbors.is_empty() {
            warnings.push(Warning::new(
                "no_cells",
                format!(
                    "{} center and {} neighbor cells in stratum; K and L undefined",
                    centers.len(),
                    neighbors.len()
                ),
            ));
        } else if let Some(k) = est.n_valid_centers.iter().position(|&v| v == 0) {
            warnings.push(Warning::new(
                "no_valid_centers",
                format!(
                    "no center cell is at least {} from the region border; K and L undefined from that radius",
                    params.radii[k]
                ),
            ));
        }
        let mut curve = RipleyCurve {
            stratum: stratum.label,
            center: params.center.clone(),
            neighbor: params.neighbor.clone(),
            radii: params.radii.clone(),
            k_values: est.k_values,
            l_values: est.l_values,
            n_valid_centers: est.n_valid_centers,
            n_center: centers.len(),
            n_neighbor: neighbors.len(),
            area: bounds.area(),
            bounds,
            edge_correction: params.edge_correction,
            envelope: None,
            warnings,
        };
        if let Some(env) = params.envelope {
            curve.envelope = csr_envelope(&curve, env.n_sims, env.seed)?;
        }
        curves.push(curve);
    }
    Ok(curves)
}

fn undefined_curve(params: &RipleyParams, stratum: Option<String>, warnings: Vec<Warning>) -> RipleyCurve {
    let n = params.radii.len();
    RipleyCurve {
        stratum,
        center: params.center.clone(),
        neighbor: params.neighbor.clone(),
        radii: params.radii.clone(),
        k_values: vec![f64::NAN; n],
        l_values: vec![f64::NAN; n],
        n_valid_centers: vec![0; n],
        n_center: 0,
        n_neighbor: 0,
        area: f64::NAN,
        bounds: RegionBounds {
            xmin: f64::NAN,
            xmax: f64::NAN,
            ymin: f64::NAN,
            ymax: f64::NAN,
        },
        edge_correction: params.edge_correction,
        envelope: None,
        warnings,
    }
}

fn uniform_points(rng: &mut par::Rng, n: usize, b: &RegionBounds) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            [b.xmin + u * (b.xmax - b.xmin), b.ymin + v * (b.ymax - b.ymin)]
        })
        .collect()
}

/// Pointwise CSR envelope for `curve`: `n_sims` uniform point sets in the
/// curve's region with the same center/neighbor counts, evaluated with the
/// same estimator. Min/max band below 199 simulations, 2.5/97.5 percentiles
/// from 199 up. Simulation `t` uses seed `derive_seed(seed, t)`.
/// `n_sims = 0` yields `None`.
pub fn csr_envelope(curve: &RipleyCurve, n_sims: usize, seed: u64) -> Result<Option<Envelope>> {
    if n_sims == 0 || !curve.area.is_finite() {
        return Ok(None);
    }
    let same = curve.center == curve.neighbor;
    let sims: Vec<Result<Vec<f64>>> = par::map_range(n_sims, |t| {
        let mut rng = par::rng(par::derive_seed(seed, t as u64));
        let centers = uniform_points(&mut rng, curve.n_center, &curve.bounds);
        let neighbors = if same {
            centers.clone()
        } else {
            uniform_points(&mut rng, curve.n_neighbor, &curve.bounds)
        };
        ripley_points(&centers, &neighbors, &curve.radii, &curve.bounds, curve.edge_correction)
            .map(|e| e.l_values)
    });
    let sims: Vec<Vec<f64>> = sims.into_iter().collect::<Result<_>>()?;
    let method = if n_sims >= 199 {
        EnvelopeMethod::Percentile95
    } else {
        EnvelopeMethod::MinMax
    };
    let n_r = curve.radii.len();
    let mut lo = Vec::with_capacity(n_r);
    let mut hi = Vec::with_capacity(n_r);
    for k in 0..n_r {
        let mut vals: Vec<f64> = sims.iter().map(|s| s[k]).filter(|v| !v.is_nan()).collect();
        vals.sort_by(f64::total_cmp);
        let (a, b) = match method {
            EnvelopeMethod::MinMax => (
                vals.first().copied().unwrap_or(f64::NAN),
                vals.last().copied().unwrap_or(f64::NAN),
            ),
            EnvelopeMethod::Percentile95 => (quantile_sorted(&vals, 0.025), quantile_sorted(&vals, 0.975)),
        };
        lo.push(a);
        hi.push(b);
    }
    let significance = (0..n_r)
        .map(|k| {
            let l = curve.l_values[k];
            if l.is_nan() || lo[k].is_nan() {
                None
            } else if l > hi[k] {
                Some(Significance::Above)
            } else if l < lo[k] {
                Some(Significance::Below)
            } else {
                Some(Significance::Inside)
            }
        })
        .collect();
    Ok(Some(Envelope {
        n_sims,
        seed,
        method,
        lo,
        hi,
        significance,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> RegionBounds {
        RegionBounds::new(0.0, 10.0, 0.0, 10.0).unwrap()
    }

    #[test]
    fn hand_computed_single_pair() {
        let est = ripley_points(&[[5.0, 5.0]], &[[5.0, 7.0]], &[3.0, 6.0], &unit_box(), true).unwrap();
        assert_eq!(est.n_valid_centers, vec![1, 0]);
        assert_eq!(est.k_values[0], 100.0);
        assert!((est.l_values[0] - 5.641_895_835).abs() < 1e-8);
        assert!(est.k_values[1].is_nan());
        assert!(est.l_values[1].is_nan());
    }

    #[test]
    fn radii_validation() {
        let b = unit_box();
        assert!(matches!(ripley_points(&[], &[], &[], &b, true), Err(Error::EmptyRadii)));
        assert!(ripley_points(&[], &[], &[2.0, 1.0], &b, true).is_err());
        assert!(ripley_points(&[], &[], &[0.0], &b, true).is_err());
    }

    #[test]
    fn coincident_points_are_not_pairs() {
        let est = ripley_points(&[[5.0, 5.0]], &[[5.0, 5.0], [5.0, 6.0]], &[2.0], &unit_box(), true).unwrap();
        assert_eq!(est.k_values[0], 100.0 / 2.0);
    }

    fn table_with(points: &[(f64, f64)], labels: &[&str]) -> CellTable {
        CellTable::from_parts(points, vec![], vec![])
            .unwrap()
            .add_annotation("ph", labels)
            .unwrap()
    }

    #[test]
    fn table_level_with_bounds() {
        let t = table_with(&[(5.0, 5.0), (5.0, 7.0)], &["A", "B"]);
        let mut p = RipleyParams::new("ph", "A", "B", vec![3.0, 6.0]);
        p.bounds = Some(unit_box());
        let curves = ripley_l(&t, &p).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].k_values[0], 100.0);
        assert_eq!(curves[0].warnings[0].code, "no_valid_centers");
        p.center = "Z".into();
        assert!(matches!(ripley_l(&t, &p), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn zero_sims_gives_no_envelope() {
        let t = table_with(&[(5.0, 5.0), (5.0, 7.0)], &["A", "B"]);
        let mut p = RipleyParams::new("ph", "A", "B", vec![1.0]);
        p.bounds = Some(unit_box());
        p.envelope = Some(EnvelopeParams { n_sims: 0, seed: 1 });
        let curves = ripley_l(&t, &p).unwrap();
        assert!(curves[0].envelope.is_none());
    }
}
