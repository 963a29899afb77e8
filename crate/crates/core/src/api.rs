//! JSON request bodies and dispatch for the analyses exposed over HTTP and
//! mirrored by the CLI.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::spatial::{
    interaction_matrix, nearest_neighbor_distances, neighborhood_enrichment, neighborhood_profile, ripley_l,
    EnrichmentParams, GraphSpec, InteractionNormalization, ProfileNormalization, RipleyParams,
};
use crate::summaries::{
    boxplot_stats, crosstab, group_means, histogram, BoxplotParams, CrosstabNormalization, HistogramParams,
};
use crate::CellTable;

pub const SUMMARY_KINDS: [&str; 4] = ["hist", "box", "means", "crosstab"];
pub const SPATIAL_KINDS: [&str; 5] = ["ripley", "enrich", "interact", "nn-dist", "profile"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeansParams {
    pub group_by: String,
    #[serde(default)]
    pub layer: Option<String>,
    /// Attach average-linkage row and column orders.
    #[serde(default)]
    pub order: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstabParams {
    pub row_annotation: String,
    pub col_annotation: String,
    #[serde(default)]
    pub normalize: CrosstabNormalization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionParams {
    pub annotation: String,
    pub graph: GraphSpec,
    #[serde(default)]
    pub normalize: InteractionNormalization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnParams {
    pub annotation: String,
    #[serde(default)]
    pub stratify_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    pub annotation: String,
    pub bin_edges: Vec<f64>,
    #[serde(default)]
    pub normalize: ProfileNormalization,
    #[serde(default)]
    pub stratify_by: Option<String>,
}

/// Parses a request body, reporting the offending field when serde names one.
pub fn parse<T: serde::de::DeserializeOwned>(body: &Value) -> Result<T> {
    serde_json::from_value(body.clone()).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("body")
            .to_string();
        Error::InvalidParameter { name: field, reason: msg }
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

pub fn run_summary(table: &CellTable, kind: &str, body: &Value) -> Result<Value> {
    match kind {
        "hist" => to_value(&histogram(table, &parse::<HistogramParams>(body)?)?),
        "box" => to_value(&boxplot_stats(table, &parse::<BoxplotParams>(body)?)?),
        "means" => {
            let p: MeansParams = parse(body)?;
            let m = group_means(table, p.layer.as_deref(), &p.group_by)?;
            to_value(&if p.order { m.with_order() } else { m })
        }
        "crosstab" => {
            let p: CrosstabParams = parse(body)?;
            to_value(&crosstab(table, &p.row_annotation, &p.col_annotation, p.normalize)?)
        }
        other => Err(Error::param("kind", format!("unknown summary `{other}`"))),
    }
}

/// Whether `kind` returns one row per cell (subject to payload limits).
pub fn is_per_cell(kind: &str) -> bool {
    matches!(kind, "nn-dist" | "profile")
}

pub fn run_spatial(table: &CellTable, kind: &str, body: &Value) -> Result<Value> {
    match kind {
        "ripley" => to_value(&ripley_l(table, &parse::<RipleyParams>(body)?)?),
        "enrich" => to_value(&neighborhood_enrichment(table, &parse::<EnrichmentParams>(body)?)?),
        "interact" => {
            let p: InteractionParams = parse(body)?;
            to_value(&interaction_matrix(table, &p.annotation, p.graph, p.normalize)?)
        }
        "nn-dist" => {
            let p: NnParams = parse(body)?;
            to_value(&nearest_neighbor_distances(table, &p.annotation, p.stratify_by.as_deref())?)
        }
        "profile" => {
            let p: ProfileParams = parse(body)?;
            to_value(&neighborhood_profile(
                table,
                &p.annotation,
                &p.bin_edges,
                p.normalize,
                p.stratify_by.as_deref(),
            )?)
        }
        other => Err(Error::param("kind", format!("unknown spatial analysis `{other}`"))),
    }
}
