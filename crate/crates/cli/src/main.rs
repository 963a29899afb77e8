//! `cellscape` command-line interface.
//!
//! Every command reads a container directory (or a CSV with `--mapping`)
//! and writes either a new container (`--out`) or a JSON result
//! (`--out-json`). Randomized commands take `--seed`, default 0. Errors go
//! to stderr as one line of JSON; usage errors exit 2, data errors exit 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use cellscape::ingest::{self, ColumnMapping, IngestOptions};
use cellscape::spatial::{self, ProfileNormalization};
use cellscape::table::container::{load_container, save_container};
use cellscape::table::FEATURES;
use cellscape::transforms::{self, BatchMethod, PhenotypeSpec, RuleSpec, ThresholdSet};
use cellscape::{api, clustering, par, CellTable, Error};
use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "cellscape", version, about = "Spatial single-cell analysis")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CELLSCAPE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a CSV (or Parquet) export into a container.
    Ingest(IngestArgs),
    /// Concatenate containers, labelling rows by source slide.
    Combine(CombineArgs),
    /// Add a transformed layer.
    Transform(TransformArgs),
    /// Threshold markers and apply phenotype rules.
    Phenotype(PhenotypeArgs),
    /// Graph-based clustering.
    Cluster(ClusterArgs),
    /// Spatial statistics, written as JSON.
    #[command(subcommand)]
    Spatial(SpatialCommand),
    /// Summary statistics for plotting, written as JSON.
    #[command(subcommand)]
    Summarize(SummaryCommand),
    /// Serve a directory of containers over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Container directory, or CSV file together with `--mapping`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Column mapping JSON, when `--in` is a CSV file.
    #[arg(long)]
    mapping: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, conflicts_with = "parquet", required_unless_present = "parquet")]
    csv: Option<PathBuf>,
    #[arg(long)]
    parquet: Option<PathBuf>,
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    slide_label: Option<String>,
    /// Match mapped column names ignoring ASCII case.
    #[arg(long)]
    case_insensitive: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "slide")]
    slide_annotation: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformOp {
    Arcsinh,
    Zscore,
    Quantile,
    Batch,
    Rescale,
}

#[derive(Clone, Copy, ValueEnum)]
enum BatchArg {
    Zscore,
    Median,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    op: TransformOp,
    #[arg(long, default_value = FEATURES)]
    layer: String,
    #[arg(long)]
    out_layer: String,
    #[arg(long, default_value_t = 5.0)]
    cofactor: f64,
    #[arg(long, default_value_t = 0.01)]
    q_low: f64,
    #[arg(long, default_value_t = 0.99)]
    q_high: f64,
    #[arg(long, required_if_eq("op", "batch"))]
    batch_annotation: Option<String>,
    #[arg(long, value_enum, default_value = "zscore")]
    method: BatchArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhenotypeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = FEATURES)]
    layer: String,
    /// JSON object of marker → threshold.
    #[arg(long)]
    thresholds: PathBuf,
    /// JSON array of `{"name", "pattern"}` rules, in priority order.
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value = "phenotype")]
    out_annotation: String,
    #[arg(long, default_value = "positivity")]
    binary_layer: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterMethod {
    Phenograph,
    Utag,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    method: ClusterMethod,
    #[arg(long, default_value = FEATURES)]
    layer: String,
    #[arg(long, default_value_t = clustering::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smoothing radius in microns (utag).
    #[arg(long, required_if_eq("method", "utag"))]
    radius: Option<f64>,
    /// Default: `phenograph_k{k}` or `utag_k{k}`.
    #[arg(long)]
    out_annotation: Option<String>,
    #[arg(long, default_value = "utag_smoothed")]
    smoothed_layer: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    /// Neighbors within this distance.
    #[arg(long, conflicts_with = "knn", required_unless_present = "knn")]
    radius: Option<f64>,
    /// Symmetrized k nearest neighbors.
    #[arg(long)]
    knn: Option<usize>,
}

impl GraphArgs {
    fn to_json(&self) -> Value {
        match (self.radius, self.knn) {
            (Some(r), _) => json!({ "radius": r }),
            (None, Some(k)) => json!({ "knn": k }),
            (None, None) => unreachable!("clap requires one"),
        }
    }
}

#[derive(Subcommand)]
enum SpatialCommand {
    /// Bivariate Ripley's L.
    Ripley {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        annotation: String,
        #[arg(long)]
        center: String,
        #[arg(long)]
        neighbor: String,
        /// `lo:hi:step` (hi included when reached exactly) or a comma list.
        #[arg(long, value_parser = parse_radii)]
        radii: Radii,
        /// `xmin,xmax,ymin,ymax`; default is the bounding box.
        #[arg(long, value_parser = parse_bounds)]
        bounds: Option<[f64; 4]>,
        /// Number of CSR simulations for a significance envelope.
        #[arg(long)]
        envelope: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stratify_by: Option<String>,
        #[arg(long)]
        no_edge_correction: bool,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Neighborhood enrichment z-scores.
    Enrich {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        annotation: String,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = spatial::DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stratify_by: Option<String>,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Label-by-label neighbor counts.
    Interact {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        annotation: String,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value = "none")]
        normalize: String,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Per-cell distance to the nearest cell of each label.
    NnDist {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        annotation: String,
        #[arg(long)]
        stratify_by: Option<String>,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Per-cell label counts in distance rings.
    Profile {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        annotation: String,
        #[arg(long, value_delimiter = ',', required = true)]
        bin_edges: Vec<f64>,
        #[arg(long, default_value = "counts")]
        normalize: String,
        #[arg(long)]
        stratify_by: Option<String>,
        #[arg(long)]
        out_json: PathBuf,
        /// Also store the profile as an associated table in this container.
        #[arg(long, requires = "name")]
        out: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Subcommand)]
enum SummaryCommand {
    /// Histogram of a feature or annotation.
    Hist {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, conflicts_with = "annotation", required_unless_present = "annotation")]
        feature: Option<String>,
        #[arg(long)]
        annotation: Option<String>,
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, value_delimiter = ',', conflicts_with = "bins")]
        edges: Option<Vec<f64>>,
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Box-plot statistics.
    Box {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        feature: String,
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long)]
        outlier_limit: Option<usize>,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Per-group feature means (heatmap).
    Means {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        group_by: String,
        #[arg(long)]
        layer: Option<String>,
        /// Attach hierarchical row and column orders.
        #[arg(long)]
        order: bool,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Contingency table of two annotations.
    Crosstab {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        rows: String,
        #[arg(long)]
        cols: String,
        #[arg(long, default_value = "none")]
        normalize: String,
        #[arg(long)]
        out_json: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 200_000)]
    max_payload_cells: usize,
    /// Milliseconds before a computation is handed off as a job.
    #[arg(long, default_value_t = 5000)]
    job_budget_ms: u64,
    #[arg(long)]
    allow_origin: Vec<String>,
    #[arg(long)]
    persist_annotations: bool,
}

#[derive(Clone, Debug, PartialEq)]
struct Radii(Vec<f64>);

fn parse_radii(s: &str) -> Result<Radii, String> {
    let num = |t: &str| -> Result<f64, String> {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{t}` is not a finite number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let radii = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if step <= 0.0 || hi < lo {
                return Err("expected lo:hi:step with step > 0 and hi >= lo".into());
            }
            let span = (hi - lo) / step;
            let n = if (span - span.round()).abs() < 1e-9 {
                span.round() as usize
            } else {
                span.floor() as usize
            };
            (0..=n).map(|i| lo + i as f64 * step).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err("expected lo:hi:step or a comma-separated list".into()),
    };
    if radii.iter().any(|&r| r <= 0.0) {
        return Err("radii must be positive".into());
    }
    Ok(Radii(radii))
}

fn parse_bounds(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|_| "expected xmin,xmax,ymin,ymax".to_string())
}

enum Failure {
    Usage(clap::Error),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(path: &Path, value: &Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load(input: &InputArgs) -> Result<CellTable, Error> {
    if input.input.is_dir() {
        return load_container(&input.input);
    }
    let Some(mapping) = &input.mapping else {
        return Err(Error::param("mapping", "a CSV `--in` needs `--mapping`"));
    };
    let mapping = ColumnMapping::from_json(
        &std::fs::read_to_string(mapping).map_err(|e| Error::io(mapping, e))?,
    )?;
    ingest::ingest_csv(&input.input, &mapping)
}

fn run_ingest(a: IngestArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.mapping).map_err(|e| Error::io(&a.mapping, e))?;
    let mut mapping = ColumnMapping::from_json(&text)?;
    if a.slide_label.is_some() {
        mapping.slide_label = a.slide_label;
    }
    let opts = IngestOptions {
        case_insensitive: a.case_insensitive,
    };
    let table = match (a.csv, a.parquet) {
        (Some(csv), _) => ingest::ingest_csv_with(csv, &mapping, opts)?,
        (None, Some(pq)) => ingest::ingest_parquet(pq, &mapping, opts)?,
        (None, None) => unreachable!("clap requires one"),
    };
    save_container(&table, &a.out)?;
    Ok(())
}

fn run_combine(a: CombineArgs) -> Outcome {
    let tables = a.inputs.iter().map(load_container).collect::<Result<Vec<_>, _>>()?;
    save_container(&ingest::combine_tables(&tables, &a.slide_annotation)?, &a.out)?;
    Ok(())
}

fn run_transform(a: TransformArgs) -> Outcome {
    let t = load(&a.input)?;
    let out = match a.op {
        TransformOp::Arcsinh => transforms::arcsinh(&t, &a.layer, a.cofactor, &a.out_layer)?,
        TransformOp::Zscore => transforms::zscore(&t, &a.layer, &a.out_layer)?,
        TransformOp::Quantile => transforms::quantile_rescale(&t, &a.layer, a.q_low, a.q_high, &a.out_layer)?,
        TransformOp::Rescale => transforms::rescale(&t, &a.layer, &a.out_layer)?,
        TransformOp::Batch => {
            let method = match a.method {
                BatchArg::Zscore => BatchMethod::Zscore,
                BatchArg::Median => BatchMethod::MedianCenter,
            };
            let ann = a.batch_annotation.as_deref().unwrap_or_default();
            transforms::batch_normalize(&t, &a.layer, ann, method, &a.out_layer)?
        }
    };
    save_container(&out, &a.out)?;
    Ok(())
}

fn run_phenotype(a: PhenotypeArgs) -> Outcome {
    let t = load(&a.input)?;
    let spec = PhenotypeSpec {
        thresholds: read_json::<ThresholdSet>(&a.thresholds)?,
        rules: read_json::<Vec<RuleSpec>>(&a.rules)?,
    };
    let out = transforms::phenotype(&t, &a.layer, &spec, &a.binary_layer, &a.out_annotation)?;
    save_container(&out, &a.out)?;
    Ok(())
}

fn run_cluster(a: ClusterArgs) -> Outcome {
    let t = load(&a.input)?;
    let out = match a.method {
        ClusterMethod::Phenograph => {
            let name = a.out_annotation.unwrap_or_else(|| format!("phenograph_k{}", a.k));
            clustering::phenograph(&t, &a.layer, a.k, a.resolution, a.seed, &name)?
        }
        ClusterMethod::Utag => {
            let radius = a.radius.unwrap_or_default();
            let name = a.out_annotation.unwrap_or_else(|| format!("utag_k{}", a.k));
            let smoothed = clustering::utag_smooth(&t, &a.layer, radius, &a.smoothed_layer)?;
            clustering::phenograph(&smoothed, &a.smoothed_layer, a.k, a.resolution, a.seed, &name)?
        }
    };
    save_container(&out, &a.out)?;
    Ok(())
}

fn insert_opt(body: &mut Value, key: &str, v: Option<impl Into<Value>>) {
    if let Some(v) = v {
        body[key] = v.into();
    }
}

fn run_spatial(cmd: SpatialCommand) -> Outcome {
    let (input, kind, body, out_json) = match cmd {
        SpatialCommand::Ripley {
            input,
            annotation,
            center,
            neighbor,
            radii,
            bounds,
            envelope,
            seed,
            stratify_by,
            no_edge_correction,
            out_json,
        } => {
            let mut body = json!({
                "annotation": annotation,
                "center": center,
                "neighbor": neighbor,
                "radii": radii.0,
                "edge_correction": !no_edge_correction,
            });
            if let Some([xmin, xmax, ymin, ymax]) = bounds {
                body["bounds"] = json!({ "xmin": xmin, "xmax": xmax, "ymin": ymin, "ymax": ymax });
            }
            if let Some(n) = envelope {
                body["envelope"] = json!({ "n_sims": n, "seed": seed });
            }
            insert_opt(&mut body, "stratify_by", stratify_by);
            (input, "ripley", body, out_json)
        }
        SpatialCommand::Enrich {
            input,
            annotation,
            graph,
            permutations,
            seed,
            stratify_by,
            out_json,
        } => {
            let mut body = json!({
                "annotation": annotation,
                "graph": graph.to_json(),
                "n_permutations": permutations,
                "seed": seed,
            });
            insert_opt(&mut body, "stratify_by", stratify_by);
            (input, "enrich", body, out_json)
        }
        SpatialCommand::Interact {
            input,
            annotation,
            graph,
            normalize,
            out_json,
        } => {
            let body = json!({ "annotation": annotation, "graph": graph.to_json(), "normalize": normalize });
            (input, "interact", body, out_json)
        }
        SpatialCommand::NnDist {
            input,
            annotation,
            stratify_by,
            out_json,
        } => {
            let mut body = json!({ "annotation": annotation });
            insert_opt(&mut body, "stratify_by", stratify_by);
            (input, "nn-dist", body, out_json)
        }
        SpatialCommand::Profile {
            input,
            annotation,
            bin_edges,
            normalize,
            stratify_by,
            out_json,
            out,
            name,
        } => {
            let t = load(&input)?;
            let norm: ProfileNormalization = api::parse(&json!(normalize))?;
            let profile = spatial::neighborhood_profile(&t, &annotation, &bin_edges, norm, stratify_by.as_deref())?;
            write_json(&out_json, &serde_json::to_value(&profile).map_err(Error::from)?)?;
            if let (Some(out), Some(name)) = (out, name) {
                save_container(&profile.store(&t, &name, &annotation)?, &out)?;
            }
            return Ok(());
        }
    };
    let t = load(&input)?;
    write_json(&out_json, &api::run_spatial(&t, kind, &body)?)?;
    Ok(())
}

fn run_summary(cmd: SummaryCommand) -> Outcome {
    let (input, kind, body, out_json) = match cmd {
        SummaryCommand::Hist {
            input,
            feature,
            annotation,
            layer,
            bins,
            edges,
            group_by,
            out_json,
        } => {
            let mut body = json!({});
            insert_opt(&mut body, "feature", feature);
            insert_opt(&mut body, "annotation", annotation);
            insert_opt(&mut body, "layer", layer);
            insert_opt(&mut body, "n_bins", bins);
            insert_opt(&mut body, "edges", edges);
            insert_opt(&mut body, "group_by", group_by);
            (input, "hist", body, out_json)
        }
        SummaryCommand::Box {
            input,
            feature,
            layer,
            group_by,
            outlier_limit,
            out_json,
        } => {
            let mut body = json!({ "feature": feature });
            insert_opt(&mut body, "layer", layer);
            insert_opt(&mut body, "group_by", group_by);
            insert_opt(&mut body, "outlier_limit", outlier_limit);
            (input, "box", body, out_json)
        }
        SummaryCommand::Means {
            input,
            group_by,
            layer,
            order,
            out_json,
        } => {
            let mut body = json!({ "group_by": group_by, "order": order });
            insert_opt(&mut body, "layer", layer);
            (input, "means", body, out_json)
        }
        SummaryCommand::Crosstab {
            input,
            rows,
            cols,
            normalize,
            out_json,
        } => {
            let body = json!({ "row_annotation": rows, "col_annotation": cols, "normalize": normalize });
            (input, "crosstab", body, out_json)
        }
    };
    let t = load(&input)?;
    write_json(&out_json, &api::run_summary(&t, kind, &body)?)?;
    Ok(())
}

fn run_serve(a: ServeArgs) -> Outcome {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    let mut config = cellscape_service::Config::new(&a.data);
    config.max_payload_cells = a.max_payload_cells;
    config.job_budget = Some(Duration::from_millis(a.job_budget_ms));
    config.allow_origins = a.allow_origin;
    config.persist_annotations = a.persist_annotations;
    let state = Arc::new(cellscape_service::AppState::load(config)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io(&a.data, e))?;
    runtime
        .block_on(cellscape_service::serve(state, (a.host, a.port).into()))
        .map_err(|e| Error::io(&a.data, e))?;
    Ok(())
}

fn usage_field(e: &clap::Error) -> Option<String> {
    match e.get(ContextKind::InvalidArg)? {
        ContextValue::String(s) => Some(s.clone()),
        ContextValue::Strings(v) => v.first().cloned(),
        _ => None,
    }
    .map(|s| s.split_whitespace().next().unwrap_or_default().to_string())
}

fn report(f: Failure) -> ExitCode {
    let (code, body) = match f {
        Failure::Usage(e) => {
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            (2, json!({ "error": "UsageError", "message": message, "field": usage_field(&e) }))
        }
        Failure::Data(e) => (
            1,
            json!({ "error": e.kind(), "message": e.to_string(), "field": e.field() }),
        ),
    };
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(Failure::Usage(e)),
    };
    if cli.threads == Some(0) {
        let e = clap::Error::raw(ErrorKind::ValueValidation, "--threads must be at least 1");
        return report(Failure::Usage(e));
    }
    par::init_global(cli.threads);
    let outcome = match cli.command {
        Command::Ingest(a) => run_ingest(a),
        Command::Combine(a) => run_combine(a),
        Command::Transform(a) => run_transform(a),
        Command::Phenotype(a) => run_phenotype(a),
        Command::Cluster(a) => run_cluster(a),
        Command::Spatial(c) => run_spatial(c),
        Command::Summarize(c) => run_summary(c),
        Command::Serve(a) => run_serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radii_ranges() {
        assert_eq!(parse_radii("10:50:10").unwrap().0, [10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(parse_radii("10:55:10").unwrap().0, [10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(parse_radii("0.1:0.3:0.1").unwrap().0.len(), 3);
        assert_eq!(parse_radii("5,7.5").unwrap().0, [5.0, 7.5]);
        assert!(parse_radii("10:5:1").is_err());
        assert!(parse_radii("1:5:0").is_err());
        assert!(parse_radii("0:5:1").is_err());
        assert!(parse_radii("a:b").is_err());
    }

    #[test]
    fn bounds_need_four_values() {
        assert_eq!(parse_bounds("0,1,2,3").unwrap(), [0.0, 1.0, 2.0, 3.0]);
        assert!(parse_bounds("0,1,2").is_err());
    }

    #[test]
    fn command_tree_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
