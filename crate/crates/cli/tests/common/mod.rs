#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const EPOCH: &str = "1700000000";
pub const GOLDEN_OUTPUTS: [&str; 3] = ["ripley.json", "enrich.json", "crosstab.json"];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden")
}

pub fn cellscape(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellscape"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", EPOCH)
        .env("CELLSCAPE_THREADS", threads.to_string())
        .output()
        .expect("spawn cellscape")
}

pub fn ok(args: &[&str], threads: usize) {
    let out = cellscape(args, threads);
    assert!(
        out.status.success(),
        "cellscape {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// ingest -> arcsinh -> phenotype -> phenograph -> ripley -> enrich
/// (-> crosstab), writing containers `c0`..`c3` and JSON into `work`.
pub fn run_pipeline(work: &Path, threads: usize) {
    let g = golden_dir();
    let p = |name: &str| work.join(name).to_str().unwrap().to_string();
    let d = |name: &str| g.join(name).to_str().unwrap().to_string();
    ok(&["ingest", "--csv", &d("cells.csv"), "--mapping", &d("mapping.json"), "--out", &p("c0")], threads);
    ok(
        &["transform", "--in", &p("c0"), "--op", "arcsinh", "--cofactor", "5", "--out-layer", "arcsinh", "--out", &p("c1")],
        threads,
    );
    ok(
        &[
            "phenotype", "--in", &p("c1"), "--layer", "arcsinh", "--thresholds", &d("thresholds.json"),
            "--rules", &d("rules.json"), "--out-annotation", "phenotype", "--out", &p("c2"),
        ],
        threads,
    );
    ok(
        &["cluster", "--in", &p("c2"), "--method", "phenograph", "--layer", "arcsinh", "--k", "15", "--seed", "0", "--out", &p("c3")],
        threads,
    );
    ok(
        &[
            "spatial", "ripley", "--in", &p("c3"), "--annotation", "phenotype", "--center", "Tumor",
            "--neighbor", "T cell", "--radii", "10:100:10", "--envelope", "99", "--seed", "0",
            "--out-json", &p("ripley.json"),
        ],
        threads,
    );
    ok(
        &[
            "spatial", "enrich", "--in", &p("c3"), "--annotation", "phenotype", "--radius", "30",
            "--permutations", "200", "--seed", "0", "--out-json", &p("enrich.json"),
        ],
        threads,
    );
    ok(
        &[
            "summarize", "crosstab", "--in", &p("c3"), "--rows", "phenotype", "--cols", "phenograph_k15",
            "--out-json", &p("crosstab.json"),
        ],
        threads,
    );
}

/// Every file in a container directory, sorted by name.
pub fn container_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
