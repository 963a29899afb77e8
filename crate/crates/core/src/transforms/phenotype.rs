use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::par;
use crate::table::{CategoricalColumn, CellTable, Matrix, ProvenanceRecord, Warning};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

/// A manual gate: a cell matches when every `+` marker is on and every `-`
/// marker is off. Markers not listed are ignored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhenotypeRule {
    pub name: String,
    pub terms: Vec<(String, Sign)>,
}

impl PhenotypeRule {
    pub fn new(name: &str, terms: Vec<(String, Sign)>) -> Result<Self> {
        if name.is_empty() {
            return Err(Error::InvalidRule("rule name is empty".into()));
        }
        if terms.is_empty() {
            return Err(Error::InvalidRule(format!("rule `{name}` has no terms")));
        }
        let mut seen = HashSet::new();
        for (m, _) in &terms {
            if !seen.insert(m.as_str()) {
                return Err(Error::InvalidRule(format!(
                    "marker `{m}` repeated in rule `{name}`"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            terms,
        })
    }

    /// Parses a code such as `CD3D+CD4+FOXP3+`. See [`parse_pattern`].
    pub fn from_pattern(name: &str, pattern: &str, markers: Option<&[String]>) -> Result<Self> {
        Self::new(name, parse_pattern(pattern, markers)?)
    }
}

/// Splits a phenotype code into `(marker, sign)` terms.
///
/// With `markers` given, each term is the longest known marker followed by
/// `+` or `-`, which lets marker names contain those characters
/// (`HLA-DR+`). Without it, a term runs up to the next sign character.
pub fn parse_pattern(pattern: &str, markers: Option<&[String]>) -> Result<Vec<(String, Sign)>> {
    let sign_of = |c: u8| match c {
        b'+' => Some(Sign::Positive),
        b'-' => Some(Sign::Negative),
        _ => None,
    };
    let bytes = pattern.as_bytes();
    let mut terms = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let rest = &pattern[pos..];
        let known = markers.and_then(|ms| {
            ms.iter()
                .filter(|m| {
                    !m.is_empty()
                        && rest.starts_with(m.as_str())
                        && rest.as_bytes().get(m.len()).copied().and_then(sign_of).is_some()
                })
                .max_by_key(|m| m.len())
        });
        let len = match known {
            Some(m) => m.len(),
            None => rest.bytes().position(|c| sign_of(c).is_some()).ok_or_else(|| {
                Error::InvalidRule(format!("`{pattern}`: marker `{rest}` lacks a trailing + or -"))
            })?,
        };
        if len == 0 {
            return Err(Error::InvalidRule(format!("`{pattern}`: empty marker at offset {pos}")));
        }
        let sign = sign_of(bytes[pos + len]).expect("sign checked");
        terms.push((rest[..len].to_string(), sign));
        pos += len + 1;
    }
    if terms.is_empty() {
        return Err(Error::InvalidRule("empty pattern".into()));
    }
    Ok(terms)
}

/// Per-marker positivity thresholds.
pub type ThresholdSet = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub pattern: String,
}

/// JSON document for manual phenotyping:
/// `{"thresholds": {"CD3D": 0.5}, "rules": [{"name": "...", "pattern": "CD3D+CD4+"}]}`.
/// A rule without a name is named by its pattern.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeSpec {
    #[serde(default)]
    pub thresholds: ThresholdSet,
    #[serde(default)]
    pub rules: Vec<RuleSpec>,
}

impl PhenotypeSpec {
    pub fn compile_rules(&self, markers: &[String]) -> Result<Vec<PhenotypeRule>> {
        self.rules
            .iter()
            .map(|r| {
                let name = r.name.as_deref().unwrap_or(&r.pattern);
                PhenotypeRule::from_pattern(name, &r.pattern, Some(markers))
            })
            .collect()
    }
}

/// Binarizes a layer: 1 where `value > threshold`, else 0. NaN maps to 0
/// and is counted per feature. Features without a threshold are all 0.
pub fn threshold_features(
    table: &CellTable,
    layer: &str,
    thresholds: &ThresholdSet,
    out_layer: &str,
) -> Result<CellTable> {
    let src = table.layer(layer)?;
    let mut cutoffs: Vec<Option<f64>> = vec![None; table.n_features()];
    for (marker, &t) in thresholds {
        let j = table
            .feature_index(marker)
            .map_err(|_| Error::UnknownMarker(marker.clone()))?;
        cutoffs[j] = Some(t);
    }
    let cols = src.cols();
    let rows: Vec<(Vec<f32>, Vec<usize>)> = par::map_range(src.rows(), |i| {
        let mut nan = vec![0usize; cols];
        let row = src
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if v.is_nan() {
                    nan[j] += 1;
                    return 0.0;
                }
                match cutoffs[j] {
                    Some(t) if f64::from(v) > t => 1.0,
                    _ => 0.0,
                }
            })
            .collect();
        (row, nan)
    });
    let mut nan_counts = vec![0usize; cols];
    let mut data = Vec::with_capacity(src.rows() * cols);
    for (row, nan) in rows {
        data.extend(row);
        nan_counts.iter_mut().zip(nan).for_each(|(a, b)| *a += b);
    }
    let warnings = table
        .feature_names()
        .iter()
        .zip(&nan_counts)
        .filter(|(_, &c)| c > 0)
        .map(|(f, c)| Warning::new("nan_thresholded", format!("{c} NaN values in `{f}` set to 0")))
        .collect();
    let nan_map: BTreeMap<&str, usize> = table
        .feature_names()
        .iter()
        .map(String::as_str)
        .zip(nan_counts.iter().copied())
        .collect();
    let record = ProvenanceRecord::new(
        "threshold_features",
        json!({ "layer": layer, "thresholds": thresholds, "out_layer": out_layer, "nan_counts": nan_map }),
    )
    .with_warnings(warnings);
    table.with_layer(out_layer, Matrix::new(src.rows(), cols, data)?, record)
}

/// Labels each cell with the first matching rule (list order), or
/// `default_label`.
pub fn apply_phenotype_rules(
    table: &CellTable,
    binary_layer: &str,
    rules: &[PhenotypeRule],
    default_label: &str,
    out_annotation: &str,
) -> Result<CellTable> {
    let layer = table.layer(binary_layer)?;
    let compiled: Vec<Vec<(usize, bool)>> = rules
        .iter()
        .map(|r| {
            r.terms
                .iter()
                .map(|(m, s)| {
                    table
                        .feature_index(m)
                        .map(|j| (j, *s == Sign::Positive))
                        .map_err(|_| Error::UnknownMarker(m.clone()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // Category order: rule names in list order (deduplicated), then default.
    let mut categories: Vec<String> = Vec::new();
    let mut rule_code = Vec::with_capacity(rules.len());
    for r in rules {
        let code = match categories.iter().position(|c| *c == r.name) {
            Some(p) => p,
            None => {
                categories.push(r.name.clone());
                categories.len() - 1
            }
        };
        rule_code.push(code as u32);
    }
    let default_code = match categories.iter().position(|c| c == default_label) {
        Some(p) => p as u32,
        None => {
            categories.push(default_label.to_string());
            (categories.len() - 1) as u32
        }
    };
    let codes = par::map_range(table.n_cells(), |i| {
        let row = layer.row(i);
        compiled
            .iter()
            .position(|terms| terms.iter().all(|&(j, positive)| (row[j] > 0.5) == positive))
            .map_or(default_code, |r| rule_code[r])
    });
    let column = CategoricalColumn::new(codes, categories)?;
    let record = ProvenanceRecord::new(
        "apply_phenotype_rules",
        json!({
            "binary_layer": binary_layer,
            "rules": rules.iter().map(|r| &r.name).collect::<Vec<_>>(),
            "default_label": default_label,
            "out_annotation": out_annotation,
        }),
    );
    table.with_annotation(out_annotation, column, record)
}

/// Thresholds `layer` into `binary_layer`, then applies the rules. Every
/// marker referenced by a rule must have a threshold.
pub fn phenotype(
    table: &CellTable,
    layer: &str,
    spec: &PhenotypeSpec,
    binary_layer: &str,
    out_annotation: &str,
) -> Result<CellTable> {
    let rules = spec.compile_rules(table.feature_names())?;
    for rule in &rules {
        for (m, _) in &rule.terms {
            if !spec.thresholds.contains_key(m) {
                return Err(Error::UnknownMarker(m.clone()));
            }
        }
    }
    let t = threshold_features(table, layer, &spec.thresholds, binary_layer)?;
    apply_phenotype_rules(&t, binary_layer, &rules, "no_label", out_annotation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::FEATURES;

    const MARKERS: [&str; 6] = ["CD3D", "CD4", "FOXP3", "CD8A", "CD20", "CD21"];

    fn code_table() -> Vec<PhenotypeRule> {
        let markers: Vec<String> = MARKERS.iter().map(|s| s.to_string()).collect();
        [
            "CD3D+CD4+FOXP3+",
            "CD3D+CD4+",
            "CD3D+CD8A+",
            "CD3D+",
            "CD20+",
            "CD21+CD20-",
        ]
        .iter()
        .map(|p| PhenotypeRule::from_pattern(p, p, Some(&markers)).unwrap())
        .collect()
    }

    fn binary_table(rows: &[[f32; 6]]) -> CellTable {
        let xy: Vec<(f64, f64)> = (0..rows.len()).map(|i| (i as f64, 0.0)).collect();
        CellTable::from_parts(
            &xy,
            MARKERS.iter().map(|s| s.to_string()).collect(),
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    fn labels(t: &CellTable, name: &str) -> Vec<String> {
        let col = t.annotation(name).unwrap();
        (0..t.n_cells()).map(|i| col.label(i).unwrap().to_string()).collect()
    }

    #[test]
    fn parse_simple_codes() {
        assert_eq!(
            parse_pattern("CD21+CD20-", None).unwrap(),
            vec![("CD21".into(), Sign::Positive), ("CD20".into(), Sign::Negative)]
        );
        assert!(parse_pattern("CD3", None).is_err());
        assert!(parse_pattern("", None).is_err());
        assert!(parse_pattern("+CD3+", None).is_err());
    }

    #[test]
    fn parse_hyphenated_marker_with_known_names() {
        let known = vec!["HLA-DR".to_string(), "CD3".to_string()];
        assert_eq!(
            parse_pattern("HLA-DR+CD3-", Some(&known)).unwrap(),
            vec![("HLA-DR".into(), Sign::Positive), ("CD3".into(), Sign::Negative)]
        );
    }

    #[test]
    fn rule_validation() {
        assert!(PhenotypeRule::new("", vec![("a".into(), Sign::Positive)]).is_err());
        assert!(PhenotypeRule::new("x", vec![]).is_err());
        assert!(PhenotypeRule::from_pattern("x", "CD3+CD3-", None).is_err());
    }

    #[test]
    fn code_table_semantics() {
        let t = binary_table(&[
            [1.0, 1.0, 1.0, 0.0, 0.0, 0.0], // triple positive
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0], // CD21+ CD20-
            [0.0; 6],
            [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 1.0], // CD20+ fires before CD21+CD20-
        ]);
        let out = apply_phenotype_rules(&t, FEATURES, &code_table(), "no_label", "ph").unwrap();
        assert_eq!(
            labels(&out, "ph"),
            vec!["CD3D+CD4+FOXP3+", "CD21+CD20-", "no_label", "CD3D+CD8A+", "CD20+"]
        );
    }

    #[test]
    fn rule_order_matters() {
        let t = binary_table(&[[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]]);
        let mut rules = code_table();
        rules.swap(0, 1);
        let out = apply_phenotype_rules(&t, FEATURES, &rules, "no_label", "ph").unwrap();
        assert_eq!(labels(&out, "ph"), vec!["CD3D+CD4+"]);
    }

    #[test]
    fn unknown_marker() {
        let t = binary_table(&[[0.0; 6]]);
        let rule = PhenotypeRule::from_pattern("x", "CD99+", None).unwrap();
        assert!(matches!(
            apply_phenotype_rules(&t, FEATURES, &[rule], "no_label", "ph"),
            Err(Error::UnknownMarker(m)) if m == "CD99"
        ));
    }

    #[test]
    fn strict_threshold_and_nan() {
        let t = CellTable::from_parts(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            vec!["m".into()],
            vec![0.8, 0.5, f32::NAN],
        )
        .unwrap();
        let th: ThresholdSet = [("m".to_string(), 0.5)].into();
        let out = threshold_features(&t, FEATURES, &th, "bin").unwrap();
        assert_eq!(out.layer("bin").unwrap().column(0), vec![1.0, 0.0, 0.0]);
        let rec = out.provenance().last().unwrap();
        assert_eq!(rec.parameters["nan_counts"]["m"], 1);
        let bad: ThresholdSet = [("zz".to_string(), 0.5)].into();
        assert!(matches!(
            threshold_features(&t, FEATURES, &bad, "bin"),
            Err(Error::UnknownMarker(_))
        ));
    }

    #[test]
    fn spec_document_end_to_end() {
        let spec: PhenotypeSpec = serde_json::from_str(
            r#"{"thresholds": {"CD3D": 0.5, "CD4": 0.5, "FOXP3": 0.5},
                "rules": [{"name": "Treg", "pattern": "CD3D+CD4+FOXP3+"}, {"pattern": "CD3D+CD4+"}]}"#,
        )
        .unwrap();
        let t = binary_table(&[[0.9, 0.9, 0.1, 0.0, 0.0, 0.0], [0.9, 0.9, 0.9, 0.0, 0.0, 0.0]]);
        let out = phenotype(&t, FEATURES, &spec, "bin", "ph").unwrap();
        assert_eq!(labels(&out, "ph"), vec!["CD3D+CD4+", "Treg"]);
        let missing: PhenotypeSpec =
            serde_json::from_str(r#"{"thresholds": {}, "rules": [{"pattern": "CD3D+"}]}"#).unwrap();
        assert!(matches!(
            phenotype(&t, FEATURES, &missing, "bin", "ph"),
            Err(Error::UnknownMarker(_))
        ));
    }
}
