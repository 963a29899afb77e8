use serde::{Deserialize, Serialize};

use super::{CellTable, MISSING};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Cmp {
    fn test(self, value: f64, threshold: f64) -> bool {
        match self {
            Cmp::Gt => value > threshold,
            Cmp::Ge => value >= threshold,
            Cmp::Lt => value < threshold,
            Cmp::Le => value <= threshold,
        }
    }
}

/// Row filter over annotations (set membership) and features (range
/// tests). NaN feature values and missing annotation values never match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    In {
        annotation: String,
        values: Vec<String>,
    },
    Compare {
        feature: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        layer: Option<String>,
        cmp: Cmp,
        value: f64,
    },
    And {
        terms: Vec<Predicate>,
    },
    Or {
        terms: Vec<Predicate>,
    },
}

impl Predicate {
    pub fn is_in(annotation: &str, values: &[&str]) -> Self {
        Predicate::In {
            annotation: annotation.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn compare(feature: &str, cmp: Cmp, value: f64) -> Self {
        Predicate::Compare {
            feature: feature.to_string(),
            layer: None,
            cmp,
            value,
        }
    }

    pub(super) fn compile<'a>(&self, table: &'a CellTable) -> Result<Compiled<'a>> {
        Ok(match self {
            Predicate::In { annotation, values } => {
                let col = table
                    .annotations()
                    .get(annotation)
                    .ok_or_else(|| Error::UnknownColumn(annotation.clone()))?;
                let mut accept = vec![false; col.n_categories()];
                for v in values {
                    if let Some(code) = col.code_of(v) {
                        accept[code as usize] = true;
                    }
                }
                Compiled::In {
                    codes: col.codes(),
                    accept,
                }
            }
            Predicate::Compare {
                feature,
                layer,
                cmp,
                value,
            } => {
                let j = table.feature_index(feature)?;
                let m = match layer {
                    Some(l) => table.layer(l)?,
                    None => table.features(),
                };
                Compiled::Compare {
                    values: m.as_slice(),
                    stride: m.cols(),
                    column: j,
                    cmp: *cmp,
                    threshold: *value,
                }
            }
            Predicate::And { terms } => Compiled::And(
                terms
                    .iter()
                    .map(|t| t.compile(table))
                    .collect::<Result<_>>()?,
            ),
            Predicate::Or { terms } => Compiled::Or(
                terms
                    .iter()
                    .map(|t| t.compile(table))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

pub(super) enum Compiled<'a> {
    In {
        codes: &'a [u32],
        accept: Vec<bool>,
    },
    Compare {
        values: &'a [f32],
        stride: usize,
        column: usize,
        cmp: Cmp,
        threshold: f64,
    },
    And(Vec<Compiled<'a>>),
    Or(Vec<Compiled<'a>>),
}

impl Compiled<'_> {
    pub(super) fn eval(&self, row: usize) -> bool {
        match self {
            Compiled::In { codes, accept } => {
                let c = codes[row];
                c != MISSING && accept[c as usize]
            }
            Compiled::Compare {
                values,
                stride,
                column,
                cmp,
                threshold,
            } => {
                let v = f64::from(values[row * stride + column]);
                !v.is_nan() && cmp.test(v, *threshold)
            }
            Compiled::And(terms) => terms.iter().all(|t| t.eval(row)),
            Compiled::Or(terms) => terms.iter().any(|t| t.eval(row)),
        }
    }
}
