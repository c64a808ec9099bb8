//! Feature importance by mean decrease impurity (MDI) and by gradient descent
//! on a linear predictor (GD), and the importance-weighted feature transform.

mod forest;
mod gd;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forest::{
    fit_regression_forest, impurity_reduction, mdi_importance, variance_impurity, ForestConfig, RegressionForest,
    RegressionTree, Split, TreeNode,
};
pub use gd::{gd_fit, gd_importance, sanitize_gradient, GdState, DEFAULT_GD_ITERATIONS, DEFAULT_GD_LEARNING_RATE};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Floor added to every importance magnitude.
pub const IMPORTANCE_DELTA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ImportanceMethod {
    Mdi,
    Gd,
}

impl fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mdi => "MDI",
            Self::Gd => "GD",
        })
    }
}

impl FromStr for ImportanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mdi" => Ok(Self::Mdi),
            "gd" => Ok(Self::Gd),
            other => Err(Error::InvalidConfig(format!("unknown importance method `{other}`"))),
        }
    }
}

/// Per-feature scores, each at least [`IMPORTANCE_DELTA`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub method: ImportanceMethod,
    pub scores: Vec<f64>,
}

impl ImportanceVector {
    /// `|raw_i| + delta` for every component.
    pub fn from_raw(method: ImportanceMethod, raw: &[f64]) -> Self {
        Self {
            method,
            scores: raw.iter().map(|v| v.abs() + IMPORTANCE_DELTA).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Feature indices ordered from most to least important (stable on ties).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }

    pub fn weight_in_place(&self, values: &mut [f64]) -> Result<()> {
        if values.len() != self.scores.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scores.len(),
                got: values.len(),
            });
        }
        for (v, s) in values.iter_mut().zip(&self.scores) {
            *v *= s;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W, names: &[&str]) -> Result<()> {
        if names.len() != self.scores.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scores.len(),
                got: names.len(),
            });
        }
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        wtr.write_record(["feature", "score"])?;
        for (name, score) in names.iter().zip(&self.scores) {
            wtr.write_record([name.to_string(), score.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a `feature,score` file; returns the feature names alongside.
    pub fn read_csv<R: Read>(reader: R, method: ImportanceMethod) -> Result<(Vec<String>, Self)> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["feature", "score"] {
            return Err(Error::BadHeader {
                expected: "feature,score".into(),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut names = Vec::new();
        let mut scores = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            names.push(rec[0].to_string());
            let score: f64 = rec[1].parse().map_err(|_| Error::MalformedField {
                row,
                field: "score",
                value: rec[1].to_string(),
            })?;
            scores.push(score);
        }
        Ok((names, Self { method, scores }))
    }
}

/// Multiplies column `i` of `x` by `fi.scores[i]`.
pub fn apply_importance(x: &FeatureMatrix, fi: &ImportanceVector) -> Result<FeatureMatrix> {
    if x.n_cols() != fi.len() {
        return Err(Error::DimensionMismatch {
            expected: fi.len(),
            got: x.n_cols(),
        });
    }
    let mut out = x.clone();
    for row in out.as_mut_slice().chunks_exact_mut(fi.len().max(1)) {
        fi.weight_in_place(row)?;
    }
    Ok(out)
}
