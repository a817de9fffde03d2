//! One-layer spectral GCN `sigma((h0 I + h1 L) x)` with thresholding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureVector, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Lipschitz constant `C_sigma`.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            Activation::Identity | Activation::Tanh | Activation::Relu => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid("activation", format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub h0: f64,
    pub h1: f64,
    pub activation: Activation,
    pub tau: f64,
}

impl Default for GcnModel {
    fn default() -> Self {
        GcnModel {
            h0: 1.0,
            h1: -0.05,
            activation: Activation::Tanh,
            tau: 0.0,
        }
    }
}

impl GcnModel {
    pub fn c_sigma(&self) -> f64 {
        self.activation.lipschitz()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h0", self.h0), ("h1", self.h1), ("tau", self.tau)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Label vector with entries in `{+1, -1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct LabelVector(Vec<i8>);

impl LabelVector {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::invalid("labels", format!("entry {bad} is not +1 or -1")));
        }
        Ok(LabelVector(values))
    }

    pub(crate) fn new_unchecked(values: Vec<i8>) -> Self {
        debug_assert!(values.iter().all(|&v| v == 1 || v == -1));
        LabelVector(values)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn negated(&self) -> LabelVector {
        LabelVector(self.0.iter().map(|v| -v).collect())
    }

    /// Compact `+`/`-` rendering, used as an event key in reports.
    pub fn to_sign_string(&self) -> String {
        self.0.iter().map(|&v| if v > 0 { '+' } else { '-' }).collect()
    }
}

impl TryFrom<Vec<i8>> for LabelVector {
    type Error = Error;

    fn try_from(values: Vec<i8>) -> Result<Self> {
        LabelVector::new(values)
    }
}

impl From<LabelVector> for Vec<i8> {
    fn from(labels: LabelVector) -> Self {
        labels.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardResult {
    pub scores: Vec<f64>,
    pub labels: LabelVector,
    pub margins: Vec<f64>,
    pub gamma_min: f64,
    /// Some score sits exactly on the threshold.
    pub degenerate_margin: bool,
}

/// `+1` iff `score > tau`.
pub fn threshold(scores: &[f64], tau: f64) -> LabelVector {
    LabelVector(scores.iter().map(|&s| if s > tau { 1 } else { -1 }).collect())
}

pub fn gcn_forward(g: &Graph, x: &FeatureVector, model: &GcnModel) -> Result<ForwardResult> {
    let scores = gcn_scores(g, x, model)?;
    let labels = threshold(&scores, model.tau);
    let margins: Vec<f64> = scores.iter().map(|s| (s - model.tau).abs()).collect();
    let gamma_min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ForwardResult {
        degenerate_margin: gamma_min == 0.0,
        scores,
        labels,
        margins,
        gamma_min,
    })
}

pub fn gcn_scores(g: &Graph, x: &FeatureVector, model: &GcnModel) -> Result<Vec<f64>> {
    let lx = g.laplacian_apply(x.as_slice())?;
    Ok(x
        .as_slice()
        .iter()
        .zip(&lx)
        .map(|(&xi, &lxi)| model.activation.apply(model.h0 * xi + model.h1 * lxi))
        .collect())
}

/// Labels only; the hot path inside the mechanism.
pub fn gcn_labels(g: &Graph, x: &FeatureVector, model: &GcnModel) -> Result<LabelVector> {
    Ok(threshold(&gcn_scores(g, x, model)?, model.tau))
}

pub fn hamming(y: &LabelVector, yhat: &LabelVector) -> Result<usize> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: yhat.len(),
        });
    }
    Ok(y.0.iter().zip(&yhat.0).filter(|(a, b)| a != b).count())
}

/// Misclassification rate `Ham / n`.
pub fn misclassification_rate(y: &LabelVector, yhat: &LabelVector) -> Result<f64> {
    let ham = hamming(y, yhat)?;
    Ok(if y.is_empty() { 0.0 } else { ham as f64 / y.len() as f64 })
}

/// Margin flip-count bound `sqrt(n) C_sigma |h1| / gamma_min * ||L_hat - L||_2`.
pub fn flip_count_bound(result: &ForwardResult, model: &GcnModel, delta_norm: f64) -> Result<f64> {
    if result.gamma_min <= 0.0 || result.degenerate_margin {
        return Err(Error::DegenerateMargin);
    }
    flip_count_bound_raw(result.scores.len(), model.c_sigma(), model.h1.abs(), result.gamma_min, delta_norm)
}

pub fn flip_count_bound_raw(n: usize, c_sigma: f64, h1_abs: f64, gamma_min: f64, delta_norm: f64) -> Result<f64> {
    if gamma_min <= 0.0 {
        return Err(Error::DegenerateMargin);
    }
    Ok((n as f64).sqrt() * c_sigma * h1_abs / gamma_min * delta_norm)
}
