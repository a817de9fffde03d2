//! TOML configuration: flat key-value files for single runs and the
//! declarative experiment format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{Activation, GcnModel};
use crate::mechanism::{MechanismConfig, VoteMode};
use crate::theory::{choose_m, DEFAULT_M_CAP};

/// Ensemble size: explicit, or `ceil(log(n/delta) / p_s^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MSetting {
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for MSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MSetting::Auto);
        }
        s.parse()
            .map(MSetting::Fixed)
            .map_err(|_| Error::invalid("m", format!("expected a positive integer or \"auto\", got {s:?}")))
    }
}

impl fmt::Display for MSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MSetting::Auto => f.write_str("auto"),
            MSetting::Fixed(m) => write!(f, "{m}"),
        }
    }
}

impl<'de> Deserialize<'de> for MSetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(m) => Ok(MSetting::Fixed(m as usize)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for MSetting {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MSetting::Auto => serializer.serialize_str("auto"),
            MSetting::Fixed(m) => serializer.serialize_u64(*m as u64),
        }
    }
}

/// Every key is optional; unset keys fall back to the defaults below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    #[serde(alias = "p_s")]
    pub ps: Option<f64>,
    pub m: Option<MSetting>,
    pub m_cap: Option<usize>,
    pub seed: Option<u64>,
    pub vote_mode: Option<VoteMode>,
    pub activation: Option<Activation>,
    pub h0: Option<f64>,
    pub h1: Option<f64>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
}

impl RunConfig {
    pub const DEFAULT_EPSILON: f64 = 1.0;
    pub const DEFAULT_DELTA: f64 = 0.01;
    pub const DEFAULT_PS: f64 = 0.5;
    pub const DEFAULT_ETA: f64 = 0.1;

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(&e)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `overrides` win.
    pub fn merged(self, overrides: RunConfig) -> RunConfig {
        RunConfig {
            epsilon: overrides.epsilon.or(self.epsilon),
            delta: overrides.delta.or(self.delta),
            ps: overrides.ps.or(self.ps),
            m: overrides.m.or(self.m),
            m_cap: overrides.m_cap.or(self.m_cap),
            seed: overrides.seed.or(self.seed),
            vote_mode: overrides.vote_mode.or(self.vote_mode),
            activation: overrides.activation.or(self.activation),
            h0: overrides.h0.or(self.h0),
            h1: overrides.h1.or(self.h1),
            tau: overrides.tau.or(self.tau),
            eta: overrides.eta.or(self.eta),
        }
    }

    pub fn model(&self) -> Result<GcnModel> {
        let d = GcnModel::default();
        let model = GcnModel {
            h0: self.h0.unwrap_or(d.h0),
            h1: self.h1.unwrap_or(d.h1),
            activation: self.activation.unwrap_or(d.activation),
            tau: self.tau.unwrap_or(d.tau),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(Self::DEFAULT_EPSILON)
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(Self::DEFAULT_DELTA)
    }

    pub fn ps(&self) -> f64 {
        self.ps.unwrap_or(Self::DEFAULT_PS)
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(Self::DEFAULT_ETA)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn m_cap(&self) -> usize {
        self.m_cap.unwrap_or(DEFAULT_M_CAP)
    }

    /// Resolves `m = auto` against the graph size and validates everything.
    pub fn mechanism(&self, n: usize) -> Result<MechanismConfig> {
        let mut config = MechanismConfig {
            epsilon: self.epsilon(),
            delta: self.delta(),
            p_s: self.ps(),
            m: 1,
            seed: self.seed(),
            vote_mode: self.vote_mode.unwrap_or_default(),
        };
        config.validate()?;
        config.m = match self.m.unwrap_or_default() {
            MSetting::Fixed(m) => m,
            MSetting::Auto => choose_m(n, config.delta, config.p_s, self.m_cap())?.m,
        };
        config.validate()?;
        Ok(config)
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    e.span().map_or_else(String::new, |s| format!(" (at byte {})", s.start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GraphSource {
    Sbm { n: usize, p_in: f64, p_out: f64 },
    File { path: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSource {
    /// Noise level for planted SBM features.
    pub noise: Option<f64>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub trials: Option<usize>,
    pub bernstein: Option<bool>,
    pub single_graph: Option<bool>,
    pub consensus_repeats: Option<usize>,
    pub released_only: Option<bool>,
    pub audit_trials: Option<usize>,
    pub audit_edge: Option<(usize, usize)>,
}

/// Declarative experiment: graph, features, parameters and which checks to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub graph: GraphSource,
    #[serde(default)]
    pub features: FeatureSource,
    #[serde(default)]
    pub params: RunConfig,
    #[serde(default)]
    pub verify: VerifySection,
    pub ps_grid: Option<Vec<f64>>,
}

impl ExperimentFile {
    pub const DEFAULT_TRIALS: usize = 200;
    pub const DEFAULT_NOISE: f64 = 0.5;
    pub const DEFAULT_CONSENSUS_REPEATS: usize = 50;

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ExperimentFile =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(&e)))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    /// Checks the fields that can be checked without loading the graph.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if let Some(delta) = p.delta {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::invalid("delta", format!("{delta} not in (0, 1)")));
            }
        }
        if let Some(eps) = p.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid("epsilon", format!("{eps} must be positive")));
            }
        }
        if let Some(ps) = p.ps {
            if !(ps > 0.0 && ps <= 1.0) {
                return Err(Error::invalid("ps", format!("{ps} not in (0, 1]")));
            }
        }
        if let Some(eta) = p.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::invalid("eta", format!("{eta} not in (0, 1)")));
            }
        }
        if let Some(MSetting::Fixed(0)) = p.m {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        p.model()?;
        if let GraphSource::Sbm { n, p_in, p_out } = self.graph {
            crate::graph::SbmParams { n, p_in, p_out }.validate()?;
        }
        if let Some(grid) = &self.ps_grid {
            if let Some(bad) = grid.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(Error::invalid("ps_grid", format!("{bad} not in (0, 1]")));
            }
        }
        Ok(())
    }
}
