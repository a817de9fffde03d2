//! Subsample-and-vote mechanism with a propose-test-release gate.
//!
//! `m` edge-subsampled copies of the graph are classified independently, the
//! label vectors are tallied as whole vectors, and the consensus is released
//! only when the Laplace-noised stability score clears `log(1/delta)/epsilon`.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, GcnModel, LabelVector};
use crate::graph::{FeatureVector, Graph};
use crate::rng::{stream, NOISE_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    /// Group identical label vectors; the only mode covered by the privacy analysis.
    #[default]
    WholeVector,
    /// Per-node majority, ties to `+1`. Experimental.
    PerNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanismConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub p_s: f64,
    pub m: usize,
    pub seed: u64,
    pub vote_mode: VoteMode,
}

impl MechanismConfig {
    pub fn new(epsilon: f64, delta: f64, p_s: f64, m: usize, seed: u64) -> Self {
        MechanismConfig {
            epsilon,
            delta,
            p_s,
            m,
            seed,
            vote_mode: VoteMode::WholeVector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("{} must be positive", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("{} not in (0, 1)", self.delta)));
        }
        if !(self.p_s > 0.0 && self.p_s <= 1.0) {
            return Err(Error::invalid("p_s", format!("{} not in (0, 1]", self.p_s)));
        }
        if self.m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        Ok(())
    }

    /// Release threshold `log(1/delta) / epsilon`.
    pub fn threshold(&self) -> f64 {
        (1.0 / self.delta).ln() / self.epsilon
    }
}

/// Keeps each edge independently with probability `p_s`, drawing exactly one
/// uniform per edge in sorted edge order. `p_s = 0` is allowed here.
pub fn subsample_edges<R: Rng + ?Sized>(g: &Graph, p_s: f64, rng: &mut R) -> Graph {
    g.retain_edges(&subsample_mask(g, p_s, rng))
}

/// Bernoulli retention indicators aligned with [`Graph::edges`].
pub fn subsample_mask<R: Rng + ?Sized>(g: &Graph, p_s: f64, rng: &mut R) -> Vec<bool> {
    g.edges().iter().map(|_| rng.random::<f64>() < p_s).collect()
}

/// Labels of the GCN on a fresh subsample, without materializing the
/// subgraph. Consumes the generator exactly like [`subsample_edges`].
pub fn subsample_labels<R: Rng + ?Sized>(
    g: &Graph,
    x: &FeatureVector,
    model: &GcnModel,
    p_s: f64,
    rng: &mut R,
) -> LabelVector {
    let xs = x.as_slice();
    let mut lx = vec![0.0; xs.len()];
    for &(u, v) in g.edges() {
        if rng.random::<f64>() < p_s {
            let diff = xs[u] - xs[v];
            lx[u] += diff;
            lx[v] -= diff;
        }
    }
    let labels = xs
        .iter()
        .zip(&lx)
        .map(|(&xi, &lxi)| {
            let score = model.activation.apply(model.h0 * xi + model.h1 * lxi);
            if score > model.tau {
                1
            } else {
                -1
            }
        })
        .collect();
    LabelVector::new_unchecked(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteTally {
    pub consensus: LabelVector,
    pub c1: usize,
    pub c2: usize,
    pub distinct: usize,
}

/// Lexicographic order with `+1` before `-1`.
fn vote_order(a: &LabelVector, b: &LabelVector) -> Ordering {
    // entries are +-1, so comparing negations puts +1 first
    a.as_slice().iter().map(|v| -v).cmp(b.as_slice().iter().map(|v| -v))
}

/// Whole-vector plurality vote. Ties on frequency go to the
/// lexicographically smallest vector (`+1 < -1`).
pub fn majority_vote(vectors: &[LabelVector]) -> Result<VoteTally> {
    let first = vectors.first().ok_or(Error::Empty("label vectors"))?;
    if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            actual: bad.len(),
        });
    }
    let mut order: Vec<&LabelVector> = vectors.iter().collect();
    order.sort_by(|a, b| vote_order(a, b));
    let mut groups: Vec<(usize, &LabelVector)> = Vec::new();
    for v in order {
        match groups.last_mut() {
            Some((count, rep)) if *rep == v => *count += 1,
            _ => groups.push((1, v)),
        }
    }
    // stable: equal counts keep lexicographic order
    groups.sort_by_key(|g| std::cmp::Reverse(g.0));
    Ok(VoteTally {
        consensus: groups[0].1.clone(),
        c1: groups[0].0,
        c2: groups.get(1).map_or(0, |g| g.0),
        distinct: groups.len(),
    })
}

/// Per-node majority with ties to `+1`.
pub fn node_majority(vectors: &[LabelVector]) -> Result<LabelVector> {
    let first = vectors.first().ok_or(Error::Empty("label vectors"))?;
    let mut sums = vec![0i64; first.len()];
    for v in vectors {
        if v.len() != sums.len() {
            return Err(Error::DimensionMismatch {
                expected: sums.len(),
                actual: v.len(),
            });
        }
        for (s, &y) in sums.iter_mut().zip(v.as_slice()) {
            *s += i64::from(y);
        }
    }
    LabelVector::new(sums.iter().map(|&s| if s >= 0 { 1 } else { -1 }).collect())
}

/// `(c1 - c2) / (4 m p_s) - 1`.
pub fn stability_score(tally: &VoteTally, m: usize, p_s: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    if p_s.is_nan() || p_s <= 0.0 {
        return Err(Error::invalid("p_s", "stability score needs p_s > 0"));
    }
    Ok((tally.c1 as f64 - tally.c2 as f64) / (4.0 * m as f64 * p_s) - 1.0)
}

/// One draw from `Laplace(0, scale)` by inverse CDF.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // u uniform on the open interval (-1/2, 1/2)
    let u = loop {
        let r = rng.random::<f64>();
        if r > 0.0 {
            break r - 0.5;
        }
    };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismOutcome {
    pub released: bool,
    /// `None` stands for the refusal symbol.
    pub labels: Option<LabelVector>,
    pub d_hat: f64,
    pub d_tilde: f64,
    pub threshold: f64,
    pub tally: VoteTally,
    pub m: usize,
    pub p_s: f64,
    pub vote_mode: VoteMode,
}

/// Release test with an explicit noise value.
pub fn ptr_release_with_noise(d_hat: f64, config: &MechanismConfig, tally: VoteTally, noise: f64) -> MechanismOutcome {
    let threshold = config.threshold();
    let d_tilde = d_hat + noise;
    let released = d_tilde > threshold;
    MechanismOutcome {
        released,
        labels: released.then(|| tally.consensus.clone()),
        d_hat,
        d_tilde,
        threshold,
        tally,
        m: config.m,
        p_s: config.p_s,
        vote_mode: config.vote_mode,
    }
}

/// Adds `Laplace(0, 1/epsilon)` noise to `d_hat` and applies the release test.
pub fn ptr_release<R: Rng + ?Sized>(d_hat: f64, config: &MechanismConfig, tally: VoteTally, rng: &mut R) -> MechanismOutcome {
    let noise = laplace_sample(1.0 / config.epsilon, rng);
    ptr_release_with_noise(d_hat, config, tally, noise)
}

/// Label vectors of the `m` subsampled graphs, in subsample order.
pub fn ensemble_labels(g: &Graph, x: &FeatureVector, model: &GcnModel, config: &MechanismConfig) -> Result<Vec<LabelVector>> {
    if x.len() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            actual: x.len(),
        });
    }
    Ok((0..config.m as u64)
        .into_par_iter()
        .map(|l| subsample_labels(g, x, model, config.p_s, &mut stream(config.seed, l)))
        .collect())
}

/// Full pipeline: subsample, classify, vote, score, test, release.
/// A pure function of its arguments.
pub fn run_mechanism(g: &Graph, x: &FeatureVector, model: &GcnModel, config: &MechanismConfig) -> Result<MechanismOutcome> {
    config.validate()?;
    model.validate()?;
    if log::log_enabled!(log::Level::Warn) {
        let forward = gcn_forward(g, x, model)?;
        if forward.degenerate_margin {
            log::warn!("full-graph margin is zero; utility bounds are vacuous");
        }
    }
    let vectors = ensemble_labels(g, x, model, config)?;
    let mut tally = majority_vote(&vectors)?;
    if config.vote_mode == VoteMode::PerNode {
        tally.consensus = node_majority(&vectors)?;
    }
    let d_hat = stability_score(&tally, config.m, config.p_s)?;
    Ok(ptr_release(d_hat, config, tally, &mut stream(config.seed, NOISE_STREAM)))
}
