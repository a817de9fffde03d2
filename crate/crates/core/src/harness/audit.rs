//! Empirical lower-bound audit of edge-level privacy.
//!
//! The mechanism is run many times on a graph and on its neighbor with one
//! pair toggled. Every observed output (a released label vector, or the
//! refusal) is an event; for each event and each direction the audit
//! evaluates `log((P[event | G] - delta) / P[event | G'])`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gcn::{GcnModel, LabelVector};
use crate::graph::{FeatureVector, Graph};
use crate::mechanism::{run_mechanism, MechanismConfig};
use crate::rng::child_seed;

/// Two-sided level of the Clopper-Pearson intervals.
pub const CONFIDENCE: f64 = 0.95;

const REFUSAL: &str = "refused";

/// Exact binomial interval for `k` successes out of `n`.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    assert!(k <= n && n > 0);
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).map_or(0.0, |b| b.inverse_cdf(alpha / 2.0))
    };
    let upper = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).map_or(1.0, |b| b.inverse_cdf(1.0 - alpha / 2.0))
    };
    (lower, upper)
}

/// `log((a - delta) / b)` clipped at zero; infinite when `b = 0 < a - delta`.
fn privacy_loss(a: f64, b: f64, delta: f64) -> f64 {
    let excess = a - delta;
    if excess <= 0.0 {
        0.0
    } else if b <= 0.0 {
        f64::INFINITY
    } else {
        (excess / b).ln().max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStat {
    /// `refused`, or the released labels as a `+`/`-` string.
    pub event: String,
    pub count_g: usize,
    pub count_neighbor: usize,
    pub freq_g: f64,
    pub freq_neighbor: f64,
    pub ci_g: (f64, f64),
    pub ci_neighbor: (f64, f64),
    pub eps_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n: usize,
    pub edge: (usize, usize),
    /// Whether the neighbor gains (true) or loses (false) the edge.
    pub edge_added: bool,
    pub trials: usize,
    pub seed: u64,
    pub release_freq_g: f64,
    pub release_freq_neighbor: f64,
    pub events: Vec<EventStat>,
    pub eps_hat: f64,
    pub eps_hat_infinite: bool,
    pub eps_lower: f64,
    pub eps_upper: f64,
    pub confidence: f64,
    pub budget_eps: f64,
    pub budget_delta: f64,
    /// Upper confidence limit of the estimate within the budget.
    pub passed: bool,
    /// Lower confidence limit above the budget: a significant violation.
    pub violation_detected: bool,
}

fn event_key(output: &Option<LabelVector>) -> String {
    output
        .as_ref()
        .map_or_else(|| REFUSAL.to_string(), LabelVector::to_sign_string)
}

/// Audits an arbitrary randomized mechanism, given as a function of the
/// graph and a per-trial seed. Trial `t` uses the same seed on both graphs.
#[allow(clippy::too_many_arguments)]
pub fn audit_dp<F>(
    g: &Graph,
    edge: (usize, usize),
    trials: usize,
    budget_eps: f64,
    budget_delta: f64,
    seed: u64,
    mechanism: F,
) -> Result<AuditReport>
where
    F: Fn(&Graph, u64) -> Result<Option<LabelVector>> + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if trials < 10_000 {
        log::warn!("audit with {trials} trials; confidence intervals will be wide");
    }
    let neighbor = g.neighboring(edge.0, edge.1)?;
    let outputs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = child_seed(seed, t as u64);
            Ok((event_key(&mechanism(g, s)?), event_key(&mechanism(&neighbor, s)?)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (a, b) in outputs {
        counts.entry(a).or_default().0 += 1;
        counts.entry(b).or_default().1 += 1;
    }

    let nf = trials as f64;
    let mut eps_hat = 0.0f64;
    let mut eps_lower = 0.0f64;
    let mut eps_upper = 0.0f64;
    let events: Vec<EventStat> = counts
        .into_iter()
        .map(|(event, (cg, cn))| {
            let (fg, fnb) = (cg as f64 / nf, cn as f64 / nf);
            let ci_g = clopper_pearson(cg, trials, CONFIDENCE);
            let ci_n = clopper_pearson(cn, trials, CONFIDENCE);
            let point = privacy_loss(fg, fnb, budget_delta).max(privacy_loss(fnb, fg, budget_delta));
            let lower = privacy_loss(ci_g.0, ci_n.1, budget_delta).max(privacy_loss(ci_n.0, ci_g.1, budget_delta));
            let upper = privacy_loss(ci_g.1, ci_n.0, budget_delta).max(privacy_loss(ci_n.1, ci_g.0, budget_delta));
            eps_hat = eps_hat.max(point);
            eps_lower = eps_lower.max(lower);
            eps_upper = eps_upper.max(upper);
            EventStat {
                event,
                count_g: cg,
                count_neighbor: cn,
                freq_g: fg,
                freq_neighbor: fnb,
                ci_g,
                ci_neighbor: ci_n,
                eps_point: point,
            }
        })
        .collect();
    let refusals = |f: fn(&EventStat) -> usize| events.iter().find(|e| e.event == REFUSAL).map_or(0, f);
    Ok(AuditReport {
        n: g.node_count(),
        edge,
        edge_added: !g.has_edge(edge.0, edge.1),
        trials,
        seed,
        release_freq_g: 1.0 - refusals(|e| e.count_g) as f64 / nf,
        release_freq_neighbor: 1.0 - refusals(|e| e.count_neighbor) as f64 / nf,
        events,
        eps_hat,
        eps_hat_infinite: eps_hat.is_infinite(),
        eps_lower,
        eps_upper,
        confidence: CONFIDENCE,
        budget_eps,
        budget_delta,
        passed: eps_upper <= budget_eps,
        violation_detected: eps_lower > budget_eps,
    })
}

/// Audits the subsample-and-vote mechanism itself.
pub fn audit_asamp(
    g: &Graph,
    x: &FeatureVector,
    model: &GcnModel,
    config: &MechanismConfig,
    trials: usize,
    edge: (usize, usize),
) -> Result<AuditReport> {
    config.validate()?;
    audit_dp(g, edge, trials, config.epsilon, config.delta, config.seed, |graph, seed| {
        let run = MechanismConfig { seed, ..*config };
        Ok(run_mechanism(graph, x, model, &run)?.labels)
    })
}
