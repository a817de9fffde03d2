use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, gcn_labels, hamming, misclassification_rate, GcnModel};
use crate::graph::{FeatureVector, Graph};
use crate::mechanism::{run_mechanism, subsample_mask, MechanismConfig};
use crate::rng::{child_seed, stream};
use crate::spectral::{spectral_norm, DEFAULT_TOL};
use crate::theory::{bound_aggregated, bound_f, delta_laplacian_bound, BoundInputs};

pub const MIN_TRIALS: usize = 100;
pub const VARIANCE_PROXY_TOL: f64 = 1e-10;

/// Relative slack on the flip-count comparison, absorbing eigensolver
/// rounding only.
const FLIP_SLACK: f64 = 1e-9;

/// `budget + 3 sqrt(budget (1 - budget) / trials)`.
pub fn binomial_allowance(budget: f64, trials: usize) -> f64 {
    let p = budget.clamp(0.0, 1.0);
    p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// One subsampled graph. Columns that need a model are empty for the
/// model-free concentration check.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub edges_kept: usize,
    pub delta_norm: f64,
    pub delta_bound: f64,
    pub hamming: Option<usize>,
    pub flip_bound: Option<f64>,
    pub rate: Option<f64>,
    pub f_bound: Option<f64>,
}

/// Both sides of `|| sum_e E[Y_e^2] ||_2 = 2 p_s (1 - p_s) ||L||_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceProxyCheck {
    pub summed_norm: f64,
    pub closed_form: f64,
    pub abs_diff: f64,
    pub holds: bool,
}

/// Assembles `sum_e E[(B_e - p)^2] (u_e u_e^T)^2` term by term and compares
/// its norm with `2 p (1 - p) ||L||_2`.
pub fn variance_proxy_check(g: &Graph, p_s: f64) -> Result<VarianceProxyCheck> {
    let n = g.node_count();
    // E[(B - p)^2] for B ~ Bernoulli(p), written out over both outcomes
    let second_moment = p_s * (1.0 - p_s).powi(2) + (1.0 - p_s) * p_s.powi(2);
    let mut sum = DMatrix::zeros(n, n);
    // u u^T restricted to the (u, v) coordinates, squared by matrix product
    let block = nalgebra::Matrix2::new(1.0, -1.0, -1.0, 1.0);
    let squared = block * block * second_moment;
    for &(u, v) in g.edges() {
        sum[(u, u)] += squared[(0, 0)];
        sum[(u, v)] += squared[(0, 1)];
        sum[(v, u)] += squared[(1, 0)];
        sum[(v, v)] += squared[(1, 1)];
    }
    let summed_norm = spectral_norm(&sum, DEFAULT_TOL)?.value;
    let closed_form = 2.0 * p_s * (1.0 - p_s) * spectral_norm(&g.laplacian(), DEFAULT_TOL)?.value;
    let abs_diff = (summed_norm - closed_form).abs();
    Ok(VarianceProxyCheck {
        summed_norm,
        closed_form,
        abs_diff,
        holds: abs_diff <= VARIANCE_PROXY_TOL,
    })
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid("trials", format!("need at least {MIN_TRIALS}, got {trials}")));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta", format!("{eta} not in (0, 1)")));
    }
    Ok(())
}

fn check_ps(p_s: f64) -> Result<()> {
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Error::invalid("p_s", format!("{p_s} not in (0, 1]")));
    }
    Ok(())
}

struct Subsample {
    graph: Graph,
    delta_norm: f64,
}

fn draw_subsample(g: &Graph, lap: &DMatrix<f64>, p_s: f64, seed: u64, trial: usize) -> Result<Subsample> {
    let mask = subsample_mask(g, p_s, &mut stream(seed, trial as u64));
    let graph = g.retain_edges(&mask);
    let delta = graph.laplacian() - lap;
    let delta_norm = spectral_norm(&delta, DEFAULT_TOL)?.value;
    Ok(Subsample { graph, delta_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernsteinReport {
    pub n: usize,
    pub p_s: f64,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    pub lap_norm: f64,
    pub delta_bound: f64,
    pub violations: usize,
    pub violation_fraction: f64,
    pub allowed_fraction: f64,
    pub within_budget: bool,
    pub max_delta_norm: f64,
    pub mean_delta_norm: f64,
    pub variance_proxy: VarianceProxyCheck,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl BernsteinReport {
    pub fn check_invariants(&self) -> Result<()> {
        if !self.variance_proxy.holds {
            return Err(Error::Invariant(format!(
                "variance proxy identity off by {:e}",
                self.variance_proxy.abs_diff
            )));
        }
        Ok(())
    }
}

/// Samples `trials` subgraphs and counts how often `||L_hat - L||_2` exceeds
/// the high-probability bound at level `eta`.
pub fn verify_bernstein(g: &Graph, p_s: f64, trials: usize, eta: f64, seed: u64) -> Result<BernsteinReport> {
    check_trials(trials)?;
    check_eta(eta)?;
    check_ps(p_s)?;
    let lap = g.laplacian();
    let lap_norm = spectral_norm(&lap, DEFAULT_TOL)?.value;
    let delta_bound = delta_laplacian_bound(g.node_count(), lap_norm, p_s, eta);
    let records = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sub = draw_subsample(g, &lap, p_s, seed, t)?;
            Ok(TrialRecord {
                trial: t,
                edges_kept: sub.graph.edge_count(),
                delta_norm: sub.delta_norm,
                delta_bound,
                hamming: None,
                flip_bound: None,
                rate: None,
                f_bound: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = records.iter().filter(|r| r.delta_norm > delta_bound).count();
    let violation_fraction = violations as f64 / trials as f64;
    let allowed_fraction = binomial_allowance(eta, trials);
    Ok(BernsteinReport {
        n: g.node_count(),
        p_s,
        eta,
        trials,
        seed,
        lap_norm,
        delta_bound,
        violations,
        violation_fraction,
        allowed_fraction,
        within_budget: violation_fraction <= allowed_fraction,
        max_delta_norm: records.iter().map(|r| r.delta_norm).fold(0.0, f64::max),
        mean_delta_norm: records.iter().map(|r| r.delta_norm).sum::<f64>() / trials as f64,
        variance_proxy: variance_proxy_check(g, p_s)?,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleGraphReport {
    pub n: usize,
    pub p_s: f64,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    pub inputs: BoundInputs,
    pub f_bound: f64,
    pub delta_bound: f64,
    pub rate_violations: usize,
    pub violation_fraction: f64,
    pub allowed_fraction: f64,
    pub within_budget: bool,
    pub delta_violations: usize,
    pub flip_checks: usize,
    pub flip_violations: usize,
    pub zero_rate_trials: usize,
    pub max_rate: f64,
    pub mean_rate: f64,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl SingleGraphReport {
    pub fn check_invariants(&self) -> Result<()> {
        if self.flip_violations > 0 {
            return Err(Error::Invariant(format!(
                "{} of {} trials exceed the margin flip-count bound",
                self.flip_violations, self.flip_checks
            )));
        }
        Ok(())
    }
}

/// Per-subsample misclassification rate against `f(p_s, eta)`, plus the
/// deterministic flip-count bound on every trial.
pub fn verify_single_graph_bound(
    g: &Graph,
    x: &FeatureVector,
    model: &GcnModel,
    p_s: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<SingleGraphReport> {
    check_trials(trials)?;
    check_eta(eta)?;
    check_ps(p_s)?;
    model.validate()?;
    let reference = gcn_forward(g, x, model)?;
    if reference.degenerate_margin {
        return Err(Error::DegenerateMargin);
    }
    let inputs = BoundInputs::from_graph(g, x, model)?;
    let f_bound = bound_f(&inputs, p_s, eta)?;
    let delta_bound = delta_laplacian_bound(inputs.n, inputs.lap_norm, p_s, eta);
    let lap = g.laplacian();
    let n = g.node_count();
    let records = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sub = draw_subsample(g, &lap, p_s, seed, t)?;
            let labels = gcn_labels(&sub.graph, x, model)?;
            let ham = hamming(&reference.labels, &labels)?;
            let flip_bound = crate::gcn::flip_count_bound(&reference, model, sub.delta_norm)?;
            Ok(TrialRecord {
                trial: t,
                edges_kept: sub.graph.edge_count(),
                delta_norm: sub.delta_norm,
                delta_bound,
                hamming: Some(ham),
                flip_bound: Some(flip_bound),
                rate: Some(misclassification_rate(&reference.labels, &labels)?),
                f_bound: Some(f_bound),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rates: Vec<f64> = records.iter().filter_map(|r| r.rate).collect();
    let rate_violations = rates.iter().filter(|&&r| r > f_bound).count();
    let flip_violations = records
        .iter()
        .filter(|r| {
            let (ham, bound) = (r.hamming.unwrap_or(0) as f64, r.flip_bound.unwrap_or(0.0));
            ham > bound * (1.0 + FLIP_SLACK)
        })
        .count();
    let violation_fraction = rate_violations as f64 / trials as f64;
    let allowed_fraction = binomial_allowance(eta, trials);
    debug_assert_eq!(rates.len(), trials);
    Ok(SingleGraphReport {
        n,
        p_s,
        eta,
        trials,
        seed,
        inputs,
        f_bound,
        delta_bound,
        rate_violations,
        violation_fraction,
        allowed_fraction,
        within_budget: violation_fraction <= allowed_fraction,
        delta_violations: records.iter().filter(|r| r.delta_norm > delta_bound).count(),
        flip_checks: trials,
        flip_violations,
        zero_rate_trials: rates.iter().filter(|&&r| r == 0.0).count(),
        max_rate: rates.iter().copied().fold(0.0, f64::max),
        mean_rate: rates.iter().sum::<f64>() / trials as f64,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusRecord {
    pub repeat: usize,
    pub released: bool,
    pub hamming: usize,
    pub rate: f64,
    pub c1: usize,
    pub c2: usize,
    pub d_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusReport {
    pub n: usize,
    pub p_s: f64,
    pub m: usize,
    pub eta: f64,
    pub eta_vote: f64,
    pub repeats: usize,
    pub released_only: bool,
    pub counted: usize,
    pub f_bound: f64,
    pub bound: f64,
    pub violations: usize,
    pub violation_fraction: f64,
    pub allowed_fraction: f64,
    pub within_budget: bool,
    pub release_fraction: f64,
    pub mean_rate: f64,
    pub max_rate: f64,
    pub records: Vec<ConsensusRecord>,
}

/// Runs the full mechanism `repeats` times and compares the consensus rate
/// `R(y, y_bar)` with `f/4 + sqrt(log(2/eta)/(2m))`. The consensus is taken
/// before the release gate unless `released_only` is set.
pub fn verify_consensus_bound(
    g: &Graph,
    x: &FeatureVector,
    model: &GcnModel,
    config: &MechanismConfig,
    eta: f64,
    repeats: usize,
    released_only: bool,
) -> Result<ConsensusReport> {
    check_eta(eta)?;
    config.validate()?;
    if repeats == 0 {
        return Err(Error::invalid("repeats", "must be at least 1"));
    }
    let reference = gcn_forward(g, x, model)?;
    let inputs = BoundInputs::from_graph(g, x, model)?;
    let eta_vote = eta;
    let f_bound = bound_f(&inputs, config.p_s, eta)?;
    let bound = bound_aggregated(&inputs, config.p_s, eta, config.m, eta_vote)?;
    let records = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let run_config = MechanismConfig {
                seed: child_seed(config.seed, r as u64),
                ..*config
            };
            let outcome = run_mechanism(g, x, model, &run_config)?;
            let consensus = &outcome.tally.consensus;
            Ok(ConsensusRecord {
                repeat: r,
                released: outcome.released,
                hamming: hamming(&reference.labels, consensus)?,
                rate: misclassification_rate(&reference.labels, consensus)?,
                c1: outcome.tally.c1,
                c2: outcome.tally.c2,
                d_hat: outcome.d_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let counted: Vec<&ConsensusRecord> = records.iter().filter(|r| !released_only || r.released).collect();
    let violations = counted.iter().filter(|r| r.rate > bound).count();
    let denom = counted.len().max(1);
    let violation_fraction = violations as f64 / denom as f64;
    let allowed_fraction = binomial_allowance(2.0 * eta, denom);
    Ok(ConsensusReport {
        n: g.node_count(),
        p_s: config.p_s,
        m: config.m,
        eta,
        eta_vote,
        repeats,
        released_only,
        counted: counted.len(),
        f_bound,
        bound,
        violations,
        violation_fraction,
        allowed_fraction,
        within_budget: violation_fraction <= allowed_fraction,
        release_fraction: records.iter().filter(|r| r.released).count() as f64 / repeats as f64,
        mean_rate: counted.iter().map(|r| r.rate).sum::<f64>() / denom as f64,
        max_rate: counted.iter().map(|r| r.rate).fold(0.0, f64::max),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::Activation;
    use crate::graph::{generate_sbm, planted_features, SbmParams};

    fn case(n: usize, seed: u64) -> (Graph, FeatureVector) {
        let (g, y) = generate_sbm(&SbmParams { n, p_in: 0.5, p_out: 0.1 }, seed).unwrap();
        (g, planted_features(&y, 0.8, seed).unwrap())
    }

    #[test]
    fn full_retention_has_zero_perturbation() {
        let (g, x) = case(30, 1);
        let b = verify_bernstein(&g, 1.0, 100, 0.1, 5).unwrap();
        assert!(b.records.iter().all(|r| r.delta_norm == 0.0));
        assert_eq!(b.violations, 0);
        let model = GcnModel { h1: -0.2, ..GcnModel::default() };
        let s = verify_single_graph_bound(&g, &x, &model, 1.0, 0.1, 100, 5).unwrap();
        assert_eq!(s.zero_rate_trials, 100);
        assert_eq!(s.rate_violations, 0);
    }

    #[test]
    fn graph_independent_filter_never_flips() {
        let (g, x) = case(30, 2);
        let model = GcnModel { h0: 1.0, h1: 0.0, activation: Activation::Tanh, tau: 0.0 };
        let s = verify_single_graph_bound(&g, &x, &model, 0.3, 0.1, 200, 5).unwrap();
        assert_eq!(s.zero_rate_trials, 200);
        assert_eq!(s.flip_violations, 0);
    }

    #[test]
    fn variance_proxy_identity() {
        for seed in 0..10 {
            let (g, _) = case(24, seed);
            for p in [0.1, 0.5, 0.9] {
                assert!(variance_proxy_check(&g, p).unwrap().holds);
            }
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        let (g, _) = case(10, 0);
        assert!(matches!(
            verify_bernstein(&g, 0.5, 10, 0.1, 0),
            Err(Error::InvalidParameter { name: "trials", .. })
        ));
    }

    #[test]
    fn consensus_with_full_retention_is_exact() {
        let (g, x) = case(20, 3);
        let config = MechanismConfig::new(1.0, 0.01, 1.0, 5, 1);
        let r = verify_consensus_bound(&g, &x, &GcnModel::default(), &config, 0.1, 20, false).unwrap();
        assert!(r.records.iter().all(|rec| rec.rate == 0.0));
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn reports_are_deterministic() {
        let (g, x) = case(20, 4);
        let model = GcnModel { h1: -0.3, ..GcnModel::default() };
        let a = verify_single_graph_bound(&g, &x, &model, 0.5, 0.2, 100, 9).unwrap();
        let b = verify_single_graph_bound(&g, &x, &model, 0.5, 0.2, 100, 9).unwrap();
        assert_eq!(a, b);
    }
}
