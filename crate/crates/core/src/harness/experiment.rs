//! Declarative experiment runner: generate or load a graph, evaluate the
//! theory, run the mechanism once and run the requested checks. Writes
//! `trials.csv` and `summary.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::audit::{audit_asamp, AuditReport};
use super::report::{write_json, write_trial_csv, SCHEMA};
use super::verify::{
    verify_bernstein, verify_consensus_bound, verify_single_graph_bound, BernsteinReport, ConsensusReport,
    SingleGraphReport,
};
use crate::config::{ExperimentFile, GraphSource};
use crate::error::{Error, Result};
use crate::gcn::GcnModel;
use crate::graph::{generate_sbm, planted_features, read_edge_list, read_features, FeatureVector, Graph, SbmParams};
use crate::mechanism::{run_mechanism, MechanismConfig, MechanismOutcome};
use crate::rng::child_seed;
use crate::theory::{theory_report, BoundInputs, TheoryReport};

pub const DEFAULT_PS_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphInfo {
    pub source: String,
    pub n: usize,
    pub edges: usize,
    pub max_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub schema: &'static str,
    pub name: Option<String>,
    pub seed: u64,
    pub graph: GraphInfo,
    pub model: GcnModel,
    pub mechanism_config: MechanismConfig,
    pub theory: TheoryReport,
    pub outcome: MechanismOutcome,
    pub bernstein: Option<BernsteinReport>,
    pub single_graph: Option<SingleGraphReport>,
    pub consensus: Option<ConsensusReport>,
    pub audit: Option<AuditReport>,
    pub trials_csv: String,
}

fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_inputs(file: &ExperimentFile, base: &Path, seed: u64) -> Result<(Graph, FeatureVector, String)> {
    match &file.graph {
        GraphSource::Sbm { n, p_in, p_out } => {
            let params = SbmParams { n: *n, p_in: *p_in, p_out: *p_out };
            let (g, labels) = generate_sbm(&params, child_seed(seed, 0))?;
            let x = match &file.features.path {
                Some(path) => FeatureVector::normalized(read_features(resolve(base, path))?)?,
                None => planted_features(
                    &labels,
                    file.features.noise.unwrap_or(ExperimentFile::DEFAULT_NOISE),
                    child_seed(seed, 1),
                )?,
            };
            Ok((g, x, format!("sbm(n={n}, p_in={p_in}, p_out={p_out})")))
        }
        GraphSource::File { path } => {
            let g = read_edge_list(resolve(base, path))?;
            let feature_path = file
                .features
                .path
                .as_ref()
                .ok_or_else(|| Error::invalid("features.path", "required when the graph is read from a file"))?;
            let x = FeatureVector::normalized(read_features(resolve(base, feature_path))?)?;
            Ok((g, x, path.clone()))
        }
    }
}

/// Runs the experiment described by `config_path`, writing reports into `out_dir`.
///
/// Reports are written before deterministic invariants are checked, so a
/// failing run still leaves its evidence on disk.
pub fn run_experiment(config_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<ExperimentSummary> {
    let config_path = config_path.as_ref();
    let out_dir = out_dir.as_ref();
    let file = ExperimentFile::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let seed = file.seed.unwrap_or(0);
    let params = file.params.clone().merged(crate::config::RunConfig {
        seed: Some(file.params.seed.unwrap_or_else(|| child_seed(seed, 2))),
        ..Default::default()
    });

    let (g, x, source) = load_inputs(&file, base, seed)?;
    if x.len() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            actual: x.len(),
        });
    }
    let model = params.model()?;
    let mechanism_config = params.mechanism(g.node_count())?;
    let eta = params.eta();

    let inputs = BoundInputs::from_graph(&g, &x, &model)?;
    let grid = file.ps_grid.clone().unwrap_or_else(|| DEFAULT_PS_GRID.to_vec());
    let theory = theory_report(&inputs, params.epsilon(), params.delta(), eta, &grid, params.m_cap())?;
    let outcome = run_mechanism(&g, &x, &model, &mechanism_config)?;

    let verify = &file.verify;
    let trials = verify.trials.unwrap_or(ExperimentFile::DEFAULT_TRIALS);
    let p_s = mechanism_config.p_s;
    let trial_seed = child_seed(seed, 3);
    let bernstein = if verify.bernstein.unwrap_or(true) {
        Some(verify_bernstein(&g, p_s, trials, eta, trial_seed)?)
    } else {
        None
    };
    let single_graph = if verify.single_graph.unwrap_or(true) {
        Some(verify_single_graph_bound(&g, &x, &model, p_s, eta, trials, trial_seed)?)
    } else {
        None
    };
    let repeats = verify
        .consensus_repeats
        .unwrap_or(ExperimentFile::DEFAULT_CONSENSUS_REPEATS);
    let consensus = if repeats > 0 {
        let config = MechanismConfig {
            seed: child_seed(seed, 4),
            ..mechanism_config
        };
        Some(verify_consensus_bound(
            &g,
            &x,
            &model,
            &config,
            eta,
            repeats,
            verify.released_only.unwrap_or(false),
        )?)
    } else {
        None
    };
    let audit = match verify.audit_trials.unwrap_or(0) {
        0 => None,
        audit_trials => {
            let edge = verify.audit_edge.unwrap_or((0, 1));
            let config = MechanismConfig {
                seed: child_seed(seed, 5),
                ..mechanism_config
            };
            Some(audit_asamp(&g, &x, &model, &config, audit_trials, edge)?)
        }
    };

    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("trials.csv");
    let records = match (&single_graph, &bernstein) {
        (Some(s), _) => s.records.as_slice(),
        (None, Some(b)) => b.records.as_slice(),
        (None, None) => &[],
    };
    write_trial_csv(&csv_path, records)?;

    let summary = ExperimentSummary {
        schema: SCHEMA,
        name: file.name.clone(),
        seed,
        graph: GraphInfo {
            source,
            n: g.node_count(),
            edges: g.edge_count(),
            max_degree: g.max_degree(),
        },
        model,
        mechanism_config,
        theory,
        outcome,
        bernstein,
        single_graph,
        consensus,
        audit,
        trials_csv: "trials.csv".into(),
    };
    write_json(out_dir.join("summary.json"), &summary)?;

    if let Some(b) = &summary.bernstein {
        b.check_invariants()?;
    }
    if let Some(s) = &summary.single_graph {
        s.check_invariants()?;
    }
    Ok(summary)
}
