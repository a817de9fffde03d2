//! Monte Carlo verification of the utility bounds, empirical privacy audit,
//! and report writers.

mod audit;
mod experiment;
mod report;
mod verify;

pub use audit::{audit_asamp, audit_dp, clopper_pearson, AuditReport, EventStat, CONFIDENCE};
pub use experiment::{run_experiment, ExperimentSummary};
pub use report::{read_trial_csv, write_json, write_trial_csv, SCHEMA};
pub use verify::{
    binomial_allowance, variance_proxy_check, verify_bernstein, verify_consensus_bound, verify_single_graph_bound,
    BernsteinReport, ConsensusReport, SingleGraphReport, TrialRecord, VarianceProxyCheck, MIN_TRIALS,
    VARIANCE_PROXY_TOL,
};
