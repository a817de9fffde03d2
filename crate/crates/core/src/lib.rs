//! Edge-level differential privacy for one-layer graph convolutional
//! networks through subsampling stability.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: undirected graphs, Laplacians, SBM generation, edge-list I/O.
//! - [`spectral`]: operator 2-norms of symmetric matrices.
//! - [`gcn`]: the filter `sigma((h0 I + h1 L) x)`, thresholding, margins.
//! - [`mechanism`]: edge subsampling, whole-vector voting, the stability
//!   score and the propose-test-release gate.
//! - [`theory`]: closed-form misclassification bounds, `p_s*` and the
//!   feasible subsampling interval.
//! - [`harness`]: Monte Carlo verification of the bounds, an empirical
//!   privacy audit and the declarative experiment runner behind the CLI.

pub mod config;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod harness;
pub mod mechanism;
pub mod rng;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
pub use gcn::{gcn_forward, hamming, Activation, ForwardResult, GcnModel, LabelVector};
pub use graph::{generate_sbm, FeatureVector, Graph, SbmParams};
pub use mechanism::{run_mechanism, MechanismConfig, MechanismOutcome, VoteTally};
pub use theory::{BoundInputs, FeasibleRange, TheoryReport};
