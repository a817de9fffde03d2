//! Undirected simple graphs, feature vectors and the two-community
//! stochastic block model used as the default test distribution.

mod io;

pub use io::{
    format_edge_list, parse_edge_list, read_edge_list, read_features, write_edge_list, write_features,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..n`.
///
/// Edges are kept as a sorted, deduplicated list of pairs `(u, v)` with
/// `u < v`; degrees are cached. The graph is immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Both orientations and
    /// repeated pairs collapse to a single undirected edge.
    pub fn new(n: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "graph must have at least one node"));
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(u, v) in edge_list {
            for index in [u, v] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_canonical(n, edges))
    }

    /// `edges` must already be sorted, deduplicated and oriented `u < v`.
    pub(crate) fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(u, v)| u < v && v < n));
        let mut degrees = vec![0; n];
        for &(u, v) in &edges {
            degrees[u] += 1;
            degrees[v] += 1;
        }
        Graph { n, edges, degrees }
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, &[])
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted edges, each with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// True when every edge of `self` is also an edge of `other` and the
    /// node sets agree.
    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.n == other.n && self.edges.iter().all(|&(u, v)| other.has_edge(u, v))
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// Combinatorial Laplacian `D - A`, materialized densely.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.adjacency();
        for (i, &d) in self.degrees.iter().enumerate() {
            l[(i, i)] = d as f64;
        }
        l
    }

    /// Laplacian assembled as a sum of rank-one terms `(e_u - e_v)(e_u - e_v)^T`,
    /// one per edge. Equal to [`Graph::laplacian`] entrywise.
    pub fn laplacian_rank_one_sum(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            l += edge_outer(self.n, u, v);
        }
        l
    }

    /// Computes `L x` without materializing `L`.
    pub fn laplacian_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for &(u, v) in &self.edges {
            let diff = x[u] - x[v];
            out[u] += diff;
            out[v] -= diff;
        }
        Ok(out)
    }

    /// Returns the neighboring graph with the pair `(u, v)` toggled: added if
    /// absent, removed if present.
    pub fn neighboring(&self, u: usize, v: usize) -> Result<Graph> {
        for index in [u, v] {
            if index >= self.n {
                return Err(Error::NodeOutOfRange { index, n: self.n });
            }
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        let key = (u.min(v), u.max(v));
        let mut edges = self.edges.clone();
        match edges.binary_search(&key) {
            Ok(pos) => {
                edges.remove(pos);
            }
            Err(pos) => edges.insert(pos, key),
        }
        Ok(Self::from_canonical(self.n, edges))
    }

    /// Keeps the edges whose mask entry is `true`; the mask is aligned with
    /// [`Graph::edges`].
    pub fn retain_edges(&self, mask: &[bool]) -> Graph {
        assert_eq!(mask.len(), self.edges.len(), "edge mask length");
        let edges = self
            .edges
            .iter()
            .zip(mask)
            .filter_map(|(&e, &keep)| keep.then_some(e))
            .collect();
        Self::from_canonical(self.n, edges)
    }
}

/// Dense `u_uv u_uv^T` with `u_uv = e_u - e_v`.
pub(crate) fn edge_outer(n: usize, u: usize, v: usize) -> DMatrix<f64> {
    let mut vec = nalgebra::DVector::zeros(n);
    vec[u] = 1.0;
    vec[v] = -1.0;
    &vec * vec.transpose()
}

/// Real node feature vector with unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    /// Scales `values` to unit norm. Fails on empty, non-finite or zero vectors.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("feature vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "feature vector has non-finite entries"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("x", "feature vector is zero"));
        }
        Ok(FeatureVector(values.into_iter().map(|v| v / norm).collect()))
    }

    /// Accepts a vector that is already unit-norm within [`Self::NORM_TOLERANCE`].
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::invalid("x", format!("expected unit norm, got {norm}")));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Two equal communities; within-community pairs connect with `p_in`,
/// cross pairs with `p_out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !self.n.is_multiple_of(2) {
            return Err(Error::invalid("n", format!("SBM needs a positive even node count, got {}", self.n)));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("{p} is not a probability")));
            }
        }
        if self.p_out > self.p_in {
            return Err(Error::invalid("p_out", "must not exceed p_in"));
        }
        Ok(())
    }
}

/// Samples a two-community SBM. Labels are `+1` for the first half of the
/// nodes and `-1` for the second half.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<(Graph, Vec<i8>)> {
    params.validate()?;
    let n = params.n;
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if (u < half) == (v < half) { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|i| if i < half { 1 } else { -1 }).collect();
    Ok((Graph::from_canonical(n, edges), labels))
}

/// Planted-label feature vector `labels / sqrt(n)` plus i.i.d. Gaussian noise
/// of standard deviation `noise / sqrt(n)`, normalized to unit length.
pub fn planted_features(labels: &[i8], noise: f64, seed: u64) -> Result<FeatureVector> {
    use rand_distr::{Distribution, Normal};

    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise", "must be a finite non-negative number"));
    }
    let scale = 1.0 / (labels.len() as f64).sqrt();
    let normal = Normal::new(0.0, noise * scale).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = labels
        .iter()
        .map(|&y| f64::from(y) * scale + normal.sample(&mut rng))
        .collect();
    FeatureVector::normalized(values)
}
