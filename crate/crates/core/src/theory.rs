//! Closed-form misclassification bounds, the lower subsampling endpoint
//! `p_s*`, the feasible subsampling interval and the ensemble size `m`.
//!
//! Every `log` is natural.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, GcnModel};
use crate::graph::{FeatureVector, Graph};
use crate::spectral::{spectral_norm, DEFAULT_TOL};

/// Default cap on the number of subsampled graphs.
pub const DEFAULT_M_CAP: usize = 100_000;

/// Grid resolution of the sign scan in [`solve_ps_star`].
pub const PS_STAR_GRID: usize = 10_000;

/// Target `|g(p_s*)|` for the bisection in [`solve_ps_star`].
pub const PS_STAR_RESIDUAL: f64 = 1e-9;

/// Almost-sure bound on the norm of each centered rank-one edge term for
/// unweighted graphs.
pub const MAX_TERM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub n: usize,
    pub lap_norm: f64,
    pub c_sigma: f64,
    pub h1_abs: f64,
    pub gamma_min: f64,
}

impl BoundInputs {
    /// Derives the bound parameters from a graph, a feature vector and a model
    /// (`||L||_2` by exact eigensolve for small graphs).
    pub fn from_graph(g: &Graph, x: &FeatureVector, model: &GcnModel) -> Result<Self> {
        let lap_norm = spectral_norm(&g.laplacian(), DEFAULT_TOL)?.value;
        let forward = gcn_forward(g, x, model)?;
        let inputs = BoundInputs {
            n: g.node_count(),
            lap_norm,
            c_sigma: model.c_sigma(),
            h1_abs: model.h1.abs(),
            gamma_min: forward.gamma_min,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        if !(self.lap_norm >= 0.0 && self.lap_norm.is_finite()) {
            return Err(Error::invalid("lap_norm", "must be finite and non-negative"));
        }
        if !(self.c_sigma > 0.0 && self.c_sigma.is_finite()) {
            return Err(Error::invalid("c_sigma", "must be positive"));
        }
        if !(self.h1_abs >= 0.0 && self.h1_abs.is_finite()) {
            return Err(Error::invalid("h1_abs", "must be finite and non-negative"));
        }
        if self.gamma_min.is_nan() || self.gamma_min <= 0.0 {
            return Err(Error::DegenerateMargin);
        }
        Ok(())
    }

    /// `C_sigma |h1| / (sqrt(n) gamma_min)`.
    pub fn prefactor(&self) -> f64 {
        self.c_sigma * self.h1_abs / ((self.n as f64).sqrt() * self.gamma_min)
    }

    /// `gamma_min / (sqrt(n) C_sigma |h1|)`; infinite when `h1 = 0`.
    pub fn margin_budget(&self) -> f64 {
        if self.h1_abs == 0.0 {
            f64::INFINITY
        } else {
            self.gamma_min / ((self.n as f64).sqrt() * self.c_sigma * self.h1_abs)
        }
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(name, format!("{p} not in (0, 1]")));
    }
    Ok(())
}

fn check_open_unit(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::invalid(name, format!("{v} not in (0, 1)")));
    }
    Ok(())
}

/// Variance proxy and per-term bound for the centered edge terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinParams {
    pub variance_proxy: f64,
    pub max_term: f64,
}

impl BernsteinParams {
    pub fn new(lap_norm: f64, p_s: f64) -> Self {
        BernsteinParams {
            variance_proxy: 2.0 * p_s * (1.0 - p_s) * lap_norm,
            max_term: MAX_TERM,
        }
    }

    /// Tail bound `2n exp(-t^2 / (2 sigma^2 + 2 R t / 3))` on `||sum Y||_2 >= t`.
    pub fn tail_probability(&self, n: usize, t: f64) -> f64 {
        2.0 * n as f64 * (-(t * t) / (2.0 * self.variance_proxy + 2.0 * self.max_term * t / 3.0)).exp()
    }

    /// Deviation level that holds with probability at least `1 - eta`:
    /// `sqrt(2 sigma^2 log(2n/eta)) + (2/3) R log(2n/eta)`.
    pub fn deviation(&self, n: usize, eta: f64) -> f64 {
        let log_term = (2.0 * n as f64 / eta).ln();
        (2.0 * self.variance_proxy * log_term).sqrt() + 2.0 / 3.0 * self.max_term * log_term
    }
}

/// High-probability bound on `||L_hat - L||_2`: bias `|1 - p_s| ||L||_2` plus
/// the Bernstein deviation.
pub fn delta_laplacian_bound(n: usize, lap_norm: f64, p_s: f64, eta: f64) -> f64 {
    let log_term = (2.0 * n as f64 / eta).ln();
    (1.0 - p_s).abs() * lap_norm
        + (4.0 * p_s * (1.0 - p_s) * lap_norm * log_term).sqrt()
        + 4.0 / 3.0 * log_term
}

/// Single-subsample misclassification bound `f(p_s, eta)`.
pub fn bound_f(inputs: &BoundInputs, p_s: f64, eta: f64) -> Result<f64> {
    inputs.validate()?;
    check_probability("p_s", p_s)?;
    check_open_unit("eta", eta)?;
    Ok(inputs.prefactor() * delta_laplacian_bound(inputs.n, inputs.lap_norm, p_s, eta))
}

/// Hoeffding deviation `sqrt(log(2/eta_vote) / (2m))` used for the
/// ensemble term.
pub fn hoeffding_term(m: usize, eta_vote: f64) -> f64 {
    ((2.0 / eta_vote).ln() / (2.0 * m as f64)).sqrt()
}

/// Consensus misclassification bound `f(p_s, eta) / 4 + sqrt(log(2/eta_vote) / (2m))`.
pub fn bound_aggregated(inputs: &BoundInputs, p_s: f64, eta: f64, m: usize, eta_vote: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    check_open_unit("eta_vote", eta_vote)?;
    Ok(bound_f(inputs, p_s, eta)? / 4.0 + hoeffding_term(m, eta_vote))
}

/// Left-hand side of the `p_s*` equation (eta fixed at 1/4):
/// `(1-p)||L|| + sqrt(4 ||L|| log(8n) p(1-p)) + (4/3) log(8n) - gamma_min / (sqrt(n) C_sigma |h1|)`.
pub fn ps_star_equation(inputs: &BoundInputs, p: f64) -> f64 {
    let log_term = (8.0 * inputs.n as f64).ln();
    let q = (p * (1.0 - p)).max(0.0);
    (1.0 - p) * inputs.lap_norm + (4.0 * inputs.lap_norm * log_term * q).sqrt() + 4.0 / 3.0 * log_term
        - inputs.margin_budget()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsStar {
    /// Largest root of the equation on `[0, 1]`.
    Root { value: f64, residual: f64 },
    /// The equation is negative on all of `[0, 1]`; every `p_s` meets the
    /// utility requirement, so the lower endpoint is 0.
    Unconstrained { max_value: f64 },
}

impl PsStar {
    pub fn lower_endpoint(&self) -> f64 {
        match *self {
            PsStar::Root { value, .. } => value,
            PsStar::Unconstrained { .. } => 0.0,
        }
    }
}

/// Finds the largest root of [`ps_star_equation`] on `[0, 1]`: sign scan
/// from `p = 1` downwards on a [`PS_STAR_GRID`]-point grid, then bisection
/// until `|g| <= 1e-9`.
pub fn solve_ps_star(inputs: &BoundInputs) -> Result<PsStar> {
    inputs.validate()?;
    let g = |p: f64| ps_star_equation(inputs, p);
    let g1 = g(1.0);
    if g1 > 0.0 {
        return Err(Error::Unsatisfiable);
    }
    if g1 == 0.0 {
        return Ok(PsStar::Root { value: 1.0, residual: 0.0 });
    }
    let grid = PS_STAR_GRID;
    let mut hi = 1.0;
    let mut g_hi = g1;
    let mut max_value = g1;
    for k in (0..grid).rev() {
        let lo = k as f64 / grid as f64;
        let g_lo = g(lo);
        max_value = max_value.max(g_lo);
        if g_lo >= 0.0 {
            return Ok(bisect(&g, lo, hi, g_lo, g_hi));
        }
        hi = lo;
        g_hi = g_lo;
    }
    Ok(PsStar::Unconstrained { max_value })
}

/// Bisection on `[lo, hi]` with `g(lo) >= 0 > g(hi)`.
fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, g_lo: f64, g_hi: f64) -> PsStar {
    if g_lo == 0.0 {
        return PsStar::Root { value: lo, residual: 0.0 };
    }
    let (mut best_p, mut best_g) = if g_lo.abs() < g_hi.abs() { (lo, g_lo) } else { (hi, g_hi) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid.abs() < best_g.abs() {
            best_p = mid;
            best_g = g_mid;
        }
        if g_mid >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    PsStar::Root {
        value: best_p,
        residual: best_g.abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleRange {
    pub ps_star: Option<PsStar>,
    /// `epsilon / (32 log(1/delta))`, clipped to 1.
    pub ps_upper: f64,
    pub ps_upper_raw: f64,
    pub clipped: bool,
    pub feasible: bool,
    pub reason: String,
}

impl FeasibleRange {
    /// Midpoint of the open interval when it is non-empty.
    pub fn midpoint(&self) -> Option<f64> {
        let lower = self.ps_star.as_ref()?.lower_endpoint();
        self.feasible.then_some(0.5 * (lower + self.ps_upper))
    }
}

pub fn ps_upper(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    check_open_unit("delta", delta)?;
    Ok(epsilon / (32.0 * (1.0 / delta).ln()))
}

pub fn feasible_range(inputs: &BoundInputs, epsilon: f64, delta: f64) -> Result<FeasibleRange> {
    let raw = ps_upper(epsilon, delta)?;
    let clipped = raw > 1.0;
    let upper = raw.min(1.0);
    let mut notes = Vec::new();
    if clipped {
        notes.push(format!("ps_upper {raw} clipped to 1"));
    }
    let (ps_star, feasible) = match solve_ps_star(inputs) {
        Ok(star) => {
            let lower = star.lower_endpoint();
            let feasible = lower < upper;
            if let PsStar::Unconstrained { .. } = star {
                notes.push("utility condition holds for every p_s; lower endpoint is 0".into());
            }
            if !feasible {
                notes.push("ps_star >= ps_upper: vacuous regime".into());
            }
            (Some(star), feasible)
        }
        Err(Error::Unsatisfiable) => {
            notes.push(Error::Unsatisfiable.to_string());
            (None, false)
        }
        Err(e) => return Err(e),
    };
    if feasible {
        notes.push("feasible".into());
    }
    Ok(FeasibleRange {
        ps_star,
        ps_upper: upper,
        ps_upper_raw: raw,
        clipped,
        feasible,
        reason: notes.join("; "),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MChoice {
    pub m: usize,
    pub capped: bool,
}

/// Unclamped `log(n/delta) / p_s^2`.
pub fn m_raw(n: usize, delta: f64, p_s: f64) -> f64 {
    (n as f64 / delta).ln() / (p_s * p_s)
}

/// `ceil(log(n/delta) / p_s^2)`, at least 1 and at most `cap`.
pub fn choose_m(n: usize, delta: f64, p_s: f64, cap: usize) -> Result<MChoice> {
    check_probability("p_s", p_s)?;
    check_open_unit("delta", delta)?;
    if cap == 0 {
        return Err(Error::invalid("m_cap", "must be at least 1"));
    }
    let raw = m_raw(n, delta, p_s).ceil().max(1.0);
    if raw > cap as f64 {
        log::warn!("m = {raw} exceeds cap {cap}; the ensemble guarantee weakens");
        Ok(MChoice { m: cap, capped: true })
    } else {
        Ok(MChoice { m: raw as usize, capped: false })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FValue {
    pub p_s: f64,
    pub f: f64,
    pub delta_laplacian_bound: f64,
}

/// Everything the theory engine says about one `(graph, x, model, budget)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub inputs: BoundInputs,
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub f_grid: Vec<FValue>,
    pub feasible: FeasibleRange,
    pub chosen_p_s: Option<f64>,
    pub chosen_m: Option<MChoice>,
}

pub fn theory_report(
    inputs: &BoundInputs,
    epsilon: f64,
    delta: f64,
    eta: f64,
    ps_grid: &[f64],
    m_cap: usize,
) -> Result<TheoryReport> {
    let f_grid = ps_grid
        .iter()
        .map(|&p_s| {
            Ok(FValue {
                p_s,
                f: bound_f(inputs, p_s, eta)?,
                delta_laplacian_bound: delta_laplacian_bound(inputs.n, inputs.lap_norm, p_s, eta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let feasible = feasible_range(inputs, epsilon, delta)?;
    let chosen_p_s = feasible.midpoint();
    let chosen_m = chosen_p_s.map(|p| choose_m(inputs.n, delta, p, m_cap)).transpose()?;
    Ok(TheoryReport {
        inputs: *inputs,
        epsilon,
        delta,
        eta,
        f_grid,
        feasible,
        chosen_p_s,
        chosen_m,
    })
}
