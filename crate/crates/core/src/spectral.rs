//! Operator 2-norm of symmetric matrices.
//!
//! Small matrices go through a dense symmetric eigensolve. Larger ones use
//! power iteration on `M^2`, which converges to `|lambda|_max` even when `M`
//! is indefinite (as `L_hat - L` is).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest dimension handled by the exact eigensolve.
pub const EXACT_MAX_DIM: usize = 512;

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_RESTARTS: usize = 3;
const STALL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    ExactEigensolve,
    PowerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralNormResult {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub residual: f64,
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tol", format!("must be positive, got {tol}")));
    }
    Ok(())
}

/// `||M||_2` for symmetric `M`: exact eigensolve up to [`EXACT_MAX_DIM`],
/// power iteration above.
pub fn spectral_norm(m: &DMatrix<f64>, tol: f64) -> Result<SpectralNormResult> {
    if m.nrows() <= EXACT_MAX_DIM {
        exact_spectral_norm(m)
    } else {
        power_iteration_norm(m, tol)
    }
}

pub fn exact_spectral_norm(m: &DMatrix<f64>) -> Result<SpectralNormResult> {
    check_symmetric(m)?;
    if m.nrows() == 0 {
        return Ok(SpectralNormResult {
            value: 0.0,
            method: NormMethod::ExactEigensolve,
            iterations: 0,
            residual: 0.0,
        });
    }
    let eigenvalues = m.clone().symmetric_eigenvalues();
    let value = eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    Ok(SpectralNormResult {
        value,
        method: NormMethod::ExactEigensolve,
        iterations: 0,
        residual: 0.0,
    })
}

fn start_vector(n: usize) -> DVector<f64> {
    let mut v = DVector::from_element(n, 1.0);
    v[0] += 1e-3;
    let norm = v.norm();
    v / norm
}

fn random_start(n: usize, restart: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + restart as u64);
    let v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let norm = v.norm();
    v / norm
}

/// Power iteration on `M^2` with a deterministic start vector.
///
/// Stops once the residual `||M^2 v - theta v||` is at most
/// `tol * max(1, sqrt(theta)) * sqrt(theta)`, which bounds the error of the
/// returned norm by `tol * max(1, value)`. Restarts from a seeded random
/// vector when the Rayleigh quotient stalls without the residual improving.
pub fn power_iteration_norm(m: &DMatrix<f64>, tol: f64) -> Result<SpectralNormResult> {
    check_symmetric(m)?;
    check_tol(tol)?;
    let n = m.nrows();
    if n == 0 || m.iter().all(|&x| x == 0.0) {
        return Ok(SpectralNormResult {
            value: 0.0,
            method: NormMethod::PowerIteration,
            iterations: 0,
            residual: 0.0,
        });
    }
    let cap = ((10.0 * n as f64 * (1.0 / tol).ln()).ceil() as usize).max(100);

    let mut v = start_vector(n);
    let mut theta_prev = f64::NAN;
    let mut best = (0.0f64, f64::INFINITY);
    let mut window_residual = f64::INFINITY;
    let mut window_start = 0;
    let mut restarts = 0;

    for iter in 1..=cap {
        let mv = m * &v;
        let mmv = m * &mv;
        // theta = v^T M^2 v for unit v
        let theta = mv.norm_squared();
        if theta == 0.0 {
            // v landed in the null space; M != 0 so a fresh start finds signal.
            restarts += 1;
            v = random_start(n, restarts);
            continue;
        }
        let residual = (&mmv - &v * theta).norm();
        let value = theta.sqrt();
        if residual < best.1 {
            best = (value, residual);
        }
        if residual <= tol * value.max(1.0) * value {
            return Ok(SpectralNormResult {
                value,
                method: NormMethod::PowerIteration,
                iterations: iter,
                residual,
            });
        }

        let rel_change = ((theta - theta_prev) / theta.max(f64::MIN_POSITIVE)).abs();
        if iter - window_start >= STALL_WINDOW {
            let stalled = rel_change < tol / 10.0 && residual > 0.999 * window_residual;
            if stalled && restarts < MAX_RESTARTS {
                restarts += 1;
                v = random_start(n, restarts);
                theta_prev = f64::NAN;
                window_residual = f64::INFINITY;
                window_start = iter;
                continue;
            }
            window_residual = residual;
            window_start = iter;
        }
        theta_prev = theta;

        let norm = mmv.norm();
        v = mmv / norm;
    }
    Err(Error::NoConvergence {
        iterations: cap,
        estimate: best.0,
        residual: best.1,
    })
}
