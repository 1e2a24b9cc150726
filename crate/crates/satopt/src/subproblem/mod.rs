//! The convex inner approximation: log-power transform, DC split of the
//! capacity expression, first-order surrogate, and the barrier solver that
//! globally minimizes each approximation.
//!
//! Capacity decomposes per (user, subcarrier) as
//! `log2(1 + zeta*gamma) = phi(y) - theta(y)` with both parts convex in the
//! log-powers y. Linearizing phi at the approximation point leaves a
//! concave capacity surrogate, so the epigraph subproblem is convex.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, SystemConfig};
use crate::problem::PowerAllocation;
use crate::{Error, Result};

mod barrier;

pub use barrier::solve_subproblem;

/// N x K base-2 log powers, row-major `[beam * K + subcarrier]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPower {
    n_beams: usize,
    n_subcarriers: usize,
    y: Vec<f64>,
}

impl LogPower {
    /// y = log2(max(p, p_floor)); the floor keeps zero powers representable.
    pub fn from_allocation(p: &PowerAllocation, p_floor_w: f64) -> Self {
        LogPower {
            n_beams: p.n_beams(),
            n_subcarriers: p.n_subcarriers(),
            y: p.as_slice().iter().map(|v| v.max(p_floor_w).log2()).collect(),
        }
    }

    pub fn from_vec(n_beams: usize, n_subcarriers: usize, y: Vec<f64>) -> Result<Self> {
        if y.len() != n_beams * n_subcarriers {
            return Err(Error::invalid(format!(
                "log-power vector must have N*K = {} entries, got {}",
                n_beams * n_subcarriers,
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("log powers must be finite"));
        }
        Ok(LogPower {
            n_beams,
            n_subcarriers,
            y,
        })
    }

    pub fn to_allocation(&self) -> PowerAllocation {
        PowerAllocation::from_vec(
            self.n_beams,
            self.n_subcarriers,
            self.y.iter().map(|v| v.exp2()).collect(),
        )
        .expect("shape preserved")
    }

    #[inline]
    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    #[inline]
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    #[inline]
    pub fn get(&self, beam: usize, sc: usize) -> f64 {
        self.y[beam * self.n_subcarriers + sc]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    /// Gather the per-subcarrier slice y^[k] (length N).
    pub fn subcarrier_slice(&self, k: usize) -> Vec<f64> {
        (0..self.n_beams).map(|b| self.get(b, k)).collect()
    }
}

/// Epigraph auxiliary variables: per-user capacity shortfalls in bps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpigraphVars {
    pub t_bps: Vec<f64>,
}

/// Per-(i,k) values of the two convex parts of the capacity DC split.
#[derive(Debug, Clone, PartialEq)]
pub struct DcParts {
    n_beams: usize,
    n_subcarriers: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DcParts {
    pub fn evaluate(y: &LogPower, ch: &ChannelMatrix) -> Self {
        let n = ch.n_beams();
        let kk = ch.n_subcarriers();
        let mut phi = Vec::with_capacity(n * kk);
        let mut theta = Vec::with_capacity(n * kk);
        for i in 0..n {
            for k in 0..kk {
                let y_k = y.subcarrier_slice(k);
                phi.push(phi_eval(&y_k, ch, i, k));
                theta.push(theta_eval(&y_k, ch, i, k));
            }
        }
        DcParts {
            n_beams: n,
            n_subcarriers: kk,
            phi,
            theta,
        }
    }

    #[inline]
    pub fn phi(&self, i: usize, k: usize) -> f64 {
        self.phi[i * self.n_subcarriers + k]
    }

    #[inline]
    pub fn theta(&self, i: usize, k: usize) -> f64 {
        self.theta[i * self.n_subcarriers + k]
    }
}

/// Optimal point of one convex approximation plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub y_star: LogPower,
    pub t_star: EpigraphVars,
    /// Optimal F(y, t) in the solver's scaled units (capacities in Mbps,
    /// powers in W).
    pub objective_value: f64,
    /// Primal infeasibility + dual infeasibility + complementarity, in
    /// scaled units.
    pub kkt_residual: f64,
    /// Total Newton iterations across all barrier stages.
    pub barrier_iterations: usize,
    pub converged: bool,
}

/// Stable log2 of a sum of exponentials: log2(sum_j 2^{a_j}).
fn log2_sum_exp2(exponents: &[f64]) -> f64 {
    let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = exponents.iter().map(|a| (a - m).exp2()).sum();
    m + sum.log2()
}

/// phi_i^[k](y^[k]) = log2(sum_j g_{j,i} 2^{y_j} + sigma^2), evaluated with
/// max-shift stabilization.
pub fn phi_eval(y_k: &[f64], ch: &ChannelMatrix, i: usize, k: usize) -> f64 {
    phi_eval_zeta(y_k, ch, i, k, 1.0)
}

pub(crate) fn phi_eval_zeta(y_k: &[f64], ch: &ChannelMatrix, i: usize, k: usize, zeta: f64) -> f64 {
    debug_assert_eq!(y_k.len(), ch.n_beams());
    let mut exps: Vec<f64> = (0..ch.n_beams())
        .map(|j| {
            let g = if j == i { zeta * ch.gain(j, i, k) } else { ch.gain(j, i, k) };
            g.log2() + y_k[j]
        })
        .collect();
    exps.push(ch.noise(i, k).log2());
    log2_sum_exp2(&exps)
}

/// theta_i^[k](y^[k]): same as phi but excluding the own-beam term.
pub fn theta_eval(y_k: &[f64], ch: &ChannelMatrix, i: usize, k: usize) -> f64 {
    debug_assert_eq!(y_k.len(), ch.n_beams());
    let mut exps: Vec<f64> = (0..ch.n_beams())
        .filter(|j| *j != i)
        .map(|j| ch.gain(j, i, k).log2() + y_k[j])
        .collect();
    exps.push(ch.noise(i, k).log2());
    log2_sum_exp2(&exps)
}

/// Gradient of phi: d phi / d y_l = g_l 2^{y_l} / (sum_j g_j 2^{y_j} + sigma^2).
///
/// The ln2 from d(2^y)/dy cancels the 1/ln2 from log2, so this ratio form
/// is the exact derivative (validated against finite differences in tests).
pub fn phi_gradient(y_k: &[f64], ch: &ChannelMatrix, i: usize, k: usize) -> Vec<f64> {
    phi_gradient_zeta(y_k, ch, i, k, 1.0)
}

pub(crate) fn phi_gradient_zeta(
    y_k: &[f64],
    ch: &ChannelMatrix,
    i: usize,
    k: usize,
    zeta: f64,
) -> Vec<f64> {
    debug_assert_eq!(y_k.len(), ch.n_beams());
    let n = ch.n_beams();
    let exps: Vec<f64> = (0..n)
        .map(|j| {
            let g = if j == i { zeta * ch.gain(j, i, k) } else { ch.gain(j, i, k) };
            g.log2() + y_k[j]
        })
        .collect();
    let noise_exp = ch.noise(i, k).log2();
    let m = exps
        .iter()
        .cloned()
        .fold(noise_exp, f64::max);
    let denom: f64 =
        exps.iter().map(|a| (a - m).exp2()).sum::<f64>() + (noise_exp - m).exp2();
    exps.iter().map(|a| (a - m).exp2() / denom).collect()
}

/// First-order concave surrogate of the offered capacity (bps):
/// C~_i(y, ybar) = B_SC sum_k [ phi(ybar) + grad phi(ybar) . (y - ybar) - theta(y) ].
///
/// Tangent at y = ybar and a global under-estimator of the true capacity.
pub fn linearize_capacity(
    y: &LogPower,
    y_bar: &LogPower,
    ch: &ChannelMatrix,
    cfg: &SystemConfig,
    i: usize,
) -> f64 {
    let zeta = cfg.acm_zeta;
    let mut bits = 0.0;
    for k in 0..ch.n_subcarriers() {
        let y_k = y.subcarrier_slice(k);
        let ybar_k = y_bar.subcarrier_slice(k);
        let phi_bar = phi_eval_zeta(&ybar_k, ch, i, k, zeta);
        let grad = phi_gradient_zeta(&ybar_k, ch, i, k, zeta);
        let mut lin = phi_bar;
        for j in 0..ch.n_beams() {
            lin += grad[j] * (y_k[j] - ybar_k[j]);
        }
        bits += lin - theta_eval(&y_k, ch, i, k);
    }
    cfg.sc_bandwidth_hz * bits
}
