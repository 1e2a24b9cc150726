//! Problem-level metrics and the feasible set: SINR, per-user capacity,
//! unmet system capacity, total radiated power, the scalarized objective,
//! and the uniform power allocation baseline.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, SystemConfig};
use crate::{Error, Result};

/// Absolute slack in watts separating round-off from genuine violations.
pub const FEASIBILITY_SLACK_W: f64 = 1e-9;

/// N x K transmit powers in watts, row-major `[beam * K + subcarrier]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    n_beams: usize,
    n_subcarriers: usize,
    p: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(n_beams: usize, n_subcarriers: usize, value_w: f64) -> Self {
        PowerAllocation {
            n_beams,
            n_subcarriers,
            p: vec![value_w; n_beams * n_subcarriers],
        }
    }

    pub fn from_vec(n_beams: usize, n_subcarriers: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n_beams * n_subcarriers {
            return Err(Error::invalid(format!(
                "power vector must have N*K = {} entries, got {}",
                n_beams * n_subcarriers,
                p.len()
            )));
        }
        Ok(PowerAllocation {
            n_beams,
            n_subcarriers,
            p,
        })
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
        self.p[beam * self.n_subcarriers + sc]
    }

    #[inline]
    pub fn set(&mut self, beam: usize, sc: usize, value_w: f64) {
        self.p[beam * self.n_subcarriers + sc] = value_w;
    }

    pub fn beam_sum(&self, beam: usize) -> f64 {
        (0..self.n_subcarriers).map(|k| self.get(beam, k)).sum()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.p {
            *v *= factor;
        }
    }
}

/// Requested capacities, optionally remembering the slope that generated
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficDemand {
    pub c_req_bps: Vec<f64>,
    pub slope_r_bps: Option<f64>,
}

/// Snapshot of every problem-level metric at one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub capacity_bps: Vec<f64>,
    pub usc_bps: f64,
    pub p_tot_w: f64,
    /// usc_bps + w * p_tot_w, in bps.
    pub objective: f64,
}

/// One violated constraint of the feasible set Z.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativePower { beam: usize, sc: usize, value_w: f64 },
    BeamPower { beam: usize, sum_w: f64, limit_w: f64 },
    TotalPower { sum_w: f64, limit_w: f64 },
}

impl Violation {
    /// Magnitude of the violation in watts.
    pub fn excess_w(&self) -> f64 {
        match self {
            Violation::NegativePower { value_w, .. } => -value_w,
            Violation::BeamPower { sum_w, limit_w, .. } => sum_w - limit_w,
            Violation::TotalPower { sum_w, limit_w } => sum_w - limit_w,
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NegativePower { beam, sc, value_w } => {
                write!(f, "p[{beam}][{sc}] = {value_w} W is negative")
            }
            Violation::BeamPower { beam, sum_w, limit_w } => {
                write!(f, "beam {beam} power {sum_w} W exceeds limit {limit_w} W")
            }
            Violation::TotalPower { sum_w, limit_w } => {
                write!(f, "total power {sum_w} W exceeds limit {limit_w} W")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// SINR of user `i` on subcarrier `k`:
/// gamma = g_ii p_i / (sum_{j != i} g_ji p_j + sigma^2).
pub fn sinr(p: &PowerAllocation, ch: &ChannelMatrix, i: usize, k: usize) -> Result<f64> {
    let n = ch.n_beams();
    if i >= n || k >= ch.n_subcarriers() {
        return Err(Error::invalid(format!(
            "sinr index out of range: i={i}, k={k} for N={n}, K={}",
            ch.n_subcarriers()
        )));
    }
    let mut interference = 0.0;
    for j in 0..n {
        if j != i {
            interference += ch.gain(j, i, k) * p.get(j, k);
        }
    }
    Ok(ch.gain(i, i, k) * p.get(i, k) / (interference + ch.noise(i, k)))
}

/// Offered capacity of user `i` in bps:
/// C_i = B_SC * sum_k log2(1 + zeta * gamma_i^[k]).
pub fn capacity(p: &PowerAllocation, ch: &ChannelMatrix, cfg: &SystemConfig, i: usize) -> f64 {
    let mut bits_per_hz = 0.0;
    for k in 0..ch.n_subcarriers() {
        let g = sinr(p, ch, i, k).expect("capacity called with valid index");
        bits_per_hz += (1.0 + cfg.acm_zeta * g).log2();
    }
    cfg.sc_bandwidth_hz * bits_per_hz
}

/// Unmet system capacity: sum_i max(C_i^req - C_i, 0), in bps.
pub fn usc(
    p: &PowerAllocation,
    ch: &ChannelMatrix,
    cfg: &SystemConfig,
    demand: &TrafficDemand,
) -> f64 {
    demand
        .c_req_bps
        .iter()
        .enumerate()
        .map(|(i, req)| (req - capacity(p, ch, cfg, i)).max(0.0))
        .sum()
}

/// Total radiated power in watts.
pub fn total_power(p: &PowerAllocation) -> f64 {
    p.as_slice().iter().sum()
}

/// Scalarized objective f = USC + w * P_tot, in bps.
pub fn objective(
    p: &PowerAllocation,
    ch: &ChannelMatrix,
    cfg: &SystemConfig,
    demand: &TrafficDemand,
) -> f64 {
    usc(p, ch, cfg, demand) + cfg.weight_w_bps_per_watt * total_power(p)
}

/// Full metric snapshot at one allocation.
pub fn metrics(
    p: &PowerAllocation,
    ch: &ChannelMatrix,
    cfg: &SystemConfig,
    demand: &TrafficDemand,
) -> MetricsReport {
    let capacity_bps: Vec<f64> = (0..ch.n_beams()).map(|i| capacity(p, ch, cfg, i)).collect();
    let usc_bps: f64 = demand
        .c_req_bps
        .iter()
        .zip(&capacity_bps)
        .map(|(req, c)| (req - c).max(0.0))
        .sum();
    let p_tot_w = total_power(p);
    MetricsReport {
        capacity_bps,
        usc_bps,
        p_tot_w,
        objective: usc_bps + cfg.weight_w_bps_per_watt * p_tot_w,
    }
}

/// Membership test for the feasible set Z with a small absolute slack:
/// p >= 0, per-beam sums <= P_i^max, total <= P_tot^max.
pub fn is_feasible(p: &PowerAllocation, cfg: &SystemConfig) -> FeasibilityReport {
    let mut violations = Vec::new();
    for beam in 0..p.n_beams() {
        for sc in 0..p.n_subcarriers() {
            let v = p.get(beam, sc);
            if v < -FEASIBILITY_SLACK_W {
                violations.push(Violation::NegativePower { beam, sc, value_w: v });
            }
        }
        let sum = p.beam_sum(beam);
        if sum > cfg.p_beam_max_w + FEASIBILITY_SLACK_W {
            violations.push(Violation::BeamPower {
                beam,
                sum_w: sum,
                limit_w: cfg.p_beam_max_w,
            });
        }
    }
    let total = total_power(p);
    if total > cfg.p_tot_max_w + FEASIBILITY_SLACK_W {
        violations.push(Violation::TotalPower {
            sum_w: total,
            limit_w: cfg.p_tot_max_w,
        });
    }
    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Uniform power allocation baseline: P_tot^max / (N K) in every entry.
pub fn upa(cfg: &SystemConfig) -> PowerAllocation {
    PowerAllocation::new(
        cfg.n_beams,
        cfg.n_subcarriers,
        cfg.p_tot_max_w / (cfg.n_beams * cfg.n_subcarriers) as f64,
    )
}

/// Linear traffic model C_i^req = r * i with one-based user index.
pub fn demand_from_slope(r_bps: f64, n: usize) -> TrafficDemand {
    TrafficDemand {
        c_req_bps: (1..=n).map(|i| r_bps * i as f64).collect(),
        slope_r_bps: Some(r_bps),
    }
}
