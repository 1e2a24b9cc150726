//! Log-barrier Newton solver for the convex subproblem
//!
//!   minimize    F(y, t) = sum_i t_i + w sum_{i,k} 2^{y_i^[k]}
//!   subject to  t_i >= 0
//!               t_i >= C_i^req - C~_i(y, ybar)
//!               sum_k 2^{y_i^[k]} <= P_i^max
//!               sum_{i,k} 2^{y_i^[k]} <= P_tot^max
//!               y >= log2(p_floor)
//!
//! Capacities are scaled to Mbps and powers stay in watts so the objective
//! terms are commensurate for weights in the Mbps/W range. The barrier
//! parameter grows by x10 per stage until m/tau drops below 1e-8; each
//! stage is centered by damped Newton with backtracking line search.
//! Convergence is certified a posteriori from the KKT residual, never
//! assumed from the iteration count.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::LN_2;

use crate::channel::{ChannelMatrix, SystemConfig};
use crate::problem::TrafficDemand;
use crate::{Error, Result};

use super::{phi_eval_zeta, phi_gradient_zeta, EpigraphVars, LogPower, SubproblemSolution};

const BARRIER_MU: f64 = 10.0;
/// Terminate the schedule once m / tau (the duality gap bound) is below this.
const GAP_TOL: f64 = 1e-8;
/// Contractual bound on the combined KKT residual.
const KKT_TOL: f64 = 1e-6;
/// Per-stage target on the barrier gradient's infinity norm.
const GRAD_INF_TOL: f64 = 1e-8;
/// Newton decrement floor; below this the stage cannot improve further.
const DECREMENT_TOL: f64 = 1e-13;
const MAX_NEWTON_PER_STAGE: usize = 80;
const ARMIJO_SLOPE: f64 = 0.25;
const BACKTRACK_FACTOR: f64 = 0.5;
/// Pull-in factor moving the start strictly inside the power constraints.
const INTERIOR_PULL: f64 = 0.99;
/// Capacities are expressed in Mbps inside the solver.
const CAP_SCALE: f64 = 1e6;

/// Globally solve the convex approximation at `y_bar`.
///
/// Returns a non-converged solution (with diagnostics) rather than an error
/// when the barrier iteration stalls; errors are reserved for malformed
/// inputs.
pub fn solve_subproblem(
    ch: &ChannelMatrix,
    cfg: &SystemConfig,
    demand: &TrafficDemand,
    y_bar: &LogPower,
) -> Result<SubproblemSolution> {
    let prob = BarrierProblem::new(ch, cfg, demand, y_bar)?;
    let mut z = prob.interior_start(y_bar);
    debug_assert!(prob.eval(&z).is_some(), "interior start must be strictly feasible");

    let mut total_newton = 0usize;
    let mut stalled = false;
    let mut tau = 1.0;
    loop {
        let (iters, ok) = prob.center(&mut z, tau);
        total_newton += iters;
        stalled |= !ok;
        if prob.m as f64 / tau < GAP_TOL {
            break;
        }
        tau *= BARRIER_MU;
    }

    let pe = prob
        .eval(&z)
        .ok_or_else(|| Error::Solver("lost strict feasibility during centering".into()))?;
    let kkt = prob.kkt_residual(&z, &pe, tau);
    let objective_value = prob.objective(&pe, &z);

    let y_star = LogPower::from_vec(prob.n, prob.kk, z[..prob.ny].to_vec())?;
    let t_star = EpigraphVars {
        t_bps: z[prob.ny..].iter().map(|t| t * CAP_SCALE).collect(),
    };
    if stalled {
        log::debug!("barrier solve stalled; kkt residual {kkt:.3e}");
    }
    Ok(SubproblemSolution {
        y_star,
        t_star,
        objective_value,
        kkt_residual: kkt,
        barrier_iterations: total_newton,
        converged: kkt <= KKT_TOL,
    })
}

/// Problem data with the linearization at `y_bar` baked in.
struct BarrierProblem {
    n: usize,
    kk: usize,
    ny: usize,
    nv: usize,
    /// Constraint count 3N + 1 + NK.
    m: usize,
    w_m: f64,
    b_m: f64,
    c_req_m: Vec<f64>,
    p_beam_max: f64,
    p_tot_max: f64,
    p_floor: f64,
    y_floor: f64,
    /// log2 of raw gains, receiver-major: `[(i*K + k)*N + j]`.
    log2_g: Vec<f64>,
    /// log2 of noise power per (i, k).
    log2_noise: Vec<f64>,
    /// grad phi(ybar) per `[(i*K + k)*N + j]` (ACM-aware).
    grad_bar: Vec<f64>,
    /// Per-user constant of the surrogate: B_m sum_k [phi(ybar) - grad . ybar].
    lincap_const: Vec<f64>,
}

/// Everything the Newton iteration needs at one strictly feasible point.
struct PointEval {
    p: Vec<f64>,
    /// grad theta weights per `[(i*K + k)*N + j]`, zero on the diagonal.
    q: Vec<f64>,
    ctilde: Vec<f64>,
    s_t0: Vec<f64>,
    s_short: Vec<f64>,
    s_beam: Vec<f64>,
    s_tot: f64,
    s_box: Vec<f64>,
}

impl PointEval {
    fn log_barrier(&self) -> f64 {
        let mut b = 0.0;
        for s in self.s_t0.iter().chain(&self.s_short).chain(&self.s_beam).chain(&self.s_box) {
            b -= s.ln();
        }
        b - self.s_tot.ln()
    }

    fn min_slack(&self) -> f64 {
        let mut m = self.s_tot;
        for s in self.s_t0.iter().chain(&self.s_short).chain(&self.s_beam).chain(&self.s_box) {
            m = m.min(*s);
        }
        m
    }
}

impl BarrierProblem {
    fn new(
        ch: &ChannelMatrix,
        cfg: &SystemConfig,
        demand: &TrafficDemand,
        y_bar: &LogPower,
    ) -> Result<Self> {
        let n = ch.n_beams();
        let kk = ch.n_subcarriers();
        if y_bar.n_beams() != n || y_bar.n_subcarriers() != kk {
            return Err(Error::invalid("y_bar shape does not match channel"));
        }
        if demand.c_req_bps.len() != n {
            return Err(Error::invalid(format!(
                "demand must have N = {n} entries, got {}",
                demand.c_req_bps.len()
            )));
        }
        let ny = n * kk;
        let b_m = cfg.sc_bandwidth_hz / CAP_SCALE;
        let w_m = cfg.weight_w_bps_per_watt / CAP_SCALE;

        let mut log2_g = vec![0.0; ny * n];
        let mut log2_noise = vec![0.0; ny];
        let mut grad_bar = vec![0.0; ny * n];
        let mut lincap_const = vec![0.0; n];
        for i in 0..n {
            for k in 0..kk {
                let row = (i * kk + k) * n;
                for j in 0..n {
                    log2_g[row + j] = ch.gain(j, i, k).log2();
                }
                log2_noise[i * kk + k] = ch.noise(i, k).log2();

                let ybar_k = y_bar.subcarrier_slice(k);
                let phi = phi_eval_zeta(&ybar_k, ch, i, k, cfg.acm_zeta);
                let grad = phi_gradient_zeta(&ybar_k, ch, i, k, cfg.acm_zeta);
                let mut c = phi;
                for j in 0..n {
                    grad_bar[row + j] = grad[j];
                    c -= grad[j] * ybar_k[j];
                }
                lincap_const[i] += b_m * c;
            }
        }

        Ok(BarrierProblem {
            n,
            kk,
            ny,
            nv: ny + n,
            m: 3 * n + 1 + ny,
            w_m,
            b_m,
            c_req_m: demand.c_req_bps.iter().map(|c| c / CAP_SCALE).collect(),
            p_beam_max: cfg.p_beam_max_w,
            p_tot_max: cfg.p_tot_max_w,
            p_floor: cfg.p_floor_w,
            y_floor: cfg.p_floor_w.log2(),
            log2_g,
            log2_noise,
            grad_bar,
            lincap_const,
        })
    }

    /// Strictly feasible start: powers pulled inside the beam/total limits
    /// and nudged off the floor box, shortfall variables given 1 Mbps slack.
    fn interior_start(&self, y_bar: &LogPower) -> Vec<f64> {
        let floor = self.p_floor * (1.0 + 1e-6);
        let mut p: Vec<f64> = y_bar.as_slice().iter().map(|y| y.exp2().max(floor)).collect();
        for b in 0..self.n {
            let sum: f64 = p[b * self.kk..(b + 1) * self.kk].iter().sum();
            if sum > INTERIOR_PULL * self.p_beam_max {
                let scale = INTERIOR_PULL * self.p_beam_max / sum;
                for v in &mut p[b * self.kk..(b + 1) * self.kk] {
                    *v *= scale;
                }
            }
        }
        let total: f64 = p.iter().sum();
        if total > INTERIOR_PULL * self.p_tot_max {
            let scale = INTERIOR_PULL * self.p_tot_max / total;
            for v in &mut p {
                *v *= scale;
            }
        }
        for v in &mut p {
            *v = v.max(floor);
        }

        let mut z = vec![0.0; self.nv];
        for (zi, pi) in z.iter_mut().zip(&p) {
            *zi = pi.log2();
        }
        let ctilde = self.eval_ctilde(&z);
        for i in 0..self.n {
            let shortfall = (self.c_req_m[i] - ctilde[i]).max(0.0);
            z[self.ny + i] = shortfall + 1.0;
        }
        z
    }

    /// Surrogate capacities C~_i (Mbps) at the y stored in `z`.
    fn eval_ctilde(&self, z: &[f64]) -> Vec<f64> {
        let mut ctilde = self.lincap_const.clone();
        for i in 0..self.n {
            let mut lin = 0.0;
            let mut theta_sum = 0.0;
            for k in 0..self.kk {
                let row = (i * self.kk + k) * self.n;
                for j in 0..self.n {
                    lin += self.grad_bar[row + j] * z[j * self.kk + k];
                }
                theta_sum += self.theta_at(z, i, k).0;
            }
            ctilde[i] += self.b_m * (lin - theta_sum);
        }
        ctilde
    }

    /// theta_ik and its gradient weights at the point `z` (max-shifted).
    fn theta_at(&self, z: &[f64], i: usize, k: usize) -> (f64, Vec<f64>) {
        let row = (i * self.kk + k) * self.n;
        let noise_exp = self.log2_noise[i * self.kk + k];
        let mut m = noise_exp;
        let mut exps = vec![f64::NEG_INFINITY; self.n];
        for j in 0..self.n {
            if j != i {
                let e = self.log2_g[row + j] + z[j * self.kk + k];
                exps[j] = e;
                m = m.max(e);
            }
        }
        let mut denom = (noise_exp - m).exp2();
        let mut weights = vec![0.0; self.n];
        for j in 0..self.n {
            if j != i {
                weights[j] = (exps[j] - m).exp2();
                denom += weights[j];
            }
        }
        for w in &mut weights {
            *w /= denom;
        }
        (m + denom.log2(), weights)
    }

    /// Evaluate powers, surrogate capacities and all slacks. `None` if the
    /// point is not strictly feasible.
    fn eval(&self, z: &[f64]) -> Option<PointEval> {
        let p: Vec<f64> = z[..self.ny].iter().map(|y| y.exp2()).collect();
        let mut theta = vec![0.0; self.ny];
        let mut q = vec![0.0; self.ny * self.n];
        for i in 0..self.n {
            for k in 0..self.kk {
                let (th, weights) = self.theta_at(z, i, k);
                theta[i * self.kk + k] = th;
                q[(i * self.kk + k) * self.n..][..self.n].copy_from_slice(&weights);
            }
        }
        let mut ctilde = self.lincap_const.clone();
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in 0..self.kk {
                let row = (i * self.kk + k) * self.n;
                for j in 0..self.n {
                    acc += self.grad_bar[row + j] * z[j * self.kk + k];
                }
                acc -= theta[i * self.kk + k];
            }
            ctilde[i] += self.b_m * acc;
        }

        let s_t0: Vec<f64> = (0..self.n).map(|i| z[self.ny + i]).collect();
        let s_short: Vec<f64> = (0..self.n)
            .map(|i| z[self.ny + i] - (self.c_req_m[i] - ctilde[i]))
            .collect();
        let s_beam: Vec<f64> = (0..self.n)
            .map(|b| self.p_beam_max - p[b * self.kk..(b + 1) * self.kk].iter().sum::<f64>())
            .collect();
        let s_tot = self.p_tot_max - p.iter().sum::<f64>();
        let s_box: Vec<f64> = z[..self.ny].iter().map(|y| y - self.y_floor).collect();

        let pe = PointEval {
            p,
            q,
            ctilde,
            s_t0,
            s_short,
            s_beam,
            s_tot,
            s_box,
        };
        if pe.min_slack() > 0.0 && pe.ctilde.iter().all(|c| c.is_finite()) {
            Some(pe)
        } else {
            None
        }
    }

    /// F(y, t) = sum t + w_m sum 2^y, in Mbps-consistent units.
    fn objective(&self, pe: &PointEval, z: &[f64]) -> f64 {
        let t_sum: f64 = z[self.ny..].iter().sum();
        t_sum + self.w_m * pe.p.iter().sum::<f64>()
    }

    fn barrier_value(&self, pe: &PointEval, z: &[f64], tau: f64) -> f64 {
        self.objective(pe, z) + pe.log_barrier() / tau
    }

    fn gradient(&self, pe: &PointEval, tau: f64) -> DVector<f64> {
        let inv_tau = 1.0 / tau;
        let mut g = DVector::zeros(self.nv);
        for idx in 0..self.ny {
            let b = idx / self.kk;
            g[idx] = self.w_m * LN_2 * pe.p[idx]
                + inv_tau
                    * (LN_2 * pe.p[idx] / pe.s_beam[b] + LN_2 * pe.p[idx] / pe.s_tot
                        - 1.0 / pe.s_box[idx]);
        }
        for i in 0..self.n {
            g[self.ny + i] = 1.0 - inv_tau * (1.0 / pe.s_t0[i] + 1.0 / pe.s_short[i]);
            let coef = inv_tau / pe.s_short[i];
            for k in 0..self.kk {
                let row = (i * self.kk + k) * self.n;
                for j in 0..self.n {
                    // d s_short / d y = d C~ / d y = B_m (grad_bar - q)
                    let ds = self.b_m * (self.grad_bar[row + j] - pe.q[row + j]);
                    g[j * self.kk + k] -= coef * ds;
                }
            }
        }
        g
    }

    fn hessian(&self, pe: &PointEval, tau: f64) -> DMatrix<f64> {
        let inv_tau = 1.0 / tau;
        let ln2_sq = LN_2 * LN_2;
        let mut h = DMatrix::zeros(self.nv, self.nv);

        // separable curvature in y: objective + beam/total exponentials + box
        for idx in 0..self.ny {
            let b = idx / self.kk;
            h[(idx, idx)] = self.w_m * ln2_sq * pe.p[idx]
                + inv_tau
                    * (ln2_sq * pe.p[idx] / pe.s_beam[b]
                        + ln2_sq * pe.p[idx] / pe.s_tot
                        + 1.0 / (pe.s_box[idx] * pe.s_box[idx]));
        }

        // rank-one terms of the per-beam power constraints
        for b in 0..self.n {
            let c = inv_tau / (pe.s_beam[b] * pe.s_beam[b]);
            for k1 in 0..self.kk {
                let i1 = b * self.kk + k1;
                let v1 = LN_2 * pe.p[i1];
                for k2 in 0..self.kk {
                    let i2 = b * self.kk + k2;
                    h[(i1, i2)] += c * v1 * LN_2 * pe.p[i2];
                }
            }
        }

        // rank-one term of the total power constraint
        let c_tot = inv_tau / (pe.s_tot * pe.s_tot);
        for i1 in 0..self.ny {
            let v1 = LN_2 * pe.p[i1];
            for i2 in 0..self.ny {
                h[(i1, i2)] += c_tot * v1 * LN_2 * pe.p[i2];
            }
        }

        // shortfall constraints: rank-one over (y, t_i) plus theta curvature
        let mut w = vec![0.0; self.ny];
        for i in 0..self.n {
            let s = pe.s_short[i];
            let c1 = inv_tau / (s * s);
            for k in 0..self.kk {
                let row = (i * self.kk + k) * self.n;
                for j in 0..self.n {
                    w[j * self.kk + k] = self.b_m * (self.grad_bar[row + j] - pe.q[row + j]);
                }
            }
            for a in 0..self.ny {
                if w[a] == 0.0 {
                    continue;
                }
                for b2 in 0..self.ny {
                    h[(a, b2)] += c1 * w[a] * w[b2];
                }
                h[(a, self.ny + i)] += c1 * w[a];
                h[(self.ny + i, a)] += c1 * w[a];
            }
            h[(self.ny + i, self.ny + i)] += c1;

            // -(1/s) d^2 s = +(1/s) B_m sum_k ln2 (diag(q) - q q^T)
            let c2 = inv_tau / s * self.b_m * LN_2;
            for k in 0..self.kk {
                let row = (i * self.kk + k) * self.n;
                for j1 in 0..self.n {
                    let qa = pe.q[row + j1];
                    if qa == 0.0 {
                        continue;
                    }
                    let a = j1 * self.kk + k;
                    h[(a, a)] += c2 * qa;
                    for j2 in 0..self.n {
                        let qb = pe.q[row + j2];
                        if qb != 0.0 {
                            h[(a, j2 * self.kk + k)] -= c2 * qa * qb;
                        }
                    }
                }
            }
        }

        // t >= 0 barriers
        for i in 0..self.n {
            h[(self.ny + i, self.ny + i)] += inv_tau / (pe.s_t0[i] * pe.s_t0[i]);
        }
        h
    }

    /// Damped Newton to the central point of `tau`. Returns the iteration
    /// count and whether the stage reached its gradient target.
    fn center(&self, z: &mut Vec<f64>, tau: f64) -> (usize, bool) {
        let mut iters = 0usize;
        for _ in 0..MAX_NEWTON_PER_STAGE {
            let pe = match self.eval(z) {
                Some(pe) => pe,
                None => return (iters, false),
            };
            let g = self.gradient(&pe, tau);
            if g.amax() <= GRAD_INF_TOL {
                return (iters, true);
            }
            let h = self.hessian(&pe, tau);
            let dz = match self.newton_direction(&h, &g) {
                Some(dz) => dz,
                None => return (iters, false),
            };
            let decrement = -g.dot(&dz);
            if decrement / 2.0 <= DECREMENT_TOL {
                // gradient target unreachable at this conditioning; the
                // outer KKT check decides whether that matters
                return (iters, g.amax() <= GRAD_INF_TOL);
            }

            let g_dot_dz = g.dot(&dz);
            let base_value = self.barrier_value(&pe, z, tau);
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= 1e-18 {
                let z_try: Vec<f64> =
                    z.iter().zip(dz.iter()).map(|(zi, di)| zi + alpha * di).collect();
                if let Some(pe_try) = self.eval(&z_try) {
                    let v = self.barrier_value(&pe_try, &z_try, tau);
                    if v <= base_value + ARMIJO_SLOPE * alpha * g_dot_dz {
                        *z = z_try;
                        accepted = true;
                        break;
                    }
                }
                alpha *= BACKTRACK_FACTOR;
            }
            if std::env::var("SATOPT_NEWTON_DEBUG").is_ok() {
                eprintln!(
                    "  it={iters} |g|={:.3e} lam2/2={:.3e} alpha={alpha:.3e} F={:.9} t0={:?} short={:?} beam={:?} tot={:.3e} box={:?} y={:?}",
                    g.amax(),
                    decrement / 2.0,
                    self.objective(&pe, z),
                    pe.s_t0,
                    pe.s_short,
                    pe.s_beam,
                    pe.s_tot,
                    pe.s_box,
                    &z[..self.ny],
                );
            }
            iters += 1;
            if !accepted {
                return (iters, false);
            }
        }
        let reached = self
            .eval(z)
            .map(|pe| self.gradient(&pe, tau).amax() <= GRAD_INF_TOL)
            .unwrap_or(false);
        (iters, reached)
    }

    /// Solve H dz = -g, adding a diagonal ridge only if the factorization
    /// fails numerically.
    fn newton_direction(&self, h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
        let max_diag = (0..self.nv).map(|d| h[(d, d)]).fold(0.0f64, f64::max);
        let mut ridge = 0.0;
        for _ in 0..8 {
            let mut hh = h.clone();
            if ridge > 0.0 {
                for d in 0..self.nv {
                    hh[(d, d)] += ridge;
                }
            }
            if let Some(chol) = hh.cholesky() {
                return Some(chol.solve(&(-g)));
            }
            ridge = if ridge == 0.0 { 1e-14 * max_diag.max(1e-300) } else { ridge * 100.0 };
        }
        None
    }

    /// Combined residual: primal infeasibility + dual infeasibility +
    /// complementarity, with multipliers lambda_c = 1/(tau s_c).
    fn kkt_residual(&self, z: &[f64], pe: &PointEval, tau: f64) -> f64 {
        let r_primal = (-pe.min_slack()).max(0.0);
        let r_dual = self.gradient(pe, tau).amax();
        let r_comp = self.m as f64 / tau;
        let _ = z;
        r_primal + r_dual + r_comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{self, PowerAllocation};

    #[test]
    fn debug_gradient_consistency() {
        let cfg = SystemConfig {
            n_beams: 2,
            n_subcarriers: 1,
            weight_w_bps_per_watt: 10.0e6,
            ..SystemConfig::default()
        };
        let ch = ChannelMatrix::frequency_flat(2, 1, &[3e-12, 2e-13, 3e-13, 2.5e-12], 4e-13)
            .unwrap();
        let demand = TrafficDemand {
            c_req_bps: vec![0.4e9, 0.9e9],
            slope_r_bps: None,
        };
        let y_bar = LogPower::from_allocation(&problem::upa(&cfg), cfg.p_floor_w);
        let prob = BarrierProblem::new(&ch, &cfg, &demand, &y_bar).unwrap();
        let z = prob.interior_start(&y_bar);
        let tau = 1.0;
        let pe = prob.eval(&z).unwrap();
        let g = prob.gradient(&pe, tau);
        let h = prob.hessian(&pe, tau);
        let fd_h = 1e-6;
        for idx in 0..prob.nv {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[idx] += fd_h;
            zm[idx] -= fd_h;
            let vp = prob.barrier_value(&prob.eval(&zp).unwrap(), &zp, tau);
            let vm = prob.barrier_value(&prob.eval(&zm).unwrap(), &zm, tau);
            let fd = (vp - vm) / (2.0 * fd_h);
            eprintln!("g[{idx}] = {:.9e} fd = {:.9e}", g[idx], fd);
            // hessian row via gradient fd
            let gp = prob.gradient(&prob.eval(&zp).unwrap(), tau);
            let gm = prob.gradient(&prob.eval(&zm).unwrap(), tau);
            for col in 0..prob.nv {
                let hfd = (gp[col] - gm[col]) / (2.0 * fd_h);
                if (h[(idx, col)] - hfd).abs() > 1e-4 * (1.0 + hfd.abs()) {
                    eprintln!("  H[({idx},{col})] = {:.6e} fd = {:.6e}", h[(idx, col)], hfd);
                }
            }
        }
    }

    #[test]
    fn debug_stage_progression() {
        let cfg = SystemConfig {
            n_beams: 2,
            n_subcarriers: 1,
            weight_w_bps_per_watt: 10.0e6,
            ..SystemConfig::default()
        };
        let ch = ChannelMatrix::frequency_flat(2, 1, &[3e-12, 2e-13, 3e-13, 2.5e-12], 4e-13)
            .unwrap();
        let demand = TrafficDemand {
            c_req_bps: vec![0.4e9, 0.9e9],
            slope_r_bps: None,
        };
        let y_bar = LogPower::from_allocation(&problem::upa(&cfg), cfg.p_floor_w);
        let prob = BarrierProblem::new(&ch, &cfg, &demand, &y_bar).unwrap();
        let mut z = prob.interior_start(&y_bar);
        eprintln!("start z = {z:?}");
        let pe = prob.eval(&z).expect("interior");
        eprintln!("slacks: t0={:?} short={:?} beam={:?} tot={} box={:?}",
            pe.s_t0, pe.s_short, pe.s_beam, pe.s_tot, pe.s_box);
        eprintln!("ctilde={:?} c_req={:?}", pe.ctilde, prob.c_req_m);
        let mut tau = 1.0;
        loop {
            let (iters, ok) = prob.center(&mut z, tau);
            let pe = prob.eval(&z).unwrap();
            let g = prob.gradient(&pe, tau);
            eprintln!("tau={tau:e} iters={iters} ok={ok} |g|={:.3e} F={:.6}",
                g.amax(), prob.objective(&pe, &z));
            if prob.m as f64 / tau < GAP_TOL { break; }
            tau *= BARRIER_MU;
        }
        let pe = prob.eval(&z).unwrap();
        eprintln!("final kkt = {}", prob.kkt_residual(&z, &pe, tau));
        eprintln!("final z = {z:?}");
    }
    use crate::subproblem::linearize_capacity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_cfg(n: usize, k: usize) -> SystemConfig {
        SystemConfig {
            n_beams: n,
            n_subcarriers: k,
            ..SystemConfig::default()
        }
    }

    fn toy_channel(n: usize, k: usize, gain_ji: &[f64], noise: f64) -> ChannelMatrix {
        ChannelMatrix::frequency_flat(n, k, gain_ji, noise).unwrap()
    }

    fn upa_logpower(cfg: &SystemConfig) -> LogPower {
        LogPower::from_allocation(&problem::upa(cfg), cfg.p_floor_w)
    }

    #[test]
    fn enormous_weight_pins_powers_at_floor() {
        let mut cfg = toy_cfg(2, 2);
        cfg.weight_w_bps_per_watt = 1e15;
        let ch = toy_channel(2, 2, &[2e-12, 1e-13, 1e-13, 2e-12], 4e-13);
        let demand = problem::demand_from_slope(0.1e9, 2);
        let sol = solve_subproblem(&ch, &cfg, &demand, &upa_logpower(&cfg)).unwrap();
        assert!(sol.converged, "kkt = {}", sol.kkt_residual);
        let p_tot: f64 = sol.y_star.as_slice().iter().map(|y| y.exp2()).sum();
        let floor_tot = 4.0 * cfg.p_floor_w;
        assert!(
            (p_tot - floor_tot).abs() / floor_tot < 0.01,
            "total power {p_tot} vs floor total {floor_tot}"
        );
    }

    #[test]
    fn met_demand_drives_shortfall_to_zero() {
        // single link with demand far below achievable capacity
        let mut cfg = toy_cfg(1, 1);
        cfg.weight_w_bps_per_watt = 0.0;
        let ch = toy_channel(1, 1, &[2e-12], 4e-13);
        // capacity at P_max: log2(1 + 2e-12*100/4e-13) = log2(1 + 5e2) ~ 9 bits
        let demand = TrafficDemand {
            c_req_bps: vec![0.2e9],
            slope_r_bps: None,
        };
        let sol = solve_subproblem(&ch, &cfg, &demand, &upa_logpower(&cfg)).unwrap();
        assert!(sol.converged, "kkt = {}", sol.kkt_residual);
        assert!(
            sol.t_star.t_bps[0].abs() < 1.0,
            "t* = {} bps should collapse to zero",
            sol.t_star.t_bps[0]
        );
    }

    #[test]
    fn matches_dense_grid_on_two_beam_instance() {
        // grid the subproblem objective over (y1, y2) with t set to the
        // clamped shortfall; the solver must land within 0.1% of the best cell
        let mut cfg = toy_cfg(2, 1);
        cfg.weight_w_bps_per_watt = 10.0e6;
        let ch = toy_channel(2, 1, &[3e-12, 2e-13, 3e-13, 2.5e-12], 4e-13);
        let demand = TrafficDemand {
            c_req_bps: vec![0.4e9, 0.9e9],
            slope_r_bps: None,
        };
        let y_bar = upa_logpower(&cfg);
        let sol = solve_subproblem(&ch, &cfg, &demand, &y_bar).unwrap();
        assert!(sol.converged, "kkt = {}", sol.kkt_residual);

        let y_lo = cfg.p_floor_w.log2();
        let y_hi = cfg.p_beam_max_w.log2();
        let steps = 400;
        let mut best = f64::INFINITY;
        for a in 0..steps {
            let y1 = y_lo + (y_hi - y_lo) * a as f64 / (steps - 1) as f64;
            for b in 0..steps {
                let y2 = y_lo + (y_hi - y_lo) * b as f64 / (steps - 1) as f64;
                if y1.exp2() + y2.exp2() > cfg.p_tot_max_w {
                    continue;
                }
                let y = LogPower::from_vec(2, 1, vec![y1, y2]).unwrap();
                let mut f = cfg.weight_w_bps_per_watt / 1e6 * (y1.exp2() + y2.exp2());
                for i in 0..2 {
                    let c = linearize_capacity(&y, &y_bar, &ch, &cfg, i);
                    f += (demand.c_req_bps[i] - c).max(0.0) / 1e6;
                }
                best = best.min(f);
            }
        }
        let rel = (sol.objective_value - best).abs() / best;
        assert!(
            rel < 1e-3,
            "solver {} vs grid best {} (rel {rel})",
            sol.objective_value,
            best
        );
        // the solver is a global minimizer: it must not sit above the grid
        assert!(sol.objective_value <= best * (1.0 + 1e-6));
    }

    #[test]
    fn solution_feasible_for_original_problem() {
        // under-estimation makes the subproblem solution feasible for the
        // true epigraph set
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..10 {
            let n = 3;
            let gains: Vec<f64> = (0..n * n)
                .map(|idx| {
                    let diag = idx / n == idx % n;
                    let base: f64 = rng.random_range(5e-13..5e-12);
                    if diag { base * 10.0 } else { base * 0.1 }
                })
                .collect();
            let mut cfg = toy_cfg(n, 2);
            cfg.weight_w_bps_per_watt = rng.random_range(0.0..20.0e6);
            let ch = toy_channel(n, 2, &gains, 4e-13);
            let demand = problem::demand_from_slope(rng.random_range(0.05e9..0.5e9), n);
            let sol = solve_subproblem(&ch, &cfg, &demand, &upa_logpower(&cfg)).unwrap();
            assert!(sol.converged, "trial {trial}: kkt = {}", sol.kkt_residual);

            let p = sol.y_star.to_allocation();
            assert!(problem::is_feasible(&p, &cfg).feasible);
            for i in 0..n {
                let c = problem::capacity(&p, &ch, &cfg, i);
                assert!(
                    sol.t_star.t_bps[i] >= demand.c_req_bps[i] - c - 1e-6 * 1e6,
                    "trial {trial}: t*_{i} violates the true shortfall"
                );
            }
        }
    }

    #[test]
    fn perturbing_optimum_does_not_improve() {
        let mut cfg = toy_cfg(2, 1);
        cfg.weight_w_bps_per_watt = 5.0e6;
        let ch = toy_channel(2, 1, &[3e-12, 2e-13, 3e-13, 2.5e-12], 4e-13);
        let demand = TrafficDemand {
            c_req_bps: vec![0.3e9, 0.6e9],
            slope_r_bps: None,
        };
        let y_bar = upa_logpower(&cfg);
        let sol = solve_subproblem(&ch, &cfg, &demand, &y_bar).unwrap();
        assert!(sol.converged);

        let eval_f = |y: &LogPower| {
            let p: f64 = y.as_slice().iter().map(|v| v.exp2()).sum();
            if p > cfg.p_tot_max_w {
                return f64::INFINITY;
            }
            for b in 0..2 {
                if y.get(b, 0).exp2() > cfg.p_beam_max_w {
                    return f64::INFINITY;
                }
            }
            let mut f = cfg.weight_w_bps_per_watt / 1e6 * p;
            for i in 0..2 {
                let c = linearize_capacity(y, &y_bar, &ch, &cfg, i);
                f += (demand.c_req_bps[i] - c).max(0.0) / 1e6;
            }
            f
        };
        let f_star = eval_f(&sol.y_star);
        for delta in [1e-3, 1e-2] {
            for dir in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0]]
            {
                let y = LogPower::from_vec(
                    2,
                    1,
                    vec![
                        sol.y_star.get(0, 0) + delta * dir[0],
                        sol.y_star.get(1, 0) + delta * dir[1],
                    ],
                )
                .unwrap();
                assert!(
                    eval_f(&y) >= f_star - 1e-6,
                    "feasible perturbation improved the objective"
                );
            }
        }
    }

    #[test]
    fn objective_midpoint_convexity() {
        // F is a sum of linear terms and exponentials
        let cfg = toy_cfg(2, 2);
        let prob_ch = toy_channel(2, 2, &[2e-12, 1e-13, 1e-13, 2e-12], 4e-13);
        let demand = problem::demand_from_slope(0.1e9, 2);
        let y_bar = upa_logpower(&cfg);
        let prob = BarrierProblem::new(&prob_ch, &cfg, &demand, &y_bar).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let za: Vec<f64> = (0..prob.nv)
                .map(|idx| {
                    if idx < prob.ny {
                        rng.random_range(-19.0..6.0)
                    } else {
                        rng.random_range(0.1..100.0)
                    }
                })
                .collect();
            let zb: Vec<f64> = (0..prob.nv)
                .map(|idx| {
                    if idx < prob.ny {
                        rng.random_range(-19.0..6.0)
                    } else {
                        rng.random_range(0.1..100.0)
                    }
                })
                .collect();
            let zm: Vec<f64> = za.iter().zip(&zb).map(|(a, b)| (a + b) / 2.0).collect();
            let f = |z: &[f64]| {
                let t: f64 = z[prob.ny..].iter().sum();
                t + prob.w_m * z[..prob.ny].iter().map(|y| y.exp2()).sum::<f64>()
            };
            assert!(f(&zm) <= (f(&za) + f(&zb)) / 2.0 + 1e-9);
        }
    }
}
