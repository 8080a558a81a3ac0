//! Outer minorize-maximize / ADMM loop over `(W, phi, psi, lambda)`.
//!
//! Every outer iteration rebuilds the surrogate at the current `(W, phi)`
//! and performs one pass of the four block updates. Subproblem objectives
//! are expressed in linear radar-SNR units, `(L / sigma_z^2)` times the
//! surrogate, so the penalty weight `rho` is measured against SNR.

use std::time::Instant;

use crate::channel::ChannelSet;
use crate::config_io::ScenarioConfig;
use crate::signal::{comm_sinr, effective_user_channel, radar_snr};
use crate::subsolver::{
    solve, BallConstraint, ConvexSubproblem, Proximal, QuadConstraint, Segment, SolveStatus, SubsolveResult,
};
use crate::surrogate::{build_surrogate, phi_linear_coeff, SurrogatePoint};
use crate::{CMat, CVec, Error, Result, C64};

/// Distance from the unit circle used when a unit-modulus vector has to
/// serve as a strictly feasible warm start.
const INTERIOR_SHRINK: f64 = 1e-6;
/// Consensus threshold `||phi - psi||_inf` for termination.
const CONSENSUS_TOL: f64 = 1e-3;
/// Allowed SINR shortfall (linear) of a returned solution.
const SINR_SLACK: f64 = 1e-6;
/// Relative SINR margin the zero-forcing start aims for.
const ZF_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerState {
    /// `M x (K+M)`, user beams first.
    pub w: CMat,
    pub phi: CVec,
    pub psi: CVec,
    pub lambda: CVec,
    pub iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub snr_linear: f64,
    pub snr_db: f64,
    /// `min_k 10 log10(SINR_k / Gamma_k)`; `+inf` without users.
    pub min_sinr_margin_db: f64,
    /// `||phi - psi||_2`.
    pub consensus_gap: f64,
    pub al_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterStatus {
    Converged,
    MaxIterations,
}

/// Which point was returned after snapping `phi` onto `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalPoint {
    Snapped,
    LastFeasible,
    Repaired,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub records: Vec<IterRecord>,
    pub status: OuterStatus,
    pub final_point: FinalPoint,
    /// Radar SNR (linear) of the returned solution.
    pub final_snr: f64,
    /// Subproblem solves that hit the step cap (their result was still used).
    pub inner_max_iters: usize,
    pub inner_iterations: usize,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn snr_db_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.snr_db).collect()
    }

    pub fn final_snr_db(&self) -> f64 {
        10.0 * self.final_snr.log10()
    }
}

fn snr_scale(cfg: &ScenarioConfig) -> f64 {
    cfg.l as f64 / cfg.sigma_z_sq()
}

fn check(res: &SubsolveResult, counters: &mut (usize, usize)) -> Result<()> {
    counters.1 += res.iterations;
    match res.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::MaxIters => {
            counters.0 += 1;
            Ok(())
        }
        SolveStatus::Infeasible => Err(Error::Subsolver(res.status)),
    }
}

/// The `W` subproblem at fixed `phi`: maximise the SNR-scaled surrogate
/// over `vec(W)` (column-major) subject to the surrogate SINR constraints,
/// each divided by its `c4`, and the power ball.
pub fn w_subproblem(sp: &SurrogatePoint, phi: &CVec, cfg: &ScenarioConfig) -> ConvexSubproblem {
    let m = cfg.m;
    let s = cfg.streams();
    let coeff = sp.w_coefficient(phi) * C64::new(2.0 * snr_scale(cfg), 0.0);
    let mut linear = Vec::with_capacity(m * s);
    for j in 0..s {
        for i in 0..m {
            linear.push(coeff[(j, i)].conj());
        }
    }
    let mut p = ConvexSubproblem::new(linear);
    for k in 0..cfg.k {
        let hc: Vec<C64> = sp.effective_channel(k, phi).iter().map(|z| z.conj()).collect();
        let c4 = sp.c4[k];
        let lin = hc.iter().map(|z| z * (sp.c3[k] / c4)).collect();
        let row: Vec<C64> = hc.iter().map(|z| z / c4.sqrt()).collect();
        p.constraints.push(QuadConstraint {
            linear: vec![Segment::new(k * m, lin)],
            factors: (0..s).filter(|&j| j != k).map(|j| Segment::new(j * m, row.clone())).collect(),
            offset: -1.0,
        });
    }
    p.balls.push(BallConstraint {
        start: 0,
        len: m * s,
        radius: cfg.power_w.sqrt(),
    });
    p
}

/// The `phi` subproblem at fixed `W`: SNR-scaled surrogate minus the
/// augmented-Lagrangian penalty `(rho/2)||phi - psi + lambda/rho||^2`,
/// subject to the surrogate SINR constraints and `|phi_n| <= 1`.
pub fn phi_subproblem(
    sp: &SurrogatePoint,
    w: &CMat,
    psi: &CVec,
    lambda: &CVec,
    cfg: &ScenarioConfig,
) -> ConvexSubproblem {
    let ch = &sp.channels;
    let n = ch.n();
    let rho = cfg.solver.rho;
    let (v, _) = phi_linear_coeff(sp, w);
    let scale = 2.0 * snr_scale(cfg);
    let mut p = ConvexSubproblem::new(v.iter().map(|z| z * scale).collect());
    p.proximal = Some(Proximal {
        center: psi.iter().zip(lambda.iter()).map(|(a, l)| a - l / rho).collect(),
        weight: rho,
    });
    let gw = &ch.g * w;
    for k in 0..cfg.k {
        let b = ch.h_dk[k].transpose() * w;
        let e: Vec<CVec> = (0..cfg.streams()).map(|j| ch.h_rk[k].component_mul(&gw.column(j))).collect();
        let c4 = sp.c4[k];
        let c3 = sp.c3[k];
        let mut lin: Vec<C64> = e[k].iter().map(|z| z.conj() * c3).collect();
        let mut offset = c3 * b[k].re - c4;
        let mut factors = Vec::new();
        for j in (0..cfg.streams()).filter(|&j| j != k) {
            for (l, z) in lin.iter_mut().zip(e[j].iter()) {
                *l -= b[j] * z.conj() * 2.0;
            }
            offset -= b[j].norm_sqr();
            factors.push(Segment::new(0, e[j].iter().map(|z| z.conj() / c4.sqrt()).collect()));
        }
        p.constraints.push(QuadConstraint {
            linear: vec![Segment::new(0, lin.iter().map(|z| z / c4).collect())],
            factors,
            offset: offset / c4,
        });
    }
    for i in 0..n {
        p.balls.push(BallConstraint {
            start: i,
            len: 1,
            radius: 1.0,
        });
    }
    p
}

fn unvec(x: &[C64], m: usize, s: usize) -> CMat {
    CMat::from_column_slice(m, s, x)
}

fn solve_w(sp: &SurrogatePoint, phi: &CVec, cfg: &ScenarioConfig, counters: &mut (usize, usize)) -> Result<CMat> {
    let prob = w_subproblem(sp, phi, cfg);
    let res = solve(&prob, Some(sp.w_t.as_slice()), cfg.solver.tol_inner);
    check(&res, counters)?;
    Ok(unvec(&res.solution, cfg.m, cfg.streams()))
}

/// New `W` maximising the surrogate at `state.phi`; warm-started at the
/// expansion point, so the surrogate objective never decreases.
pub fn update_w(state: &BeamformerState, sp: &SurrogatePoint, cfg: &ScenarioConfig, channels: &ChannelSet) -> Result<CMat> {
    debug_assert_eq!(channels.m(), cfg.m);
    solve_w(sp, &state.phi, cfg, &mut (0, 0))
}

/// New `phi` from the proximal surrogate step at `state.w`, warm-started at
/// `state.phi`.
pub fn update_phi(state: &BeamformerState, sp: &SurrogatePoint, cfg: &ScenarioConfig, channels: &ChannelSet) -> Result<CVec> {
    let mut counters = (0, 0);
    phi_step(state, sp, cfg, channels, &mut counters)
}

fn phi_step(
    state: &BeamformerState,
    sp: &SurrogatePoint,
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    counters: &mut (usize, usize),
) -> Result<CVec> {
    if channels.n() == 0 {
        return Ok(CVec::zeros(0));
    }
    let prob = phi_subproblem(sp, &state.w, &state.psi, &state.lambda, cfg);
    let res = solve(&prob, Some(state.phi.as_slice()), cfg.solver.tol_inner);
    check(&res, counters)?;
    Ok(CVec::from_vec(res.solution))
}

/// `psi = exp(j arg(rho phi + lambda))`, with `1` where the argument is zero.
pub fn update_psi(phi: &CVec, lambda: &CVec, rho: f64) -> CVec {
    phi.zip_map(lambda, |p, l| {
        let z = p * rho + l;
        let r = z.norm();
        if r == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            z / r
        }
    })
}

/// `lambda + rho (phi - psi)`.
pub fn update_lambda(lambda: &CVec, phi: &CVec, psi: &CVec, rho: f64) -> CVec {
    lambda + (phi - psi) * C64::new(rho, 0.0)
}

/// `min_k 10 log10(SINR_k / Gamma_k)`.
pub fn min_sinr_margin_db(w: &CMat, phi: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> f64 {
    (0..cfg.k)
        .map(|k| 10.0 * (comm_sinr(k, w, phi, cfg, channels) / cfg.gamma_linear(k)).log10())
        .fold(f64::INFINITY, f64::min)
}

/// True SINR constraints within `SINR_SLACK` and the power budget.
pub fn is_feasible(w: &CMat, phi: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> bool {
    w.norm_squared() <= cfg.power_w + 1e-8
        && (0..cfg.k).all(|k| comm_sinr(k, w, phi, cfg, channels) >= cfg.gamma_linear(k) - SINR_SLACK)
}

/// Zero-forcing heuristic at `phi`: user `k` gets the pseudo-inverse
/// column scaled to `gamma_k (1 + margin)` times the noise, the radar columns
/// split the remaining power over the null space of the user channels.
/// `None` when the user beams alone exceed the budget or the channels are
/// rank deficient.
pub fn zero_forcing_start(cfg: &ScenarioConfig, channels: &ChannelSet, phi: &CVec, gamma_scale: f64) -> Option<CMat> {
    let (m, k) = (cfg.m, cfg.k);
    let budget = cfg.power_w * (1.0 - 1e-3);
    let mut w = CMat::zeros(m, k + m);
    let mut used = 0.0;
    let proj = if k > 0 {
        let h = CMat::from_fn(k, m, |r, c| effective_user_channel(r, phi, channels)[c]);
        let gram = &h * h.adjoint();
        let inv = gram.try_inverse()?;
        let pinv = h.adjoint() * inv;
        for u in 0..k {
            let p = gamma_scale * cfg.gamma_linear(u) * (1.0 + ZF_MARGIN) * cfg.sigma_k_sq();
            let col = pinv.column(u) * C64::new(p.sqrt(), 0.0);
            used += col.norm_squared();
            w.set_column(u, &col);
        }
        CMat::identity(m, m) - &pinv * h
    } else {
        CMat::identity(m, m)
    };
    if !(used < budget) || m <= k {
        return (used < budget).then_some(w);
    }
    let radar = &proj * C64::new(((budget - used) / (m - k) as f64).sqrt(), 0.0);
    w.columns_mut(k, m).copy_from(&radar);
    Some(w)
}

/// Initial `W` for a fixed `phi`: one surrogate `W` step around the
/// zero-forcing start. Requirements that zero forcing cannot meet are
/// relaxed and tightened geometrically back over at most five restarts.
pub fn initial_w(cfg: &ScenarioConfig, channels: &ChannelSet, phi: &CVec) -> Result<CMat> {
    let mut counters = (0, 0);
    initial_w_counted(cfg, channels, phi, &mut counters)
}

fn initial_w_counted(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    phi: &CVec,
    counters: &mut (usize, usize),
) -> Result<CMat> {
    if let Some(w0) = zero_forcing_start(cfg, channels, phi, 1.0) {
        let sp = build_surrogate(&w0, phi, cfg, channels);
        return solve_w(&sp, phi, cfg, counters);
    }
    // largest requirement scale zero forcing can still afford
    let probe = zero_forcing_cost(cfg, channels, phi).ok_or(Error::InfeasibleStart)?;
    let beta = (0.9 * cfg.power_w / probe).min(1.0);
    let w = zero_forcing_start(cfg, channels, phi, beta).ok_or(Error::InfeasibleStart)?;
    tighten(cfg, channels, phi, w, beta, counters).ok_or(Error::InfeasibleStart)
}

/// Surrogate `W` steps with every requirement scaled by `beta`, feasible at
/// `w`, raised geometrically back to the full requirement.
fn tighten(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    phi: &CVec,
    mut w: CMat,
    mut beta: f64,
    counters: &mut (usize, usize),
) -> Option<CMat> {
    for restart in 0..5 {
        beta = if restart == 4 { 1.0 } else { beta.sqrt() };
        let mut relaxed = cfg.clone();
        let shift = 10.0 * beta.log10();
        relaxed.gamma_db = cfg.gamma_db.iter().map(|g| g + shift).collect();
        let sp = build_surrogate(&w, phi, &relaxed, channels);
        let prob = w_subproblem(&sp, phi, &relaxed);
        let res = solve(&prob, Some(sp.w_t.as_slice()), cfg.solver.tol_inner);
        if res.status == SolveStatus::Infeasible {
            return None;
        }
        counters.1 += res.iterations;
        w = unvec(&res.solution, cfg.m, cfg.streams());
    }
    is_feasible(&w, phi, cfg, channels).then_some(w)
}

/// Restores true feasibility of `w` at `phi` with the `W` step alone.
fn repair_w(cfg: &ScenarioConfig, channels: &ChannelSet, w: &CMat, phi: &CVec, counters: &mut (usize, usize)) -> Option<CMat> {
    let sp = build_surrogate(w, phi, cfg, channels);
    let res = solve(&w_subproblem(&sp, phi, cfg), Some(sp.w_t.as_slice()), cfg.solver.tol_inner);
    counters.1 += res.iterations;
    if res.status != SolveStatus::Infeasible {
        let fixed = unvec(&res.solution, cfg.m, cfg.streams());
        if is_feasible(&fixed, phi, cfg, channels) {
            return Some(fixed);
        }
    }
    let beta = (0..cfg.k)
        .map(|k| comm_sinr(k, w, phi, cfg, channels) / cfg.gamma_linear(k))
        .fold(1.0, f64::min);
    if !(beta > 0.0) || w.norm_squared() > cfg.power_w {
        return None;
    }
    tighten(cfg, channels, phi, w.clone(), beta, counters)
}

/// Power the zero-forcing user beams need at full requirement.
fn zero_forcing_cost(cfg: &ScenarioConfig, channels: &ChannelSet, phi: &CVec) -> Option<f64> {
    let mut big = cfg.clone();
    big.power_w = f64::MAX / 4.0;
    let w = zero_forcing_start(&big, channels, phi, 1.0)?;
    Some(w.columns(0, cfg.k).norm_squared())
}

fn al_value(snr: f64, phi: &CVec, psi: &CVec, lambda: &CVec, rho: f64) -> f64 {
    let d = phi - psi;
    let lin: f64 = lambda.iter().zip(d.iter()).map(|(l, x)| (l.conj() * x).re).sum();
    snr - lin - 0.5 * rho * d.norm_squared()
}

fn inf_norm(v: &CVec) -> f64 {
    v.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Runs the alternating loop from `phi_init` (unit modulus).
pub fn optimize(cfg: &ScenarioConfig, channels: &ChannelSet, phi_init: &CVec) -> Result<(BeamformerState, SolveReport)> {
    let start = Instant::now();
    let rho = cfg.solver.rho;
    let n = channels.n();
    let mut counters = (0usize, 0usize);
    let unit: CVec = phi_init.map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) });
    let phi0 = &unit * C64::new(1.0 - INTERIOR_SHRINK, 0.0);
    let w0 = initial_w_counted(cfg, channels, &phi0, &mut counters)?;
    let mut state = BeamformerState {
        w: w0,
        phi: phi0,
        psi: unit,
        lambda: CVec::zeros(n),
        iter: 0,
    };
    let mut records: Vec<IterRecord> = Vec::new();
    let mut last_feasible: Option<(CMat, CVec)> = None;
    let mut prev_snr = radar_snr(&state.w, &state.phi, cfg, channels);
    let mut status = OuterStatus::MaxIterations;

    for it in 1..=cfg.solver.max_outer_iters {
        let sp = build_surrogate(&state.w, &state.phi, cfg, channels);
        state.w = solve_w(&sp, &state.phi, cfg, &mut counters)?;
        if n > 0 {
            state.phi = phi_step(&state, &sp, cfg, channels, &mut counters)?;
            state.psi = update_psi(&state.phi, &state.lambda, rho);
            state.lambda = update_lambda(&state.lambda, &state.phi, &state.psi, rho);
        }
        state.iter = it;

        let snr = radar_snr(&state.w, &state.phi, cfg, channels);
        let gap = &state.phi - &state.psi;
        records.push(IterRecord {
            iter: it,
            snr_linear: snr,
            snr_db: 10.0 * snr.log10(),
            min_sinr_margin_db: min_sinr_margin_db(&state.w, &state.phi, cfg, channels),
            consensus_gap: gap.norm(),
            al_value: al_value(snr, &state.phi, &state.psi, &state.lambda, rho),
        });
        if is_feasible(&state.w, &state.psi, cfg, channels) {
            last_feasible = Some((state.w.clone(), state.psi.clone()));
        }
        let rel = (snr - prev_snr).abs() / prev_snr.abs().max(f64::MIN_POSITIVE);
        prev_snr = snr;
        if rel < cfg.solver.tol_outer && inf_norm(&gap) < CONSENSUS_TOL {
            status = OuterStatus::Converged;
            break;
        }
    }

    let psi = state.psi.clone();
    let final_point = if is_feasible(&state.w, &psi, cfg, channels) {
        FinalPoint::Snapped
    } else {
        let repaired = repair_w(cfg, channels, &state.w, &psi, &mut counters).map(|w| (w, psi.clone()));
        let score = |c: &Option<(CMat, CVec)>| c.as_ref().map_or(f64::NEG_INFINITY, |(w, p)| radar_snr(w, p, cfg, channels));
        let (w, psi, tag) = if score(&repaired) >= score(&last_feasible) && repaired.is_some() {
            let (w, p) = repaired.unwrap();
            (w, p, FinalPoint::Repaired)
        } else if let Some((w, p)) = last_feasible {
            (w, p, FinalPoint::LastFeasible)
        } else {
            let (w, _, _) = w_only_loop(cfg, channels, &psi, &mut counters)?;
            (w, psi, FinalPoint::Repaired)
        };
        state.w = w;
        state.psi = psi;
        tag
    };
    state.phi = state.psi.clone();
    let final_snr = radar_snr(&state.w, &state.phi, cfg, channels);
    Ok((
        state,
        SolveReport {
            records,
            status,
            final_point,
            final_snr,
            inner_max_iters: counters.0,
            inner_iterations: counters.1,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}

fn w_only_loop(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    phi: &CVec,
    counters: &mut (usize, usize),
) -> Result<(CMat, Vec<IterRecord>, bool)> {
    let mut w = initial_w_counted(cfg, channels, phi, counters)?;
    let mut converged = false;
    let mut prev = radar_snr(&w, phi, cfg, channels);
    let mut records = Vec::new();
    for it in 1..=cfg.solver.max_outer_iters {
        let sp = build_surrogate(&w, phi, cfg, channels);
        w = solve_w(&sp, phi, cfg, counters)?;
        let snr = radar_snr(&w, phi, cfg, channels);
        records.push(IterRecord {
            iter: it,
            snr_linear: snr,
            snr_db: 10.0 * snr.log10(),
            min_sinr_margin_db: min_sinr_margin_db(&w, phi, cfg, channels),
            consensus_gap: 0.0,
            al_value: snr,
        });
        let rel = (snr - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = snr;
        if rel < cfg.solver.tol_outer {
            converged = true;
            break;
        }
    }
    Ok((w, records, converged))
}

/// Minorize-maximize over `W` alone with `phi` held fixed (the baselines).
/// Uses the same `W` step as [`optimize`].
pub fn optimize_w_only(cfg: &ScenarioConfig, channels: &ChannelSet, phi: &CVec) -> Result<(CMat, SolveReport)> {
    let start = Instant::now();
    let mut counters = (0, 0);
    let (w, records, converged) = w_only_loop(cfg, channels, phi, &mut counters)?;
    let final_snr = radar_snr(&w, phi, cfg, channels);
    Ok((
        w,
        SolveReport {
            records,
            status: if converged { OuterStatus::Converged } else { OuterStatus::MaxIterations },
            final_point: FinalPoint::Snapped,
            final_snr,
            inner_max_iters: counters.0,
            inner_iterations: counters.1,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}
