//! User admission control for infeasible QoS targets.
//!
//! When the power minimization cannot serve every user, the SINR constraints
//! are augmented with nonnegative received-power slacks `v_k` and the
//! beamformers are lifted to PSD matrices `W_k = w_k w_k^H`, giving an
//! always-feasible program whose slack pattern identifies the least
//! servable users. Both the lifted beamforming step and the phase
//! feasibility check carry their rank-one requirements as
//! difference-of-convex penalties, iterated exactly like the power-min
//! phase selection. The outer loop drops the user with the largest slack
//! until every survivor passes an arithmetic QoS re-check.
//!
//! Every RIS stays active here: admission maximizes the served head-count,
//! not the RIS power.

use crate::beamform;
use crate::conic::{leading_eigenpair, ConicProblem, ConicStatus, LinExpr, SolverTolerances};
use crate::netmodel::{
    effective_channel, sinr, ChannelRealization, RisConfiguration, SystemConfig,
};
use crate::ris_select::{
    build_lifting, extract_rank_one, minimize_network_power, recover_phases,
    spectral_subgradient, DcIterate, PowerMinParams, PowerMinResult, RisSelectError,
};
use crate::scalar::Scalar;
use crate::{CMatrix, CVector};
use nalgebra::Complex;
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdmissionError {
    #[error("conic solver failure in the admission pipeline")]
    SolverFailure,
}

/// Penalties and loop limits for the admission pipeline.
#[derive(Debug, Clone)]
pub struct AdmissionParams<T> {
    /// Slack price; `None` derives `10^3 (P_max / eta) / (K min_k gamma_k
    /// sigma_k^2)` so one unit of slack always costs more than any feasible
    /// power reallocation.
    pub slack_penalty: Option<T>,
    /// Rank penalty on the lifted beamformers; `None` derives `10^3 / eta`
    /// (dominates the per-mW power objective).
    pub rank_penalty: Option<T>,
    /// Relative tolerance of the final QoS re-check.
    pub qos_violation_tol: T,
    pub max_outer_iters: usize,
    pub max_dc_iters: usize,
    /// Relative rank-gap target for accepting lifted solutions.
    pub rank_gap_tol_rel: T,
    /// Stall tolerance for the DC objectives (mW scale).
    pub objective_stall_tol: T,
}

impl<T: Scalar> Default for AdmissionParams<T> {
    fn default() -> Self {
        Self {
            slack_penalty: None,
            rank_penalty: None,
            qos_violation_tol: T::c(1e-3),
            max_outer_iters: 8,
            max_dc_iters: 20,
            rank_gap_tol_rel: T::c(1e-6),
            objective_stall_tol: T::c(1e-5),
        }
    }
}

impl<T: Scalar> AdmissionParams<T> {
    fn slack_price(&self, config: &SystemConfig<T>) -> T {
        self.slack_penalty.unwrap_or_else(|| {
            let gamma = config.sinr_threshold_linear();
            let noise = config.noise_mw();
            let min_req = gamma
                .iter()
                .zip(&noise)
                .map(|(&g, &n)| g * n)
                .fold(T::c(f64::INFINITY), |a, b| a.min(b))
                .max(T::c(1e-30));
            T::c(1e3) * (config.max_transmit_power_mw.max(T::one()) / config.amplifier_efficiency)
                / (T::c(config.num_users as f64) * min_req)
        })
    }

    fn rank_price(&self, config: &SystemConfig<T>) -> T {
        self.rank_penalty
            .unwrap_or_else(|| T::c(1e3) / config.amplifier_efficiency)
    }
}

/// Admitted-user set with the final solution and the drop history.
#[derive(Debug, Clone)]
pub struct AdmissionOutcome<T> {
    /// Admitted users, original indices.
    pub admitted: BTreeSet<usize>,
    /// Beamformers of the admitted users, in ascending user order.
    pub beamformers: Vec<CVector<T>>,
    pub ris: RisConfiguration<T>,
    /// Per outer round: `(user, slack)` pairs in original indices.
    pub slack_history: Vec<Vec<(usize, f64)>>,
    /// Users removed, in drop order.
    pub dropped_order: Vec<usize>,
    pub dc_logs: Vec<Vec<DcIterate>>,
}

impl<T: Scalar> AdmissionOutcome<T> {
    pub fn summary(&self) -> AdmissionSummary {
        AdmissionSummary {
            admitted: self.admitted.iter().copied().collect(),
            dropped_order: self.dropped_order.clone(),
            slack_history: self
                .slack_history
                .iter()
                .map(|round| round.iter().map(|&(u, v)| SlackEntry { user: u, slack: v }).collect())
                .collect(),
        }
    }
}

/// JSON-facing view of an admission run.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissionSummary {
    pub admitted: Vec<usize>,
    pub dropped_order: Vec<usize>,
    pub slack_history: Vec<Vec<SlackEntry>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlackEntry {
    pub user: usize,
    pub slack: f64,
}

/// Slack-augmented lifted beamforming solution.
#[derive(Debug, Clone)]
pub struct SlackBeamforming<T> {
    /// Rank-one extractions of the lifted beamformers.
    pub vectors: Vec<CVector<T>>,
    /// Received-power slacks, linear mW-product units.
    pub slacks: Vec<T>,
    /// Final DC objective (power + slack + rank terms, RIS power included).
    pub objective: T,
    pub log: Vec<DcIterate>,
    /// Worst relative rank gap among the lifted beamformers.
    pub max_rank_gap_rel: T,
}

/// Solve the slack-augmented beamforming step for fixed phases.
///
/// The lifted program is always feasible (`W_k = 0` with slacks covering
/// every requirement); rank-one structure is driven by the DC penalty and
/// the per-user beamformers are read off the leading eigenpairs.
pub fn solve_beamforming_slack<T: Scalar>(
    channels: &ChannelRealization<T>,
    ris: &RisConfiguration<T>,
    config: &SystemConfig<T>,
    params: &AdmissionParams<T>,
) -> Result<SlackBeamforming<T>, AdmissionError> {
    let m = config.num_antennas;
    let k_users = config.num_users;
    let gamma = config.sinr_threshold_linear();
    let noise = config.noise_mw();
    let delta = params.slack_price(config);
    let zeta = params.rank_price(config);
    let ris_const: T = ris.active.iter().map(|&l| config.ris_power_mw(l)).sum();

    let h_mats: Vec<CMatrix<T>> = (0..k_users)
        .map(|k| {
            let h = effective_channel(channels, ris, k);
            &h * h.adjoint()
        })
        .collect();

    // slacks are normalized by gamma_k sigma_k^2 inside the solver so the
    // constraint matrix stays near unit scale
    let slack_unit: Vec<T> = (0..k_users).map(|k| gamma[k] * noise[k]).collect();

    let mut subgradients: Vec<Option<CMatrix<T>>> = vec![None; k_users];
    let mut log: Vec<DcIterate> = Vec::new();
    let mut prev_obj: Option<T> = None;
    let mut best: Option<SlackBeamforming<T>> = None;

    for iter in 1..=params.max_dc_iters {
        let mut p = ConicProblem::<T>::new();
        let w_blocks: Vec<_> = (0..k_users)
            .map(|k| p.add_hermitian_psd_block(&format!("W_{k}"), m))
            .collect();
        let v_block = p.add_block("v", k_users);
        for k in 0..k_users {
            p.add_nonneg(LinExpr::var(v_block.start + k));
        }

        // C5 rows scaled by the per-user noise
        for k in 0..k_users {
            let mut e = w_blocks[k].inner_product_expr(&h_mats[k]);
            e.push(v_block.start + k, slack_unit[k]);
            let mut rhs = LinExpr::zero();
            for j in 0..k_users {
                if j != k {
                    rhs.add_expr(&w_blocks[j].inner_product_expr(&h_mats[k]));
                }
            }
            rhs.add_constant(noise[k]);
            e.add_expr(&rhs.scaled(-gamma[k]));
            p.add_nonneg(e.scaled(noise[k].recip()));
        }

        // power budget
        let mut budget = LinExpr::constant(config.max_transmit_power_mw);
        for wb in &w_blocks {
            budget.add_expr(&wb.trace_expr::<T>().scaled(-T::one()));
        }
        p.add_nonneg(budget);

        // objective: power + slack price + linearized rank penalty
        for (k, wb) in w_blocks.iter().enumerate() {
            p.add_objective_expr(
                &wb.trace_expr::<T>()
                    .scaled(config.amplifier_efficiency.recip() + zeta),
            );
            p.add_objective_term(v_block.start + k, delta * slack_unit[k]);
            if let Some(y) = &subgradients[k] {
                p.add_objective_expr(&wb.inner_product_expr(y).scaled(-zeta));
            }
        }

        let sol = p.solve(SolverTolerances::default());
        if sol.status != ConicStatus::Optimal {
            break;
        }

        let mut vectors = Vec::with_capacity(k_users);
        let mut slacks = Vec::with_capacity(k_users);
        let mut power = T::zero();
        let mut rank_term = T::zero();
        let mut max_gap_rel = T::zero();
        for (k, wb) in w_blocks.iter().enumerate() {
            let w_mat = wb.decode(&sol.x);
            let trace = w_mat.trace().re;
            let (l1, u1) = leading_eigenpair(&w_mat);
            let gap = (trace - l1).max(T::zero());
            rank_term += gap;
            if trace > T::c(1e-12) {
                max_gap_rel = max_gap_rel.max(gap / trace);
            }
            power += trace;
            vectors.push(u1 * Complex::new(l1.max(T::zero()).sqrt(), T::zero()));
            slacks.push(sol.x[v_block.start + k] * slack_unit[k]);
            subgradients[k] = Some(spectral_subgradient(&w_mat));
        }
        let slack_cost: T = slacks.iter().copied().sum::<T>() * delta;
        let objective =
            power / config.amplifier_efficiency + ris_const + slack_cost + zeta * rank_term;
        log.push(DcIterate {
            iter,
            objective: objective.to_f64().unwrap_or(f64::NAN),
            rank_gap: rank_term.to_f64().unwrap_or(f64::NAN),
            step_sq: f64::NAN,
            rho: zeta.to_f64().unwrap_or(f64::NAN),
            solver_status: format!("{:?}", sol.status),
        });
        let current = SlackBeamforming {
            vectors,
            slacks,
            objective,
            log: Vec::new(),
            max_rank_gap_rel: max_gap_rel,
        };
        let improved = best.as_ref().map_or(true, |b| objective <= b.objective);
        if improved {
            best = Some(current);
        }
        if let Some(po) = prev_obj {
            if po - objective < params.objective_stall_tol {
                break;
            }
        }
        prev_obj = Some(objective);
    }

    let mut out = best.ok_or(AdmissionError::SolverFailure)?;
    out.log = log;
    Ok(out)
}

/// Outcome of the slack-aware phase feasibility check.
#[derive(Debug, Clone)]
pub enum PhaseFeasibility<T> {
    /// Rank-one (within tolerance) unit-diagonal solution; stacked phases.
    Feasible { stacked: CVector<T>, log: Vec<DcIterate> },
    /// The DC iterations ended above the rank-gap target; phases are the
    /// best-effort projection and must pass a re-check before use.
    Approximate { stacked: CVector<T>, log: Vec<DcIterate> },
    /// Certificate that no relaxed phase configuration fits the slacks.
    Infeasible,
    SolverFailure,
}

/// Check whether phases exist that meet every slack-relaxed SINR constraint,
/// by DC iterations on the unit-diagonal lifted matrix.
pub fn solve_phase_feasibility_slack<T: Scalar>(
    channels: &ChannelRealization<T>,
    vectors: &[CVector<T>],
    slacks: &[T],
    config: &SystemConfig<T>,
    params: &AdmissionParams<T>,
) -> PhaseFeasibility<T> {
    let lifting = build_lifting(channels, vectors);
    let n = lifting.n_total;
    if n == 0 {
        return PhaseFeasibility::Feasible { stacked: CVector::zeros(0), log: Vec::new() };
    }
    let gamma = config.sinr_threshold_linear();
    let noise = config.noise_mw();
    let k_users = config.num_users;

    // the slack-relaxed constraints are often already met by the all-ones
    // phases (large slacks make them vacuous); test the incumbent first
    let ones_stacked = CVector::from_element(n, Complex::new(T::one(), T::zero()));
    let incumbent_ok = (0..k_users).all(|k| {
        let sig = lifting.received_power(&ones_stacked, k, k) + slacks[k];
        let mut int = T::zero();
        for j in 0..k_users {
            if j != k {
                int += lifting.received_power(&ones_stacked, k, j);
            }
        }
        sig >= gamma[k] * (int + noise[k])
    });
    if incumbent_ok {
        return PhaseFeasibility::Feasible { stacked: ones_stacked, log: Vec::new() };
    }

    // all-ones rank-one start
    let ones = CVector::from_element(n + 1, Complex::new(T::one(), T::zero()));
    let mut theta_prev: CMatrix<T> = &ones * ones.adjoint();
    let mut log: Vec<DcIterate> = Vec::new();
    let mut best: Option<(T, CMatrix<T>)> = None;
    let mut prev_obj: Option<T> = None;

    for iter in 1..=params.max_dc_iters {
        let y = spectral_subgradient(&theta_prev);
        let mut p = ConicProblem::<T>::new();
        let theta = p.add_hermitian_psd_block("Theta_check", n + 1);
        for i in 0..=n {
            let mut e = LinExpr::var(theta.diag_index(i));
            e.add_constant(-T::one());
            p.add_eq(e);
        }
        for k in 0..k_users {
            let mut e = theta.inner_product_expr(&lifting.r_matrix(k, k));
            e.add_constant(lifting.b[k][k].norm_sqr() + slacks[k]);
            let mut rhs = LinExpr::zero();
            for j in 0..k_users {
                if j != k {
                    rhs.add_expr(&theta.inner_product_expr(&lifting.r_matrix(k, j)));
                    rhs.add_constant(lifting.b[k][j].norm_sqr());
                }
            }
            rhs.add_constant(noise[k]);
            e.add_expr(&rhs.scaled(-gamma[k]));
            p.add_nonneg(e.scaled((noise[k] + slacks[k]).recip()));
        }
        p.add_objective_expr(&theta.trace_expr::<T>());
        p.add_objective_expr(&theta.inner_product_expr(&y).scaled(-T::one()));

        let sol = p.solve(SolverTolerances::default());
        match sol.status {
            ConicStatus::Optimal => {}
            ConicStatus::PrimalInfeasible => return PhaseFeasibility::Infeasible,
            _ => {
                return match best {
                    Some(_) => finish_phase(best, &lifting, params, log, false),
                    None => PhaseFeasibility::SolverFailure,
                }
            }
        }
        let theta_mat = theta.decode(&sol.x);
        let trace = theta_mat.trace().re;
        let (l1, _) = leading_eigenpair(&theta_mat);
        let gap = (trace - l1).max(T::zero());
        log.push(DcIterate {
            iter,
            objective: gap.to_f64().unwrap_or(f64::NAN),
            rank_gap: gap.to_f64().unwrap_or(f64::NAN),
            step_sq: (&theta_mat - &theta_prev).norm_squared().to_f64().unwrap_or(f64::NAN),
            rho: 1.0,
            solver_status: format!("{:?}", sol.status),
        });
        if best.as_ref().map_or(true, |(g, _)| gap < *g) {
            best = Some((gap, theta_mat.clone()));
        }
        let rank_ok = gap <= params.rank_gap_tol_rel * trace.max(T::c(1e-30));
        if rank_ok {
            return finish_phase(best, &lifting, params, log, true);
        }
        if let Some(po) = prev_obj {
            if po - gap < params.objective_stall_tol {
                return finish_phase(best, &lifting, params, log, false);
            }
        }
        prev_obj = Some(gap);
        theta_prev = theta_mat;
    }
    finish_phase(best, &lifting, params, log, false)
}

fn finish_phase<T: Scalar>(
    best: Option<(T, CMatrix<T>)>,
    lifting: &crate::ris_select::LiftedData<T>,
    params: &AdmissionParams<T>,
    log: Vec<DcIterate>,
    rank_ok: bool,
) -> PhaseFeasibility<T> {
    let Some((_, theta_mat)) = best else {
        return PhaseFeasibility::SolverFailure;
    };
    let ext = extract_rank_one(&theta_mat, params.rank_gap_tol_rel);
    let Ok(raw) = recover_phases(&ext.vector) else {
        return PhaseFeasibility::SolverFailure;
    };
    let stacked = CVector::from_fn(lifting.n_total, |i, _| {
        let z = raw[i];
        let m = z.norm_sqr().sqrt();
        if m > T::zero() {
            z / Complex::new(m, T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        }
    });
    if rank_ok {
        PhaseFeasibility::Feasible { stacked, log }
    } else {
        PhaseFeasibility::Approximate { stacked, log }
    }
}

/// Result of the inner slack alternation.
#[derive(Debug, Clone)]
pub struct SlackAlternation<T> {
    pub vectors: Vec<CVector<T>>,
    pub slacks: Vec<T>,
    pub ris: RisConfiguration<T>,
    pub dc_logs: Vec<Vec<DcIterate>>,
    pub objective_per_round: Vec<f64>,
}

/// Alternate the slack beamforming step and the phase feasibility check
/// until the beamforming objective stalls or the phase check certifies
/// infeasibility (all RIS active throughout).
pub fn run_algorithm2<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &AdmissionParams<T>,
) -> Result<SlackAlternation<T>, AdmissionError> {
    let mut ris = RisConfiguration::all_active_unit(config);
    let mut dc_logs = Vec::new();
    let mut objective_per_round = Vec::new();
    let mut state: Option<(Vec<CVector<T>>, Vec<T>)> = None;
    let mut prev_obj: Option<T> = None;

    for _round in 1..=params.max_outer_iters {
        let beam = solve_beamforming_slack(channels, &ris, config, params)?;
        dc_logs.push(beam.log.clone());
        objective_per_round.push(beam.objective.to_f64().unwrap_or(f64::NAN));
        state = Some((beam.vectors.clone(), beam.slacks.clone()));

        let stalled =
            prev_obj.map_or(false, |po| po - beam.objective < params.objective_stall_tol);
        prev_obj = Some(beam.objective);

        if config.num_ris > 0 {
            match solve_phase_feasibility_slack(
                channels,
                &beam.vectors,
                &beam.slacks,
                config,
                params,
            ) {
                PhaseFeasibility::Feasible { stacked, log }
                | PhaseFeasibility::Approximate { stacked, log } => {
                    dc_logs.push(log);
                    let ranges = build_lifting(channels, &beam.vectors).element_ranges;
                    for (l, range) in ranges.iter().enumerate() {
                        ris.phases[l] = CVector::from_fn(range.len(), |i, _| {
                            stacked[range.start + i].conj()
                        });
                    }
                }
                PhaseFeasibility::Infeasible => break,
                PhaseFeasibility::SolverFailure => break,
            }
        }
        if stalled {
            break;
        }
    }

    let (vectors, slacks) = state.ok_or(AdmissionError::SolverFailure)?;
    Ok(SlackAlternation { vectors, slacks, ris, dc_logs, objective_per_round })
}

/// Restriction of a config to a user subset (channel restriction lives on
/// [`ChannelRealization::restrict_users`]).
pub fn restrict_config<T: Scalar>(config: &SystemConfig<T>, users: &[usize]) -> SystemConfig<T> {
    let mut cfg = config.clone();
    cfg.num_users = users.len();
    cfg.sinr_threshold_db = users.iter().map(|&k| config.sinr_threshold_db[k]).collect();
    cfg.noise_power_dbm = users.iter().map(|&k| config.noise_power_dbm[k]).collect();
    cfg
}

/// Drop-loop admission control: run the slack alternation on the candidate
/// set, re-check every user's QoS arithmetically, and remove the user with
/// the largest slack (lowest index on ties) until the survivors all pass.
pub fn admission_control<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &AdmissionParams<T>,
) -> Result<AdmissionOutcome<T>, AdmissionError> {
    let mut candidates: Vec<usize> = (0..config.num_users).collect();
    let mut dropped_order = Vec::new();
    let mut slack_history = Vec::new();
    let mut dc_logs = Vec::new();
    let mut final_state: Option<(Vec<CVector<T>>, RisConfiguration<T>)> = None;

    while !candidates.is_empty() {
        let sub_channels = channels.restrict_users(&candidates);
        let sub_config = restrict_config(config, &candidates);
        let alg2 = run_algorithm2(&sub_channels, &sub_config, params)?;
        dc_logs.extend(alg2.dc_logs.clone());
        slack_history.push(
            candidates
                .iter()
                .zip(&alg2.slacks)
                .map(|(&u, &v)| (u, v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        );

        let achieved = sinr(&sub_channels, &alg2.ris, &alg2.vectors, &sub_config);
        let gamma = sub_config.sinr_threshold_linear();
        let tol = T::one() - params.qos_violation_tol;
        let all_ok = achieved.iter().zip(&gamma).all(|(&s, &g)| s >= g * tol);
        if all_ok {
            final_state = Some((alg2.vectors, alg2.ris));
            break;
        }

        // drop the user with the largest slack (ties: lowest original index)
        let mut worst = 0usize;
        for i in 1..candidates.len() {
            if alg2.slacks[i] > alg2.slacks[worst] {
                worst = i;
            }
        }
        dropped_order.push(candidates.remove(worst));
    }

    let admitted: BTreeSet<usize> = candidates.iter().copied().collect();
    let (beamformers, ris) = match final_state {
        Some((v, r)) => (v, r),
        None => (Vec::new(), RisConfiguration::all_active_unit(config)),
    };
    Ok(AdmissionOutcome { admitted, beamformers, ris, slack_history, dropped_order, dc_logs })
}

/// Unified dispatcher outcome: either the power minimization succeeded for
/// the full user set, or admission control ran (with an optional power-min
/// refinement on the admitted subset).
#[derive(Debug, Clone)]
pub enum UnifiedOutcome<T> {
    PowerMin(PowerMinResult<T>),
    Admission {
        outcome: AdmissionOutcome<T>,
        refined: Option<PowerMinResult<T>>,
    },
}

/// Power minimization first; admission control on infeasibility, then power
/// minimization again restricted to the admitted users.
pub fn unified_entry<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    power_params: &PowerMinParams<T>,
    admission_params: &AdmissionParams<T>,
) -> Result<UnifiedOutcome<T>, AdmissionError> {
    match minimize_network_power(channels, config, power_params) {
        Ok(result) => Ok(UnifiedOutcome::PowerMin(result)),
        Err(RisSelectError::Infeasible) | Err(RisSelectError::SolverFailure) => {
            let outcome = admission_control(channels, config, admission_params)?;
            let refined = if outcome.admitted.is_empty() {
                None
            } else {
                let users: Vec<usize> = outcome.admitted.iter().copied().collect();
                let sub_channels = channels.restrict_users(&users);
                let sub_config = restrict_config(config, &users);
                minimize_network_power(&sub_channels, &sub_config, power_params).ok()
            };
            Ok(UnifiedOutcome::Admission { outcome, refined })
        }
        Err(_) => Err(AdmissionError::SolverFailure),
    }
}

#[doc(hidden)]
pub fn reference_power<T: Scalar>(
    channels: &ChannelRealization<T>,
    ris: &RisConfiguration<T>,
    config: &SystemConfig<T>,
) -> Option<T> {
    let sol = beamform::solve_beamforming(channels, ris, config);
    sol.is_optimal().then_some(sol.transmit_power_mw)
}

#[cfg(test)]
mod tests;
