//! Joint active-RIS-set and phase-shift optimization for fixed beamformers,
//! plus the outer alternating loop of the network power minimization.
//!
//! For fixed beamformers the per-user received amplitudes are affine in the
//! stacked phase vector: `h_k^H w_j = theta~^H a~_{k,j} + b_{k,j}`. Lifting
//! `theta^ = [theta~; 1]` to the PSD matrix `Theta^ = theta^ theta^^H` turns
//! every SINR constraint into a linear trace constraint, at the price of a
//! rank-one requirement. Three routes are provided:
//!
//! * [`sdr_solve`] drops the rank constraint (semidefinite relaxation);
//! * [`dc_phase_selection`] restores it through the exact difference-of-convex
//!   penalty `rho (Tr - ||.||_2)`, iterating linearized convex subproblems
//!   with spectral-norm subgradients;
//! * [`binary_search_active_set`] recovers a binary on/off set from the
//!   relaxed activity variables by deactivating the smallest-activity prefix
//!   that keeps a conic feasibility check alive.
//!
//! [`minimize_network_power`] alternates the beamforming SOCP with the phase
//! and set selection until the network power stalls.

use crate::beamform;
use crate::conic::{
    leading_eigenpair, ConicProblem, ConicStatus, HermitianBlock, LinExpr,
    SolverTolerances,
};
use crate::netmodel::{
    network_power, sinr, BeamformingSolution, BeamformingStatus, ChannelRealization,
    PowerBreakdown, RisConfiguration, SystemConfig,
};
use crate::scalar::{complex_normal, Scalar};
use crate::{CMatrix, CVector};
use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeSet;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RisSelectError {
    /// No phase configuration can satisfy the QoS targets for the fixed
    /// beamformers (certificate-backed; triggers admission control upstream).
    #[error("phase/set selection infeasible for the given beamformers")]
    Infeasible,
    /// The last entry of the lifted vector vanished; phases cannot be
    /// recovered.
    #[error("degenerate lifted vector: reference entry is numerically zero")]
    DegeneratePhase,
    /// Unit-modulus projection broke feasibility even with every RIS active.
    #[error("projected phases violate the QoS re-check for every prefix")]
    ProjectionInfeasible,
    #[error("conic solver failure")]
    SolverFailure,
}

/// Lifted problem data for fixed beamformers.
#[derive(Debug, Clone)]
pub struct LiftedData<T> {
    /// `a~_{k,j}`, indexed `[k][j]`, each of length `n_total`.
    pub a_tilde: Vec<Vec<CVector<T>>>,
    /// `b_{k,j} = h_{d,k}^H w_j`, indexed `[k][j]`.
    pub b: Vec<Vec<Complex<T>>>,
    /// Element index range of each RIS inside the stacked phase vector.
    pub element_ranges: Vec<Range<usize>>,
    pub n_total: usize,
}

impl<T: Scalar> LiftedData<T> {
    pub fn num_users(&self) -> usize {
        self.a_tilde.len()
    }

    pub fn num_ris(&self) -> usize {
        self.element_ranges.len()
    }

    /// Bordered matrix `R_{k,j} = [[a a^H, a b^H], [b a^H, 0]]`.
    pub fn r_matrix(&self, k: usize, j: usize) -> CMatrix<T> {
        let n = self.n_total;
        let a = &self.a_tilde[k][j];
        let b = self.b[k][j];
        let mut r = DMatrix::from_element(n + 1, n + 1, Complex::new(T::zero(), T::zero()));
        for p in 0..n {
            for q in 0..n {
                r[(p, q)] = a[p] * a[q].conj();
            }
            r[(p, n)] = a[p] * b.conj();
            r[(n, p)] = b * a[p].conj();
        }
        r
    }

    /// `|theta~^H a~_{k,j} + b_{k,j}|^2` for a stacked phase vector.
    pub fn received_power(&self, theta: &CVector<T>, k: usize, j: usize) -> T {
        (theta.dotc(&self.a_tilde[k][j]) + self.b[k][j]).norm_sqr()
    }

    /// Per-user SINR induced by a stacked phase vector (zeros = inactive).
    pub fn sinr_from_phases(&self, theta: &CVector<T>, noise_mw: &[T]) -> Vec<T> {
        let k_users = self.num_users();
        (0..k_users)
            .map(|k| {
                let sig = self.received_power(theta, k, k);
                let mut int = T::zero();
                for j in 0..k_users {
                    if j != k {
                        int += self.received_power(theta, k, j);
                    }
                }
                sig / (int + noise_mw[k])
            })
            .collect()
    }

    /// Stacked phase vector of a [`RisConfiguration`] (inactive RIS as
    /// zeros). The stacked entries are the conjugates of the diagonal
    /// reflection coefficients: the received amplitude reads
    /// `theta~^H a + b` here versus `sum_n conj(h_n) theta_n (T w)_n` in the
    /// channel model.
    pub fn stack_phases(&self, ris: &RisConfiguration<T>) -> CVector<T> {
        let mut theta = CVector::from_element(self.n_total, Complex::new(T::zero(), T::zero()));
        for (l, range) in self.element_ranges.iter().enumerate() {
            if ris.is_active(l) {
                for (i, idx) in range.clone().enumerate() {
                    theta[idx] = ris.phases[l][i].conj();
                }
            }
        }
        theta
    }
}

/// Build the lifting for the given beamformers.
pub fn build_lifting<T: Scalar>(
    channels: &ChannelRealization<T>,
    vectors: &[CVector<T>],
) -> LiftedData<T> {
    let k_users = channels.num_users();
    let num_ris = channels.num_ris();
    let mut element_ranges = Vec::with_capacity(num_ris);
    let mut offset = 0usize;
    for t_l in &channels.bs_to_ris {
        let n_l = t_l.nrows();
        element_ranges.push(offset..offset + n_l);
        offset += n_l;
    }
    let n_total = offset;

    // T_l w_j once per (l, j)
    let tw: Vec<Vec<CVector<T>>> = channels
        .bs_to_ris
        .iter()
        .map(|t_l| vectors.iter().map(|w| t_l * w).collect())
        .collect();

    let mut a_tilde = Vec::with_capacity(k_users);
    let mut b = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let mut row_a = Vec::with_capacity(vectors.len());
        let mut row_b = Vec::with_capacity(vectors.len());
        for (j, w) in vectors.iter().enumerate() {
            let mut a = CVector::from_element(n_total, Complex::new(T::zero(), T::zero()));
            for l in 0..num_ris {
                let h_lk = &channels.ris_to_user[l][k];
                for (i, idx) in element_ranges[l].clone().enumerate() {
                    // a_{k,j}(l) = diag(h_{l,k}^H) T_l w_j
                    a[idx] = h_lk[i].conj() * tw[l][j][i];
                }
            }
            row_a.push(a);
            row_b.push(channels.direct[k].dotc(w));
        }
        a_tilde.push(row_a);
        b.push(row_b);
    }
    LiftedData { a_tilde, b, element_ranges, n_total }
}

/// Difference-of-convex iteration parameters.
#[derive(Debug, Clone)]
pub struct DcParams<T> {
    /// Rank penalty; defaults to the largest per-RIS power so the penalty
    /// dominates the set-selection objective scale. Doubled (up to 8x) when
    /// the rank gap stalls.
    pub penalty_rho: Option<T>,
    /// Strong-convexity constant used only in the convergence audit.
    pub strong_convexity: T,
    /// Relative rank-gap target: converged when `Tr - lambda_1 <= tol * Tr`.
    pub rank_gap_tol_rel: T,
    /// Inner stall tolerance on the DC objective (mW scale).
    pub objective_stall_tol: T,
    pub max_dc_iters: usize,
    /// Gaussian-randomization candidates when the SDR init is not rank-one.
    pub randomization_trials: usize,
    pub randomization_seed: u64,
}

impl<T: Scalar> Default for DcParams<T> {
    fn default() -> Self {
        Self {
            penalty_rho: None,
            strong_convexity: T::c(1e-3),
            rank_gap_tol_rel: T::c(1e-6),
            objective_stall_tol: T::c(1e-5),
            max_dc_iters: 30,
            randomization_trials: 100,
            randomization_seed: 0x5eed,
        }
    }
}

/// One logged DC iteration (JSON-lines friendly).
#[derive(Debug, Clone, Serialize)]
pub struct DcIterate {
    pub iter: usize,
    /// DC objective `sum_l P_l d_l + rho (Tr - ||.||_2)` at this iterate.
    pub objective: f64,
    /// `Tr - ||.||_2` (nonnegative on PSD iterates, zero iff rank one).
    pub rank_gap: f64,
    /// `||Theta^t - Theta^{t-1}||_F^2`.
    pub step_sq: f64,
    /// Penalty in force (monotonicity holds per constant-rho segment).
    pub rho: f64,
    pub solver_status: String,
}

/// Result of an SDR or DC phase-selection solve.
#[derive(Debug, Clone)]
pub struct PhaseSelection<T> {
    pub theta_hat: CMatrix<T>,
    /// Relaxed activity readout per RIS, `beta_l = sqrt(mean diag I_l)`
    /// clamped to `[0, 1]`.
    pub beta: Vec<T>,
    pub objective: T,
    pub log: Vec<DcIterate>,
    pub converged: bool,
}

struct PhaseProblem<T> {
    problem: ConicProblem<T>,
    theta: HermitianBlock,
    d_range: Option<Range<usize>>,
}

/// Assemble the lifted phase/set subproblem.
///
/// `beta_fixed` pins the per-element diagonal to `beta_l^2`; otherwise a
/// relaxed per-RIS activity `d_l in [0, 1]` couples the diagonals and (when
/// `minimize_ris_power`) enters the objective as `sum_l P_l d_l`.
fn build_phase_problem<T: Scalar>(
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
    beta_fixed: Option<&[T]>,
    penalty: Option<(T, &CMatrix<T>)>,
    minimize_ris_power: bool,
) -> PhaseProblem<T> {
    let n = lifting.n_total;
    let k_users = lifting.num_users();
    let num_ris = lifting.num_ris();
    let gamma = config.sinr_threshold_linear();
    let noise = config.noise_mw();

    let mut p = ConicProblem::<T>::new();
    let theta = p.add_hermitian_psd_block("Theta_hat", n + 1);

    let d_range = if beta_fixed.is_none() {
        let d = p.add_block("d", num_ris);
        for l in 0..num_ris {
            p.add_nonneg(LinExpr::var(d.start + l));
            let mut ub = LinExpr::term(d.start + l, -T::one());
            ub.add_constant(T::one());
            p.add_nonneg(ub);
        }
        Some(d)
    } else {
        None
    };

    // diagonal coupling per RIS
    for l in 0..num_ris {
        for i in lifting.element_ranges[l].clone() {
            match (beta_fixed, &d_range) {
                (Some(beta), _) => {
                    let mut e = LinExpr::var(theta.diag_index(i));
                    e.add_constant(-beta[l] * beta[l]);
                    p.add_eq(e);
                }
                (None, Some(d)) => {
                    let mut e = LinExpr::var(theta.diag_index(i));
                    e.push(d.start + l, -T::one());
                    p.add_eq(e);
                }
                _ => unreachable!(),
            }
        }
    }
    // reference entry
    let mut corner = LinExpr::var(theta.diag_index(n));
    corner.add_constant(-T::one());
    p.add_eq(corner);

    // SINR constraints on traces, row-scaled by the noise power so the
    // constraint matrix stays near unit scale
    for k in 0..k_users {
        let mut e = theta.inner_product_expr(&lifting.r_matrix(k, k));
        e.add_constant(lifting.b[k][k].norm_sqr());
        let mut rhs = LinExpr::zero();
        for j in 0..k_users {
            if j == k {
                continue;
            }
            rhs.add_expr(&theta.inner_product_expr(&lifting.r_matrix(k, j)));
            rhs.add_constant(lifting.b[k][j].norm_sqr());
        }
        rhs.add_constant(noise[k]);
        e.add_expr(&rhs.scaled(-gamma[k]));
        p.add_nonneg(e.scaled(noise[k].recip()));
    }

    if minimize_ris_power {
        if let Some(d) = &d_range {
            for l in 0..num_ris {
                p.add_objective_term(d.start + l, config.ris_power_mw(l));
            }
        }
    }
    if let Some((rho, y)) = penalty {
        p.add_objective_expr(&theta.trace_expr::<T>().scaled(rho));
        p.add_objective_expr(&theta.inner_product_expr(y).scaled(-rho));
    }

    PhaseProblem { problem: p, theta, d_range }
}

fn beta_readout<T: Scalar>(lifting: &LiftedData<T>, theta_hat: &CMatrix<T>) -> Vec<T> {
    lifting
        .element_ranges
        .iter()
        .map(|range| {
            let len = T::c(range.len() as f64);
            let mean: T =
                range.clone().map(|i| theta_hat[(i, i)].re).sum::<T>() / len;
            mean.max(T::zero()).min(T::one()).sqrt()
        })
        .collect()
}

/// Semidefinite relaxation of the joint set/phase problem (rank constraint
/// dropped). `beta_fixed` freezes the activity pattern instead of relaxing it.
pub fn sdr_solve<T: Scalar>(
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
    beta_fixed: Option<&[T]>,
) -> Result<PhaseSelection<T>, RisSelectError> {
    let pp = build_phase_problem(lifting, config, beta_fixed, None, true);
    let sol = pp.problem.solve(SolverTolerances::default());
    match sol.status {
        ConicStatus::Optimal => {}
        ConicStatus::PrimalInfeasible => return Err(RisSelectError::Infeasible),
        _ => return Err(RisSelectError::SolverFailure),
    }
    let theta_hat = pp.theta.decode(&sol.x);
    let beta = match beta_fixed {
        Some(b) => b.to_vec(),
        None => beta_readout(lifting, &theta_hat),
    };
    let _ = &pp.d_range;
    Ok(PhaseSelection { theta_hat, beta, objective: sol.objective, log: Vec::new(), converged: true })
}

/// Valid subgradient of the spectral norm at a Hermitian PSD point:
/// `u_1 u_1^H` for a unit leading eigenvector (deterministic phase).
pub fn spectral_subgradient<T: Scalar>(theta_hat: &CMatrix<T>) -> CMatrix<T> {
    let (_, u) = leading_eigenpair(theta_hat);
    &u * u.adjoint()
}

/// Rank-one extraction by the leading eigenpair.
#[derive(Debug, Clone)]
pub struct RankOneExtraction<T> {
    /// `sqrt(lambda_1) u_1`.
    pub vector: CVector<T>,
    /// Set when `Tr - lambda_1 > tol_rel * Tr`; approximate extractions must
    /// pass a feasibility re-check before use.
    pub approximate: bool,
}

pub fn extract_rank_one<T: Scalar>(theta_hat: &CMatrix<T>, tol_rel: T) -> RankOneExtraction<T> {
    let (l1, u) = leading_eigenpair(theta_hat);
    let trace = theta_hat.trace().re;
    let scale = l1.max(T::zero()).sqrt();
    RankOneExtraction {
        vector: u * Complex::new(scale, T::zero()),
        approximate: trace - l1 > tol_rel * trace.max(T::c(1e-30)),
    }
}

/// Normalize the lifted vector by its reference entry and drop it.
pub fn recover_phases<T: Scalar>(theta_hat: &CVector<T>) -> Result<CVector<T>, RisSelectError> {
    let n = theta_hat.len() - 1;
    let last = theta_hat[n];
    if last.norm_sqr().sqrt() <= T::c(1e-9) {
        return Err(RisSelectError::DegeneratePhase);
    }
    Ok(CVector::from_fn(n, |i, _| theta_hat[i] / last))
}

/// Best Gaussian-randomization candidate drawn from `CN(0, Theta_hat)`,
/// projected to unit modulus and ranked by worst-case SINR margin.
fn gaussian_randomization<T: Scalar>(
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
    theta_hat: &CMatrix<T>,
    trials: usize,
    seed: u64,
) -> Option<CVector<T>> {
    let n1 = lifting.n_total + 1;
    let eig = nalgebra::SymmetricEigen::new(theta_hat.clone());
    let factor = {
        let mut f = eig.eigenvectors.clone();
        for (c, &l) in eig.eigenvalues.iter().enumerate() {
            let s = Complex::new(l.max(T::zero()).sqrt(), T::zero());
            for r in 0..n1 {
                f[(r, c)] *= s;
            }
        }
        f
    };
    let gamma = config.sinr_threshold_linear();
    let noise = config.noise_mw();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(T, CVector<T>)> = None;
    for _ in 0..trials {
        let g = CVector::from_fn(n1, |_, _| complex_normal::<T, _>(&mut rng));
        let z = &factor * g;
        let last = z[lifting.n_total];
        if last.norm_sqr().sqrt() <= T::c(1e-12) {
            continue;
        }
        let theta = CVector::from_fn(lifting.n_total, |i, _| {
            let v = z[i] / last;
            let m = v.norm_sqr().sqrt();
            if m > T::zero() {
                v / Complex::new(m, T::zero())
            } else {
                Complex::new(T::one(), T::zero())
            }
        });
        let sinrs = lifting.sinr_from_phases(&theta, &noise);
        let margin = sinrs
            .iter()
            .zip(&gamma)
            .map(|(&s, &g)| s / g)
            .fold(T::c(f64::INFINITY), |a, b| a.min(b));
        if best.as_ref().map_or(true, |(m, _)| margin > *m) {
            let mut lifted = CVector::from_element(n1, Complex::new(T::one(), T::zero()));
            for i in 0..lifting.n_total {
                lifted[i] = theta[i];
            }
            best = Some((margin, lifted));
        }
    }
    best.map(|(_, v)| v)
}

/// Penalized DC iteration for the joint set/phase problem.
///
/// Starts from `init` (default: the SDR solution, replaced by its best
/// Gaussian-randomization lift when the relaxation is far from rank one) and
/// iterates the linearized subproblem until the objective stalls. The rank
/// penalty is doubled (up to 8x) whenever the objective stalls while the
/// rank gap is still above target; the iterate log records the penalty in
/// force so monotonicity is auditable per constant-penalty segment.
pub fn dc_phase_selection<T: Scalar>(
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
    params: &DcParams<T>,
    init: Option<CMatrix<T>>,
    beta_fixed: Option<&[T]>,
) -> Result<PhaseSelection<T>, RisSelectError> {
    let rho0 = params
        .penalty_rho
        .unwrap_or_else(|| {
            (0..config.num_ris)
                .map(|l| config.ris_power_mw(l))
                .fold(T::zero(), |a, b| a.max(b))
        })
        .max(T::one());

    let theta_init = match init {
        Some(m) => m,
        None => {
            let sdr = sdr_solve(lifting, config, beta_fixed)?;
            let probe = extract_rank_one(&sdr.theta_hat, params.rank_gap_tol_rel);
            if probe.approximate && params.randomization_trials > 0 {
                match gaussian_randomization(
                    lifting,
                    config,
                    &sdr.theta_hat,
                    params.randomization_trials,
                    params.randomization_seed,
                ) {
                    Some(lifted) => {
                        let scaled = match beta_fixed {
                            Some(beta) => {
                                let mut v = lifted.clone();
                                for (l, range) in lifting.element_ranges.iter().enumerate() {
                                    for i in range.clone() {
                                        v[i] *= Complex::new(beta[l], T::zero());
                                    }
                                }
                                v
                            }
                            None => lifted,
                        };
                        &scaled * scaled.adjoint()
                    }
                    None => sdr.theta_hat,
                }
            } else {
                sdr.theta_hat
            }
        }
    };

    let mut rho = rho0;
    let rho_cap = rho0 * T::c(8.0);
    let mut theta_prev = theta_init;
    let mut log: Vec<DcIterate> = Vec::new();
    let mut prev_obj: Option<T> = None;
    let mut result: Option<(CMatrix<T>, Vec<T>)> = None;
    let mut converged = false;

    for iter in 1..=params.max_dc_iters {
        let y = spectral_subgradient(&theta_prev);
        let pp = build_phase_problem(lifting, config, beta_fixed, Some((rho, &y)), true);
        let sol = pp.problem.solve(SolverTolerances::default());
        match sol.status {
            ConicStatus::Optimal => {}
            ConicStatus::PrimalInfeasible => return Err(RisSelectError::Infeasible),
            _ => break,
        }
        let theta = pp.theta.decode(&sol.x);
        let beta = match beta_fixed {
            Some(b) => b.to_vec(),
            None => beta_readout(lifting, &theta),
        };
        let trace = theta.trace().re;
        let (l1, _) = leading_eigenpair(&theta);
        let rank_gap = (trace - l1).max(T::zero());
        let set_cost: T = match (beta_fixed, &pp.d_range) {
            (Some(b), _) => (0..lifting.num_ris())
                .map(|l| config.ris_power_mw(l) * b[l] * b[l])
                .sum(),
            (None, Some(d)) => (0..lifting.num_ris())
                .map(|l| config.ris_power_mw(l) * sol.x[d.start + l])
                .sum(),
            _ => T::zero(),
        };
        let objective = set_cost + rho * rank_gap;
        let step_sq = (&theta - &theta_prev).norm_squared();
        log.push(DcIterate {
            iter,
            objective: objective.to_f64().unwrap_or(f64::NAN),
            rank_gap: rank_gap.to_f64().unwrap_or(f64::NAN),
            step_sq: step_sq.to_f64().unwrap_or(f64::NAN),
            rho: rho.to_f64().unwrap_or(f64::NAN),
            solver_status: format!("{:?}", sol.status),
        });
        result = Some((theta.clone(), beta));
        let rank_ok = rank_gap <= params.rank_gap_tol_rel * trace.max(T::c(1e-30));
        if let Some(po) = prev_obj {
            if po - objective < params.objective_stall_tol {
                if rank_ok {
                    converged = true;
                    break;
                }
                if rho < rho_cap {
                    rho *= T::c(2.0);
                    prev_obj = None;
                    theta_prev = theta;
                    continue;
                }
                break;
            }
        }
        prev_obj = Some(objective);
        theta_prev = theta;
    }

    let (theta_hat, beta) = result.ok_or(RisSelectError::SolverFailure)?;
    let objective: T = beta
        .iter()
        .enumerate()
        .map(|(l, &b)| config.ris_power_mw(l) * b)
        .sum();
    Ok(PhaseSelection { theta_hat, beta, objective, log, converged })
}

/// Conic feasibility of a fixed binary activity pattern: does any relaxed
/// phase configuration with these RIS on/off states satisfy every SINR
/// constraint? `Ok(false)` covers both a primal-infeasibility certificate and
/// an unresolved solve (conservative for set deactivation).
pub fn active_pattern_feasible<T: Scalar>(
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
    active: &[bool],
) -> bool {
    let beta: Vec<T> = active.iter().map(|&a| if a { T::one() } else { T::zero() }).collect();
    let pp = build_phase_problem(lifting, config, Some(&beta), None, false);
    matches!(pp.problem.solve(SolverTolerances::default()).status, ConicStatus::Optimal)
}

/// Outcome of the binary active-set search.
#[derive(Debug, Clone)]
pub struct ActiveSetSelection<T> {
    pub ris: RisConfiguration<T>,
    /// Number of RIS switched off (after the projection back-off).
    pub deactivated: usize,
}

/// Recover a binary active set from relaxed activities.
///
/// Sorts `beta` ascending and binary-searches the largest prefix of RIS that
/// can be switched off while the conic feasibility check stays alive, then
/// projects the recovered phases of the surviving RIS to exact unit modulus
/// and re-checks the SINR targets arithmetically, backing off one
/// deactivation at a time if the projection broke feasibility.
pub fn binary_search_active_set<T: Scalar>(
    beta: &[T],
    theta_hat: &CVector<T>,
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
) -> Result<ActiveSetSelection<T>, RisSelectError> {
    let num_ris = lifting.num_ris();
    let mut order: Vec<usize> = (0..num_ris).collect();
    order.sort_by(|&a, &b| beta[a].partial_cmp(&beta[b]).unwrap().then(a.cmp(&b)));

    let pattern = |deactivated: usize| -> Vec<bool> {
        let mut active = vec![true; num_ris];
        for &l in &order[..deactivated] {
            active[l] = false;
        }
        active
    };
    let oracle = |j0: usize| active_pattern_feasible(lifting, config, &pattern(j0));

    if !oracle(0) {
        return Err(RisSelectError::Infeasible);
    }
    let mut j0 = if num_ris > 0 && oracle(num_ris) {
        num_ris
    } else {
        // invariant: oracle(lo) true, oracle(hi) false
        let (mut lo, mut hi) = (0usize, num_ris.max(1));
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if oracle(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let theta = recover_phases(theta_hat)?;
    let gamma = config.sinr_threshold_linear();
    let noise = config.noise_mw();
    loop {
        let active = pattern(j0);
        let ris = configuration_from_stacked(&theta, &active, lifting, config);
        let stacked = lifting.stack_phases(&ris);
        let sinrs = lifting.sinr_from_phases(&stacked, &noise);
        let ok = sinrs
            .iter()
            .zip(&gamma)
            .all(|(&s, &g)| s >= g * (T::one() - T::c(1e-6)));
        if ok {
            return Ok(ActiveSetSelection { ris, deactivated: j0 });
        }
        if j0 == 0 {
            return Err(RisSelectError::ProjectionInfeasible);
        }
        j0 -= 1;
    }
}

/// Split a recovered stacked phase vector into a [`RisConfiguration`] with
/// exact unit-modulus entries on the active RIS (conjugating back into
/// diagonal reflection coefficients).
pub fn configuration_from_stacked<T: Scalar>(
    theta: &CVector<T>,
    active: &[bool],
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
) -> RisConfiguration<T> {
    let mut phases = Vec::with_capacity(config.num_ris);
    let mut active_set = BTreeSet::new();
    for (l, range) in lifting.element_ranges.iter().enumerate() {
        if active[l] {
            active_set.insert(l);
            phases.push(CVector::from_fn(range.len(), |i, _| {
                let z = theta[range.start + i].conj();
                let m = z.norm_sqr().sqrt();
                if m > T::zero() {
                    z / Complex::new(m, T::zero())
                } else {
                    Complex::new(T::one(), T::zero())
                }
            }));
        } else {
            phases.push(CVector::from_element(
                range.len(),
                Complex::new(T::zero(), T::zero()),
            ));
        }
    }
    RisConfiguration { active: active_set, phases }
}

/// Phase/set optimizer used inside the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseStrategy {
    /// Penalized DC iterations (the default).
    Dc,
    /// Plain SDR with Gaussian-randomization extraction (baseline).
    SdrRandomization,
}

/// Outer-loop parameters of the alternating power minimization.
#[derive(Debug, Clone)]
pub struct PowerMinParams<T> {
    pub dc: DcParams<T>,
    /// Stop when the network power decrease falls below this (mW).
    pub outer_tol_mw: T,
    pub max_outer_iters: usize,
    pub strategy: PhaseStrategy,
}

impl<T: Scalar> Default for PowerMinParams<T> {
    fn default() -> Self {
        Self {
            dc: DcParams::default(),
            outer_tol_mw: T::c(1e-3),
            max_outer_iters: 12,
            strategy: PhaseStrategy::Dc,
        }
    }
}

fn ris_off_phases<T: Scalar>(ris: &mut RisConfiguration<T>, l: usize) {
    let n = ris.phases[l].len();
    ris.phases[l] = CVector::from_element(n, Complex::new(T::zero(), T::zero()));
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterIterate {
    pub iter: usize,
    pub total_mw: f64,
    pub active_ris: usize,
}

/// Result of the alternating network power minimization.
#[derive(Debug, Clone)]
pub struct PowerMinResult<T> {
    pub ris: RisConfiguration<T>,
    pub beamforming: BeamformingSolution<T>,
    pub power: PowerBreakdown<T>,
    pub outer_trace: Vec<OuterIterate>,
    pub dc_logs: Vec<Vec<DcIterate>>,
}

/// Alternating minimization of the network power: beamforming SOCP for the
/// current RIS configuration, then joint set/phase selection for the new
/// beamformers, until the power stalls. Returns `Infeasible` only when the
/// very first beamforming solve carries an infeasibility certificate (the
/// admission-control fallback owns that case).
pub fn minimize_network_power<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &PowerMinParams<T>,
) -> Result<PowerMinResult<T>, RisSelectError> {
    minimize_with(channels, config, params, None)
}

/// Same alternating loop with the active set frozen: phases are still
/// DC-optimized per iteration, but no set search runs. Used by the
/// all-active and exhaustive baselines.
pub fn minimize_network_power_fixed_set<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &PowerMinParams<T>,
    active: &BTreeSet<usize>,
) -> Result<PowerMinResult<T>, RisSelectError> {
    minimize_with(channels, config, params, Some(active))
}

fn minimize_with<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &PowerMinParams<T>,
    fixed_set: Option<&BTreeSet<usize>>,
) -> Result<PowerMinResult<T>, RisSelectError> {
    let mut ris = match fixed_set {
        None => RisConfiguration::all_active_unit(config),
        Some(active) => {
            let mut r = RisConfiguration::all_active_unit(config);
            r.active = active.clone();
            for l in 0..config.num_ris {
                if !active.contains(&l) {
                    ris_off_phases(&mut r, l);
                }
            }
            r
        }
    };
    let mut best: Option<(RisConfiguration<T>, BeamformingSolution<T>, T)> = None;
    let mut outer_trace = Vec::new();
    let mut dc_logs = Vec::new();
    let mut last_power: Option<T> = None;

    for iter in 1..=params.max_outer_iters {
        let w = beamform::solve_beamforming(channels, &ris, config);
        match w.status {
            BeamformingStatus::Optimal => {}
            BeamformingStatus::Infeasible if best.is_none() => {
                return Err(RisSelectError::Infeasible)
            }
            BeamformingStatus::SolverFailure if best.is_none() => {
                return Err(RisSelectError::SolverFailure)
            }
            _ => break,
        }
        let p_now = network_power(&ris, &w.vectors, config).total_mw;
        if best.as_ref().map_or(true, |(_, _, p)| p_now < *p) {
            best = Some((ris.clone(), w.clone(), p_now));
        }

        let fixed_empty = fixed_set.map_or(false, |a| a.is_empty());
        if config.num_ris == 0 || fixed_empty {
            outer_trace.push(OuterIterate {
                iter,
                total_mw: p_now.to_f64().unwrap_or(f64::NAN),
                active_ris: ris.num_active(),
            });
            break;
        }

        let lifting = build_lifting(channels, &w.vectors);
        let beta_fixed: Option<Vec<T>> = fixed_set.map(|active| {
            (0..config.num_ris)
                .map(|l| if active.contains(&l) { T::one() } else { T::zero() })
                .collect()
        });
        let selection = match params.strategy {
            PhaseStrategy::Dc => {
                dc_phase_selection(&lifting, config, &params.dc, None, beta_fixed.as_deref())
            }
            PhaseStrategy::SdrRandomization => {
                sdr_extract(&lifting, config, &params.dc, beta_fixed.as_deref())
            }
        };
        let selection = match selection {
            Ok(s) => s,
            Err(_) => break, // keep the incumbent feasible configuration
        };
        dc_logs.push(selection.log.clone());
        let extraction = extract_rank_one(&selection.theta_hat, params.dc.rank_gap_tol_rel);
        let chosen = match fixed_set {
            None => match binary_search_active_set(
                &selection.beta,
                &extraction.vector,
                &lifting,
                config,
            ) {
                Ok(c) => c,
                Err(_) => break,
            },
            Some(active) => {
                // fixed set: project the recovered phases and re-check, no
                // set search
                let Ok(theta) = recover_phases(&extraction.vector) else { break };
                let mask: Vec<bool> =
                    (0..config.num_ris).map(|l| active.contains(&l)).collect();
                let cand = configuration_from_stacked(&theta, &mask, &lifting, config);
                let stacked = lifting.stack_phases(&cand);
                let gamma = config.sinr_threshold_linear();
                let ok = lifting
                    .sinr_from_phases(&stacked, &config.noise_mw())
                    .iter()
                    .zip(&gamma)
                    .all(|(&s, &g)| s >= g * (T::one() - T::c(1e-6)));
                if !ok {
                    break; // keep the incumbent phases
                }
                ActiveSetSelection { ris: cand, deactivated: config.num_ris - active.len() }
            }
        };

        let p_cand = network_power(&chosen.ris, &w.vectors, config).total_mw;
        outer_trace.push(OuterIterate {
            iter,
            total_mw: p_cand.to_f64().unwrap_or(f64::NAN),
            active_ris: chosen.ris.num_active(),
        });
        if p_cand < best.as_ref().map_or(T::c(f64::INFINITY), |(_, _, p)| *p) {
            best = Some((chosen.ris.clone(), w.clone(), p_cand));
        }
        let stalled = last_power.map_or(false, |lp| lp - p_cand < params.outer_tol_mw);
        last_power = Some(p_cand);
        ris = chosen.ris;
        if stalled {
            break;
        }
    }

    let (best_ris, mut best_w, mut best_p) = best.ok_or(RisSelectError::SolverFailure)?;
    // tighten the beamformers once against the final configuration
    let final_w = beamform::solve_beamforming(channels, &best_ris, config);
    if final_w.is_optimal() {
        let p = network_power(&best_ris, &final_w.vectors, config).total_mw;
        if p <= best_p {
            best_w = final_w;
            best_p = p;
        }
    }
    let _ = best_p;

    let gamma = config.sinr_threshold_linear();
    let achieved = sinr(channels, &best_ris, &best_w.vectors, config);
    if achieved
        .iter()
        .zip(&gamma)
        .any(|(&s, &g)| s < g * (T::one() - T::c(1e-6)))
    {
        return Err(RisSelectError::SolverFailure);
    }

    let power = network_power(&best_ris, &best_w.vectors, config);
    Ok(PowerMinResult { ris: best_ris, beamforming: best_w, power, outer_trace, dc_logs })
}

/// SDR + randomization flavor of the phase/set step (for the SDR baseline).
fn sdr_extract<T: Scalar>(
    lifting: &LiftedData<T>,
    config: &SystemConfig<T>,
    params: &DcParams<T>,
    beta_fixed: Option<&[T]>,
) -> Result<PhaseSelection<T>, RisSelectError> {
    let sdr = sdr_solve(lifting, config, beta_fixed)?;
    let probe = extract_rank_one(&sdr.theta_hat, params.rank_gap_tol_rel);
    if !probe.approximate || params.randomization_trials == 0 {
        return Ok(sdr);
    }
    match gaussian_randomization(
        lifting,
        config,
        &sdr.theta_hat,
        params.randomization_trials,
        params.randomization_seed,
    ) {
        Some(lifted) => {
            let theta_hat = &lifted * lifted.adjoint();
            Ok(PhaseSelection {
                beta: sdr.beta.clone(),
                theta_hat,
                objective: sdr.objective,
                log: Vec::new(),
                converged: true,
            })
        }
        None => Ok(sdr),
    }
}
