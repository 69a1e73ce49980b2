//! Low-complexity zero-forcing phase design with exhaustive active-set search.
//!
//! The elements of each active RIS are split into per-user groups; the group
//! serving user `k` nulls the reflected interference channels `a_{k,j}` by
//! projecting onto their orthogonal complement (`Q_k`), while aligning with
//! the intended channel `a_{k,k}`. The unit-modulus constraint is handled by
//! a barrier objective
//!
//! ```text
//! maximize  Re(theta^H a_kk) - delta ||theta - Q d||^2
//! ```
//!
//! whose two blocks have exact closed-form maximizers: the theta-step is the
//! entrywise phase of `a_kk / (2 delta) + Q d`, the d-step is `d = Q theta`.
//! Active sets are enumerated exhaustively (guarded to small RIS counts) in
//! ascending RIS-power order with an incumbent-based early exit.

use crate::beamform;
use crate::netmodel::{
    network_power, BeamformingSolution, ChannelRealization, PowerBreakdown, RisConfiguration,
    SystemConfig,
};
use crate::ris_select::build_lifting;
use crate::scalar::Scalar;
use crate::{CMatrix, CVector};
use nalgebra::{Complex, DMatrix};
use std::collections::BTreeSet;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZfError {
    #[error("fewer RIS elements than users: {elements} < {users}")]
    TooFewElements { elements: usize, users: usize },
    #[error("active-set enumeration guarded to {max} RIS (got {got})")]
    TooManyRis { got: usize, max: usize },
    #[error("no candidate active set admits a feasible beamforming solution")]
    Infeasible,
}

/// Barrier / alternation parameters.
#[derive(Debug, Clone)]
pub struct ZfParams<T> {
    /// Barrier weight; defaults to `10 * max_i |a_kk[i]|` per user.
    pub barrier_delta: Option<T>,
    pub max_alt_iters: usize,
    /// Residual-interference target relative to `||a_kk||`; the barrier is
    /// doubled and the alternation restarted while the worst residual
    /// exceeds it.
    pub interference_tol_rel: T,
    pub max_restarts: usize,
    /// Exhaustive-search guard.
    pub max_ris_for_search: usize,
}

impl<T: Scalar> Default for ZfParams<T> {
    fn default() -> Self {
        Self {
            barrier_delta: None,
            max_alt_iters: 50,
            interference_tol_rel: T::c(1e-3),
            max_restarts: 8,
            max_ris_for_search: 12,
        }
    }
}

/// Split contiguous per-RIS element ranges into near-equal per-user groups
/// (remainder to earlier users); returns global element indices per user.
pub fn partition_ranges(ranges: &[Range<usize>], users: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); users];
    for range in ranges {
        let n = range.len();
        let base = n / users;
        let extra = n % users;
        let mut idx = range.start;
        for (k, group) in groups.iter_mut().enumerate() {
            let take = base + usize::from(k < extra);
            group.extend(idx..idx + take);
            idx += take;
        }
    }
    groups
}

/// Per-user element groups with every RIS active.
pub fn partition_elements<T: Scalar>(
    config: &SystemConfig<T>,
) -> Result<Vec<Vec<usize>>, ZfError> {
    let total = config.total_elements();
    if total < config.num_users {
        return Err(ZfError::TooFewElements { elements: total, users: config.num_users });
    }
    let mut ranges = Vec::with_capacity(config.num_ris);
    let mut off = 0;
    for &n in &config.elements_per_ris {
        ranges.push(off..off + n);
        off += n;
    }
    Ok(partition_ranges(&ranges, config.num_users))
}

/// Necessary feasibility condition for exact interference nulling with
/// unit-modulus entries: `2 max_i |a_i| <= sum_i |a_i|` for every interferer.
pub fn zf_feasible<T: Scalar>(interferers: &[CVector<T>]) -> bool {
    interferers.iter().all(|a| {
        let mut max = T::zero();
        let mut sum = T::zero();
        for z in a.iter() {
            let m = z.norm_sqr().sqrt();
            sum += m;
            if m > max {
                max = m;
            }
        }
        T::c(2.0) * max <= sum
    })
}

/// Orthogonal projector onto the complement of the interferer column span:
/// `Q = I - A (A^H A)^+ A^H`, computed through a rank-revealing SVD.
pub fn projector<T: Scalar>(interferer_columns: &CMatrix<T>) -> CMatrix<T> {
    let n = interferer_columns.nrows();
    let mut q = CMatrix::identity(n, n);
    if interferer_columns.ncols() == 0 {
        return q;
    }
    let svd = interferer_columns.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let tol = smax * T::c(n.max(interferer_columns.ncols()) as f64) * T::default_epsilon();
    for (c, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let col = u.column(c);
            for i in 0..n {
                for j in 0..n {
                    q[(i, j)] -= col[i] * col[j].conj();
                }
            }
        }
    }
    q
}

/// Result of the per-user barrier alternation.
#[derive(Debug, Clone)]
pub struct ZfPhaseResult<T> {
    /// Exact unit-modulus phases on the user's element group.
    pub theta: CVector<T>,
    /// `|theta^H a_{k,j}|` per interferer, in input order.
    pub residuals: Vec<T>,
    /// Barrier objective per alternation step (non-decreasing).
    pub objective_trace: Vec<T>,
    pub delta_used: T,
    pub restarts: usize,
}

fn entrywise_phase<T: Scalar>(v: &CVector<T>) -> CVector<T> {
    CVector::from_fn(v.len(), |i, _| {
        let z = v[i];
        let m = z.norm_sqr().sqrt();
        if m > T::zero() {
            z / Complex::new(m, T::zero())
        } else {
            Complex::new(T::one(), T::zero()) // tie-break: zero argument
        }
    })
}

/// Maximize `Re(theta^H a_kk) - delta ||theta - Q d||^2` by exact alternating
/// block updates, restarting with a doubled barrier while the residual
/// interference stays above the configured tolerance.
pub fn zf_phase_opt<T: Scalar>(
    a_kk: &CVector<T>,
    q: &CMatrix<T>,
    interferers: &[CVector<T>],
    params: &ZfParams<T>,
) -> ZfPhaseResult<T> {
    let n = a_kk.len();
    if n == 0 {
        return ZfPhaseResult {
            theta: CVector::from_element(0, Complex::new(T::zero(), T::zero())),
            residuals: interferers.iter().map(|_| T::zero()).collect(),
            objective_trace: Vec::new(),
            delta_used: T::zero(),
            restarts: 0,
        };
    }
    let a_max = a_kk.iter().map(|z| z.norm_sqr().sqrt()).fold(T::zero(), |a, b| a.max(b));
    let mut delta = params
        .barrier_delta
        .unwrap_or_else(|| T::c(10.0) * a_max.max(T::default_epsilon()));
    let res_target = params.interference_tol_rel * a_kk.norm();

    let mut best: Option<ZfPhaseResult<T>> = None;
    for restart in 0..=params.max_restarts {
        let objective = |theta: &CVector<T>, d: &CVector<T>| -> T {
            let align = theta.dotc(a_kk).re;
            let gap = (theta - q * d).norm_squared();
            align - delta * gap
        };
        let mut d = q * entrywise_phase(a_kk);
        let mut theta = entrywise_phase(a_kk);
        let mut trace = Vec::with_capacity(params.max_alt_iters);
        let mut prev = objective(&theta, &d);
        for _ in 0..params.max_alt_iters {
            let half = Complex::new((T::c(2.0) * delta).recip(), T::zero());
            let carrier = a_kk * half + q * &d;
            theta = entrywise_phase(&carrier);
            d = q * &theta;
            let obj = objective(&theta, &d);
            trace.push(obj);
            if obj - prev < T::c(1e-12) * (T::one() + obj.abs()) {
                break;
            }
            prev = obj;
        }
        let residuals: Vec<T> =
            interferers.iter().map(|a| theta.dotc(a).norm_sqr().sqrt()).collect();
        let worst = residuals.iter().fold(T::zero(), |a, &b| a.max(b));
        let candidate = ZfPhaseResult {
            theta,
            residuals,
            objective_trace: trace,
            delta_used: delta,
            restarts: restart,
        };
        let better = match &best {
            Some(b) => {
                let b_worst = b.residuals.iter().fold(T::zero(), |a, &x| a.max(x));
                worst < b_worst
            }
            None => true,
        };
        if better {
            best = Some(candidate);
        }
        if worst <= res_target || interferers.is_empty() {
            break;
        }
        delta *= T::c(2.0);
    }
    best.expect("at least one alternation pass ran")
}

/// Evaluation of one candidate active set.
#[derive(Debug, Clone)]
pub struct ZfCandidate<T> {
    pub ris: RisConfiguration<T>,
    pub beamforming: BeamformingSolution<T>,
    pub power: PowerBreakdown<T>,
}

/// Run the full ZF pipeline (partition, per-user phase design, beamforming)
/// for one fixed active set. Returns `None` when the final beamforming is
/// not optimal.
pub fn evaluate_active_set<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &ZfParams<T>,
    active: &BTreeSet<usize>,
) -> Option<ZfCandidate<T>> {
    let k_users = config.num_users;
    if active.is_empty() {
        let ris = RisConfiguration::all_inactive(config);
        let w = beamform::solve_beamforming(channels, &ris, config);
        if !w.is_optimal() {
            return None;
        }
        let power = network_power(&ris, &w.vectors, config);
        return Some(ZfCandidate { ris, beamforming: w, power });
    }

    // initial beamformers: all-ones phases on the candidate set, falling back
    // to matched filters when that SOCP is infeasible
    let mut ris = RisConfiguration::all_active_unit(config);
    ris.active = active.clone();
    let w_init = beamform::solve_beamforming(channels, &ris, config);
    let vectors = if w_init.is_optimal() {
        w_init.vectors
    } else {
        let per_user = config.max_transmit_power_mw / T::c(k_users as f64);
        (0..k_users)
            .map(|k| {
                let h = crate::netmodel::effective_channel(channels, &ris, k);
                let norm = h.norm().max(T::default_epsilon());
                h * Complex::new(per_user.sqrt() / norm, T::zero())
            })
            .collect()
    };

    let lifting = build_lifting(channels, &vectors);
    let active_ranges: Vec<Range<usize>> = active
        .iter()
        .map(|&l| lifting.element_ranges[l].clone())
        .collect();
    let groups = partition_ranges(&active_ranges, k_users);

    let mut stacked =
        CVector::from_element(lifting.n_total, Complex::new(T::zero(), T::zero()));
    for (k, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let restrict = |v: &CVector<T>| CVector::from_fn(group.len(), |i, _| v[group[i]]);
        let a_kk = restrict(&lifting.a_tilde[k][k]);
        let interferers: Vec<CVector<T>> = (0..k_users)
            .filter(|&j| j != k)
            .map(|j| restrict(&lifting.a_tilde[k][j]))
            .collect();
        let columns = DMatrix::from_fn(group.len(), interferers.len(), |r, c| interferers[c][r]);
        let q = projector(&columns);
        let phase = zf_phase_opt(&a_kk, &q, &interferers, params);
        for (i, &g) in group.iter().enumerate() {
            stacked[g] = phase.theta[i];
        }
    }

    // stacked phases live in lifting-land (received amplitude theta^H a);
    // the diagonal reflection coefficients are their conjugates
    let mut phases = Vec::with_capacity(config.num_ris);
    for (l, range) in lifting.element_ranges.iter().enumerate() {
        if active.contains(&l) {
            phases.push(CVector::from_fn(range.len(), |i, _| {
                stacked[range.start + i].conj()
            }));
        } else {
            phases.push(CVector::from_element(range.len(), Complex::new(T::zero(), T::zero())));
        }
    }
    let ris = RisConfiguration { active: active.clone(), phases };
    let w = beamform::solve_beamforming(channels, &ris, config);
    if !w.is_optimal() {
        return None;
    }
    let power = network_power(&ris, &w.vectors, config);
    Some(ZfCandidate { ris, beamforming: w, power })
}

/// ZF network power minimization: exhaustive active-set search in ascending
/// RIS-power order, pruned once a candidate's RIS power alone exceeds the
/// incumbent's total.
pub fn zf_minimize_power<T: Scalar>(
    channels: &ChannelRealization<T>,
    config: &SystemConfig<T>,
    params: &ZfParams<T>,
) -> Result<ZfCandidate<T>, ZfError> {
    let l = config.num_ris;
    if l > params.max_ris_for_search {
        return Err(ZfError::TooManyRis { got: l, max: params.max_ris_for_search });
    }
    if config.total_elements() < config.num_users && l > 0 {
        return Err(ZfError::TooFewElements {
            elements: config.total_elements(),
            users: config.num_users,
        });
    }

    // the all-active candidate anchors the incumbent
    let all: BTreeSet<usize> = (0..l).collect();
    let mut incumbent = evaluate_active_set(channels, config, params, &all);

    let mut masks: Vec<u32> = (0..(1u32 << l)).collect();
    let ris_power_of = |mask: u32| -> T {
        (0..l)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| config.ris_power_mw(i))
            .sum()
    };
    masks.sort_by(|&a, &b| {
        ris_power_of(a)
            .partial_cmp(&ris_power_of(b))
            .unwrap()
            .then(a.count_ones().cmp(&b.count_ones()))
            .then(a.cmp(&b))
    });

    for mask in masks {
        if l > 0 && mask == (1u32 << l) - 1 {
            continue; // all-active already evaluated
        }
        // a candidate's total power is at least its RIS power; masks are
        // sorted by RIS power, so no later mask can beat the incumbent
        if let Some(inc) = &incumbent {
            if ris_power_of(mask) > inc.power.total_mw {
                break;
            }
        }
        let active: BTreeSet<usize> = (0..l).filter(|&i| mask & (1 << i) != 0).collect();
        if let Some(cand) = evaluate_active_set(channels, config, params, &active) {
            let better = incumbent
                .as_ref()
                .map_or(true, |inc| cand.power.total_mw < inc.power.total_mw);
            if better {
                incumbent = Some(cand);
            }
        }
    }

    incumbent.ok_or(ZfError::Infeasible)
}

#[cfg(test)]
mod tests;
