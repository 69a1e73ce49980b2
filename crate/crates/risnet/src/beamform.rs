//! Transmit-beamforming subproblem for a fixed RIS configuration.
//!
//! For given effective channels the QoS power minimization is a convex SOCP:
//! each SINR constraint becomes the real-part second-order cone
//!
//! ```text
//! sqrt( sum_{j != k} |h_k^H w_j|^2 / sigma_k^2 + 1 )
//!     <= Re(h_k^H w_k) / sqrt(gamma_k^th sigma_k^2)
//! ```
//!
//! which is lossless because a common phase rotation of `w_k` leaves every
//! SINR unchanged. Complex inner products are expanded over stacked
//! `[Re w; Im w]` real variables; the objective minimizes the Euclidean norm
//! of the full stack (monotone in the transmit power), and the power budget
//! becomes a linear bound on the same epigraph variable.
//!
//! Infeasibility passes the conic certificate through unchanged; the caller
//! owns the fallback to admission control.

use crate::conic::{ConicProblem, ConicStatus, LinExpr, SolverTolerances};
use crate::netmodel::{
    effective_channel, BeamformingSolution, BeamformingStatus, ChannelRealization,
    RisConfiguration, SystemConfig,
};
use crate::scalar::Scalar;
use crate::CVector;
use nalgebra::Complex;

/// Solve the fixed-phase power minimization.
///
/// Returns `Optimal` with the per-user beamformers, `Infeasible` on a primal
/// infeasibility certificate (the SINR targets cannot all be met under
/// `P_max`), or `SolverFailure` when the solver cannot certify either way.
pub fn solve_beamforming<T: Scalar>(
    channels: &ChannelRealization<T>,
    ris: &RisConfiguration<T>,
    config: &SystemConfig<T>,
) -> BeamformingSolution<T> {
    let h: Vec<CVector<T>> = (0..channels.num_users())
        .map(|k| effective_channel(channels, ris, k))
        .collect();
    solve_with_channels(&h, config)
}

/// Same SOCP, parameterized directly by effective channels.
pub fn solve_with_channels<T: Scalar>(
    h: &[CVector<T>],
    config: &SystemConfig<T>,
) -> BeamformingSolution<T> {
    let m = config.num_antennas;
    let k_users = h.len();
    let gamma = config.sinr_threshold_linear();
    let noise = config.noise_mw();

    let mut p = ConicProblem::<T>::new();
    // per user: M real parts then M imaginary parts
    let w_block = p.add_block("w", 2 * m * k_users);
    let t_block = p.add_block("t", 1);
    let re_idx = |user: usize, ant: usize| w_block.start + 2 * m * user + ant;
    let im_idx = |user: usize, ant: usize| w_block.start + 2 * m * user + m + ant;

    p.add_objective_term(t_block.start, T::one());

    // ||w_stack|| <= t
    let mut norm_soc = Vec::with_capacity(2 * m * k_users + 1);
    norm_soc.push(LinExpr::var(t_block.start));
    for i in 0..2 * m * k_users {
        norm_soc.push(LinExpr::var(w_block.start + i));
    }
    p.add_soc(norm_soc);

    // t <= sqrt(P_max)
    let mut cap = LinExpr::term(t_block.start, -T::one());
    cap.add_constant(config.max_transmit_power_mw.sqrt());
    p.add_nonneg(cap);

    // h^H w = sum_a conj(h_a) w_a expanded over stacked reals
    let re_inner = |hk: &CVector<T>, j: usize| {
        let mut e = LinExpr::zero();
        for a in 0..m {
            e.push(re_idx(j, a), hk[a].re);
            e.push(im_idx(j, a), hk[a].im);
        }
        e
    };
    let im_inner = |hk: &CVector<T>, j: usize| {
        let mut e = LinExpr::zero();
        for a in 0..m {
            e.push(im_idx(j, a), hk[a].re);
            e.push(re_idx(j, a), -hk[a].im);
        }
        e
    };

    for k in 0..k_users {
        let sigma = noise[k].sqrt();
        let scale = (gamma[k] * noise[k]).sqrt().recip();
        let mut rows = Vec::with_capacity(2 * (k_users - 1) + 2);
        rows.push(re_inner(&h[k], k).scaled(scale));
        for j in 0..k_users {
            if j == k {
                continue;
            }
            rows.push(re_inner(&h[k], j).scaled(sigma.recip()));
            rows.push(im_inner(&h[k], j).scaled(sigma.recip()));
        }
        rows.push(LinExpr::constant(T::one()));
        p.add_soc(rows);
    }

    let sol = p.solve(SolverTolerances::default());
    match sol.status {
        ConicStatus::Optimal => {
            let mut vectors = Vec::with_capacity(k_users);
            let mut tx = T::zero();
            for k in 0..k_users {
                let w = CVector::from_fn(m, |a, _| {
                    Complex::new(sol.x[re_idx(k, a)], sol.x[im_idx(k, a)])
                });
                tx += w.norm_squared();
                vectors.push(w);
            }
            BeamformingSolution { vectors, status: BeamformingStatus::Optimal, transmit_power_mw: tx }
        }
        ConicStatus::PrimalInfeasible => BeamformingSolution::infeasible(),
        _ => BeamformingSolution::failure(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{self, generate_channels, sinr};
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn config(users: usize, antennas: usize, sinr_db: f64, noise_dbm: f64) -> SystemConfig<f64> {
        let mut cfg = SystemConfig::<f64>::desk_scale();
        cfg.num_users = users;
        cfg.num_antennas = antennas;
        cfg.num_ris = 0;
        cfg.elements_per_ris.clear();
        cfg.ris_positions.clear();
        cfg.sinr_threshold_db = vec![sinr_db; users];
        cfg.noise_power_dbm = vec![noise_dbm; users];
        cfg
    }

    fn direct_only(h: Vec<CVector<f64>>) -> ChannelRealization<f64> {
        ChannelRealization {
            user_positions: vec![[0.0, 0.0, 0.0]; h.len()],
            direct: h,
            bs_to_ris: vec![],
            ris_to_user: vec![],
        }
    }

    #[test]
    fn single_user_analytic_power() {
        // K=1, M=1, h=1, sigma^2 = 0.01 mW, gamma = 2 (linear) -> |w|^2 = 0.02
        let mut cfg = config(1, 1, netmodel::linear_to_db(2.0), -20.0);
        cfg.max_transmit_power_mw = 1.0;
        let ch = direct_only(vec![CVector::from_element(1, Complex::new(1.0, 0.0))]);
        let ris = RisConfiguration::all_inactive(&cfg);
        let sol = solve_beamforming(&ch, &ris, &cfg);
        assert_eq!(sol.status, BeamformingStatus::Optimal);
        assert_relative_eq!(sol.transmit_power_mw, 0.02, epsilon = 1e-7);
    }

    #[test]
    fn orthogonal_channels_match_matched_filter() {
        // with orthogonal effective channels the cross terms vanish and each
        // user's optimum is the scaled matched filter of power
        // gamma sigma^2 / ||h||^2
        let g1 = 1.7;
        let g2 = 0.4;
        let cfg = config(2, 2, 3.0, -10.0);
        let h1 = CVector::from_vec(vec![Complex::new(g1, 0.0), Complex::new(0.0, 0.0)]);
        let h2 = CVector::from_vec(vec![Complex::new(0.0, 0.0), Complex::new(0.0, g2)]);
        let ch = direct_only(vec![h1.clone(), h2.clone()]);
        let ris = RisConfiguration::all_inactive(&cfg);
        let sol = solve_beamforming(&ch, &ris, &cfg);
        assert_eq!(sol.status, BeamformingStatus::Optimal);
        let gamma = netmodel::db_to_linear(3.0);
        let sigma = netmodel::dbm_to_mw(-10.0);
        for (k, h) in [h1, h2].iter().enumerate() {
            let want = gamma * sigma / h.norm_squared();
            let got = sol.vectors[k].norm_squared();
            assert_relative_eq!(got, want, max_relative = 1e-6);
        }
    }

    #[test]
    fn infeasible_when_power_budget_too_small() {
        // K=1: required power gamma sigma^2 / |h|^2 exceeds P_max
        let mut cfg = config(1, 1, netmodel::linear_to_db(2.0), -20.0);
        cfg.max_transmit_power_mw = 0.01; // below the 0.02 requirement
        let ch = direct_only(vec![CVector::from_element(1, Complex::new(1.0, 0.0))]);
        let ris = RisConfiguration::all_inactive(&cfg);
        let sol = solve_beamforming(&ch, &ris, &cfg);
        assert_eq!(sol.status, BeamformingStatus::Infeasible);
    }

    #[test]
    fn feasible_solutions_meet_sinr_targets() {
        let cfg = {
            let mut c = SystemConfig::<f64>::desk_scale();
            c.num_users = 3;
            c.sinr_threshold_db = vec![2.0; 3];
            c.noise_power_dbm = vec![-75.0; 3];
            c
        };
        let ris = RisConfiguration::all_active_unit(&cfg);
        let mut checked = 0;
        for trial in 0..6u64 {
            let ch = generate_channels(&cfg, trial);
            let sol = solve_beamforming(&ch, &ris, &cfg);
            if !sol.is_optimal() {
                continue;
            }
            checked += 1;
            let g = sinr(&ch, &ris, &sol.vectors, &cfg);
            let gamma = cfg.sinr_threshold_linear();
            for k in 0..3 {
                assert!(
                    g[k] >= gamma[k] * (1.0 - 1e-6),
                    "trial {trial}: user {k} SINR {} below target {}",
                    g[k],
                    gamma[k]
                );
                // QoS power minimization leaves no slack at the optimum
                assert!(
                    (g[k] / gamma[k] - 1.0).abs() < 1e-4,
                    "trial {trial}: constraint {k} not active: {} vs {}",
                    g[k],
                    gamma[k]
                );
            }
            assert!(sol.transmit_power_mw <= cfg.max_transmit_power_mw + 1e-6);
        }
        assert!(checked >= 3, "too few feasible trials ({checked})");
    }

    #[test]
    fn objective_monotone_in_thresholds() {
        let mut cfg = {
            let mut c = SystemConfig::<f64>::desk_scale();
            c.num_users = 2;
            c.sinr_threshold_db = vec![1.0; 2];
            c.noise_power_dbm = vec![-75.0; 2];
            c
        };
        let ris = RisConfiguration::all_active_unit(&cfg);
        let ch = generate_channels(&cfg, 3);
        let mut prev = 0.0;
        for db in [0.5, 1.0, 2.0, 4.0] {
            cfg.sinr_threshold_db = vec![db; 2];
            let sol = solve_beamforming(&ch, &ris, &cfg);
            assert_eq!(sol.status, BeamformingStatus::Optimal);
            assert!(
                sol.transmit_power_mw >= prev - 1e-9,
                "power decreased when threshold rose"
            );
            prev = sol.transmit_power_mw;
        }
    }
}
