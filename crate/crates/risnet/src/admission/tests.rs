use super::*;
use crate::netmodel::{self, generate_channels};
use crate::scalar::complex_normal;
use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(users: usize, antennas: usize, elements: Vec<usize>) -> SystemConfig<f64> {
    let ris = elements.len();
    let mut cfg = SystemConfig::<f64>::desk_scale();
    cfg.num_users = users;
    cfg.num_antennas = antennas;
    cfg.num_ris = ris;
    cfg.elements_per_ris = elements;
    cfg.ris_positions = (0..ris).map(|l| [25.0 + 10.0 * l as f64, 40.0, 10.0]).collect();
    cfg.sinr_threshold_db = vec![1.0; users];
    cfg.noise_power_dbm = vec![-75.0; users];
    cfg
}

#[test]
fn zero_power_budget_forces_full_slack() {
    // P_max = 0: W_k = 0 and v_k = gamma_k sigma_k^2 exactly
    let mut c = cfg(2, 2, vec![2]);
    c.max_transmit_power_mw = 0.0;
    let ch = generate_channels(&c, 0);
    let ris = RisConfiguration::all_active_unit(&c);
    let sol = solve_beamforming_slack(&ch, &ris, &c, &AdmissionParams::default()).unwrap();
    let gamma = c.sinr_threshold_linear();
    let noise = c.noise_mw();
    for k in 0..2 {
        assert!(sol.vectors[k].norm_squared() < 1e-12);
        assert_relative_eq!(sol.slacks[k], gamma[k] * noise[k], max_relative = 1e-4);
    }
}

#[test]
fn easy_instance_matches_plain_beamforming() {
    // generous budget and mild targets: slacks vanish and the extracted
    // beamformers spend the same power as the SOCP formulation
    let c = cfg(2, 4, vec![2]);
    let mut checked = 0;
    for trial in 0..6u64 {
        let ch = generate_channels(&c, trial);
        let ris = RisConfiguration::all_active_unit(&c);
        let Some(reference) = reference_power(&ch, &ris, &c) else {
            continue;
        };
        let sol = solve_beamforming_slack(&ch, &ris, &c, &AdmissionParams::default()).unwrap();
        let gamma = c.sinr_threshold_linear();
        let noise = c.noise_mw();
        for k in 0..2 {
            assert!(
                sol.slacks[k] <= 1e-6 * gamma[k] * noise[k].max(1e-30) + 1e-12,
                "trial {trial}: slack {} not negligible",
                sol.slacks[k]
            );
        }
        let power: f64 = sol.vectors.iter().map(|w| w.norm_squared()).sum();
        assert_relative_eq!(power, reference, max_relative = 1e-2);
        assert!(sol.max_rank_gap_rel <= 1e-4);
        checked += 1;
    }
    assert!(checked >= 3, "too few feasible trials");
}

#[test]
fn duplicated_channels_concentrate_slack() {
    // two users with identical channels cannot both meet a high target; at
    // the optimum exactly one carries a large slack
    let mut c = cfg(2, 2, vec![]);
    c.num_ris = 0;
    c.elements_per_ris.clear();
    c.ris_positions.clear();
    c.sinr_threshold_db = vec![6.0; 2];
    c.noise_power_dbm = vec![-20.0; 2];
    c.max_transmit_power_mw = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = crate::CVector::from_fn(2, |_, _| complex_normal::<f64, _>(&mut rng));
    let ch = ChannelRealization {
        direct: vec![h.clone(), h.clone()],
        bs_to_ris: vec![],
        ris_to_user: vec![],
        user_positions: vec![[0.0, 0.0, 0.0]; 2],
    };
    let ris = RisConfiguration::all_inactive(&c);
    let sol = solve_beamforming_slack(&ch, &ris, &c, &AdmissionParams::default()).unwrap();
    // with gamma > 1 (linear) and co-linear channels, any transmitted power
    // costs the other user more than it gains: the slack optimum is W = 0
    // with both slacks at exactly gamma sigma^2
    let gamma = c.sinr_threshold_linear()[0];
    let noise = c.noise_mw()[0];
    for k in 0..2 {
        assert!(sol.vectors[k].norm_squared() < 1e-3, "power should vanish");
        assert_relative_eq!(sol.slacks[k], gamma * noise, max_relative = 1e-3);
    }
    // exhaustive subset check: each user alone is servable, both jointly not
    for k in 0..2 {
        let sub = ch.restrict_users(&[k]);
        let sub_cfg = restrict_config(&c, &[k]);
        assert!(reference_power(&sub, &RisConfiguration::all_inactive(&sub_cfg), &sub_cfg).is_some());
    }
    assert!(reference_power(&ch, &ris, &c).is_none(), "joint instance must be infeasible");
}

#[test]
fn phase_feasibility_trivial_with_large_slacks() {
    let c = cfg(2, 2, vec![2, 2]);
    let ch = generate_channels(&c, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w: Vec<crate::CVector<f64>> =
        (0..2).map(|_| crate::CVector::from_fn(2, |_, _| complex_normal(&mut rng))).collect();
    let slacks = vec![1e-4; 2]; // ~3000x the received-power requirement
    match solve_phase_feasibility_slack(&ch, &w, &slacks, &c, &AdmissionParams::default()) {
        PhaseFeasibility::Feasible { stacked, .. } => {
            for z in stacked.iter() {
                assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-9);
            }
        }
        other => panic!("expected feasible, got {other:?}"),
    }
}

#[test]
fn phase_feasibility_rank_one_start_terminates_immediately() {
    // all-ones phases already satisfy the slack-covered constraints, and the
    // all-ones start is rank one: accepted without any DC iteration
    let c = cfg(1, 2, vec![2]);
    let ch = generate_channels(&c, 2);
    let ris = RisConfiguration::all_active_unit(&c);
    let w = beamform::solve_beamforming(&ch, &ris, &c);
    assert!(w.is_optimal());
    let slacks = vec![1.0];
    match solve_phase_feasibility_slack(&ch, &w.vectors, &slacks, &c, &AdmissionParams::default())
    {
        PhaseFeasibility::Feasible { log, stacked } => {
            assert!(log.is_empty(), "incumbent phases should be accepted directly");
            for z in stacked.iter() {
                assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
            }
        }
        other => panic!("expected feasible, got {other:?}"),
    }
}

#[test]
fn phase_feasibility_matches_psk_oracle_on_tiny_instance() {
    // N_total = 2, K = 1, v = 0: whenever a 64-PSK sweep satisfies the
    // target with a 2% margin, the DC check must find phases too
    let mut hits = 0;
    for trial in 0..10u64 {
        let mut c = cfg(1, 2, vec![2]);
        c.noise_power_dbm = vec![-75.0];
        let ch = generate_channels(&c, trial);
        let ris = RisConfiguration::all_active_unit(&c);
        c.sinr_threshold_db = vec![0.0];
        let w = beamform::solve_beamforming(&ch, &ris, &c);
        if !w.is_optimal() {
            continue;
        }
        let lifting = build_lifting(&ch, &w.vectors);
        let noise = c.noise_mw();
        let mut best = 0.0f64;
        for p in 0..64 {
            for q in 0..64 {
                let ph1 = 2.0 * std::f64::consts::PI * p as f64 / 64.0;
                let ph2 = 2.0 * std::f64::consts::PI * q as f64 / 64.0;
                let theta = crate::CVector::from_vec(vec![
                    Complex::new(ph1.cos(), ph1.sin()),
                    Complex::new(ph2.cos(), ph2.sin()),
                ]);
                best = best.max(lifting.sinr_from_phases(&theta, &noise)[0]);
            }
        }
        // ask for the grid optimum minus a 2% margin
        c.sinr_threshold_db = vec![netmodel::linear_to_db(0.98 * best)];
        let outcome = solve_phase_feasibility_slack(
            &ch,
            &w.vectors,
            &[0.0],
            &c,
            &AdmissionParams::default(),
        );
        let stacked = match outcome {
            PhaseFeasibility::Feasible { stacked, .. }
            | PhaseFeasibility::Approximate { stacked, .. } => stacked,
            other => panic!("trial {trial}: expected phases, got {other:?}"),
        };
        let achieved = lifting.sinr_from_phases(&stacked, &noise)[0];
        assert!(
            achieved >= 0.98 * best * (1.0 - 1e-3),
            "trial {trial}: achieved {achieved} vs grid {best}"
        );
        hits += 1;
    }
    assert!(hits >= 5, "too few usable trials ({hits})");
}

#[test]
fn algorithm2_easy_instance_drives_slack_down() {
    let c = cfg(2, 4, vec![2]);
    let ch = generate_channels(&c, 3);
    let alg2 = run_algorithm2(&ch, &c, &AdmissionParams::default()).unwrap();
    let gamma = c.sinr_threshold_linear();
    let noise = c.noise_mw();
    for k in 0..2 {
        assert!(
            alg2.slacks[k] <= 1e-3 * gamma[k] * noise[k],
            "slack {} should be negligible",
            alg2.slacks[k]
        );
    }
    // objective log per round is non-increasing within tolerance
    for w in alg2.objective_per_round.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-6 * w[0].abs().max(1.0),
            "round objective increased: {w:?}"
        );
    }
}

#[test]
fn algorithm2_infeasible_instance_keeps_slack() {
    let mut c = cfg(3, 2, vec![2]);
    c.sinr_threshold_db = vec![12.0; 3];
    c.max_transmit_power_mw = 5.0;
    c.noise_power_dbm = vec![-40.0; 3];
    let ch = generate_channels(&c, 0);
    let alg2 = run_algorithm2(&ch, &c, &AdmissionParams::default()).unwrap();
    let gamma = c.sinr_threshold_linear();
    let noise = c.noise_mw();
    let big = alg2
        .slacks
        .iter()
        .enumerate()
        .filter(|&(k, &v)| v > 0.1 * gamma[k] * noise[k])
        .count();
    assert!(big >= 1, "expected at least one structurally large slack");
}

#[test]
fn admission_keeps_everyone_on_feasible_instances() {
    let c = cfg(2, 4, vec![2]);
    let ch = generate_channels(&c, 4);
    let out = admission_control(&ch, &c, &AdmissionParams::default()).unwrap();
    assert_eq!(out.admitted.len(), 2);
    assert!(out.dropped_order.is_empty());
    let achieved = netmodel::sinr(&ch, &out.ris, &out.beamformers, &c);
    let gamma = c.sinr_threshold_linear();
    for k in 0..2 {
        assert!(achieved[k] >= gamma[k] * (1.0 - 1e-3));
    }
}

#[test]
fn admission_drops_one_of_two_duplicated_users() {
    let mut c = cfg(2, 2, vec![]);
    c.num_ris = 0;
    c.elements_per_ris.clear();
    c.ris_positions.clear();
    c.sinr_threshold_db = vec![6.0; 2];
    c.noise_power_dbm = vec![-20.0; 2];
    c.max_transmit_power_mw = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = crate::CVector::from_fn(2, |_, _| complex_normal::<f64, _>(&mut rng));
    let ch = ChannelRealization {
        direct: vec![h.clone(), h],
        bs_to_ris: vec![],
        ris_to_user: vec![],
        user_positions: vec![[0.0, 0.0, 0.0]; 2],
    };
    let out = admission_control(&ch, &c, &AdmissionParams::default()).unwrap();
    assert_eq!(out.admitted.len(), 1, "exactly one duplicated user is servable");
    assert_eq!(out.dropped_order.len(), 1);
    // terminates in at most K rounds with shrinking candidate sets
    assert!(out.slack_history.len() <= 2);
}

#[test]
fn admission_empty_set_under_zero_budget() {
    let mut c = cfg(2, 2, vec![2]);
    c.max_transmit_power_mw = 1e-9;
    c.sinr_threshold_db = vec![20.0; 2];
    c.noise_power_dbm = vec![-20.0; 2];
    let ch = generate_channels(&c, 0);
    let out = admission_control(&ch, &c, &AdmissionParams::default()).unwrap();
    assert!(out.admitted.is_empty());
    assert_eq!(out.dropped_order.len(), 2);
}

#[test]
fn unified_entry_feasible_matches_power_min() {
    let c = cfg(2, 3, vec![2, 2]);
    let ch = generate_channels(&c, 6);
    let pp = PowerMinParams::default();
    let direct = minimize_network_power(&ch, &c, &pp);
    let unified = unified_entry(&ch, &c, &pp, &AdmissionParams::default()).unwrap();
    match (direct, unified) {
        (Ok(a), UnifiedOutcome::PowerMin(b)) => {
            assert_relative_eq!(a.power.total_mw, b.power.total_mw, max_relative = 1e-12);
            assert_eq!(a.ris.active, b.ris.active);
        }
        (Err(RisSelectError::Infeasible), UnifiedOutcome::Admission { .. }) => {}
        other => panic!("inconsistent dispatch: {other:?}"),
    }
}

#[test]
fn unified_entry_falls_back_and_refines() {
    let mut c = cfg(3, 2, vec![2]);
    c.sinr_threshold_db = vec![10.0; 3];
    c.max_transmit_power_mw = 5.0;
    c.noise_power_dbm = vec![-40.0; 3];
    let ch = generate_channels(&c, 1);
    match unified_entry(&ch, &c, &PowerMinParams::default(), &AdmissionParams::default()).unwrap()
    {
        UnifiedOutcome::Admission { outcome, refined } => {
            assert!(outcome.admitted.len() < 3, "fallback implies someone was dropped");
            if let Some(r) = refined {
                // refined solution must respect the budget and the QoS of
                // the admitted users
                assert!(r.beamforming.transmit_power_mw <= c.max_transmit_power_mw + 1e-6);
                let users: Vec<usize> = outcome.admitted.iter().copied().collect();
                let sub = ch.restrict_users(&users);
                let sub_cfg = restrict_config(&c, &users);
                let achieved = netmodel::sinr(&sub, &r.ris, &r.beamforming.vectors, &sub_cfg);
                let gamma = sub_cfg.sinr_threshold_linear();
                for (s, g) in achieved.iter().zip(&gamma) {
                    assert!(s >= &(g * (1.0 - 1e-6)));
                }
            }
        }
        UnifiedOutcome::PowerMin(_) => panic!("instance was built to be infeasible"),
    }
}
