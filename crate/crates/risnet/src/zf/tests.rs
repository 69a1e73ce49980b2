use super::*;
use crate::netmodel::generate_channels;
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
    cfg.ris_positions = (0..ris).map(|l| [20.0 + 15.0 * l as f64, 35.0, 10.0]).collect();
    cfg.sinr_threshold_db = vec![1.0; users];
    cfg.noise_power_dbm = vec![-75.0; users];
    cfg
}

#[test]
fn partition_even_split() {
    let c = cfg(2, 2, vec![4]);
    let groups = partition_elements(&c).unwrap();
    assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
}

#[test]
fn partition_remainder_to_earlier_users() {
    let c = cfg(2, 2, vec![5]);
    let groups = partition_elements(&c).unwrap();
    assert_eq!(groups[0].len(), 3);
    assert_eq!(groups[1].len(), 2);
    assert_eq!(groups, vec![vec![0, 1, 2], vec![3, 4]]);
}

#[test]
fn partition_single_user_takes_all() {
    let c = cfg(1, 2, vec![4, 3]);
    let groups = partition_elements(&c).unwrap();
    assert_eq!(groups, vec![(0..7).collect::<Vec<_>>()]);
}

#[test]
fn partition_splits_each_ris() {
    let c = cfg(2, 2, vec![4, 4]);
    let groups = partition_elements(&c).unwrap();
    assert_eq!(groups[0], vec![0, 1, 4, 5]);
    assert_eq!(groups[1], vec![2, 3, 6, 7]);
}

#[test]
fn partition_rejects_too_few_elements() {
    let c = cfg(3, 2, vec![2]);
    assert!(matches!(partition_elements(&c), Err(ZfError::TooFewElements { .. })));
}

fn cv(entries: &[(f64, f64)]) -> CVector<f64> {
    CVector::from_iterator(entries.len(), entries.iter().map(|&(r, i)| Complex::new(r, i)))
}

#[test]
fn lemma_condition_boundary_and_violation() {
    // (1, 1): 2 * 1 <= 2 holds with equality
    assert!(zf_feasible(&[cv(&[(1.0, 0.0), (1.0, 0.0)])]));
    // (2, 1): 4 > 3 violates the condition
    assert!(!zf_feasible(&[cv(&[(2.0, 0.0), (1.0, 0.0)])]));
}

#[test]
fn lemma_condition_equal_magnitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for len in 3..8usize {
        let a = CVector::from_fn(len, |_, _| {
            let z = complex_normal::<f64, _>(&mut rng);
            z / Complex::new(z.norm(), 0.0) * Complex::new(0.7, 0.0)
        });
        assert!(zf_feasible(&[a]), "equal-magnitude vector of length {len}");
    }
}

/// Exhaustive PSK search for a unit-modulus vector nulling every interferer
/// within `tol`; used as the Lemma-1 soundness oracle.
pub(crate) fn brute_force_zero_interference(
    interferers: &[CVector<f64>],
    len: usize,
    levels: usize,
    tol: f64,
) -> bool {
    let total = levels.pow(len as u32);
    'outer: for code in 0..total {
        let mut c = code;
        let mut theta = CVector::from_element(len, Complex::new(1.0, 0.0));
        for i in 0..len {
            let ph = 2.0 * std::f64::consts::PI * (c % levels) as f64 / levels as f64;
            c /= levels;
            theta[i] = Complex::new(ph.cos(), ph.sin());
        }
        for a in interferers {
            if theta.dotc(a).norm() > tol {
                continue 'outer;
            }
        }
        return true;
    }
    false
}

#[test]
fn lemma_is_necessary_against_brute_force() {
    // whenever the 16-PSK grid finds a zero-interference unit-modulus vector,
    // the Lemma-1 condition must hold
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for len in 2..=4usize {
        for _ in 0..40 {
            let a = CVector::from_fn(len, |_, _| complex_normal::<f64, _>(&mut rng));
            let tol = 1e-3 * a.norm();
            if brute_force_zero_interference(&[a.clone()], len, 16, tol) {
                assert!(
                    zf_feasible(&[a.clone()]),
                    "grid found a nulling vector but the condition fails: {a:?}"
                );
            }
        }
    }
}

#[test]
fn projector_single_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = CVector::from_fn(4, |_, _| complex_normal::<f64, _>(&mut rng));
    let m = DMatrix::from_fn(4, 1, |r, _| a[r]);
    let q = projector(&m);
    // analytic form I - a a^H / ||a||^2
    let scale = Complex::new(a.norm_squared().recip(), 0.0);
    let want = CMatrix::identity(4, 4) - (&a * a.adjoint()) * scale;
    assert!((&q - &want).norm() < 1e-12);
    assert!((q * a).norm() < 1e-12);
}

#[test]
fn projector_of_zero_matrix_is_identity() {
    let m = DMatrix::from_element(3, 2, Complex::new(0.0, 0.0));
    let q = projector(&m);
    assert!((&q - CMatrix::identity(3, 3)).norm() < 1e-12);
}

#[test]
fn projector_laws_hold_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = 5;
        let cols = 3;
        let a = DMatrix::from_fn(n, cols, |_, _| complex_normal::<f64, _>(&mut rng));
        let q = projector(&a);
        assert!((&q * &q - &q).norm() < 1e-10, "not idempotent");
        assert!((&q - q.adjoint()).norm() < 1e-10, "not Hermitian");
        assert!((&q * &a).norm() < 1e-10, "does not annihilate columns");
    }
}

#[test]
fn phase_opt_without_interferers_aligns() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = CVector::from_fn(4, |_, _| complex_normal::<f64, _>(&mut rng));
    let q = CMatrix::identity(4, 4);
    let params = ZfParams::default();
    let res = zf_phase_opt(&a, &q, &[], &params);
    for i in 0..4 {
        let want = a[i] / Complex::new(a[i].norm(), 0.0);
        assert!((res.theta[i] - want).norm() < 1e-9);
        assert_relative_eq!(res.theta[i].norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn phase_opt_two_element_analytic_null() {
    // signal (1, -1), interferer (1, 1): optimum is theta = (1, -1) up to a
    // global phase, with exactly zero residual
    let a_kk = cv(&[(1.0, 0.0), (-1.0, 0.0)]);
    let interferer = cv(&[(1.0, 0.0), (1.0, 0.0)]);
    let m = DMatrix::from_fn(2, 1, |r, _| interferer[r]);
    let q = projector(&m);
    let res = zf_phase_opt(&a_kk, &q, &[interferer.clone()], &ZfParams::default());
    assert!(res.residuals[0] < 1e-9, "residual {}", res.residuals[0]);
    assert!((res.theta[0] + res.theta[1]).norm() < 1e-9);
    let aligned = res.theta.dotc(&a_kk).norm();
    assert_relative_eq!(aligned, 2.0, epsilon = 1e-9);

    // fine phase-grid brute force over the zero-interference set
    let mut best = 0.0f64;
    let levels = 720;
    for p in 0..levels {
        let ph = 2.0 * std::f64::consts::PI * p as f64 / levels as f64;
        let theta = cv(&[(ph.cos(), ph.sin()), (-ph.cos(), -ph.sin())]);
        best = best.max(theta.dotc(&a_kk).re);
    }
    assert!(aligned >= best - 1e-6);
}

#[test]
fn phase_opt_zero_entry_tie_break() {
    let a = cv(&[(0.0, 0.0), (1.0, 0.0)]);
    let q = CMatrix::identity(2, 2);
    let res = zf_phase_opt(&a, &q, &[], &ZfParams::default());
    assert_eq!(res.theta[0], Complex::new(1.0, 0.0));
}

#[test]
fn phase_opt_objective_non_decreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let n = 6;
        let a_kk = CVector::from_fn(n, |_, _| complex_normal::<f64, _>(&mut rng));
        let ints: Vec<CVector<f64>> =
            (0..2).map(|_| CVector::from_fn(n, |_, _| complex_normal::<f64, _>(&mut rng))).collect();
        let m = DMatrix::from_fn(n, 2, |r, c| ints[c][r]);
        let q = projector(&m);
        let res = zf_phase_opt(&a_kk, &q, &ints, &ZfParams::default());
        for w in res.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "objective decreased: {} -> {}", w[0], w[1]);
        }
        for z in res.theta.iter() {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn theta_step_is_entrywise_optimal() {
    // no entrywise unit-modulus perturbation may improve the objective for
    // the final d
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 5;
    let a_kk = CVector::from_fn(n, |_, _| complex_normal::<f64, _>(&mut rng));
    let ints: Vec<CVector<f64>> =
        (0..2).map(|_| CVector::from_fn(n, |_, _| complex_normal::<f64, _>(&mut rng))).collect();
    let m = DMatrix::from_fn(n, 2, |r, c| ints[c][r]);
    let q = projector(&m);
    let res = zf_phase_opt(&a_kk, &q, &ints, &ZfParams::default());
    let d = &q * &res.theta;
    let delta = res.delta_used;
    let obj = |theta: &CVector<f64>| theta.dotc(&a_kk).re - delta * (theta - &q * &d).norm_squared();
    let base = obj(&res.theta);
    for i in 0..n {
        for step in [0.3, 1.0, 2.7] {
            let mut perturbed = res.theta.clone();
            perturbed[i] *= Complex::from_polar(1.0, step);
            assert!(
                obj(&perturbed) <= base + 1e-9,
                "perturbation of entry {i} by {step} improved the objective"
            );
        }
    }
}

#[test]
fn minimize_power_without_ris_reduces_to_beamforming() {
    let c = cfg(2, 3, vec![]);
    let ch = generate_channels(&c, 1);
    let res = zf_minimize_power(&ch, &c, &ZfParams::default()).unwrap();
    assert_eq!(res.ris.num_active(), 0);
    let direct = beamform::solve_beamforming(
        &ch,
        &RisConfiguration::all_inactive(&c),
        &c,
    );
    assert!(direct.is_optimal());
    assert_relative_eq!(
        res.beamforming.transmit_power_mw,
        direct.transmit_power_mw,
        max_relative = 1e-9
    );
}

#[test]
fn minimize_power_matches_explicit_enumeration() {
    let params = ZfParams::default();
    let mut compared = 0;
    for trial in 0..6u64 {
        let c = cfg(2, 3, vec![3, 3]);
        let ch = generate_channels(&c, trial);
        let result = zf_minimize_power(&ch, &c, &params);
        // independent re-enumeration over all four subsets
        let mut best: Option<f64> = None;
        for mask in 0..4u32 {
            let active: BTreeSet<usize> = (0..2).filter(|&i| mask & (1 << i) != 0).collect();
            if let Some(cand) = evaluate_active_set(&ch, &c, &params, &active) {
                let total = cand.power.total_mw;
                if best.map_or(true, |b| total < b) {
                    best = Some(total);
                }
            }
        }
        match (result, best) {
            (Ok(got), Some(want)) => {
                assert_relative_eq!(got.power.total_mw, want, max_relative = 1e-9);
                compared += 1;
            }
            (Err(ZfError::Infeasible), None) => {}
            (got, want) => panic!("trial {trial}: mismatch {got:?} vs {want:?}"),
        }
    }
    assert!(compared >= 3, "too few comparable trials ({compared})");
}

#[test]
fn search_guard_rejects_large_ris_counts() {
    let mut c = cfg(2, 2, vec![2; 13]);
    c.ris_positions = (0..13).map(|l| [10.0 + l as f64, 30.0, 10.0]).collect();
    let ch = generate_channels(&c, 0);
    assert!(matches!(
        zf_minimize_power(&ch, &c, &ZfParams::default()),
        Err(ZfError::TooManyRis { .. })
    ));
}
