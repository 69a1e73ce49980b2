// Scratch diagnostics for solver behavior on admission corner cases (not part
// of the library).
use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risnet::admission::{
    restrict_config, solve_beamforming_slack, solve_phase_feasibility_slack, AdmissionParams,
    PhaseFeasibility,
};
use risnet::netmodel::{
    generate_channels, sinr, ChannelRealization, RisConfiguration, SystemConfig,
};
use risnet::ris_select::{minimize_network_power, PowerMinParams};
use risnet::scalar::complex_normal;
use risnet::CVector;
use risnet::beamform;

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

fn main() {
    // case 1: duplicated channels
    let mut c = cfg(2, 2, vec![]);
    c.num_ris = 0;
    c.elements_per_ris.clear();
    c.ris_positions.clear();
    c.sinr_threshold_db = vec![6.0; 2];
    c.noise_power_dbm = vec![-20.0; 2];
    c.max_transmit_power_mw = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = CVector::from_fn(2, |_, _| complex_normal::<f64, _>(&mut rng));
    let ch = ChannelRealization {
        direct: vec![h.clone(), h.clone()],
        bs_to_ris: vec![],
        ris_to_user: vec![],
        user_positions: vec![[0.0, 0.0, 0.0]; 2],
    };
    let ris = RisConfiguration::all_inactive(&c);
    let sol = solve_beamforming_slack(&ch, &ris, &c, &AdmissionParams::default()).unwrap();
    println!(
        "dup: powers {:?} slacks {:?} (want 0 / {:.3e})",
        sol.vectors.iter().map(|w| w.norm_squared()).collect::<Vec<_>>(),
        sol.slacks,
        c.sinr_threshold_linear()[0] * c.noise_mw()[0]
    );
    println!("dup log: {:?}", sol.log.iter().map(|l| l.objective).collect::<Vec<_>>());

    // case 2: phase feasibility with large slack
    let c = cfg(2, 2, vec![2, 2]);
    let ch = generate_channels(&c, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w: Vec<CVector<f64>> =
        (0..2).map(|_| CVector::from_fn(2, |_, _| complex_normal(&mut rng))).collect();
    let slacks = vec![1e-4; 2];
    match solve_phase_feasibility_slack(&ch, &w, &slacks, &c, &AdmissionParams::default()) {
        PhaseFeasibility::Feasible { .. } => println!("phase: feasible"),
        PhaseFeasibility::Approximate { .. } => println!("phase: approximate"),
        PhaseFeasibility::Infeasible => println!("phase: infeasible"),
        PhaseFeasibility::SolverFailure => println!("phase: solver failure"),
    }

    // case 3: power-min solver failure on trial 6
    let c = cfg(2, 3, vec![2, 2]);
    let mut c2 = c.clone();
    c2.ris_positions = (0..2).map(|l| [25.0 + 10.0 * l as f64, 40.0, 10.0]).collect();
    let ch = generate_channels(&c2, 6);
    match minimize_network_power(&ch, &c2, &PowerMinParams::default()) {
        Ok(r) => println!("pm: ok total={:.3}", r.power.total_mw),
        Err(e) => {
            println!("pm: err {e:?}");
            let ris = RisConfiguration::all_active_unit(&c2);
            let w = beamform::solve_beamforming(&ch, &ris, &c2);
            println!("  first bf: {:?} tx={:.4}", w.status, w.transmit_power_mw);
            if w.is_optimal() {
                let val = sinr(&ch, &ris, &w.vectors, &c2);
                let gam = c2.sinr_threshold_linear();
                println!("  sinr margins: {:?}", val.iter().zip(&gam).map(|(s, g)| s / g).collect::<Vec<_>>());
            }
            let _ = restrict_config(&c2, &[0]);
        }
    }
}
