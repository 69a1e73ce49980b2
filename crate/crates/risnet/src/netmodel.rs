//! Scenario configuration, random channel generation, effective channels,
//! SINR evaluation and the network power / energy-efficiency model.
//!
//! Units are fixed here once and for all: every optimization module works in
//! linear units (mW for powers, linear SINR); dB / dBm conversions live in
//! this module only. Channel gains are amplitude gains, so `|h^H w|^2` with
//! `||w||^2` in mW is a received power in mW.
//!
//! Channels are i.i.d. Rayleigh with a pure path-loss large-scale gain
//! `ref_db - 10 * alpha * log10(d)` per link. Generation is a pure function
//! of `(config.seed, trial_index)`: user positions are drawn first, then the
//! direct channels per user, then the BS-to-RIS matrices (column-major), then
//! the RIS-to-user vectors per (RIS, user) pair.

use crate::scalar::{complex_normal, Scalar};
use crate::CVector;
use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("total network power is not positive")]
    ZeroTotalPower,
    #[error("phase vector for active RIS {ris} is not unit modulus at element {element}")]
    NotUnitModulus { ris: usize, element: usize },
}

pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::c(10.0).powf(db / T::c(10.0))
}

pub fn linear_to_db<T: Scalar>(linear: T) -> T {
    T::c(10.0) * linear.log10()
}

/// dBm to milliwatts.
pub fn dbm_to_mw<T: Scalar>(dbm: T) -> T {
    db_to_linear(dbm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserRegion<T> {
    pub center: [T; 3],
    pub radius: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathlossExponents<T> {
    pub bs_user: T,
    pub bs_ris: T,
    pub ris_user: T,
}

/// All scenario constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig<T> {
    pub num_antennas: usize,
    pub num_users: usize,
    pub num_ris: usize,
    pub elements_per_ris: Vec<usize>,
    /// Per-user SINR target, dB.
    pub sinr_threshold_db: Vec<T>,
    /// Per-user noise power, dBm.
    pub noise_power_dbm: Vec<T>,
    pub amplifier_efficiency: T,
    pub max_transmit_power_mw: T,
    pub per_element_power_mw: T,
    pub static_power_mw: T,
    pub bandwidth_hz: T,
    pub bs_position: [T; 3],
    pub ris_positions: Vec<[T; 3]>,
    pub user_region: UserRegion<T>,
    pub pathloss_exponents: PathlossExponents<T>,
    /// Large-scale gain at 1 m, dB.
    pub pathloss_ref_db: T,
    pub seed: u64,
}

impl<T: Scalar> SystemConfig<T> {
    /// Desk-scale default scenario: shrunk array/user/element counts so the
    /// SDP lifting stays small, with the noise floor set so that the default
    /// SINR sweep spans the feasible-to-infeasible transition.
    pub fn desk_scale() -> Self {
        Self {
            num_antennas: 4,
            num_users: 4,
            num_ris: 3,
            elements_per_ris: vec![8, 8, 8],
            sinr_threshold_db: vec![T::c(1.0); 4],
            noise_power_dbm: vec![T::c(-75.0); 4],
            amplifier_efficiency: T::c(0.6),
            max_transmit_power_mw: T::c(1000.0),
            per_element_power_mw: T::c(10.0),
            static_power_mw: T::zero(),
            bandwidth_hz: T::c(1.0e6),
            bs_position: [T::zero(), T::zero(), T::c(10.0)],
            ris_positions: vec![
                [T::zero(), T::c(30.0), T::c(10.0)],
                [T::c(30.0), T::c(70.0), T::c(10.0)],
                [T::c(70.0), T::zero(), T::c(10.0)],
            ],
            user_region: UserRegion {
                center: [T::c(70.0), T::c(40.0), T::zero()],
                radius: T::c(15.0),
            },
            pathloss_exponents: PathlossExponents {
                bs_user: T::c(3.67),
                bs_ris: T::c(2.2),
                ris_user: T::c(2.0),
            },
            pathloss_ref_db: T::c(-30.0),
            seed: 7,
        }
    }

    /// Full-size scenario (large SDP blocks; slow without need).
    pub fn paper_scale() -> Self {
        let mut cfg = Self::desk_scale();
        cfg.num_antennas = 10;
        cfg.num_users = 6;
        cfg.elements_per_ris = vec![20, 20, 20];
        cfg.sinr_threshold_db = vec![T::c(1.0); 6];
        cfg.noise_power_dbm = vec![T::c(-40.0); 6];
        cfg
    }

    pub fn total_elements(&self) -> usize {
        self.elements_per_ris.iter().sum()
    }

    /// Per-user SINR threshold, linear.
    pub fn sinr_threshold_linear(&self) -> Vec<T> {
        self.sinr_threshold_db.iter().map(|&d| db_to_linear(d)).collect()
    }

    /// Per-user noise power, mW.
    pub fn noise_mw(&self) -> Vec<T> {
        self.noise_power_dbm.iter().map(|&d| dbm_to_mw(d)).collect()
    }

    /// RIS element power `P_RIS(N_l) = N_l * P_RE` in mW.
    pub fn ris_power_mw(&self, l: usize) -> T {
        T::c(self.elements_per_ris[l] as f64) * self.per_element_power_mw
    }

    pub fn set_uniform_sinr_db(&mut self, value: T) {
        self.sinr_threshold_db = vec![value; self.num_users];
    }

    pub fn validate(&self) -> Result<(), NetModelError> {
        let err = |m: String| Err(NetModelError::InvalidConfig(m));
        if self.num_antennas == 0 || self.num_users == 0 {
            return err("num_antennas and num_users must be positive".into());
        }
        if self.elements_per_ris.len() != self.num_ris {
            return err(format!(
                "elements_per_ris has {} entries, expected {}",
                self.elements_per_ris.len(),
                self.num_ris
            ));
        }
        if self.elements_per_ris.iter().any(|&n| n == 0) {
            return err("every RIS needs at least one element".into());
        }
        if self.ris_positions.len() != self.num_ris {
            return err(format!(
                "ris_positions has {} entries, expected {}",
                self.ris_positions.len(),
                self.num_ris
            ));
        }
        for (name, v) in [
            ("sinr_threshold_db", &self.sinr_threshold_db),
            ("noise_power_dbm", &self.noise_power_dbm),
        ] {
            if v.len() != self.num_users {
                return err(format!("{name} must have one entry per user"));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return err(format!("{name} entries must be finite"));
            }
        }
        if !(self.amplifier_efficiency > T::zero() && self.amplifier_efficiency <= T::one()) {
            return err("amplifier_efficiency must be in (0, 1]".into());
        }
        if !(self.max_transmit_power_mw > T::zero()) {
            return err("max_transmit_power_mw must be positive".into());
        }
        if self.per_element_power_mw < T::zero() || self.static_power_mw < T::zero() {
            return err("power constants must be nonnegative".into());
        }
        if !(self.bandwidth_hz > T::zero()) {
            return err("bandwidth_hz must be positive".into());
        }
        Ok(())
    }
}

/// One draw of all direct, BS-to-RIS and RIS-to-user channel responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    /// `h_{d,k}`, length M, one per user.
    pub direct: Vec<CVector<T>>,
    /// `T_l`, `N_l x M`, one per RIS.
    pub bs_to_ris: Vec<DMatrix<Complex<T>>>,
    /// `h_{l,k}`, length `N_l`, indexed `[ris][user]`.
    pub ris_to_user: Vec<Vec<CVector<T>>>,
    /// Drawn user positions (metres), kept for diagnostics.
    pub user_positions: Vec<[T; 3]>,
}

impl<T: Scalar> ChannelRealization<T> {
    pub fn num_users(&self) -> usize {
        self.direct.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.direct.first().map_or(0, |h| h.len())
    }

    pub fn num_ris(&self) -> usize {
        self.bs_to_ris.len()
    }

    /// Sub-instance containing only the listed users (in the given order).
    pub fn restrict_users(&self, users: &[usize]) -> Self {
        Self {
            direct: users.iter().map(|&k| self.direct[k].clone()).collect(),
            bs_to_ris: self.bs_to_ris.clone(),
            ris_to_user: self
                .ris_to_user
                .iter()
                .map(|per_user| users.iter().map(|&k| per_user[k].clone()).collect())
                .collect(),
            user_positions: users.iter().map(|&k| self.user_positions[k]).collect(),
        }
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-(seed, stream) RNG used for channel draws and the
/// random-phase baseline.
pub(crate) fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

fn distance<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let mut s = T::zero();
    for i in 0..3 {
        let d = a[i] - b[i];
        s += d * d;
    }
    // 1 m floor keeps the path-loss law finite for degenerate geometry
    s.sqrt().max(T::one())
}

/// Amplitude gain of a link: `10^((ref_db - 10 alpha log10(d)) / 20)`.
fn amplitude_gain<T: Scalar>(ref_db: T, alpha: T, dist: T) -> T {
    let gain_db = ref_db - T::c(10.0) * alpha * dist.log10();
    T::c(10.0).powf(gain_db / T::c(20.0))
}

/// Draw one channel realization. Pure function of `(config.seed, trial_index)`.
pub fn generate_channels<T: Scalar>(config: &SystemConfig<T>, trial_index: u64) -> ChannelRealization<T> {
    use rand::Rng;
    let mut rng = derive_rng(config.seed, trial_index);
    let m = config.num_antennas;
    let two_pi = T::two_pi();

    let mut user_positions = Vec::with_capacity(config.num_users);
    for _ in 0..config.num_users {
        let u: T = T::c(rng.random::<f64>());
        let v: T = T::c(rng.random::<f64>());
        let r = config.user_region.radius * u.sqrt();
        let phi = two_pi * v;
        let c = &config.user_region.center;
        user_positions.push([c[0] + r * phi.cos(), c[1] + r * phi.sin(), c[2]]);
    }

    let mut direct = Vec::with_capacity(config.num_users);
    for pos in &user_positions {
        let g = amplitude_gain(
            config.pathloss_ref_db,
            config.pathloss_exponents.bs_user,
            distance(&config.bs_position, pos),
        );
        let gz = Complex::new(g, T::zero());
        direct.push(CVector::from_fn(m, |_, _| complex_normal::<T, _>(&mut rng) * gz));
    }

    let mut bs_to_ris = Vec::with_capacity(config.num_ris);
    for l in 0..config.num_ris {
        let n_l = config.elements_per_ris[l];
        let g = amplitude_gain(
            config.pathloss_ref_db,
            config.pathloss_exponents.bs_ris,
            distance(&config.bs_position, &config.ris_positions[l]),
        );
        let gz = Complex::new(g, T::zero());
        let entries: Vec<Complex<T>> =
            (0..n_l * m).map(|_| complex_normal::<T, _>(&mut rng) * gz).collect();
        bs_to_ris.push(DMatrix::from_vec(n_l, m, entries));
    }

    let mut ris_to_user = Vec::with_capacity(config.num_ris);
    for l in 0..config.num_ris {
        let n_l = config.elements_per_ris[l];
        let mut per_user = Vec::with_capacity(config.num_users);
        for pos in &user_positions {
            let g = amplitude_gain(
                config.pathloss_ref_db,
                config.pathloss_exponents.ris_user,
                distance(&config.ris_positions[l], pos),
            );
            let gz = Complex::new(g, T::zero());
            per_user.push(CVector::from_fn(n_l, |_, _| complex_normal::<T, _>(&mut rng) * gz));
        }
        ris_to_user.push(per_user);
    }

    ChannelRealization { direct, bs_to_ris, ris_to_user, user_positions }
}

/// Active-RIS index set plus per-RIS phase vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RisConfiguration<T> {
    pub active: BTreeSet<usize>,
    /// Unit-modulus phase vector per RIS (entries of inactive RIS are unused).
    pub phases: Vec<CVector<T>>,
}

impl<T: Scalar> RisConfiguration<T> {
    /// All RIS active with zero phase shifts (all-ones coefficients).
    pub fn all_active_unit(config: &SystemConfig<T>) -> Self {
        Self {
            active: (0..config.num_ris).collect(),
            phases: config
                .elements_per_ris
                .iter()
                .map(|&n| CVector::from_element(n, Complex::new(T::one(), T::zero())))
                .collect(),
        }
    }

    /// Every RIS switched off.
    pub fn all_inactive(config: &SystemConfig<T>) -> Self {
        Self {
            active: BTreeSet::new(),
            phases: config
                .elements_per_ris
                .iter()
                .map(|&n| CVector::from_element(n, Complex::new(T::zero(), T::zero())))
                .collect(),
        }
    }

    pub fn is_active(&self, l: usize) -> bool {
        self.active.contains(&l)
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    /// Check `|theta| = 1` within 1e-9 on every element of every active RIS.
    pub fn validate_unit_modulus(&self) -> Result<(), NetModelError> {
        let tol = T::c(1e-9);
        for &l in &self.active {
            for (i, z) in self.phases[l].iter().enumerate() {
                if (z.norm_sqr().sqrt() - T::one()).abs() > tol {
                    return Err(NetModelError::NotUnitModulus { ris: l, element: i });
                }
            }
        }
        Ok(())
    }
}

/// Solver outcome for a beamforming subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamformingStatus {
    Optimal,
    Infeasible,
    SolverFailure,
}

/// Per-user transmit vectors with feasibility status.
#[derive(Debug, Clone)]
pub struct BeamformingSolution<T> {
    pub vectors: Vec<CVector<T>>,
    pub status: BeamformingStatus,
    /// `sum_k ||w_k||^2`, mW (0 unless `Optimal`).
    pub transmit_power_mw: T,
}

impl<T: Scalar> BeamformingSolution<T> {
    pub fn infeasible() -> Self {
        Self { vectors: Vec::new(), status: BeamformingStatus::Infeasible, transmit_power_mw: T::zero() }
    }

    pub fn failure() -> Self {
        Self { vectors: Vec::new(), status: BeamformingStatus::SolverFailure, transmit_power_mw: T::zero() }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == BeamformingStatus::Optimal
    }
}

/// Network power split per the linear consumption model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown<T> {
    /// `sum ||w_k||^2 / eta`.
    pub transmit_mw: T,
    /// `sum_{l active} N_l * P_RE`.
    pub ris_mw: T,
    pub static_mw: T,
    pub total_mw: T,
}

/// Effective channel `h_k` of user `k`: the received amplitude of stream `j`
/// is `h_k^H w_j`. Inactive RIS contribute nothing.
pub fn effective_channel<T: Scalar>(
    channels: &ChannelRealization<T>,
    ris: &RisConfiguration<T>,
    user: usize,
) -> CVector<T> {
    let mut h = channels.direct[user].clone();
    for &l in &ris.active {
        let t_l = &channels.bs_to_ris[l];
        let h_lk = &channels.ris_to_user[l][user];
        let theta = &ris.phases[l];
        debug_assert_eq!(t_l.nrows(), h_lk.len());
        debug_assert_eq!(t_l.nrows(), theta.len());
        // h += T_l^H diag(theta)^H h_{l,k}
        let scaled = CVector::from_fn(h_lk.len(), |n, _| theta[n].conj() * h_lk[n]);
        h += t_l.adjoint() * scaled;
    }
    h
}

/// Per-user linear SINR of the given beamformers.
pub fn sinr<T: Scalar>(
    channels: &ChannelRealization<T>,
    ris: &RisConfiguration<T>,
    vectors: &[CVector<T>],
    config: &SystemConfig<T>,
) -> Vec<T> {
    let noise = config.noise_mw();
    let k_users = channels.num_users();
    assert_eq!(vectors.len(), k_users, "one beamformer per user expected");
    let mut out = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let h = effective_channel(channels, ris, k);
        let mut signal = T::zero();
        let mut interference = T::zero();
        for (j, w) in vectors.iter().enumerate() {
            let amp = h.dotc(w).norm_sqr();
            if j == k {
                signal = amp;
            } else {
                interference += amp;
            }
        }
        out.push(signal / (interference + noise[k]));
    }
    out
}

/// Network power of a configuration (the static term is reported separately
/// and excluded from optimization objectives).
pub fn network_power<T: Scalar>(
    ris: &RisConfiguration<T>,
    vectors: &[CVector<T>],
    config: &SystemConfig<T>,
) -> PowerBreakdown<T> {
    let tx_raw: T = vectors.iter().map(|w| w.norm_squared()).sum();
    let transmit_mw = tx_raw / config.amplifier_efficiency;
    let ris_mw: T = ris.active.iter().map(|&l| config.ris_power_mw(l)).sum();
    let static_mw = config.static_power_mw;
    PowerBreakdown { transmit_mw, ris_mw, static_mw, total_mw: transmit_mw + ris_mw + static_mw }
}

/// Sum-rate per joule: `sum_k B log2(1 + gamma_k) / P_total`, with `P_total`
/// in watts and including the static term.
pub fn energy_efficiency<T: Scalar>(
    channels: &ChannelRealization<T>,
    ris: &RisConfiguration<T>,
    vectors: &[CVector<T>],
    config: &SystemConfig<T>,
) -> Result<T, NetModelError> {
    let power = network_power(ris, vectors, config);
    if !(power.total_mw > T::zero()) {
        return Err(NetModelError::ZeroTotalPower);
    }
    let gammas = sinr(channels, ris, vectors, config);
    let rate: T = gammas
        .iter()
        .map(|&g| config.bandwidth_hz * (T::one() + g).log2())
        .sum();
    Ok(rate / (power.total_mw / T::c(1000.0)))
}
