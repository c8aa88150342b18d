//! Reinforcement-learning environment over one IRS-assisted MU-MISO cell.
//!
//! Action layout (length 2MK + 2N, entries in [-1, 1]):
//!
//! | slots                  | meaning                                   |
//! |------------------------|-------------------------------------------|
//! | `2(kM + m)`, `+1`      | Re, Im of the raw precoder entry G[m, k]  |
//! | `2MK + 2i`, `+1`       | (u_i, v_i) with θ_i = atan2(v_i, u_i)     |
//!
//! The raw precoder is scaled to full power before use.
//!
//! State layout (length 2K + (2MK + 2N) + 2NM + 2NK + 2MK):
//!
//! 1. transmit power ‖g_k‖² of each user (K)
//! 2. received signal power |h̃_kᵀ g_k|² of each user (K)
//! 3. the previous action verbatim
//! 4. Re, Im of H1 in row-major order (2NM)
//! 5. Re, Im of each h_{r,k}, user by user (2NK)
//! 6. Re, Im of each h_{d,k}, user by user (2MK)

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    sample_realization, CMatrix, ChannelConfig, ChannelRealization, SystemGeometry,
};
use crate::error::{check_dim, Error, Result};
use crate::miso::{
    effective_channels, project_power, spectral_efficiency_from_effective, BeamformingMatrix,
    PhaseShiftMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub channel: ChannelConfig,
    pub geometry: SystemGeometry,
    /// Linear transmit power budget Pt.
    pub pt: f64,
    /// Steps per episode (one coherence block).
    pub episode_length: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            geometry: SystemGeometry::default(),
            pt: crate::channel::db_to_linear(30.0),
            episode_length: 100,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.geometry.validate()?;
        if !(self.pt > 0.0 && self.pt.is_finite()) {
            return Err(Error::config(
                "pt_db",
                "transmit power must be finite and > 0",
            ));
        }
        if self.episode_length == 0 {
            return Err(Error::config("episode_length", "must be >= 1"));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims::new(
            self.channel.num_bs_antennas,
            self.channel.num_irs_elements,
            self.channel.num_users,
        )
    }
}

/// System sizes and the derived vector lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize, k: usize) -> Self {
        Self { m, n, k }
    }

    pub fn action_dim(&self) -> usize {
        2 * self.m * self.k + 2 * self.n
    }

    pub fn state_dim(&self) -> usize {
        2 * self.k
            + self.action_dim()
            + 2 * self.n * self.m
            + 2 * self.n * self.k
            + 2 * self.m * self.k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvAction {
    pub raw: Vec<f64>,
}

impl EnvAction {
    pub fn new(raw: Vec<f64>) -> Self {
        Self { raw }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            raw: vec![0.0; dims.action_dim()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub raw: Vec<f64>,
}

impl EnvState {
    pub fn is_finite(&self) -> bool {
        self.raw.iter().all(|v| v.is_finite())
    }
}

/// Maps a real action vector onto (G, Φ), enforcing the power budget and unit modulus.
pub fn decode_action(
    a: &EnvAction,
    dims: Dims,
    pt: f64,
) -> Result<(BeamformingMatrix, PhaseShiftMatrix)> {
    check_dim("action", dims.action_dim(), a.raw.len())?;
    let (m, k) = (dims.m, dims.k);
    let raw = &a.raw;
    let g = CMatrix::from_fn(m, k, |row, col| {
        let p = 2 * (col * m + row);
        Complex64::new(raw[p], raw[p + 1])
    });
    let g = project_power(g, pt)?;
    let offset = 2 * m * k;
    let phi = PhaseShiftMatrix::from_phases((0..dims.n).map(|i| {
        let (u, v) = (raw[offset + 2 * i], raw[offset + 2 * i + 1]);
        // atan2(0, 0) is 0 in IEEE, but -0.0 inputs give ±π
        if u == 0.0 && v == 0.0 {
            0.0
        } else {
            v.atan2(u)
        }
    }));
    Ok((g, phi))
}

pub fn encode_state(
    real: &ChannelRealization,
    prev_action: &EnvAction,
    g: &BeamformingMatrix,
    phi: &PhaseShiftMatrix,
) -> Result<EnvState> {
    let dims = Dims::new(
        real.num_bs_antennas(),
        real.num_irs_elements(),
        real.num_users(),
    );
    check_dim("previous action", dims.action_dim(), prev_action.raw.len())?;
    check_dim("precoder rows", dims.m, g.num_antennas())?;
    check_dim("precoder columns", dims.k, g.num_users())?;

    let effective = effective_channels(real, phi)?;
    let mut raw = Vec::with_capacity(dims.state_dim());
    raw.extend((0..dims.k).map(|k| g.column_power(k)));
    raw.extend(
        effective
            .iter()
            .enumerate()
            .map(|(k, h)| h.dot(&g.matrix().column(k)).norm_sqr()),
    );
    raw.extend_from_slice(&prev_action.raw);
    let mut push = |z: &Complex64| {
        raw.push(z.re);
        raw.push(z.im);
    };
    for i in 0..dims.n {
        for j in 0..dims.m {
            push(&real.h1[(i, j)]);
        }
    }
    real.h_r.iter().flat_map(|v| v.iter()).for_each(&mut push);
    real.h_d.iter().flat_map(|v| v.iter()).for_each(&mut push);
    debug_assert_eq!(raw.len(), dims.state_dim());
    Ok(EnvState { raw })
}

/// Single-cell environment. Channels are drawn at `reset` and held for the episode.
#[derive(Debug, Clone)]
pub struct IrsEnv {
    config: EnvConfig,
    dims: Dims,
    realization: Option<ChannelRealization>,
    prev_action: EnvAction,
}

impl IrsEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.dims();
        Ok(Self {
            config,
            dims,
            realization: None,
            prev_action: EnvAction::zeros(dims),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn state_dim(&self) -> usize {
        self.dims.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.dims.action_dim()
    }

    pub fn realization(&self) -> Option<&ChannelRealization> {
        self.realization.as_ref()
    }

    /// Starts a new coherence block with freshly placed users.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EnvState> {
        let real = sample_realization(&self.config.channel, &self.config.geometry, rng)?;
        self.install(real)
    }

    /// Starts an episode on a given channel draw.
    pub fn reset_with(&mut self, real: ChannelRealization) -> Result<EnvState> {
        check_dim("realization antennas", self.dims.m, real.num_bs_antennas())?;
        check_dim("realization elements", self.dims.n, real.num_irs_elements())?;
        check_dim("realization users", self.dims.k, real.num_users())?;
        self.install(real)
    }

    fn install(&mut self, real: ChannelRealization) -> Result<EnvState> {
        self.prev_action = EnvAction::zeros(self.dims);
        let (g, phi) = decode_action(&self.prev_action, self.dims, self.config.pt)?;
        let state = encode_state(&real, &self.prev_action, &g, &phi)?;
        self.realization = Some(real);
        Ok(state)
    }

    /// Applies `a` and returns the next state and the sum SE as reward.
    pub fn step(&mut self, a: &EnvAction) -> Result<(EnvState, f64)> {
        let real = self
            .realization
            .as_ref()
            .ok_or(Error::State("step called before reset"))?;
        let (g, phi) = decode_action(a, self.dims, self.config.pt)?;
        let effective = effective_channels(real, &phi)?;
        let reward =
            spectral_efficiency_from_effective(&effective, &g, self.config.channel.noise_variance)?;
        let next = encode_state(real, a, &g, &phi)?;
        self.prev_action = a.clone();
        Ok((next, reward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn small_env() -> IrsEnv {
        IrsEnv::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn dims_for_default_system() {
        let d = Dims::new(4, 4, 4);
        assert_eq!(d.action_dim(), 40);
        assert_eq!(d.state_dim(), 32 + 8 + 8 + 32 + 32 + 32);
        assert_eq!(d.state_dim(), 144);
    }

    #[test]
    fn zero_action_decodes_to_silence_and_identity() {
        let d = Dims::new(4, 4, 4);
        let (g, phi) = decode_action(&EnvAction::zeros(d), d, 1000.0).unwrap();
        assert_eq!(g.total_power(), 0.0);
        assert!(phi.phases().iter().all(|&t| t == 0.0));
        assert_eq!(phi.to_matrix(), CMatrix::identity(4, 4));
    }

    #[test]
    fn negative_zero_pair_maps_to_zero_phase() {
        let d = Dims::new(1, 1, 1);
        let a = EnvAction::new(vec![1.0, 0.0, -0.0, -0.0]);
        let (_, phi) = decode_action(&a, d, 1.0).unwrap();
        assert_eq!(phi.phases(), &[0.0]);
    }

    #[test]
    fn phase_pair_uses_atan2() {
        let d = Dims::new(1, 1, 1);
        let a = EnvAction::new(vec![1.0, 0.0, 0.0, 1.0]);
        let (g, phi) = decode_action(&a, d, 2.0).unwrap();
        assert!((phi.phases()[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((g.total_power() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let d = Dims::new(2, 2, 2);
        assert!(matches!(
            decode_action(&EnvAction::new(vec![0.0; 3]), d, 1.0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn encode_zero_system_is_zero() {
        let d = Dims::new(2, 3, 2);
        let real = ChannelRealization::zeros(2, 3, 2);
        let prev = EnvAction::zeros(d);
        let (g, phi) = decode_action(&prev, d, 1.0).unwrap();
        let s = encode_state(&real, &prev, &g, &phi).unwrap();
        assert_eq!(s.raw.len(), d.state_dim());
        assert!(s.raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_splits_complex_into_adjacent_slots() {
        let d = Dims::new(1, 1, 1);
        let mut real = ChannelRealization::zeros(1, 1, 1);
        real.h1[(0, 0)] = Complex64::new(3.0, -4.0);
        real.h_r[0] = CVector::from_element(1, Complex64::new(5.0, 6.0));
        real.h_d[0] = CVector::from_element(1, Complex64::new(-7.0, 8.0));
        let prev = EnvAction::new(vec![0.1, 0.2, 0.3, 0.4]);
        let g = BeamformingMatrix::zeros(1, 1);
        let phi = PhaseShiftMatrix::identity(1);
        let s = encode_state(&real, &prev, &g, &phi).unwrap();
        assert_eq!(s.raw.len(), d.state_dim());
        // [tx power, rx power, prev action x4, H1, h_r, h_d]
        assert_eq!(
            s.raw,
            vec![0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 3.0, -4.0, 5.0, 6.0, -7.0, 8.0]
        );
    }

    #[test]
    fn step_before_reset_fails() {
        let mut env = small_env();
        let a = EnvAction::zeros(env.dims());
        assert!(matches!(env.step(&a), Err(Error::State(_))));
    }

    #[test]
    fn reset_is_seeded() {
        let mut env = small_env();
        let s1 = env.reset(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s2 = env.reset(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.raw.len(), env.state_dim());
    }

    #[test]
    fn reset_channels_differ_across_seeds() {
        let mut env = small_env();
        let d = env.dims();
        let channel_start = 2 * d.k + d.action_dim();
        let states: Vec<_> = (0..100)
            .map(|seed| env.reset(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap())
            .collect();
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                assert_ne!(
                    states[i].raw[channel_start..],
                    states[j].raw[channel_start..]
                );
            }
        }
    }

    #[test]
    fn step_rewards() {
        let mut env = small_env();
        env.reset(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (_, r) = env.step(&EnvAction::zeros(env.dims())).unwrap();
        assert_eq!(r, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = EnvAction::new(
            (0..env.action_dim())
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect(),
        );
        let (s1, r1) = env.step(&a).unwrap();
        let (s2, r2) = env.step(&a).unwrap();
        assert!(r1 > 0.0);
        assert_eq!(r1, r2);
        assert_eq!(s1, s2);

        let d = env.dims();
        assert_eq!(s1.raw[2 * d.k..2 * d.k + d.action_dim()], a.raw[..]);
    }
}
