//! Experiment configuration file.
//!
//! The file is flat TOML: one `key = value` per line, `#` comments, no tables.
//! Every key is optional and falls back to the defaults below; unknown keys are
//! rejected. Powers are given in dB and converted to linear units here.
//!
//! ```text
//! # system
//! num_bs_antennas = 4            # M
//! num_irs_elements = 4           # N
//! num_users = 4                  # K
//! rician_k1 = 10.0               # BS–IRS K-factor (linear)
//! rician_k2 = 10.0               # IRS–user K-factor (linear)
//! pt_db = 30.0                   # transmit budget, Pt_linear = 10^(pt_db/10)
//! noise_power_dbm = -80.0        # σ² per user
//! pathloss_enabled = true
//! reference_pathloss_db = 30.0   # loss at 1 m
//! pathloss_exponent_bs_irs = 2.2
//! pathloss_exponent_irs_user = 2.2
//! pathloss_exponent_direct = 3.5
//! bs_irs_distance = 51.0         # m
//! user_height_offset = 2.0       # m
//! user_min_x = 10.0              # m, users uniform on [user_min_x, user_max_x]
//! user_max_x = 41.0
//! spacing_ratio = 0.5            # d/λ
//!
//! # training
//! agent = "td3"                  # td3 | ddpg | random
//! episode_length = 100           # T, steps per coherence block
//! total_steps = 8000
//! gamma = 0.99
//! actor_lr = 1e-3
//! critic_lr = 1e-3
//! lr_decay = 1e-5                # lr_t = lr / (1 + lr_decay * t)
//! tau_actor = 0.005
//! tau_critic = 0.005
//! policy_delay = 1               # U
//! batch_size = 16                # W, also the warm-up threshold
//! buffer_capacity = 100000       # D
//! hidden_layers = 2
//! hidden_width = 0               # 0 = max(64, next_pow2(4(MK + N)))
//! noise_std_start = 0.1
//! noise_std_end = 0.01
//! action_scale_weight = 1.0      # weight of the actor-output RMS anchor
//! action_scale_rms = 0.5         # anchored RMS of the actor output
//! normalize_states = true        # standardize network inputs (fit on random-policy states)
//! scale_free_critic = true       # critics see each action block rescaled to unit RMS
//! seed = 0
//! output = "runs/default"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{ActionScale, AgentConfig};
use crate::channel::{db_to_linear, dbm_to_watts, ChannelConfig, PathLossModel, SystemGeometry};
use crate::env::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Td3,
    Ddpg,
    Random,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Td3 => "td3",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Random => "random",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "td3" => Ok(AgentKind::Td3),
            "ddpg" => Ok(AgentKind::Ddpg),
            "random" => Ok(AgentKind::Random),
            other => Err(Error::config("agent", format!("unknown agent `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_bs_antennas: usize,
    pub num_irs_elements: usize,
    pub num_users: usize,
    pub rician_k1: f64,
    pub rician_k2: f64,
    pub pt_db: f64,
    pub noise_power_dbm: f64,
    pub pathloss_enabled: bool,
    pub reference_pathloss_db: f64,
    pub pathloss_exponent_bs_irs: f64,
    pub pathloss_exponent_irs_user: f64,
    pub pathloss_exponent_direct: f64,
    pub bs_irs_distance: f64,
    pub user_height_offset: f64,
    pub user_min_x: f64,
    pub user_max_x: f64,
    pub spacing_ratio: f64,

    pub agent: AgentKind,
    pub episode_length: usize,
    pub total_steps: u64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub lr_decay: f64,
    pub tau_actor: f64,
    pub tau_critic: f64,
    pub policy_delay: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub noise_std_start: f64,
    pub noise_std_end: f64,
    pub action_scale_weight: f64,
    pub action_scale_rms: f64,
    pub normalize_states: bool,
    pub scale_free_critic: bool,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let pl = PathLossModel::default();
        let geo = SystemGeometry::default();
        let agent = AgentConfig::default();
        Self {
            num_bs_antennas: 4,
            num_irs_elements: 4,
            num_users: 4,
            rician_k1: 10.0,
            rician_k2: 10.0,
            pt_db: 30.0,
            noise_power_dbm: -80.0,
            pathloss_enabled: true,
            reference_pathloss_db: pl.reference_db,
            pathloss_exponent_bs_irs: pl.exponent_bs_irs,
            pathloss_exponent_irs_user: pl.exponent_irs_user,
            pathloss_exponent_direct: pl.exponent_direct,
            bs_irs_distance: geo.bs_irs_distance,
            user_height_offset: geo.user_height_offset,
            user_min_x: geo.user_min_x,
            user_max_x: geo.user_max_x,
            spacing_ratio: geo.spacing_ratio,
            agent: AgentKind::Td3,
            episode_length: 100,
            total_steps: agent.total_steps,
            gamma: agent.gamma,
            actor_lr: agent.actor_lr,
            critic_lr: agent.critic_lr,
            lr_decay: agent.lr_decay,
            tau_actor: agent.tau_actor,
            tau_critic: agent.tau_critic,
            policy_delay: agent.policy_delay,
            batch_size: agent.batch_size,
            buffer_capacity: agent.buffer_capacity,
            hidden_layers: agent.hidden_layers,
            hidden_width: 0,
            noise_std_start: agent.noise_std_start,
            noise_std_end: agent.noise_std_end,
            action_scale_weight: agent.action_scale.weight,
            action_scale_rms: agent.action_scale.rms,
            normalize_states: true,
            scale_free_critic: agent.scale_free_critic,
            seed: 0,
            output: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = message.split('`').nth(1).unwrap_or("<file>").to_string();
            Error::Config { field, message }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::config("total_steps", "must be >= 1"));
        }
        if !self.pt_db.is_finite() {
            return Err(Error::config("pt_db", "must be finite"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::config("noise_power_dbm", "must be finite"));
        }
        self.env_config().validate()?;
        self.agent_config().validate()
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            num_bs_antennas: self.num_bs_antennas,
            num_irs_elements: self.num_irs_elements,
            num_users: self.num_users,
            rician_k1: self.rician_k1,
            rician_k2: self.rician_k2,
            pathloss: self.pathloss_enabled.then_some(PathLossModel {
                reference_db: self.reference_pathloss_db,
                exponent_bs_irs: self.pathloss_exponent_bs_irs,
                exponent_irs_user: self.pathloss_exponent_irs_user,
                exponent_direct: self.pathloss_exponent_direct,
            }),
            noise_variance: dbm_to_watts(self.noise_power_dbm),
        }
    }

    pub fn geometry(&self) -> SystemGeometry {
        SystemGeometry {
            bs_irs_distance: self.bs_irs_distance,
            user_height_offset: self.user_height_offset,
            user_min_x: self.user_min_x,
            user_max_x: self.user_max_x,
            spacing_ratio: self.spacing_ratio,
        }
    }

    /// Linear transmit power budget.
    pub fn pt_linear(&self) -> f64 {
        db_to_linear(self.pt_db)
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            channel: self.channel_config(),
            geometry: self.geometry(),
            pt: self.pt_linear(),
            episode_length: self.episode_length,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            lr_decay: self.lr_decay,
            tau_actor: self.tau_actor,
            tau_critic: self.tau_critic,
            policy_delay: self.policy_delay,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            hidden_layers: self.hidden_layers,
            hidden_width: (self.hidden_width > 0).then_some(self.hidden_width),
            noise_std_start: self.noise_std_start,
            noise_std_end: self.noise_std_end,
            action_scale: ActionScale {
                weight: self.action_scale_weight,
                rms: self.action_scale_rms,
            },
            total_steps: self.total_steps,
            scale_free_critic: self.scale_free_critic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.pt_linear(), 1000.0);
        let env = cfg.env_config();
        assert!((env.channel.noise_variance - 1e-11).abs() < 1e-24);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = ExperimentConfig::from_toml_str(
            "# comment\nnum_irs_elements = 32\nagent = \"ddpg\"\npt_db = 20\nhidden_width = 48\n",
        )
        .unwrap();
        assert_eq!(cfg.num_irs_elements, 32);
        assert_eq!(cfg.agent, AgentKind::Ddpg);
        assert_eq!(cfg.pt_linear(), 100.0);
        assert_eq!(cfg.agent_config().hidden_width, Some(48));
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let err = ExperimentConfig::from_toml_str("learning_rat = 0.1\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "learning_rat"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invalid_value_names_field() {
        let err = ExperimentConfig::from_toml_str("total_steps = 0\n").unwrap_err();
        assert!(err.to_string().contains("total_steps"), "{err}");
        let err = ExperimentConfig::from_toml_str("num_users = 0\n").unwrap_err();
        assert!(err.to_string().contains("num_users"), "{err}");
        let err = ExperimentConfig::from_toml_str("num_users = \"four\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig {
            seed: 99,
            rician_k1: 3.25,
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn agent_kind_parsing() {
        assert_eq!("TD3".parse::<AgentKind>().unwrap(), AgentKind::Td3);
        assert_eq!("random".parse::<AgentKind>().unwrap(), AgentKind::Random);
        assert!("ppo".parse::<AgentKind>().is_err());
    }
}
