//! Joint transmit-beamforming and IRS phase-shift design for downlink MU-MISO
//! with DDPG and TD3 agents.
//!
//! - [`channel`]: Rician/Rayleigh channel draws with log-distance path loss
//! - [`miso`]: effective channels, SINR, sum spectral efficiency, power projection
//! - [`env`]: RL environment (state/action encoding, SE reward)
//! - [`nn`]: tanh MLPs with analytic gradients and Adam
//! - [`agent`]: replay buffer, DDPG and TD3
//! - [`exp`]: experiment config, training runs, sweeps, profiling, metrics

pub mod agent;
pub mod channel;
pub mod env;
pub mod error;
pub mod exp;
pub mod miso;
pub mod nn;

pub use error::{Error, Result};
