//! Training runs, parameter sweeps and complexity profiling.

mod config;
mod metrics;

pub use config::{AgentKind, ExperimentConfig};
pub use metrics::{MetricsLog, RunSummary, StepRecord, FINAL_WINDOW, REWARD_WINDOW};

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{ActorCritic, Algorithm, StateNormalizer};
use crate::env::{EnvAction, IrsEnv};
use crate::error::{Error, Result};

/// Independent 64-bit seed for `stream` derived from a base seed (SplitMix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;
const RANDOM_POLICY_STREAM: u64 = 3;
const CALIBRATION_STREAM: u64 = 4;

/// Episodes and steps per episode used to fit the state normalizer.
const CALIBRATION_EPISODES: usize = 64;
const CALIBRATION_STEPS: usize = 8;

/// Fits per-feature state standardization on random-policy states from a
/// dedicated random stream, so the training trajectory is unaffected.
pub fn calibrate_normalizer(config: &ExperimentConfig) -> Result<StateNormalizer> {
    let mut env = IrsEnv::new(config.env_config())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, CALIBRATION_STREAM));
    let mut states = Vec::with_capacity(CALIBRATION_EPISODES * (CALIBRATION_STEPS + 1));
    for _ in 0..CALIBRATION_EPISODES {
        states.push(env.reset(&mut rng)?);
        for _ in 0..CALIBRATION_STEPS {
            let action = random_action(env.action_dim(), &mut rng);
            states.push(env.step(&action)?.0);
        }
    }
    StateNormalizer::fit(&states)
}

enum Policy {
    Learner(Box<ActorCritic>),
    Random(ChaCha8Rng),
}

fn build_policy(config: &ExperimentConfig, env: &IrsEnv) -> Result<Policy> {
    let agent_seed = derive_seed(config.seed, AGENT_STREAM);
    let algorithm = match config.agent {
        AgentKind::Td3 => Algorithm::Td3,
        AgentKind::Ddpg => Algorithm::Ddpg,
        AgentKind::Random => {
            return Ok(Policy::Random(ChaCha8Rng::seed_from_u64(derive_seed(
                config.seed,
                RANDOM_POLICY_STREAM,
            ))))
        }
    };
    let mut agent = ActorCritic::new(algorithm, env.dims(), config.agent_config(), agent_seed)?;
    if config.normalize_states {
        agent.set_normalizer(calibrate_normalizer(config)?)?;
    }
    Ok(Policy::Learner(Box::new(agent)))
}

fn random_action<R: Rng>(dim: usize, rng: &mut R) -> EnvAction {
    EnvAction::new((0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

/// A finished run: its log, summary and (for learning agents) the trained agent.
#[derive(Debug)]
pub struct TrainedRun {
    pub log: MetricsLog,
    pub summary: RunSummary,
    pub agent: Option<ActorCritic>,
}

impl TrainedRun {
    /// Writes `metrics.csv`, `summary.txt` and, for learning agents, `checkpoint.bin`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.log
            .write_csv(fs::File::create(dir.join("metrics.csv"))?)?;
        fs::write(dir.join("summary.txt"), self.summary.to_text())?;
        if let Some(agent) = &self.agent {
            fs::write(dir.join("checkpoint.bin"), agent.checkpoint_bytes())?;
        }
        Ok(())
    }
}

/// Trains one agent for `total_steps` environment steps in episodes of `episode_length`.
pub fn train(config: &ExperimentConfig) -> Result<TrainedRun> {
    config.validate()?;
    let mut env = IrsEnv::new(config.env_config())?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, ENV_STREAM));
    let mut policy = build_policy(config, &env)?;
    let episode_length = config.episode_length as u64;

    let started = Instant::now();
    let mut log = MetricsLog::new();
    let mut state = env.reset(&mut env_rng)?;
    for step in 0..config.total_steps {
        let episode = step / episode_length;
        if step > 0 && step % episode_length == 0 {
            state = env.reset(&mut env_rng)?;
        }
        let (next_state, reward, critic_losses, actor_loss) = match &mut policy {
            Policy::Learner(agent) => {
                let out = agent.train_step(&mut env, &state, step)?;
                (
                    out.next_state,
                    out.reward,
                    out.diagnostics.critic_losses,
                    out.diagnostics.actor_loss,
                )
            }
            Policy::Random(rng) => {
                let action = random_action(env.action_dim(), rng);
                let (next, reward) = env.step(&action)?;
                (next, reward, None, None)
            }
        };
        if !reward.is_finite() || reward < 0.0 {
            return Err(Error::Domain(format!(
                "invalid reward {reward} at step {step}"
            )));
        }
        log.push(step, episode, reward, critic_losses.as_deref(), actor_loss);
        state = next_state;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let episodes = config.total_steps.div_ceil(episode_length);

    let agent = match policy {
        Policy::Learner(agent) => Some(*agent),
        Policy::Random(_) => None,
    };
    let summary = RunSummary {
        agent: config.agent.to_string(),
        best_se: log.best_reward(),
        final_mean_reward: log.tail_mean(FINAL_WINDOW),
        window_avg_reward: log.tail_mean(REWARD_WINDOW),
        total_steps: config.total_steps,
        trainable_params: agent.as_ref().map_or(0, |a| a.trainable_param_count()),
        target_params: agent.as_ref().map_or(0, |a| a.target_param_count()),
        checkpoint_bytes: agent.as_ref().map_or(0, |a| a.checkpoint_bytes().len()),
        seconds_per_episode: elapsed / episodes as f64,
        seed: config.seed,
    };
    Ok(TrainedRun {
        log,
        summary,
        agent,
    })
}

/// Runs `config` and returns its per-step metrics.
pub fn run(config: &ExperimentConfig) -> Result<MetricsLog> {
    Ok(train(config)?.log)
}

fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Outcome of one (agent, sweep point) cell across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub agent: AgentKind,
    /// Pt in dB for power sweeps, N for element sweeps.
    pub point: f64,
    pub seeds: Vec<u64>,
    pub best_se: Vec<f64>,
    pub final_mean_reward: Vec<f64>,
    pub final_avg_reward: Vec<f64>,
    /// Prefix-mean reward trajectory, median across seeds at every step.
    pub avg_trajectory: Vec<f64>,
    /// Trailing-window mean trajectory, median across seeds at every step.
    pub window_trajectory: Vec<f64>,
}

impl SweepCell {
    pub fn median_best_se(&self) -> f64 {
        median(&mut self.best_se.clone())
    }

    pub fn median_final_mean_reward(&self) -> f64 {
        median(&mut self.final_mean_reward.clone())
    }

    pub fn median_final_avg_reward(&self) -> f64 {
        median(&mut self.final_avg_reward.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub point_name: &'static str,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, agent: AgentKind, point: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.agent == agent && c.point == point)
    }

    /// One row per (agent, point) with seed-median statistics.
    pub fn summary_csv(&self) -> String {
        let mut out = format!(
            "agent,{},num_seeds,best_se,final_mean_reward,final_avg_reward\n",
            self.point_name
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.agent,
                c.point,
                c.seeds.len(),
                c.median_best_se(),
                c.median_final_mean_reward(),
                c.median_final_avg_reward()
            ));
        }
        out
    }

    /// Long-form trajectories: agent, point, step, avg_reward, window_avg_reward.
    pub fn trajectory_csv(&self) -> String {
        let mut out = format!(
            "agent,{},step,avg_reward,window_avg_reward\n",
            self.point_name
        );
        for c in &self.cells {
            for (t, (a, w)) in c
                .avg_trajectory
                .iter()
                .zip(&c.window_trajectory)
                .enumerate()
            {
                out.push_str(&format!("{},{},{},{},{}\n", c.agent, c.point, t, a, w));
            }
        }
        out
    }
}

/// Seeds used for replicate `i` of a sweep.
pub fn replicate_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

fn run_grid(
    configs: Vec<(AgentKind, f64, ExperimentConfig)>,
    seeds: &[u64],
    point_name: &'static str,
) -> Result<SweepTable> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    let jobs: Vec<(usize, u64, ExperimentConfig)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, (agent, _, base))| {
            seeds.iter().map(move |&seed| {
                let mut cfg = base.clone();
                cfg.agent = *agent;
                cfg.seed = seed;
                (i, seed, cfg)
            })
        })
        .collect();
    let logs: Vec<(usize, u64, MetricsLog)> = jobs
        .into_par_iter()
        .map(|(i, seed, cfg)| Ok((i, seed, run(&cfg)?)))
        .collect::<Result<_>>()?;

    let cells = configs
        .iter()
        .enumerate()
        .map(|(i, (agent, point, _))| {
            let runs: Vec<&(usize, u64, MetricsLog)> =
                logs.iter().filter(|(j, _, _)| *j == i).collect();
            let steps = runs.iter().map(|r| r.2.len()).min().unwrap_or(0);
            let windows: Vec<Vec<f64>> = runs
                .iter()
                .map(|r| r.2.windowed_average(REWARD_WINDOW))
                .collect();
            let per_step = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
                (0..steps)
                    .map(|t| median(&mut (0..runs.len()).map(|r| f(r, t)).collect::<Vec<_>>()))
                    .collect()
            };
            SweepCell {
                agent: *agent,
                point: *point,
                seeds: runs.iter().map(|r| r.1).collect(),
                best_se: runs.iter().map(|r| r.2.best_reward()).collect(),
                final_mean_reward: runs.iter().map(|r| r.2.tail_mean(FINAL_WINDOW)).collect(),
                final_avg_reward: runs.iter().map(|r| r.2.final_avg_reward()).collect(),
                avg_trajectory: per_step(&|r, t| runs[r].2.records[t].avg_reward),
                window_trajectory: per_step(&|r, t| windows[r][t]),
            }
        })
        .collect();
    Ok(SweepTable { point_name, cells })
}

/// One run per (agent, Pt, seed); Pt values are in dB.
pub fn sweep_power(
    config: &ExperimentConfig,
    pt_list_db: &[f64],
    agents: &[AgentKind],
    seeds: &[u64],
) -> Result<SweepTable> {
    if pt_list_db.is_empty() {
        return Err(Error::config("pt", "power list must not be empty"));
    }
    if agents.is_empty() {
        return Err(Error::config("agents", "agent list must not be empty"));
    }
    let mut grid = Vec::new();
    for &agent in agents {
        for &pt in pt_list_db {
            let cfg = ExperimentConfig {
                pt_db: pt,
                ..config.clone()
            };
            cfg.validate()?;
            grid.push((agent, pt, cfg));
        }
    }
    run_grid(grid, seeds, "pt_db")
}

/// One run per (agent, N, seed).
pub fn sweep_elements(
    config: &ExperimentConfig,
    n_list: &[usize],
    agents: &[AgentKind],
    seeds: &[u64],
) -> Result<SweepTable> {
    if n_list.is_empty() {
        return Err(Error::config("n", "element list must not be empty"));
    }
    if agents.is_empty() {
        return Err(Error::config("agents", "agent list must not be empty"));
    }
    let mut grid = Vec::new();
    for &agent in agents {
        for &n in n_list {
            let cfg = ExperimentConfig {
                num_irs_elements: n,
                ..config.clone()
            };
            cfg.validate()?;
            grid.push((agent, n as f64, cfg));
        }
    }
    run_grid(grid, seeds, "n")
}

/// Size and speed of one agent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityProfile {
    pub agent: AgentKind,
    /// Actor plus critic(s).
    pub trainable_params: usize,
    /// Target actor plus target critic(s).
    pub target_params: usize,
    /// Serialized size of every network, trainable and target.
    pub checkpoint_bytes: usize,
    /// Median wall-clock of three warm training episodes of `episode_length` steps.
    pub seconds_per_episode: f64,
    pub episode_samples: Vec<f64>,
}

impl ComplexityProfile {
    pub fn total_params(&self) -> usize {
        self.trainable_params + self.target_params
    }

    pub fn csv_header() -> &'static str {
        "# trainable_params = actor + critics; target_params = target actor + target critics; \
checkpoint_bytes covers both sets\nagent,trainable_params,target_params,total_params,checkpoint_bytes,seconds_per_episode\n"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            self.agent,
            self.trainable_params,
            self.target_params,
            self.total_params(),
            self.checkpoint_bytes,
            self.seconds_per_episode
        )
    }
}

/// Counts parameters, measures checkpoint size and times warm training episodes.
pub fn profile_complexity(config: &ExperimentConfig) -> Result<ComplexityProfile> {
    config.validate()?;
    let mut env = IrsEnv::new(config.env_config())?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, ENV_STREAM));
    let mut policy = build_policy(config, &env)?;

    let mut state = env.reset(&mut env_rng)?;
    let mut step = 0u64;
    let mut advance = |policy: &mut Policy, env: &mut IrsEnv, state: &mut _| -> Result<()> {
        match policy {
            Policy::Learner(agent) => {
                *state = agent.train_step(env, state, step)?.next_state;
            }
            Policy::Random(rng) => {
                let action = random_action(env.action_dim(), rng);
                *state = env.step(&action)?.0;
            }
        }
        step += 1;
        Ok(())
    };
    // fill the replay buffer so timed episodes include every update
    for _ in 0..config.batch_size {
        advance(&mut policy, &mut env, &mut state)?;
    }
    let mut samples = Vec::with_capacity(3);
    for _ in 0..3 {
        state = env.reset(&mut env_rng)?;
        let started = Instant::now();
        for _ in 0..config.episode_length {
            advance(&mut policy, &mut env, &mut state)?;
        }
        samples.push(started.elapsed().as_secs_f64());
    }

    let (trainable_params, target_params, checkpoint_bytes) = match &policy {
        Policy::Learner(agent) => (
            agent.trainable_param_count(),
            agent.target_param_count(),
            agent.checkpoint_bytes().len(),
        ),
        Policy::Random(_) => (0, 0, 0),
    };
    Ok(ComplexityProfile {
        agent: config.agent,
        trainable_params,
        target_params,
        checkpoint_bytes,
        seconds_per_episode: median(&mut samples.clone()),
        episode_samples: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(agent: AgentKind) -> ExperimentConfig {
        ExperimentConfig {
            num_bs_antennas: 2,
            num_irs_elements: 2,
            num_users: 2,
            episode_length: 10,
            total_steps: 60,
            hidden_width: 16,
            batch_size: 8,
            agent,
            ..Default::default()
        }
    }

    #[test]
    fn random_run_produces_valid_log() {
        let log = run(&tiny(AgentKind::Random)).unwrap();
        assert_eq!(log.len(), 60);
        assert!(log
            .records
            .iter()
            .all(|r| r.reward >= 0.0 && r.reward.is_finite()));
        assert!(log.records.iter().all(|r| r.critic1_loss.is_none()));
        assert_eq!(log.records[59].episode, 5);
    }

    #[test]
    fn learner_logs_losses_after_warmup() {
        let log = run(&tiny(AgentKind::Td3)).unwrap();
        assert!(log.records[6].critic1_loss.is_none());
        let warm = &log.records[7];
        assert!(warm.critic1_loss.is_some() && warm.critic2_loss.is_some());
        assert!(warm.actor_loss.is_some());

        let log = run(&tiny(AgentKind::Ddpg)).unwrap();
        assert!(log.records[7].critic1_loss.is_some());
        assert!(log.records[7].critic2_loss.is_none());
    }

    #[test]
    fn output_path_does_not_change_results() {
        let a = tiny(AgentKind::Td3);
        let b = ExperimentConfig {
            output: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(run(&a).unwrap(), run(&b).unwrap());
    }

    #[test]
    fn seeds_are_distinct() {
        let s: std::collections::HashSet<u64> =
            (0..1000).map(|i| derive_seed(i % 10, i / 10)).collect();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn sweeps_reject_empty_lists() {
        let cfg = tiny(AgentKind::Random);
        assert!(sweep_power(&cfg, &[], &[AgentKind::Random], &[0]).is_err());
        assert!(sweep_elements(&cfg, &[], &[AgentKind::Random], &[0]).is_err());
        assert!(sweep_power(&cfg, &[30.0], &[AgentKind::Random], &[]).is_err());
    }

    #[test]
    fn single_point_sweep_matches_run() {
        let cfg = tiny(AgentKind::Td3);
        let table = sweep_elements(&cfg, &[2], &[AgentKind::Td3], &[cfg.seed]).unwrap();
        let log = run(&cfg).unwrap();
        let cell = table.cell(AgentKind::Td3, 2.0).unwrap();
        let avg: Vec<f64> = log.records.iter().map(|r| r.avg_reward).collect();
        assert_eq!(cell.avg_trajectory, avg);

        let table = sweep_power(&cfg, &[30.0], &[AgentKind::Td3], &[cfg.seed]).unwrap();
        assert_eq!(table.cells.len(), 1);
        assert_eq!(table.cells[0].best_se, vec![log.best_reward()]);
    }

    #[test]
    fn sweep_has_one_row_per_cell() {
        let cfg = tiny(AgentKind::Random);
        let table = sweep_power(
            &cfg,
            &[10.0, 20.0, 30.0],
            &[AgentKind::Random, AgentKind::Td3],
            &[1, 2],
        )
        .unwrap();
        assert_eq!(table.cells.len(), 6);
        let csv = table.summary_csv();
        assert_eq!(csv.lines().count(), 7);
        for agent in [AgentKind::Random, AgentKind::Td3] {
            for pt in [10.0, 20.0, 30.0] {
                assert!(table.cell(agent, pt).is_some());
            }
        }
    }

    #[test]
    fn profile_counts_match_agent() {
        let cfg = tiny(AgentKind::Td3);
        let p = profile_complexity(&cfg).unwrap();
        assert_eq!(p.episode_samples.len(), 3);
        assert!(p.trainable_params > 0);
        assert_eq!(p.trainable_params, p.target_params);
        let random = profile_complexity(&tiny(AgentKind::Random)).unwrap();
        assert_eq!(random.total_params(), 0);
    }
}
