//! Per-step training records, CSV I/O and the run summary block.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window of the trailing mean reported next to the prefix mean.
pub const REWARD_WINDOW: usize = 200;

/// One CSV row. `avg_reward` is the prefix mean of all rewards up to this step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub episode: u64,
    pub reward: f64,
    pub avg_reward: f64,
    pub critic1_loss: Option<f64>,
    pub critic2_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<StepRecord>,
    reward_sum: f64,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a step; the running average is derived here.
    pub fn push(
        &mut self,
        step: u64,
        episode: u64,
        reward: f64,
        critic_losses: Option<&[f64]>,
        actor_loss: Option<f64>,
    ) {
        self.reward_sum += reward;
        let avg_reward = self.reward_sum / (self.records.len() + 1) as f64;
        let loss = |i: usize| critic_losses.and_then(|l| l.get(i).copied());
        self.records.push(StepRecord {
            step,
            episode,
            reward,
            avg_reward,
            critic1_loss: loss(0),
            critic2_loss: loss(1),
            actor_loss,
        });
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.reward)
    }

    /// Largest reward seen during the run.
    pub fn best_reward(&self) -> f64 {
        self.rewards().fold(0.0, f64::max)
    }

    /// Mean of the last `n` rewards (all of them if fewer).
    pub fn tail_mean(&self, n: usize) -> f64 {
        let start = self.records.len().saturating_sub(n);
        let tail = &self.records[start..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|r| r.reward).sum::<f64>() / tail.len() as f64
    }

    pub fn final_avg_reward(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.avg_reward)
    }

    /// Trailing mean over at most `window` steps, one value per step.
    pub fn windowed_average(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        let rewards: Vec<f64> = self.rewards().collect();
        let mut out = Vec::with_capacity(rewards.len());
        let mut sum = 0.0;
        for (i, &r) in rewards.iter().enumerate() {
            sum += r;
            if i >= window {
                sum -= rewards[i - window];
            }
            out.push(sum / (i + 1).min(window) as f64);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record([
                "step",
                "episode",
                "reward",
                "avg_reward",
                "critic1_loss",
                "critic2_loss",
                "actor_loss",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let records = r
            .deserialize()
            .collect::<std::result::Result<Vec<StepRecord>, _>>()?;
        let reward_sum = records.iter().map(|r| r.reward).sum();
        Ok(Self {
            records,
            reward_sum,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Key-value block written next to the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub agent: String,
    pub best_se: f64,
    pub final_mean_reward: f64,
    pub window_avg_reward: f64,
    pub total_steps: u64,
    pub trainable_params: usize,
    pub target_params: usize,
    pub checkpoint_bytes: usize,
    pub seconds_per_episode: f64,
    pub seed: u64,
}

/// Steps averaged for the "final performance" figure.
pub const FINAL_WINDOW: usize = 500;

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "agent = {}", self.agent);
        let _ = writeln!(s, "best_se = {}", self.best_se);
        let _ = writeln!(s, "final_mean_reward = {}", self.final_mean_reward);
        let _ = writeln!(s, "window_avg_reward = {}", self.window_avg_reward);
        let _ = writeln!(s, "total_steps = {}", self.total_steps);
        let _ = writeln!(s, "trainable_params = {}", self.trainable_params);
        let _ = writeln!(s, "target_params = {}", self.target_params);
        let _ = writeln!(s, "checkpoint_bytes = {}", self.checkpoint_bytes);
        let _ = writeln!(s, "seconds_per_episode = {}", self.seconds_per_episode);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line.trim(), "expected `key = value`"))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: std::str::FromStr>(
            map: &std::collections::HashMap<String, String>,
            key: &str,
        ) -> Result<T> {
            map.get(key)
                .ok_or_else(|| Error::config(key, "missing"))?
                .parse()
                .map_err(|_| Error::config(key, "unparseable value"))
        }
        Ok(Self {
            agent: get(&map, "agent")?,
            best_se: get(&map, "best_se")?,
            final_mean_reward: get(&map, "final_mean_reward")?,
            window_avg_reward: get(&map, "window_avg_reward")?,
            total_steps: get(&map, "total_steps")?,
            trainable_params: get(&map, "trainable_params")?,
            target_params: get(&map, "target_params")?,
            checkpoint_bytes: get(&map, "checkpoint_bytes")?,
            seconds_per_episode: get(&map, "seconds_per_episode")?,
            seed: get(&map, "seed")?,
        })
    }
}
