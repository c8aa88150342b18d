//! DDPG and TD3 actor-critic agents.
//!
//! Both algorithms share one implementation: TD3 keeps two critics, bootstraps
//! from the smaller of their target estimates and refreshes the actor and all
//! targets once every `policy_delay` warm steps. DDPG is the same loop with one
//! critic and no delay. The target action is the plain target-actor output,
//! without smoothing noise.
//!
//! Networks see states after an optional per-feature standardization. The actor
//! objective adds a penalty pulling each action's RMS towards a fixed radius;
//! the action decoding ignores that overall scale, so the penalty only keeps
//! the tanh outputs away from saturation. Critics can also see each action
//! block rescaled to unit RMS ([`ActionFeatures`]), which makes them blind to
//! those scales by construction.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{Dims, EnvAction, EnvState, IrsEnv};
use crate::error::{check_dim, Error, Result};
use crate::nn::{Activation, AdamState, Mlp, MlpGrads};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: EnvAction,
    pub reward: f64,
    pub next_state: EnvState,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            storage: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Entries in storage order (not insertion order once wrapped).
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// `w` distinct entries chosen uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, w: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if w > self.len() {
            return Err(Error::InsufficientData {
                requested: w,
                available: self.len(),
            });
        }
        Ok(index::sample(rng, self.len(), w)
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}

/// A mini-batch laid out row-wise for the networks.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items
            .first()
            .ok_or(Error::State("cannot build an empty batch"))?;
        let (sd, ad) = (first.state.raw.len(), first.action.raw.len());
        let w = items.len();
        let mut states = Array2::zeros((w, sd));
        let mut actions = Array2::zeros((w, ad));
        let mut next_states = Array2::zeros((w, sd));
        let mut rewards = Array1::zeros(w);
        for (i, t) in items.iter().enumerate() {
            check_dim("batch state", sd, t.state.raw.len())?;
            check_dim("batch action", ad, t.action.raw.len())?;
            check_dim("batch next state", sd, t.next_state.raw.len())?;
            states.row_mut(i).assign(&ndarray::aview1(&t.state.raw));
            actions.row_mut(i).assign(&ndarray::aview1(&t.action.raw));
            next_states
                .row_mut(i)
                .assign(&ndarray::aview1(&t.next_state.raw));
            rewards[i] = t.reward;
        }
        Ok(Self {
            states,
            actions,
            rewards,
            next_states,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed per-feature standardization applied to states before they reach a network.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNormalizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl StateNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation of each feature over `states`. Features that
    /// never vary are centred but left unscaled.
    pub fn fit(states: &[EnvState]) -> Result<Self> {
        let first = states
            .first()
            .ok_or(Error::State("cannot fit a normalizer on no states"))?;
        let dim = first.raw.len();
        let count = states.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in states {
            check_dim("normalizer sample", dim, s.raw.len())?;
            mean.iter_mut()
                .zip(&s.raw)
                .for_each(|(m, x)| *m += x / count);
        }
        let mut var = vec![0.0; dim];
        for s in states {
            var.iter_mut()
                .zip(s.raw.iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m).powi(2) / count);
        }
        let inv_std = var
            .iter()
            .zip(&mean)
            .map(|(&v, &m)| {
                let std = v.sqrt();
                if std > 1e-12 * m.abs().max(f64::MIN_POSITIVE) {
                    1.0 / std
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, inv_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.inv_std))
            .map(|(x, (m, s))| (x - m) * s)
            .collect()
    }

    pub fn apply_rows(&self, states: &mut Array2<f64>) {
        for mut row in states.rows_mut() {
            row.iter_mut()
                .zip(self.mean.iter().zip(&self.inv_std))
                .for_each(|(x, (m, s))| *x = (*x - m) * s);
        }
    }
}

/// Anything that scores state-action pairs and can differentiate w.r.t. the action.
pub trait ActionValue {
    /// Q(s, a) for each row and ∂Q/∂a for each row.
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)>;
}

/// Critic input is the concatenation [state | action].
pub fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dim("critic batch", states.nrows(), actions.nrows())?;
    concatenate(Axis(1), &[states.view(), actions.view()]).map_err(|e| Error::Domain(e.to_string()))
}

/// Q(s, a) for a batch through a single-output critic network.
pub fn q_values(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    check_dim("critic output", 1, critic.output_dim())?;
    let out = critic.predict(critic_input(states, actions)?.view())?;
    Ok(out.column(0).to_owned())
}

impl ActionValue for Mlp {
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        check_dim("critic output", 1, self.output_dim())?;
        let cache = self.forward(critic_input(states, actions)?.view())?;
        let q = cache.output().column(0).to_owned();
        let ones = Array2::ones((states.nrows(), 1));
        let (_, input_grad) = self.backward(&cache, ones.view())?;
        Ok((q, input_grad.slice(s![.., states.ncols()..]).to_owned()))
    }
}

/// Critic-side view of an action: every block is rescaled to unit RMS.
///
/// The action decode ignores the overall scale of the precoder block and of
/// each phase pair, so this map keeps exactly the information the environment
/// uses. A critic fed these features is scale-invariant along those directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFeatures {
    /// (start, len) of each independently rescaled block; empty means identity.
    blocks: Vec<(usize, usize)>,
    dim: usize,
}

impl ActionFeatures {
    pub fn identity(dim: usize) -> Self {
        Self {
            blocks: Vec::new(),
            dim,
        }
    }

    /// One block for the 2MK precoder entries and one per (u, v) phase pair.
    pub fn for_dims(dims: Dims) -> Self {
        let g = 2 * dims.m * dims.k;
        let blocks = std::iter::once((0, g))
            .chain((0..dims.n).map(|i| (g + 2 * i, 2)))
            .collect();
        Self {
            blocks,
            dim: dims.action_dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Rescaled copy of `actions`; all-zero blocks stay zero.
    pub fn apply(&self, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("action features", self.dim, actions.ncols())?;
        let mut out = actions.to_owned();
        for mut row in out.rows_mut() {
            for &(start, len) in &self.blocks {
                let mut block = row.slice_mut(s![start..start + len]);
                let norm = block.dot(&block).sqrt();
                let scale = if norm > 0.0 {
                    (len as f64).sqrt() / norm
                } else {
                    0.0
                };
                block *= scale;
            }
        }
        Ok(out)
    }

    /// Maps a gradient w.r.t. the features back to the raw actions.
    pub fn pullback(&self, actions: ArrayView2<f64>, grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("action features", self.dim, actions.ncols())?;
        check_dim("feature gradient rows", actions.nrows(), grad.nrows())?;
        check_dim("feature gradient cols", self.dim, grad.ncols())?;
        let mut out = grad.to_owned();
        for (a, mut g) in actions.rows().into_iter().zip(out.rows_mut()) {
            for &(start, len) in &self.blocks {
                let x = a.slice(s![start..start + len]);
                let mut gb = g.slice_mut(s![start..start + len]);
                let norm = x.dot(&x).sqrt();
                if norm == 0.0 {
                    gb.fill(0.0);
                    continue;
                }
                // √L/‖x‖ · (g − n nᵀg) with n = x/‖x‖
                let radial = x.dot(&gb) / (norm * norm);
                let scale = (len as f64).sqrt() / norm;
                gb.zip_mut_with(&x, |gi, &xi| *gi = scale * (*gi - radial * xi));
            }
        }
        Ok(out)
    }
}

/// A critic network evaluated on [`ActionFeatures`] of the raw action.
pub struct FeatureCritic<'a> {
    pub net: &'a Mlp,
    pub features: &'a ActionFeatures,
}

impl ActionValue for FeatureCritic<'_> {
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        if self.features.is_identity() {
            return self.net.value_and_action_grad(states, actions);
        }
        let feats = self.features.apply(actions)?;
        let (q, grad) = self.net.value_and_action_grad(states, feats.view())?;
        Ok((q, self.features.pullback(actions, grad.view())?))
    }
}

/// MSE between critic predictions and fixed targets, with its parameter gradients.
pub fn critic_loss_and_grads(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    targets: &Array1<f64>,
) -> Result<(f64, MlpGrads)> {
    check_dim("critic targets", states.nrows(), targets.len())?;
    let cache = critic.forward(critic_input(states, actions)?.view())?;
    let err = &cache.output().column(0) - targets;
    let w = targets.len() as f64;
    let loss = err.mapv(|e| e * e).sum() / w;
    let dq = (err * (2.0 / w)).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, dq.view())?;
    Ok((loss, grads))
}

/// Negated mean Q(s, π(s)) plus the scale anchor
/// `scale.weight`·mean_rows (rms(π(s))² − `scale.rms`²)², and its gradient
/// w.r.t. the actor parameters.
pub fn policy_loss_and_grads(
    actor: &Mlp,
    critic: &dyn ActionValue,
    states: ArrayView2<f64>,
    scale: ActionScale,
) -> Result<(f64, MlpGrads)> {
    let cache = actor.forward(states)?;
    let actions = cache.output();
    let (q, mut out_grad) = critic.value_and_action_grad(states, actions.view())?;
    let w = states.nrows() as f64;
    let d = actions.ncols() as f64;
    let target = scale.rms * scale.rms;
    let mut penalty = 0.0;
    for (a, mut g) in actions.rows().into_iter().zip(out_grad.rows_mut()) {
        let gap = a.mapv(|x| x * x).sum() / d - target;
        penalty += gap * gap;
        g.zip_mut_with(&a, |gi, &ai| *gi -= scale.weight * 4.0 * gap * ai / d);
    }
    let loss = (-q.sum() + scale.weight * penalty) / w;
    out_grad *= -1.0 / w;
    let (grads, _) = actor.backward(&cache, out_grad.view())?;
    Ok((loss, grads))
}

/// One deterministic-policy-gradient Adam step on `actor` against `critic`.
pub fn actor_update_with(
    actor: &mut Mlp,
    opt: &mut AdamState,
    critic: &dyn ActionValue,
    states: ArrayView2<f64>,
    scale: ActionScale,
) -> Result<f64> {
    let (loss, grads) = policy_loss_and_grads(actor, critic, states, scale)?;
    opt.step(actor, &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ddpg,
    Td3,
}

impl Algorithm {
    pub fn num_critics(self) -> usize {
        match self {
            Algorithm::Ddpg => 1,
            Algorithm::Td3 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub lr_decay: f64,
    pub tau_actor: f64,
    pub tau_critic: f64,
    /// Actor/target refresh period U, in warm steps. Ignored by DDPG.
    pub policy_delay: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden_layers: usize,
    /// `None` derives the width from the system size.
    pub hidden_width: Option<usize>,
    pub noise_std_start: f64,
    pub noise_std_end: f64,
    /// Length of the exploration-noise schedule.
    pub total_steps: u64,
    pub action_scale: ActionScale,
    /// Feed critics block-normalized actions (see [`ActionFeatures`]).
    pub scale_free_critic: bool,
}

/// Soft anchor on the RMS of the actor output. The action decode ignores the
/// scale of G and of each phase pair, so the anchor leaves the decoded optimum
/// unchanged and keeps the tanh outputs away from saturation and from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionScale {
    pub weight: f64,
    pub rms: f64,
}

impl ActionScale {
    pub const NONE: ActionScale = ActionScale {
        weight: 0.0,
        rms: 0.0,
    };
}

impl Default for ActionScale {
    fn default() -> Self {
        Self {
            weight: 1.0,
            rms: 0.5,
        }
    }
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            lr_decay: 1e-5,
            tau_actor: 0.005,
            tau_critic: 0.005,
            policy_delay: 1,
            batch_size: 16,
            buffer_capacity: 100_000,
            hidden_layers: 2,
            hidden_width: None,
            noise_std_start: 0.1,
            noise_std_end: 0.01,
            total_steps: 8000,
            action_scale: ActionScale::default(),
            scale_free_critic: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::config(field, msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma", "must lie in [0, 1]");
        }
        if !(self.actor_lr > 0.0) {
            return fail("actor_lr", "must be > 0");
        }
        if !(self.critic_lr > 0.0) {
            return fail("critic_lr", "must be > 0");
        }
        if !(self.lr_decay >= 0.0) {
            return fail("lr_decay", "must be >= 0");
        }
        if !(self.tau_actor > 0.0 && self.tau_actor <= 1.0) {
            return fail("tau_actor", "must lie in (0, 1]");
        }
        if !(self.tau_critic > 0.0 && self.tau_critic <= 1.0) {
            return fail("tau_critic", "must lie in (0, 1]");
        }
        if self.policy_delay == 0 {
            return fail("policy_delay", "must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be >= 1");
        }
        if self.buffer_capacity < self.batch_size {
            return fail("buffer_capacity", "must be >= batch_size");
        }
        if self.hidden_width == Some(0) {
            return fail("hidden_width", "must be >= 1");
        }
        if !(self.noise_std_start >= 0.0) {
            return fail("noise_std_start", "must be >= 0");
        }
        if !(self.noise_std_end >= 0.0) {
            return fail("noise_std_end", "must be >= 0");
        }
        if !(self.action_scale.weight >= 0.0) {
            return fail("action_scale_weight", "must be >= 0");
        }
        if !(0.0..1.0).contains(&self.action_scale.rms) {
            return fail("action_scale_rms", "must lie in [0, 1)");
        }
        Ok(())
    }

    /// Hidden width: max(64, next power of two ≥ 4·(MK + N)), unless overridden.
    pub fn width_for(&self, dims: Dims) -> usize {
        self.hidden_width
            .unwrap_or_else(|| (4 * (dims.m * dims.k + dims.n)).next_power_of_two().max(64))
    }

    /// Linearly decaying exploration std at environment step `t`.
    pub fn noise_std_at(&self, t: u64) -> f64 {
        if self.total_steps <= 1 {
            return self.noise_std_start;
        }
        let frac = (t.min(self.total_steps - 1)) as f64 / (self.total_steps - 1) as f64;
        self.noise_std_start + (self.noise_std_end - self.noise_std_start) * frac
    }
}

/// A trainable critic with its optimizer and target copy.
#[derive(Debug, Clone)]
pub struct Critic {
    pub net: Mlp,
    pub opt: AdamState,
    pub target: Mlp,
}

/// Losses from one training step; `None` where the update did not run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub critic_losses: Option<Vec<f64>>,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct ActorCritic {
    algorithm: Algorithm,
    config: AgentConfig,
    dims: Dims,
    pub actor: Mlp,
    pub actor_opt: AdamState,
    pub target_actor: Mlp,
    pub critics: Vec<Critic>,
    normalizer: StateNormalizer,
    features: ActionFeatures,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    warm_steps: u64,
    actor_updates: u64,
    critic_updates: u64,
}

impl ActorCritic {
    pub fn td3(dims: Dims, config: AgentConfig, seed: u64) -> Result<Self> {
        Self::new(Algorithm::Td3, dims, config, seed)
    }

    pub fn ddpg(dims: Dims, config: AgentConfig, seed: u64) -> Result<Self> {
        Self::new(Algorithm::Ddpg, dims, config, seed)
    }

    pub fn new(algorithm: Algorithm, dims: Dims, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = config.width_for(dims);
        let hidden = vec![width; config.hidden_layers];

        let actor_sizes: Vec<usize> = std::iter::once(dims.state_dim())
            .chain(hidden.iter().copied())
            .chain(std::iter::once(dims.action_dim()))
            .collect();
        let critic_sizes: Vec<usize> = std::iter::once(dims.state_dim() + dims.action_dim())
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();

        let actor = Mlp::new(&actor_sizes, Activation::Tanh, &mut rng)?;
        let actor_opt = AdamState::new(&actor, config.actor_lr, config.lr_decay);
        let critics = (0..algorithm.num_critics())
            .map(|_| {
                let net = Mlp::new(&critic_sizes, Activation::Linear, &mut rng)?;
                Ok(Critic {
                    opt: AdamState::new(&net, config.critic_lr, config.lr_decay),
                    target: net.clone(),
                    net,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            algorithm,
            dims,
            target_actor: actor.clone(),
            actor,
            actor_opt,
            critics,
            normalizer: StateNormalizer::identity(dims.state_dim()),
            features: if config.scale_free_critic {
                ActionFeatures::for_dims(dims)
            } else {
                ActionFeatures::identity(dims.action_dim())
            },
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            rng,
            warm_steps: 0,
            actor_updates: 0,
            critic_updates: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Replaces the input standardization (identity by default).
    pub fn set_normalizer(&mut self, normalizer: StateNormalizer) -> Result<()> {
        check_dim("normalizer", self.dims.state_dim(), normalizer.dim())?;
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn normalizer(&self) -> &StateNormalizer {
        &self.normalizer
    }

    pub fn action_features(&self) -> &ActionFeatures {
        &self.features
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn warm_steps(&self) -> u64 {
        self.warm_steps
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    fn policy_delay(&self) -> u64 {
        match self.algorithm {
            Algorithm::Td3 => self.config.policy_delay,
            Algorithm::Ddpg => 1,
        }
    }

    /// Networks that receive gradient updates.
    pub fn trainable_networks(&self) -> Vec<&Mlp> {
        std::iter::once(&self.actor)
            .chain(self.critics.iter().map(|c| &c.net))
            .collect()
    }

    pub fn target_networks(&self) -> Vec<&Mlp> {
        std::iter::once(&self.target_actor)
            .chain(self.critics.iter().map(|c| &c.target))
            .collect()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.trainable_networks()
            .iter()
            .map(|n| n.count_params())
            .sum()
    }

    pub fn target_param_count(&self) -> usize {
        self.target_networks()
            .iter()
            .map(|n| n.count_params())
            .sum()
    }

    /// Every network, trainable then target, concatenated in `Mlp::to_bytes` format.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        self.trainable_networks()
            .into_iter()
            .chain(self.target_networks())
            .flat_map(|n| n.to_bytes())
            .collect()
    }

    /// π(s), plus clipped Gaussian noise of std `noise_std_at(step)` when exploring.
    pub fn select_action(
        &mut self,
        state: &EnvState,
        explore: bool,
        step: u64,
    ) -> Result<EnvAction> {
        check_dim("agent state", self.dims.state_dim(), state.raw.len())?;
        let mut raw = self.actor.predict_one(&self.normalizer.apply(&state.raw))?;
        let std = self.config.noise_std_at(step);
        if explore && std > 0.0 {
            let noise = Normal::new(0.0, std).map_err(|e| Error::Domain(e.to_string()))?;
            for a in raw.iter_mut() {
                *a = (*a + noise.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(EnvAction::new(raw))
    }

    /// y = r + γ·min_i Q′_i(s′, π′(s′)).
    pub fn compute_target(&self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self
            .features
            .apply(self.target_actor.predict(batch.next_states.view())?.view())?;
        let mut min_q: Option<Array1<f64>> = None;
        for critic in &self.critics {
            let q = q_values(
                &critic.target,
                batch.next_states.view(),
                next_actions.view(),
            )?;
            min_q = Some(match min_q {
                None => q,
                Some(prev) => ndarray::Zip::from(&prev)
                    .and(&q)
                    .map_collect(|&a, &b| a.min(b)),
            });
        }
        let min_q = min_q.expect("at least one critic");
        Ok(&batch.rewards + &(min_q * self.config.gamma))
    }

    /// One Adam step for every critic toward the shared target. Returns the losses.
    pub fn update_critics(&mut self, batch: &Batch) -> Result<Vec<f64>> {
        let targets = self.compute_target(batch)?;
        let actions = self.features.apply(batch.actions.view())?;
        let mut losses = Vec::with_capacity(self.critics.len());
        for critic in &mut self.critics {
            let (loss, grads) =
                critic_loss_and_grads(&critic.net, batch.states.view(), actions.view(), &targets)?;
            critic.opt.step(&mut critic.net, &grads)?;
            losses.push(loss);
        }
        self.critic_updates += 1;
        Ok(losses)
    }

    /// Policy-gradient step through the first critic only.
    pub fn update_actor(&mut self, batch: &Batch) -> Result<f64> {
        let loss = actor_update_with(
            &mut self.actor,
            &mut self.actor_opt,
            &FeatureCritic {
                net: &self.critics[0].net,
                features: &self.features,
            },
            batch.states.view(),
            self.config.action_scale,
        )?;
        self.actor_updates += 1;
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        self.target_actor
            .soft_update_from(&self.actor, self.config.tau_actor)?;
        for critic in &mut self.critics {
            critic
                .target
                .soft_update_from(&critic.net, self.config.tau_critic)?;
        }
        Ok(())
    }

    /// Uniform mini-batch from the replay buffer with normalized states.
    pub fn sample_batch(&mut self) -> Result<Batch> {
        let items = self.buffer.sample(self.config.batch_size, &mut self.rng)?;
        let mut batch = Batch::from_transitions(&items)?;
        self.normalizer.apply_rows(&mut batch.states);
        self.normalizer.apply_rows(&mut batch.next_states);
        Ok(batch)
    }

    /// Stores `t` and, once the buffer holds a full batch, runs the scheduled updates.
    pub fn observe(&mut self, t: Transition) -> Result<Diagnostics> {
        self.buffer.push(t);
        if self.buffer.len() < self.config.batch_size {
            return Ok(Diagnostics::default());
        }
        self.warm_steps += 1;
        let batch = self.sample_batch()?;
        let critic_losses = self.update_critics(&batch)?;
        let mut actor_loss = None;
        if self.warm_steps.is_multiple_of(self.policy_delay()) {
            actor_loss = Some(self.update_actor(&batch)?);
            self.soft_update_targets()?;
        }
        Ok(Diagnostics {
            critic_losses: Some(critic_losses),
            actor_loss,
        })
    }

    /// Acts with exploration on `env` from `state`, stores the transition and learns.
    pub fn train_step(
        &mut self,
        env: &mut IrsEnv,
        state: &EnvState,
        step: u64,
    ) -> Result<StepOutcome> {
        let action = self.select_action(state, true, step)?;
        let (next_state, reward) = env.step(&action)?;
        let diagnostics = self.observe(Transition {
            state: state.clone(),
            action,
            reward,
            next_state: next_state.clone(),
        })?;
        Ok(StepOutcome {
            next_state,
            reward,
            diagnostics,
        })
    }
}
