use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, Transition};
use super::reward::RewardConfig;
use super::state::{StateVec, STATE_DIM};
use crate::error::{Error, Result};
use crate::hybrid::CommMode;
use crate::nn::{mse_loss, Adam, AdamConfig, Mlp};
use crate::rng::SimRng;

/// How the bootstrap value of the next state is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TargetEstimator {
    /// Behaviour network picks the action, target network scores it.
    #[default]
    DoubleQ,
    /// Maximum of the target network's outputs.
    MaxQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_decrement: f64,
    pub epsilon_min: f64,
    pub batch_size: usize,
    /// Gradient steps between hard target-network syncs. The default is
    /// long (about 45 games of one agent) because the channel state does not
    /// depend on the action, so fast bootstrapping mostly adds noise that
    /// hides the small per-round differences between modes.
    pub target_sync_period: u64,
    pub replay_capacity: usize,
    pub hidden_layers: Vec<usize>,
    pub target_estimator: TargetEstimator,
    pub sr_target: u32,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub normalize_reception: bool,
    pub lq_deadband_db: f64,
    /// Optional global gradient-norm cap.
    pub grad_clip: Option<f64>,
    /// One network and buffer for the whole platoon.
    pub share_parameters: bool,
    pub adam: AdamConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let reward = RewardConfig::default();
        Self {
            gamma: 0.99,
            learning_rate: 0.0005,
            epsilon_start: 1.0,
            epsilon_decrement: 1e-5,
            epsilon_min: 0.01,
            batch_size: 64,
            target_sync_period: 5000,
            replay_capacity: 1_000_000,
            hidden_layers: vec![256, 256],
            target_estimator: TargetEstimator::DoubleQ,
            sr_target: 100,
            alpha: reward.alpha,
            beta: reward.beta,
            theta: reward.theta,
            normalize_reception: reward.normalize_by_neighbors,
            lq_deadband_db: reward.lq_deadband_db,
            grad_clip: None,
            share_parameters: false,
            adam: AdamConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![STATE_DIM];
        dims.extend(&self.hidden_layers);
        dims.push(CommMode::COUNT);
        dims
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            alpha: self.alpha,
            beta: self.beta,
            theta: self.theta,
            normalize_by_neighbors: self.normalize_reception,
            lq_deadband_db: self.lq_deadband_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("agent: {msg}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=self.epsilon_start).contains(&self.epsilon_min) {
            return bad("need 0 <= epsilon_min <= epsilon_start <= 1".into());
        }
        if !(self.epsilon_decrement >= 0.0) {
            return bad("epsilon_decrement must be >= 0".into());
        }
        if self.batch_size == 0 || self.target_sync_period == 0 {
            return bad("batch_size and target_sync_period must be >= 1".into());
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity must hold at least one batch".into());
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be >= 1".into());
        }
        if self.sr_target == 0 {
            return bad("sr_target must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must be in [0, 1]".into());
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be > 0".into());
        }
        Ok(())
    }
}

/// Arg-max over Q-values; ties go to the lowest action code.
pub fn greedy_action(q: &[f64]) -> Result<CommMode> {
    if q.len() != CommMode::COUNT {
        return Err(Error::Shape(format!("{} Q-values for {} actions", q.len(), CommMode::COUNT)));
    }
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Q-values"));
    }
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    Ok(CommMode::ALL[best])
}

/// Epsilon-greedy choice over the behaviour network's Q-values.
pub fn select_action(q: &[f64], epsilon: f64, rng: &mut SimRng) -> Result<CommMode> {
    let greedy = greedy_action(q)?;
    if rng.random::<f64>() < epsilon {
        Ok(CommMode::ALL[rng.random_range(0..CommMode::COUNT)])
    } else {
        Ok(greedy)
    }
}

pub fn epsilon_decay(epsilon: f64, decrement: f64, floor: f64) -> f64 {
    (epsilon - decrement).max(floor)
}

/// Regression targets for a batch: the reward alone for terminal
/// transitions, otherwise reward plus discounted bootstrap at the next state.
pub fn compute_targets(
    batch: &[&Transition],
    behavior: &Mlp,
    target: &Mlp,
    gamma: f64,
    estimator: TargetEstimator,
) -> Result<Vec<f64>> {
    let n = batch.len();
    let actions = CommMode::COUNT;
    let next: Vec<f64> = batch.iter().flat_map(|t| t.next_state.0).collect();
    let q_target = target.forward_batch(&next, n)?;
    let bootstrap: Vec<f64> = match estimator {
        TargetEstimator::MaxQ => q_target
            .chunks_exact(actions)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        TargetEstimator::DoubleQ => {
            let q_behavior = behavior.forward_batch(&next, n)?;
            q_behavior
                .chunks_exact(actions)
                .zip(q_target.chunks_exact(actions))
                .map(|(b, t)| greedy_action(b).map(|a| t[a.index()]))
                .collect::<Result<_>>()?
        }
    };
    Ok(batch
        .iter()
        .zip(bootstrap)
        .map(|(t, q)| if t.terminal { t.reward } else { t.reward + gamma * q })
        .collect())
}

/// Networks and optimizer state updated by [`train_step`].
pub struct Learner<'a> {
    pub behavior: &'a mut Mlp,
    pub target: &'a mut Mlp,
    pub adam: &'a mut Adam,
    /// Gradient steps taken so far; drives the target sync.
    pub steps: &'a mut u64,
}

/// One mini-batch update of the behaviour network. Returns `None` while the
/// buffer holds fewer than `batch_size` transitions.
pub fn train_step(
    buffer: &ReplayBuffer,
    learner: Learner<'_>,
    config: &AgentConfig,
    rng: &mut SimRng,
) -> Result<Option<f64>> {
    let m = config.batch_size;
    if buffer.len() < m {
        return Ok(None);
    }
    let batch = buffer.sample(m, rng)?;
    let targets = compute_targets(
        &batch,
        learner.behavior,
        learner.target,
        config.gamma,
        config.target_estimator,
    )?;

    let states: Vec<f64> = batch.iter().flat_map(|t| t.state.0).collect();
    let cache = learner.behavior.forward_cached(&states, m)?;
    let q = cache.output();
    let chosen: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| q[i * CommMode::COUNT + t.action.index()])
        .collect();
    let (loss, grad_chosen) = mse_loss(&chosen, &targets, m);
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    let mut upstream = vec![0.0; m * CommMode::COUNT];
    for (i, (t, g)) in batch.iter().zip(grad_chosen).enumerate() {
        upstream[i * CommMode::COUNT + t.action.index()] = g;
    }
    let mut grads = learner.behavior.backward(&cache, &upstream)?;
    if let Some(cap) = config.grad_clip {
        grads.clip_global_norm(cap);
    }
    learner.adam.step(learner.behavior, &grads, config.learning_rate)?;

    *learner.steps += 1;
    if *learner.steps % config.target_sync_period == 0 {
        learner.target.copy_from(learner.behavior)?;
    }
    Ok(Some(loss))
}

/// A learning vehicle: behaviour and target networks, Adam state, replay
/// buffer and its own exploration schedule.
#[derive(Clone)]
pub struct DqnAgent {
    config: AgentConfig,
    behavior: Mlp,
    target: Mlp,
    adam: Adam,
    buffer: ReplayBuffer,
    epsilon: f64,
    train_steps: u64,
    rng: SimRng,
}

impl DqnAgent {
    pub fn new(config: AgentConfig, mut rng: SimRng) -> Result<Self> {
        config.validate()?;
        let behavior = Mlp::he_uniform(&config.layer_dims(), &mut rng)?;
        Self::with_network(config, behavior, rng)
    }

    /// Starts from given behaviour weights; the target is a copy.
    pub fn with_network(config: AgentConfig, behavior: Mlp, rng: SimRng) -> Result<Self> {
        config.validate()?;
        if behavior.dims() != config.layer_dims() {
            return Err(Error::Shape(format!(
                "network dims {:?} do not match config {:?}",
                behavior.dims(),
                config.layer_dims()
            )));
        }
        let target = behavior.clone();
        let adam = Adam::new(&behavior, config.adam);
        Ok(Self {
            buffer: ReplayBuffer::new(config.replay_capacity),
            epsilon: config.epsilon_start,
            train_steps: 0,
            adam,
            behavior,
            target,
            config,
            rng,
        })
    }

    pub fn load(config: AgentConfig, path: &Path, rng: SimRng) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Weights(format!("{}: {e}", path.display())))?;
        let net = Mlp::read_from(BufReader::new(file))?;
        Self::with_network(config, net, rng)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.behavior.write_to(&mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn behavior(&self) -> &Mlp {
        &self.behavior
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn q_values(&self, s: &StateVec) -> Result<Vec<f64>> {
        self.behavior.forward(s.as_slice())
    }

    /// Epsilon-greedy action. Does not decay epsilon.
    pub fn act(&mut self, s: &StateVec) -> Result<CommMode> {
        let q = self.q_values(s)?;
        select_action(&q, self.epsilon, &mut self.rng)
    }

    pub fn act_greedy(&self, s: &StateVec) -> Result<CommMode> {
        greedy_action(&self.q_values(s)?)
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = epsilon_decay(self.epsilon, self.config.epsilon_decrement, self.config.epsilon_min);
    }

    pub fn remember(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        self.buffer.push(t);
        Ok(())
    }

    pub fn train(&mut self) -> Result<Option<f64>> {
        train_step(
            &self.buffer,
            Learner {
                behavior: &mut self.behavior,
                target: &mut self.target,
                adam: &mut self.adam,
                steps: &mut self.train_steps,
            },
            &self.config,
            &mut self.rng,
        )
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_from(&self.behavior)
    }
}
