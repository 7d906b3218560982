//! Deep Q-learning agent for communication-mode selection.

mod dqn;
mod replay;
mod reward;
mod state;

pub use dqn::{
    compute_targets, epsilon_decay, greedy_action, select_action, train_step, AgentConfig, DqnAgent,
    TargetEstimator,
};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{
    compute_reward, link_quality_delta, performance_satisfaction, LinkQuality, PerformanceSatisfaction,
    RewardConfig,
};
pub use state::{
    build_state, normalize_snir, AppRequirements, Observations, StateVec, NEUTRAL_FEATURE, SNIR_MAX_DB,
    SNIR_MIN_DB, STATE_DIM,
};
