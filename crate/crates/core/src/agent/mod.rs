//! Collision-avoidance agent: ε-greedy Q-network, replay memory, and a
//! delayed target network.

mod dqn;
mod replay;
mod schedule;

pub use dqn::{
    argmax, batch_loss_and_grad, compute_targets, load_policy, select_action, sync_target, train_step, Agent,
    AgentConfig, AgentError, GreedyPolicy, QNetworkPair, StepOutcome,
};
pub use replay::{NotReady, ReplayBuffer, Transition};
pub use schedule::EpsilonSchedule;
