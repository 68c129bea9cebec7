//! Actor-critic scheduling: networks, observation, reward, exploration and
//! the per-RBG decision loop.

pub mod checkpoint;
pub mod explore;
pub mod learner;
pub mod nn;
pub mod observation;
pub mod reward;
mod scheduler;

pub use checkpoint::Checkpoint;
pub use explore::{epsilon_at, select_action, EpsilonSchedule};
pub use learner::{PolicyNetwork, ValueNetwork};
pub use observation::ObservationLayout;
pub use reward::{reward, RewardInputs, RewardWeights};
pub use scheduler::{A2cScheduler, A2cSettings, DecisionStats};
