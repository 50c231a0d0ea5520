//! Seeded experiment harness for a PPO agent in a two-room unlock-pickup
//! gridworld, guided by a simulated advisor whose advice is calibrated by
//! multi-pass ensembling and fused with the agent policy through a per-step
//! entropy coefficient.
//!
//! Module map:
//! - [`gridworld`]: the environment, observation encoding and advisor prompt.
//! - [`oracle`]: shortest-action planner that defines the optimal action.
//! - [`advisor`]: simulated advisor with deterministic and ensembled advice.
//! - [`shaping`]: policy mixtures and behavior-action sampling.
//! - [`ppo`]: actor-critic networks with hand-written gradients and PPO.
//! - [`metrics`]: ECE, Brier score, discrimination, smoothing and AUC.
//! - [`experiment`]: condition runner, suites, CSV output and config files.

pub mod advisor;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod gridworld;
pub mod metrics;
pub mod oracle;
pub mod ppo;
pub mod rng;
pub mod shaping;

pub use error::{Error, Result};
