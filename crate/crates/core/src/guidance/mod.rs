//! Path geometry, reward terms and the scripted policies wrapped by the
//! safety filter.

mod path;
mod policy;
mod reward;

pub use path::{cross_track_error, heading_error, PathProjection, PathSpec};
pub use policy::{ActionSource, Policy, PolicyAction, PolicyConfig, PolicyKind};
pub use reward::{
    reward_colav, reward_path, reward_psf, reward_total, RewardComponents, RewardConfig,
};
