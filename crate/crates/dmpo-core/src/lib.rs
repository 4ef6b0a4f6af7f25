//! Direct multi-turn preference optimization on exactly solvable finite MDPs.
//!
//! The crate provides finite MDPs with seeded rollouts, tabular softmax
//! policies, exact state-action occupancy measures with the closed-form
//! optimum of the KL-tilted objective, the DMPO/trajectory-DPO/SFT loss
//! family with analytic gradients, preference-dataset construction under
//! noisy and clean settings, and deterministic training loops with the
//! discount-factor and lose-length sweep experiments.

// Numeric kernels index several tables by (state, action) at once; the
// range-loop lint fights that idiom.
#![allow(clippy::needless_range_loop)]

pub mod datagen;
pub mod envs;
pub mod error;
pub mod losses;
pub mod mdp;
pub mod occupancy;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use datagen::{DatasetManifest, NoiseSpec, PreferencePair, Setting};
pub use envs::{make_env, EnvSpec};
pub use error::{Error, Result};
pub use losses::{LossKind, LossReport, TrainConfig};
pub use mdp::{discounted_return, rollout, Mdp, RolloutReport, Trajectory};
pub use occupancy::{Saom, SaomSolution};
pub use policy::{PolicyGrad, TabularPolicy};
pub use trainer::{EvalSettings, MetricsRecord, SweepRow};
