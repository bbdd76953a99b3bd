//! Mirror-descent policy optimization on exactly solvable tabular MDPs.
//!
//! * [`mdp`]: environments, episode sampling and returns.
//! * [`policy`]: soft-max linear policies and their score functions.
//! * [`mirror`]: p-norm mirror maps, proximal steps and the Bregman gradient.
//! * [`estimators`]: vanilla, averaged, recursive and importance-sampled
//!   policy-gradient estimates.
//! * [`algorithms`]: the training loops and their step/batch-size rules.
//! * [`oracle`]: exact values, gradients and estimator moments.
//! * [`harness`]: configuration files, seeded experiments and CSV output.

pub mod algorithms;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mdp;
pub mod mirror;
pub mod oracle;
pub mod policy;
pub mod vecops;

pub use algorithms::{AlgoConfig, Algorithm, LogOptions, RunRecord, StepSize, VrmpoParams};
pub use error::{Error, Result};
pub use mdp::{Mdp, Trajectory};
pub use mirror::MirrorMap;
pub use policy::{FeatureMap, SoftmaxLinearPolicy};
