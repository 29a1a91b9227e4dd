//! Stochastic variance-reduced policy optimization.
//!
//! A Gaussian MLP policy is improved by natural-gradient steps inside a KL
//! trust region. Each epoch collects a batch of transitions, freezes an
//! importance-weighted surrogate around the sampling policy and then takes
//! several minibatch steps whose gradients are SVRG estimates anchored at the
//! epoch's full-batch gradient. Steps are preconditioned with a sub-sampled
//! empirical Fisher (solved by conjugate gradients) and sized by a
//! backtracking line search.
//!
//! The numerical core is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the training harness uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envs;
pub mod error;
pub mod gradients;
pub mod harness;
pub mod numkit;
pub mod policy;
pub mod rollout;
pub mod scalar;
pub mod trustopt;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Vector = numkit::Vector<f64>;
pub type Matrix = numkit::Matrix<f64>;
pub type ParamVector = policy::ParamVector<f64>;
pub type Policy = policy::GaussianMlpPolicy<f64>;
pub type Policy32 = policy::GaussianMlpPolicy<f32>;
pub type Trajectory = rollout::Trajectory<f64>;
pub type SurrogateBatch = rollout::SurrogateBatch<f64>;
pub type LinearBaseline = rollout::LinearBaseline<f64>;
pub type GradientEstimate = gradients::GradientEstimate<f64>;
pub type AnchorGradientCache = gradients::AnchorGradientCache<f64>;
pub type IterationRecord = trustopt::IterationRecord<f64>;
pub type TrainRun = trustopt::TrainRun<f64>;

pub use envs::{EnvKind, EnvName, Environment, PendulumEnv, PointMassEnv};
pub use harness::ExperimentConfig;
pub use numkit::Rng;
pub use policy::PolicyArchitecture;
pub use trustopt::{Algorithm, SvrpoConfig};
