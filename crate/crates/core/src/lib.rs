//! Simulator for distributed stochastic convex optimization under
//! intermittent communication: a stochastic Newton method with a
//! trust-region quadratic subsolver, its practical "Lite" variant, and
//! first-order baselines, on regularized logistic regression.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataio;
pub mod error;
pub mod fedsn;
pub mod fedsnlite;
pub mod glm;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod quadcore;
pub mod record;
pub mod seed;
pub mod trustquad;

pub use dataio::{Dataset, LabelMode, ParseOptions, Sample, Sampler, SamplingMode};
pub use error::{Error, Result};
pub use glm::{GlmProblem, NewtonSolution, ProblemConstants};
pub use oracle::{FullBatch, Objective, Oracle, Quadratic};
pub use quadcore::{OracleCase, QuadSubproblem, Schedule, TableSchedule};
pub use record::{Metric, OracleLedger, RunRecord, RunSpec};
pub use seed::SeedPath;
pub use baselines::{fedac, fedac_params, local_sgd, minibatch_sgd, FedAcParams, FedAcVariant};
pub use fedsn::{derive_hyperparams, fedsn, Hyperparams};
pub use fedsnlite::{fedsn_lite, LiteConfig};
pub use harness::{tune_and_run, Algorithm, ExperimentConfig, ResultTable};
pub use trustquad::{constrained_quadratic_solver, TrustSettings};
