//! Multi-agent Hawkes processes: simulation, event-level stochastic maximum
//! likelihood estimation, and superposition-assisted learning.
//!
//! A multi-agent Hawkes process is a collection of Hawkes processes that share
//! one endogenous impact tensor `A` (how entities trigger each other) while
//! each agent keeps its own exogenous intensity vector (a column of `U`).
//! This crate provides:
//!
//! - the model itself: intensities, event featurization, and the per-event
//!   negative log-likelihood ([`model`]),
//! - a branching-process simulator for synthetic data ([`simulate`]),
//! - event-level stochastic projected gradient descent with an offset-clamped
//!   gradient, plus a full-gradient baseline ([`optimize`]),
//! - sequence superposition: merging, K-nonaugmented plans, diversity-driven
//!   folder construction, and the risk-bound tightening check ([`superpose`]),
//! - the alternating superposition-assisted training loop and an experiment
//!   harness ([`pipeline`]),
//! - a cold-start recommendation harness ranking items by endogenous
//!   intensity ([`recsys`]),
//! - file formats: JSONL events, JSON checkpoints and plans, CSV reports
//!   ([`io`]).

pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod pipeline;
pub mod recsys;
pub mod simulate;
pub mod superpose;

pub use error::{Error, Result};
pub use kernel::KernelBasis;
pub use model::{
    featurize, intensity, nll_event, nll_total, nll_total_with_tail, Dataset, Event,
    EventFeatures, EventSequence, ModelParams, ModelShape,
};
pub use optimize::{batch_fit, default_init, grad_event, project_nonneg, stoc_fit, FitReport, OptConfig};
pub use pipeline::{relative_errors, run_strategy, superposed_fit, PipelineConfig, Strategy};
pub use recsys::{
    coldstart_split, evaluate_topn, recommend, train_and_recommend, RecDataset, RecResult,
};
pub use simulate::{
    generate_params, simulate_dataset, simulate_offspring, simulate_sequence, SimConfig,
};
pub use superpose::{
    check_tightening, diversity_plan, estimate_exogenous, merge_sequences, orthogonality_gram,
    random_plan, RiskBoundInputs, SuperpositionPlan, TighteningCheck,
};
