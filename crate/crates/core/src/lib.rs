//! Diffusion sampling with sparse, cached-gradient guidance.
//!
//! The crate pairs an ancestral DDPM sampler with four guidance modes
//! (none, vanilla, duplicate, compress) driven by a guidance-timestep
//! schedule, and evaluates them on a Gaussian-mixture world where the noise
//! predictor and the noisy-input classifier are exact.

pub mod analytic;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod model;
pub mod plot;
pub mod runner;
pub mod schedule;

pub use analytic::{analytic_eps, classifier_grad, classifier_posterior, make_off_classifier, GaussianMixtureModel};
pub use diagnostics::{grad_magnitude_diff, record_step, summarize, FinalSample, RunSummary, StepTrace};
pub use diffusion::{
    chain_rng, ddpm_step, forward_marginal, make_linear_schedule, predict_x0, NoiseSchedule, SampleState, SigmaMode,
};
pub use error::{LabError, Result};
pub use guidance::{
    cfg_eps, classifier_guided_step, compress_guided_step, run_chain, GuidanceConfig, GuidanceFamily, GuidanceMode,
    GuidanceState,
};
pub use model::AnalyticModel;
pub use runner::{run, sweep, ExperimentConfig, RunOutput, SweepAxis, SweepSpec};
pub use schedule::{make_schedule, GuidanceSchedule, ScheduleMode, ScheduleSpec};
