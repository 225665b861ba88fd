//! Analytic mixture exposed through the sampler's model traits.

use crate::analytic::{analytic_eps, classifier_grad, GaussianMixtureModel};
use crate::diffusion::NoiseSchedule;
use crate::error::{check_dim, LabError, Result};
use crate::guidance::{Classifier, Evaluators, NoisePredictor};

/// A mixture paired with the noise schedule that diffuses it. Acts both as
/// the exact noise predictor and as the Bayes classifier of noisy inputs.
#[derive(Debug, Clone)]
pub struct AnalyticModel {
    mixture: GaussianMixtureModel,
    sched: NoiseSchedule,
}

impl AnalyticModel {
    pub fn new(mixture: GaussianMixtureModel, sched: NoiseSchedule) -> Self {
        Self { mixture, sched }
    }

    pub fn mixture(&self) -> &GaussianMixtureModel {
        &self.mixture
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    /// This model as both noise predictor and guiding classifier.
    pub fn evaluators(&self) -> Evaluators<'_> {
        Evaluators {
            model: self,
            classifier: Some(self),
        }
    }
}

impl NoisePredictor for AnalyticModel {
    fn dim(&self) -> usize {
        self.mixture.dim
    }

    fn predict_eps(&self, x: &[f64], t: usize, label: Option<usize>) -> Result<Vec<f64>> {
        analytic_eps(x, t, &self.mixture, &self.sched, label)
    }
}

impl Classifier for AnalyticModel {
    fn num_labels(&self) -> usize {
        self.mixture.num_labels()
    }

    fn log_posterior(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        if t > self.sched.total_steps() {
            return Err(LabError::Timestep {
                t,
                lo: 0,
                hi: self.sched.total_steps(),
            });
        }
        check_dim(self.mixture.dim, x.len())?;
        Ok(self.mixture.label_log_posterior(x, self.sched.alpha_bar(t)))
    }

    fn grad_log_prob(&self, x: &[f64], t: usize, y: usize) -> Result<Vec<f64>> {
        classifier_grad(x, t, y, &self.mixture, &self.sched)
    }
}
