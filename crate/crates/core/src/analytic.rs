//! Closed-form Gaussian-mixture world.
//!
//! Under the forward process every diagonal Gaussian component stays
//! Gaussian: mean `sqrt(abar) mu_k`, variance `abar var_k + (1 - abar)`. That
//! makes the optimal noise predictor, its label-conditional counterpart, and
//! the Bayes classifier `p(y | x_t)` exact. All densities are evaluated in log
//! space.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{chain_rng, NoiseSchedule};
use crate::error::{check_dim, LabError, Result};

/// Largest allowed drop (in accuracy fraction) between the exact and the
/// perturbed classifier on clean data.
pub const OFF_CLASSIFIER_MAX_DROP: f64 = 0.02;
/// Clean samples used to calibrate the perturbed classifier.
pub const OFF_CLASSIFIER_EVAL_SAMPLES: usize = 10_000;
pub const DEFAULT_OFF_DELTA: f64 = 0.05;

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureModel {
    pub dim: usize,
    pub components: Vec<Component>,
    #[serde(skip)]
    num_labels: usize,
}

impl GaussianMixtureModel {
    pub fn new(dim: usize, components: Vec<Component>) -> Result<Self> {
        let mut m = Self {
            dim,
            components,
            num_labels: 0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks the invariants and caches the label count. Labels must cover
    /// `0..L` without gaps.
    fn validate(&mut self) -> Result<()> {
        if self.dim == 0 {
            return Err(LabError::config("dim", "must be at least 1"));
        }
        if self.components.is_empty() {
            return Err(LabError::config("components", "mixture has no components"));
        }
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.dim || c.var_diag.len() != self.dim {
                return Err(LabError::config(
                    format!("components[{i}]"),
                    format!("mean/var_diag must have length {}", self.dim),
                ));
            }
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(LabError::config(format!("components[{i}].weight"), "must be > 0"));
            }
            if c.var_diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(LabError::config(format!("components[{i}].var_diag"), "entries must be > 0"));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(LabError::config(format!("components[{i}].mean"), "must be finite"));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(LabError::config("weight", format!("weights sum to {total}, expected 1")));
        }
        let num_labels = self.components.iter().map(|c| c.label).max().unwrap_or(0) + 1;
        for y in 0..num_labels {
            if !self.components.iter().any(|c| c.label == y) {
                return Err(LabError::config("label", format!("labels must be contiguous; {y} is missing")));
            }
        }
        self.num_labels = num_labels;
        Ok(())
    }

    /// Eight unit-variance components on a ring of radius 4 in 2-D, four
    /// labels with opposite components sharing a label.
    pub fn default_world() -> Self {
        Self::ring(8, 4.0, 4, 1.0)
    }

    pub fn ring(n: usize, radius: f64, num_labels: usize, var: f64) -> Self {
        let components = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                Component {
                    weight: 1.0 / n as f64,
                    mean: vec![radius * a.cos(), radius * a.sin()],
                    var_diag: vec![var, var],
                    label: k % num_labels,
                }
            })
            .collect();
        Self::new(2, components).expect("ring mixture is valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(s).map_err(|e| LabError::Json {
            context: "mixture".into(),
            source: e,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixture serializes")
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// `ln w_k + ln N(x; sqrt(abar) mu_k, abar var_k + 1 - abar)` for each `k`.
    pub fn component_log_joint(&self, x: &[f64], abar: f64) -> Vec<f64> {
        let r = abar.sqrt();
        self.components
            .iter()
            .map(|c| {
                let mut lp = c.weight.ln();
                for j in 0..self.dim {
                    let v = abar * c.var_diag[j] + (1.0 - abar);
                    let d = x[j] - r * c.mean[j];
                    lp -= 0.5 * ((2.0 * PI * v).ln() + d * d / v);
                }
                lp
            })
            .collect()
    }

    /// Diffused log density `ln q_t(x)` at noise level `abar`.
    pub fn log_density(&self, x: &[f64], abar: f64) -> f64 {
        log_sum_exp(&self.component_log_joint(x, abar))
    }

    /// `grad_x ln q_t(x)`, optionally restricted to the components of one
    /// label (the label-conditional density).
    pub fn score(&self, x: &[f64], abar: f64, label: Option<usize>) -> Vec<f64> {
        let lj = self.component_log_joint(x, abar);
        let keep = |k: usize| label.is_none_or(|y| self.components[k].label == y);
        let sel: Vec<f64> = (0..lj.len()).filter(|&k| keep(k)).map(|k| lj[k]).collect();
        let norm = log_sum_exp(&sel);
        let r = abar.sqrt();
        let mut g = vec![0.0; self.dim];
        for (k, c) in self.components.iter().enumerate() {
            if !keep(k) {
                continue;
            }
            let resp = (lj[k] - norm).exp();
            for j in 0..self.dim {
                let v = abar * c.var_diag[j] + (1.0 - abar);
                g[j] -= resp * (x[j] - r * c.mean[j]) / v;
            }
        }
        g
    }

    /// `ln p(y | x)` for every label at noise level `abar`.
    pub fn label_log_posterior(&self, x: &[f64], abar: f64) -> Vec<f64> {
        let lj = self.component_log_joint(x, abar);
        let total = log_sum_exp(&lj);
        (0..self.num_labels)
            .map(|y| {
                let sel: Vec<f64> = self
                    .components
                    .iter()
                    .zip(&lj)
                    .filter(|(c, _)| c.label == y)
                    .map(|(_, l)| *l)
                    .collect();
                log_sum_exp(&sel) - total
            })
            .collect()
    }

    /// `grad_x ln p(y | x)`: label-conditional score minus the full score.
    pub fn label_log_posterior_grad(&self, x: &[f64], abar: f64, y: usize) -> Vec<f64> {
        let cond = self.score(x, abar, Some(y));
        let full = self.score(x, abar, None);
        cond.iter().zip(&full).map(|(a, b)| a - b).collect()
    }

    /// Index of the most responsible component for a clean sample.
    pub fn assign_component(&self, x: &[f64]) -> usize {
        argmax(&self.component_log_joint(x, 1.0))
    }

    /// Draws a clean sample; returns `(x, component, label)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                k = i;
                break;
            }
        }
        let c = &self.components[k];
        let x = (0..self.dim)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                c.mean[j] + c.var_diag[j].sqrt() * z
            })
            .collect();
        (x, k, c.label)
    }

    /// Fraction of clean samples whose argmax label posterior matches the
    /// generating label, for samples drawn from `truth`.
    pub fn clean_accuracy(&self, truth: &GaussianMixtureModel, n: usize, seed: u64) -> f64 {
        let mut rng = chain_rng(seed, u64::MAX);
        let hits = (0..n)
            .filter(|_| {
                let (x, _, y) = truth.sample(&mut rng);
                argmax(&self.label_log_posterior(&x, 1.0)) == y
            })
            .count();
        hits as f64 / n as f64
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Optimal noise prediction `eps*(x_t, t) = -sqrt(1 - abar_t) grad ln q_t(x_t)`;
/// with a label, the conditional model restricted to that label's components.
pub fn analytic_eps(
    x_t: &[f64],
    t: usize,
    mixture: &GaussianMixtureModel,
    sched: &NoiseSchedule,
    label: Option<usize>,
) -> Result<Vec<f64>> {
    sched.check_t(t)?;
    check_dim(mixture.dim, x_t.len())?;
    if let Some(y) = label {
        check_label(mixture, y)?;
    }
    let abar = sched.alpha_bar(t);
    let c = (1.0 - abar).sqrt();
    Ok(mixture.score(x_t, abar, label).into_iter().map(|g| -c * g).collect())
}

fn check_t_inclusive(t: usize, sched: &NoiseSchedule) -> Result<()> {
    if t > sched.total_steps() {
        return Err(LabError::Timestep {
            t,
            lo: 0,
            hi: sched.total_steps(),
        });
    }
    Ok(())
}

fn check_label(mixture: &GaussianMixtureModel, y: usize) -> Result<()> {
    if y >= mixture.num_labels() {
        return Err(LabError::Invalid(format!(
            "label {y} out of range for {} labels",
            mixture.num_labels()
        )));
    }
    Ok(())
}

/// Exact label posterior under the diffused mixture; `t = 0` is the clean
/// mixture.
pub fn classifier_posterior(
    x_t: &[f64],
    t: usize,
    mixture: &GaussianMixtureModel,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_t_inclusive(t, sched)?;
    check_dim(mixture.dim, x_t.len())?;
    Ok(mixture
        .label_log_posterior(x_t, sched.alpha_bar(t))
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// `grad_{x_t} ln p(y | x_t)`.
pub fn classifier_grad(
    x_t: &[f64],
    t: usize,
    y: usize,
    mixture: &GaussianMixtureModel,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_t_inclusive(t, sched)?;
    check_dim(mixture.dim, x_t.len())?;
    check_label(mixture, y)?;
    Ok(mixture.label_log_posterior_grad(x_t, sched.alpha_bar(t), y))
}

/// Perturbed copy of `mixture` used as a held-out classifier: means move by
/// `delta * std * z` and weights are scaled by `exp(delta * z')` then
/// renormalized. Fails when the perturbed classifier loses more than
/// [`OFF_CLASSIFIER_MAX_DROP`] clean accuracy.
pub fn make_off_classifier(mixture: &GaussianMixtureModel, delta: f64, seed: u64) -> Result<GaussianMixtureModel> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(LabError::config("off_delta", format!("must be finite and >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(mixture.clone());
    }
    let mut rng = chain_rng(seed, 0);
    let mut comps = mixture.components.clone();
    for c in comps.iter_mut() {
        for j in 0..c.mean.len() {
            let z: f64 = rng.sample(StandardNormal);
            c.mean[j] += delta * c.var_diag[j].sqrt() * z;
        }
        let z: f64 = rng.sample(StandardNormal);
        c.weight *= (delta * z).exp();
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in comps.iter_mut() {
        c.weight /= total;
    }
    let off = GaussianMixtureModel::new(mixture.dim, comps)?;

    let eval_seed = seed ^ 0x5eed_0ff0;
    let on_acc = mixture.clean_accuracy(mixture, OFF_CLASSIFIER_EVAL_SAMPLES, eval_seed);
    let off_acc = off.clean_accuracy(mixture, OFF_CLASSIFIER_EVAL_SAMPLES, eval_seed);
    if on_acc - off_acc > OFF_CLASSIFIER_MAX_DROP {
        return Err(LabError::config(
            "off_delta",
            format!(
                "perturbation {delta} drops clean accuracy from {on_acc:.4} to {off_acc:.4} (limit {OFF_CLASSIFIER_MAX_DROP})"
            ),
        ));
    }
    log::debug!("off-classifier delta={delta} seed={seed}: clean accuracy {on_acc:.4} -> {off_acc:.4}");
    Ok(off)
}
