//! Guided reverse steps.
//!
//! Four modes share one step routine:
//!
//! * `None`: plain ancestral sampling.
//! * `Vanilla`: a fresh guidance signal at every scheduled step, nothing
//!   elsewhere. With the full schedule this is ordinary classifier (or
//!   classifier-free) guidance; with a sparse schedule it is the early-stop
//!   and uniform-skip baselines.
//! * `Duplicate`: refresh the cached signal `Γ` at scheduled steps and apply
//!   it at every step.
//! * `Compress`: refresh `Γ` at scheduled steps and apply it once, scaled by
//!   the number of sampling steps it stands for (the gap weight).
//!
//! Every step draws exactly one `d`-dimensional noise vector before anything
//! else, so switching modes never shifts the random stream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{ddpm_step_with_noise, draw_noise, NoiseSchedule, SampleState};
use crate::error::{check_dim, check_finite, LabError, Result};
use crate::schedule::GuidanceSchedule;

/// Noise predictor `eps(x_t, t)` or, with a label, `eps(x_t, c, t)`.
pub trait NoisePredictor: Sync {
    fn dim(&self) -> usize;
    fn predict_eps(&self, x: &[f64], t: usize, label: Option<usize>) -> Result<Vec<f64>>;
}

/// A noisy-input classifier `p(y | x_t)`.
pub trait Classifier: Sync {
    fn num_labels(&self) -> usize;
    fn log_posterior(&self, x: &[f64], t: usize) -> Result<Vec<f64>>;
    fn grad_log_prob(&self, x: &[f64], t: usize, y: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    None,
    Vanilla,
    Duplicate,
    Compress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceFamily {
    #[default]
    Classifier,
    ClassifierFree,
}

#[derive(Debug, Clone)]
pub struct GuidanceConfig {
    /// `s` for classifier guidance, `w` for classifier-free guidance.
    pub scale: f64,
    pub mode: GuidanceMode,
    pub family: GuidanceFamily,
    pub schedule: GuidanceSchedule,
}

impl GuidanceConfig {
    pub fn new(scale: f64, mode: GuidanceMode, family: GuidanceFamily, schedule: GuidanceSchedule) -> Result<Self> {
        let cfg = Self {
            scale,
            mode,
            family,
            schedule,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(LabError::config("scale", format!("must be finite and >= 0, got {}", self.scale)));
        }
        if self.mode == GuidanceMode::None {
            return Ok(());
        }
        if self.schedule.is_empty() {
            return Err(LabError::EmptySchedule);
        }
        if self.mode == GuidanceMode::Duplicate && self.schedule.steps()[0] != self.schedule.total_steps() {
            return Err(LabError::config("schedule", "duplicate mode needs the first guidance step at t = T"));
        }
        Ok(())
    }

    /// Whether a fresh guidance signal is computed at `t`.
    pub fn evaluates_at(&self, t: usize) -> bool {
        self.mode != GuidanceMode::None && self.schedule.contains(t)
    }
}

/// Chain-local guidance bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GuidanceState {
    /// Cached guidance signal: the classifier gradient, or the
    /// conditional-minus-unconditional noise difference for classifier-free.
    pub cached_grad: Option<Vec<f64>>,
    /// Classifier-gradient evaluations, or extra unconditional passes.
    pub grad_evals: usize,
    pub last_guidance_t: Option<usize>,
}

/// What happened during one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    /// A guidance term was added to this step.
    pub guidance_applied: bool,
    /// Norm of the freshly evaluated signal, when one was evaluated.
    pub grad_norm: Option<f64>,
}

/// Model bundle a chain samples with.
#[derive(Clone, Copy)]
pub struct Evaluators<'a> {
    pub model: &'a dyn NoisePredictor,
    /// Required for the classifier family.
    pub classifier: Option<&'a dyn Classifier>,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Classifier-guided mean shift `scale * sigma_t^2 * weight * grad`.
pub fn guidance_shift(scale: f64, sigma_sq: f64, weight: f64, grad: &[f64]) -> Vec<f64> {
    let coef = scale * sigma_sq * weight;
    grad.iter().map(|g| coef * g).collect()
}

/// One classifier-guided ancestral step: the unguided mean moved by
/// `s * sigma_t^2 * grad`, then `sigma_t z` added.
pub fn classifier_guided_step<R: Rng + ?Sized>(
    state: &SampleState,
    eps_hat: &[f64],
    grad_log_p: &[f64],
    scale: f64,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleState> {
    let z = draw_noise(rng, state.x.len());
    check_finite(grad_log_p, "classifier gradient")?;
    let shift = guidance_shift(scale, sched.sigma_sq(state.t), 1.0, grad_log_p);
    ddpm_step_with_noise(state, eps_hat, Some(&shift), sched, &z)
}

/// Classifier-free combination `(1 + w) eps_c - w eps_u`, computed as
/// `eps_c + w C` with `C = eps_c - eps_u`. Returns `(eps, C)`.
pub fn cfg_eps(eps_cond: &[f64], eps_uncond: &[f64], w: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(eps_cond.len(), eps_uncond.len())?;
    let c: Vec<f64> = eps_cond.iter().zip(eps_uncond).map(|(a, b)| a - b).collect();
    Ok((add_scaled(eps_cond, w, &c), c))
}

fn add_scaled(base: &[f64], coef: f64, v: &[f64]) -> Vec<f64> {
    base.iter().zip(v).map(|(b, x)| b + coef * x).collect()
}

/// One reverse step under any guidance mode.
pub fn guided_step<R: Rng + ?Sized>(
    state: &SampleState,
    gstate: &mut GuidanceState,
    eval: Evaluators<'_>,
    cfg: &GuidanceConfig,
    label: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(SampleState, StepOutcome)> {
    let t = state.t;
    let z = draw_noise(rng, state.x.len());
    let fresh = cfg.evaluates_at(t);
    let mut outcome = StepOutcome::default();

    // Weight applied to the (fresh or cached) signal this step; None = no term.
    let weight: Option<f64> = match cfg.mode {
        GuidanceMode::None => None,
        GuidanceMode::Vanilla => fresh.then_some(1.0),
        GuidanceMode::Duplicate => Some(1.0),
        GuidanceMode::Compress => {
            if fresh {
                let w = cfg.schedule.weight_at(t).ok_or(LabError::EmptySchedule)?;
                Some(w as f64)
            } else {
                None
            }
        }
    };

    let next = match cfg.family {
        GuidanceFamily::Classifier => {
            let eps = eval.model.predict_eps(&state.x, t, None)?;
            if fresh {
                let clf = eval
                    .classifier
                    .ok_or_else(|| LabError::Invalid("classifier guidance needs a classifier".into()))?;
                let g = clf.grad_log_prob(&state.x, t, label)?;
                check_finite(&g, "classifier gradient")?;
                outcome.grad_norm = Some(l2_norm(&g));
                gstate.grad_evals += 1;
                gstate.last_guidance_t = Some(t);
                gstate.cached_grad = Some(g);
            }
            let shift = match weight {
                Some(w) => {
                    let g = gstate.cached_grad.as_deref().ok_or_else(|| {
                        LabError::Invalid(format!("no cached gradient at t = {t}; schedule must start at T"))
                    })?;
                    outcome.guidance_applied = true;
                    Some(guidance_shift(cfg.scale, sched.sigma_sq(t), w, g))
                }
                None => None,
            };
            ddpm_step_with_noise(state, &eps, shift.as_deref(), sched, &z)?
        }
        GuidanceFamily::ClassifierFree => {
            let eps_c = eval.model.predict_eps(&state.x, t, Some(label))?;
            if fresh {
                let eps_u = eval.model.predict_eps(&state.x, t, None)?;
                let (_, c) = cfg_eps(&eps_c, &eps_u, 0.0)?;
                check_finite(&c, "classifier-free difference")?;
                outcome.grad_norm = Some(l2_norm(&c));
                gstate.grad_evals += 1;
                gstate.last_guidance_t = Some(t);
                gstate.cached_grad = Some(c);
            }
            let eps = match weight {
                Some(w) => {
                    let c = gstate.cached_grad.as_deref().ok_or_else(|| {
                        LabError::Invalid(format!("no cached difference at t = {t}; schedule must start at T"))
                    })?;
                    outcome.guidance_applied = true;
                    add_scaled(&eps_c, cfg.scale * w, c)
                }
                None => eps_c,
            };
            ddpm_step_with_noise(state, &eps, None, sched, &z)?
        }
    };
    Ok((next, outcome))
}

/// Cached-gradient step for the `Duplicate` and `Compress` modes.
pub fn compress_guided_step<R: Rng + ?Sized>(
    state: &SampleState,
    gstate: &mut GuidanceState,
    eval: Evaluators<'_>,
    cfg: &GuidanceConfig,
    label: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(SampleState, StepOutcome)> {
    if !matches!(cfg.mode, GuidanceMode::Duplicate | GuidanceMode::Compress) {
        return Err(LabError::config("mode", "compress_guided_step needs duplicate or compress mode"));
    }
    if cfg.schedule.is_empty() {
        return Err(LabError::EmptySchedule);
    }
    guided_step(state, gstate, eval, cfg, label, sched, rng)
}

/// Observation handed to a trace sink before each step is taken.
pub struct StepEvent<'a> {
    /// State at `t`, before the step.
    pub state: &'a SampleState,
    pub outcome: StepOutcome,
    pub gstate: &'a GuidanceState,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub x0: Vec<f64>,
    pub gstate: GuidanceState,
}

/// Runs `t = T..=1` from `x_T` and returns the final sample. `sink` sees
/// every step (with `x_t` before the update).
#[allow(clippy::too_many_arguments)]
pub fn run_chain<R: Rng + ?Sized>(
    x_t: Vec<f64>,
    label: usize,
    eval: Evaluators<'_>,
    cfg: &GuidanceConfig,
    sched: &NoiseSchedule,
    rng: &mut R,
    sink: &mut dyn FnMut(StepEvent<'_>) -> Result<()>,
) -> Result<ChainResult> {
    cfg.validate()?;
    check_dim(eval.model.dim(), x_t.len())?;
    if cfg.mode != GuidanceMode::None && cfg.schedule.total_steps() != sched.total_steps() {
        return Err(LabError::config("T", "schedule and noise schedule disagree on T"));
    }
    let mut state = SampleState::new(x_t, sched.total_steps());
    let mut gstate = GuidanceState::default();
    while state.t > 0 {
        let (next, outcome) = guided_step(&state, &mut gstate, eval, cfg, label, sched, rng)?;
        sink(StepEvent {
            state: &state,
            outcome,
            gstate: &gstate,
        })?;
        state = next;
    }
    Ok(ChainResult { x0: state.x, gstate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::GaussianMixtureModel;
    use crate::diffusion::{chain_rng, ddpm_step, make_linear_schedule, SigmaMode};
    use crate::model::AnalyticModel;
    use crate::schedule::{make_schedule, ScheduleSpec};

    fn world(t: usize) -> AnalyticModel {
        let s = make_linear_schedule(t, 1e-4, 0.02, SigmaMode::PosteriorVar).unwrap();
        AnalyticModel::new(GaussianMixtureModel::default_world(), s)
    }

    fn cfg(mode: GuidanceMode, family: GuidanceFamily, scale: f64, spec: ScheduleSpec) -> GuidanceConfig {
        GuidanceConfig::new(scale, mode, family, make_schedule(spec).unwrap()).unwrap()
    }

    fn chain(m: &AnalyticModel, c: &GuidanceConfig, seed: u64) -> (Vec<Vec<u64>>, ChainResult, Vec<StepOutcome>) {
        let mut rng = chain_rng(seed, 0);
        let x_t = draw_noise(&mut rng, 2);
        let mut xs = Vec::new();
        let mut outs = Vec::new();
        let eval = m.evaluators();
        let r = run_chain(x_t, 1, eval, c, m.schedule(), &mut rng, &mut |ev| {
            xs.push(ev.state.x.iter().map(|v| v.to_bits()).collect());
            outs.push(ev.outcome);
            Ok(())
        })
        .unwrap();
        (xs, r, outs)
    }

    #[test]
    fn zero_scale_or_zero_grad_matches_ddpm() {
        let m = world(50);
        let s = m.schedule();
        let st = SampleState::new(vec![0.5, -1.2], 30);
        let eps = m.predict_eps(&st.x, 30, None).unwrap();
        let g = m.grad_log_prob(&st.x, 30, 2).unwrap();
        let a = classifier_guided_step(&st, &eps, &g, 0.0, s, &mut chain_rng(4, 0)).unwrap();
        let b = ddpm_step(&st, &eps, s, &mut chain_rng(4, 0)).unwrap();
        assert_eq!(a, b);
        let c = classifier_guided_step(&st, &eps, &[0.0, 0.0], 7.0, s, &mut chain_rng(4, 0)).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn shift_is_linear_in_scale() {
        let m = world(50);
        let s = m.schedule();
        let st = SampleState::new(vec![0.5, -1.2], 30);
        let eps = m.predict_eps(&st.x, 30, None).unwrap();
        let g = m.grad_log_prob(&st.x, 30, 2).unwrap();
        let step = |sc| classifier_guided_step(&st, &eps, &g, sc, s, &mut chain_rng(8, 2)).unwrap().x;
        let (x0, x1, x2) = (step(0.0), step(3.0), step(6.0));
        for j in 0..2 {
            let d1 = x1[j] - x0[j];
            let d2 = x2[j] - x0[j];
            assert!((d2 - 2.0 * d1).abs() <= 1e-12 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn cfg_identities() {
        let (e, c) = cfg_eps(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(e, vec![2.0, -1.0]);
        assert_eq!(c, vec![1.0, -1.0]);
        let (e, _) = cfg_eps(&[0.3, 0.7], &[9.0, -9.0], 0.0).unwrap();
        assert_eq!(e, vec![0.3, 0.7]);
        for w in [0.0, 0.5, 3.0, 100.0] {
            let (e, c) = cfg_eps(&[0.3, -0.7], &[0.3, -0.7], w).unwrap();
            assert_eq!(e, vec![0.3, -0.7]);
            assert_eq!(c, vec![0.0, 0.0]);
        }
        assert!(cfg_eps(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn full_schedule_compress_equals_vanilla() {
        let m = world(60);
        for family in [GuidanceFamily::Classifier, GuidanceFamily::ClassifierFree] {
            let v = cfg(GuidanceMode::Vanilla, family, 4.0, ScheduleSpec::vanilla(60));
            let c = cfg(GuidanceMode::Compress, family, 4.0, ScheduleSpec::power_law(60, 60, 1.0));
            let (xa, ra, _) = chain(&m, &v, 11);
            let (xb, rb, _) = chain(&m, &c, 11);
            assert_eq!(xa, xb);
            assert_eq!(ra.x0, rb.x0);
            assert_eq!(ra.gstate.grad_evals, 60);
            assert_eq!(rb.gstate.grad_evals, 60);
        }
    }

    #[test]
    fn compress_counts_and_weights() {
        let m = world(10);
        let c = cfg(GuidanceMode::Compress, GuidanceFamily::Classifier, 2.0, ScheduleSpec::power_law(10, 5, 0.5));
        let (_, r, outs) = chain(&m, &c, 1);
        assert_eq!(r.gstate.grad_evals, 5);
        let guided: Vec<usize> = outs
            .iter()
            .zip((1..=10).rev())
            .filter(|(o, _)| o.guidance_applied)
            .map(|(_, t)| t)
            .collect();
        assert_eq!(guided, vec![10, 6, 4, 3, 2]);
        assert!(outs.iter().all(|o| o.guidance_applied == o.grad_norm.is_some()));
    }

    #[test]
    fn compress_step_applies_gap_weight() {
        let m = world(10);
        let c = cfg(GuidanceMode::Compress, GuidanceFamily::Classifier, 2.0, ScheduleSpec::power_law(10, 5, 0.5));
        let st = SampleState::new(vec![0.4, 0.9], 10);
        let mut gs = GuidanceState::default();
        let (a, _) = compress_guided_step(&st, &mut gs, m.evaluators(), &c, 3, m.schedule(), &mut chain_rng(2, 0)).unwrap();
        let eps = m.predict_eps(&st.x, 10, None).unwrap();
        let g = m.grad_log_prob(&st.x, 10, 3).unwrap();
        let expect = classifier_guided_step(&st, &eps, &g, 2.0 * 4.0, m.schedule(), &mut chain_rng(2, 0)).unwrap();
        for j in 0..2 {
            assert!((a.x[j] - expect.x[j]).abs() < 1e-12);
        }
        assert_eq!(gs.grad_evals, 1);
        assert_eq!(gs.last_guidance_t, Some(10));
    }

    #[test]
    fn duplicate_reuses_cache_without_evaluating() {
        let m = world(10);
        let c = cfg(GuidanceMode::Duplicate, GuidanceFamily::Classifier, 2.0, ScheduleSpec::power_law(10, 5, 0.5));
        let mut gs = GuidanceState::default();
        let mut rng = chain_rng(5, 0);
        let st = SampleState::new(vec![0.4, 0.9], 10);
        let (st9, _) = compress_guided_step(&st, &mut gs, m.evaluators(), &c, 1, m.schedule(), &mut rng).unwrap();
        let before = gs.clone();
        let mut rng2 = rng.clone();
        let (st8, out) = compress_guided_step(&st9, &mut gs, m.evaluators(), &c, 1, m.schedule(), &mut rng).unwrap();
        assert_eq!(gs, before);
        assert!(out.guidance_applied && out.grad_norm.is_none());
        let eps = m.predict_eps(&st9.x, 9, None).unwrap();
        let expect = classifier_guided_step(&st9, &eps, before.cached_grad.as_ref().unwrap(), 2.0, m.schedule(), &mut rng2).unwrap();
        assert_eq!(st8, expect);
    }

    #[test]
    fn duplicate_needs_schedule_starting_at_t() {
        let s = GuidanceSchedule::from_steps(10, &[8, 3]).unwrap();
        assert!(GuidanceConfig::new(1.0, GuidanceMode::Duplicate, GuidanceFamily::Classifier, s.clone()).is_err());
        assert!(GuidanceConfig::new(1.0, GuidanceMode::Compress, GuidanceFamily::Classifier, s).is_ok());
        let empty = GuidanceSchedule::from_steps(10, &[]).unwrap();
        assert!(GuidanceConfig::new(1.0, GuidanceMode::Compress, GuidanceFamily::Classifier, empty.clone()).is_err());
        assert!(GuidanceConfig::new(1.0, GuidanceMode::None, GuidanceFamily::Classifier, empty).is_ok());
        assert!(GuidanceConfig::new(-1.0, GuidanceMode::None, GuidanceFamily::Classifier, GuidanceSchedule::from_steps(3, &[3]).unwrap()).is_err());
    }

    #[test]
    fn wrong_mode_for_compress_step() {
        let m = world(10);
        let c = cfg(GuidanceMode::Vanilla, GuidanceFamily::Classifier, 2.0, ScheduleSpec::vanilla(10));
        let st = SampleState::new(vec![0.4, 0.9], 10);
        let r = compress_guided_step(&st, &mut GuidanceState::default(), m.evaluators(), &c, 1, m.schedule(), &mut chain_rng(0, 0));
        assert!(r.is_err());
    }

    #[test]
    fn cache_is_frozen_between_guidance_steps() {
        let m = world(40);
        for mode in [GuidanceMode::Duplicate, GuidanceMode::Compress] {
            let c = cfg(mode, GuidanceFamily::Classifier, 3.0, ScheduleSpec::power_law(40, 8, 2.0));
            let mut rng = chain_rng(21, 0);
            let mut st = SampleState::new(draw_noise(&mut rng, 2), 40);
            let mut gs = GuidanceState::default();
            while st.t > 0 {
                let t = st.t;
                let before = gs.clone();
                let (next, _) = guided_step(&st, &mut gs, m.evaluators(), &c, 0, m.schedule(), &mut rng).unwrap();
                if !c.schedule.contains(t) {
                    assert_eq!(gs, before);
                } else {
                    assert_eq!(gs.grad_evals, before.grad_evals + 1);
                }
                st = next;
            }
            assert_eq!(gs.grad_evals, c.schedule.len());
        }
    }

    #[test]
    fn folding_identity_with_frozen_coefficients() {
        // Constant gradient and sigma: w applications of the unit shift equal
        // one application with weight w.
        let g = [0.37, -1.25];
        for w in 1..=7usize {
            let unit = guidance_shift(2.5, 0.013, 1.0, &g);
            let folded = guidance_shift(2.5, 0.013, w as f64, &g);
            for j in 0..2 {
                let summed: f64 = (0..w).map(|_| unit[j]).sum();
                assert!((summed - folded[j]).abs() <= 1e-12 * folded[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn none_mode_is_plain_ddpm_and_zero_scale_vanilla_matches() {
        let m = world(30);
        let none = cfg(GuidanceMode::None, GuidanceFamily::Classifier, 0.0, ScheduleSpec::vanilla(30));
        let v0 = cfg(GuidanceMode::Vanilla, GuidanceFamily::Classifier, 0.0, ScheduleSpec::vanilla(30));
        let (xa, ra, _) = chain(&m, &none, 3);
        let (xb, _, _) = chain(&m, &v0, 3);
        assert_eq!(xa, xb);
        assert_eq!(ra.gstate.grad_evals, 0);

        let mut rng = chain_rng(3, 0);
        let mut st = SampleState::new(draw_noise(&mut rng, 2), 30);
        while st.t > 0 {
            let eps = m.predict_eps(&st.x, st.t, None).unwrap();
            st = ddpm_step(&st, &eps, m.schedule(), &mut rng).unwrap();
        }
        assert_eq!(st.x, ra.x0);
    }

    #[test]
    fn cfg_zero_weight_is_conditional_model() {
        let m = world(30);
        let v = cfg(GuidanceMode::Vanilla, GuidanceFamily::ClassifierFree, 0.0, ScheduleSpec::vanilla(30));
        let (_, r, _) = chain(&m, &v, 6);
        let mut rng = chain_rng(6, 0);
        let mut st = SampleState::new(draw_noise(&mut rng, 2), 30);
        while st.t > 0 {
            let eps = m.predict_eps(&st.x, st.t, Some(1)).unwrap();
            st = ddpm_step(&st, &eps, m.schedule(), &mut rng).unwrap();
        }
        assert_eq!(st.x, r.x0);
    }

    #[test]
    fn cfg_compress_skips_unconditional_passes() {
        let m = world(50);
        let c = cfg(GuidanceMode::Compress, GuidanceFamily::ClassifierFree, 1.5, ScheduleSpec::power_law(50, 10, 1.0));
        let (_, r, outs) = chain(&m, &c, 2);
        assert_eq!(r.gstate.grad_evals, 10);
        assert_eq!(outs.iter().filter(|o| o.guidance_applied).count(), 10);
        let d = cfg(GuidanceMode::Duplicate, GuidanceFamily::ClassifierFree, 1.5, ScheduleSpec::power_law(50, 10, 1.0));
        let (_, r, outs) = chain(&m, &d, 2);
        assert_eq!(r.gstate.grad_evals, 10);
        assert!(outs.iter().all(|o| o.guidance_applied));
    }
}
