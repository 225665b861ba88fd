//! Noise-schedule tables, forward diffusion, x0 prediction, and the ancestral
//! (DDPM) reverse step.
//!
//! Timesteps are 1-based: tables are indexed `0..=T` with `alpha_bar(0) = 1`,
//! and the reverse chain visits `t = T, T-1, ..., 1`, producing `x_0` after
//! the `t = 1` step.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, LabError, Result};

/// Per-chain random stream.
pub type ChainRng = ChaCha8Rng;

/// RNG for chain `chain` of an experiment seeded with `master_seed`. Streams
/// depend only on the pair, never on scheduling order.
pub fn chain_rng(master_seed: u64, chain: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chain);
    rng
}

/// One `d`-dimensional standard normal draw.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `sigma_t^2 = beta_tilde_t`, the true posterior variance.
    #[default]
    #[serde(alias = "posterior")]
    PosteriorVar,
    /// `sigma_t^2 = beta_t`.
    #[serde(alias = "beta")]
    BetaVar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_vars: Vec<f64>,
    sigma_mode: SigmaMode,
}

impl NoiseSchedule {
    /// Builds the derived tables from `beta_1..=beta_T`.
    pub fn from_betas(betas: &[f64], sigma_mode: SigmaMode) -> Result<Self> {
        if betas.is_empty() {
            return Err(LabError::config("T", "must be at least 1"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(LabError::config("beta", format!("{b} is outside (0, 1)")));
        }
        let n = betas.len();
        let mut b = Vec::with_capacity(n + 1);
        b.push(0.0);
        b.extend_from_slice(betas);
        let alphas: Vec<f64> = b.iter().map(|x| 1.0 - x).collect();
        let mut alpha_bars = vec![1.0; n + 1];
        for t in 1..=n {
            alpha_bars[t] = alpha_bars[t - 1] * alphas[t];
        }
        let mut posterior_vars = vec![0.0; n + 1];
        for t in 1..=n {
            posterior_vars[t] = (1.0 - alpha_bars[t - 1]) / (1.0 - alpha_bars[t]) * b[t];
        }
        Ok(Self {
            betas: b,
            alphas,
            alpha_bars,
            posterior_vars,
            sigma_mode,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn posterior_var(&self, t: usize) -> f64 {
        self.posterior_vars[t]
    }

    /// Reverse-step variance `sigma_t^2` from the table, without the
    /// final-step override.
    pub fn sigma_sq(&self, t: usize) -> f64 {
        match self.sigma_mode {
            SigmaMode::PosteriorVar => self.posterior_vars[t],
            SigmaMode::BetaVar => self.betas[t],
        }
    }

    /// Noise scale actually applied at step `t`; zero on the final step.
    pub fn noise_sigma(&self, t: usize) -> f64 {
        if t <= 1 {
            0.0
        } else {
            self.sigma_sq(t).sqrt()
        }
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        let hi = self.total_steps();
        if t == 0 || t > hi {
            return Err(LabError::Timestep { t, lo: 1, hi });
        }
        Ok(())
    }
}

/// Linearly spaced betas over `t = 1..=T`.
pub fn make_linear_schedule(
    total_steps: usize,
    beta_min: f64,
    beta_max: f64,
    sigma_mode: SigmaMode,
) -> Result<NoiseSchedule> {
    if total_steps == 0 {
        return Err(LabError::config("T", "must be at least 1"));
    }
    if !(beta_min > 0.0 && beta_min < 1.0) {
        return Err(LabError::config("beta_min", format!("need 0 < beta_min < 1, got {beta_min}")));
    }
    if !(beta_max >= beta_min && beta_max < 1.0) {
        return Err(LabError::config(
            "beta_max",
            format!("need beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"),
        ));
    }
    let betas: Vec<f64> = if total_steps == 1 {
        vec![beta_min]
    } else {
        let span = (total_steps - 1) as f64;
        (0..total_steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / span)
            .collect()
    };
    NoiseSchedule::from_betas(&betas, sigma_mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleState {
    pub x: Vec<f64>,
    pub t: usize,
}

impl SampleState {
    pub fn new(x: Vec<f64>, t: usize) -> Self {
        Self { x, t }
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise`.
pub fn forward_marginal(x0: &[f64], t: usize, noise: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x0.len(), noise.len())?;
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, e)| a * x + b * e).collect())
}

/// One-shot clean-data estimate `(x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`.
pub fn predict_x0(x_t: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x_t.len(), eps_hat.len())?;
    if t > sched.total_steps() {
        return Err(LabError::Timestep {
            t,
            lo: 0,
            hi: sched.total_steps(),
        });
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t.iter().zip(eps_hat).map(|(x, e)| (x - b * e) / a).collect())
}

/// Unguided reverse mean `(x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps) / sqrt(alpha_t)`.
pub fn reverse_mean(x_t: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Vec<f64> {
    let a = sched.alpha(t);
    let c = (1.0 - a) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / a.sqrt();
    x_t.iter().zip(eps_hat).map(|(x, e)| inv * (x - c * e)).collect()
}

/// Reverse step with a caller-supplied noise draw `z` and an optional
/// additive mean shift (guidance).
pub fn ddpm_step_with_noise(
    state: &SampleState,
    eps_hat: &[f64],
    shift: Option<&[f64]>,
    sched: &NoiseSchedule,
    z: &[f64],
) -> Result<SampleState> {
    let d = state.x.len();
    check_dim(d, eps_hat.len())?;
    check_dim(d, z.len())?;
    sched.check_t(state.t)?;
    check_finite(eps_hat, "noise prediction")?;
    let mut x = reverse_mean(&state.x, eps_hat, state.t, sched);
    if let Some(s) = shift {
        check_dim(d, s.len())?;
        check_finite(s, "guidance shift")?;
        for (xi, si) in x.iter_mut().zip(s) {
            *xi += si;
        }
    }
    let sigma = sched.noise_sigma(state.t);
    for (xi, zi) in x.iter_mut().zip(z) {
        *xi += sigma * zi;
    }
    check_finite(&x, "sample")?;
    Ok(SampleState::new(x, state.t - 1))
}

/// Ancestral step. Always consumes exactly one `d`-dimensional normal draw,
/// including on the final step where the noise is discarded.
pub fn ddpm_step<R: Rng + ?Sized>(
    state: &SampleState,
    eps_hat: &[f64],
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleState> {
    let z = draw_noise(rng, state.x.len());
    ddpm_step_with_noise(state, eps_hat, None, sched, &z)
}

/// The same step written as the posterior mean of `q(x_{t-1} | x_t, x0_hat)`:
/// `c0 * x0_hat + ct * x_t + sigma z`.
pub fn posterior_mean_step(
    state: &SampleState,
    x0_hat: &[f64],
    sched: &NoiseSchedule,
    z: &[f64],
) -> Result<SampleState> {
    let t = state.t;
    sched.check_t(t)?;
    check_dim(state.x.len(), x0_hat.len())?;
    let (a, ab, ab_prev) = (sched.alpha(t), sched.alpha_bar(t), sched.alpha_bar(t - 1));
    let c0 = (1.0 - a) * ab_prev.sqrt() / (1.0 - ab);
    let ct = (1.0 - ab_prev) * a.sqrt() / (1.0 - ab);
    let sigma = sched.noise_sigma(t);
    let x = state
        .x
        .iter()
        .zip(x0_hat)
        .zip(z)
        .map(|((xt, x0), zi)| c0 * x0 + ct * xt + sigma * zi)
        .collect();
    Ok(SampleState::new(x, t - 1))
}
