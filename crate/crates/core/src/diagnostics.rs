//! Per-step traces and end-of-run metrics.
//!
//! On-sampling loss is `-ln p(y | x_t)` under the classifier that guides the
//! run, off-sampling loss the same quantity under a held-out classifier that
//! never guided it. Both are recorded on the evolving chain `x_t`.
//!
//! Image-space metrics have stand-ins here: `mean_nll` (quality) is the mean
//! negative log-likelihood of final samples under the true mixture,
//! `diversity` (recall analog) is the normalized entropy of the components the
//! samples are assigned to, and `precision_proxy` is the fraction of samples
//! within Mahalanobis radius 3 of some component.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic::{argmax, GaussianMixtureModel};
use crate::error::{LabError, Result};
use crate::diffusion::{chain_rng, ddpm_step, draw_noise, forward_marginal, predict_x0, NoiseSchedule, SampleState};
use crate::guidance::{l2_norm, Classifier, GuidanceState, NoisePredictor, StepOutcome};

pub const TRACE_CSV_HEADER: &str = "chain,t,on_loss,off_loss,guided,grad_norm,grad_evals";
pub const PRECISION_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub chain: usize,
    pub t: usize,
    pub on_loss: f64,
    pub off_loss: f64,
    pub guided: bool,
    pub grad_norm: Option<f64>,
    pub grad_evals: usize,
}

fn nll(logp: &[f64], y: usize) -> Result<f64> {
    let l = -*logp
        .get(y)
        .ok_or_else(|| LabError::Invalid(format!("label {y} unknown to classifier")))?;
    if !l.is_finite() {
        return Err(LabError::Numeric(format!("non-finite loss for label {y}")));
    }
    Ok(l.max(0.0))
}

/// Observes one chain step. Never touches sampler state.
#[allow(clippy::too_many_arguments)]
pub fn record_step(
    chain: usize,
    x_t: &[f64],
    t: usize,
    y: usize,
    on_clf: &dyn Classifier,
    off_clf: &dyn Classifier,
    gstate: &GuidanceState,
    outcome: StepOutcome,
) -> Result<StepTrace> {
    if on_clf.num_labels() != off_clf.num_labels() {
        return Err(LabError::Invalid("on/off classifiers disagree on the label set".into()));
    }
    Ok(StepTrace {
        chain,
        t,
        on_loss: nll(&on_clf.log_posterior(x_t, t)?, y)?,
        off_loss: nll(&off_clf.log_posterior(x_t, t)?, y)?,
        guided: outcome.guidance_applied,
        grad_norm: outcome.grad_norm,
        grad_evals: gstate.grad_evals,
    })
}

/// Differences of consecutive evaluated gradient norms, ordered by
/// descending `t`. Each difference is reported at the later (smaller) `t`.
pub fn grad_magnitude_diff(traces: &[StepTrace]) -> Result<Vec<(usize, f64)>> {
    let mut evals: Vec<(usize, f64)> = traces.iter().filter_map(|s| s.grad_norm.map(|g| (s.t, g))).collect();
    if evals.len() < 2 {
        return Err(LabError::Invalid(format!(
            "need at least 2 gradient evaluations, got {}",
            evals.len()
        )));
    }
    evals.sort_by(|a, b| b.0.cmp(&a.0));
    Ok(evals.windows(2).map(|w| (w[1].0, w[1].1 - w[0].1)).collect())
}

/// Mean over chains of a per-step quantity, keyed by `t` (descending).
pub fn batch_mean_curve(traces: &[StepTrace], field: impl Fn(&StepTrace) -> f64) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for s in traces {
        let e = acc.entry(s.t).or_default();
        e.0 += field(s);
        e.1 += 1;
    }
    acc.into_iter().rev().map(|(t, (sum, n))| (t, sum / n as f64)).collect()
}

/// Mean `|x0_hat(t) - x0|` for `t = 1..=T` (index `t - 1`), where each pair
/// `(x0, eps)` is noised to `x_t = forward_marginal(x0, t, eps)` with the same
/// `eps` at every level and `x0_hat` comes from `model`.
pub fn x0_error_by_noise_level(
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(LabError::Invalid("no (x0, eps) pairs".into()));
    }
    let total = sched.total_steps();
    let mut curve = vec![0.0; total];
    for (x0, eps) in pairs {
        for t in 1..=total {
            let x_t = forward_marginal(x0, t, eps, sched)?;
            let e = model.predict_eps(&x_t, t, None)?;
            let pred = predict_x0(&x_t, &e, t, sched)?;
            let d: Vec<f64> = pred.iter().zip(x0).map(|(a, b)| a - b).collect();
            curve[t - 1] += l2_norm(&d);
        }
    }
    let n = pairs.len() as f64;
    Ok(curve.into_iter().map(|v| v / n).collect())
}

/// Mean `|x0_hat(t) - x_0|` along unguided reverse chains, measured against
/// each chain's own final sample (index `t - 1`).
pub fn x0_error_along_chains(
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    num_chains: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let total = sched.total_steps();
    let mut curve = vec![0.0; total];
    for c in 0..num_chains {
        let mut rng = chain_rng(seed, c as u64);
        let mut st = SampleState::new(draw_noise(&mut rng, model.dim()), total);
        let mut preds = vec![Vec::new(); total];
        while st.t > 0 {
            let e = model.predict_eps(&st.x, st.t, None)?;
            preds[st.t - 1] = predict_x0(&st.x, &e, st.t, sched)?;
            st = ddpm_step(&st, &e, sched, &mut rng)?;
        }
        for (acc, p) in curve.iter_mut().zip(&preds) {
            let d: Vec<f64> = p.iter().zip(&st.x).map(|(a, b)| a - b).collect();
            *acc += l2_norm(&d);
        }
    }
    Ok(curve.into_iter().map(|v| v / num_chains.max(1) as f64).collect())
}

/// Adjacent pairs where a curve indexed by `t - 1` is larger at the smaller
/// `t`, i.e. fails to shrink as sampling proceeds.
pub fn count_increases(curve: &[f64]) -> usize {
    curve.windows(2).filter(|w| w[0] > w[1]).count()
}

/// A finished chain: its final sample and the label it was conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub on_acc: f64,
    pub off_acc: f64,
    pub fitting_gap: f64,
    pub mean_nll: f64,
    pub diversity: f64,
    pub precision_proxy: f64,
    /// Guidance evaluations per chain.
    pub grad_evals: usize,
    pub wall_time: f64,
}

fn mahalanobis(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((a, m), v)| (a - m) * (a - m) / v)
        .sum::<f64>()
        .sqrt()
}

/// Normalized entropy of component assignment counts; 0 when every sample
/// sits in one component, 1 when the components are hit evenly.
pub fn assignment_diversity(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if counts.len() < 2 || n == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    (h / (counts.len() as f64).ln()).clamp(0.0, 1.0)
}

pub fn summarize(
    samples: &[FinalSample],
    traces: &[StepTrace],
    mixture: &GaussianMixtureModel,
    on_clf: &dyn Classifier,
    off_clf: &dyn Classifier,
) -> Result<RunSummary> {
    if samples.is_empty() {
        return Err(LabError::Invalid("no samples to summarize".into()));
    }
    let n = samples.len() as f64;
    let mut on_hits = 0usize;
    let mut off_hits = 0usize;
    let mut nll_sum = 0.0;
    let mut counts = vec![0usize; mixture.num_components()];
    let mut precise = 0usize;
    for s in samples {
        if !s.x.iter().all(|v| v.is_finite()) {
            return Err(LabError::Numeric("non-finite final sample".into()));
        }
        if argmax(&on_clf.log_posterior(&s.x, 0)?) == s.label {
            on_hits += 1;
        }
        if argmax(&off_clf.log_posterior(&s.x, 0)?) == s.label {
            off_hits += 1;
        }
        nll_sum -= mixture.log_density(&s.x, 1.0);
        counts[mixture.assign_component(&s.x)] += 1;
        if mixture
            .components
            .iter()
            .any(|c| mahalanobis(&s.x, &c.mean, &c.var_diag) <= PRECISION_RADIUS)
        {
            precise += 1;
        }
    }

    let mut per_chain: BTreeMap<usize, usize> = BTreeMap::new();
    for s in traces {
        let e = per_chain.entry(s.chain).or_default();
        *e = (*e).max(s.grad_evals);
    }
    let grad_evals = per_chain.values().copied().max().unwrap_or(0);
    if per_chain.values().any(|&g| g != grad_evals) {
        return Err(LabError::Invalid("chains disagree on guidance evaluation count".into()));
    }

    let on_acc = on_hits as f64 / n;
    let off_acc = off_hits as f64 / n;
    Ok(RunSummary {
        on_acc,
        off_acc,
        fitting_gap: on_acc - off_acc,
        mean_nll: nll_sum / n,
        diversity: assignment_diversity(&counts),
        precision_proxy: precise as f64 / n,
        grad_evals,
        wall_time: 0.0,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|g| g.to_string()).unwrap_or_default()
}

/// Writes traces in the given order under [`TRACE_CSV_HEADER`].
pub fn write_trace_csv<W: Write>(mut w: W, traces: &[StepTrace]) -> std::io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for s in traces {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.chain,
            s.t,
            s.on_loss,
            s.off_loss,
            u8::from(s.guided),
            fmt_opt(s.grad_norm),
            s.grad_evals
        )?;
    }
    Ok(())
}

/// Parses a trace CSV. `path` is only used in error messages.
pub fn read_trace_csv(path: &str, text: &str) -> Result<Vec<StepTrace>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_CSV_HEADER => {}
        Some((_, h)) => {
            return Err(LabError::Parse {
                path: path.into(),
                line: 1,
                reason: format!("unexpected header `{h}`"),
            })
        }
        None => {
            return Err(LabError::Parse {
                path: path.into(),
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let bad = |reason: String| LabError::Parse {
            path: path.into(),
            line: lineno,
            reason,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", f.len())));
        }
        let int = |s: &str, name: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("bad {name} `{s}`")));
        let float = |s: &str, name: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad {name} `{s}`")));
        out.push(StepTrace {
            chain: int(f[0], "chain")?,
            t: int(f[1], "t")?,
            on_loss: float(f[2], "on_loss")?,
            off_loss: float(f[3], "off_loss")?,
            guided: match f[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(bad(format!("bad guided `{other}`"))),
            },
            grad_norm: if f[5].trim().is_empty() {
                None
            } else {
                Some(float(f[5], "grad_norm")?)
            },
            grad_evals: int(f[6], "grad_evals")?,
        });
    }
    if out.is_empty() {
        return Err(LabError::Parse {
            path: path.into(),
            line: 2,
            reason: "no trace rows".into(),
        });
    }
    Ok(out)
}
