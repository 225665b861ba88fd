//! Experiment configuration, orchestration, and artifact output.
//!
//! A run samples `num_chains` independent chains in a worker pool. Chain `i`
//! draws its noise from stream `i` of the master seed and its label from a
//! separate stream, so results never depend on thread count or completion
//! order. Artifacts: `trace.csv`, `summary.json`, `schedule.json`, `run.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytic::{make_off_classifier, GaussianMixtureModel, DEFAULT_OFF_DELTA};
use crate::diagnostics::{record_step, summarize, write_trace_csv, FinalSample, RunSummary, StepTrace};
use crate::diffusion::{chain_rng, draw_noise, make_linear_schedule, SigmaMode};
use crate::error::{LabError, Result};
use crate::guidance::{run_chain, GuidanceConfig, GuidanceFamily, GuidanceMode};
use crate::model::AnalyticModel;
use crate::schedule::{make_schedule, GuidanceSchedule, ScheduleMode, ScheduleSpec};

const LABEL_STREAM_SALT: u64 = 0x1abe_1abe_1abe_1abe;

/// `"default"`, a path to a mixture JSON file, or an inline mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldSpec {
    Named(String),
    Inline(GaussianMixtureModel),
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec::Named("default".into())
    }
}

impl WorldSpec {
    pub fn resolve(&self) -> Result<GaussianMixtureModel> {
        match self {
            WorldSpec::Named(n) if n == "default" => Ok(GaussianMixtureModel::default_world()),
            WorldSpec::Named(path) => {
                let p = Path::new(path);
                if !p.exists() {
                    return Err(LabError::config("world", format!("file `{path}` does not exist")));
                }
                GaussianMixtureModel::load(p)
            }
            WorldSpec::Inline(m) => GaussianMixtureModel::new(m.dim, m.components.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_schedule_mode")]
    pub mode: ScheduleMode,
    /// Requested guidance steps; defaults to `T`.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default = "one")]
    pub k: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: ScheduleMode::Vanilla,
            count: None,
            k: 1.0,
        }
    }
}

fn default_schedule_mode() -> ScheduleMode {
    ScheduleMode::Vanilla
}
fn one() -> f64 {
    1.0
}
fn default_beta_min() -> f64 {
    1e-4
}
fn default_beta_max() -> f64 {
    0.02
}
fn default_chains() -> usize {
    64
}
fn default_off_delta() -> f64 {
    DEFAULT_OFF_DELTA
}
fn default_off_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub world: WorldSpec,
    #[serde(rename = "T")]
    pub total_steps: usize,
    #[serde(default = "default_beta_min")]
    pub beta_min: f64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub family: GuidanceFamily,
    #[serde(default)]
    pub mode: GuidanceMode,
    #[serde(default)]
    pub scale: f64,
    /// Multiply the scale by the compact rate `T / |G|`.
    #[serde(default)]
    pub auto_scale: bool,
    #[serde(default = "default_chains")]
    pub num_chains: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_off_delta")]
    pub off_delta: f64,
    #[serde(default = "default_off_seed")]
    pub off_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal config for the default world.
    pub fn new(total_steps: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "T": total_steps })).expect("defaults deserialize")
    }

    pub fn schedule_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            total_steps: self.total_steps,
            requested_count: self.schedule.count.unwrap_or(self.total_steps),
            k: self.schedule.k,
            mode: self.schedule.mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(LabError::config("T", "must be at least 1"));
        }
        if self.num_chains == 0 {
            return Err(LabError::config("num_chains", "must be at least 1"));
        }
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(LabError::config("scale", "must be finite and >= 0"));
        }
        self.schedule_spec().validate().map_err(|e| match e {
            LabError::Config { field, reason } => LabError::config(format!("schedule.{field}"), reason),
            other => other,
        })?;
        Ok(())
    }

    /// Parses a JSON config and applies `key=value` overrides (dotted keys
    /// reach into nested objects). Overrides win over file values.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| LabError::Json {
            context: "config".into(),
            source: e,
        })?;
        apply_overrides(&mut v, overrides)?;
        config_from_value(v)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
        Self::from_json_with_overrides(&text, overrides)
    }
}

fn config_from_value(v: Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| {
        let msg = e.to_string();
        let field = msg.split('`').nth(1).unwrap_or("config").to_string();
        LabError::config(field, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_overrides(v: &mut Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| LabError::config(o.clone(), "override must look like key=value"))?;
        let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cur = &mut *v;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, p) in parts.iter().enumerate() {
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| LabError::config(key, "cannot descend into a non-object"))?;
            if i + 1 == parts.len() {
                obj.insert((*p).to_string(), parsed.clone());
                break;
            }
            cur = obj.entry((*p).to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    /// Ordered by chain, then descending `t`.
    pub traces: Vec<StepTrace>,
    pub samples: Vec<FinalSample>,
    pub schedule: GuidanceSchedule,
    pub scale: f64,
    pub effective_scale: f64,
}

/// Label for chain `chain`, uniform over `num_labels`.
pub fn chain_label(master_seed: u64, chain: usize, num_labels: usize) -> usize {
    chain_rng(master_seed ^ LABEL_STREAM_SALT, chain as u64).random_range(0..num_labels)
}

/// Runs an experiment on a pool of `threads` workers (`None` = rayon's
/// default).
pub fn run(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let mixture = config.world.resolve()?;
    let sched = make_linear_schedule(config.total_steps, config.beta_min, config.beta_max, config.sigma_mode)?;
    let schedule = make_schedule(config.schedule_spec())?;
    let effective_scale = if config.auto_scale {
        config.scale * schedule.compact_rate()
    } else {
        config.scale
    };
    log::info!(
        "scale s = {}, effective s = {} (auto_scale = {}, |G| = {})",
        config.scale,
        effective_scale,
        config.auto_scale,
        schedule.len()
    );
    let gcfg = GuidanceConfig::new(effective_scale, config.mode, config.family, schedule.clone())?;
    let off_mixture = make_off_classifier(&mixture, config.off_delta, config.off_seed)?;
    let on = AnalyticModel::new(mixture.clone(), sched.clone());
    let off = AnalyticModel::new(off_mixture, sched.clone());
    let num_labels = mixture.num_labels();
    let dim = mixture.dim;

    let one_chain = |chain: usize| -> Result<(FinalSample, Vec<StepTrace>)> {
        let mut rng = chain_rng(config.master_seed, chain as u64);
        let label = chain_label(config.master_seed, chain, num_labels);
        let x_t = draw_noise(&mut rng, dim);
        let mut traces = Vec::with_capacity(config.total_steps);
        let res = run_chain(x_t, label, on.evaluators(), &gcfg, &sched, &mut rng, &mut |ev| {
            traces.push(record_step(chain, &ev.state.x, ev.state.t, label, &on, &off, ev.gstate, ev.outcome)?);
            Ok(())
        })?;
        Ok((FinalSample { x: res.x0, label }, traces))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| LabError::Invalid(format!("thread pool: {e}")))?;
    let results: Vec<(FinalSample, Vec<StepTrace>)> =
        pool.install(|| (0..config.num_chains).into_par_iter().map(one_chain).collect::<Result<_>>())?;

    let (samples, nested): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let traces: Vec<StepTrace> = nested.into_iter().flatten().collect();
    let mut summary = summarize(&samples, &traces, &mixture, &on, &off)?;
    summary.wall_time = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        summary,
        traces,
        samples,
        schedule,
        scale: config.scale,
        effective_scale,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| LabError::io(path.display().to_string(), e))
}

/// Writes run artifacts into `dir` (created if missing).
pub fn write_artifacts(config: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir.display().to_string(), e))?;
    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &out.traces).map_err(|e| LabError::io("trace.csv", e))?;
    write_file(&dir.join("trace.csv"), &csv)?;
    let summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), summary.as_bytes())?;
    write_file(&dir.join("schedule.json"), out.schedule.to_json().as_bytes())?;
    let meta = serde_json::json!({
        "config": config,
        "schedule_spec": out.schedule.spec(),
        "schedule_size": out.schedule.len(),
        "compact_rate": out.schedule.compact_rate(),
        "scale": out.scale,
        "effective_scale": out.effective_scale,
    });
    write_file(
        &dir.join("run.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes").as_bytes(),
    )?;
    Ok(())
}

/// Runs and writes artifacts to `config.output_dir` (or `out/`).
pub fn run_to_dir(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    let out = run(config, threads)?;
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    write_artifacts(config, &out, &dir)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    K,
    CompactRate,
    Scale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::CompactRate => "compact_rate",
            SweepAxis::Scale => "scale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// The member config for one axis value.
    pub fn member(&self, value: f64) -> Result<ExperimentConfig> {
        let mut c = self.base.clone();
        match self.axis {
            SweepAxis::K => {
                c.schedule.mode = ScheduleMode::PowerLaw;
                c.schedule.k = value;
            }
            SweepAxis::CompactRate => {
                if !(value >= 1.0) || !value.is_finite() {
                    return Err(LabError::config("values", format!("compact rate {value} must be >= 1")));
                }
                c.schedule.mode = ScheduleMode::PowerLaw;
                let count = (c.total_steps as f64 / value).round() as usize;
                c.schedule.count = Some(count.clamp(1, c.total_steps));
            }
            SweepAxis::Scale => c.scale = value,
        }
        if let Some(dir) = &self.base.output_dir {
            c.output_dir = Some(dir.join(format!("{}_{}", self.axis.name(), value)));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(LabError::config("values", "sweep needs at least one value"));
        }
        for &v in &self.values {
            self.member(v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub schedule_size: usize,
    pub effective_scale: f64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,status,schedule_size,grad_evals,effective_scale,on_acc,off_acc,fitting_gap,mean_nll,diversity,precision_proxy,wall_time";

pub fn write_sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        match &r.summary {
            Some(m) => s.push_str(&format!(
                "{},{},ok,{},{},{},{},{},{},{},{},{},{}\n",
                axis.name(),
                r.value,
                r.schedule_size,
                m.grad_evals,
                r.effective_scale,
                m.on_acc,
                m.off_acc,
                m.fitting_gap,
                m.mean_nll,
                m.diversity,
                m.precision_proxy,
                m.wall_time
            )),
            None => s.push_str(&format!(
                "{},{},failed,{},,,,,,,,,\n",
                axis.name(),
                r.value,
                r.schedule_size
            )),
        }
    }
    s
}

/// Runs every axis value in ascending order. Each member writes its own
/// artifacts when the base config has an output directory, and the sweep
/// table goes to `<output_dir>/sweep.csv`. On a member failure the rows
/// gathered so far plus a `failed` row are still written before the error
/// is returned.
pub fn sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(values.len());
    let mut failure = None;
    for v in values {
        let member = spec.member(v)?;
        let size = make_schedule(member.schedule_spec())?.len();
        let result = run(&member, threads).and_then(|out| {
            if let Some(dir) = &member.output_dir {
                write_artifacts(&member, &out, dir)?;
            }
            Ok(out)
        });
        match result {
            Ok(out) => rows.push(SweepRow {
                value: v,
                schedule_size: size,
                effective_scale: out.effective_scale,
                summary: Some(out.summary),
                error: None,
            }),
            Err(e) => {
                rows.push(SweepRow {
                    value: v,
                    schedule_size: size,
                    effective_scale: f64::NAN,
                    summary: None,
                    error: Some(e.to_string()),
                });
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(dir) = &spec.base.output_dir {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir.display().to_string(), e))?;
        write_file(&dir.join("sweep.csv"), write_sweep_csv(spec.axis, &rows).as_bytes())?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}
