//! `guidance-lab` command line: run experiments, sweeps, plots and schedule
//! inspection on the analytic mixture world.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use guidance_lab::plot::{emit_plots, LossKind};
use guidance_lab::runner::{apply_overrides, run_to_dir, sweep, write_sweep_csv, ExperimentConfig, SweepSpec};
use guidance_lab::schedule::{make_schedule, ScheduleMode, ScheduleSpec};
use guidance_lab::{LabError, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "guidance-lab", version, about = "Sparse guidance experiments on an analytic diffusion testbed")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads for chain execution (default: available parallelism).
    #[arg(long, global = true, env = "GUIDANCE_LAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment from a JSON config and write its artifacts.
    Run {
        config: PathBuf,
        /// Override a config field, e.g. `--set scale=2 --set schedule.k=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides `output_dir`; default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep spec (`{"base": {...}, "axis": "k", "values": [...]}`).
    Sweep {
        spec: PathBuf,
        /// Override a spec field, e.g. `--set base.num_chains=128`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory for member artifacts and `sweep.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render batch-mean loss curves from trace CSVs as SVG.
    Plot {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Write the SVG here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LossArg::On)]
        loss: LossArg,
    },
    /// Print a guidance schedule.
    Schedule {
        #[arg(short = 'T', long = "T")]
        total_steps: usize,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::PowerLaw)]
        mode: ModeArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Vanilla,
    EarlyStop,
    Uniform,
    PowerLaw,
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn cmd_run(cli: &Cli, config: &PathBuf, set: &[String], out: &Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config, set)?;
    if out.is_some() {
        cfg.output_dir = out.clone();
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    cfg.output_dir = Some(dir.clone());
    let res = run_to_dir(&cfg, cli.threads)?;
    let s = &res.summary;
    if cli.json {
        print_json(&json!({
            "output_dir": dir,
            "schedule_size": res.schedule.len(),
            "scale": res.scale,
            "effective_scale": res.effective_scale,
            "summary": s,
        }));
    } else {
        println!("wrote {}", dir.display());
        println!(
            "|G| = {}  s = {}  s_eff = {}",
            res.schedule.len(),
            res.scale,
            res.effective_scale
        );
        println!(
            "on_acc {:.4}  off_acc {:.4}  gap {:.4}  nll {:.4}  diversity {:.4}  precision {:.4}  grad_evals {}  {:.2}s",
            s.on_acc, s.off_acc, s.fitting_gap, s.mean_nll, s.diversity, s.precision_proxy, s.grad_evals, s.wall_time
        );
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, path: &PathBuf, set: &[String], out: &Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| LabError::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    apply_overrides(&mut v, set)?;
    let mut spec: SweepSpec = serde_json::from_value(v).map_err(|e| {
        let msg = e.to_string();
        let field = msg.split('`').nth(1).unwrap_or("sweep").to_string();
        LabError::config(field, msg)
    })?;
    if out.is_some() {
        spec.base.output_dir = out.clone();
    }
    let rows = sweep(&spec, cli.threads)?;
    if cli.json {
        let rows: Vec<_> = rows
            .iter()
            .map(|r| {
                json!({
                    "value": r.value,
                    "schedule_size": r.schedule_size,
                    "effective_scale": r.effective_scale,
                    "summary": r.summary,
                })
            })
            .collect();
        print_json(&json!({ "axis": spec.axis, "rows": rows }));
    } else {
        print!("{}", write_sweep_csv(spec.axis, &rows));
    }
    Ok(())
}

fn cmd_plot(cli: &Cli, traces: &[PathBuf], out: &Option<PathBuf>, loss: LossArg) -> Result<()> {
    let kind = match loss {
        LossArg::On => LossKind::OnLoss,
        LossArg::Off => LossKind::OffLoss,
    };
    let paths: Vec<&std::path::Path> = traces.iter().map(|p| p.as_path()).collect();
    let svg = emit_plots(&paths, kind)?;
    match out {
        Some(p) => {
            fs::write(p, &svg).map_err(|e| LabError::io(p.display().to_string(), e))?;
            if cli.json {
                print_json(&json!({ "output": p, "series": traces.len(), "loss": kind }));
            } else {
                println!("wrote {}", p.display());
            }
        }
        None if cli.json => print_json(&json!({ "series": traces.len(), "loss": kind, "svg": svg })),
        None => print!("{svg}"),
    }
    Ok(())
}

fn cmd_schedule(cli: &Cli, total: usize, count: Option<usize>, k: f64, mode: ModeArg) -> Result<()> {
    let count = count.unwrap_or(total);
    let spec = match mode {
        ModeArg::Vanilla => ScheduleSpec::vanilla(total),
        ModeArg::EarlyStop => ScheduleSpec::early_stop(total, count),
        ModeArg::Uniform => ScheduleSpec::uniform(total, count),
        ModeArg::PowerLaw => ScheduleSpec::power_law(total, count, k),
    };
    let sched = make_schedule(spec)?;
    let weights: Vec<usize> = sched.gap_weights()?.into_iter().map(|(_, w)| w).collect();
    if cli.json {
        print_json(&json!({
            "spec": sched.spec(),
            "steps": sched.steps(),
            "size": sched.len(),
            "compact_rate": sched.compact_rate(),
            "gap_weights": weights,
        }));
    } else {
        let mode_name = match spec.mode {
            ScheduleMode::Vanilla => "vanilla",
            ScheduleMode::EarlyStop => "early_stop",
            ScheduleMode::Uniform => "uniform",
            ScheduleMode::PowerLaw => "power_law",
        };
        println!(
            "{mode_name} T={total} count={count} k={k}: |G| = {}, compact rate {:.3}",
            sched.len(),
            sched.compact_rate()
        );
        let steps: Vec<String> = sched.steps().iter().map(|t| t.to_string()).collect();
        println!("{}", steps.join(" "));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run { config, set, out } => cmd_run(&cli, config, set, out),
        Command::Sweep { spec, set, out } => cmd_sweep(&cli, spec, set, out),
        Command::Plot { traces, out, loss } => cmd_plot(&cli, traces, out, *loss),
        Command::Schedule {
            total_steps,
            count,
            k,
            mode,
        } => cmd_schedule(&cli, *total_steps, *count, *k, *mode),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                eprintln!("{}", json!({ "error": e.to_string(), "exit_code": e.exit_code() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
