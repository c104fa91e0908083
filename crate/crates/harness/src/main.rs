use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use firmsim::audit::audit;
use firmsim::sim::Simulation;
use firmsim_harness::emit::{write_csv, write_svg};
use firmsim_harness::{preset, sweep, Axis, ExperimentConfig, HarnessError, SweepResult, SweepSpec};

#[derive(Parser)]
#[command(name = "firmsim", version, about = "Firm-deadline distributed transaction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration (Replications seeds, starting at Seed).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the protocol trace of the first seed here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Full-factorial sweep over one or more parameters.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// KEY=v1,v2,... (repeatable)
        #[arg(long, required = true)]
        vary: Vec<String>,
        #[arg(long)]
        reps: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run a named experiment preset.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Override the preset's replication count.
        #[arg(long)]
        reps: Option<u32>,
    },
}

fn print_summary(res: &SweepResult) {
    let mut out = std::io::stdout().lock();
    for a in &res.aggregate {
        let s = &a.stats;
        let label = if a.param_values.is_empty() { "(base)" } else { a.param_values.as_str() };
        let miss = s.miss_percent().map(|m| format!("{:.2}% ({:?})", m.percent, m.class)).unwrap_or("n/a".into());
        let resp = s.mean_response_ms().map(|r| format!("{r:.1} ms")).unwrap_or("n/a".into());
        let _ = writeln!(
            out,
            "{label}: seeds={} generated={} committed={} missed={} miss={miss} throughput={:.3}/s response={resp}",
            a.seed_count,
            s.generated,
            s.committed_in_time,
            s.missed,
            s.throughput()
        );
    }
}

fn write_trace(cfg: &ExperimentConfig, path: &Path) -> Result<(), HarnessError> {
    let mut sim = Simulation::new(cfg.sim.clone())?;
    sim.enable_trace();
    let out = sim.run()?;
    let trace = out.trace.unwrap_or_default();
    audit(&out.records, &trace).map_err(|e| HarnessError::Sim(firmsim::SimError::Invariant(e)))?;
    let mut text = String::new();
    for e in &trace {
        text.push_str(&e.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn emit(res: &SweepResult, out: Option<&Path>, plot: Option<(&Path, &str)>) -> Result<(), HarnessError> {
    print_summary(res);
    if let Some(path) = out {
        write_csv(res, path)?;
    }
    if let Some((path, x)) = plot {
        write_svg(res, x, path)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, seed, out, trace } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            cfg.validate()?;
            if let Some(path) = trace {
                write_trace(&cfg, &path)?;
            }
            let res = sweep("custom", &cfg, &SweepSpec::default(), cfg.replications)?;
            emit(&res, out.as_deref(), None)
        }
        Command::Sweep { config, vary, reps, out, plot } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axes = vary.iter().map(|v| Axis::parse(v)).collect::<Result<Vec<_>, _>>()?;
            let x = axes[0].name.clone();
            let res = sweep("custom", &cfg, &SweepSpec::new(axes), reps)?;
            emit(&res, Some(&out), plot.as_deref().map(|p| (p, x.as_str())))
        }
        Command::Preset { name, out, plot, reps } => {
            let p = preset(&name).ok_or_else(|| HarnessError::UnknownPreset(name.clone()))?;
            let plot = match (plot.as_deref(), p.plot_x) {
                (Some(path), Some(x)) => Some((path, x)),
                (Some(_), None) => {
                    return Err(HarnessError::Output(format!("preset `{name}` has no numeric axis to plot")))
                }
                (None, _) => None,
            };
            eprintln!("{}: {}", p.name, p.about);
            let res = sweep(p.name, &p.base, &p.spec, reps.unwrap_or(p.replications()))?;
            emit(&res, out.as_deref(), plot)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
