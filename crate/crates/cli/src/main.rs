//! `colagnn`: train, benchmark and inspect epidemic forecasting models.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration or usage
//! error, 3 data or checkpoint error, 4 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use crate::config::{parse_assignment, parse_value, split_list, RunConfig};
use crate::error::Result;

#[derive(Parser)]
#[command(name = "colagnn", version, about = "Cross-location attention graph network for epidemic forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model for one horizon and seed.
    Train(RunArgs),
    /// Every method at every horizon over all trial seeds.
    Benchmark(RunArgs),
    /// Repeat a trial set while varying the window or the last graph width.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `window` or `graph-dim`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; defaults to 10,15,..,50 or 1,..,15.
        #[arg(long)]
        values: Option<String>,
    },
    /// Write the attention, gate and fused matrices of one input window.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Series CSV supplying the window.
        #[arg(long)]
        data: PathBuf,
        /// Week label ending the input window; defaults to the last week.
        #[arg(long)]
        end: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Moving-window predictions from one or more checkpoints.
    Predict {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Refuse checkpoints trained for another horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-serialize a series or adjacency file in canonical form.
    Dump {
        #[command(subcommand)]
        what: DumpTarget,
    },
    /// Write a synthetic phase-lagged seasonal dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        locations: usize,
        #[arg(long, default_value_t = 500)]
        weeks: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DumpTarget {
    Series { path: PathBuf },
    Adjacency {
        path: PathBuf,
        /// Series CSV fixing the location order.
        #[arg(long)]
        data: PathBuf,
    },
}

/// Config file plus the flags that override it.
#[derive(Args)]
struct RunArgs {
    /// TOML config with [data], [model], [train] and [experiment] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    adj: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated, e.g. 2,3,4,5,10,15.
    #[arg(long)]
    horizons: Option<String>,
    /// Comma-separated, e.g. cola-gnn,gar,ar.
    #[arg(long)]
    methods: Option<String>,
    /// Any field as section.key=value, e.g. train.learning_rate=0.005.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut o: Vec<(String, Value)> = Vec::new();
        let path = |p: &PathBuf| Value::String(p.display().to_string());
        let int = |v: u64| Value::Integer(v as i64);
        let list = |s: &str, f: &dyn Fn(&str) -> Value| Value::Array(split_list(s).iter().map(|x| f(x)).collect());
        if let Some(p) = &self.data {
            o.push(("data.series".into(), path(p)));
        }
        if let Some(p) = &self.adj {
            o.push(("data.adjacency".into(), path(p)));
        }
        if let Some(h) = self.horizon {
            o.push(("experiment.horizon".into(), int(h as u64)));
        }
        if let Some(w) = self.window {
            o.push(("experiment.window".into(), int(w as u64)));
        }
        if let Some(s) = self.seed {
            o.push(("train.seed".into(), int(s)));
        }
        if let Some(t) = self.trials {
            o.push(("train.trials".into(), int(t as u64)));
        }
        if let Some(m) = &self.method {
            o.push(("experiment.method".into(), Value::String(m.clone())));
        }
        if let Some(a) = &self.ablation {
            o.push(("experiment.ablation".into(), Value::String(a.clone())));
        }
        if let Some(p) = &self.out {
            o.push(("experiment.out".into(), path(p)));
        }
        if let Some(h) = &self.horizons {
            o.push(("experiment.horizons".into(), list(h, &parse_value)));
        }
        if let Some(m) = &self.methods {
            o.push(("experiment.methods".into(), list(m, &|x| Value::String(x.to_string()))));
        }
        for s in &self.set {
            o.push(parse_assignment(s)?);
        }
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => commands::train(&args.resolve()?),
        Command::Benchmark(args) => commands::benchmark(&args.resolve()?),
        Command::Sweep { run, param, values } => commands::sweep(&run.resolve()?, &param, values.as_deref()),
        Command::ExportAttention { checkpoint, data, end, out } => {
            commands::export_attention(&checkpoint, &data, end.as_deref(), &out)
        }
        Command::Predict {
            checkpoints,
            data,
            horizon,
            out,
        } => commands::predict(&checkpoints, &data, horizon, out.as_deref()),
        Command::Dump { what } => match what {
            DumpTarget::Series { path } => commands::dump_series(&path),
            DumpTarget::Adjacency { path, data } => commands::dump_adjacency(&path, &data),
        },
        Command::Generate {
            out,
            locations,
            weeks,
            seed,
        } => commands::generate(&out, locations, weeks, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
