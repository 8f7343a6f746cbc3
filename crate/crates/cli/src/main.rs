mod commands;
mod config;
mod input;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::report::CliError;

#[derive(Parser, Debug)]
#[command(name = "menger", version, about = "Curvature, corona and capacity experiments on planar measures")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every sampled step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write an SVG picture here.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
}

/// INPUT is a path to an `x,y,w` CSV file or a generator such as
/// `cantor4:3`, `segment:100`, `circle:64`, `grid:8`, `random:200:7` or
/// `lipschitz:500:0,0;0.5,0.3;1,0`.
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a generated measure as CSV.
    Gen { spec: String },
    /// c²(μ), exact or sampled.
    Curvature {
        input: String,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 400)]
        exact_cutoff: usize,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: u64,
    },
    /// ‖C_ε μ‖² against (1/6)c²_ε(μ) plus the diagonal term.
    MvCheck {
        input: String,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// β numbers of the support over the dyadic squares of its root square.
    Beta {
        input: String,
        /// Finest level, as a number of halvings below the root.
        #[arg(long, default_value_t = 10)]
        depth: i32,
        /// Per-level table as CSV.
        #[arg(long)]
        level_csv: Option<PathBuf>,
        /// Include every evaluated square in the report.
        #[arg(long)]
        entries: bool,
    },
    /// Top(E), stop families and good sets.
    Corona {
        input: String,
        #[command(flatten)]
        params: CoronaArgs,
    },
    /// Packing audit and structural checks of the corona decomposition.
    Audit {
        input: String,
        #[command(flatten)]
        params: CoronaArgs,
    },
    /// Image measure under a map, as CSV.
    Push {
        input: String,
        #[arg(long)]
        map: String,
    },
    /// Curvature of the image measure and the distortion of the map.
    Transport {
        input: String,
        #[arg(long)]
        map: String,
        #[arg(long, default_value_t = 400)]
        exact_cutoff: usize,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: u64,
        #[arg(long, default_value_t = 10_000)]
        pairs: u64,
        /// Also compare capacity estimates before and after.
        #[arg(long)]
        capacity: bool,
        /// Also compare Cauchy operator norms, with this many iterations.
        #[arg(long)]
        opnorm: Option<usize>,
    },
    /// Feasible measure on the support and its mass.
    Capacity {
        input: String,
        /// Density cap; switches to the zero-density variant.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long, default_value_t = 50)]
        passes: usize,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long, default_value_t = 400)]
        exact_cutoff: usize,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: u64,
        /// Write the feasible measure as CSV.
        #[arg(long)]
        measure_out: Option<PathBuf>,
    },
    /// Run the pipeline described by a JSON config (`schema: 1`).
    Run { config: PathBuf },
}

#[derive(Args, Debug, Clone)]
pub struct CoronaArgs {
    /// High density threshold A.
    #[arg(long = "A", default_value_t = 100.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps0: f64,
    #[arg(long, default_value_t = 400)]
    pub exact_cutoff: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let bad = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if bad { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return report::fail(&CliError::bad_input("cli", "--threads must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report::fail(&CliError::internal("cli", e.to_string()));
        }
    }
    match commands::dispatch(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report::fail(&e),
    }
}
