use std::path::{Path, PathBuf};

use menger_core::capacity::CapacityParams;
use menger_core::corona::CoronaParams;
use menger_core::transport::TransportParams;
use serde::Deserialize;

use crate::commands::{emit, execute, resolve, Job};
use crate::input::load;
use crate::report::CliError;
use crate::Global;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Curvature,
    MvCheck,
    Beta,
    Corona,
    Audit,
    Transport,
    Capacity,
}

/// `run` input. Paths are relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub pipeline: Pipeline,
    /// CSV path or generator spec.
    pub input: String,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub svg: Option<PathBuf>,
    /// Level table for `beta`, feasible measure for `capacity`.
    #[serde(default)]
    pub extra_output: Option<PathBuf>,
    #[serde(default)]
    pub corona: Option<CoronaParams>,
    #[serde(default)]
    pub capacity: Option<CapacityParams>,
    #[serde(default)]
    pub map: Option<String>,
    #[serde(default = "default_cutoff")]
    pub mc_cutoff: usize,
    #[serde(default = "default_samples")]
    pub mc_samples: u64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_depth")]
    pub depth: i32,
    #[serde(default)]
    pub entries: bool,
    #[serde(default)]
    pub bilip_pairs: Option<u64>,
    #[serde(default)]
    pub opnorm: Option<usize>,
}

fn default_cutoff() -> usize {
    400
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_depth() -> i32 {
    10
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: Self = serde_json::from_str(text).map_err(|e| CliError::bad_input("config", e.to_string()))?;
        if c.schema != SCHEMA {
            return Err(CliError::bad_input("config", format!("unsupported schema {}, expected {SCHEMA}", c.schema)));
        }
        Ok(c)
    }

    pub fn job(&self) -> Result<Job, CliError> {
        let job = match self.pipeline {
            Pipeline::Curvature => {
                Job::Curvature { eps: self.eps, exact_cutoff: self.mc_cutoff, mc_samples: self.mc_samples }
            }
            Pipeline::MvCheck => Job::MvCheck { eps: self.eps },
            Pipeline::Beta => Job::Beta { depth: self.depth, entries: self.entries },
            Pipeline::Corona => Job::Corona { params: self.corona_params() },
            Pipeline::Audit => Job::Audit { params: self.corona_params() },
            Pipeline::Transport => {
                let map = self
                    .map
                    .clone()
                    .ok_or_else(|| CliError::bad_input("config", "transport needs a map"))?;
                let d = TransportParams::default();
                Job::Transport {
                    map,
                    params: TransportParams {
                        exact_cutoff: self.mc_cutoff,
                        mc_samples: self.mc_samples,
                        bilip_pairs: self.bilip_pairs.unwrap_or(d.bilip_pairs),
                        seed: self.seed,
                    },
                    capacity: self.capacity.is_some(),
                    opnorm: self.opnorm,
                }
            }
            Pipeline::Capacity => {
                let params = self.capacity.clone().unwrap_or_default();
                Job::Capacity { alpha: params.eta.is_some(), params }
            }
        };
        Ok(job.seeded(self.seed))
    }

    fn corona_params(&self) -> CoronaParams {
        self.corona.clone().unwrap_or(CoronaParams { exact_cutoff: self.mc_cutoff, ..CoronaParams::default() })
    }
}

pub fn run(g: &Global, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::bad_input("config", format!("{}: {e}", path.display())))?;
    let c = ExperimentConfig::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let job = c.job()?;
    let loaded = load(&c.input, Some(base))?;
    let output = execute(&job, &loaded, c.seed)?;
    // command line paths win over the config
    let out = g.out.clone().or_else(|| c.output.as_ref().map(|p| resolve(base, p)));
    let svg = g.svg.clone().or_else(|| c.svg.as_ref().map(|p| resolve(base, p)));
    let extra = c.extra_output.as_ref().map(|p| resolve(base, p));
    emit(&output, out.as_deref(), svg.as_deref(), extra.as_deref())
}
