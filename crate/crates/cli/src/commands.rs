use std::path::{Path, PathBuf};

use menger_core::capacity::{estimate_alpha, estimate_gamma, CapacityParams};
use menger_core::corona::{build_top, packing_audit, root_square, structure_report, ClassKind, CoronaParams};
use menger_core::curvature::{c2_monte_carlo, c2_total, mv_identity_report};
use menger_core::generators::GeneratorSpec;
use menger_core::jones::beta_criterion;
use menger_core::measure::WeightedPlanarMeasure;
use menger_core::transport::{
    capacity_ratio_experiment, operator_norm_transfer, pushforward, teocurv_experiment, BilipschitzMapSpec,
    TransportParams,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::input::{load, Loaded};
use crate::report::{envelope, to_value, write_json, write_text, CliError, Stage};
use crate::svg::{square_corners, Picture};
use crate::{Command, CoronaArgs, Global};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "kebab-case")]
pub enum Job {
    Curvature {
        #[serde(default)]
        eps: f64,
        #[serde(default = "default_cutoff")]
        exact_cutoff: usize,
        #[serde(default = "default_samples")]
        mc_samples: u64,
    },
    MvCheck {
        #[serde(default)]
        eps: f64,
    },
    Beta {
        #[serde(default = "default_depth")]
        depth: i32,
        #[serde(default)]
        entries: bool,
    },
    Corona {
        #[serde(default)]
        params: CoronaParams,
    },
    Audit {
        #[serde(default)]
        params: CoronaParams,
    },
    Transport {
        map: String,
        #[serde(default)]
        params: TransportParams,
        #[serde(default)]
        capacity: bool,
        #[serde(default)]
        opnorm: Option<usize>,
    },
    Capacity {
        #[serde(default)]
        params: CapacityParams,
        #[serde(default)]
        alpha: bool,
    },
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

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Curvature { .. } => "curvature",
            Job::MvCheck { .. } => "mv-check",
            Job::Beta { .. } => "beta",
            Job::Corona { .. } => "corona",
            Job::Audit { .. } => "audit",
            Job::Transport { .. } => "transport",
            Job::Capacity { .. } => "capacity",
        }
    }

    /// Copies the global seed into every nested parameter set.
    pub fn seeded(mut self, seed: u64) -> Self {
        match &mut self {
            Job::Corona { params } | Job::Audit { params } => params.seed = seed,
            Job::Transport { params, .. } => params.seed = seed,
            Job::Capacity { params, .. } => params.seed = seed,
            _ => {}
        }
        self
    }
}

pub struct Output {
    pub report: Value,
    pub svg: Option<String>,
    /// Extra text outputs: (label, contents).
    pub extra: Vec<(&'static str, String)>,
}

fn corona_params(a: &CoronaArgs) -> CoronaParams {
    CoronaParams { a: a.a, delta: a.delta, eps0: a.eps0, exact_cutoff: a.exact_cutoff, ..CoronaParams::default() }
}

fn parse_map(s: &str) -> Result<BilipschitzMapSpec, CliError> {
    s.parse().stage("map")
}

pub fn dispatch(g: &Global, command: Command) -> Result<(), CliError> {
    let out = g.out.as_deref();
    let job = match command {
        Command::Gen { spec } => {
            let spec: GeneratorSpec = spec.parse().stage("gen")?;
            let m = spec.generate().stage("gen")?;
            write_svg(g.svg.as_deref(), || atoms_picture(&m, None))?;
            return write_text(out, &m.to_csv_string());
        }
        Command::Push { input, map } => {
            let map = parse_map(&map)?;
            let loaded = load(&input, None)?;
            let image = pushforward(&map, &loaded.measure).stage("push")?;
            write_svg(g.svg.as_deref(), || atoms_picture(&image, Some(&loaded.measure)))?;
            return write_text(out, &image.to_csv_string());
        }
        Command::Run { config } => return crate::config::run(g, &config),
        Command::Curvature { input, eps, exact_cutoff, mc_samples } => {
            (input, Job::Curvature { eps, exact_cutoff, mc_samples }, None)
        }
        Command::MvCheck { input, eps } => (input, Job::MvCheck { eps }, None),
        Command::Beta { input, depth, level_csv, entries } => (input, Job::Beta { depth, entries }, level_csv),
        Command::Corona { input, params } => (input, Job::Corona { params: corona_params(&params) }, None),
        Command::Audit { input, params } => (input, Job::Audit { params: corona_params(&params) }, None),
        Command::Transport { input, map, exact_cutoff, mc_samples, pairs, capacity, opnorm } => (
            input,
            Job::Transport {
                map,
                params: TransportParams { exact_cutoff, mc_samples, bilip_pairs: pairs, seed: 0 },
                capacity,
                opnorm,
            },
            None,
        ),
        Command::Capacity { input, eta, resolution, passes, step, exact_cutoff, mc_samples, measure_out } => (
            input,
            Job::Capacity {
                params: CapacityParams { resolution, eta, passes, step, seed: 0, exact_cutoff, mc_samples },
                alpha: eta.is_some(),
            },
            measure_out,
        ),
    };
    let (input, job, extra_path) = job;
    let loaded = load(&input, None)?;
    let output = execute(&job.seeded(g.seed), &loaded, g.seed)?;
    emit(&output, out, g.svg.as_deref(), extra_path.as_deref())
}

pub fn emit(o: &Output, out: Option<&Path>, svg: Option<&Path>, extra: Option<&Path>) -> Result<(), CliError> {
    if let (Some(path), Some(s)) = (svg, &o.svg) {
        write_text(Some(path), s)?;
    }
    if let (Some(path), Some((_, text))) = (extra, o.extra.first()) {
        write_text(Some(path), text)?;
    }
    write_json(out, &o.report)
}

fn write_svg(path: Option<&Path>, f: impl FnOnce() -> String) -> Result<(), CliError> {
    match path {
        Some(p) => write_text(Some(p), &f()),
        None => Ok(()),
    }
}

fn atoms_picture(m: &WeightedPlanarMeasure, before: Option<&WeightedPlanarMeasure>) -> String {
    let mut pts = m.points();
    if let Some(b) = before {
        pts.extend(b.points());
    }
    let mut pic = Picture::new(pts);
    if let Some(b) = before {
        pic.atoms(b, "#bbbbbb");
    }
    pic.atoms(m, "#1f4e9c");
    pic.finish()
}

fn class_color(k: ClassKind) -> &'static str {
    match k {
        ClassKind::HighDensity => "#c0392b",
        ClassKind::HighCurvature => "#e67e22",
        ClassKind::LowDensity => "#27ae60",
        ClassKind::None => "#7f8c8d",
    }
}

pub fn execute(job: &Job, input: &Loaded, seed: u64) -> Result<Output, CliError> {
    let m = &input.measure;
    let stage = job.name();
    let params = to_value(stage, job)?;
    let done = |result: Value, svg: Option<String>, extra: Vec<(&'static str, String)>| Output {
        report: envelope(stage, json!({ "seed": seed, "job": params.clone() }), Some(input.info.clone()), result),
        svg,
        extra,
    };
    match job {
        Job::Curvature { eps, exact_cutoff, mc_samples } => {
            let r = if m.len() <= *exact_cutoff {
                c2_total(m, *eps)
            } else {
                c2_monte_carlo(m, *eps, *mc_samples, seed).stage(stage)?
            };
            let mut v = to_value(stage, &r)?;
            v["sampled"] = json!(m.len() > *exact_cutoff);
            Ok(done(v, None, vec![]))
        }
        Job::MvCheck { eps } => {
            let r = mv_identity_report(m, *eps).stage(stage)?;
            let mut v = to_value(stage, &r)?;
            v["relative_residual"] = json!(r.residual.abs() / r.lhs.max(1.0));
            Ok(done(v, None, vec![]))
        }
        Job::Beta { depth, entries } => {
            if m.is_empty() {
                return Err(CliError::core(stage, menger_core::Error::EmptySupport));
            }
            if *depth < 0 {
                return Err(CliError::bad_input(stage, "depth must be nonnegative"));
            }
            let pts = m.points();
            let q = root_square(&pts);
            let p = beta_criterion(&pts, &q, q.level + depth).stage(stage)?;
            let csv = p.to_level_csv();
            let mut v = to_value(stage, &p)?;
            if !entries {
                v.as_object_mut().map(|o| o.remove("entries"));
            }
            v["root"] = to_value(stage, &q)?;
            let mut pic = Picture::new(square_corners(&q.square()));
            pic.square(&q.square(), "#000000", 1.0);
            let worst = p.entries.iter().map(|e| e.beta).fold(0.0, f64::max);
            for e in p.entries.iter().filter(|e| worst > 0.0 && e.beta >= 0.25 * worst) {
                pic.square(&e.square.square(), "#c0392b", 0.5);
            }
            pic.atoms(m, "#1f4e9c");
            Ok(done(v, Some(pic.finish()), vec![("levels", csv)]))
        }
        Job::Corona { params } | Job::Audit { params } => {
            params.validate().stage(stage)?;
            let d = build_top(m, params).stage(stage)?;
            let s = structure_report(&d, m).stage(stage)?;
            let result = if matches!(job, Job::Corona { .. }) {
                json!({ "decomposition": to_value(stage, &d)?, "structure": to_value(stage, &s)? })
            } else {
                let a = packing_audit(&d, m).stage(stage)?;
                json!({
                    "top_size": d.top.len(),
                    "top0_size": d.top0_size,
                    "audit": to_value(stage, &a)?,
                    "structure": to_value(stage, &s)?,
                })
            };
            let nz = &d.normalization;
            let root = nz.invert_square(&d.root.square());
            let mut pic = Picture::new(square_corners(&root).into_iter().chain(m.points()));
            for node in &d.top {
                for st in &node.stop {
                    pic.square(&nz.invert_square(&st.square.square()), class_color(st.kind), 0.6);
                }
            }
            for node in &d.top {
                pic.square(&nz.invert_square(&node.square.square()), "#1f4e9c", 1.2);
            }
            pic.atoms(m, "#000000");
            Ok(done(result, Some(pic.finish()), vec![]))
        }
        Job::Transport { map, params, capacity, opnorm } => {
            let spec = parse_map(map)?;
            let r = teocurv_experiment(&spec, m, params).stage(stage)?;
            let mut v = json!({ "transport": to_value(stage, &r)? });
            if *capacity {
                let cp = CapacityParams { seed, ..CapacityParams::default() };
                v["capacity"] = to_value(stage, &capacity_ratio_experiment(&spec, m, &cp).stage(stage)?)?;
            }
            if let Some(it) = opnorm {
                v["operator_norm"] = to_value(stage, &operator_norm_transfer(&spec, m, 0.0, *it, seed).stage(stage)?)?;
            }
            let image = pushforward(&spec, m).stage(stage)?;
            Ok(done(v, Some(atoms_picture(&image, Some(m))), vec![]))
        }
        Job::Capacity { params, alpha } => {
            let pts = m.points();
            if pts.is_empty() {
                return Err(CliError::core(stage, menger_core::Error::EmptySupport));
            }
            let e = if *alpha { estimate_alpha(&pts, params) } else { estimate_gamma(&pts, params) }.stage(stage)?;
            if !(e.report.growth_ok && e.report.curvature_ok) {
                return Err(CliError::internal(stage, "estimator returned an infeasible measure"));
            }
            let csv = e.measure.to_csv_string();
            let pic = atoms_picture(&e.measure, Some(m));
            Ok(done(to_value(stage, &e)?, Some(pic), vec![("measure", csv)]))
        }
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}
