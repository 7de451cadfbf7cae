//! Configuration, orchestration and file output for the command-line tool.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{FineGrid, PathMeta, PathSample, Propagator};
use crate::error::Error;
use crate::estimators::{localized_autocov, localized_mean, LocalizedStatistic};
use crate::experiments::{
    run_clt, run_coupling, run_lipschitz_u, run_lln, with_workers, ExperimentKind,
    ExperimentReport, Statistic,
};
use crate::kernels::{kernel_validate, riemann_mass, KernelReport};
use crate::rng;
use crate::stationary::StationaryMoments;

mod config;
mod emit;

pub use config::{parse_config, EstimateJob, Job, KernelJob, MomentsJob, SimulateJob};
pub use emit::{read_path_csv, write_csv, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Moments,
    Estimate,
    Lln,
    Clt,
    Coupling,
    Lipschitz,
    ValidateKernel,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Simulate,
        Subcommand::Moments,
        Subcommand::Estimate,
        Subcommand::Lln,
        Subcommand::Clt,
        Subcommand::Coupling,
        Subcommand::Lipschitz,
        Subcommand::ValidateKernel,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Moments => "moments",
            Subcommand::Estimate => "estimate",
            Subcommand::Lln => "lln",
            Subcommand::Clt => "clt",
            Subcommand::Coupling => "coupling",
            Subcommand::Lipschitz => "lipschitz",
            Subcommand::ValidateKernel => "validate-kernel",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Subcommand {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown subcommand `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub config_path: PathBuf,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 lets the pool pick one thread per core.
    pub workers: usize,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("config rejected: {0}")]
    Semantic(String),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(#[from] Error),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Schema { .. }) => 2,
            CliError::Config(ConfigError::Semantic(_)) => 3,
            CliError::Run(Error::Io(_)) | CliError::Io(_) => 4,
            CliError::Run(_) => 3,
        }
    }
}

/// Files written by one run and whether its acceptance check passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    pass: bool,
    details: &'a T,
}

#[derive(Serialize)]
struct SimulateDetails {
    #[serde(rename = "N")]
    n: u64,
    model: String,
    seed: u64,
    points: usize,
    h: f64,
    burn_in: f64,
    localized_mean: Option<LocalizedStatistic>,
    localized_autocov: Option<LocalizedStatistic>,
}

#[derive(Serialize)]
struct LagValue {
    lag: f64,
    value: f64,
}

#[derive(Serialize)]
struct MomentsDetails {
    u: f64,
    mean: f64,
    variance: f64,
    second_moment: f64,
    fourth_moment: f64,
    kernel_integrals: [f64; 4],
    lyapunov_residual: f64,
    autocov: Vec<LagValue>,
    sigma2: Option<f64>,
    sigma2_o2_candidates: Option<[f64; 2]>,
}

#[derive(Serialize)]
struct RiemannRow {
    ratio: f64,
    mass: f64,
    error: f64,
    bound: f64,
    pass: bool,
}

#[derive(Serialize)]
struct KernelDetails {
    kernel: &'static str,
    report: KernelReport,
    riemann: Vec<RiemannRow>,
}

pub fn output_paths(run: &RunConfig) -> (PathBuf, PathBuf) {
    let stem = format!("{}-{}", run.subcommand, run.seed);
    (
        run.output_dir.join(format!("{stem}.csv")),
        run.output_dir.join(format!("{stem}.json")),
    )
}

fn io(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads, validates and runs one configuration, writing
/// `{subcommand}-{seed}.csv` and `.json` into the output directory.
pub fn execute(run: &RunConfig) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(&run.config_path).map_err(|e| io(&run.config_path, e))?;
    let job = parse_config(&text, run.subcommand)?.with_seed(run.seed);
    fs::create_dir_all(&run.output_dir).map_err(|e| io(&run.output_dir, e))?;
    let (csv_path, json_path) = output_paths(run);
    let pass = with_workers(run.workers, || dispatch(&job, run, &csv_path, &json_path))??;
    Ok(Outcome {
        pass,
        csv: csv_path,
        json: json_path,
    })
}

fn dispatch(job: &Job, run: &RunConfig, csv: &Path, json: &Path) -> Result<bool, CliError> {
    match job {
        Job::Simulate(j) => simulate(j, run.seed, csv, json),
        Job::Moments(j) => moments(j, csv, json),
        Job::Estimate(j) => estimate(j, csv, json),
        Job::Lln(c) => experiment(&run_lln(c)?, csv, json),
        Job::Clt(c) => experiment(&run_clt(c)?, csv, json),
        Job::Coupling(c) => experiment(&run_coupling(c)?, csv, json),
        Job::Lipschitz(c) => experiment(&run_lipschitz_u(c)?, csv, json),
        Job::ValidateKernel(j) => kernel(j, csv, json),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn finish<T: Serialize>(pass: bool, details: &T, json: &Path) -> Result<bool, CliError> {
    write_json(json, &Summary { pass, details })?;
    Ok(pass)
}

fn simulate(j: &SimulateJob, seed: u64, csv: &Path, json: &Path) -> Result<bool, CliError> {
    let prop = Propagator::for_yn(&j.model, j.n, &j.times, j.h, j.burn_in)?;
    let mut rng = rng::stream(seed, "simulate", 0);
    let grid = FineGrid::generate(&j.triplet, prop.h(), prop.start(), prop.steps(), &mut rng)?;
    let path = PathSample {
        times: j.times.clone(),
        values: prop.run(&grid.increments),
        fine_grid: None,
        meta: PathMeta {
            n: j.n,
            model: j.model.label().to_string(),
            seed: Some(seed),
        },
    };
    let rows = path
        .times
        .iter()
        .zip(&path.values)
        .map(|(t, v)| vec![num(*t), num(*v)]);
    write_csv(csv, &["time", "value"], rows)?;
    let (mean, autocov) = match &j.scheme {
        Some((scheme, kernel)) => match j.lag {
            None => (Some(localized_mean(&path, scheme, kernel)?), None),
            Some(k) => (None, Some(localized_autocov(&path, scheme, kernel, k)?)),
        },
        None => (None, None),
    };
    let details = SimulateDetails {
        n: j.n,
        model: path.meta.model.clone(),
        seed,
        points: path.times.len(),
        h: prop.h(),
        burn_in: j.burn_in,
        localized_mean: mean,
        localized_autocov: autocov,
    };
    finish(true, &details, json)
}

fn moments(j: &MomentsJob, csv: &Path, json: &Path) -> Result<bool, CliError> {
    let m = StationaryMoments::compute(&j.model, j.u, &j.triplet)?;
    let centered = m.levy.mu_l.abs() <= 1e-12;
    let sigma2 = match (&j.scheme, centered) {
        (Some(s), true) => Some(m.sigma2(s.kind)?.value),
        _ => None,
    };
    let candidates = match (&j.scheme, centered) {
        (Some(s), true) if matches!(s.kind, crate::observation::SchemeKind::O2) => {
            Some(m.sigma2_o2_candidates()?)
        }
        _ => None,
    };
    let details = MomentsDetails {
        u: j.u,
        mean: m.mean,
        variance: m.variance,
        second_moment: m.second_moment,
        fourth_moment: m.fourth_moment,
        kernel_integrals: m.kernel_integrals,
        lyapunov_residual: m.system.lyapunov_residual()?,
        autocov: j
            .lags
            .iter()
            .map(|&lag| LagValue {
                lag,
                value: m.autocov(lag),
            })
            .collect(),
        sigma2,
        sigma2_o2_candidates: candidates,
    };
    write_csv(
        csv,
        &["u", "mean", "variance", "second_moment", "fourth_moment"],
        std::iter::once(vec![
            num(j.u),
            num(m.mean),
            num(m.variance),
            num(m.second_moment),
            num(m.fourth_moment),
        ]),
    )?;
    finish(true, &details, json)
}

fn estimate(j: &EstimateJob, csv: &Path, json: &Path) -> Result<bool, CliError> {
    let path = read_path_csv(&j.input, j.scheme.n)?;
    let stat = match j.statistic {
        Statistic::Mean => localized_mean(&path, &j.scheme, &j.kernel)?,
        Statistic::Autocov { k } => localized_autocov(&path, &j.scheme, &j.kernel, k)?,
    };
    write_csv(
        csv,
        &["N", "u", "kernel", "k", "value", "weight_sum"],
        std::iter::once(vec![
            stat.n.to_string(),
            num(stat.u),
            j.kernel.name().to_string(),
            num(stat.k),
            num(stat.value),
            num(stat.weight_sum),
        ]),
    )?;
    finish(true, &stat, json)
}

fn experiment(r: &ExperimentReport, csv: &Path, json: &Path) -> Result<bool, CliError> {
    match r.kind {
        ExperimentKind::CltMean | ExperimentKind::CltCov => write_csv(
            csv,
            &["replication", "statistic"],
            r.samples
                .iter()
                .enumerate()
                .map(|(i, s)| vec![i.to_string(), num(*s)]),
        )?,
        ExperimentKind::LipschitzU => write_csv(
            csv,
            &["distance", "estimate", "std_error", "pass"],
            r.rows.iter().map(|row| {
                vec![
                    num(row.target),
                    num(row.estimate),
                    num(row.std_error),
                    row.pass.to_string(),
                ]
            }),
        )?,
        _ => write_csv(
            csv,
            &["N", "estimate", "std_error", "target", "rmse", "pass"],
            r.rows.iter().map(|row| {
                vec![
                    row.n.to_string(),
                    num(row.estimate),
                    num(row.std_error),
                    num(row.target),
                    row.rmse.map(num).unwrap_or_default(),
                    row.pass.to_string(),
                ]
            }),
        )?,
    }
    finish(r.pass, r, json)
}

fn kernel(j: &KernelJob, csv: &Path, json: &Path) -> Result<bool, CliError> {
    let report = kernel_validate(&j.kernel);
    let riemann: Vec<RiemannRow> = j
        .ratios
        .iter()
        .map(|&ratio| {
            let mass = riemann_mass(&j.kernel, 1.0, 1.0 / ratio);
            let error = (mass - 1.0).abs();
            let bound = 2.0 * j.kernel.bv_constant / ratio;
            RiemannRow {
                ratio,
                mass,
                error,
                bound,
                pass: error < bound,
            }
        })
        .collect();
    write_csv(
        csv,
        &["ratio", "mass", "error", "bound", "pass"],
        riemann.iter().map(|r| {
            vec![
                num(r.ratio),
                num(r.mass),
                num(r.error),
                num(r.bound),
                r.pass.to_string(),
            ]
        }),
    )?;
    let pass = report.passed() && riemann.iter().all(|r| r.pass);
    let details = KernelDetails {
        kernel: j.kernel.name(),
        report,
        riemann,
    };
    finish(pass, &details, json)
}

/// Schema reference printed by `--help`.
pub const SCHEMA_HELP: &str = r#"CONFIG SCHEMA (JSON, unknown keys are rejected)

  model:    {"type": "car1", "a": EXPR, "lipschitz": NUM, "infimum_a": NUM}
            {"type": "state_space", "A": [[EXPR, ...], ...], "B": [EXPR, ...],
             "C": [EXPR, ...], "lipschitz": {"a": NUM, "b": NUM, "c": NUM},
             "commuting": BOOL, "stability_margin": NUM}
            lipschitz/infimum_a may be omitted for a constant car1 rate.
            An optional "label" names the model in outputs.
  triplet:  {"gamma": NUM, "sigma2": NUM,
             "jumps": {"rate": NUM, "atoms": [[VALUE, PROB], ...]}}
            or "jumps": {"rate": NUM, "normal": {"mean": NUM, "sd": NUM}}
  kernel:   "rectangular" (default) | "biweight"
  scheme:   {"u": NUM, "b": NUM, "beta": NUM, "scheme": "O1", "Delta": NUM}
            {"u": NUM, "b": NUM, "beta": NUM, "scheme": "O2", "d": NUM, "alpha": NUM}
            b_N = b N^-beta; O1: delta_N = Delta / N; O2: delta_N = d N^-alpha.
  params:   per subcommand:
    simulate         N, h?, burn_in?, lag?, times? {from, to, count}
                     (evaluation times come from `scheme` or from `times`)
    moments          u?, lags? [NUM, ...]
    estimate         N, input (CSV with columns time,value), statistic?
                     "mean" | "autocov", lag?
    lln              mode? "discrete" | "global" | "local", statistic?, lag?,
                     t? (global), N_list, replications (>= 100), h?, burn_in?,
                     tolerance?
    clt              N, replications (>= 1000), lag?, h?, burn_in?,
                     variance_tolerance?, mc_chunks?, mc_points_per_chunk?
    coupling         t, N_list, replications, h?, window?, validation_range?
    lipschitz        u, ladder [NUM, ...], replications, h?, window?, norm? 2 | 4
    validate-kernel  ratios? [NUM, ...]

  EXPR is a number or a string in t using + - * / ( ), pi, sin, cos, exp and
  step (0 for negative arguments, 1 otherwise).

EXIT CODES
  0 success or acceptance passed, 1 acceptance failed, 2 schema error,
  3 semantic error, 4 IO error.
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommand_names_round_trip() {
        for c in Subcommand::ALL {
            assert_eq!(c.as_str().parse::<Subcommand>().unwrap(), c);
        }
        assert!("plot".parse::<Subcommand>().is_err());
    }

    #[test]
    fn exit_codes() {
        let schema = CliError::Config(ConfigError::Schema {
            path: "x".into(),
            message: "y".into(),
        });
        assert_eq!(schema.exit_code(), 2);
        assert_eq!(
            CliError::Config(ConfigError::Semantic("s".into())).exit_code(),
            3
        );
        assert_eq!(CliError::Io("gone".into()).exit_code(), 4);
        assert_eq!(CliError::Run(Error::Scheme("m".into())).exit_code(), 3);
    }

    #[test]
    fn every_fixture_parses_or_is_rejected_on_purpose() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_str().unwrap().to_string();
            let sub = match name.split('_').next().unwrap() {
                "clt" => Subcommand::Clt,
                "coupling" => Subcommand::Coupling,
                "lipschitz" => Subcommand::Lipschitz,
                "lln" => Subcommand::Lln,
                "kernel" => Subcommand::ValidateKernel,
                "moments" => Subcommand::Moments,
                "simulate" => Subcommand::Simulate,
                other => panic!("unexpected fixture prefix {other}"),
            };
            let text = fs::read_to_string(&path).unwrap();
            let parsed = parse_config(&text, sub);
            if name == "clt_beta_quarter.json" {
                assert!(matches!(parsed, Err(ConfigError::Semantic(_))));
            } else {
                assert!(parsed.is_ok(), "{name}: {:?}", parsed.err());
            }
        }
    }
}
