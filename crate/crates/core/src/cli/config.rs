//! JSON run configuration: schema types and validation.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::ConfigError;
use crate::dynamics::{Car1Spec, Coef, Lipschitz, Model, StateSpaceSpec};
use crate::error::Error;
use crate::experiments::{
    CltConfig, ContinuousVariant, CouplingConfig, LipschitzConfig, LlnConfig, LlnMode, Statistic,
    CLT_GATE,
};
use crate::expr::Expr;
use crate::kernels::{KernelId, LocalizingKernel};
use crate::noise::{CompoundPoisson, JumpDist, LevyTriplet};
use crate::observation::{
    clt_admissible, lln_admissible, make_scheme, BandwidthRule, ObservationScheme, StepRule,
};
use crate::rng::StreamKey;
use crate::stationary::{McSettings, StationaryMoments};

use super::Subcommand;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    triplet: Option<RawTriplet>,
    kernel: Option<String>,
    scheme: Option<RawScheme>,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CoefSpec {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLipschitz {
    a: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    c: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawModel {
    Car1 {
        a: CoefSpec,
        lipschitz: Option<f64>,
        infimum_a: Option<f64>,
        label: Option<String>,
    },
    StateSpace {
        #[serde(rename = "A")]
        a: Vec<Vec<CoefSpec>>,
        #[serde(rename = "B")]
        b: Vec<CoefSpec>,
        #[serde(rename = "C")]
        c: Vec<CoefSpec>,
        lipschitz: RawLipschitz,
        commuting: bool,
        stability_margin: f64,
        label: Option<String>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNormal {
    mean: f64,
    sd: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJumps {
    rate: f64,
    atoms: Option<Vec<(f64, f64)>>,
    normal: Option<RawNormal>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTriplet {
    gamma: f64,
    sigma2: f64,
    jumps: Option<RawJumps>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
enum SchemeName {
    O1,
    O2,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    u: f64,
    b: f64,
    beta: f64,
    scheme: SchemeName,
    #[serde(rename = "Delta")]
    delta: Option<f64>,
    d: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum StatisticName {
    Mean,
    Autocov,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Times {
    from: f64,
    to: f64,
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    #[serde(rename = "N")]
    n: u64,
    h: Option<f64>,
    burn_in: Option<f64>,
    lag: Option<f64>,
    times: Option<Times>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsParams {
    u: Option<f64>,
    #[serde(default)]
    lags: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateParams {
    #[serde(rename = "N")]
    n: u64,
    input: PathBuf,
    #[serde(default = "default_statistic")]
    statistic: StatisticName,
    lag: Option<f64>,
}

fn default_statistic() -> StatisticName {
    StatisticName::Mean
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum LlnModeName {
    Discrete,
    Global,
    Local,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlnParams {
    #[serde(default = "default_lln_mode")]
    mode: LlnModeName,
    #[serde(default = "default_statistic")]
    statistic: StatisticName,
    lag: Option<f64>,
    t: Option<f64>,
    #[serde(rename = "N_list")]
    n_list: Vec<u64>,
    replications: usize,
    h: Option<f64>,
    burn_in: Option<f64>,
    tolerance: Option<f64>,
}

fn default_lln_mode() -> LlnModeName {
    LlnModeName::Discrete
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CltParams {
    #[serde(rename = "N")]
    n: u64,
    replications: usize,
    lag: Option<f64>,
    h: Option<f64>,
    burn_in: Option<f64>,
    variance_tolerance: Option<f64>,
    mc_chunks: Option<usize>,
    mc_points_per_chunk: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingParams {
    t: f64,
    #[serde(rename = "N_list")]
    n_list: Vec<u64>,
    replications: usize,
    h: Option<f64>,
    window: Option<f64>,
    validation_range: Option<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LipschitzParams {
    u: f64,
    ladder: Vec<f64>,
    replications: usize,
    h: Option<f64>,
    window: Option<f64>,
    #[serde(default = "default_norm")]
    norm: u32,
}

fn default_norm() -> u32 {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelParams {
    #[serde(default = "default_ratios")]
    ratios: Vec<f64>,
}

fn default_ratios() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0]
}

/// Simulation of `Y_N` on a set of evaluation times.
#[derive(Debug, Clone)]
pub struct SimulateJob {
    pub model: Model,
    pub triplet: LevyTriplet,
    pub n: u64,
    pub times: Vec<f64>,
    pub h: f64,
    pub burn_in: f64,
    /// Grid the path was laid out on, with the kernel used for the summary.
    pub scheme: Option<(ObservationScheme, LocalizingKernel)>,
    pub lag: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MomentsJob {
    pub model: Model,
    pub triplet: LevyTriplet,
    pub u: f64,
    pub lags: Vec<f64>,
    pub scheme: Option<ObservationScheme>,
}

#[derive(Debug, Clone)]
pub struct EstimateJob {
    pub scheme: ObservationScheme,
    pub kernel: LocalizingKernel,
    pub statistic: Statistic,
    pub input: PathBuf,
}

#[derive(Debug, Clone)]
pub struct KernelJob {
    pub kernel: LocalizingKernel,
    pub ratios: Vec<f64>,
}

/// Fully validated configuration for one subcommand.
#[derive(Debug, Clone)]
pub enum Job {
    Simulate(SimulateJob),
    Moments(MomentsJob),
    Estimate(EstimateJob),
    Lln(LlnConfig),
    Clt(CltConfig),
    Coupling(CouplingConfig),
    Lipschitz(LipschitzConfig),
    ValidateKernel(KernelJob),
}

impl Job {
    /// Installs the run seed into experiment configurations.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Job::Lln(c) => c.seed = seed,
            Job::Clt(c) => {
                c.seed = seed;
                if let Some(mc) = &mut c.mc {
                    mc.key.seed = seed;
                }
            }
            Job::Coupling(c) => c.seed = seed,
            Job::Lipschitz(c) => c.seed = seed,
            _ => {}
        }
        self
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn semantic(message: impl Into<String>) -> ConfigError {
    ConfigError::Semantic(message.into())
}

fn coef(spec: &CoefSpec, path: &str) -> Result<Coef, ConfigError> {
    match spec {
        CoefSpec::Number(x) => Ok(Coef::constant(*x)),
        CoefSpec::Text(s) => {
            let e = Expr::parse(s).map_err(|e| schema(path, e.to_string()))?;
            Ok(if e.is_constant() {
                Coef::constant(e.eval(0.0))
            } else {
                Coef::expr(e)
            })
        }
    }
}

fn build_model(raw: &RawModel) -> Result<Model, ConfigError> {
    match raw {
        RawModel::Car1 {
            a: a_spec,
            lipschitz,
            infimum_a,
            label,
        } => {
            let a = coef(a_spec, "model.a")?;
            let spec = if a.is_constant() {
                let v = a.eval(0.0);
                Car1Spec::constant(v).map_err(|e| semantic(e.to_string()))?
            } else {
                let l = lipschitz.ok_or_else(|| {
                    schema("model.lipschitz", "required when a(t) is not constant")
                })?;
                let inf = infimum_a.ok_or_else(|| {
                    schema("model.infimum_a", "required when a(t) is not constant")
                })?;
                let label = match a_spec {
                    CoefSpec::Text(s) => format!("car1:{s}"),
                    CoefSpec::Number(x) => format!("car1:{x}"),
                };
                Car1Spec::new(a, l, inf)
                    .map_err(|e| semantic(e.to_string()))?
                    .with_label(label)
            };
            let spec = match label {
                Some(l) => spec.with_label(l.clone()),
                None => spec,
            };
            Ok(spec.into())
        }
        RawModel::StateSpace {
            a,
            b,
            c,
            lipschitz,
            commuting,
            stability_margin,
            label,
        } => {
            let p = a.len();
            let mut entries = Vec::with_capacity(p * p);
            for (i, row) in a.iter().enumerate() {
                if row.len() != p {
                    return Err(schema(
                        format!("model.A[{i}]"),
                        format!("row has {} entries, expected {p}", row.len()),
                    ));
                }
                for (j, x) in row.iter().enumerate() {
                    entries.push(coef(x, &format!("model.A[{i}][{j}]"))?);
                }
            }
            let vec_of = |v: &[CoefSpec], name: &str| -> Result<Vec<Coef>, ConfigError> {
                if v.len() != p {
                    return Err(schema(
                        format!("model.{name}"),
                        format!("has {} entries, expected {p}", v.len()),
                    ));
                }
                v.iter()
                    .enumerate()
                    .map(|(i, x)| coef(x, &format!("model.{name}[{i}]")))
                    .collect()
            };
            let spec = StateSpaceSpec::new(
                p,
                entries,
                vec_of(b, "B")?,
                vec_of(c, "C")?,
                Lipschitz {
                    a: lipschitz.a,
                    b: lipschitz.b,
                    c: lipschitz.c,
                },
                *commuting,
                *stability_margin,
            )
            .map_err(|e| semantic(e.to_string()))?;
            let spec = match label {
                Some(l) => spec.with_label(l.clone()),
                None => spec,
            };
            Ok(Model::StateSpace(spec))
        }
    }
}

fn build_triplet(raw: &RawTriplet) -> Result<LevyTriplet, ConfigError> {
    let jumps = match &raw.jumps {
        None => None,
        Some(j) => {
            let dist = match (&j.atoms, &j.normal) {
                (Some(atoms), None) => JumpDist::Atoms(atoms.clone()),
                (None, Some(n)) => JumpDist::Normal {
                    mean: n.mean,
                    sd: n.sd,
                },
                _ => {
                    return Err(schema(
                        "triplet.jumps",
                        "exactly one of `atoms` or `normal` is required",
                    ))
                }
            };
            Some(CompoundPoisson { rate: j.rate, dist })
        }
    };
    let path = match &raw.jumps {
        Some(j) if j.atoms.is_some() => "triplet.jumps.atoms",
        Some(_) => "triplet.jumps",
        None => "triplet",
    };
    LevyTriplet::new(raw.gamma, raw.sigma2, jumps).map_err(|e| match e {
        Error::InvalidTriplet(m) => schema(path, m),
        other => schema(path, other.to_string()),
    })
}

fn build_rules(raw: &RawScheme) -> Result<(f64, BandwidthRule, StepRule), ConfigError> {
    let step = match raw.scheme {
        SchemeName::O1 => {
            if raw.d.is_some() || raw.alpha.is_some() {
                return Err(schema("scheme", "O1 takes `Delta`, not `d`/`alpha`"));
            }
            StepRule::O1 {
                delta: raw
                    .delta
                    .ok_or_else(|| schema("scheme.Delta", "required for O1"))?,
            }
        }
        SchemeName::O2 => {
            if raw.delta.is_some() {
                return Err(schema("scheme.Delta", "O2 takes `d` and `alpha`"));
            }
            StepRule::O2 {
                d: raw.d.ok_or_else(|| schema("scheme.d", "required for O2"))?,
                alpha: raw
                    .alpha
                    .ok_or_else(|| schema("scheme.alpha", "required for O2"))?,
            }
        }
    };
    let bw = BandwidthRule {
        b: raw.b,
        beta: raw.beta,
    };
    if !(bw.beta > 0.0 && bw.beta < 1.0) {
        return Err(semantic(format!(
            "scheme.beta = {} must lie in (0, 1) so that b_N -> 0 and N b_N -> infinity",
            bw.beta
        )));
    }
    if let StepRule::O2 { alpha, .. } = step {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(semantic(format!(
                "scheme.alpha = {alpha} must lie in (0, 1) so that N delta_N -> infinity"
            )));
        }
    }
    if !lln_admissible(&bw, &step) {
        return Err(semantic(
            "scheme does not give m_N = b_N / delta_N -> infinity (needs alpha > beta under O2)",
        ));
    }
    Ok((raw.u, bw, step))
}

fn scheme_at(raw: &RawScheme, n: u64) -> Result<ObservationScheme, ConfigError> {
    let (u, bw, step) = build_rules(raw)?;
    make_scheme(u, n, bw, step).map_err(|e| semantic(format!("at N = {n}: {e}")))
}

fn params<T: DeserializeOwned>(value: Option<serde_json::Value>) -> Result<T, ConfigError> {
    let value = value.unwrap_or_else(|| serde_json::Value::Object(Default::default()));
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." {
            "params".to_string()
        } else {
            format!("params.{path}")
        };
        schema(path, e.into_inner().to_string())
    })
}

fn need<T>(v: Option<T>, path: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| schema(path, "missing section"))
}

fn kernel_of(name: Option<&str>) -> Result<LocalizingKernel, ConfigError> {
    match name {
        None => Ok(LocalizingKernel::rectangular()),
        Some(n) => LocalizingKernel::by_name(n).map_err(|e| schema("kernel", e.to_string())),
    }
}

fn positive(x: f64, path: &str) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(semantic(format!("{path} must be positive, got {x}")))
    }
}

fn burn_in_for(model: &Model, given: Option<f64>, path: &str) -> Result<f64, ConfigError> {
    let min = 8.0 / model.stability_margin();
    match given {
        None => Ok(12.0 / model.stability_margin()),
        Some(b) if b >= min => Ok(b),
        Some(b) => Err(semantic(format!(
            "{path} = {b} is below 8 / stability_margin = {min}"
        ))),
    }
}

fn check_n_list(n_list: &[u64]) -> Result<(), ConfigError> {
    if n_list.is_empty() || n_list[0] == 0 {
        return Err(semantic("params.N_list must be non-empty with N >= 1"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(semantic("params.N_list must be strictly increasing"));
    }
    Ok(())
}

fn statistic_of(name: StatisticName, lag: Option<f64>) -> Result<Statistic, ConfigError> {
    match (name, lag) {
        (StatisticName::Mean, None) => Ok(Statistic::Mean),
        (StatisticName::Mean, Some(_)) => {
            Err(schema("params.lag", "only valid with statistic autocov"))
        }
        (StatisticName::Autocov, k) => {
            let k = k.unwrap_or(0.0);
            if !(k >= 0.0 && k.is_finite()) {
                return Err(semantic(format!("params.lag must be >= 0, got {k}")));
            }
            Ok(Statistic::Autocov { k })
        }
    }
}

/// Parses and validates `text` for `subcommand`. Schema violations carry the
/// offending key path; semantic violations name the failed condition.
pub fn parse_config(text: &str, subcommand: Subcommand) -> Result<Job, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    let model = raw.model.as_ref().map(build_model).transpose()?;
    let triplet = raw.triplet.as_ref().map(build_triplet).transpose()?;
    let kernel = kernel_of(raw.kernel.as_deref())?;

    match subcommand {
        Subcommand::Simulate => {
            let p: SimulateParams = params(raw.params)?;
            let model = need(model, "model")?;
            let triplet = need(triplet, "triplet")?;
            let h = positive(p.h.unwrap_or(0.01), "params.h")?;
            let burn_in = burn_in_for(&model, p.burn_in, "params.burn_in")?;
            let (times, scheme) = match (&raw.scheme, p.times) {
                (Some(s), None) => {
                    let scheme = scheme_at(s, p.n)?;
                    let k = p.lag.unwrap_or(0.0);
                    let times = crate::experiments::union_times(&scheme, k);
                    (times, Some((scheme, kernel)))
                }
                (None, Some(t)) => {
                    if t.count < 1 || !(t.to > t.from) {
                        return Err(semantic("params.times needs to > from and count >= 1"));
                    }
                    if p.lag.is_some() {
                        return Err(schema("params.lag", "only valid together with a scheme"));
                    }
                    let times = (0..=t.count)
                        .map(|j| t.from + (t.to - t.from) * j as f64 / t.count as f64)
                        .collect();
                    (times, None)
                }
                _ => {
                    return Err(schema(
                        "params.times",
                        "give exactly one of a top-level `scheme` or `params.times`",
                    ))
                }
            };
            Ok(Job::Simulate(SimulateJob {
                model,
                triplet,
                n: p.n,
                times,
                h,
                burn_in,
                scheme,
                lag: p.lag,
            }))
        }
        Subcommand::Moments => {
            let p: MomentsParams = params(raw.params)?;
            let model = need(model, "model")?;
            let triplet = need(triplet, "triplet")?;
            let u = match (p.u, &raw.scheme) {
                (Some(u), _) => u,
                (None, Some(s)) => s.u,
                (None, None) => return Err(schema("params.u", "missing; give u or a scheme")),
            };
            let scheme = raw
                .scheme
                .as_ref()
                .map(|s| scheme_at(s, 1 << 10))
                .transpose()?;
            model
                .frozen(u)
                .map_err(|e| semantic(format!("frozen model at u = {u}: {e}")))?;
            Ok(Job::Moments(MomentsJob {
                model,
                triplet,
                u,
                lags: p.lags,
                scheme,
            }))
        }
        Subcommand::Estimate => {
            let p: EstimateParams = params(raw.params)?;
            let scheme = scheme_at(need(raw.scheme.as_ref(), "scheme")?, p.n)?;
            Ok(Job::Estimate(EstimateJob {
                scheme,
                kernel,
                statistic: statistic_of(p.statistic, p.lag)?,
                input: p.input,
            }))
        }
        Subcommand::Lln => {
            let p: LlnParams = params(raw.params)?;
            let model = need(model, "model")?;
            let triplet = need(triplet, "triplet")?;
            check_n_list(&p.n_list)?;
            if p.replications < 100 {
                return Err(semantic(format!(
                    "params.replications = {} but LLN runs need at least 100",
                    p.replications
                )));
            }
            let mode = match p.mode {
                LlnModeName::Discrete => {
                    let s = need(raw.scheme.as_ref(), "scheme")?;
                    let (u, bandwidth, step) = build_rules(s)?;
                    for &n in &p.n_list {
                        scheme_at(s, n)?;
                    }
                    LlnMode::Discrete {
                        u,
                        bandwidth,
                        step,
                        statistic: statistic_of(p.statistic, p.lag)?,
                    }
                }
                LlnModeName::Global => {
                    let t = positive(need(p.t, "params.t")?, "params.t")?;
                    LlnMode::Continuous(ContinuousVariant::Global { t })
                }
                LlnModeName::Local => {
                    let s = need(raw.scheme.as_ref(), "scheme")?;
                    if !kernel.differentiable {
                        return Err(semantic(format!(
                            "continuous localization needs a differentiable kernel, got {}",
                            kernel.name()
                        )));
                    }
                    let bandwidth = BandwidthRule {
                        b: s.b,
                        beta: s.beta,
                    };
                    for &n in &p.n_list {
                        if !(bandwidth.at(n) < s.u) {
                            return Err(semantic(format!("at N = {n}: b_N must be below u")));
                        }
                    }
                    LlnMode::Continuous(ContinuousVariant::Local { u: s.u, bandwidth })
                }
            };
            Ok(Job::Lln(LlnConfig {
                burn_in: burn_in_for(&model, p.burn_in, "params.burn_in")?,
                h: positive(p.h.unwrap_or(0.005), "params.h")?,
                tolerance: positive(p.tolerance.unwrap_or(0.02), "params.tolerance")?,
                model,
                triplet,
                kernel,
                mode,
                n_list: p.n_list,
                replications: p.replications,
                seed: 0,
            }))
        }
        Subcommand::Clt => {
            let p: CltParams = params(raw.params)?;
            let model = need(model, "model")?;
            let triplet = need(triplet, "triplet")?;
            let s = need(raw.scheme.as_ref(), "scheme")?;
            let (u, bandwidth, step) = build_rules(s)?;
            if !clt_admissible(&bandwidth, &step) {
                return Err(semantic(format!(
                    "scheme with beta = {} is inadmissible: {CLT_GATE}",
                    bandwidth.beta
                )));
            }
            if kernel.id != KernelId::Rectangular {
                return Err(semantic(format!(
                    "the central limit statistic uses the rectangular kernel, got {}",
                    kernel.name()
                )));
            }
            if p.replications < 1000 {
                return Err(semantic(format!(
                    "params.replications = {} but CLT runs need at least 1000",
                    p.replications
                )));
            }
            let mu = triplet.moments().mu_l;
            if mu.abs() > 1e-12 {
                return Err(semantic(format!(
                    "driver is not centered (mu_L = {mu}); set gamma so that E[L(1)] = 0"
                )));
            }
            scheme_at(s, p.n)?;
            if let Some(k) = p.lag {
                if !(k >= 0.0 && k.is_finite()) {
                    return Err(semantic(format!("params.lag must be >= 0, got {k}")));
                }
            }
            StationaryMoments::compute(&model, u, &triplet)
                .map_err(|e| semantic(format!("stationary moments at u = {u}: {e}")))?;
            let mc = if triplet.has_jumps() && p.lag.is_some() {
                Some(McSettings {
                    key: StreamKey::new(0, "clt/sigma2_tilde", 0),
                    chunks: p.mc_chunks.unwrap_or(64),
                    points_per_chunk: p.mc_points_per_chunk.unwrap_or(4096),
                })
            } else {
                None
            };
            Ok(Job::Clt(CltConfig {
                burn_in: burn_in_for(&model, p.burn_in, "params.burn_in")?,
                h: positive(p.h.unwrap_or(0.01), "params.h")?,
                variance_tolerance: positive(
                    p.variance_tolerance
                        .unwrap_or(if p.lag.is_some() { 0.15 } else { 0.1 }),
                    "params.variance_tolerance",
                )?,
                model,
                triplet,
                kernel,
                u,
                bandwidth,
                step,
                n: p.n,
                replications: p.replications,
                lag: p.lag,
                mc,
                seed: 0,
            }))
        }
        Subcommand::Coupling => {
            let p: CouplingParams = params(raw.params)?;
            let model = need(model, "model")?;
            let triplet = need(triplet, "triplet")?;
            check_n_list(&p.n_list)?;
            if p.replications < 2 {
                return Err(semantic("params.replications must be >= 2"));
            }
            model
                .frozen(p.t)
                .map_err(|e| semantic(format!("frozen model at t = {}: {e}", p.t)))?;
            Ok(Job::Coupling(CouplingConfig {
                window: burn_in_for(&model, p.window, "params.window")?,
                h: positive(p.h.unwrap_or(0.01), "params.h")?,
                validation_range: p.validation_range.unwrap_or((0.0, 2.0 * p.t.max(1.0))),
                model,
                triplet,
                t: p.t,
                n_list: p.n_list,
                replications: p.replications,
                seed: 0,
            }))
        }
        Subcommand::Lipschitz => {
            let p: LipschitzParams = params(raw.params)?;
            let model = need(model, "model")?;
            let triplet = need(triplet, "triplet")?;
            if p.ladder.is_empty() || p.ladder.iter().any(|&d| !(d > 0.0)) {
                return Err(semantic("params.ladder must hold positive distances"));
            }
            if !(p.norm == 2 || p.norm == 4) {
                return Err(semantic(format!(
                    "params.norm must be 2 or 4, got {}",
                    p.norm
                )));
            }
            let dmax = p.ladder.iter().cloned().fold(0.0, f64::max);
            let mut margin = f64::INFINITY;
            for v in [p.u - dmax, p.u, p.u + dmax] {
                let f = model
                    .frozen(v)
                    .map_err(|e| semantic(format!("frozen model at v = {v}: {e}")))?;
                margin = margin.min(f.stability_margin());
            }
            let window = match p.window {
                None => 12.0 / margin,
                Some(w) if w >= 8.0 / margin => w,
                Some(w) => {
                    return Err(semantic(format!(
                        "params.window = {w} is below 8 / stability_margin = {}",
                        8.0 / margin
                    )))
                }
            };
            Ok(Job::Lipschitz(LipschitzConfig {
                h: positive(p.h.unwrap_or(0.01), "params.h")?,
                model,
                triplet,
                u: p.u,
                ladder: p.ladder,
                replications: p.replications,
                window,
                norm: p.norm,
                seed: 0,
            }))
        }
        Subcommand::ValidateKernel => {
            let p: KernelParams = params(raw.params)?;
            if p.ratios.iter().any(|&r| !(r >= 2.0)) {
                return Err(semantic("params.ratios must all be >= 2"));
            }
            Ok(Job::ValidateKernel(KernelJob {
                kernel,
                ratios: p.ratios,
            }))
        }
    }
}
