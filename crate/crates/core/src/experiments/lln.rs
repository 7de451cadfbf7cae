use super::{check_increasing, dividing_step, replicate, ExperimentKind, ExperimentReport, Row};
use crate::dynamics::{FineGrid, Model, PathMeta, PathSample, Propagator};
use crate::error::{Error, Result};
use crate::estimators::{
    global_average, localized_autocov, localized_continuous_mean, localized_mean,
};
use crate::kernels::LocalizingKernel;
use crate::noise::LevyTriplet;
use crate::observation::{lln_admissible, make_scheme, BandwidthRule, ObservationScheme, StepRule};
use crate::quadrature::integrate;
use crate::rng;
use crate::stationary::StationaryMoments;
use crate::stats::mean_se;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Mean,
    /// Uncentered lag-`k` product moment `E[Y(0) Y(k)]`.
    Autocov {
        k: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousVariant {
    /// `(1/t) ∫_0^t Y_N`, target `(1/t) ∫_0^t E[Ỹ_v(0)] dv`.
    Global { t: f64 },
    /// Kernel-localized continuous mean around `u`.
    Local { u: f64, bandwidth: BandwidthRule },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LlnMode {
    Discrete {
        u: f64,
        bandwidth: BandwidthRule,
        step: StepRule,
        statistic: Statistic,
    },
    Continuous(ContinuousVariant),
}

#[derive(Debug, Clone)]
pub struct LlnConfig {
    pub model: Model,
    pub triplet: LevyTriplet,
    pub kernel: LocalizingKernel,
    pub mode: LlnMode,
    pub n_list: Vec<u64>,
    pub replications: usize,
    /// Upper bound on the simulation step; shrunk so that it divides the gaps.
    pub h: f64,
    pub burn_in: f64,
    /// Bound on the final RMSE (discrete mode).
    pub tolerance: f64,
    pub seed: u64,
}

impl LlnConfig {
    fn discrete(&self) -> bool {
        matches!(self.mode, LlnMode::Discrete { .. })
    }
}

/// Sorted union of the grid and its lag-shifted copy, merging points that
/// coincide within rounding.
pub fn union_times(scheme: &ObservationScheme, k: f64) -> Vec<f64> {
    let mut all = scheme.grid();
    if k != 0.0 {
        all.extend(scheme.shifted_grid(k));
        all.sort_by(|a, b| a.total_cmp(b));
        all.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(1.0));
    }
    all
}

/// Step `<= h` dividing the rescaled grid spacing and the lag.
pub(crate) fn scheme_step(scheme: &ObservationScheme, k: f64, h: f64) -> Result<f64> {
    let gap = scheme.n as f64 * scheme.delta_n;
    let step = dividing_step(gap, h);
    if k != 0.0 {
        let q = k / step;
        if (q - q.round()).abs() > 1e-9 * q.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "lag {k} is not a multiple of the simulation step {step} implied by N delta_N = {gap}"
            )));
        }
    }
    Ok(step)
}

struct Plan {
    n: u64,
    prop: Propagator,
    scheme: Option<ObservationScheme>,
    /// Localization window for the continuous local variant.
    window: Option<(f64, f64)>,
}

fn uniform_times(from: f64, to: f64, n: u64, h_target: f64) -> (Vec<f64>, f64) {
    let span = n as f64 * (to - from);
    let h = dividing_step(span, h_target);
    let count = (span / h).round() as usize;
    let times = (0..=count)
        .map(|j| {
            if j == count {
                to
            } else {
                from + j as f64 * (to - from) / count as f64
            }
        })
        .collect();
    (times, h)
}

/// Replication mean and RMSE of a localized statistic against its stationary
/// target, for each `N`.
pub fn run_lln(cfg: &LlnConfig) -> Result<ExperimentReport> {
    check_increasing(&cfg.n_list)?;
    if cfg.replications < 2 {
        return Err(Error::InvalidArgument(
            "LLN runs need at least 2 replications".into(),
        ));
    }
    let kind = if cfg.discrete() {
        ExperimentKind::LlnDiscrete
    } else {
        ExperimentKind::LlnContinuous
    };
    let mut report = ExperimentReport::new(kind);

    let target = match cfg.mode {
        LlnMode::Discrete {
            u,
            bandwidth,
            step,
            statistic,
        } => {
            if !lln_admissible(&bandwidth, &step) {
                return Err(Error::Scheme(
                    "bandwidth and step rules do not give b_N / delta_N -> infinity".into(),
                ));
            }
            let mo = StationaryMoments::compute(&cfg.model, u, &cfg.triplet)?;
            match statistic {
                Statistic::Mean => mo.mean,
                Statistic::Autocov { k } => mo.autocov(k) + mo.mean * mo.mean,
            }
        }
        LlnMode::Continuous(ContinuousVariant::Global { t }) => {
            let f = |v: f64| {
                StationaryMoments::compute(&cfg.model, v, &cfg.triplet)
                    .map(|m| m.mean)
                    .unwrap_or(f64::NAN)
            };
            let total = integrate(f, 0.0, t, 1e-12) / t;
            if !total.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "stationary mean is undefined somewhere on [0, {t}]"
                )));
            }
            total
        }
        LlnMode::Continuous(ContinuousVariant::Local { u, .. }) => {
            if !cfg.kernel.differentiable {
                return Err(Error::Kernel(format!(
                    "continuous localization needs a differentiable kernel, got {}",
                    cfg.kernel.name()
                )));
            }
            StationaryMoments::compute(&cfg.model, u, &cfg.triplet)?.mean
        }
    };

    let mut prev_rmse = f64::INFINITY;
    let last = cfg.n_list.len() - 1;
    for (idx, &n) in cfg.n_list.iter().enumerate() {
        let plan = match cfg.mode {
            LlnMode::Discrete {
                u,
                bandwidth,
                step,
                statistic,
            } => {
                let scheme = make_scheme(u, n, bandwidth, step)?;
                let k = match statistic {
                    Statistic::Mean => 0.0,
                    Statistic::Autocov { k } => k,
                };
                let h = scheme_step(&scheme, k, cfg.h)?;
                let times = union_times(&scheme, k);
                Plan {
                    n,
                    prop: Propagator::for_yn(&cfg.model, n, &times, h, cfg.burn_in)?,
                    scheme: Some(scheme),
                    window: None,
                }
            }
            LlnMode::Continuous(ContinuousVariant::Global { t }) => {
                let (times, h) = uniform_times(0.0, t, n, cfg.h);
                Plan {
                    n,
                    prop: Propagator::for_yn(&cfg.model, n, &times, h, cfg.burn_in)?,
                    scheme: None,
                    window: None,
                }
            }
            LlnMode::Continuous(ContinuousVariant::Local { u, bandwidth }) => {
                let b = bandwidth.at(n);
                if !(b < u) {
                    return Err(Error::Scheme(format!(
                        "bandwidth b_N = {b} must be smaller than u = {u}"
                    )));
                }
                let (times, h) = uniform_times(u - b, u + b, n, cfg.h);
                Plan {
                    n,
                    prop: Propagator::for_yn(&cfg.model, n, &times, h, cfg.burn_in)?,
                    scheme: None,
                    window: Some((u, b)),
                }
            }
        };
        let purpose = format!("lln/{n}");
        let values: Vec<f64> = replicate(cfg.replications, |i| {
            let mut rng = rng::stream(cfg.seed, &purpose, i);
            let grid = FineGrid::generate(
                &cfg.triplet,
                plan.prop.h(),
                plan.prop.start(),
                plan.prop.steps(),
                &mut rng,
            )?;
            let path = PathSample {
                times: plan.prop.eval_times().to_vec(),
                values: plan.prop.run(&grid.increments),
                fine_grid: None,
                meta: PathMeta {
                    n: plan.n,
                    model: cfg.model.label().to_string(),
                    seed: Some(cfg.seed),
                },
            };
            evaluate(cfg, &plan, &path)
        })?;
        let (est, se) = mean_se(&values);
        let rmse =
            (values.iter().map(|v| (v - target).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
        let pass = if cfg.discrete() {
            let decreasing = rmse < prev_rmse;
            decreasing && (idx < last || rmse < cfg.tolerance)
        } else {
            (est - target).abs() <= 3.0 * se
        };
        prev_rmse = rmse;
        report.rows.push(Row {
            n,
            estimate: est,
            std_error: se,
            target,
            rmse: Some(rmse),
            pass,
        });
    }
    report.pass = report.rows.iter().all(|r| r.pass);
    if cfg.discrete() {
        report.notes.push(format!(
            "pass requires strictly decreasing RMSE and final RMSE < {}",
            cfg.tolerance
        ));
    } else {
        report
            .notes
            .push("pass requires |estimate - target| <= 3 SE at every N".into());
    }
    Ok(report)
}

fn evaluate(cfg: &LlnConfig, plan: &Plan, path: &PathSample) -> Result<f64> {
    match cfg.mode {
        LlnMode::Discrete { statistic, .. } => {
            let scheme = plan.scheme.as_ref().expect("discrete plan has a scheme");
            match statistic {
                Statistic::Mean => Ok(localized_mean(path, scheme, &cfg.kernel)?.value),
                Statistic::Autocov { k } => {
                    Ok(localized_autocov(path, scheme, &cfg.kernel, k)?.value)
                }
            }
        }
        LlnMode::Continuous(ContinuousVariant::Global { t }) => global_average(path, t),
        LlnMode::Continuous(ContinuousVariant::Local { .. }) => {
            let (u, b) = plan.window.expect("local plan has a window");
            localized_continuous_mean(path, u, b, &cfg.kernel)
        }
    }
}
