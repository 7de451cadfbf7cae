use super::lln::{scheme_step, union_times};
use super::{replicate, Candidate, CltSummary, ExperimentKind, ExperimentReport};
use crate::dynamics::{FineGrid, Model, PathMeta, PathSample, Propagator};
use crate::error::{Error, Result};
use crate::estimators::clt_statistic;
use crate::kernels::{KernelId, LocalizingKernel};
use crate::noise::LevyTriplet;
use crate::observation::{clt_admissible, make_scheme, BandwidthRule, StepRule};
use crate::rng;
use crate::stationary::{McSettings, StationaryMoments};
use crate::stats::{ks_standard_normal, summary};

#[derive(Debug, Clone)]
pub struct CltConfig {
    pub model: Model,
    pub triplet: LevyTriplet,
    pub kernel: LocalizingKernel,
    pub u: f64,
    pub bandwidth: BandwidthRule,
    pub step: StepRule,
    pub n: u64,
    pub replications: usize,
    /// `Some(k)` for the lagged product statistic.
    pub lag: Option<f64>,
    pub h: f64,
    pub burn_in: f64,
    /// Allowed `|variance - 1|` after standardization.
    pub variance_tolerance: f64,
    /// Monte Carlo settings for `σ̃²` under a non-Gaussian driver.
    pub mc: Option<McSettings>,
    pub seed: u64,
}

/// Message for schemes violating `√(m_N) b_N → 0`.
pub const CLT_GATE: &str = "the central limit theorem needs √(m_N) b_N → 0, i.e. \
     (1 - beta)/2 < beta under O1 or (alpha - beta)/2 < beta under O2";

/// Distribution of the standardized localized statistic at one `N`,
/// checked against N(0, 1) for every candidate asymptotic variance.
pub fn run_clt(cfg: &CltConfig) -> Result<ExperimentReport> {
    let mo = StationaryMoments::compute(&cfg.model, cfg.u, &cfg.triplet)?;
    if mo.levy.mu_l.abs() > 1e-12 {
        return Err(Error::NotCentered(mo.levy.mu_l));
    }
    if !clt_admissible(&cfg.bandwidth, &cfg.step) {
        return Err(Error::Scheme(CLT_GATE.into()));
    }
    if cfg.kernel.id != KernelId::Rectangular {
        return Err(Error::Kernel(format!(
            "the central limit statistic is defined for the rectangular kernel only, got {}",
            cfg.kernel.name()
        )));
    }
    if cfg.replications < 10 {
        return Err(Error::InvalidArgument(
            "CLT runs need at least 10 replications".into(),
        ));
    }
    let scheme = make_scheme(cfg.u, cfg.n, cfg.bandwidth, cfg.step)?;
    let k = cfg.lag.unwrap_or(0.0);
    let h = scheme_step(&scheme, k, cfg.h)?;
    let times = union_times(&scheme, k);
    let prop = Propagator::for_yn(&cfg.model, cfg.n, &times, h, cfg.burn_in)?;

    let mut report = ExperimentReport::new(match cfg.lag {
        None => ExperimentKind::CltMean,
        Some(_) => ExperimentKind::CltCov,
    });
    let (center, candidates): (f64, Vec<(String, f64, Option<f64>)>) = match cfg.lag {
        None => {
            let names = if cfg.step.is_o1() {
                let s = mo.sigma2(scheme.kind)?;
                vec![("sigma2_O1".to_string(), s.value, None)]
            } else {
                let [half, full] = mo.sigma2_o2_candidates()?;
                vec![
                    ("half_second_moment".to_string(), half, None),
                    ("second_moment".to_string(), full, None),
                ]
            };
            (0.0, names)
        }
        Some(k) => {
            let st = mo.sigma2_tilde(&cfg.triplet, k, scheme.kind, cfg.mc.as_ref())?;
            report.notes.push(st.note.to_string());
            (
                mo.autocov(k),
                vec![("sigma2_tilde".to_string(), st.value, st.std_error)],
            )
        }
    };

    let samples: Vec<f64> = replicate(cfg.replications, |i| {
        let mut rng = rng::stream(cfg.seed, "clt", i);
        let grid =
            FineGrid::generate(&cfg.triplet, prop.h(), prop.start(), prop.steps(), &mut rng)?;
        let path = PathSample {
            times: times.clone(),
            values: prop.run(&grid.increments),
            fine_grid: None,
            meta: PathMeta {
                n: cfg.n,
                model: cfg.model.label().to_string(),
                seed: Some(cfg.seed),
            },
        };
        clt_statistic(&path, &scheme, &cfg.kernel, cfg.lag, center)
    })?;

    let reps = cfg.replications as f64;
    let mean_band = 3.0 / reps.sqrt();
    let ks_band = 2.0 * 1.36 / reps.sqrt();
    let mut out = Vec::with_capacity(candidates.len());
    for (name, sigma2, sigma2_se) in candidates {
        if !(sigma2 > 0.0) {
            report.notes.push(format!(
                "candidate {name} is not positive ({sigma2}); skipped"
            ));
            continue;
        }
        let sd = sigma2.sqrt();
        let z: Vec<f64> = samples.iter().map(|s| s / sd).collect();
        let st = summary(&z);
        let ks = ks_standard_normal(&z);
        let pass = st.mean.abs() < mean_band
            && (st.variance - 1.0).abs() < cfg.variance_tolerance
            && ks < ks_band;
        out.push(Candidate {
            name,
            sigma2,
            sigma2_std_error: sigma2_se,
            standardized: st,
            ks,
            pass,
        });
    }
    let passing: Vec<String> = out
        .iter()
        .filter(|c| c.pass)
        .map(|c| c.name.clone())
        .collect();
    report.pass = !passing.is_empty();
    report.notes.push(format!(
        "m_N = {}, b_N = {:.6e}, delta_N = {:.6e}, simulation step {h:.6e}",
        scheme.m_n, scheme.b_n, scheme.delta_n
    ));
    report.clt = Some(CltSummary {
        n: cfg.n,
        replications: cfg.replications,
        raw: summary(&samples),
        ks_band,
        mean_band,
        variance_tolerance: cfg.variance_tolerance,
        candidates: out,
        passing,
    });
    report.samples = samples;
    Ok(report)
}
