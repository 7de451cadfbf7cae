use super::{check_increasing, log_log_slope, replicate, ExperimentKind, ExperimentReport, Row};
use crate::dynamics::{FineGrid, Model, Propagator};
use crate::error::{Error, Result};
use crate::noise::LevyTriplet;
use crate::rng;
use crate::stats::mean_se;

#[derive(Debug, Clone)]
pub struct CouplingConfig {
    pub model: Model,
    pub triplet: LevyTriplet,
    /// Model time at which `Y_N(t)` is compared with `Ỹ_t(Nt)`.
    pub t: f64,
    pub n_list: Vec<u64>,
    pub replications: usize,
    pub h: f64,
    /// Length of rescaled history simulated before `Nt`.
    pub window: f64,
    pub seed: u64,
    /// Model-validation range.
    pub validation_range: (f64, f64),
}

/// L² distance between `Y_N(t)` and `Ỹ_t(Nt)` driven by the same increments,
/// with a log-log slope fit over `N`.
///
/// Both processes are run on the window `[Nt - window, Nt]`. The increments
/// are indexed relative to `Nt`, so every `N` reuses the same draws.
pub fn run_coupling(cfg: &CouplingConfig) -> Result<ExperimentReport> {
    check_increasing(&cfg.n_list)?;
    if cfg.replications < 2 {
        return Err(Error::InvalidArgument(
            "coupling needs at least 2 replications".into(),
        ));
    }
    let mut report = ExperimentReport::new(ExperimentKind::Coupling);
    let check = cfg.model.validate(cfg.validation_range, cfg.seed);
    if !check.passed() {
        report.notes.push(format!(
            "model check failed (stability {}, commuting {}, Lipschitz {}); the O(1/N) bound is not expected to hold",
            check.stability_ok, check.commuting_ok, check.lipschitz_ok
        ));
    }
    let frozen = cfg.model.frozen(cfg.t)?;
    let times = [cfg.t];
    let mut props = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let yn = Propagator::for_yn(&cfg.model, n, &times, cfg.h, cfg.window)?;
        let st = Propagator::new(&frozen, n, &times, yn.h(), yn.start(), yn.steps())?;
        props.push((yn, st));
    }
    let steps = props[0].0.steps();

    let sq: Vec<Vec<f64>> = replicate(cfg.replications, |i| {
        let mut rng = rng::stream(cfg.seed, "coupling", i);
        let grid = FineGrid::generate(&cfg.triplet, cfg.h, 0.0, steps, &mut rng)?;
        Ok(props
            .iter()
            .map(|(yn, st)| {
                let d = yn.run(&grid.increments)[0] - st.run(&grid.increments)[0];
                d * d
            })
            .collect())
    })?;

    let mut dist = Vec::with_capacity(cfg.n_list.len());
    for (k, &n) in cfg.n_list.iter().enumerate() {
        let col: Vec<f64> = sq.iter().map(|r| r[k]).collect();
        let (m2, se2) = mean_se(&col);
        let d = m2.sqrt();
        let se = if d > 0.0 { se2 / (2.0 * d) } else { 0.0 };
        dist.push(d);
        report.rows.push(Row {
            n,
            estimate: d,
            std_error: se,
            target: 0.0,
            rmse: None,
            pass: d.is_finite(),
        });
    }
    let n0 = cfg.n_list[0] as f64;
    for row in &mut report.rows {
        row.target = dist[0] * n0 / row.n as f64;
        row.pass = row.estimate <= 2.0 * row.target && row.estimate >= 0.5 * row.target;
    }
    let xs: Vec<f64> = cfg.n_list.iter().map(|&n| n as f64).collect();
    report.slope = log_log_slope(&xs, &dist);
    report.pass = match report.slope {
        Some(s) => (-1.3..=-0.7).contains(&s),
        None => {
            let zero = dist.iter().all(|&d| d == 0.0);
            if zero {
                report
                    .notes
                    .push("coupled distance is identically zero (time-invariant model)".into());
            }
            zero
        }
    };
    report.notes.push(format!(
        "target column is the reference line C/N anchored at N = {}",
        cfg.n_list[0]
    ));
    Ok(report)
}
