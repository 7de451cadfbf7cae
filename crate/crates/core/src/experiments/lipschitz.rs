use super::{log_log_slope, replicate, ExperimentKind, ExperimentReport, Row};
use crate::dynamics::{FineGrid, Model, Propagator};
use crate::error::{Error, Result};
use crate::noise::LevyTriplet;
use crate::rng;
use crate::stats::mean_se;

#[derive(Debug, Clone)]
pub struct LipschitzConfig {
    pub model: Model,
    pub triplet: LevyTriplet,
    pub u: f64,
    /// Distances `|u - v|`; each is taken on both sides of `u`.
    pub ladder: Vec<f64>,
    pub replications: usize,
    pub h: f64,
    pub window: f64,
    /// `p` of the `L^p` distance (2 or 4).
    pub norm: u32,
    pub seed: u64,
}

/// `‖Ỹ_u(0) - Ỹ_v(0)‖_{L^p}` on shared increments, fitted against `|u - v|`.
pub fn run_lipschitz_u(cfg: &LipschitzConfig) -> Result<ExperimentReport> {
    if cfg.norm == 0 {
        return Err(Error::InvalidArgument("norm must be >= 1".into()));
    }
    if cfg.ladder.is_empty() || cfg.ladder.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidArgument(
            "ladder must hold positive distances".into(),
        ));
    }
    let mut report = ExperimentReport::new(ExperimentKind::LipschitzU);
    let steps = (cfg.window / cfg.h - 1e-9).ceil() as usize;
    let start = -(steps as f64) * cfg.h;
    let prop = |v: f64| -> Result<Propagator> {
        let frozen = cfg.model.frozen(v)?;
        if cfg.window < 8.0 / frozen.stability_margin() {
            return Err(Error::InvalidArgument(format!(
                "window {} is below 8 / stability margin at v = {v}",
                cfg.window
            )));
        }
        Propagator::new(&frozen, 1, &[0.0], cfg.h, start, steps)
    };
    let base = prop(cfg.u)?;
    let mut others = Vec::with_capacity(2 * cfg.ladder.len());
    for &d in &cfg.ladder {
        others.push((prop(cfg.u - d)?, prop(cfg.u + d)?));
    }
    let p = cfg.norm as i32;
    let powers: Vec<Vec<f64>> = replicate(cfg.replications, |i| {
        let mut rng = rng::stream(cfg.seed, "lipschitz", i);
        let grid = FineGrid::generate(&cfg.triplet, cfg.h, start, steps, &mut rng)?;
        let y0 = base.run(&grid.increments)[0];
        Ok(others
            .iter()
            .map(|(lo, hi)| {
                let a = (lo.run(&grid.increments)[0] - y0).abs().powi(p);
                let b = (hi.run(&grid.increments)[0] - y0).abs().powi(p);
                0.5 * (a + b)
            })
            .collect())
    })?;
    let mut dist = Vec::with_capacity(cfg.ladder.len());
    for (k, &d) in cfg.ladder.iter().enumerate() {
        let col: Vec<f64> = powers.iter().map(|r| r[k]).collect();
        let (m, se_m) = mean_se(&col);
        let est = m.powf(1.0 / p as f64);
        // delta method for m^{1/p}
        let se = if m > 0.0 {
            se_m * est / (p as f64 * m)
        } else {
            0.0
        };
        dist.push(est);
        report.rows.push(Row {
            n: 0,
            estimate: est,
            std_error: se,
            target: d,
            rmse: None,
            pass: est.is_finite(),
        });
    }
    report.slope = log_log_slope(&cfg.ladder, &dist);
    if let Some(s) = report.slope {
        let ratios: Vec<f64> = dist.iter().zip(&cfg.ladder).map(|(e, d)| e / d).collect();
        let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
        report.notes.push(format!(
            "fitted slope {s:.4}; largest distance/|u-v| ratio {max_ratio:.4e}"
        ));
        report.pass = s >= 0.9;
    } else {
        let zero = dist.iter().all(|&d| d == 0.0);
        if zero {
            report
                .notes
                .push("distance is identically zero (coefficients constant in u)".into());
        }
        report.pass = zero;
    }
    report.notes.push(format!(
        "L^{} distance, averaged over v = u - d and v = u + d; target column holds |u - v|",
        cfg.norm
    ));
    Ok(report)
}
