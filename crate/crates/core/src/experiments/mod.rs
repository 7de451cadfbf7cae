//! Monte Carlo campaigns for the approximation rates and limit theorems.
//!
//! Every replication draws from its own stream keyed by
//! `(seed, experiment tag, replication index)` and results are collected in
//! index order, so reports do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::Summary;

mod clt;
mod coupling;
mod lipschitz;
mod lln;

pub use clt::{run_clt, CltConfig, CLT_GATE};
pub use coupling::{run_coupling, CouplingConfig};
pub use lipschitz::{run_lipschitz_u, LipschitzConfig};
pub use lln::{run_lln, union_times, ContinuousVariant, LlnConfig, LlnMode, Statistic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Coupling,
    LlnDiscrete,
    LlnContinuous,
    CltMean,
    CltCov,
    LipschitzU,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    #[serde(rename = "N")]
    pub n: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub rmse: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub name: String,
    pub sigma2: f64,
    /// Standard error when `sigma2` is itself a Monte Carlo estimate.
    pub sigma2_std_error: Option<f64>,
    pub standardized: Summary,
    pub ks: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltSummary {
    #[serde(rename = "N")]
    pub n: u64,
    pub replications: usize,
    pub raw: Summary,
    pub ks_band: f64,
    pub mean_band: f64,
    pub variance_tolerance: f64,
    pub candidates: Vec<Candidate>,
    pub passing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub pass: bool,
    pub rows: Vec<Row>,
    pub slope: Option<f64>,
    pub clt: Option<CltSummary>,
    pub notes: Vec<String>,
    /// Per-replication statistics (CLT runs).
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            pass: false,
            rows: Vec::new(),
            slope: None,
            clt: None,
            notes: Vec::new(),
            samples: Vec::new(),
        }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn with_workers<T, F>(workers: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Index-ordered parallel map over replications.
fn replicate<T, F>(reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..reps as u64).into_par_iter().map(f).collect()
}

fn check_increasing(n_list: &[u64]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("N list is empty".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "N list must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Largest step `<= target` that divides `span` into whole steps.
fn dividing_step(span: f64, target: f64) -> f64 {
    span / (span / target - 1e-9).ceil().max(1.0)
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(crate::stats::linear_fit(&lx, &ly).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dividing_step_divides() {
        for (span, target) in [(7.92, 0.01), (1.0, 0.005), (0.3, 0.7), (1024.0, 0.001)] {
            let h = dividing_step(span, target);
            assert!(h <= target * (1.0 + 1e-12));
            let q = span / h;
            assert!((q - q.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [16.0, 32.0, 64.0, 128.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.0)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(log_log_slope(&xs, &[0.0; 4]).is_none());
    }
}
