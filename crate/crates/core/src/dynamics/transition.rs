//! Transition matrices `Ψ(t1, t0)` of `dΨ/dt = A(t) Ψ`, `Ψ(t0, t0) = I`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::Model;
use crate::error::{Error, Result};
use crate::linalg::{expm, spectral_norm};
use crate::quadrature::integrate;
use crate::rng;
use crate::stats::linear_fit;

pub const DEFAULT_PEANO_ORDER: usize = 12;

/// Largest `∫‖A‖` over one Peano–Baker piece; pieces are composed through
/// the semigroup property.
const PEANO_PIECE_MASS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionMethod {
    CommutingExp,
    PeanoBaker { order: usize },
    OdeRk4 { step: f64 },
}

pub fn transition_matrix(
    model: &Model,
    t1: f64,
    t0: f64,
    method: TransitionMethod,
) -> Result<DMatrix<f64>> {
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!(
            "transition matrix needs t1 >= t0, got t1={t1}, t0={t0}"
        )));
    }
    let p = model.p();
    if t1 == t0 {
        return Ok(DMatrix::identity(p, p));
    }
    match method {
        TransitionMethod::CommutingExp => {
            if !model.commuting() {
                return Err(Error::InvalidArgument(
                    "commuting_exp requires a model declared commuting".into(),
                ));
            }
            Ok(expm(&integrated_a(model, t0, t1)))
        }
        TransitionMethod::PeanoBaker { order } => peano_baker(model, t0, t1, order),
        TransitionMethod::OdeRk4 { step } => {
            if !(step > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "rk4 step must be positive, got {step}"
                )));
            }
            let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
            let h = (t1 - t0) / n as f64;
            let mut psi = DMatrix::identity(p, p);
            for k in 0..n {
                let t = t0 + k as f64 * h;
                psi = rk4_step(|s| model.a(s), t, h, &psi);
            }
            Ok(psi)
        }
    }
}

/// `∫_{t0}^{t1} A(τ) dτ` entrywise.
fn integrated_a(model: &Model, t0: f64, t1: f64) -> DMatrix<f64> {
    let p = model.p();
    let len = t1 - t0;
    let tol = 1e-14 * len.max(1.0);
    match model {
        Model::Car1(s) => {
            let v = if s.a.is_constant() {
                s.a.eval(t0) * len
            } else {
                integrate(|t| s.a.eval(t), t0, t1, tol)
            };
            DMatrix::from_element(1, 1, -v)
        }
        Model::StateSpace(s) => DMatrix::from_fn(p, p, |i, j| {
            let c = &s.a[i * p + j];
            if c.is_constant() {
                c.eval(t0) * len
            } else {
                integrate(|t| c.eval(t), t0, t1, tol)
            }
        }),
    }
}

/// One classical Runge–Kutta step for `dΨ/dt = A(t) Ψ`.
pub(crate) fn rk4_step<F>(a: F, t: f64, h: f64, psi: &DMatrix<f64>) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let a0 = a(t);
    let am = a(t + 0.5 * h);
    let a1 = a(t + h);
    let k1 = &a0 * psi;
    let k2 = &am * (psi + &k1 * (0.5 * h));
    let k3 = &am * (psi + &k2 * (0.5 * h));
    let k4 = &a1 * (psi + &k3 * h);
    psi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn peano_baker(model: &Model, t0: f64, t1: f64, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "Peano-Baker order must be >= 1".into(),
        ));
    }
    let p = model.p();
    let probes = 65;
    let sup_a = (0..probes)
        .map(|k| spectral_norm(&model.a(t0 + (t1 - t0) * k as f64 / (probes - 1) as f64)))
        .fold(0.0, f64::max);
    let pieces = ((t1 - t0) * sup_a / PEANO_PIECE_MASS).ceil().max(1.0) as usize;
    let width = (t1 - t0) / pieces as f64;
    let mut psi = DMatrix::identity(p, p);
    for k in 0..pieces {
        let a = t0 + k as f64 * width;
        let b = if k + 1 == pieces { t1 } else { a + width };
        psi = peano_baker_piece(model, a, b, order)? * psi;
    }
    Ok(psi)
}

/// Truncated series `Σ_{n<=order} I_n(b)` with
/// `I_n(s) = ∫_a^s A(r) I_{n-1}(r) dr`, integrals by cumulative Simpson.
fn peano_baker_piece(model: &Model, a: f64, b: f64, order: usize) -> Result<DMatrix<f64>> {
    let p = model.p();
    let mut m = ((b - a) / 0.004).ceil().max(64.0) as usize;
    m += m % 2;
    let h = (b - a) / m as f64;
    let grid_a: Vec<DMatrix<f64>> = (0..=m).map(|j| model.a(a + j as f64 * h)).collect();

    let mut current: Vec<DMatrix<f64>> = vec![DMatrix::identity(p, p); m + 1];
    let mut sum = DMatrix::identity(p, p);
    let mut last_norm = 0.0;
    let mut f: Vec<DMatrix<f64>> = vec![DMatrix::zeros(p, p); m + 1];
    for _ in 1..=order {
        for j in 0..=m {
            f[j] = &grid_a[j] * &current[j];
        }
        let mut next = vec![DMatrix::zeros(p, p); m + 1];
        for j in 1..=m {
            next[j] = if j % 2 == 0 {
                &next[j - 2] + (&f[j - 2] + &f[j - 1] * 4.0 + &f[j]) * (h / 3.0)
            } else {
                &next[j - 1] + (&f[j - 1] * 5.0 + &f[j] * 8.0 - &f[j + 1]) * (h / 12.0)
            };
        }
        current = next;
        sum += &current[m];
        last_norm = spectral_norm(&current[m]);
    }
    let sum_norm = spectral_norm(&sum);
    if last_norm > 1e-8 * sum_norm {
        return Err(Error::NotConverged {
            order,
            last_norm,
            sum_norm,
        });
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeminormReport {
    pub gamma: f64,
    pub lambda: f64,
    pub ok: bool,
}

/// Fits `log‖Ψ(t, t0)‖ ≈ log γ - λ (t - t0)` over random pairs in `t_range`.
pub fn transition_seminorm_check(
    model: &Model,
    t_range: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<SeminormReport> {
    let (lo, hi) = t_range;
    let mut rng = rng::stream(seed, "seminorm", 0);
    let method = if model.commuting() {
        TransitionMethod::CommutingExp
    } else {
        TransitionMethod::OdeRk4 { step: 1e-3 }
    };
    let mut xs = Vec::with_capacity(n_samples);
    let mut ys = Vec::with_capacity(n_samples);
    while xs.len() < n_samples {
        let s = lo + (hi - lo) * rng.random::<f64>();
        let t = lo + (hi - lo) * rng.random::<f64>();
        let (t0, t1) = if s < t { (s, t) } else { (t, s) };
        if t1 - t0 < 1e-9 {
            continue;
        }
        let psi = transition_matrix(model, t1, t0, method)?;
        xs.push(t1 - t0);
        ys.push(spectral_norm(&psi).ln());
    }
    let (intercept, slope) = linear_fit(&xs, &ys);
    let lambda = -slope;
    Ok(SeminormReport {
        gamma: intercept.exp(),
        lambda,
        ok: lambda >= model.stability_margin() / 2.0,
    })
}
