//! The frozen-coefficient stationary process `Ỹ_u(t) = ∫ B(u)' e^{A(u)(t-s)} C(u) dL(s)`:
//! closed-form moments, asymptotic variances, and exact simulation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{Model, PathMeta, PathSample};
use crate::error::{Error, Result};
use crate::linalg::{exp_and_integral, expm, lyapunov, max_real_eigenvalue, psd_factor, van_loan};
use crate::noise::{LevyMoments, LevyTriplet};
use crate::observation::SchemeKind;
use crate::quadrature::integrate;
use crate::rng::StreamKey;
use crate::stats::linear_fit;

/// Relative size of the neglected tail in every truncated series.
const TAIL_TOL: f64 = 1e-12;

/// `(A(u), B(u), C(u))` with `A(u)` stable.
#[derive(Debug, Clone)]
pub struct FrozenSystem {
    pub u: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    /// `-max Re λ(A(u))`.
    pub margin: f64,
}

impl FrozenSystem {
    pub fn new(model: &Model, u: f64) -> Result<Self> {
        let mut s = Self::from_matrices(model.a(u), model.b(u), model.c(u))?;
        s.u = u;
        Ok(s)
    }

    pub fn from_matrices(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        let max_re = max_real_eigenvalue(&a);
        if !(max_re < 0.0) {
            return Err(Error::Unstable {
                u: f64::NAN,
                max_real: max_re,
            });
        }
        Ok(Self {
            u: f64::NAN,
            a,
            b,
            c,
            margin: -max_re,
        })
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    /// Integration horizon for kernel integrals.
    pub fn horizon(&self) -> f64 {
        60.0 / self.margin
    }

    /// `f(s) = B' e^{A s} C`.
    pub fn kernel(&self, s: f64) -> f64 {
        if self.p() == 1 {
            return self.b[0] * (self.a[(0, 0)] * s).exp() * self.c[0];
        }
        (self.b.transpose() * expm(&(&self.a * s)) * &self.c)[(0, 0)]
    }

    /// `Γ` with `AΓ + ΓA' = -CC'`.
    pub fn gamma(&self) -> Result<DMatrix<f64>> {
        let cc = &self.c * self.c.transpose();
        if self.p() == 1 {
            return Ok(DMatrix::from_element(
                1,
                1,
                -cc[(0, 0)] / (2.0 * self.a[(0, 0)]),
            ));
        }
        lyapunov(&self.a, &cc)
    }

    /// `‖AΓ + ΓA' + CC'‖ / ‖CC'‖` in the max norm.
    pub fn lyapunov_residual(&self) -> Result<f64> {
        let g = self.gamma()?;
        let cc = &self.c * self.c.transpose();
        let r = &self.a * &g + &g * self.a.transpose() + &cc;
        let scale = cc.amax();
        Ok(if scale > 0.0 {
            r.amax() / scale
        } else {
            r.amax()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sigma2 {
    pub value: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sigma2Tilde {
    pub value: f64,
    /// Monte Carlo standard error; `None` for the closed form.
    pub std_error: Option<f64>,
    pub closed_form: bool,
    pub note: &'static str,
}

const CENTERING_NOTE: &str =
    "variance of the centered summand Y(0)Y(k) - r(k); the uncentered form differs by r(k)^2 terms";

/// Monte Carlo controls for the non-Gaussian `σ̃²`.
#[derive(Debug, Clone)]
pub struct McSettings {
    pub key: StreamKey,
    pub chunks: usize,
    pub points_per_chunk: usize,
}

/// Closed-form moments of `Ỹ_u(0)`.
#[derive(Debug, Clone)]
pub struct StationaryMoments {
    pub system: FrozenSystem,
    pub levy: LevyMoments,
    gamma: DMatrix<f64>,
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    pub fourth_moment: f64,
    /// `∫ f^k` for `k = 1..=4`.
    pub kernel_integrals: [f64; 4],
}

impl StationaryMoments {
    pub fn compute(model: &Model, u: f64, triplet: &LevyTriplet) -> Result<Self> {
        Self::for_system(FrozenSystem::new(model, u)?, triplet)
    }

    pub fn for_system(system: FrozenSystem, triplet: &LevyTriplet) -> Result<Self> {
        let levy = triplet.moments();
        let gamma = system.gamma()?;
        let lu = system.a.clone().lu();
        let ainv_c = lu.solve(&system.c).ok_or(Error::Singular(system.u))?;
        let int_f = -(system.b.transpose() * ainv_c)[(0, 0)];
        let mean = levy.mu_l * int_f;
        let int_f2 = (system.b.transpose() * &gamma * &system.b)[(0, 0)];
        let variance = levy.sigma_l * int_f2;
        let horizon = system.horizon();
        let int_f3 = integrate(|s| system.kernel(s).powi(3), 0.0, horizon, 1e-14);
        let int_f4 = integrate(|s| system.kernel(s).powi(4), 0.0, horizon, 1e-14);

        let k1 = mean;
        let k2 = variance;
        let k3 = levy.nu3 * int_f3;
        let k4 = levy.nu4 * int_f4;
        let fourth_moment = k4 + 4.0 * k3 * k1 + 3.0 * k2 * k2 + 6.0 * k2 * k1 * k1 + k1.powi(4);
        Ok(Self {
            system,
            levy,
            gamma,
            mean,
            variance,
            second_moment: variance + mean * mean,
            fourth_moment,
            kernel_integrals: [int_f, int_f2, int_f3, int_f4],
        })
    }

    /// `Cov(Ỹ_u(0), Ỹ_u(h))`.
    pub fn autocov(&self, h: f64) -> f64 {
        let h = h.abs();
        let s = &self.system;
        if s.p() == 1 {
            return self.levy.sigma_l
                * s.b[0]
                * (s.a[(0, 0)] * h).exp()
                * self.gamma[(0, 0)]
                * s.b[0];
        }
        self.levy.sigma_l * (s.b.transpose() * expm(&(&s.a * h)) * &self.gamma * &s.b)[(0, 0)]
    }

    /// `r(0), r(δ), r(2δ), ...` until the geometric tail bound
    /// `var e^{-λ(K+1)δ} / (1 - e^{-λδ})` drops below `TAIL_TOL · var`.
    fn autocov_ladder(&self, delta: f64, offset: f64, power: f64) -> Vec<f64> {
        let s = &self.system;
        let lambda = s.margin * power;
        let q = (-lambda * delta).exp();
        let mut k_max = 1usize;
        while q.powi(k_max as i32 + 1) / (1.0 - q) >= TAIL_TOL && k_max < 10_000_000 {
            k_max += 1;
        }
        let step = expm(&(&s.a * delta));
        let gb = &self.gamma * &s.b;
        let mut v = expm(&(&s.a * offset)) * gb;
        let mut out = Vec::with_capacity(k_max + 1);
        for _ in 0..=k_max {
            out.push(self.levy.sigma_l * s.b.dot(&v));
            v = &step * v;
        }
        out
    }

    fn require_centered(&self) -> Result<()> {
        if self.levy.mu_l.abs() > 1e-12 {
            return Err(Error::NotCentered(self.levy.mu_l));
        }
        Ok(())
    }

    /// Asymptotic variance of the localized mean statistic.
    pub fn sigma2(&self, kind: SchemeKind) -> Result<Sigma2> {
        self.require_centered()?;
        let value = match kind {
            SchemeKind::O1 { delta } => {
                let r = self.autocov_ladder(delta, 0.0, 1.0);
                0.5 * r[0] + r[1..].iter().sum::<f64>()
            }
            SchemeKind::O2 => 0.5 * self.variance,
        };
        Ok(Sigma2 {
            value,
            positive: value > 0.0,
        })
    }

    /// The two normalizations in circulation for O2: `½E[Ỹ²]` and `E[Ỹ²]`.
    pub fn sigma2_o2_candidates(&self) -> Result<[f64; 2]> {
        self.require_centered()?;
        Ok([0.5 * self.second_moment, self.second_moment])
    }

    /// Asymptotic variance of the lag-`k` sample autocovariance statistic.
    /// Closed form (Isserlis) for Gaussian drivers; Monte Carlo otherwise.
    pub fn sigma2_tilde(
        &self,
        triplet: &LevyTriplet,
        k: f64,
        kind: SchemeKind,
        mc: Option<&McSettings>,
    ) -> Result<Sigma2Tilde> {
        self.require_centered()?;
        if triplet.has_jumps() {
            let mc = mc.ok_or_else(|| {
                Error::InvalidArgument(
                    "non-Gaussian driver: sigma2_tilde needs Monte Carlo settings".into(),
                )
            })?;
            return self.sigma2_tilde_mc(triplet, k, kind, mc);
        }
        let r0 = self.variance;
        let rk = self.autocov(k);
        let mut value = 0.5 * (r0 * r0 + rk * rk);
        if let SchemeKind::O1 { delta } = kind {
            let plain = self.autocov_ladder(delta, 0.0, 2.0);
            let plus = self.autocov_ladder(delta, k, 2.0);
            let len = plain.len().min(plus.len());
            for h in 1..len {
                let hd = h as f64 * delta;
                value += plain[h] * plain[h] + plus[h] * self.autocov(hd - k);
            }
        }
        Ok(Sigma2Tilde {
            value,
            std_error: None,
            closed_form: true,
            note: CENTERING_NOTE,
        })
    }

    fn sigma2_tilde_mc(
        &self,
        triplet: &LevyTriplet,
        k: f64,
        kind: SchemeKind,
        mc: &McSettings,
    ) -> Result<Sigma2Tilde> {
        let rk = self.autocov(k);
        let (spacing, lags) = match kind {
            SchemeKind::O1 { delta } => {
                let ladder = self.autocov_ladder(delta, 0.0, 2.0);
                (delta, ladder.len() - 1)
            }
            // independent pairs: space them far beyond the correlation length
            SchemeKind::O2 => (k + 30.0 / self.system.margin, 0),
        };
        let n = mc.points_per_chunk.max(lags + 2);
        let mut grid = Vec::with_capacity(2 * n);
        for i in 0..n {
            let t = i as f64 * spacing;
            grid.push(t);
            if k > 0.0 {
                grid.push(t + k);
            }
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        let lookup = |times: &[f64], t: f64| -> usize {
            let idx = times.partition_point(|&x| x < t - 1e-12 * t.abs().max(1.0));
            idx.min(times.len() - 1)
        };
        let estimates: Vec<f64> = (0..mc.chunks)
            .into_par_iter()
            .map(|c| -> Result<f64> {
                let mut rng = mc.key.with_index(c as u64).stream();
                let path = simulate_system(&self.system, triplet, &grid, &mut rng)?;
                let z: Vec<f64> = (0..n)
                    .map(|i| {
                        let t = i as f64 * spacing;
                        let a = path.values[lookup(&path.times, t)];
                        let b = path.values[lookup(&path.times, t + k)];
                        a * b - rk
                    })
                    .collect();
                let nz = z.len() as f64;
                let acov = |h: usize| -> f64 {
                    z[..z.len() - h]
                        .iter()
                        .zip(&z[h..])
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
                        / nz
                };
                Ok(0.5 * acov(0) + (1..=lags).map(acov).sum::<f64>())
            })
            .collect::<Result<Vec<_>>>()?;
        let (value, se) = crate::stats::mean_se(&estimates);
        Ok(Sigma2Tilde {
            value,
            std_error: Some(se),
            closed_form: false,
            note: CENTERING_NOTE,
        })
    }
}

pub fn stationary_mean(model: &Model, u: f64, triplet: &LevyTriplet) -> Result<f64> {
    Ok(StationaryMoments::compute(model, u, triplet)?.mean)
}

pub fn stationary_autocov(model: &Model, u: f64, triplet: &LevyTriplet, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("lag must be >= 0, got {h}")));
    }
    Ok(StationaryMoments::compute(model, u, triplet)?.autocov(h))
}

pub fn fourth_moment_integral(model: &Model, u: f64, triplet: &LevyTriplet) -> Result<f64> {
    Ok(StationaryMoments::compute(model, u, triplet)?.fourth_moment)
}

pub fn sigma2(model: &Model, u: f64, triplet: &LevyTriplet, kind: SchemeKind) -> Result<Sigma2> {
    StationaryMoments::compute(model, u, triplet)?.sigma2(kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    pub weighted_sum: f64,
    pub last_increment: f64,
    pub decay_rate: f64,
    pub passed: bool,
}

/// Summability of `|r(h)| h^{1/eps}` over integer lags, with a fitted
/// exponential decay rate of `|r(h)|`.
pub fn covariance_decay_check(
    model: &Model,
    u: f64,
    triplet: &LevyTriplet,
    eps: f64,
) -> Result<DecayReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let m = StationaryMoments::compute(model, u, triplet)?;
    let s = &m.system;
    let step = expm(&s.a);
    let mut v = &step * (&m.gamma * &s.b);
    let mut sum = 0.0;
    let mut last = 0.0;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for h in 1..=10_000usize {
        let r = (m.levy.sigma_l * s.b.dot(&v)).abs();
        last = r * (h as f64).powf(1.0 / eps);
        sum += last;
        if r > 1e-250 {
            xs.push(h as f64);
            ys.push(r.ln());
        }
        if h > 10 && last < 1e-300 {
            break;
        }
        v = &step * v;
    }
    let decay_rate = if xs.len() >= 2 {
        -linear_fit(&xs, &ys).1
    } else {
        f64::INFINITY
    };
    Ok(DecayReport {
        weighted_sum: sum,
        last_increment: last,
        decay_rate,
        passed: sum.is_finite() && last < 1e-10 * sum.max(f64::MIN_POSITIVE),
    })
}

/// Exact one-step law over a gap `h`.
struct ExactStep {
    phi: DMatrix<f64>,
    drift: DVector<f64>,
    noise: DMatrix<f64>,
}

impl ExactStep {
    fn new(s: &FrozenSystem, triplet: &LevyTriplet, h: f64) -> Self {
        let (phi, integral) = exp_and_integral(&s.a, h);
        let drift = integral * &s.c * triplet.continuous_drift();
        let cc = &s.c * s.c.transpose() * triplet.sigma2();
        let (_, gram) = van_loan(&s.a, &cc, h);
        Self {
            phi,
            drift,
            noise: psd_factor(&gram),
        }
    }
}

fn advance<R: Rng + ?Sized>(
    s: &FrozenSystem,
    triplet: &LevyTriplet,
    step: &ExactStep,
    h: f64,
    x: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let p = s.p();
    let mut next = &step.phi * x + &step.drift;
    if triplet.sigma2() > 0.0 {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        next += &step.noise * z;
    }
    if let Some(cp) = triplet.jumps().filter(|cp| cp.rate > 0.0) {
        let mut t = 0.0;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / cp.rate;
            if t >= h {
                break;
            }
            let size = cp.dist.sample(rng);
            if p == 1 {
                next[0] += (s.a[(0, 0)] * (h - t)).exp() * s.c[0] * size;
            } else {
                next += expm(&(&s.a * (h - t))) * &s.c * size;
            }
        }
    }
    next
}

fn simulate_system<R: Rng + ?Sized>(
    s: &FrozenSystem,
    triplet: &LevyTriplet,
    grid: &[f64],
    rng: &mut R,
) -> Result<PathSample> {
    for (i, w) in grid.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "grid must be strictly increasing (index {})",
                i + 1
            )));
        }
    }
    let warm = 12.0 / s.margin;
    let warm_step = ExactStep::new(s, triplet, warm);
    let mut x = advance(s, triplet, &warm_step, warm, &DVector::zeros(s.p()), rng);
    let mut cache: HashMap<u64, ExactStep> = HashMap::new();
    let mut values = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        if i > 0 {
            let h = t - grid[i - 1];
            let key = h.to_bits();
            let step = cache
                .entry(key)
                .or_insert_with(|| ExactStep::new(s, triplet, h));
            x = advance(s, triplet, step, h, &x, rng);
        }
        values.push(s.b.dot(&x));
    }
    Ok(PathSample {
        times: grid.to_vec(),
        values,
        fine_grid: None,
        meta: PathMeta {
            n: 0,
            model: format!("stationary@{}", s.u),
            seed: None,
        },
    })
}

/// Exact-in-law sample of `Ỹ_u` on `grid`, started from a warm start of
/// length `12 / margin`.
pub fn simulate_stationary<R: Rng + ?Sized>(
    model: &Model,
    u: f64,
    triplet: &LevyTriplet,
    grid: &[f64],
    rng: &mut R,
) -> Result<PathSample> {
    let s = FrozenSystem::new(model, u)?;
    simulate_system(&s, triplet, grid, rng)
}
