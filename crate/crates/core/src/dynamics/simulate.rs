//! Fine-grid simulation of `Y_N` in rescaled time.
//!
//! With `s` the rescaled time, the state follows
//! `X(s + h) = Ψ̂_s X(s) + C(s/N) ΔL(s)` where `Ψ̂_s` is the one-step
//! transition of `A(·/N)` over `[s, s + h]`: the midpoint exponential for
//! commuting models and one RK4 step otherwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::transition::rk4_step;
use super::Model;
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::noise::LevyTriplet;

/// Lévy increments on `start + j h`, `j = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineGrid {
    pub h: f64,
    pub start: f64,
    pub increments: Vec<f64>,
}

impl FineGrid {
    pub fn generate<R: Rng + ?Sized>(
        triplet: &LevyTriplet,
        h: f64,
        start: f64,
        steps: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step h must be positive, got {h}"
            )));
        }
        let mut increments = vec![0.0; steps];
        triplet.fill_increments(h, &mut increments, rng);
        Ok(Self {
            h,
            start,
            increments,
        })
    }

    pub fn end(&self) -> f64 {
        self.start + self.increments.len() as f64 * self.h
    }
}

/// Merges every `factor` consecutive increments.
pub fn coarsen(grid: &FineGrid, factor: usize) -> Result<FineGrid> {
    if factor == 0 || !grid.increments.len().is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "cannot coarsen {} increments by {factor}",
            grid.increments.len()
        )));
    }
    Ok(FineGrid {
        h: grid.h * factor as f64,
        start: grid.start,
        increments: grid
            .increments
            .chunks_exact(factor)
            .map(|c| c.iter().sum())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMeta {
    pub n: u64,
    pub model: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub fine_grid: Option<FineGrid>,
    pub meta: PathMeta,
}

#[derive(Debug, Clone)]
enum Coeffs {
    Const(Vec<f64>),
    Varying(Vec<f64>),
}

impl Coeffs {
    #[inline]
    fn at(&self, j: usize, width: usize) -> &[f64] {
        match self {
            Coeffs::Const(v) => v,
            Coeffs::Varying(v) => &v[j * width..(j + 1) * width],
        }
    }
}

/// Per-step coefficients of the recursion for one `(model, N, grid)`
/// combination, reusable across noise realizations.
#[derive(Debug, Clone)]
pub struct Propagator {
    p: usize,
    n: u64,
    h: f64,
    start: f64,
    steps: usize,
    /// Row-major `p x p` per step.
    phi: Coeffs,
    input: Coeffs,
    eval_times: Vec<f64>,
    eval_index: Vec<usize>,
    /// `B(t_k)` per evaluation time, flattened.
    readout: Vec<f64>,
    label: String,
}

impl Propagator {
    /// Grid starting `burn_in` (rounded up to whole steps) before the first
    /// evaluation time and ending at the last one.
    pub fn for_yn(model: &Model, n: u64, eval_times: &[f64], h: f64, burn_in: f64) -> Result<Self> {
        let margin = model.stability_margin();
        if !(burn_in >= 8.0 / margin) {
            return Err(Error::InvalidArgument(format!(
                "burn-in {burn_in} is below 8 / stability_margin = {}",
                8.0 / margin
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step h must be positive, got {h}"
            )));
        }
        let first = *eval_times
            .first()
            .ok_or_else(|| Error::InvalidArgument("no evaluation times".into()))?;
        let last = eval_times[eval_times.len() - 1];
        let burn_steps = (burn_in / h - 1e-9).ceil() as usize;
        let start = n as f64 * first - burn_steps as f64 * h;
        let span = (n as f64 * (last - first)) / h;
        let steps = burn_steps + span.round() as usize;
        Self::new(model, n, eval_times, h, start, steps)
    }

    pub fn new(
        model: &Model,
        n: u64,
        eval_times: &[f64],
        h: f64,
        start: f64,
        steps: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be >= 1".into()));
        }
        let nf = n as f64;
        let mut eval_index = Vec::with_capacity(eval_times.len());
        for (k, &t) in eval_times.iter().enumerate() {
            if k > 0 && !(t > eval_times[k - 1]) {
                return Err(Error::InvalidArgument(format!(
                    "evaluation times must be strictly increasing (index {k})"
                )));
            }
            let q = (nf * t - start) / h;
            let j = q.round();
            if (q - j).abs() > 1e-12 * q.abs().max(1.0) || j < 0.0 || j > steps as f64 {
                return Err(Error::InvalidArgument(format!(
                    "step h = {h} does not divide the gap to evaluation time {t} \
                     (N t - start = {} steps)",
                    q
                )));
            }
            let j = j as usize;
            if let Some(&prev) = eval_index.last() {
                if j <= prev {
                    return Err(Error::InvalidArgument(format!(
                        "step h = {h} exceeds the spacing of N * eval_times near {t}"
                    )));
                }
            }
            eval_index.push(j);
        }

        let p = model.p();
        let mid = |j: usize| (start + (j as f64 + 0.5) * h) / nf;
        let left = |j: usize| (start + j as f64 * h) / nf;
        let one_step = |t_mid: f64, t_left: f64| -> Vec<f64> {
            if let Some(a) = model.car1_rate() {
                return vec![(-a.eval(t_mid) * h).exp()];
            }
            let psi = if model.commuting() {
                expm(&(model.a(t_mid) * h))
            } else {
                rk4_step(
                    |s| model.a(s / nf),
                    t_left * nf,
                    h,
                    &DMatrix::identity(p, p),
                )
            };
            psi.transpose().as_slice().to_vec()
        };
        let (phi, input) = if model.is_time_invariant() {
            (
                Coeffs::Const(one_step(0.0, 0.0)),
                Coeffs::Const(model.c(0.0).as_slice().to_vec()),
            )
        } else {
            let mut phi = Vec::with_capacity(steps * p * p);
            let mut input = Vec::with_capacity(steps * p);
            for j in 0..steps {
                phi.extend(one_step(mid(j), left(j)));
                input.extend_from_slice(model.c(left(j)).as_slice());
            }
            (Coeffs::Varying(phi), Coeffs::Varying(input))
        };
        let mut readout = Vec::with_capacity(eval_times.len() * p);
        for &t in eval_times {
            readout.extend_from_slice(model.b(t).as_slice());
        }
        Ok(Self {
            p,
            n,
            h,
            start,
            steps,
            phi,
            input,
            eval_times: eval_times.to_vec(),
            eval_index,
            readout,
            label: model.label().to_string(),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn eval_times(&self) -> &[f64] {
        &self.eval_times
    }

    /// Outputs `B(t_k)' X(N t_k)` driven by `increments` (one per step).
    pub fn run(&self, increments: &[f64]) -> Vec<f64> {
        assert_eq!(
            increments.len(),
            self.steps,
            "increment count must match the grid"
        );
        let mut out = Vec::with_capacity(self.eval_index.len());
        let mut next = self.eval_index.iter().peekable();
        if self.p == 1 {
            let mut x = 0.0;
            let mut k = 0;
            for (j, dl) in increments.iter().enumerate() {
                while next.peek() == Some(&&j) {
                    out.push(self.readout[k] * x);
                    k += 1;
                    next.next();
                }
                x = self.phi.at(j, 1)[0] * x + self.input.at(j, 1)[0] * dl;
            }
            while next.next().is_some() {
                out.push(self.readout[k] * x);
                k += 1;
            }
            return out;
        }
        let p = self.p;
        let mut x = vec![0.0; p];
        let mut tmp = vec![0.0; p];
        let mut k = 0;
        let emit = |x: &[f64], k: usize| -> f64 {
            self.readout[k * p..(k + 1) * p]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum()
        };
        for (j, dl) in increments.iter().enumerate() {
            while next.peek() == Some(&&j) {
                out.push(emit(&x, k));
                k += 1;
                next.next();
            }
            let phi = self.phi.at(j, p * p);
            let c = self.input.at(j, p);
            for r in 0..p {
                let row = &phi[r * p..(r + 1) * p];
                tmp[r] = row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + c[r] * dl;
            }
            std::mem::swap(&mut x, &mut tmp);
        }
        while next.next().is_some() {
            out.push(emit(&x, k));
            k += 1;
        }
        out
    }

    /// Final state vector after running `increments`, for diagnostics.
    pub fn terminal_state(&self, increments: &[f64]) -> DVector<f64> {
        let p = self.p;
        let mut x = DVector::zeros(p);
        for (j, dl) in increments.iter().enumerate() {
            let phi = DMatrix::from_row_slice(p, p, self.phi.at(j, p * p));
            let c = DVector::from_row_slice(self.input.at(j, p));
            x = phi * x + c * *dl;
        }
        x
    }
}

/// Simulates `Y_N` at `eval_times` (model time) from fresh noise.
pub fn simulate_yn<R: Rng + ?Sized>(
    model: &Model,
    triplet: &LevyTriplet,
    n: u64,
    eval_times: &[f64],
    h: f64,
    burn_in: f64,
    rng: &mut R,
) -> Result<PathSample> {
    let prop = Propagator::for_yn(model, n, eval_times, h, burn_in)?;
    let grid = FineGrid::generate(triplet, h, prop.start, prop.steps, rng)?;
    let values = prop.run(&grid.increments);
    Ok(PathSample {
        times: eval_times.to_vec(),
        values,
        fine_grid: Some(grid),
        meta: PathMeta {
            n,
            model: prop.label.clone(),
            seed: None,
        },
    })
}

/// Re-runs the recursion for `model` on a recorded noise grid.
pub fn simulate_on_noise(
    model: &Model,
    n: u64,
    eval_times: &[f64],
    grid: &FineGrid,
) -> Result<PathSample> {
    let prop = Propagator::new(
        model,
        n,
        eval_times,
        grid.h,
        grid.start,
        grid.increments.len(),
    )?;
    Ok(PathSample {
        times: eval_times.to_vec(),
        values: prop.run(&grid.increments),
        fine_grid: None,
        meta: PathMeta {
            n,
            model: prop.label,
            seed: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{diagonal_example, Car1Spec};
    use crate::rng::stream;
    use crate::stats::{mean_se, variance};

    #[test]
    fn deterministic_driver_reaches_fixed_point() {
        let m: Model = Car1Spec::constant(1.0).unwrap().into();
        let t = LevyTriplet::brownian(1.0, 0.0).unwrap();
        let times = [0.0, 1.0, 2.0];
        let path = simulate_yn(&m, &t, 1, &times, 1e-6, 20.0, &mut stream(0, "fp", 0)).unwrap();
        for v in path.values {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn zero_driver_gives_zero() {
        let m: Model = diagonal_example().into();
        let path = simulate_yn(
            &m,
            &LevyTriplet::zero(),
            16,
            &[1.0, 1.25],
            0.01,
            16.0,
            &mut stream(0, "z", 0),
        )
        .unwrap();
        assert!(path.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_grids() {
        let m: Model = Car1Spec::two_plus_sin().into();
        let t = LevyTriplet::brownian(0.0, 1.0).unwrap();
        let mut r = stream(0, "bad", 0);
        // gap N * 0.001 = 0.064 is not a multiple of 0.03
        assert!(simulate_yn(&m, &t, 64, &[1.0, 1.001], 0.03, 10.0, &mut r).is_err());
        // burn-in below 8 / inf a
        assert!(simulate_yn(&m, &t, 64, &[1.0], 0.01, 7.0, &mut r).is_err());
        assert!(simulate_yn(&m, &t, 64, &[1.0, 1.0], 0.01, 10.0, &mut r).is_err());
    }

    #[test]
    fn variance_at_u_matches_frozen_value() {
        let m: Model = Car1Spec::two_plus_sin().into();
        let t = LevyTriplet::brownian(0.0, 1.0).unwrap();
        let prop = Propagator::for_yn(&m, 64, &[1.0], 1e-3, 12.0).unwrap();
        let reps = 10_000;
        let ys: Vec<f64> = (0..reps)
            .map(|i| {
                let g = FineGrid::generate(
                    &t,
                    prop.h(),
                    prop.start(),
                    prop.steps(),
                    &mut stream(4, "var", i),
                )
                .unwrap();
                prop.run(&g.increments)[0]
            })
            .collect();
        let a1 = 2.0 + 1f64.sin();
        let oracle = crate::quadrature::integrate(|s| (-2.0 * a1 * s).exp(), 0.0, 60.0, 1e-14);
        assert!((oracle - 1.0 / (2.0 * a1)).abs() < 1e-12);
        assert!((oracle - 0.175966).abs() < 1e-6);
        let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
        let (m2, se) = mean_se(&sq);
        assert!((m2 - oracle).abs() < 3.0 * se, "E[Y^2] {m2}, se {se}");
        assert!((variance(&ys) - oracle).abs() < 3.0 * se);
    }

    #[test]
    fn same_seed_same_path() {
        let m: Model = Car1Spec::two_plus_sin().into();
        let t = LevyTriplet::symmetric_unit_jumps(1.0).unwrap();
        let run = || {
            simulate_yn(
                &m,
                &t,
                32,
                &[1.0, 1.5],
                0.01,
                10.0,
                &mut stream(3, "det", 7),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scalar_and_matrix_paths_agree() {
        // CAR(1) written as a 1x1 state space model follows the same recursion.
        use crate::dynamics::{Coef, Lipschitz, StateSpaceSpec};
        let car: Model = Car1Spec::two_plus_sin().into();
        let ss: Model = StateSpaceSpec::new(
            1,
            vec![Coef::func(|t| -2.0 - t.sin())],
            vec![Coef::constant(1.0)],
            vec![Coef::constant(1.0)],
            Lipschitz {
                a: 1.0,
                b: 0.0,
                c: 0.0,
            },
            true,
            1.0,
        )
        .unwrap()
        .into();
        let t = LevyTriplet::brownian(0.0, 1.0).unwrap();
        let p = simulate_yn(&car, &t, 8, &[1.0, 2.0], 0.01, 10.0, &mut stream(1, "s", 0)).unwrap();
        let q = simulate_on_noise(&ss, 8, &[1.0, 2.0], p.fine_grid.as_ref().unwrap()).unwrap();
        for (a, b) in p.values.iter().zip(&q.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn euler_ratio(model: &Model, triplet: &LevyTriplet, reps: u64) -> f64 {
        let h = 0.04;
        let times = [1.0, 1.5];
        let n = 8;
        let burn = 8.0 / model.stability_margin();
        let fine = Propagator::for_yn(model, n, &times, h / 4.0, burn).unwrap();
        let (mut d1, mut d2) = (0.0, 0.0);
        for i in 0..reps {
            let g4 = FineGrid::generate(
                triplet,
                h / 4.0,
                fine.start(),
                fine.steps(),
                &mut stream(11, "euler", i),
            )
            .unwrap();
            let g2 = coarsen(&g4, 2).unwrap();
            let g1 = coarsen(&g4, 4).unwrap();
            let y4 = simulate_on_noise(model, n, &times, &g4).unwrap().values;
            let y2 = simulate_on_noise(model, n, &times, &g2).unwrap().values;
            let y1 = simulate_on_noise(model, n, &times, &g1).unwrap().values;
            for k in 0..times.len() {
                d1 += (y1[k] - y2[k]).powi(2);
                d2 += (y2[k] - y4[k]).powi(2);
            }
        }
        (d1 / d2).sqrt()
    }

    #[test]
    fn euler_bias_is_first_order() {
        let car: Model = Car1Spec::two_plus_sin().into();
        let det = LevyTriplet::brownian(1.0, 0.0).unwrap();
        let r = euler_ratio(&car, &det, 1);
        assert!((1.5..=3.0).contains(&r), "deterministic ratio {r}");
        let bm = LevyTriplet::brownian(0.0, 1.0).unwrap();
        let r = euler_ratio(&car, &bm, 200);
        assert!((1.5..=3.0).contains(&r), "brownian ratio {r}");
        let diag: Model = diagonal_example().into();
        let r = euler_ratio(&diag, &LevyTriplet::brownian(0.5, 1.0).unwrap(), 200);
        assert!((1.5..=3.0).contains(&r), "diagonal ratio {r}");
    }
}
