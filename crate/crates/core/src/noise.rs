//! Lévy drivers with finite-activity jumps.
//!
//! A driver is a characteristic triplet `(gamma, sigma2, nu)` with `nu` a
//! compound-Poisson measure: jumps arrive at `rate` per unit time and have
//! sizes drawn from a [`JumpDist`]. Drift is taken with respect to the
//! truncation set `|x| <= 1`, so `E[L(1)] = gamma + rate * E[J; |J| > 1]`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Jump-size law with closed-form moments up to order four.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpDist {
    /// `(value, probability)` pairs.
    Atoms(Vec<(f64, f64)>),
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl JumpDist {
    fn validate(&self) -> Result<()> {
        match self {
            JumpDist::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::InvalidTriplet("atom list is empty".into()));
                }
                let mut total = 0.0;
                for &(v, p) in atoms {
                    if !v.is_finite() || !p.is_finite() || p < 0.0 {
                        return Err(Error::InvalidTriplet(format!(
                            "atom ({v}, {p}) must have finite value and nonnegative probability"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidTriplet(format!(
                        "atom probabilities sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            JumpDist::Normal { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || *sd <= 0.0 {
                    return Err(Error::InvalidTriplet(format!(
                        "normal jumps need finite mean and sd > 0, got ({mean}, {sd})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `E[J^k]` for `k = 1..=4`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        match self {
            JumpDist::Atoms(atoms) => atoms.iter().map(|&(v, p)| p * v.powi(k as i32)).sum(),
            JumpDist::Normal { mean: m, sd: s } => {
                let s2 = s * s;
                match k {
                    0 => 1.0,
                    1 => *m,
                    2 => m * m + s2,
                    3 => m * m * m + 3.0 * m * s2,
                    4 => m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2,
                    _ => panic!("moments above order 4 are not provided"),
                }
            }
        }
    }

    /// `E[J; |J| > 1]`, strict inequality.
    pub fn large_jump_mean(&self) -> f64 {
        match self {
            JumpDist::Atoms(atoms) => atoms
                .iter()
                .filter(|(v, _)| v.abs() > 1.0)
                .map(|&(v, p)| v * p)
                .sum(),
            JumpDist::Normal { mean, sd } => {
                let z = Normal::new(0.0, 1.0).expect("standard normal");
                let hi = (1.0 - mean) / sd;
                let lo = (-1.0 - mean) / sd;
                let upper = mean * (1.0 - z.cdf(hi)) + sd * z.pdf(hi);
                let lower = mean * z.cdf(lo) - sd * z.pdf(lo);
                upper + lower
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpDist::Atoms(atoms) => {
                if atoms.len() == 1 {
                    return atoms[0].0;
                }
                let x: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if x < acc {
                        return v;
                    }
                }
                atoms[atoms.len() - 1].0
            }
            JumpDist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoisson {
    pub rate: f64,
    pub dist: JumpDist,
}

/// Characteristic triplet of a two-sided Lévy driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyTriplet {
    gamma: f64,
    sigma2: f64,
    jumps: Option<CompoundPoisson>,
}

/// Closed-form moments of `L(1)` and of the jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyMoments {
    pub mu_l: f64,
    pub sigma_l: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu4: f64,
}

impl LevyMoments {
    /// Raw moments `E[L(dt)^k]`, `k = 1..=4`, from the cumulants
    /// `(mu_L dt, Sigma_L dt, nu3 dt, nu4 dt)`.
    pub fn increment_raw_moments(&self, dt: f64) -> [f64; 4] {
        let k1 = self.mu_l * dt;
        let k2 = self.sigma_l * dt;
        let k3 = self.nu3 * dt;
        let k4 = self.nu4 * dt;
        [
            k1,
            k2 + k1 * k1,
            k3 + 3.0 * k2 * k1 + k1.powi(3),
            k4 + 4.0 * k3 * k1 + 3.0 * k2 * k2 + 6.0 * k2 * k1 * k1 + k1.powi(4),
        ]
    }
}

impl LevyTriplet {
    pub fn new(gamma: f64, sigma2: f64, jumps: Option<CompoundPoisson>) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidTriplet(format!(
                "gamma must be finite, got {gamma}"
            )));
        }
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(Error::InvalidTriplet(format!(
                "sigma2 must be finite and >= 0, got {sigma2}"
            )));
        }
        if let Some(cp) = &jumps {
            if !cp.rate.is_finite() || cp.rate < 0.0 {
                return Err(Error::InvalidTriplet(format!(
                    "jump rate must be finite and >= 0, got {}",
                    cp.rate
                )));
            }
            cp.dist.validate()?;
        }
        Ok(Self {
            gamma,
            sigma2,
            jumps,
        })
    }

    pub fn brownian(gamma: f64, sigma2: f64) -> Result<Self> {
        Self::new(gamma, sigma2, None)
    }

    pub fn zero() -> Self {
        Self {
            gamma: 0.0,
            sigma2: 0.0,
            jumps: None,
        }
    }

    /// Symmetric unit jumps `±1` at the given rate, no Gaussian part.
    pub fn symmetric_unit_jumps(rate: f64) -> Result<Self> {
        Self::new(
            0.0,
            0.0,
            Some(CompoundPoisson {
                rate,
                dist: JumpDist::Atoms(vec![(1.0, 0.5), (-1.0, 0.5)]),
            }),
        )
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn jumps(&self) -> Option<&CompoundPoisson> {
        self.jumps.as_ref()
    }

    fn active_jumps(&self) -> Option<&CompoundPoisson> {
        self.jumps.as_ref().filter(|cp| cp.rate > 0.0)
    }

    pub fn has_jumps(&self) -> bool {
        self.active_jumps().is_some()
    }

    pub fn moments(&self) -> LevyMoments {
        let (large, nu) = match self.active_jumps() {
            Some(cp) => (
                cp.rate * cp.dist.large_jump_mean(),
                [2, 3, 4].map(|k| cp.rate * cp.dist.raw_moment(k)),
            ),
            None => (0.0, [0.0; 3]),
        };
        LevyMoments {
            mu_l: self.gamma + large,
            sigma_l: self.sigma2 + nu[0],
            nu2: nu[0],
            nu3: nu[1],
            nu4: nu[2],
        }
    }

    /// Linear drift per unit time of the continuous part once small jumps
    /// are compensated: `mu_L - rate * E[J]`.
    pub fn continuous_drift(&self) -> f64 {
        let m = self.moments();
        match self.active_jumps() {
            Some(cp) => m.mu_l - cp.rate * cp.dist.raw_moment(1),
            None => m.mu_l,
        }
    }

    /// A copy with `gamma` shifted so that `E[L(1)] = 0`.
    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        out.gamma -= self.moments().mu_l;
        out
    }

    /// Generates the path on `n` consecutive steps of length `dt`, writing
    /// increments into `out` and reporting each jump as
    /// `(step, offset within step, size)` to `on_jump`.
    pub fn sample_events<R, F>(&self, dt: f64, out: &mut [f64], rng: &mut R, mut on_jump: F)
    where
        R: Rng + ?Sized,
        F: FnMut(usize, f64, f64),
    {
        let drift = self.continuous_drift() * dt;
        let sd = (self.sigma2 * dt).sqrt();
        if sd > 0.0 {
            for x in out.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = drift + sd * z;
            }
        } else {
            out.fill(drift);
        }
        if let Some(cp) = self.active_jumps() {
            let n = out.len();
            let horizon = n as f64 * dt;
            let mut t = 0.0;
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / cp.rate;
                if t >= horizon {
                    break;
                }
                let step = ((t / dt) as usize).min(n - 1);
                let size = cp.dist.sample(rng);
                out[step] += size;
                on_jump(step, t - step as f64 * dt, size);
            }
        }
    }

    /// Fills `out` with i.i.d. increments `L(dt)`.
    pub fn fill_increments<R: Rng + ?Sized>(&self, dt: f64, out: &mut [f64], rng: &mut R) {
        self.sample_events(dt, out, rng, |_, _, _| {});
    }
}

/// `n` i.i.d. draws of `L(dt)`.
pub fn sample_increments<R: Rng + ?Sized>(
    triplet: &LevyTriplet,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one increment".into()));
    }
    let mut out = vec![0.0; n];
    triplet.fill_increments(dt, &mut out, rng);
    Ok(out)
}

pub fn triplet_moments(triplet: &LevyTriplet) -> LevyMoments {
    triplet.moments()
}
