//! Equidistant observation grids `τ_i = u + i δ_N` inside `[u - b_N, u + b_N]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `b_N = b N^{-beta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub b: f64,
    pub beta: f64,
}

impl BandwidthRule {
    pub fn at(&self, n: u64) -> f64 {
        self.b * (n as f64).powf(-self.beta)
    }
}

/// How the grid step shrinks with `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme")]
pub enum StepRule {
    /// `δ_N = Δ / N`: fixed spacing `Δ` in rescaled time.
    O1 {
        #[serde(rename = "Delta")]
        delta: f64,
    },
    /// `δ_N = d N^{-alpha}` with `alpha < 1`, so `N δ_N → ∞`.
    O2 { d: f64, alpha: f64 },
}

impl StepRule {
    pub fn at(&self, n: u64) -> f64 {
        match *self {
            StepRule::O1 { delta } => delta / n as f64,
            StepRule::O2 { d, alpha } => d * (n as f64).powf(-alpha),
        }
    }

    pub fn is_o1(&self) -> bool {
        matches!(self, StepRule::O1 { .. })
    }

    /// Growth exponent of `m_N = b_N / δ_N` in `N`.
    fn m_exponent(&self, beta: f64) -> f64 {
        match *self {
            StepRule::O1 { .. } => 1.0 - beta,
            StepRule::O2 { alpha, .. } => alpha - beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SchemeKind {
    O1 { delta: f64 },
    O2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationScheme {
    pub u: f64,
    pub n: u64,
    pub delta_n: f64,
    pub b_n: f64,
    pub kind: SchemeKind,
    pub m_n: usize,
}

impl ObservationScheme {
    /// Grid `τ_{-m}, ..., τ_m`. The left half is reflected through `u`, so
    /// `τ_{-i} + τ_i == 2u` holds exactly in floating point.
    pub fn grid(&self) -> Vec<f64> {
        let m = self.m_n;
        let mut out = vec![0.0; 2 * m + 1];
        out[m] = self.u;
        for i in 1..=m {
            let right = self.u + i as f64 * self.delta_n;
            out[m + i] = right;
            out[m - i] = 2.0 * self.u - right;
        }
        out
    }

    /// Grid shifted by `k / N` (lag `k` in rescaled time).
    pub fn shifted_grid(&self, k: f64) -> Vec<f64> {
        let shift = k / self.n as f64;
        self.grid().into_iter().map(|t| t + shift).collect()
    }

    /// `(τ_i - u) / b_N` for each grid point.
    pub fn kernel_arguments(&self) -> Vec<f64> {
        let m = self.m_n as i64;
        (-m..=m)
            .map(|i| i as f64 * self.delta_n / self.b_n)
            .collect()
    }
}

pub fn make_scheme(
    u: f64,
    n: u64,
    bandwidth: BandwidthRule,
    step: StepRule,
) -> Result<ObservationScheme> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::Scheme(format!("u must be positive, got {u}")));
    }
    if n == 0 {
        return Err(Error::Scheme("N must be at least 1".into()));
    }
    if !(bandwidth.b > 0.0) || !(bandwidth.beta > 0.0 && bandwidth.beta < 1.0) {
        return Err(Error::Scheme(format!(
            "bandwidth rule needs b > 0 and 0 < beta < 1, got b={}, beta={}",
            bandwidth.b, bandwidth.beta
        )));
    }
    let kind = match step {
        StepRule::O1 { delta } => {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::Scheme(format!(
                    "Delta must be positive, got {delta}"
                )));
            }
            SchemeKind::O1 { delta }
        }
        StepRule::O2 { d, alpha } => {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Scheme(format!("d must be positive, got {d}")));
            }
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Scheme(format!(
                    "O2 needs 0 < alpha < 1 so that N delta_N -> infinity, got alpha={alpha}"
                )));
            }
            SchemeKind::O2
        }
    };
    let b_n = bandwidth.at(n);
    let delta_n = step.at(n);
    if b_n >= u {
        return Err(Error::Scheme(format!(
            "bandwidth b_N = {b_n} must be smaller than u = {u}"
        )));
    }
    let m_n = (b_n / delta_n * (1.0 + 1e-12)).floor();
    if m_n < 2.0 {
        return Err(Error::Scheme(format!(
            "b_N / delta_N = {} gives m_N < 2 at N = {n}; the window holds too few observations",
            b_n / delta_n
        )));
    }
    Ok(ObservationScheme {
        u,
        n,
        delta_n,
        b_n,
        kind,
        m_n: m_n as usize,
    })
}

/// Whether the rules give `b_N / δ_N → ∞` and `N b_N → ∞`.
pub fn lln_admissible(bandwidth: &BandwidthRule, step: &StepRule) -> bool {
    bandwidth.beta > 0.0 && bandwidth.beta < 1.0 && step.m_exponent(bandwidth.beta) > 0.0
}

/// Whether additionally `√(m_N) b_N → 0`, decided on the exponents:
/// `m_N ~ N^e` with `e = 1 - beta` (O1) or `alpha - beta` (O2), so the
/// condition is `e / 2 < beta`.
pub fn clt_admissible(bandwidth: &BandwidthRule, step: &StepRule) -> bool {
    lln_admissible(bandwidth, step) && step.m_exponent(bandwidth.beta) / 2.0 < bandwidth.beta
}
