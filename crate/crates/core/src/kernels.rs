//! Localizing kernels: bounded weights on `[-1, 1]` integrating to one.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    Rectangular,
    Biweight,
    Custom,
}

#[derive(Clone)]
pub struct LocalizingKernel {
    pub id: KernelId,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Declared total variation bound.
    pub bv_constant: f64,
    pub differentiable: bool,
}

impl fmt::Debug for LocalizingKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalizingKernel")
            .field("id", &self.id)
            .field("bv_constant", &self.bv_constant)
            .field("differentiable", &self.differentiable)
            .finish()
    }
}

impl LocalizingKernel {
    pub fn rectangular() -> Self {
        Self {
            id: KernelId::Rectangular,
            eval: Arc::new(|x: f64| if x.abs() <= 1.0 { 0.5 } else { 0.0 }),
            bv_constant: 1.0,
            differentiable: false,
        }
    }

    /// `(15/16)(1 - x^2)^2` on `[-1, 1]`; C¹ on the whole line.
    pub fn biweight() -> Self {
        Self {
            id: KernelId::Biweight,
            eval: Arc::new(|x: f64| {
                if x.abs() <= 1.0 {
                    let w = 1.0 - x * x;
                    0.9375 * w * w
                } else {
                    0.0
                }
            }),
            bv_constant: 15.0 / 8.0,
            differentiable: true,
        }
    }

    /// A user-supplied kernel. Nothing is checked here; see [`kernel_validate`].
    pub fn custom<F>(eval: F, bv_constant: f64, differentiable: bool) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            id: KernelId::Custom,
            eval: Arc::new(eval),
            bv_constant,
            differentiable,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "rectangular" | "rect" => Ok(Self::rectangular()),
            "biweight" | "quartic" => Ok(Self::biweight()),
            other => Err(Error::Kernel(format!(
                "unknown kernel '{other}' (expected 'rectangular' or 'biweight')"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.id {
            KernelId::Rectangular => "rectangular",
            KernelId::Biweight => "biweight",
            KernelId::Custom => "custom",
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelReport {
    pub integral: f64,
    pub support_ok: bool,
    pub bounded_ok: bool,
}

impl KernelReport {
    pub fn passed(&self) -> bool {
        (self.integral - 1.0).abs() <= 1e-10 && self.support_ok && self.bounded_ok
    }
}

pub fn kernel_validate(k: &LocalizingKernel) -> KernelReport {
    let integral = integrate(|x| k.eval(x), -1.0, 1.0, 1e-13);
    let exterior = 1000;
    let support_ok = (1..=exterior).all(|i| {
        let x = 1.0 + 4.0 * i as f64 / exterior as f64;
        k.eval(x) == 0.0 && k.eval(-x) == 0.0
    });
    let grid = 10_000;
    let bounded_ok = (0..=grid).all(|i| {
        let x = -1.0 + 2.0 * i as f64 / grid as f64;
        k.eval(x).is_finite()
    });
    KernelReport {
        integral,
        support_ok,
        bounded_ok,
    }
}

/// `(δ/b) Σ_{|i| <= ⌊b/δ⌋} K(iδ/b)`, the discrete mass of the kernel.
pub fn riemann_mass(k: &LocalizingKernel, b: f64, delta: f64) -> f64 {
    let m = (b / delta * (1.0 + 1e-12)).floor() as i64;
    let s: f64 = (-m..=m).map(|i| k.eval(i as f64 * delta / b)).sum();
    delta / b * s
}
