//! Time-varying linear dynamics `dX = A(t) X dt + C(t) dL`, `Y = B(t)' X`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{max_real_eigenvalue, spectral_norm};
use crate::rng;

mod simulate;
mod transition;

pub use simulate::{
    coarsen, simulate_on_noise, simulate_yn, FineGrid, PathMeta, PathSample, Propagator,
};
pub use transition::{
    transition_matrix, transition_seminorm_check, SeminormReport, TransitionMethod,
    DEFAULT_PEANO_ORDER,
};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar coefficient function of time.
#[derive(Clone)]
pub struct Coef {
    f: ScalarFn,
    constant: bool,
}

impl Coef {
    pub fn constant(c: f64) -> Self {
        Self {
            f: Arc::new(move |_| c),
            constant: true,
        }
    }

    pub fn expr(e: Expr) -> Self {
        let constant = e.is_constant();
        Self {
            f: Arc::new(move |t| e.eval(t)),
            constant,
        }
    }

    pub fn func<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            constant: false,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }
}

impl fmt::Debug for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.constant {
            write!(f, "Coef({})", self.eval(0.0))
        } else {
            f.write_str("Coef(<fn>)")
        }
    }
}

/// tvCAR(1): `dX = -a(t) X dt + dL`, `Y = X`.
#[derive(Debug, Clone)]
pub struct Car1Spec {
    pub a: Coef,
    pub lipschitz: f64,
    pub infimum_a: f64,
    pub label: String,
}

impl Car1Spec {
    pub fn new(a: Coef, lipschitz: f64, infimum_a: f64) -> Result<Self> {
        if !(infimum_a > 0.0 && infimum_a.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "infimum of a(t) must be positive, got {infimum_a}"
            )));
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "Lipschitz constant must be >= 0, got {lipschitz}"
            )));
        }
        Ok(Self {
            a,
            lipschitz,
            infimum_a,
            label: "car1".into(),
        })
    }

    /// `a(t) = 2 + sin t`: infimum 1, Lipschitz constant 1.
    pub fn two_plus_sin() -> Self {
        Self {
            a: Coef::func(|t| 2.0 + t.sin()),
            lipschitz: 1.0,
            infimum_a: 1.0,
            label: "car1:2+sin(t)".into(),
        }
    }

    pub fn constant(a: f64) -> Result<Self> {
        let mut s = Self::new(Coef::constant(a), 0.0, a)?;
        s.label = format!("car1:{a}");
        Ok(s)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lipschitz {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// General `p`-dimensional model with entrywise coefficient functions.
#[derive(Debug, Clone)]
pub struct StateSpaceSpec {
    pub p: usize,
    /// Row-major `p x p`.
    pub a: Vec<Coef>,
    pub b: Vec<Coef>,
    pub c: Vec<Coef>,
    pub lipschitz: Lipschitz,
    pub commuting: bool,
    pub stability_margin: f64,
    pub label: String,
}

impl StateSpaceSpec {
    pub fn new(
        p: usize,
        a: Vec<Coef>,
        b: Vec<Coef>,
        c: Vec<Coef>,
        lipschitz: Lipschitz,
        commuting: bool,
        stability_margin: f64,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidModel("state dimension must be >= 1".into()));
        }
        if a.len() != p * p || b.len() != p || c.len() != p {
            return Err(Error::InvalidModel(format!(
                "coefficient shapes do not match p={p}: A has {} entries, B {}, C {}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        if !(stability_margin > 0.0 && stability_margin.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "stability margin must be positive, got {stability_margin}"
            )));
        }
        for (name, v) in [
            ("L_A", lipschitz.a),
            ("L_B", lipschitz.b),
            ("L_C", lipschitz.c),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(Self {
            p,
            a,
            b,
            c,
            lipschitz,
            commuting,
            stability_margin,
            label: format!("statespace:p={p}"),
        })
    }

    /// Constant coefficients.
    pub fn time_invariant(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<Self> {
        let p = a.nrows();
        let max_re = max_real_eigenvalue(a);
        if !(max_re < 0.0) {
            return Err(Error::Unstable {
                u: f64::NAN,
                max_real: max_re,
            });
        }
        let mut entries = Vec::with_capacity(p * p);
        for i in 0..p {
            for j in 0..p {
                entries.push(Coef::constant(a[(i, j)]));
            }
        }
        Self::new(
            p,
            entries,
            b.iter().map(|&x| Coef::constant(x)).collect(),
            c.iter().map(|&x| Coef::constant(x)).collect(),
            Lipschitz {
                a: 0.0,
                b: 0.0,
                c: 0.0,
            },
            true,
            -max_re,
        )
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Car1(Car1Spec),
    StateSpace(StateSpaceSpec),
}

impl From<Car1Spec> for Model {
    fn from(s: Car1Spec) -> Self {
        Model::Car1(s)
    }
}

impl From<StateSpaceSpec> for Model {
    fn from(s: StateSpaceSpec) -> Self {
        Model::StateSpace(s)
    }
}

impl Model {
    pub fn p(&self) -> usize {
        match self {
            Model::Car1(_) => 1,
            Model::StateSpace(s) => s.p,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Model::Car1(s) => &s.label,
            Model::StateSpace(s) => &s.label,
        }
    }

    pub fn a(&self, t: f64) -> DMatrix<f64> {
        match self {
            Model::Car1(s) => DMatrix::from_element(1, 1, -s.a.eval(t)),
            Model::StateSpace(s) => DMatrix::from_fn(s.p, s.p, |i, j| s.a[i * s.p + j].eval(t)),
        }
    }

    pub fn b(&self, t: f64) -> DVector<f64> {
        match self {
            Model::Car1(_) => DVector::from_element(1, 1.0),
            Model::StateSpace(s) => DVector::from_fn(s.p, |i, _| s.b[i].eval(t)),
        }
    }

    pub fn c(&self, t: f64) -> DVector<f64> {
        match self {
            Model::Car1(_) => DVector::from_element(1, 1.0),
            Model::StateSpace(s) => DVector::from_fn(s.p, |i, _| s.c[i].eval(t)),
        }
    }

    /// Scalar `a(t)` for tvCAR(1) models.
    pub fn car1_rate(&self) -> Option<&Coef> {
        match self {
            Model::Car1(s) => Some(&s.a),
            Model::StateSpace(_) => None,
        }
    }

    pub fn commuting(&self) -> bool {
        match self {
            Model::Car1(_) => true,
            Model::StateSpace(s) => s.commuting,
        }
    }

    pub fn stability_margin(&self) -> f64 {
        match self {
            Model::Car1(s) => s.infimum_a,
            Model::StateSpace(s) => s.stability_margin,
        }
    }

    pub fn lipschitz(&self) -> Lipschitz {
        match self {
            Model::Car1(s) => Lipschitz {
                a: s.lipschitz,
                b: 0.0,
                c: 0.0,
            },
            Model::StateSpace(s) => s.lipschitz,
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        match self {
            Model::Car1(s) => s.a.is_constant(),
            Model::StateSpace(s) => {
                s.a.iter()
                    .chain(s.b.iter())
                    .chain(s.c.iter())
                    .all(Coef::is_constant)
            }
        }
    }

    /// The time-invariant model with all coefficients frozen at `u`.
    pub fn frozen(&self, u: f64) -> Result<Model> {
        let a = self.a(u);
        let max_re = max_real_eigenvalue(&a);
        if !(max_re < 0.0) {
            return Err(Error::Unstable {
                u,
                max_real: max_re,
            });
        }
        Ok(match self {
            Model::Car1(s) => {
                let au = s.a.eval(u);
                Model::Car1(Car1Spec {
                    a: Coef::constant(au),
                    lipschitz: 0.0,
                    infimum_a: au,
                    label: format!("{}@{u}", s.label),
                })
            }
            Model::StateSpace(s) => Model::StateSpace(
                StateSpaceSpec::time_invariant(&a, &self.b(u), &self.c(u))?
                    .with_label(format!("{}@{u}", s.label)),
            ),
        })
    }

    /// Checks the declared structure on random points of `range`.
    pub fn validate(&self, range: (f64, f64), seed: u64) -> ModelReport {
        let (lo, hi) = range;
        let mut rng = rng::stream(seed, "model-validate", 0);
        let mut draw = || lo + (hi - lo) * rng.random::<f64>();
        let mut pairs = Vec::with_capacity(100);
        for _ in 0..100 {
            let s = draw();
            let t = draw();
            pairs.push((s, t));
        }

        let mut max_real = f64::NEG_INFINITY;
        let mut infimum_ok = true;
        match self {
            Model::Car1(s) => {
                for i in 0..1000 {
                    let t = lo + (hi - lo) * i as f64 / 999.0;
                    let v = s.a.eval(t);
                    if v < s.infimum_a - 1e-12 {
                        infimum_ok = false;
                    }
                    max_real = max_real.max(-v);
                }
            }
            Model::StateSpace(_) => {
                for &(t, _) in &pairs {
                    max_real = max_real.max(max_real_eigenvalue(&self.a(t)));
                }
            }
        }
        let stability_ok = infimum_ok && max_real <= -self.stability_margin() + 1e-8;

        let mut commutator = 0.0f64;
        if self.commuting() && self.p() > 1 {
            for &(s, t) in &pairs {
                let (at, as_) = (self.a(t), self.a(s));
                let comm = spectral_norm(&(&at * &as_ - &as_ * &at));
                let scale = spectral_norm(&at) * spectral_norm(&as_);
                if scale > 0.0 {
                    commutator = commutator.max(comm / scale);
                }
            }
        }
        let commuting_ok = commutator <= 1e-10;

        let lip = self.lipschitz();
        let mut ratios = [0.0f64; 3];
        for &(s, t) in &pairs {
            let gap = (t - s).abs();
            if gap < 1e-12 {
                continue;
            }
            ratios[0] = ratios[0].max(spectral_norm(&(self.a(t) - self.a(s))) / gap);
            ratios[1] = ratios[1].max((self.b(t) - self.b(s)).norm() / gap);
            ratios[2] = ratios[2].max((self.c(t) - self.c(s)).norm() / gap);
        }
        let declared = [lip.a, lip.b, lip.c];
        let lipschitz_ok = ratios
            .iter()
            .zip(declared)
            .all(|(r, l)| *r <= l * (1.0 + 1e-9) + 1e-9);

        ModelReport {
            stability_ok,
            commuting_ok,
            lipschitz_ok,
            max_real_eigenvalue: max_real,
            max_commutator_ratio: commutator,
            observed_lipschitz: ratios,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub stability_ok: bool,
    pub commuting_ok: bool,
    pub lipschitz_ok: bool,
    pub max_real_eigenvalue: f64,
    pub max_commutator_ratio: f64,
    /// Largest observed difference quotients for A, B, C.
    pub observed_lipschitz: [f64; 3],
}

impl ModelReport {
    pub fn passed(&self) -> bool {
        self.stability_ok && self.commuting_ok && self.lipschitz_ok
    }
}

/// `A(t) = diag(-1 - 0.5 sin t, -2)`, `B = C = (1, 1)'`.
pub fn diagonal_example() -> StateSpaceSpec {
    let z = || Coef::constant(0.0);
    StateSpaceSpec::new(
        2,
        vec![
            Coef::func(|t| -1.0 - 0.5 * t.sin()),
            z(),
            z(),
            Coef::constant(-2.0),
        ],
        vec![Coef::constant(1.0), Coef::constant(1.0)],
        vec![Coef::constant(1.0), Coef::constant(1.0)],
        Lipschitz {
            a: 0.5,
            b: 0.0,
            c: 0.0,
        },
        true,
        0.5,
    )
    .expect("valid example")
    .with_label("diag(-1-0.5sin(t),-2)")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_specs_validate() {
        let car: Model = Car1Spec::two_plus_sin().into();
        assert!(car.validate((-5.0, 5.0), 1).passed());
        let diag: Model = diagonal_example().into();
        let r = diag.validate((-5.0, 5.0), 2);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn validation_flags_violations() {
        // declared Lipschitz constant too small
        let car: Model = Car1Spec::new(Coef::func(|t| 2.0 + t.sin()), 0.1, 1.0)
            .unwrap()
            .into();
        let r = car.validate((-5.0, 5.0), 3);
        assert!(r.stability_ok && !r.lipschitz_ok);

        // infimum claim wrong
        let car: Model = Car1Spec::new(Coef::func(|t| 2.0 + t.sin()), 1.0, 1.5)
            .unwrap()
            .into();
        assert!(!car.validate((-5.0, 5.0), 3).stability_ok);

        // non-commuting but declared commuting
        let rot = StateSpaceSpec::new(
            2,
            vec![
                Coef::constant(-1.0),
                Coef::func(|t| t),
                Coef::constant(0.0),
                Coef::constant(-2.0),
            ],
            vec![Coef::constant(1.0), Coef::constant(0.0)],
            vec![Coef::constant(0.0), Coef::constant(1.0)],
            Lipschitz {
                a: 1.0,
                b: 0.0,
                c: 0.0,
            },
            true,
            1.0,
        )
        .unwrap();
        let r = Model::from(rot).validate((-2.0, 2.0), 4);
        assert!(!r.commuting_ok);
    }

    #[test]
    fn step_coefficient_breaks_lipschitz() {
        let a = Expr::parse("2 + step(t - 1)").unwrap();
        let car: Model = Car1Spec::new(Coef::expr(a), 1.0, 2.0).unwrap().into();
        let r = car.validate((0.0, 2.0), 5);
        assert!(r.stability_ok);
        assert!(!r.lipschitz_ok);
    }

    #[test]
    fn frozen_model_is_time_invariant() {
        let car: Model = Car1Spec::two_plus_sin().into();
        let f = car.frozen(1.0).unwrap();
        assert!(f.is_time_invariant());
        assert_eq!(f.a(123.0)[(0, 0)], -(2.0 + 1f64.sin()));
        let d: Model = diagonal_example().into();
        let f = d.frozen(0.3).unwrap();
        assert!(f.is_time_invariant());
        assert_eq!(f.a(9.0), d.a(0.3));
    }
}
