//! Kernel-localized sample moments on an observation grid, and their
//! continuous-time counterparts.

use serde::Serialize;

use crate::dynamics::PathSample;
use crate::error::{Error, Result};
use crate::kernels::{KernelId, LocalizingKernel};
use crate::observation::ObservationScheme;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizedStatistic {
    pub value: f64,
    pub n: u64,
    pub u: f64,
    pub kernel: KernelId,
    /// Lag in rescaled time (0 for the mean).
    pub k: f64,
    pub centered: bool,
    /// `(δ_N / b_N) Σ K(·)`.
    pub weight_sum: f64,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn check_grid(path: &PathSample, grid: &[f64]) -> Result<()> {
    for (i, &t) in grid.iter().enumerate() {
        match path.times.get(i) {
            Some(&found) if close(found, t) => {}
            Some(&found) => {
                return Err(Error::GridMismatch {
                    index: i,
                    expected: t,
                    found,
                })
            }
            None => {
                return Err(Error::GridMismatch {
                    index: i,
                    expected: t,
                    found: f64::NAN,
                })
            }
        }
    }
    if path.times.len() != grid.len() {
        return Err(Error::GridMismatch {
            index: grid.len(),
            expected: f64::NAN,
            found: path.times[grid.len()],
        });
    }
    Ok(())
}

/// Value at time `t` in a sorted path, matched within rounding.
fn value_at(path: &PathSample, t: f64) -> Result<f64> {
    let tol = 1e-12 * t.abs().max(1.0);
    let i = path.times.partition_point(|&x| x < t - tol);
    match path.times.get(i) {
        Some(&x) if (x - t).abs() <= tol => Ok(path.values[i]),
        _ => Err(Error::MissingSample(t)),
    }
}

/// `((δ/b) Σ K_i z_i, (δ/b) Σ K_i)`.
fn weighted(scheme: &ObservationScheme, kernel: &LocalizingKernel, z: &[f64]) -> (f64, f64) {
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (x, v) in scheme.kernel_arguments().into_iter().zip(z) {
        let w = kernel.eval(x);
        acc += w * v;
        wsum += w;
    }
    let f = scheme.delta_n / scheme.b_n;
    (f * acc, f * wsum)
}

/// `(δ_N/b_N) Σ K((τ_i - u)/b_N) Y(τ_i)` for a path sampled exactly on the grid.
pub fn localized_mean(
    path: &PathSample,
    scheme: &ObservationScheme,
    kernel: &LocalizingKernel,
) -> Result<LocalizedStatistic> {
    check_grid(path, &scheme.grid())?;
    let (value, weight_sum) = weighted(scheme, kernel, &path.values);
    Ok(LocalizedStatistic {
        value,
        n: scheme.n,
        u: scheme.u,
        kernel: kernel.id,
        k: 0.0,
        centered: false,
        weight_sum,
    })
}

/// Products `Y(τ_i) Y(τ_i + k/N)` over the grid.
pub fn lagged_products(path: &PathSample, scheme: &ObservationScheme, k: f64) -> Result<Vec<f64>> {
    let grid = scheme.grid();
    let shifted = scheme.shifted_grid(k);
    grid.iter()
        .zip(&shifted)
        .map(|(&t, &s)| Ok(value_at(path, t)? * value_at(path, s)?))
        .collect()
}

/// `(δ_N/b_N) Σ K((τ_i - u)/b_N) Y(τ_i) Y(τ_i + k/N)`; the path must hold
/// both grids.
pub fn localized_autocov(
    path: &PathSample,
    scheme: &ObservationScheme,
    kernel: &LocalizingKernel,
    k: f64,
) -> Result<LocalizedStatistic> {
    let z = lagged_products(path, scheme, k)?;
    let (value, weight_sum) = weighted(scheme, kernel, &z);
    Ok(LocalizedStatistic {
        value,
        n: scheme.n,
        u: scheme.u,
        kernel: kernel.id,
        k,
        centered: false,
        weight_sum,
    })
}

/// `√(δ_N/b_N) Σ K_rect(·) S_i` with `S_i = Y(τ_i)` (no lag, `center` must
/// be 0) or `Y(τ_i) Y(τ_i + k/N) - center`.
pub fn clt_statistic(
    path: &PathSample,
    scheme: &ObservationScheme,
    kernel: &LocalizingKernel,
    k: Option<f64>,
    center: f64,
) -> Result<f64> {
    if kernel.id != KernelId::Rectangular {
        return Err(Error::Kernel(format!(
            "the central limit statistic is defined for the rectangular kernel only, got {}",
            kernel.name()
        )));
    }
    let s: Vec<f64> = match k {
        None => {
            if center != 0.0 {
                return Err(Error::InvalidArgument(
                    "the mean statistic is uncentered; pass center = 0 and a centered driver"
                        .into(),
                ));
            }
            check_grid(path, &scheme.grid())?;
            path.values.clone()
        }
        Some(k) => lagged_products(path, scheme, k)?
            .into_iter()
            .map(|z| z - center)
            .collect(),
    };
    Ok(clt_sum(scheme, &s))
}

/// `√(δ_N/b_N) Σ_i ½ S_i`; the rectangular kernel is ½ on every grid point.
pub fn clt_sum(scheme: &ObservationScheme, s: &[f64]) -> f64 {
    (scheme.delta_n / scheme.b_n).sqrt() * 0.5 * s.iter().sum::<f64>()
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two grid points".into(),
        ));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-6 * h {
            return Err(Error::InvalidArgument(format!(
                "grid is not uniform at index {}",
                i + 1
            )));
        }
    }
    Ok(h)
}

fn trapezoid(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    h * (0.5 * (f[0] + f[n - 1]) + f[1..n - 1].iter().sum::<f64>())
}

/// `(1/t) ∫_0^t Y(ν) dν` by the trapezoid rule.
pub fn global_average(path: &PathSample, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    let times = &path.times;
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::InvalidArgument("empty path".into()));
    };
    let h = uniform_step(times)?;
    if first.abs() > 1e-9 * h.max(1e-300) + 1e-15 || (last - t).abs() > 1e-9 * t {
        return Err(Error::InvalidArgument(format!(
            "grid [{first}, {last}] does not cover [0, {t}] end to end"
        )));
    }
    Ok(trapezoid(h, &path.values) / t)
}

/// `(1/b) ∫_{u-b}^{u+b} K((τ - u)/b) Y(τ) dτ` by the trapezoid rule; needs a
/// differentiable kernel.
pub fn localized_continuous_mean(
    path: &PathSample,
    u: f64,
    b: f64,
    kernel: &LocalizingKernel,
) -> Result<f64> {
    if !kernel.differentiable {
        return Err(Error::Kernel(format!(
            "continuous localization needs a differentiable kernel, got {}",
            kernel.name()
        )));
    }
    let times = &path.times;
    let h = uniform_step(times)?;
    let (first, last) = (times[0], times[times.len() - 1]);
    let tol = 1e-9 * b;
    if (first - (u - b)).abs() > tol || (last - (u + b)).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "grid [{first}, {last}] does not span [u - b, u + b] = [{}, {}]",
            u - b,
            u + b
        )));
    }
    let f: Vec<f64> = times
        .iter()
        .zip(&path.values)
        .map(|(&t, &y)| kernel.eval((t - u) / b) * y)
        .collect();
    Ok(trapezoid(h, &f) / b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PathMeta;
    use crate::observation::{make_scheme, BandwidthRule, StepRule};
    use proptest::prelude::*;

    fn path(times: Vec<f64>, values: Vec<f64>) -> PathSample {
        PathSample {
            times,
            values,
            fine_grid: None,
            meta: PathMeta {
                n: 0,
                model: "test".into(),
                seed: None,
            },
        }
    }

    fn scheme(n: u64) -> ObservationScheme {
        make_scheme(
            1.0,
            n,
            BandwidthRule {
                b: 0.5,
                beta: 2.0 / 3.0,
            },
            StepRule::O1 { delta: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn constant_path_mean() {
        let s = scheme(4096);
        let g = s.grid();
        let c = 2.5;
        let p = path(g.clone(), vec![c; g.len()]);
        let r = localized_mean(&p, &s, &LocalizingKernel::rectangular()).unwrap();
        let expect = c * s.delta_n * (2 * s.m_n + 1) as f64 / (2.0 * s.b_n);
        assert!((r.value - expect).abs() < 1e-12);
        let bv = 1.0;
        assert!((r.weight_sum - 1.0).abs() <= 2.0 * bv * s.delta_n / s.b_n);
    }

    #[test]
    fn single_atom_mean() {
        let s = scheme(4096);
        let g = s.grid();
        let mut v = vec![0.0; g.len()];
        v[s.m_n] = 1.0;
        let r = localized_mean(&path(g, v), &s, &LocalizingKernel::rectangular()).unwrap();
        assert!((r.value - s.delta_n / (2.0 * s.b_n)).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_reports_index() {
        let s = scheme(4096);
        let mut g = s.grid();
        g[3] += 1e-6;
        let n = g.len();
        let err = localized_mean(&path(g, vec![0.0; n]), &s, &LocalizingKernel::rectangular());
        assert!(matches!(err, Err(Error::GridMismatch { index: 3, .. })));
    }

    #[test]
    fn lag_zero_autocov_of_ones() {
        let s = scheme(4096);
        let g = s.grid();
        let p = path(g.clone(), vec![1.0; g.len()]);
        let r = localized_autocov(&p, &s, &LocalizingKernel::rectangular(), 0.0).unwrap();
        assert!((r.value - s.delta_n * (2 * s.m_n + 1) as f64 / (2.0 * s.b_n)).abs() < 1e-12);
        assert!(matches!(
            localized_autocov(&p, &s, &LocalizingKernel::rectangular(), 0.5),
            Err(Error::MissingSample(_))
        ));
    }

    #[test]
    fn clt_statistic_cases() {
        let s = scheme(4096);
        let g = s.grid();
        let rect = LocalizingKernel::rectangular();
        let zero = path(g.clone(), vec![0.0; g.len()]);
        assert_eq!(clt_statistic(&zero, &s, &rect, None, 0.0).unwrap(), 0.0);
        let c = 3.0;
        let cst = path(g.clone(), vec![c; g.len()]);
        let v = clt_statistic(&cst, &s, &rect, None, 0.0).unwrap();
        let expect = c * (s.delta_n / s.b_n).sqrt() * (2 * s.m_n + 1) as f64 / 2.0;
        assert!((v - expect).abs() < 1e-12);
        assert!(matches!(
            clt_statistic(&cst, &s, &LocalizingKernel::biweight(), None, 0.0),
            Err(Error::Kernel(_))
        ));
    }

    #[test]
    fn global_average_cases() {
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let c = path(times.clone(), vec![1.75; times.len()]);
        assert!((global_average(&c, 1.0).unwrap() - 1.75).abs() < 1e-14);
        let lin = path(times.clone(), times.clone());
        assert!((global_average(&lin, 1.0).unwrap() - 0.5).abs() < 1e-14);
        let short = path(times[..500].to_vec(), times[..500].to_vec());
        assert!(global_average(&short, 1.0).is_err());
    }

    #[test]
    fn continuous_mean_cases() {
        let (u, b) = (1.0, 0.2);
        let n = 4000;
        let times: Vec<f64> = (0..=n)
            .map(|i| u - b + 2.0 * b * i as f64 / n as f64)
            .collect();
        let bw = LocalizingKernel::biweight();
        let c = path(times.clone(), vec![0.7; times.len()]);
        assert!((localized_continuous_mean(&c, u, b, &bw).unwrap() - 0.7).abs() < 1e-8);
        let lin = path(times.clone(), times.iter().map(|t| 3.0 * t - 1.0).collect());
        assert!((localized_continuous_mean(&lin, u, b, &bw).unwrap() - 2.0).abs() < 1e-8);
        assert!(matches!(
            localized_continuous_mean(&c, u, b, &LocalizingKernel::rectangular()),
            Err(Error::Kernel(_))
        ));
    }

    proptest! {
        #[test]
        fn mean_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let s = scheme(1 << 12);
            let g = s.grid();
            let y: Vec<f64> = (0..g.len()).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 50.0 - 1.0).collect();
            let z: Vec<f64> = (0..g.len()).map(|i| ((i as u64 * 104_729 + seed) % 97) as f64 / 40.0).collect();
            let mix: Vec<f64> = y.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();
            for k in [LocalizingKernel::rectangular(), LocalizingKernel::biweight()] {
                let my = localized_mean(&path(g.clone(), y.clone()), &s, &k).unwrap().value;
                let mz = localized_mean(&path(g.clone(), z.clone()), &s, &k).unwrap().value;
                let mm = localized_mean(&path(g.clone(), mix.clone()), &s, &k).unwrap().value;
                prop_assert!((mm - (alpha * my + beta * mz)).abs() <= 1e-12 * (1.0 + mm.abs()));
            }
        }

        #[test]
        fn shift_covariance(seed in 0u64..1000, shift_steps in -20i64..20) {
            // Path on a regular lattice; the scheme at u + s reads the same values as
            // the scheme at u on the path shifted by s.
            let n = 1u64 << 12;
            let s0 = scheme(n);
            let delta = s0.delta_n;
            let shift = shift_steps as f64 * delta;
            let s1 = make_scheme(1.0 + shift, n, BandwidthRule { b: 0.5, beta: 2.0 / 3.0 }, StepRule::O1 { delta: 1.0 }).unwrap();
            let g0 = s0.grid();
            let g1 = s1.grid();
            let vals: Vec<f64> = (0..g0.len()).map(|i| ((i as u64 * 31 + seed) % 17) as f64).collect();
            // the path shifted by s, sampled at the original grid, equals the original path on grid g1
            let original_on_g1 = path(g1.clone(), vals.clone());
            let shifted_on_g0 = path(g0.clone(), vals);
            let k = LocalizingKernel::biweight();
            let a = localized_mean(&shifted_on_g0, &s0, &k).unwrap().value;
            let b = localized_mean(&original_on_g1, &s1, &k).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn hereditary_identity(seed in 0u64..1000, k_steps in 0usize..4) {
            let s = scheme(1 << 12);
            let k = k_steps as f64; // Delta = 1, so k/N is a whole number of grid steps
            let mut times = s.grid();
            let extra: Vec<f64> = s.shifted_grid(k);
            times.extend(extra);
            times.sort_by(f64::total_cmp);
            times.dedup_by(|a, b| close(*a, *b));
            let values: Vec<f64> = (0..times.len()).map(|i| ((i as u64 * 13 + seed) % 23) as f64 / 7.0 - 1.0).collect();
            let p = path(times, values);
            let rect = LocalizingKernel::rectangular();
            let direct = localized_autocov(&p, &s, &rect, k).unwrap();
            let z = lagged_products(&p, &s, k).unwrap();
            let via_mean = localized_mean(&path(s.grid(), z), &s, &rect).unwrap();
            prop_assert_eq!(direct.value.to_bits(), via_mean.value.to_bits());
        }
    }
}
