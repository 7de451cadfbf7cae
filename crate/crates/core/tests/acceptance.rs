//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout; the
//! process exits non-zero if any criterion fails.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use locstat::cli::{parse_config, ConfigError, Job, Subcommand};
use locstat::dynamics::{diagonal_example, transition_matrix, Car1Spec, Model, TransitionMethod};
use locstat::experiments::{
    run_clt, run_coupling, run_lipschitz_u, run_lln, with_workers, ExperimentReport,
};
use locstat::kernels::{kernel_validate, riemann_mass, LocalizingKernel};
use locstat::noise::LevyTriplet;
use locstat::rng::stream;
use locstat::stationary::{simulate_stationary, StationaryMoments};
use locstat::stats::mean_se;

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name);
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn job(name: &str, sub: Subcommand, seed: u64) -> Job {
    parse_config(&fixture(name), sub)
        .unwrap_or_else(|e| panic!("{name}: {e}"))
        .with_seed(seed)
}

fn run(job: &Job) -> ExperimentReport {
    match job {
        Job::Lln(c) => run_lln(c),
        Job::Clt(c) => run_clt(c),
        Job::Coupling(c) => run_coupling(c),
        Job::Lipschitz(c) => run_lipschitz_u(c),
        other => panic!("not an experiment: {other:?}"),
    }
    .expect("experiment runs")
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn ou(a: f64) -> Model {
    Car1Spec::constant(a).unwrap().into()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion_1() -> Outcome {
    let m: Model = diagonal_example().into();
    let methods = [
        TransitionMethod::CommutingExp,
        TransitionMethod::PeanoBaker { order: 12 },
        TransitionMethod::OdeRk4 { step: 1e-3 },
    ];
    let mut worst_pair = 0.0f64;
    for (t0, t1) in [(0.0, 1.0), (-2.0, 0.5), (1.0, 4.0), (3.0, 3.0)] {
        let psi: Vec<_> = methods
            .iter()
            .map(|&me| transition_matrix(&m, t1, t0, me).unwrap())
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                worst_pair = worst_pair.max(max_abs_diff(&psi[i], &psi[j]));
            }
        }
    }
    // closed form at (1, 0)
    let exact = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        (-1.0 - 0.5 * (1.0 - 1f64.cos())).exp(),
        (-2.0f64).exp(),
    ]));
    let closed = max_abs_diff(
        &transition_matrix(&m, 1.0, 0.0, TransitionMethod::CommutingExp).unwrap(),
        &exact,
    );
    let mut rng = stream(2024, "acceptance/semigroup", 0);
    let mut worst_semi = 0.0f64;
    for _ in 0..50 {
        let mut ts: [f64; 3] = [
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ];
        ts.sort_by(|a, b| a.total_cmp(b));
        let [s, r, t] = ts;
        for me in methods {
            let lhs = transition_matrix(&m, t, s, me).unwrap();
            let rhs =
                transition_matrix(&m, t, r, me).unwrap() * transition_matrix(&m, r, s, me).unwrap();
            worst_semi = worst_semi.max(max_abs_diff(&lhs, &rhs));
        }
    }
    Outcome {
        pass: worst_pair <= 1e-7 && worst_semi <= 1e-7 && closed <= 1e-8,
        detail: format!(
            "max pairwise diff {worst_pair:.2e}, max semigroup residual {worst_semi:.2e}, closed-form error {closed:.2e}"
        ),
    }
}

/// `n` independent draws of `Ỹ_u(0)`.
fn stationary_draws(model: &Model, triplet: &LevyTriplet, n: usize, tag: &str) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let mut rng = stream(77, tag, i);
            simulate_stationary(model, 1.0, triplet, &[0.0], &mut rng)
                .unwrap()
                .values[0]
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let n = 100_000;
    let m = ou(1.0);
    let g = LevyTriplet::brownian(0.0, 1.0).unwrap();
    let y = stationary_draws(&m, &g, n, "acceptance/gauss");
    let (v, v_se) = mean_se(&y.iter().map(|x| x * x).collect::<Vec<_>>());
    let (f, f_se) = mean_se(&y.iter().map(|x| x.powi(4)).collect::<Vec<_>>());
    let cp = LevyTriplet::symmetric_unit_jumps(1.0).unwrap();
    let yj = stationary_draws(&m, &cp, n, "acceptance/jumps");
    let (fj, fj_se) = mean_se(&yj.iter().map(|x| x.powi(4)).collect::<Vec<_>>());
    // Gaussian OU: E Y^2 = 1/2, E Y^4 = 3/4; ±1 jumps at rate 1: 3/4 + 1/4.
    let closed = [
        StationaryMoments::compute(&m, 1.0, &g).unwrap(),
        StationaryMoments::compute(&m, 1.0, &cp).unwrap(),
    ];
    let closed_ok = (closed[0].second_moment - 0.5).abs() < 1e-10
        && (closed[0].fourth_moment - 0.75).abs() < 1e-8
        && (closed[1].fourth_moment - 1.0).abs() < 1e-8;
    let zs = [(v - 0.5) / v_se, (f - 0.75) / f_se, (fj - 1.0) / fj_se];
    Outcome {
        pass: closed_ok && zs.iter().all(|z| z.abs() < 4.0),
        detail: format!(
            "E[Y^2] {v:.5} (z {:.2}), E[Y^4] {f:.5} (z {:.2}), jump E[Y^4] {fj:.5} (z {:.2}); closed forms match: {closed_ok}",
            zs[0], zs[1], zs[2]
        ),
    }
}

fn shipped_models() -> Vec<(String, Model)> {
    let mut out: Vec<(String, Model)> = vec![
        ("two_plus_sin".into(), Car1Spec::two_plus_sin().into()),
        ("ou".into(), ou(1.0)),
        ("diagonal".into(), diagonal_example().into()),
    ];
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut names: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    for name in names {
        let text = fixture(&name);
        for sub in Subcommand::ALL {
            if let Ok(j) = parse_config(&text, sub) {
                let model = match j {
                    Job::Simulate(s) => Some(s.model),
                    Job::Moments(s) => Some(s.model),
                    Job::Lln(c) => Some(c.model),
                    Job::Clt(c) => Some(c.model),
                    Job::Coupling(c) => Some(c.model),
                    Job::Lipschitz(c) => Some(c.model),
                    _ => None,
                };
                if let Some(m) = model {
                    out.push((name.clone(), m));
                }
                break;
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let triplet = LevyTriplet::brownian(0.0, 1.0).unwrap();
    let mut worst_res = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut count = 0;
    for (_, m) in shipped_models() {
        for u in [0.25, 0.5, 1.0, 1.5, 2.0] {
            let mo = match StationaryMoments::compute(&m, u, &triplet) {
                Ok(mo) => mo,
                Err(_) => continue,
            };
            worst_res = worst_res.max(mo.system.lyapunov_residual().unwrap());
            let rel = (mo.autocov(0.0) - mo.variance).abs() / mo.variance;
            worst_var = worst_var.max(rel);
            count += 1;
        }
    }
    Outcome {
        pass: count > 0 && worst_res <= 1e-10 && worst_var <= 1e-10,
        detail: format!(
            "{count} (spec, u) pairs; max relative Lyapunov residual {worst_res:.2e}, max |autocov(0) - variance| / variance {worst_var:.2e}"
        ),
    }
}

fn slope(r: &ExperimentReport) -> f64 {
    r.slope.unwrap_or(f64::NAN)
}

fn criterion_4() -> Outcome {
    let good = run(&job("coupling_tvcar1.json", Subcommand::Coupling, 1));
    let bad = run(&job("coupling_step_control.json", Subcommand::Coupling, 1));
    let in_window = |s: f64| (-1.3..=-0.7).contains(&s);
    Outcome {
        pass: good.pass && in_window(slope(&good)) && !bad.pass && !in_window(slope(&bad)),
        detail: format!(
            "tvCAR(1) slope {:.4}, discontinuous control slope {:.4} (flagged: {})",
            slope(&good),
            slope(&bad),
            !bad.pass
        ),
    }
}

fn criterion_5() -> Outcome {
    let l2 = run(&job("lipschitz_l2.json", Subcommand::Lipschitz, 1));
    let l4 = run(&job("lipschitz_l4.json", Subcommand::Lipschitz, 1));
    Outcome {
        pass: l2.pass && l4.pass && slope(&l2) >= 0.9 && slope(&l4) >= 0.9,
        detail: format!("L2 slope {:.4}, L4 slope {:.4}", slope(&l2), slope(&l4)),
    }
}

fn criterion_6() -> Outcome {
    let a1 = 2.0 + 1f64.sin();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, target) in [
        ("lln_o1_mean.json", 1.0 / a1),
        ("lln_o2_mean.json", 1.0 / a1),
        ("lln_o1_autocov.json", 1.0 / (2.0 * a1)),
        ("lln_o2_autocov.json", 1.0 / (2.0 * a1)),
    ] {
        let r = run(&job(name, Subcommand::Lln, 1));
        let rmse: Vec<f64> = r.rows.iter().map(|row| row.rmse.unwrap()).collect();
        let decreasing = rmse.windows(2).all(|w| w[1] < w[0]);
        let last = *rmse.last().unwrap();
        let target_ok = r.rows.iter().all(|row| (row.target - target).abs() < 1e-10);
        let ok = r.pass && decreasing && last < 0.02 && target_ok;
        pass &= ok;
        parts.push(format!(
            "{} RMSE {} ({})",
            name.trim_end_matches(".json"),
            rmse.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" > "),
            if ok { "ok" } else { "FAIL" }
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

/// Composite Simpson rule for `∫_0^1 du / (2 + sin u)`.
fn simpson_oracle() -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let f = |u: f64| 1.0 / (2.0 + u.sin());
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

fn criterion_7() -> Outcome {
    let oracle = simpson_oracle();
    let r = run(&job("lln_global.json", Subcommand::Lln, 1));
    let row = &r.rows[0];
    let z = (row.estimate - oracle) / row.std_error;
    Outcome {
        pass: r.pass && (row.target - oracle).abs() < 1e-9 && z.abs() <= 3.0,
        detail: format!(
            "N = {}, estimate {:.6} +- {:.6}, quadrature oracle {oracle:.6}, z = {z:.2}",
            row.n, row.estimate, row.std_error
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["clt_o2_gaussian.json", "clt_o2_jumps.json"] {
        let r = run(&job(name, Subcommand::Clt, 1));
        let clt = r.clt.as_ref().unwrap();
        let in_var: Vec<&str> = clt
            .candidates
            .iter()
            .filter(|c| (c.standardized.variance - 1.0).abs() < 0.1)
            .map(|c| c.name.as_str())
            .collect();
        let winner = clt
            .candidates
            .iter()
            .find(|c| c.name == in_var.first().copied().unwrap_or(""));
        let ok = in_var.len() == 1
            && winner.is_some_and(|c| c.standardized.mean.abs() < 0.07 && c.ks < clt.ks_band);
        pass &= ok;
        let w = winner.unwrap_or(&clt.candidates[0]);
        parts.push(format!(
            "{}: variance in band for [{}], mean {:.4}, variance {:.4}, KS {:.4} < {:.4}",
            name.trim_end_matches(".json"),
            in_var.join(", "),
            w.standardized.mean,
            w.standardized.variance,
            w.ks,
            clt.ks_band
        ));
    }
    let r = run(&job("clt_o1_lag_gaussian.json", Subcommand::Clt, 1));
    let c = &r.clt.as_ref().unwrap().candidates[0];
    let ok = (c.standardized.variance - 1.0).abs() < 0.15;
    pass &= ok;
    parts.push(format!(
        "lagged (Isserlis sigma~^2 = {:.5}): variance {:.4}",
        c.sigma2, c.standardized.variance
    ));
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_9() -> Outcome {
    let err = parse_config(&fixture("clt_beta_quarter.json"), Subcommand::Clt);
    let (pass, detail) = match err {
        Err(ConfigError::Semantic(msg)) => (msg.contains("√(m_N) b_N → 0"), msg),
        Err(other) => (false, format!("wrong error class: {other}")),
        Ok(_) => (false, "inadmissible configuration was accepted".into()),
    };
    Outcome { pass, detail }
}

fn criterion_10() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [
        LocalizingKernel::rectangular(),
        LocalizingKernel::biweight(),
    ] {
        let rep = kernel_validate(&k);
        let mut worst = 0.0f64;
        for ratio in [10.0, 100.0, 1000.0] {
            let err = (riemann_mass(&k, 1.0, 1.0 / ratio) - 1.0).abs();
            let bound = 2.0 * k.bv_constant / ratio;
            worst = worst.max(err / bound);
        }
        let ok = rep.passed() && (rep.integral - 1.0).abs() <= 1e-10 && worst < 1.0;
        pass &= ok;
        parts.push(format!(
            "{}: integral - 1 = {:.1e}, worst Riemann error / bound {worst:.2e}",
            k.name(),
            rep.integral - 1.0
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

/// Shrinks a fixture so that repeated runs stay cheap.
fn small(job: Job) -> Job {
    match job {
        Job::Lln(mut c) => {
            c.n_list.truncate(2);
            c.replications = 24;
            Job::Lln(c)
        }
        Job::Clt(mut c) => {
            c.n = 1 << 10;
            c.replications = 24;
            if let Some(mc) = &mut c.mc {
                mc.chunks = 4;
                mc.points_per_chunk = 256;
            }
            Job::Clt(c)
        }
        Job::Coupling(mut c) => {
            c.replications = 24;
            Job::Coupling(c)
        }
        Job::Lipschitz(mut c) => {
            c.replications = 24;
            Job::Lipschitz(c)
        }
        other => other,
    }
}

fn fingerprint(r: &ExperimentReport) -> String {
    let bits: Vec<u64> = r.samples.iter().map(|x| x.to_bits()).collect();
    format!("{}|{bits:?}", serde_json::to_string(r).unwrap())
}

fn criterion_11() -> Outcome {
    let cases = [
        ("coupling_tvcar1.json", Subcommand::Coupling),
        ("lipschitz_l4.json", Subcommand::Lipschitz),
        ("lln_o1_autocov.json", Subcommand::Lln),
        ("lln_o2_mean.json", Subcommand::Lln),
        ("lln_global.json", Subcommand::Lln),
        ("clt_o2_jumps.json", Subcommand::Clt),
        ("clt_o1_lag_gaussian.json", Subcommand::Clt),
    ];
    let mut pass = true;
    let mut failed = Vec::new();
    for (name, sub) in cases {
        let mut j = small(job(name, sub, 9));
        if let Job::Lln(c) = &mut j {
            if c.n_list == [1024] {
                c.h = 0.01;
            }
        }
        let a = with_workers(1, || fingerprint(&run(&j))).unwrap();
        let b = with_workers(1, || fingerprint(&run(&j))).unwrap();
        let c = with_workers(4, || fingerprint(&run(&j))).unwrap();
        if a != b || a != c {
            pass = false;
            failed.push(name);
        }
    }
    let full_1 = with_workers(1, || {
        fingerprint(&run(&job("coupling_tvcar1.json", Subcommand::Coupling, 3)))
    })
    .unwrap();
    let full_4 = with_workers(4, || {
        fingerprint(&run(&job("coupling_tvcar1.json", Subcommand::Coupling, 3)))
    })
    .unwrap();
    pass &= full_1 == full_4;
    Outcome {
        pass,
        detail: if failed.is_empty() && full_1 == full_4 {
            format!(
                "{} experiment configurations bit-identical across repeated runs and 1 vs 4 workers",
                cases.len() + 1
            )
        } else {
            format!(
                "differences in {failed:?} (full coupling identical: {})",
                full_1 == full_4
            )
        },
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("transition matrix agreement", criterion_1),
        ("stationary moments vs simulation", criterion_2),
        ("Lyapunov residual", criterion_3),
        ("coupling rate", criterion_4),
        ("Lipschitz in u", criterion_5),
        ("discrete LLN", criterion_6),
        ("continuous LLN", criterion_7),
        ("CLT", criterion_8),
        ("CLT admissibility gate", criterion_9),
        ("kernel suite", criterion_10),
        ("determinism", criterion_11),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|x| *x == id || name.contains(x.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<34} {} [{:.1}s] {}",
            id,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
