//! Dense linear algebra used by the transition-matrix and moment code:
//! matrix exponential, continuous Lyapunov solve, Van Loan block integrals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which each Padé degree reaches double precision.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    // Odd/even split: U = A * sum b_{2k+1} A^{2k}, V = sum b_{2k} A^{2k}.
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    let mut power = ident.clone();
    for k in 0..b.len().div_ceil(2) {
        if 2 * k < b.len() {
            v += &power * b[2 * k];
        }
        if 2 * k + 1 < b.len() {
            u += &power * b[2 * k + 1];
        }
        power = &power * &a2;
    }
    let u = a * u;
    solve_pade(u, v)
}

fn pade13(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    solve_pade(u, v)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled arguments")
}

/// Matrix exponential by scaling and squaring with a Padé approximant
/// of degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm requires a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, b);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Operator 2-norm.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Largest real part over the eigenvalues of `a`.
pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)];
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `A X + X A' + Q = 0` through the vectorized Kronecker system.
///
/// State dimensions here are small, so the `p^2 x p^2` dense solve is cheap
/// and avoids a real Schur form.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if !a.is_square() || q.nrows() != p || q.ncols() != p {
        return Err(Error::InvalidArgument(
            "lyapunov: A and Q must be square of equal size".into(),
        ));
    }
    let ident = DMatrix::<f64>::identity(p, p);
    let op = ident.kronecker(a) + a.kronecker(&ident);
    let rhs = DVector::from_iterator(p * p, q.iter().map(|x| -x));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("lyapunov: A + A' spectrum has a zero sum".into()))?;
    let x = DMatrix::from_column_slice(p, p, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Returns `(e^{A h}, ∫_0^h e^{A s} Q e^{A' s} ds)` from one block exponential.
pub fn van_loan(a: &DMatrix<f64>, q: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * p, 2 * p);
    m.view_mut((0, 0), (p, p)).copy_from(&(-a * h));
    m.view_mut((0, p), (p, p)).copy_from(&(q * h));
    m.view_mut((p, p), (p, p)).copy_from(&(a.transpose() * h));
    let f = expm(&m);
    let f12 = f.view((0, p), (p, p)).into_owned();
    let f22 = f.view((p, p), (p, p)).into_owned();
    let gram = f22.transpose() * f12;
    (f22.transpose(), (&gram + gram.transpose()) * 0.5)
}

/// Returns `(e^{A h}, ∫_0^h e^{A s} ds)`.
pub fn exp_and_integral(a: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * p, 2 * p);
    m.view_mut((0, 0), (p, p)).copy_from(&(a * h));
    m.view_mut((0, p), (p, p))
        .copy_from(&(DMatrix::<f64>::identity(p, p) * h));
    let f = expm(&m);
    (
        f.view((0, 0), (p, p)).into_owned(),
        f.view((0, p), (p, p)).into_owned(),
    )
}

/// A factor `L` with `L L' = Q` for symmetric positive semidefinite `Q`.
/// Tiny negative eigenvalues from rounding are clipped to zero.
pub fn psd_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    let p = q.nrows();
    if p == 1 {
        return DMatrix::from_element(1, 1, q[(0, 0)].max(0.0).sqrt());
    }
    let eig = q.clone().symmetric_eigen();
    let mut factor = eig.eigenvectors.clone();
    for j in 0..p {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}
