//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ncdoa::solver::{mixed_norm_12, nuclear_norm};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| cn(rng))
}

pub fn random_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<Complex64> {
    DVector::from_fn(len, |_, _| cn(rng))
}

/// Minimiser of `f` on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

pub fn row_group_prox_objective(x: &DMatrix<Complex64>, z: &DMatrix<Complex64>, tau: f64) -> f64 {
    tau * mixed_norm_12(x) + 0.5 * (x - z).norm_squared()
}

pub fn nuclear_prox_objective(x: &DMatrix<Complex64>, z: &DMatrix<Complex64>, tau: f64) -> f64 {
    tau * nuclear_norm(x).unwrap() + 0.5 * (x - z).norm_squared()
}

/// Row-group prox by a 1-D search over each row's shrink factor.
pub fn row_group_oracle(z: &DMatrix<Complex64>, tau: f64) -> DMatrix<Complex64> {
    let mut out = z.clone();
    for i in 0..z.nrows() {
        let r = z.row(i).norm();
        let s = golden_section(|s| tau * s * r + 0.5 * (1.0 - s).powi(2) * r * r, 0.0, 1.0, 200);
        let mut row = out.row_mut(i);
        row *= Complex64::new(s, 0.0);
    }
    out
}

/// Nuclear prox by gradient descent on the factored objective
/// `τ/2 (‖P‖² + ‖Q‖²) + ½‖PQᴴ - Z‖²`, whose minimum equals the prox
/// objective and whose product `PQᴴ` is the prox point.
pub fn nuclear_prox_oracle(z: &DMatrix<Complex64>, tau: f64, seed: u64) -> DMatrix<Complex64> {
    let (m, n) = z.shape();
    let k = m.min(n);
    let mut rng = rng(seed);
    let scale = (z.norm() / k as f64).sqrt().max(1e-3);
    let mut p = random_matrix(&mut rng, m, k) * Complex64::new(scale, 0.0);
    let mut q = random_matrix(&mut rng, n, k) * Complex64::new(scale, 0.0);
    let lip = 3.0 * z.norm() + tau + 1.0;
    let eta = Complex64::new(0.25 / lip, 0.0);
    let t = Complex64::new(tau, 0.0);
    for _ in 0..200_000 {
        let r = &p * q.adjoint() - z;
        let gp = &p * t + &r * &q;
        let gq = &q * t + r.adjoint() * &p;
        if gp.norm() + gq.norm() < 1e-13 {
            break;
        }
        p -= gp * eta;
        q -= gq * eta;
    }
    p * q.adjoint()
}

/// Projection onto `Σ‖x_ℓ - A_ℓ w_ℓ‖² ≤ budget` through the optimality
/// condition `(I + νA_ℓᴴA_ℓ) w_ℓ = z_ℓ + νA_ℓᴴx_ℓ`, with ν found by
/// bisection and each system solved by dense LU.
pub fn projection_oracle(
    dicts: &[DMatrix<Complex64>],
    obs: &[DVector<Complex64>],
    z: &DMatrix<Complex64>,
    budget: f64,
) -> DMatrix<Complex64> {
    let solve = |nu: f64| -> (DMatrix<Complex64>, f64) {
        let mut w = z.clone();
        let mut res = 0.0;
        for (ell, (a, x)) in dicts.iter().zip(obs).enumerate() {
            let n = a.ncols();
            let lhs = DMatrix::<Complex64>::identity(n, n) + a.adjoint() * a * Complex64::new(nu, 0.0);
            let rhs = z.column(ell) + a.adjoint() * x * Complex64::new(nu, 0.0);
            let col = lhs.lu().solve(&rhs).expect("regular system");
            res += (x - a * &col).norm_squared();
            w.set_column(ell, &col);
        }
        (w, res)
    };
    let (w0, r0) = solve(0.0);
    if r0 <= budget {
        return w0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while solve(hi).1 > budget {
        hi *= 4.0;
        assert!(hi < 1e30, "budget not attainable");
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if solve(mid).1 > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(hi).0
}
