//! Closed-form proximal maps and the residual-ball projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-wise group soft-threshold: row `r` becomes `max(0, 1 - tau/‖r‖) r`.
pub fn prox_row_group(z: &DMatrix<Complex64>, tau: f64) -> DMatrix<Complex64> {
    let mut out = z.clone();
    prox_row_group_in_place(&mut out, tau);
    out
}

pub(crate) fn prox_row_group_in_place(z: &mut DMatrix<Complex64>, tau: f64) {
    if tau <= 0.0 {
        return;
    }
    for mut row in z.row_iter_mut() {
        let norm = row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm <= tau {
            row.fill(Complex64::new(0.0, 0.0));
        } else {
            row *= Complex64::new(1.0 - tau / norm, 0.0);
        }
    }
}

/// Singular value thresholding: `U max(Λ - tau, 0) Vᴴ`.
pub fn prox_nuclear(z: &DMatrix<Complex64>, tau: f64) -> Result<DMatrix<Complex64>> {
    Ok(prox_nuclear_with_norm(z, tau)?.0)
}

/// Like [`prox_nuclear`] but also returns the nuclear norm of the result.
///
/// Tall inputs go through the eigendecomposition of the small Gram matrix
/// `ZᴴZ = V Λ² Vᴴ`, giving `Z V diag(max(σ - τ, 0)/σ) Vᴴ`; wide inputs are
/// handled through the adjoint.
pub(crate) fn prox_nuclear_with_norm(
    z: &DMatrix<Complex64>,
    tau: f64,
) -> Result<(DMatrix<Complex64>, f64)> {
    if z.is_empty() {
        return Ok((z.clone(), 0.0));
    }
    if z.nrows() < z.ncols() {
        let (t, nuc) = prox_nuclear_with_norm(&z.adjoint(), tau)?;
        return Ok((t.adjoint(), nuc));
    }
    let gram = z.adjoint() * z;
    if !gram.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        return Err(Error::Numerical("non-finite entries in singular value thresholding".into()));
    }
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut nuclear = 0.0;
    let factors: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&lam| {
            let sigma = lam.max(0.0).sqrt();
            let kept = (sigma - tau).max(0.0);
            nuclear += kept;
            if tau <= 0.0 {
                1.0
            } else if kept == 0.0 {
                0.0
            } else {
                kept / sigma
            }
        })
        .collect();
    let v = eig.eigenvectors;
    let mut v_scaled = v.clone();
    for (j, f) in factors.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(*f);
    }
    Ok((z * (v_scaled * v.adjoint()), nuclear))
}

/// Sum of row Euclidean norms.
pub fn mixed_norm_12(z: &DMatrix<Complex64>) -> f64 {
    z.row_iter()
        .map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .sum()
}

/// Sum of singular values.
pub fn nuclear_norm(z: &DMatrix<Complex64>) -> Result<f64> {
    if z.is_empty() {
        return Ok(0.0);
    }
    let svd = nalgebra::SVD::try_new(z.clone(), false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().sum())
}

/// Projection of a column-blocked matrix onto `{W : Σ‖x_ℓ - A_ℓ w_ℓ‖² ≤ budget}`.
///
/// With `A_ℓ A_ℓᴴ = Q_ℓ Λ_ℓ Q_ℓᴴ` the minimiser is `w_ℓ = z_ℓ + ν A_ℓᴴ r_ℓ(ν)` with
/// `r_ℓ(ν) = (I + ν A_ℓ A_ℓᴴ)⁻¹ (x_ℓ - A_ℓ z_ℓ)`, where the multiplier `ν ≥ 0`
/// makes the stacked residual land on the sphere.
#[derive(Debug, Clone)]
pub(crate) struct ResidualProjector {
    eigvecs: Vec<DMatrix<Complex64>>,
    eigvals: Vec<DVector<f64>>,
}

impl ResidualProjector {
    pub(crate) fn new(dictionaries: &[&DMatrix<Complex64>]) -> Self {
        let mut eigvecs = Vec::with_capacity(dictionaries.len());
        let mut eigvals = Vec::with_capacity(dictionaries.len());
        for a in dictionaries {
            let gram = *a * a.adjoint();
            let eig = SymmetricEigen::new(gram);
            eigvals.push(eig.eigenvalues.map(|l| l.max(0.0)));
            eigvecs.push(eig.eigenvectors);
        }
        Self { eigvecs, eigvals }
    }

    /// Returns the projected matrix and the squared residual it attains.
    pub(crate) fn project(
        &self,
        dictionaries: &[&DMatrix<Complex64>],
        observations: &[&DVector<Complex64>],
        z: &DMatrix<Complex64>,
        budget: f64,
    ) -> (DMatrix<Complex64>, f64) {
        let residuals: Vec<DVector<Complex64>> = dictionaries
            .iter()
            .zip(observations)
            .enumerate()
            .map(|(ell, (a, x))| *x - *a * z.column(ell))
            .collect();
        let r2: f64 = residuals.iter().map(|r| r.norm_squared()).sum();
        if r2 <= budget {
            return (z.clone(), r2);
        }
        // Residual energy along each eigendirection of A_ℓ A_ℓᴴ.
        let coeffs: Vec<DVector<Complex64>> = self
            .eigvecs
            .iter()
            .zip(&residuals)
            .map(|(q, r)| q.adjoint() * r)
            .collect();
        let energy = |nu: f64| -> f64 {
            let mut acc = 0.0;
            for (c, lam) in coeffs.iter().zip(&self.eigvals) {
                for (ci, li) in c.iter().zip(lam.iter()) {
                    let d = if nu.is_infinite() {
                        if *li > 0.0 {
                            continue;
                        }
                        1.0
                    } else {
                        1.0 + nu * li
                    };
                    acc += ci.norm_sqr() / (d * d);
                }
            }
            acc
        };

        let nu = if budget <= 0.0 || energy(f64::INFINITY) >= budget {
            f64::INFINITY
        } else {
            let mut hi = 1.0;
            while energy(hi) > budget {
                hi *= 4.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = if lo == 0.0 { hi / 2.0 } else { (lo * hi).sqrt() };
                if mid <= lo || mid >= hi {
                    break;
                }
                if energy(mid) > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };

        let mut w = z.clone();
        let mut attained = 0.0;
        for (ell, a) in dictionaries.iter().enumerate() {
            let lam = &self.eigvals[ell];
            let c = &coeffs[ell];
            // ν (1 + ν λ)⁻¹ applied in the eigenbasis; directions in the null space
            // of A_ℓ A_ℓᴴ do not reach w through A_ℓᴴ.
            let gain = DVector::from_iterator(
                c.len(),
                c.iter().zip(lam.iter()).map(|(ci, li)| {
                    let g = if nu.is_infinite() {
                        if *li > 0.0 {
                            1.0 / li
                        } else {
                            0.0
                        }
                    } else {
                        nu / (1.0 + nu * li)
                    };
                    ci * g
                }),
            );
            let correction = a.adjoint() * (&self.eigvecs[ell] * gain);
            let mut col = w.column_mut(ell);
            col += correction;
            attained += (observations[ell] - *a * col).norm_squared();
        }
        (w, attained)
    }
}
