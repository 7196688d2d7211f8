//! Reference estimators: the lifted program without its low-rank term, and
//! non-coherent MUSIC that treats every sub-array as a snapshot of one
//! shared sub-array.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{ArrayGeometry, GridManifold, Snapshot};
use crate::error::{Error, Result};
use crate::pipeline::{spectrum_from_lifted, EstimatorParams, Method, SpectrumEstimate};
use crate::solver::SolverOptions;

/// Floor on `‖E_nᴴ a‖²` so that exact nulls give a finite spectrum.
pub const MUSIC_NULL_FLOOR: f64 = 1e-12;

/// Lifted program with `μ = 0`, then the magnitude of the dominant left
/// singular vector of its solution.
pub fn run_sparsity_only(
    snapshot: &Snapshot,
    manifold: &GridManifold,
    params: &EstimatorParams,
    q: usize,
    opts: &SolverOptions,
) -> Result<SpectrumEstimate> {
    let params = params.with_mu(0.0);
    spectrum_from_lifted(Method::SparsityOnly, snapshot, manifold, &params, q, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MusicOptions {
    /// Assumed number of sources.
    pub q: usize,
    /// Length of the sliding sub-aperture inside each sub-array.
    #[serde(default = "default_smoothing_length")]
    pub smoothing_length: usize,
    #[serde(default = "default_forward_backward")]
    pub forward_backward: bool,
}

fn default_smoothing_length() -> usize {
    4
}

fn default_forward_backward() -> bool {
    true
}

impl MusicOptions {
    pub fn new(q: usize) -> Self {
        Self {
            q,
            smoothing_length: default_smoothing_length(),
            forward_backward: default_forward_backward(),
        }
    }

    pub fn with_smoothing_length(mut self, len: usize) -> Self {
        self.smoothing_length = len;
        self
    }

    /// Checks `1 ≤ q < smoothing_length ≤ m` for sub-arrays of `m` elements.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.smoothing_length == 0 || self.smoothing_length > m {
            return Err(Error::config(
                "music.smoothing_length",
                format!("must lie in 1..={m} (sub-array size)"),
            ));
        }
        if self.q == 0 {
            return Err(Error::config("music.q", "at least one source must be assumed"));
        }
        if self.q >= self.smoothing_length {
            return Err(Error::config(
                "music.q",
                format!(
                    "{} sources leave no noise subspace with smoothing length {}",
                    self.q, self.smoothing_length
                ),
            ));
        }
        Ok(())
    }
}

/// Size of the common sub-array, after checking that every sub-array is the
/// same uniform linear array up to a translation.
fn common_ula_size(geometry: &ArrayGeometry) -> Result<usize> {
    let parts = geometry.partition();
    let pos = geometry.positions();
    let pats = geometry.patterns();
    let first = parts[0].clone();
    let m = first.len();
    let offsets = |r: &std::ops::Range<usize>| -> Vec<(f64, f64)> {
        let (x0, y0) = pos[r.start];
        r.clone().map(|i| (pos[i].0 - x0, pos[i].1 - y0)).collect()
    };
    let reference = offsets(&first);
    let tol = 1e-9;
    if m >= 2 {
        let (dx, dy) = reference[1];
        let uniform = reference.iter().enumerate().all(|(k, &(x, y))| {
            (x - k as f64 * dx).abs() <= tol && (y - k as f64 * dy).abs() <= tol
        });
        if !uniform || (dx == 0.0 && dy == 0.0) {
            return Err(Error::UnsupportedGeometry(
                "sub-array 0 is not a uniform linear array".into(),
            ));
        }
    }
    for (ell, r) in parts.iter().enumerate().skip(1) {
        if r.len() != m {
            return Err(Error::UnsupportedGeometry(format!(
                "sub-array {ell} has {} elements, sub-array 0 has {m}",
                r.len()
            )));
        }
        let same_shape = offsets(r)
            .iter()
            .zip(&reference)
            .all(|(a, b)| (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol);
        let same_patterns = r
            .clone()
            .zip(first.clone())
            .all(|(i, j)| pats[i].same_as(&pats[j]));
        if !same_shape || !same_patterns {
            return Err(Error::UnsupportedGeometry(format!(
                "sub-array {ell} differs in layout or element patterns from sub-array 0"
            )));
        }
    }
    Ok(m)
}

/// Covariance averaged over every sub-array and every sliding sub-aperture
/// of length `smoothing_length`, optionally with the exchange-conjugate
/// (backward) terms.
pub fn smoothed_covariance(
    snapshot: &Snapshot,
    geometry: &ArrayGeometry,
    opts: &MusicOptions,
) -> Result<DMatrix<Complex64>> {
    let m = common_ula_size(geometry)?;
    if snapshot.num_subarrays() != geometry.num_subarrays()
        || snapshot.observations.iter().any(|x| x.len() != m)
    {
        return Err(Error::Dimension("snapshot does not match the geometry".into()));
    }
    if opts.smoothing_length == 0 || opts.smoothing_length > m {
        return Err(Error::config(
            "music.smoothing_length",
            format!("must lie in 1..={m} (sub-array size)"),
        ));
    }
    let p = opts.smoothing_length;
    let mut r = DMatrix::<Complex64>::zeros(p, p);
    let mut count = 0usize;
    for x in &snapshot.observations {
        for k in 0..=(m - p) {
            let y = x.rows(k, p);
            r.ger(Complex64::new(1.0, 0.0), &y, &y.conjugate(), Complex64::new(1.0, 0.0));
            count += 1;
        }
    }
    r /= Complex64::new(count as f64, 0.0);
    if opts.forward_backward {
        // J R* J flips both indices and conjugates.
        let back = DMatrix::from_fn(p, p, |i, j| r[(p - 1 - i, p - 1 - j)].conj());
        r = (r + back) * Complex64::new(0.5, 0.0);
    }
    Ok(r)
}

/// MUSIC pseudo-spectrum `1 / ‖E_nᴴ a(θ)‖²` on the grid of the sub-aperture.
pub fn run_music(
    snapshot: &Snapshot,
    geometry: &ArrayGeometry,
    grid: &[f64],
    opts: &MusicOptions,
) -> Result<SpectrumEstimate> {
    let m = common_ula_size(geometry)?;
    opts.validate(m)?;
    let r = smoothed_covariance(snapshot, geometry, opts)?;
    let noise = noise_subspace(r, opts.q)?;
    let first = geometry.partition()[0].start;
    let pos = geometry.positions();
    let pats = geometry.patterns();
    let p = opts.smoothing_length;
    let mut a = DVector::<Complex64>::zeros(p);
    let mut proj = DVector::<Complex64>::zeros(noise.ncols());
    let mut mags = Vec::with_capacity(grid.len());
    for &theta in grid {
        let (sin, cos) = theta.to_radians().sin_cos();
        let (x0, y0) = pos[first];
        for k in 0..p {
            let (x, y) = pos[first + k];
            let phase = 2.0 * PI * ((x - x0) * sin + (y - y0) * cos);
            a[k] = Complex64::from_polar(pats[first + k].gain(theta), phase);
        }
        proj.gemv_ad(Complex64::new(1.0, 0.0), &noise, &a, Complex64::new(0.0, 0.0));
        mags.push(1.0 / proj.norm_squared().max(MUSIC_NULL_FLOOR));
    }
    Ok(SpectrumEstimate::from_magnitudes(Method::Music, grid, mags, opts.q))
}

/// Eigenvectors beyond the `q` largest eigenvalues (ties keep eigen-solver order).
fn noise_subspace(r: DMatrix<Complex64>, q: usize) -> Result<DMatrix<Complex64>> {
    let p = r.nrows();
    let eig = SymmetricEigen::try_new(r, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("covariance eigendecomposition failed".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<_> = order[q..].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    Ok(DMatrix::from_columns(&cols))
}
