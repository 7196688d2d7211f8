//! The two proposed estimators: DOAs read directly off the lifted solution
//! (Proposed1), and phase extraction followed by a coherent L1 recovery over
//! the whole aperture (Proposed2).

mod peaks;

pub use peaks::{local_maxima, pick_peaks, pick_peaks_threshold, PeakSet};

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{GridManifold, Snapshot};
use crate::error::{Error, Result};
use crate::solver::{solve_l1, solve_lifted, LiftedProblem, SolverDiagnostics, SolverOptions};

/// Below this magnitude an entry of `alpha_hat` carries no usable phase.
pub const PHASE_MAGNITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Proposed1,
    Proposed2,
    SparsityOnly,
    #[serde(rename = "MUSIC")]
    Music,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Proposed1,
        Method::Proposed2,
        Method::SparsityOnly,
        Method::Music,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed1 => "Proposed1",
            Method::Proposed2 => "Proposed2",
            Method::SparsityOnly => "SparsityOnly",
            Method::Music => "MUSIC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::config(
                    "methods",
                    format!("unknown method `{s}` (expected Proposed1, Proposed2, SparsityOnly or MUSIC)"),
                )
            })
    }
}

/// Weights of the convex programs and the noise level they assume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorParams {
    /// Nuclear-norm weight.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Residual budget multiplier; the budget is `C·M·σ²`.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Assumed per-element noise variance.
    #[serde(default)]
    pub sigma2: f64,
    /// Smallest budget used, so that noiseless data still leave a feasible interior.
    #[serde(default = "default_budget_floor")]
    pub budget_floor: f64,
}

fn default_mu() -> f64 {
    1.0
}

fn default_c() -> f64 {
    2.0
}

fn default_budget_floor() -> f64 {
    1e-8
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            mu: default_mu(),
            c: default_c(),
            sigma2: 0.0,
            budget_floor: default_budget_floor(),
        }
    }
}

impl EstimatorParams {
    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config("estimator.mu", "must be finite and non-negative"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config("estimator.c", "must be finite and positive"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("estimator.sigma2", "must be finite and non-negative"));
        }
        if !(self.budget_floor >= 0.0 && self.budget_floor.is_finite()) {
            return Err(Error::config("estimator.budget_floor", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// `max(C·M·σ², floor)` for `m` observed elements.
    pub fn noise_budget(&self, m: usize) -> f64 {
        (self.c * m as f64 * self.sigma2).max(self.budget_floor)
    }
}

#[derive(Debug, Clone)]
pub struct Rank1Factors {
    /// `σ₁ · U[:, 1]`.
    pub s_hat: DVector<Complex64>,
    /// `V[:, 1]`, unit norm.
    pub alpha_hat: DVector<Complex64>,
    pub sigma1: f64,
    /// `σ₁² / Σ σᵢ²`.
    pub energy_ratio: f64,
    pub singular_values: Vec<f64>,
}

/// Leading singular triplet of `z_hat`, so that `s_hat · alpha_hatᴴ` is its
/// best rank-1 approximation. Equal leading singular values make the pair
/// non-unique; whichever the SVD returns is used.
pub fn rank1_factorize(z_hat: &DMatrix<Complex64>) -> Result<Rank1Factors> {
    if z_hat.is_empty() || z_hat.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
        return Err(Error::DegenerateSolution);
    }
    let svd = SVD::try_new(z_hat.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD returned no singular vectors".into())),
    };
    let sv = &svd.singular_values;
    let lead = (0..sv.len()).max_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap_or(0);
    let sigma1 = sv[lead];
    if !(sigma1 > 0.0) {
        return Err(Error::DegenerateSolution);
    }
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut singular_values: Vec<f64> = sv.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(Rank1Factors {
        s_hat: u.column(lead) * Complex64::new(sigma1, 0.0),
        alpha_hat: v_t.row(lead).adjoint(),
        sigma1,
        energy_ratio: (sigma1 * sigma1 / total).clamp(0.0, 1.0),
        singular_values,
    })
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Removes the circular mean from a set of phases and wraps the result.
///
/// Only phase differences are identifiable. Subtracting the circular mean
/// picks a representative that does not move when every phase is shifted by
/// the same amount; if the unit phasors sum to zero the arithmetic mean is
/// used instead.
pub fn center_phases(phases: &[f64]) -> Vec<f64> {
    if phases.is_empty() {
        return Vec::new();
    }
    let sum: Complex64 = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).sum();
    let reference = if sum.norm() > 1e-9 * phases.len() as f64 {
        sum.arg()
    } else {
        phases.iter().sum::<f64>() / phases.len() as f64
    };
    phases.iter().map(|&p| wrap_phase(p - reference)).collect()
}

/// Largest wrapped difference between two phase vectors.
pub fn phase_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_phase(x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    /// Centred phases in `(-π, π]`.
    pub phases: Vec<f64>,
}

/// `φ̂_ℓ = ∠α̂_ℓ`, centred.
pub fn estimate_phases(factors: &Rank1Factors) -> Result<PhaseEstimate> {
    for (ell, a) in factors.alpha_hat.iter().enumerate() {
        if a.norm() < PHASE_MAGNITUDE_FLOOR {
            return Err(Error::PhaseUndetermined {
                subarray: ell,
                magnitude: a.norm(),
            });
        }
    }
    let raw: Vec<f64> = factors.alpha_hat.iter().map(|a| a.arg()).collect();
    Ok(PhaseEstimate {
        phases: center_phases(&raw),
    })
}

/// Stacks `e^{jφ̂_ℓ} x_ℓ` over the sub-arrays.
pub fn phase_correct(snapshot: &Snapshot, phases: &PhaseEstimate) -> Result<DVector<Complex64>> {
    if phases.phases.len() != snapshot.num_subarrays() {
        return Err(Error::Dimension(format!(
            "{} phases for {} sub-arrays",
            phases.phases.len(),
            snapshot.num_subarrays()
        )));
    }
    let total = snapshot.observations.iter().map(|x| x.len()).sum();
    Ok(DVector::from_iterator(
        total,
        snapshot
            .observations
            .iter()
            .zip(&phases.phases)
            .flat_map(|(x, &phi)| {
                let rot = Complex64::from_polar(1.0, phi);
                x.iter().map(move |v| v * rot)
            }),
    ))
}

/// Magnitude spectrum over the grid with its selected peaks.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    pub grid_degrees: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// `(angle, magnitude)` sorted by angle, at most `q` entries.
    pub peaks: Vec<(f64, f64)>,
    pub shortfall: bool,
    pub method: Method,
    /// Solver reports, in call order.
    pub diagnostics: Vec<SolverDiagnostics>,
    /// Phase estimate used for correction (Proposed2 only).
    pub phases: Option<PhaseEstimate>,
    /// Fraction of the lifted solution's energy in its leading singular pair.
    pub energy_ratio: Option<f64>,
}

impl SpectrumEstimate {
    pub(crate) fn from_magnitudes(method: Method, grid: &[f64], magnitudes: Vec<f64>, q: usize) -> Self {
        let picked = pick_peaks(&magnitudes, grid, q);
        Self {
            grid_degrees: grid.to_vec(),
            magnitudes,
            peaks: picked.peaks,
            shortfall: picked.shortfall,
            method,
            diagnostics: Vec::new(),
            phases: None,
            energy_ratio: None,
        }
    }

    /// Peak angles in ascending order.
    pub fn doas(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.0).collect()
    }

    /// Peaks chosen by relative height instead of a fixed count.
    pub fn threshold_peaks(&self, zeta: f64) -> Vec<(f64, f64)> {
        pick_peaks_threshold(&self.magnitudes, &self.grid_degrees, zeta)
    }

    /// `angle,magnitude` rows with a header; values round-trip exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "angle,magnitude")?;
        for (a, m) in self.grid_degrees.iter().zip(&self.magnitudes) {
            writeln!(out, "{a:?},{m:?}")?;
        }
        Ok(())
    }
}

pub(crate) fn check_q(q: usize) -> Result<()> {
    if q == 0 {
        return Err(Error::config("q", "at least one source must be requested"));
    }
    Ok(())
}

fn observed_elements(snapshot: &Snapshot) -> usize {
    snapshot.observations.iter().map(|x| x.len()).sum()
}

/// Lifted solve and rank-1 split shared by Proposed1, Proposed2 and SparsityOnly.
pub(crate) fn lifted_factors(
    snapshot: &Snapshot,
    manifold: &GridManifold,
    params: &EstimatorParams,
    opts: &SolverOptions,
) -> Result<(Rank1Factors, SolverDiagnostics)> {
    params.validate()?;
    let problem = LiftedProblem {
        dictionaries: &manifold.per_subarray,
        observations: &snapshot.observations,
        mu: params.mu,
        noise_budget: params.noise_budget(observed_elements(snapshot)),
    };
    let solution = solve_lifted(&problem, opts)?;
    let factors = rank1_factorize(&solution.z_hat)?;
    Ok((factors, solution.diagnostics))
}

pub(crate) fn spectrum_from_lifted(
    method: Method,
    snapshot: &Snapshot,
    manifold: &GridManifold,
    params: &EstimatorParams,
    q: usize,
    opts: &SolverOptions,
) -> Result<SpectrumEstimate> {
    check_q(q)?;
    let (factors, diag) = lifted_factors(snapshot, manifold, params, opts)?;
    Ok(spectrum_from_factors(method, &factors, diag, manifold, q))
}

/// Spectrum `|ŝ|` of an already factored lifted solution.
pub(crate) fn spectrum_from_factors(
    method: Method,
    factors: &Rank1Factors,
    diag: SolverDiagnostics,
    manifold: &GridManifold,
    q: usize,
) -> SpectrumEstimate {
    let mags = factors.s_hat.iter().map(|c| c.norm()).collect();
    let mut est = SpectrumEstimate::from_magnitudes(method, &manifold.grid_degrees, mags, q);
    est.diagnostics.push(diag);
    est.energy_ratio = Some(factors.energy_ratio);
    est
}

/// Phase correction and coherent L1 recovery from an already factored lifted solution.
pub(crate) fn proposed2_from_factors(
    snapshot: &Snapshot,
    factors: &Rank1Factors,
    lifted_diag: SolverDiagnostics,
    manifold: &GridManifold,
    params: &EstimatorParams,
    q: usize,
    opts: &SolverOptions,
) -> Result<SpectrumEstimate> {
    let phases = estimate_phases(factors)?;
    let corrected = phase_correct(snapshot, &phases)?;
    let budget = params.noise_budget(corrected.len());
    let l1 = solve_l1(&manifold.stacked, &corrected, budget, opts)?;
    let mags = l1.s_hat.iter().map(|c| c.norm()).collect();
    let mut est = SpectrumEstimate::from_magnitudes(Method::Proposed2, &manifold.grid_degrees, mags, q);
    est.diagnostics.push(lifted_diag);
    est.diagnostics.push(l1.diagnostics);
    est.phases = Some(phases);
    est.energy_ratio = Some(factors.energy_ratio);
    Ok(est)
}

/// DOAs from the magnitude of the leading left singular vector of the lifted solution.
pub fn run_proposed1(
    snapshot: &Snapshot,
    manifold: &GridManifold,
    params: &EstimatorParams,
    q: usize,
    opts: &SolverOptions,
) -> Result<SpectrumEstimate> {
    spectrum_from_lifted(Method::Proposed1, snapshot, manifold, params, q, opts)
}

/// Phase estimates from the lifted solution, then coherent L1 recovery on the
/// phase-corrected stacked observations with the same budget rule.
pub fn run_proposed2(
    snapshot: &Snapshot,
    manifold: &GridManifold,
    params: &EstimatorParams,
    q: usize,
    opts: &SolverOptions,
) -> Result<SpectrumEstimate> {
    check_q(q)?;
    let (factors, diag) = lifted_factors(snapshot, manifold, params, opts)?;
    proposed2_from_factors(snapshot, &factors, diag, manifold, params, q, opts)
}
