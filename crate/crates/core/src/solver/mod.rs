//! First-order solver for the lifted joint row-sparse / low-rank recovery
//! program and for the constrained L1 program used after phase correction.
//!
//! Both problems share one ADMM core. The lifted program
//!
//! ```text
//! minimise ‖Z‖₁,₂ + μ‖Z‖*   subject to   Σ_ℓ ‖x_ℓ - A_ℓ Z[:, ℓ]‖² ≤ ε²
//! ```
//!
//! is split into a consensus variable `X` and three proximal blocks: a
//! row-group copy `Z = X`, a nuclear copy `W = X` (absent when `μ = 0`) and
//! a residual `r_ℓ = x_ℓ - A_ℓ X[:, ℓ]` constrained to the ε-ball. The
//! `X`-update solves `(κI + A_ℓᴴA_ℓ) x = b` per column, where `κ` counts the
//! consensus copies; because every block carries the same penalty the
//! system does not depend on ρ and is factored once. The L1 program is the
//! single-column instance with the stacked dictionary.

mod prox;

pub use prox::{mixed_norm_12, nuclear_norm, prox_nuclear, prox_row_group};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{GridManifold, Snapshot};
use crate::error::{Error, Result};
use prox::{prox_nuclear_with_norm, prox_row_group_in_place, ResidualProjector};

/// Data and weights of the lifted program.
#[derive(Debug, Clone)]
pub struct LiftedProblem<'a> {
    pub dictionaries: &'a [DMatrix<Complex64>],
    pub observations: &'a [DVector<Complex64>],
    /// Nuclear-norm weight μ; zero drops the low-rank term.
    pub mu: f64,
    /// Squared residual radius `ε² = C·M·σ²`.
    pub noise_budget: f64,
}

impl<'a> LiftedProblem<'a> {
    /// Problem for one snapshot with `ε² = C·M·σ²`.
    pub fn new(
        manifold: &'a GridManifold,
        snapshot: &'a Snapshot,
        mu: f64,
        c: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let m: usize = snapshot.observations.iter().map(|x| x.len()).sum();
        let p = Self {
            dictionaries: &manifold.per_subarray,
            observations: &snapshot.observations,
            mu,
            noise_budget: c * m as f64 * sigma2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config("mu", "nuclear-norm weight must be finite and non-negative"));
        }
        if !(self.noise_budget >= 0.0) {
            return Err(Error::config("noise_budget", "budget must be non-negative"));
        }
        if self.dictionaries.is_empty() || self.dictionaries.len() != self.observations.len() {
            return Err(Error::Dimension(format!(
                "{} dictionaries for {} observation blocks",
                self.dictionaries.len(),
                self.observations.len()
            )));
        }
        let n = self.dictionaries[0].ncols();
        for (ell, (a, x)) in self.dictionaries.iter().zip(self.observations).enumerate() {
            if a.ncols() != n || a.nrows() != x.len() {
                return Err(Error::Dimension(format!(
                    "block {ell}: dictionary {}x{} vs observation length {} (grid {n})",
                    a.nrows(),
                    a.ncols(),
                    x.len()
                )));
            }
        }
        Ok(())
    }

    pub fn grid_len(&self) -> usize {
        self.dictionaries[0].ncols()
    }

    pub fn num_blocks(&self) -> usize {
        self.dictionaries.len()
    }

    /// `‖Z‖₁,₂ + μ‖Z‖*`.
    pub fn objective(&self, z: &DMatrix<Complex64>) -> Result<f64> {
        let mut obj = mixed_norm_12(z);
        if self.mu > 0.0 {
            obj += self.mu * nuclear_norm(z)?;
        }
        Ok(obj)
    }

    /// `Σ_ℓ ‖x_ℓ - A_ℓ Z[:, ℓ]‖²`.
    pub fn residual_energy(&self, z: &DMatrix<Complex64>) -> f64 {
        self.dictionaries
            .iter()
            .zip(self.observations)
            .enumerate()
            .map(|(ell, (a, x))| (x - a * z.column(ell)).norm_squared())
            .sum()
    }
}

/// Closest point (Frobenius) to `z` whose stacked residual lies in the noise ball.
pub fn project_residual_ball(
    z: &DMatrix<Complex64>,
    problem: &LiftedProblem<'_>,
) -> Result<DMatrix<Complex64>> {
    problem.validate()?;
    if z.shape() != (problem.grid_len(), problem.num_blocks()) {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, problem expects {}x{}",
            z.nrows(),
            z.ncols(),
            problem.grid_len(),
            problem.num_blocks()
        )));
    }
    let dicts: Vec<&DMatrix<Complex64>> = problem.dictionaries.iter().collect();
    let obs: Vec<&DVector<Complex64>> = problem.observations.iter().collect();
    Ok(ResidualProjector::new(&dicts)
        .project(&dicts, &obs, z, problem.noise_budget)
        .0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Initial ADMM penalty ρ.
    pub penalty: f64,
    /// Relative primal residual tolerance.
    pub primal_tol: f64,
    /// Relative dual residual tolerance.
    pub dual_tol: f64,
    /// Allowed relative overshoot of the residual budget in the returned point.
    pub feasibility_tol: f64,
    /// Residual balancing: rescale ρ by `penalty_factor` when the residual ratio exceeds `balance_ratio`.
    pub adaptive_penalty: bool,
    pub penalty_factor: f64,
    pub balance_ratio: f64,
    /// Stop when the objective moves less than this (relative) over `stagnation_window` iterations.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    /// Residuals, convergence and penalty adaptation are evaluated every this many iterations.
    pub check_interval: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            penalty: 1.0,
            primal_tol: 1e-6,
            dual_tol: 1e-6,
            feasibility_tol: 1e-4,
            adaptive_penalty: true,
            penalty_factor: 2.0,
            balance_ratio: 10.0,
            stagnation_tol: 1e-12,
            stagnation_window: 50,
            relaxation: 1.6,
            check_interval: 10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solver.penalty", self.penalty),
            ("solver.primal_tol", self.primal_tol),
            ("solver.dual_tol", self.dual_tol),
            ("solver.feasibility_tol", self.feasibility_tol),
            ("solver.stagnation_tol", self.stagnation_tol),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::config("solver.relaxation", "must lie in (0, 2)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("solver.max_iterations", "must be at least 1"));
        }
        if !(self.penalty_factor > 1.0) || !(self.balance_ratio > 1.0) {
            return Err(Error::config(
                "solver.penalty_factor",
                "penalty factor and balance ratio must exceed 1",
            ));
        }
        Ok(())
    }

    /// Same options with primal and dual tolerances scaled by `factor`.
    pub fn with_tolerance_scale(mut self, factor: f64) -> Self {
        self.primal_tol *= factor;
        self.dual_tol *= factor;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Zero is feasible, hence optimal; no iterations run.
    TrivialZero,
    Stagnated,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    /// Squared residual `Σ‖x_ℓ - A_ℓ ẑ_ℓ‖²` of the returned point.
    pub constraint_residual: f64,
    pub noise_budget: f64,
    pub final_penalty: f64,
}

impl SolverDiagnostics {
    pub fn converged(&self) -> bool {
        matches!(self.status, SolveStatus::Converged | SolveStatus::TrivialZero)
    }

    pub fn feasible(&self, feasibility_tol: f64) -> bool {
        self.constraint_residual <= self.noise_budget * (1.0 + feasibility_tol)
    }
}

#[derive(Debug, Clone)]
pub struct LiftedSolution {
    /// `N_θ × L` estimate.
    pub z_hat: DMatrix<Complex64>,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub s_hat: DVector<Complex64>,
    pub diagnostics: SolverDiagnostics,
}

/// Solves the lifted program `min ‖Z‖₁,₂ + μ‖Z‖*` under the residual budget.
pub fn solve_lifted(problem: &LiftedProblem<'_>, opts: &SolverOptions) -> Result<LiftedSolution> {
    problem.validate()?;
    opts.validate()?;
    let dicts: Vec<&DMatrix<Complex64>> = problem.dictionaries.iter().collect();
    let obs: Vec<&DVector<Complex64>> = problem.observations.iter().collect();
    let (z_hat, diagnostics) = Admm::new(dicts, obs, problem.mu, problem.noise_budget)?.run(opts)?;
    Ok(LiftedSolution { z_hat, diagnostics })
}

/// Solves `min ‖s‖₁` subject to `‖x - A s‖² ≤ noise_budget`.
pub fn solve_l1(
    a: &DMatrix<Complex64>,
    x: &DVector<Complex64>,
    noise_budget: f64,
    opts: &SolverOptions,
) -> Result<L1Solution> {
    opts.validate()?;
    if a.nrows() != x.len() {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows, observation length {}",
            a.nrows(),
            x.len()
        )));
    }
    if !(noise_budget >= 0.0) {
        return Err(Error::config("noise_budget", "budget must be non-negative"));
    }
    let (z, diagnostics) = Admm::new(vec![a], vec![x], 0.0, noise_budget)?.run(opts)?;
    Ok(L1Solution {
        s_hat: z.column(0).into_owned(),
        diagnostics,
    })
}

/// Per-block factorisation for the consensus update
/// `(κI + AᴴA) x = b₀ + Aᴴ v`.
///
/// By Woodbury, with `t = (κI + AAᴴ)⁻¹ (A b₀ + AAᴴ v)` the solution is
/// `x = (b₀ + Aᴴ (v - t)) / κ` and, as a by-product, `A x = t`.
struct BlockSystem {
    /// `Aᴴ`, stored so that both products run over contiguous columns.
    a_h: DMatrix<Complex64>,
    gram: DMatrix<Complex64>,
    kappa: f64,
    chol: Cholesky<Complex64, Dyn>,
}

impl BlockSystem {
    fn new(a: &DMatrix<Complex64>, kappa: f64) -> Result<Self> {
        let m = a.nrows();
        let gram = a * a.adjoint();
        let shifted = &gram + DMatrix::<Complex64>::identity(m, m) * Complex64::new(kappa, 0.0);
        let chol = Cholesky::new(shifted)
            .ok_or_else(|| Error::Numerical("Cholesky factorisation of κI + AAᴴ failed".into()))?;
        Ok(Self {
            a_h: a.adjoint(),
            gram,
            kappa,
            chol,
        })
    }

    /// Returns `(x, A x)`.
    fn solve(&self, b0: &DVector<Complex64>, v: &DVector<Complex64>) -> (DVector<Complex64>, DVector<Complex64>) {
        let rhs = self.a_h.ad_mul(b0) + &self.gram * v;
        let t = self.chol.solve(&rhs);
        let mut x = &self.a_h * (v - &t);
        x += b0;
        x.scale_mut(1.0 / self.kappa);
        (x, t)
    }

    /// `Aᴴ u`.
    fn adjoint_apply(&self, u: &DVector<Complex64>) -> DVector<Complex64> {
        &self.a_h * u
    }
}

struct Admm {
    // Dictionaries and data divided by `scale`, the largest block spectral norm,
    // so that the data-fit constraint and the consensus constraints are balanced.
    dicts: Vec<DMatrix<Complex64>>,
    obs: Vec<DVector<Complex64>>,
    mu: f64,
    budget: f64,
    scale: f64,
    n: usize,
}

impl Admm {
    fn new(
        dicts: Vec<&DMatrix<Complex64>>,
        obs: Vec<&DVector<Complex64>>,
        mu: f64,
        budget: f64,
    ) -> Result<Self> {
        let n = dicts.first().map_or(0, |a| a.ncols());
        if n == 0 {
            return Err(Error::Dimension("empty dictionary".into()));
        }
        let scale = dicts
            .iter()
            .map(|a| spectral_norm(a))
            .fold(0.0, f64::max);
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let inv = Complex64::new(1.0 / scale, 0.0);
        Ok(Self {
            dicts: dicts.iter().map(|a| *a * inv).collect(),
            obs: obs.iter().map(|x| *x * inv).collect(),
            mu,
            budget: budget / (scale * scale),
            scale,
            n,
        })
    }

    fn objective_of(&self, z: &DMatrix<Complex64>) -> Result<f64> {
        let mut obj = mixed_norm_12(z);
        if self.mu > 0.0 {
            obj += self.mu * nuclear_norm(z)?;
        }
        Ok(obj)
    }

    fn run(&self, opts: &SolverOptions) -> Result<(DMatrix<Complex64>, SolverDiagnostics)> {
        let l = self.dicts.len();
        let n = self.n;
        let unscale = self.scale * self.scale;
        let obs_energy: f64 = self.obs.iter().map(|x| x.norm_squared()).sum();
        if obs_energy <= self.budget {
            return Ok((
                DMatrix::zeros(n, l),
                SolverDiagnostics {
                    status: SolveStatus::TrivialZero,
                    iterations: 0,
                    primal_residual: 0.0,
                    dual_residual: 0.0,
                    objective: 0.0,
                    constraint_residual: obs_energy * unscale,
                    noise_budget: self.budget * unscale,
                    final_penalty: opts.penalty,
                },
            ));
        }

        let low_rank = self.mu > 0.0;
        let kappa = if low_rank { 2.0 } else { 1.0 };
        let systems = self
            .dicts
            .iter()
            .map(|a| BlockSystem::new(a, kappa))
            .collect::<Result<Vec<_>>>()?;
        let radius = self.budget.sqrt();
        let obs_norm = obs_energy.sqrt();
        let alpha = opts.relaxation;
        let beta = 1.0 - alpha;

        let mut st = State::new(n, &self.obs);
        let mut rho = opts.penalty;
        let mut history: Vec<f64> = Vec::with_capacity(opts.max_iterations.min(1 << 16));
        let mut status = SolveStatus::NotConverged;
        let mut iterations = 0;
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut loose_feasibility = false;
        let check_every = opts.check_interval.max(1);
        let mut z_old = DMatrix::<Complex64>::zeros(n, l);
        let mut w_old = DMatrix::<Complex64>::zeros(n, l);
        let mut r_old: Vec<DVector<Complex64>> = st.r.clone();

        for it in 0..opts.max_iterations {
            iterations = it + 1;
            let check = iterations % check_every == 0 || iterations == opts.max_iterations;
            if check {
                z_old.copy_from(&st.z);
                if low_rank {
                    w_old.copy_from(&st.w);
                }
                for (o, r) in r_old.iter_mut().zip(&st.r) {
                    o.copy_from(r);
                }
            }

            // Consensus update, one column per block.
            for ell in 0..l {
                let mut b0 = st.z.column(ell) - st.uz.column(ell);
                if low_rank {
                    b0 += st.w.column(ell) - st.uw.column(ell);
                }
                let v = &self.obs[ell] - &st.r[ell] - &st.ur[ell];
                let (col, a_col) = systems[ell].solve(&b0, &v);
                st.ax[ell] = a_col;
                st.x.set_column(ell, &col);
            }

            // Row-group block on the over-relaxed copy: pre = αX + βZ + U, Z = prox(pre), U = pre - Z.
            relaxed_pre(&mut st.pre, &st.x, &st.z, &st.uz, alpha, beta);
            st.z.copy_from(&st.pre);
            prox_row_group_in_place(&mut st.z, 1.0 / rho);
            st.uz.copy_from(&st.pre);
            st.uz -= &st.z;
            let mut objective = mixed_norm_12(&st.z);

            if low_rank {
                relaxed_pre(&mut st.pre, &st.x, &st.w, &st.uw, alpha, beta);
                let (w_new, nuc) = prox_nuclear_with_norm(&st.pre, self.mu / rho)?;
                st.w = w_new;
                st.uw.copy_from(&st.pre);
                st.uw -= &st.w;
                objective += self.mu * nuc;
            }

            // Residual block: q = y - (αAX + β(y - r)) - U, r = Π_ball(q), U = r - q.
            let mut q_norm_sq = 0.0;
            for ell in 0..l {
                let q = &mut st.q[ell];
                for i in 0..q.len() {
                    let y = self.obs[ell][i];
                    q[i] = y - (st.ax[ell][i] * alpha + (y - st.r[ell][i]) * beta) - st.ur[ell][i];
                }
                q_norm_sq += q.norm_squared();
            }
            let q_norm = q_norm_sq.sqrt();
            let shrink = if q_norm > radius {
                if q_norm > 0.0 {
                    radius / q_norm
                } else {
                    0.0
                }
            } else {
                1.0
            };
            for ell in 0..l {
                st.r[ell].copy_from(&st.q[ell]);
                st.r[ell].scale_mut(shrink);
                st.ur[ell].copy_from(&st.r[ell]);
                st.ur[ell] -= &st.q[ell];
            }

            history.push(objective);
            // Stagnation is only declared once the iterate is roughly feasible, so that
            // a flat objective during the initial transient does not stop the solve.
            let window = opts.stagnation_window;
            if loose_feasibility && window > 0 && it >= 4 * window {
                let past = history[it - window];
                if (objective - past).abs() <= opts.stagnation_tol * objective.abs().max(1.0) {
                    status = SolveStatus::Stagnated;
                    break;
                }
            }
            if !check {
                continue;
            }

            // Residuals of the splitting constraints X = Z, X = W, A X + r = y.
            let copies = if low_rank { 2.0 } else { 1.0 };
            let mut primal_sq = (&st.x - &st.z).norm_squared();
            let mut lhs_sq = copies * st.x.norm_squared();
            let mut rhs_sq = st.z.norm_squared();
            z_old -= &st.z;
            if low_rank {
                primal_sq += (&st.x - &st.w).norm_squared();
                rhs_sq += st.w.norm_squared();
                w_old -= &st.w;
                z_old += &w_old;
            }
            let mut dual_norm_sq = st.uz.norm_squared();
            if low_rank {
                dual_norm_sq += st.uw.norm_squared();
            }
            for ell in 0..l {
                primal_sq += (&st.ax[ell] + &st.r[ell] - &self.obs[ell]).norm_squared();
                lhs_sq += st.ax[ell].norm_squared();
                rhs_sq += st.r[ell].norm_squared();
                r_old[ell] -= &st.r[ell];
                let mut col = z_old.column_mut(ell);
                col -= systems[ell].adjoint_apply(&r_old[ell]);
                // The consensus variable has no objective term, so the summed
                // multiplier vanishes at optimality; scale by its parts instead.
                dual_norm_sq += systems[ell].adjoint_apply(&st.ur[ell]).norm_squared();
            }
            primal = primal_sq.sqrt();
            dual = rho * z_old.norm();

            let primal_scale = lhs_sq.sqrt().max(rhs_sq.sqrt()).max(obs_norm);
            let eps_primal = opts.primal_tol * primal_scale;
            let eps_dual = opts.dual_tol * rho * dual_norm_sq.sqrt();
            loose_feasibility = primal <= opts.primal_tol.sqrt() * primal_scale;
            if primal <= eps_primal && dual <= eps_dual {
                status = SolveStatus::Converged;
                break;
            }

            if opts.adaptive_penalty {
                let factor = if primal > opts.balance_ratio * dual {
                    opts.penalty_factor
                } else if dual > opts.balance_ratio * primal {
                    1.0 / opts.penalty_factor
                } else {
                    1.0
                };
                if factor != 1.0 {
                    rho *= factor;
                    st.uz.scale_mut(1.0 / factor);
                    st.uw.scale_mut(1.0 / factor);
                    st.ur.iter_mut().for_each(|u| u.scale_mut(1.0 / factor));
                }
            }
        }

        // Row-sparse iterate pushed back onto the feasible set.
        let dicts: Vec<&DMatrix<Complex64>> = self.dicts.iter().collect();
        let obs: Vec<&DVector<Complex64>> = self.obs.iter().collect();
        let projector = ResidualProjector::new(&dicts);
        let (mut z_hat, mut constraint) = projector.project(&dicts, &obs, &st.z, self.budget);
        if constraint > self.budget * (1.0 + opts.feasibility_tol) {
            // Numerically rank-deficient dictionary; keep whichever iterate lands closer.
            let (alt, alt_res) = projector.project(&dicts, &obs, &st.x, self.budget);
            if alt_res < constraint {
                z_hat = alt;
                constraint = alt_res;
            }
        }
        if !z_hat.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Numerical("solver produced non-finite iterate".into()));
        }
        let objective = self.objective_of(&z_hat)?;
        Ok((
            z_hat,
            SolverDiagnostics {
                status,
                iterations,
                primal_residual: primal,
                dual_residual: dual,
                objective,
                constraint_residual: constraint * unscale,
                noise_budget: self.budget * unscale,
                final_penalty: rho,
            },
        ))
    }
}

/// ADMM iterates and scratch buffers.
struct State {
    x: DMatrix<Complex64>,
    z: DMatrix<Complex64>,
    w: DMatrix<Complex64>,
    uz: DMatrix<Complex64>,
    uw: DMatrix<Complex64>,
    pre: DMatrix<Complex64>,
    r: Vec<DVector<Complex64>>,
    ur: Vec<DVector<Complex64>>,
    ax: Vec<DVector<Complex64>>,
    q: Vec<DVector<Complex64>>,
}

impl State {
    fn new(n: usize, obs: &[DVector<Complex64>]) -> Self {
        let l = obs.len();
        let zeros_n = DMatrix::zeros(n, l);
        let zeros_m: Vec<DVector<Complex64>> = obs.iter().map(|y| DVector::zeros(y.len())).collect();
        Self {
            x: zeros_n.clone(),
            z: zeros_n.clone(),
            w: zeros_n.clone(),
            uz: zeros_n.clone(),
            uw: zeros_n.clone(),
            pre: zeros_n,
            r: zeros_m.clone(),
            ur: zeros_m.clone(),
            ax: zeros_m.clone(),
            q: zeros_m,
        }
    }
}

/// `pre = α x + β v + u`, element-wise.
fn relaxed_pre(
    pre: &mut DMatrix<Complex64>,
    x: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    u: &DMatrix<Complex64>,
    alpha: f64,
    beta: f64,
) {
    for (((p, x), v), u) in pre
        .as_mut_slice()
        .iter_mut()
        .zip(x.as_slice())
        .zip(v.as_slice())
        .zip(u.as_slice())
    {
        *p = x * alpha + v * beta + u;
    }
}

/// Largest singular value, from the smaller Gram matrix.
fn spectral_norm(a: &DMatrix<Complex64>) -> f64 {
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v))
        .sqrt()
}
