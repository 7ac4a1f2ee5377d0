//! Majorize-minimize solver for robust regression with learned weights,
//! low-rank residual structure, and nonnegative coefficients.
//!
//! The target problem is
//!
//! ```text
//! min_{x >= 0, e}   loss_gc(e) + lambda1 * rank_surrogate(reshape(e)) + lambda2 * ||x||^2
//! s.t.              y = D x + e
//! ```
//!
//! where `loss_gc` is the bounded kernel loss of [`crate::gc`] and the rank
//! surrogate of [`crate::lowrank`] acts on the residual vector reshaped
//! (row-major) to the dictionary's image shape. Each outer iteration
//! majorizes the loss by a weighted quadratic (weights from the current
//! residual) and runs one sweep of an alternating-direction method of
//! multipliers on the split
//!
//! ```text
//! y = D x + e        (multiplier v1, penalty rho1)
//! x = h, h >= 0      (multiplier v2, penalty rho2)
//! ```
//!
//! Sweep order per iteration: refresh weights from the previous residual,
//! then `e`, `h`, `x`, and finally both multipliers. The `e`-update has two
//! stages: the closed-form minimizer of the weighted quadratic, followed by
//! one kernel-weighted singular-value shrinkage of its reshaped image form
//! (a heuristic composition — the pair is not a joint proximal map, so the
//! shrinkage offset is absorbed by the multipliers over iterations).
//!
//! The `n x n` normal matrix `rho1 D^T D + rho2 I` is formed and factored
//! once per [`Solver`] and reused by every iteration of every solve.

use std::sync::atomic::{AtomicU32, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::classifier::Dictionary;
use crate::error::{Error, Result};
use crate::gc::{gaussian_weights, irgsc_weights, logistic_weights, GcParams};
use crate::image::{matrix_to_vec_row_major, vec_to_matrix_row_major};
use crate::lowrank::{rank_weights_gc, rank_weights_logsum, shrink, svd};

/// Per-coordinate weight rule applied to the residual at the top of each
/// iteration. `Gc` is the model's own rule; the others exist so ablation
/// runs can swap in the weighting schemes of competing robust-regression
/// methods without touching the solver.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Kernel-derived adaptive weights ([`GcParams::gc_weights`]).
    Gc(GcParams),
    /// Gaussian kernel `exp(-e^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
    /// Logistic rule `exp(gamma (theta - e^2)) / (1 + exp(beta (theta - e^2)))`.
    Logistic { gamma: f64, beta: f64, theta: f64 },
    /// Water-filling weights on the probability simplex.
    Irgsc { gamma: f64 },
    /// Constant weight 1 — plain (unweighted) least squares.
    Uniform,
}

/// Singular-value shrinkage applied to the reshaped residual in the second
/// stage of the `e`-update.
#[derive(Debug, Clone, PartialEq)]
pub enum RankRule {
    /// Kernel-weighted thresholds ([`rank_weights_gc`]).
    Gc(GcParams),
    /// Uniform threshold (nuclear-norm proximal step).
    Nuclear,
    /// Log-sum reweighting `1 / (sigma + eps)`.
    LogSum { eps: f64 },
    /// No shrinkage: the residual update stays closed-form.
    None,
}

/// How the auxiliary split variable `h` (the nonnegative copy of `x`) is
/// updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HMode {
    /// `h = max(x + v2 / rho2, 0)`: plain projection, ignoring the ridge
    /// term. This is the published update of the method this solver
    /// reproduces, kept as the default for fidelity; the ridge penalty then
    /// acts only through `lambda2`'s role in `RidgeExact` being absent —
    /// i.e. regularization is carried implicitly by the projection split.
    Projection,
    /// `h = max((rho2 x + v2) / (2 lambda2 + rho2), 0)`: exact minimizer of
    /// `lambda2 h^2 + (rho2/2)(x - h)^2 + v2 (x - h)` over `h >= 0`.
    RidgeExact,
}

/// Solver parameters. [`SolverConfig::default`] reproduces the reference
/// occlusion-experiment settings: kernel weights (1.7, 0.07), kernel rank
/// rule (1, 0.7), `lambda1 = 0.01`, `lambda2 = 1`, `rho1 = 1`, `rho2 = 0.1`,
/// 100 iterations, tolerance `1e-5`, projection `h`-update.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub weight_rule: WeightRule,
    pub rank_rule: RankRule,
    /// Scale of the low-rank shrinkage thresholds (0 disables the step).
    pub lambda1: f64,
    /// Ridge weight on the coefficients (only enters the `RidgeExact` h-update).
    pub lambda2: f64,
    /// Penalty on the fit constraint `y = D x + e`.
    pub rho1: f64,
    /// Penalty on the split constraint `x = h`.
    pub rho2: f64,
    pub max_iter: usize,
    /// Stop once [`Solver::stopping_eps`] falls to this value or below.
    pub tol: f64,
    pub h_mode: HMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            weight_rule: WeightRule::Gc(GcParams::weight_occlusion()),
            rank_rule: RankRule::Gc(GcParams::rank_default()),
            lambda1: 0.01,
            lambda2: 1.0,
            rho1: 1.0,
            rho2: 0.1,
            max_iter: 100,
            tol: 1e-5,
            h_mode: HMode::Projection,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v, strict) in [
            ("lambda1", self.lambda1, false),
            ("lambda2", self.lambda2, false),
            ("rho1", self.rho1, true),
            ("rho2", self.rho2, true),
            ("tol", self.tol, true),
        ] {
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a {} finite real, got {v}",
                    if strict { "positive" } else { "nonnegative" }
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        match &self.weight_rule {
            WeightRule::Gaussian { sigma } if !(sigma.is_finite() && *sigma > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "gaussian weight rule needs sigma > 0, got {sigma}"
                )));
            }
            WeightRule::Logistic { gamma, beta, theta }
                if !(gamma.is_finite() && beta.is_finite() && theta.is_finite()) =>
            {
                return Err(Error::InvalidParameter(
                    "logistic weight rule needs finite gamma, beta, theta".into(),
                ));
            }
            WeightRule::Irgsc { gamma } if !(gamma.is_finite() && *gamma > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "water-filling weight rule needs gamma > 0, got {gamma}"
                )));
            }
            _ => {}
        }
        if let RankRule::LogSum { eps } = self.rank_rule {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "log-sum rank rule needs eps > 0, got {eps}"
                )));
            }
        }
        Ok(())
    }

    /// Non-fatal observations about parameter choices outside the ranges the
    /// method was designed around. Callers (the CLI) surface these to users.
    pub fn conformance_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if let WeightRule::Gc(p) = &self.weight_rule {
            if !(p.alpha() > 1.0 && p.alpha() < 2.0) {
                notes.push(format!(
                    "data-weight kernel shape alpha = {} lies outside (1, 2), the range \
                     the weighting scheme is designed for",
                    p.alpha()
                ));
            }
        }
        notes
    }
}

/// All iterates of one solve. Fields are public so the update steps can be
/// driven and inspected individually in tests and diagnostics.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Completed iterations.
    pub iter: usize,
    /// Observation vector (fixed during the solve).
    pub y: DVector<f64>,
    /// Current data weights (refreshed from `e` at the top of each iteration).
    pub w: DVector<f64>,
    pub e: DVector<f64>,
    pub x: DVector<f64>,
    pub h: DVector<f64>,
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    /// Singular values of the reshaped residual after the latest shrinkage,
    /// if the rank rule computed them this iteration.
    pub sigma_e: Option<Vec<f64>>,
    /// Decompositions performed so far in this solve.
    pub svd_count: usize,
}

/// The five optimality diagnostics reported at termination, each an l2 norm:
///
/// * `primal_fit` — `||y - D x - e||`;
/// * `primal_split` — `||x - h||`;
/// * `error_stationarity` — `||(2w + rho1) .* e - v1 - rho1 (y - D x)||`.
///   Note the sign: this is the system the closed-form `e`-update actually
///   solves (moving `v1 + rho1 (y - D x)` to the right-hand side), so it
///   vanishes at a fixed point of that update;
/// * `split_projection` — `||h - max(x + v2 / rho2, 0)||`;
/// * `coeff_stationarity` — `||(rho1 D^T D + rho2 I) x - rho1 D^T (y - e) - D^T v1 - rho2 h + v2||`.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub primal_fit: f64,
    pub primal_split: f64,
    pub error_stationarity: f64,
    pub split_projection: f64,
    pub coeff_stationarity: f64,
}

impl KktResiduals {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.primal_fit,
            self.primal_split,
            self.error_stationarity,
            self.split_projection,
            self.coeff_stationarity,
        ]
    }

    pub fn max(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, &v| m.max(v))
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    /// `||y - D x - e||`.
    pub r1: f64,
    /// `||x - h||`.
    pub r2: f64,
    /// Stopping measure at this iteration (see [`Solver::stopping_eps`]).
    pub eps: f64,
    /// `||x||` at this iteration, stored so `eps` can be recomputed from the
    /// trace alone.
    pub x_norm: f64,
    pub kkt: KktResiduals,
    /// Majorized objective: `sum_j w_j e_j^2 + lambda1 * rank_term + lambda2 ||h||^2`,
    /// where `rank_term` is the active rule's penalty at the current shrunk
    /// singular values (0 when the rank step is off).
    pub surrogate_obj: f64,
}

/// Operation counts kept to pin down the per-solve cost profile.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    /// Singular-value decompositions across the solve (at most one per iteration).
    pub svd_count: usize,
    /// Times the `n x n` normal matrix was formed since [`Solver`] creation —
    /// stays 1 no matter how many solves or iterations ran.
    pub normal_matrix_builds: u32,
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Final coefficients (nonnegative up to the stopping tolerance).
    pub x: DVector<f64>,
    /// Final residual estimate.
    pub e: DVector<f64>,
    /// Final data weights — the learned per-coordinate confidence map.
    pub w: DVector<f64>,
    /// Final nonnegative split copy of `x` (exactly `>= 0`).
    pub h: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final stopping measure.
    pub eps: f64,
    pub kkt: KktResiduals,
    pub y_norm: f64,
    pub trace: Vec<IterRecord>,
    pub stats: SolveStats,
}

/// Reusable solve engine for one dictionary + configuration. Construction
/// validates the configuration, forms the normal matrix once, and factors it;
/// [`Solver::solve`] then reuses the factorization for every observation,
/// which is what makes batch evaluation over many test samples cheap.
#[derive(Debug)]
pub struct Solver<'a> {
    dict: &'a Dictionary,
    config: SolverConfig,
    chol: Cholesky<f64, Dyn>,
    normal_builds: AtomicU32,
}

impl<'a> Solver<'a> {
    pub fn new(dict: &'a Dictionary, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let d = dict.columns();
        let n = d.ncols();
        let normal = d.transpose() * d * config.rho1 + DMatrix::identity(n, n) * config.rho2;
        let chol = Cholesky::new(normal).ok_or_else(|| {
            Error::LinearSolve(format!(
                "normal matrix (rho1 D^T D + rho2 I, n = {n}) is not positive definite; \
                 rho1 = {}, rho2 = {}",
                config.rho1, config.rho2
            ))
        })?;
        Ok(Solver { dict, config, chol, normal_builds: AtomicU32::new(1) })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    /// Fresh state for observation `y`: `e = y`, `x = 1/n`, `h = 0`,
    /// multipliers zero, weights already refreshed from `e`.
    pub fn init_state(&self, y: DVector<f64>) -> Result<SolverState> {
        let m = self.dict.columns().nrows();
        let n = self.dict.columns().ncols();
        if y.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "observation length {} does not match dictionary rows {m}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation vector".into()));
        }
        let mut state = SolverState {
            iter: 0,
            e: y.clone(),
            y,
            w: DVector::repeat(m, 1.0),
            x: DVector::repeat(n, 1.0 / n as f64),
            h: DVector::zeros(n),
            v1: DVector::zeros(m),
            v2: DVector::zeros(n),
            sigma_e: None,
            svd_count: 0,
        };
        self.refresh_weights(&mut state)?;
        Ok(state)
    }

    /// Recompute the data weights from the current residual.
    pub fn refresh_weights(&self, state: &mut SolverState) -> Result<()> {
        let e = state.e.as_slice();
        let w = match &self.config.weight_rule {
            WeightRule::Gc(p) => p.gc_weights(e),
            WeightRule::Gaussian { sigma } => gaussian_weights(e, *sigma)?,
            WeightRule::Logistic { gamma, beta, theta } => {
                logistic_weights(e, *gamma, *beta, *theta)
            }
            WeightRule::Irgsc { gamma } => irgsc_weights(e, *gamma)?,
            WeightRule::Uniform => vec![1.0; e.len()],
        };
        state.w = DVector::from_vec(w);
        Ok(())
    }

    /// Residual update. Stage 1 is the closed-form minimizer of the weighted
    /// quadratic plus the augmented fit term:
    ///
    /// ```text
    /// e_hat = (y - D x + v1 / rho1) ./ (1 + 2 w / rho1)
    /// ```
    ///
    /// Stage 2 reshapes `e_hat` to the dictionary's image shape (row-major)
    /// and applies the configured singular-value shrinkage with threshold
    /// scale `lambda1`. With `lambda1 = 0` or `RankRule::None`, stage 2 is
    /// the identity and no decomposition is computed.
    pub fn update_e(&self, state: &mut SolverState) -> Result<()> {
        let rho1 = self.config.rho1;
        let c = &state.y - self.dict.columns() * &state.x + &state.v1 / rho1;
        let e_hat =
            DVector::from_fn(c.len(), |j, _| c[j] / (1.0 + 2.0 * state.w[j] / rho1));

        if matches!(self.config.rank_rule, RankRule::None) || self.config.lambda1 == 0.0 {
            state.sigma_e = None;
            state.e = e_hat;
            return Ok(());
        }

        let (m1, m2) = self.dict.image_shape();
        let mat = vec_to_matrix_row_major(e_hat.as_slice(), m1, m2)?;
        let factors = svd(&mat)?;
        state.svd_count += 1;
        let tau = self.config.lambda1;
        let thresholds: Vec<f64> = match &self.config.rank_rule {
            RankRule::Gc(p) => {
                rank_weights_gc(&factors.sigma, p).iter().map(|w| w * tau).collect()
            }
            RankRule::Nuclear => vec![tau; factors.sigma.len()],
            RankRule::LogSum { eps } => rank_weights_logsum(&factors.sigma, *eps)?
                .iter()
                .map(|w| w * tau)
                .collect(),
            RankRule::None => unreachable!("handled above"),
        };
        let (shrunk_mat, shrunk_sigma) = shrink(&factors, &thresholds)?;
        state.sigma_e = Some(shrunk_sigma);
        state.e = DVector::from_vec(matrix_to_vec_row_major(&shrunk_mat));
        Ok(())
    }

    /// Split-variable update (both variants are evaluated at the *current*
    /// `x`, i.e. before this iteration's coefficient update).
    pub fn update_h(&self, state: &mut SolverState) {
        let rho2 = self.config.rho2;
        state.h = match self.config.h_mode {
            HMode::Projection => {
                DVector::from_fn(state.x.len(), |i, _| (state.x[i] + state.v2[i] / rho2).max(0.0))
            }
            HMode::RidgeExact => {
                let denom = 2.0 * self.config.lambda2 + rho2;
                DVector::from_fn(state.x.len(), |i, _| {
                    ((rho2 * state.x[i] + state.v2[i]) / denom).max(0.0)
                })
            }
        };
    }

    /// Coefficient update: solve
    /// `(rho1 D^T D + rho2 I) x = rho1 D^T (y - e + v1 / rho1) + rho2 (h - v2 / rho2)`
    /// with the factorization computed at construction.
    pub fn update_x(&self, state: &mut SolverState) {
        let rho1 = self.config.rho1;
        let rho2 = self.config.rho2;
        let rhs = self.dict.columns().transpose() * ((&state.y - &state.e) * rho1 + &state.v1)
            + &state.h * rho2
            - &state.v2;
        state.x = self.chol.solve(&rhs);
    }

    /// Gradient-ascent step on both multipliers.
    pub fn update_duals(&self, state: &mut SolverState) {
        let fit = &state.y - self.dict.columns() * &state.x - &state.e;
        state.v1 += fit * self.config.rho1;
        let split = &state.x - &state.h;
        state.v2 += split * self.config.rho2;
    }

    /// Stopping measure: the larger of the two primal residuals, each
    /// relative to its own scale,
    ///
    /// ```text
    /// eps = max(||y - D x - e|| / max(||y||, 1), ||x - h|| / max(||x||, 1))
    /// ```
    ///
    /// The `max(., 1)` guards keep the measure defined at `y = 0` / `x = 0`.
    pub fn stopping_eps(&self, state: &SolverState) -> f64 {
        let r1 = (&state.y - self.dict.columns() * &state.x - &state.e).norm();
        let r2 = (&state.x - &state.h).norm();
        let y_scale = state.y.norm().max(1.0);
        let x_scale = state.x.norm().max(1.0);
        (r1 / y_scale).max(r2 / x_scale)
    }

    /// The five optimality diagnostics at the given state (see
    /// [`KktResiduals`] for the exact expressions and the sign convention of
    /// the error-stationarity term).
    pub fn kkt_residuals(&self, state: &SolverState) -> KktResiduals {
        let d = self.dict.columns();
        let rho1 = self.config.rho1;
        let rho2 = self.config.rho2;
        let dx = d * &state.x;
        let fit = &state.y - &dx - &state.e;

        let err_stat = DVector::from_fn(state.e.len(), |j, _| {
            (2.0 * state.w[j] + rho1) * state.e[j] - state.v1[j] - rho1 * (state.y[j] - dx[j])
        });
        let proj = DVector::from_fn(state.h.len(), |i, _| {
            state.h[i] - (state.x[i] + state.v2[i] / rho2).max(0.0)
        });
        // (rho1 D^T D + rho2 I) x - rho1 D^T (y - e) - D^T v1 - rho2 h + v2,
        // evaluated without re-forming the normal matrix.
        let coeff_stat = d.transpose() * ((&dx - &state.y + &state.e) * rho1 - &state.v1)
            + &state.x * rho2
            - &state.h * rho2
            + &state.v2;

        KktResiduals {
            primal_fit: fit.norm(),
            primal_split: (&state.x - &state.h).norm(),
            error_stationarity: err_stat.norm(),
            split_projection: proj.norm(),
            coeff_stationarity: coeff_stat.norm(),
        }
    }

    /// Monitoring value recorded per iteration (see [`IterRecord`]).
    fn surrogate_objective(&self, state: &SolverState) -> f64 {
        let data_term: f64 =
            state.w.iter().zip(state.e.iter()).map(|(&w, &e)| w * e * e).sum();
        let rank_term = match (&self.config.rank_rule, &state.sigma_e) {
            (RankRule::Gc(p), Some(sigma)) => rank_weights_gc(sigma, p)
                .iter()
                .zip(sigma)
                .map(|(w, s)| w * s)
                .sum::<f64>(),
            (RankRule::Nuclear, Some(sigma)) => sigma.iter().sum::<f64>(),
            (RankRule::LogSum { eps }, Some(sigma)) => {
                sigma.iter().map(|&s| (1.0 + s / eps).ln()).sum::<f64>()
            }
            _ => 0.0,
        };
        data_term + self.config.lambda1 * rank_term + self.config.lambda2 * state.h.norm_squared()
    }

    /// Run the full loop on observation `y`.
    pub fn solve(&self, y: &DVector<f64>) -> Result<Solution> {
        let mut state = self.init_state(y.clone())?;
        let y_norm = state.y.norm();
        let mut trace = Vec::with_capacity(self.config.max_iter);
        let mut converged = false;

        for t in 1..=self.config.max_iter {
            self.refresh_weights(&mut state)?;
            self.update_e(&mut state)?;
            self.update_h(&mut state);
            self.update_x(&mut state);
            self.update_duals(&mut state);
            state.iter = t;

            let kkt = self.kkt_residuals(&state);
            let x_norm = state.x.norm();
            let eps = (kkt.primal_fit / y_norm.max(1.0)).max(kkt.primal_split / x_norm.max(1.0));
            trace.push(IterRecord {
                iter: t,
                r1: kkt.primal_fit,
                r2: kkt.primal_split,
                eps,
                x_norm,
                kkt,
                surrogate_obj: self.surrogate_objective(&state),
            });
            if eps <= self.config.tol {
                converged = true;
                break;
            }
        }

        let last = trace.last().expect("max_iter >= 1 guarantees one iteration");
        Ok(Solution {
            eps: last.eps,
            kkt: last.kkt,
            iterations: state.iter,
            converged,
            y_norm,
            stats: SolveStats {
                iterations: state.iter,
                svd_count: state.svd_count,
                normal_matrix_builds: self.normal_builds.load(Ordering::Relaxed),
            },
            x: state.x,
            e: state.e,
            w: state.w,
            h: state.h,
            trace,
        })
    }
}

/// One-shot convenience: build a [`Solver`] for `dict` + `config` and solve
/// for `y`. Batch callers should hold a [`Solver`] instead so the normal
/// matrix is factored once.
pub fn solve(y: &DVector<f64>, dict: &Dictionary, config: &SolverConfig) -> Result<Solution> {
    Solver::new(dict, config.clone())?.solve(y)
}
