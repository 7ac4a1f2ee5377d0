//! Generalized-correntropy error model: density, robust loss, and the
//! adaptive weight rules derived from it.
//!
//! The error model is the generalized Gaussian density
//!
//! ```text
//! G(e) = gamma * exp(-lambda * |e|^alpha)
//! lambda = 1 / beta^alpha
//! gamma  = alpha / (2 * beta * Gamma(1/alpha))
//! ```
//!
//! where `alpha` sets the tail shape (`alpha = 2` is the Gaussian with
//! `sigma = beta / sqrt(2)`, `alpha = 1` the Laplacian) and `beta` the kernel
//! bandwidth. The induced loss on a residual vector applies
//! `gamma * (1 - exp(-lambda * |.|^alpha))` per coordinate: bounded, hence
//! insensitive to gross outliers, and tunable between heavy-tailed and
//! near-quadratic behavior through `alpha`.
//!
//! Minimizing the loss by majorization replaces it with a weighted quadratic
//! whose per-coordinate weights come from the derivative of the loss with
//! respect to the squared residual; [`GcParams::gc_weights`] implements that
//! rule. Weight rules used by competing robust-regression schemes (Gaussian
//! kernel, logistic, water-filling on the simplex) are provided alongside so
//! ablations can swap the rule without touching the solver.

use crate::error::{Error, Result};

/// Clamp applied to `|e|` before evaluating weight expressions with negative
/// exponents, so zero residuals produce large-but-finite weights.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

/// Shape/bandwidth parameters of the generalized Gaussian kernel, with the
/// derived constants cached.
///
/// The struct is immutable; `lambda` and `gamma` are computed once at
/// construction so they can never drift out of sync with `alpha` and `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcParams {
    alpha: f64,
    beta: f64,
    lambda: f64,
    gamma: f64,
    weight_floor: f64,
}

impl GcParams {
    /// Build kernel parameters from shape `alpha > 0` and bandwidth `beta > 0`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel shape alpha must be a positive finite real, got {alpha}"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth beta must be a positive finite real, got {beta}"
            )));
        }
        let lambda = beta.powf(-alpha);
        let gamma = alpha / (2.0 * beta * libm::tgamma(1.0 / alpha));
        if !(lambda.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel constants overflow for alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(GcParams { alpha, beta, lambda, gamma, weight_floor: DEFAULT_WEIGHT_FLOOR })
    }

    /// Replace the residual-magnitude floor used by the weight rules.
    pub fn with_weight_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight floor must be a positive finite real, got {floor}"
            )));
        }
        self.weight_floor = floor;
        Ok(self)
    }

    /// Default data-weight kernel for block-occlusion corruption.
    pub fn weight_occlusion() -> Self {
        GcParams::new(1.7, 0.07).expect("constants are valid")
    }

    /// Default data-weight kernel for mixed pixel + occlusion corruption.
    pub fn weight_mixed() -> Self {
        GcParams::new(1.7, 0.11).expect("constants are valid")
    }

    /// Default kernel for singular-value (rank) weighting.
    pub fn rank_default() -> Self {
        GcParams::new(1.0, 0.7).expect("constants are valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `1 / beta^alpha`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Normalizing constant `alpha / (2 beta Gamma(1/alpha))`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    /// Generalized Gaussian density `gamma * exp(-lambda |e|^alpha)`.
    ///
    /// Integrates to 1 over the real line and attains its maximum `gamma`
    /// at `e = 0`.
    pub fn ggd_density(&self, e: f64) -> f64 {
        self.gamma * (-self.lambda * e.abs().powf(self.alpha)).exp()
    }

    /// Bounded robust loss of a residual vector, with magnitudes expressed
    /// relative to the largest one:
    ///
    /// ```text
    /// sum_j gamma * (1 - exp(-lambda * |e_j / max_k |e_k||^alpha))
    /// ```
    ///
    /// The sup-norm normalization makes reported losses comparable across
    /// residual scales; the solver itself works on raw magnitudes (see
    /// [`GcParams::gc_loss_raw`]). An all-zero vector has zero loss.
    pub fn gc_loss(&self, e: &[f64]) -> f64 {
        let max_abs = e.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        if max_abs == 0.0 {
            return 0.0;
        }
        e.iter()
            .map(|&x| self.gamma * (1.0 - (-self.lambda * (x.abs() / max_abs).powf(self.alpha)).exp()))
            .sum()
    }

    /// Same bounded loss on raw (unnormalized) residual magnitudes:
    /// `sum_j gamma * (1 - exp(-lambda |e_j|^alpha))`. This is the quantity
    /// the solver's majorization bounds from above.
    pub fn gc_loss_raw(&self, e: &[f64]) -> f64 {
        e.iter()
            .map(|&x| self.gamma * (1.0 - (-self.lambda * x.abs().powf(self.alpha)).exp()))
            .sum()
    }

    /// Adaptive weight of a single residual:
    ///
    /// ```text
    /// w(e) = exp(-lambda * m^alpha) * m^(alpha - 2),   m = max(|e|, weight_floor)
    /// ```
    ///
    /// This is the derivative of the loss with respect to the squared
    /// residual, up to the constant factor `gamma * lambda * alpha / 2`,
    /// which is deliberately dropped: in the solver the weights only ever
    /// appear multiplied by a tunable penalty parameter that absorbs it.
    /// The floor keeps the negative exponent finite at `e = 0` (for
    /// `alpha < 2`), so weights are always strictly positive and finite.
    pub fn gc_weight(&self, e: f64) -> f64 {
        let m = e.abs().max(self.weight_floor);
        (-self.lambda * m.powf(self.alpha)).exp() * m.powf(self.alpha - 2.0)
    }

    /// [`GcParams::gc_weight`] applied coordinate-wise.
    pub fn gc_weights(&self, e: &[f64]) -> Vec<f64> {
        e.iter().map(|&x| self.gc_weight(x)).collect()
    }
}

/// Gaussian-kernel weight rule `w(e) = exp(-e^2 / (2 sigma^2))`.
///
/// The sign convention is the one that makes weights decay with residual
/// magnitude: weights lie in `(0, 1]` with the maximum at `e = 0`.
pub fn gaussian_weights(e: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian kernel width sigma must be positive, got {sigma}"
        )));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(e.iter().map(|&x| (-x * x / denom).exp()).collect())
}

/// Logistic weight rule
///
/// ```text
/// w(e) = exp(gamma (theta - e^2)) / (1 + exp(beta (theta - e^2)))
/// ```
///
/// evaluated in log space as `exp(a - softplus(b))` with `a = gamma (theta - e^2)`
/// and `b = beta (theta - e^2)`, so no intermediate `exp` overflows; the result
/// is finite for every finite input. For `gamma = beta` this reduces to the
/// logistic sigmoid of `beta (theta - e^2)`.
pub fn logistic_weights(e: &[f64], gamma: f64, beta: f64, theta: f64) -> Vec<f64> {
    e.iter()
        .map(|&x| {
            let d = theta - x * x;
            (gamma * d - softplus(beta * d)).exp()
        })
        .collect()
}

/// Numerically stable `ln(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Water-filling weight rule on the probability simplex:
///
/// ```text
/// w_j = max(eta - e_j^2 / (2 gamma), 0)    with eta such that sum_j w_j = 1
/// ```
///
/// Larger squared residuals get less weight, the largest may be cut to zero
/// exactly, and the weights always form a probability vector. The threshold
/// `eta` is located by bisection on the monotone function
/// `eta -> sum_j max(eta - d_j, 0)`; an all-equal residual vector short-circuits
/// to the uniform vector `1/m`.
pub fn irgsc_weights(e: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if e.is_empty() {
        return Err(Error::EmptyInput("residual vector for water-filling weights".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "water-filling scale gamma must be positive, got {gamma}"
        )));
    }
    let m = e.len();
    let d: Vec<f64> = e.iter().map(|&x| x * x / (2.0 * gamma)).collect();
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !dmax.is_finite() {
        return Err(Error::NonFinite("squared residuals overflow in water-filling rule".into()));
    }
    if dmax == dmin {
        return Ok(vec![1.0 / m as f64; m]);
    }

    // sum_j max(eta - d_j, 0) is 0 at eta = dmin and >= m >= 1 at dmax + 1,
    // strictly increasing in between; bisect to floating-point resolution.
    let fill = |eta: f64| d.iter().map(|&dj| (eta - dj).max(0.0)).sum::<f64>();
    let mut lo = dmin;
    let mut hi = dmax + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fill(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = 0.5 * (lo + hi);
    Ok(d.iter().map(|&dj| (eta - dj).max(0.0)).collect())
}
