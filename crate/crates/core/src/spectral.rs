//! Closed-form analysis of PPCA-type dynamics on centered bilinear games
//! `V = theta^T A phi`.
//!
//! On such games one PPCA step is linear, `z_{t+1} = K z_t` with
//!
//! ```text
//! K = [[I - gamma*beta*A A^T, -alpha*A], [alpha*A^T, I - gamma*beta*A^T A]]
//! ```
//!
//! and `K K^T` is block diagonal, so the per-step contraction is governed by
//! the extreme eigenvalues of `A A^T`. The rate functions here turn those
//! eigenvalues into step sizes, contraction factors and iteration bounds.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::{ppca_step, Method, MethodConfig, MethodState};
use crate::error::{Error, Result};
use crate::game::JointPoint;
use crate::games::{singular_values, BilinearGame, DEFAULT_RANK_TOL};

/// Extreme eigenvalues `(lambda_min, lambda_max)` of `A A^T`, computed as
/// squared singular values of `A`.
pub fn eig_extremes(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !a.is_square() || a.is_empty() {
        return Err(Error::NotFullRankSquare(format!(
            "A is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let s = singular_values(a);
    let (smax, smin) = (s[0], s[s.len() - 1]);
    if smax.is_nan() || smax <= 0.0 || smin <= DEFAULT_RANK_TOL * smax {
        return Err(Error::NotFullRankSquare(format!(
            "A is rank deficient: sigma_min = {smin:e}, sigma_max = {smax:e}"
        )));
    }
    Ok((smin * smin, smax * smax))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    Ppca,
    PpcaAlphaZero,
    /// MPM on a bilinear game: PPCA with `alpha = beta`.
    MpmForm,
    /// Extra-gradient: PPCA with `alpha = beta = gamma`.
    ExtraGradient,
}

#[derive(Debug, Clone)]
pub struct IterationMatrix {
    pub k: DMatrix<f64>,
    pub kind: IterationKind,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `|offdiag(K K^T)|_F / |K|_F^2`; zero in exact arithmetic.
    pub block_residual: f64,
}

impl IterationMatrix {
    pub fn sigma_max(&self) -> f64 {
        singular_values(&self.k)[0]
    }

    pub fn apply(&self, z: &JointPoint) -> JointPoint {
        JointPoint::from_stacked(&(&self.k * z.stacked()), z.theta.len())
    }
}

fn build_k(
    a: &DMatrix<f64>,
    gamma: f64,
    alpha: f64,
    beta: f64,
    kind: IterationKind,
) -> Result<IterationMatrix> {
    if !a.is_square() {
        return Err(Error::NotFullRankSquare(format!(
            "A is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let gb = gamma * beta;
    let id = DMatrix::<f64>::identity(n, n);
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    k.view_mut((0, 0), (n, n))
        .copy_from(&(&id - a * a.transpose() * gb));
    k.view_mut((0, n), (n, n)).copy_from(&(a * -alpha));
    k.view_mut((n, 0), (n, n))
        .copy_from(&(a.transpose() * alpha));
    k.view_mut((n, n), (n, n))
        .copy_from(&(&id - a.transpose() * a * gb));
    let block_residual = block_offdiag_residual(&k);
    Ok(IterationMatrix {
        k,
        kind,
        gamma,
        alpha,
        beta,
        block_residual,
    })
}

/// Frobenius norm of the off-diagonal `n x n` blocks of `K K^T`, relative to
/// `|K|_F^2`.
pub fn block_offdiag_residual(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows() / 2;
    let kkt = k * k.transpose();
    let off = kkt.view((0, n), (n, n)).norm_squared() + kkt.view((n, 0), (n, n)).norm_squared();
    let scale = k.norm_squared();
    if scale == 0.0 {
        0.0
    } else {
        off.sqrt() / scale
    }
}

/// Iteration matrix of PPCA on `theta^T A phi`.
pub fn ppca_iteration_matrix(
    a: &DMatrix<f64>,
    gamma: f64,
    alpha: f64,
    beta: f64,
) -> Result<IterationMatrix> {
    let kind = if alpha == 0.0 {
        IterationKind::PpcaAlphaZero
    } else {
        IterationKind::Ppca
    };
    build_k(a, gamma, alpha, beta, kind)
}

/// Iteration matrix of MPM (predictive rate `gamma`, step `beta`). With the
/// arguments swapped it is also the matrix of PPCA with `alpha = gamma`.
pub fn mpm_iteration_matrix(a: &DMatrix<f64>, gamma: f64, beta: f64) -> Result<IterationMatrix> {
    build_k(a, gamma, beta, beta, IterationKind::MpmForm)
}

pub fn eg_iteration_matrix(a: &DMatrix<f64>, gamma: f64) -> Result<IterationMatrix> {
    build_k(a, gamma, gamma, gamma, IterationKind::ExtraGradient)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    Ppca,
    PpcaAlphaZero,
    Mpm,
    PpcaGammaEqAlpha,
    Eg,
}

/// Prescribed rates for one method. Fields that do not apply to the
/// method are `None` (serialized as `null`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub method: RateMethod,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub log_ratio: Option<f64>,
    pub alpha_bound: Option<f64>,
    pub beta_star: Option<f64>,
    pub gamma_star: Option<f64>,
    /// Prescribed product `gamma * beta` for the `alpha = 0` case.
    pub gamma_beta: Option<f64>,
    pub contraction: Option<f64>,
    #[serde(rename = "T_bound")]
    pub t_bound: Option<u64>,
}

impl SpectralReport {
    fn base(method: RateMethod, lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            method,
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
            gamma: None,
            alpha: None,
            beta: None,
            log_ratio: None,
            alpha_bound: None,
            beta_star: None,
            gamma_star: None,
            gamma_beta: None,
            contraction: None,
            t_bound: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report is plain data")
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

fn check_log_ratio(log_ratio: f64) -> Result<()> {
    if log_ratio.is_finite() && log_ratio >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "log_ratio must be finite and non-negative, got {log_ratio}"
        )))
    }
}

/// `ceil(2 / x * log_ratio)` for a per-step squared-norm decrease `x`.
fn iteration_bound(x: f64, log_ratio: f64) -> u64 {
    (2.0 / x * log_ratio).ceil() as u64
}

/// `sqrt(1 - x)`, clamped at zero against rounding.
fn contraction_from(x: f64) -> f64 {
    (1.0 - x).max(0.0).sqrt()
}

/// PPCA rates at a caller-supplied `alpha < alpha_bound`:
/// `alpha_bound = lmin sqrt(lmax) / lmax^2`, `beta* = lmin / (gamma lmax^2)`,
/// contraction `sqrt(1 - x)` and `T = ceil(2/x log_ratio)` with
/// `x = (lmin^2 - alpha^2 lmax^3) / lmax^2`.
pub fn ppca_rates_from_extremes(
    lmin: f64,
    lmax: f64,
    gamma: f64,
    alpha: f64,
    log_ratio: f64,
) -> Result<SpectralReport> {
    check_positive("gamma", gamma)?;
    check_log_ratio(log_ratio)?;
    let alpha_bound = lmin * lmax.sqrt() / (lmax * lmax);
    if !(alpha >= 0.0 && alpha < alpha_bound) {
        return Err(Error::HypothesisViolation(format!(
            "need 0 <= alpha < lambda_min*sqrt(lambda_max)/lambda_max^2 = {alpha_bound}, got alpha = {alpha}"
        )));
    }
    let x = (lmin * lmin - alpha * alpha * lmax.powi(3)) / (lmax * lmax);
    let mut r = SpectralReport::base(RateMethod::Ppca, lmin, lmax);
    r.gamma = Some(gamma);
    r.alpha = Some(alpha);
    r.log_ratio = Some(log_ratio);
    r.alpha_bound = Some(alpha_bound);
    r.beta_star = Some(lmin / (gamma * lmax * lmax));
    r.gamma_beta = Some(lmin / (lmax * lmax));
    r.contraction = Some(contraction_from(x));
    r.t_bound = Some(iteration_bound(x, log_ratio));
    Ok(r)
}

pub fn ppca_rates(
    a: &DMatrix<f64>,
    gamma: f64,
    alpha: f64,
    log_ratio: f64,
) -> Result<SpectralReport> {
    let (lmin, lmax) = eig_extremes(a)?;
    ppca_rates_from_extremes(lmin, lmax, gamma, alpha, log_ratio)
}

/// The `alpha = 0` case: `gamma beta = lmin / lmax^2`, contraction
/// `sqrt(1 - lmin^2/lmax^2)`. When `gamma` is given, `beta_star` is the
/// matching adaptive rate.
pub fn alpha_zero_rates_from_extremes(
    lmin: f64,
    lmax: f64,
    gamma: Option<f64>,
    log_ratio: f64,
) -> Result<SpectralReport> {
    check_log_ratio(log_ratio)?;
    if let Some(g) = gamma {
        check_positive("gamma", g)?;
    }
    let x = (lmin * lmin) / (lmax * lmax);
    let product = lmin / (lmax * lmax);
    let mut r = SpectralReport::base(RateMethod::PpcaAlphaZero, lmin, lmax);
    r.gamma = gamma;
    r.alpha = Some(0.0);
    r.log_ratio = Some(log_ratio);
    r.gamma_beta = Some(product);
    r.beta_star = gamma.map(|g| product / g);
    r.contraction = Some(contraction_from(x));
    r.t_bound = Some(iteration_bound(x, log_ratio));
    Ok(r)
}

pub fn alpha_zero_rates(
    a: &DMatrix<f64>,
    gamma: Option<f64>,
    log_ratio: f64,
) -> Result<SpectralReport> {
    let (lmin, lmax) = eig_extremes(a)?;
    alpha_zero_rates_from_extremes(lmin, lmax, gamma, log_ratio)
}

/// `rate * lmin / (lmax + rate^2 lmax^2)` and its per-step decrease
/// `rate^2 lmin^2 / (lmax + rate^2 lmax^2)`; shared by MPM (fixed gamma) and
/// the `gamma = alpha` case (fixed beta).
fn predictive_pair(lmin: f64, lmax: f64, fixed: f64) -> (f64, f64) {
    let denom = lmax + fixed * fixed * lmax * lmax;
    (fixed * lmin / denom, fixed * fixed * lmin * lmin / denom)
}

/// MPM with fixed predictive rate `gamma`: `beta* = gamma lmin / (lmax + gamma^2 lmax^2)`,
/// `T = ceil(2 (gamma^2 lmax^2 + lmax) / (gamma^2 lmin^2) log_ratio)`.
pub fn mpm_rates_from_extremes(
    lmin: f64,
    lmax: f64,
    gamma: f64,
    log_ratio: f64,
) -> Result<SpectralReport> {
    check_positive("gamma", gamma)?;
    check_log_ratio(log_ratio)?;
    let (beta, x) = predictive_pair(lmin, lmax, gamma);
    let mut r = SpectralReport::base(RateMethod::Mpm, lmin, lmax);
    r.gamma = Some(gamma);
    r.log_ratio = Some(log_ratio);
    r.beta_star = Some(beta);
    r.contraction = Some(contraction_from(x));
    r.t_bound = Some(iteration_bound(x, log_ratio));
    Ok(r)
}

pub fn mpm_rates(a: &DMatrix<f64>, gamma: f64, log_ratio: f64) -> Result<SpectralReport> {
    let (lmin, lmax) = eig_extremes(a)?;
    mpm_rates_from_extremes(lmin, lmax, gamma, log_ratio)
}

/// PPCA with `gamma = alpha` and fixed `beta`:
/// `gamma* = beta lmin / (lmax + beta^2 lmax^2)`.
pub fn gamma_eq_alpha_rates_from_extremes(
    lmin: f64,
    lmax: f64,
    beta: f64,
    log_ratio: f64,
) -> Result<SpectralReport> {
    check_positive("beta", beta)?;
    check_log_ratio(log_ratio)?;
    let (gamma, x) = predictive_pair(lmin, lmax, beta);
    let mut r = SpectralReport::base(RateMethod::PpcaGammaEqAlpha, lmin, lmax);
    r.beta = Some(beta);
    r.log_ratio = Some(log_ratio);
    r.gamma_star = Some(gamma);
    r.contraction = Some(contraction_from(x));
    r.t_bound = Some(iteration_bound(x, log_ratio));
    Ok(r)
}

pub fn gamma_eq_alpha_rates(a: &DMatrix<f64>, beta: f64, log_ratio: f64) -> Result<SpectralReport> {
    let (lmin, lmax) = eig_extremes(a)?;
    gamma_eq_alpha_rates_from_extremes(lmin, lmax, beta, log_ratio)
}

/// Extra-gradient step size `1 / (2 sqrt(2 lambda_max(A^T A)))`.
pub fn eg_step_size(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eg_rates(a)?.gamma_star.expect("set by eg_rates"))
}

/// Extra-gradient step size plus `kappa`. The contraction constant of the
/// extra-gradient bound is unquantified, so `contraction` stays `None`.
pub fn eg_rates(a: &DMatrix<f64>) -> Result<SpectralReport> {
    let (lmin, lmax) = eig_extremes(a)?;
    let mut r = SpectralReport::base(RateMethod::Eg, lmin, lmax);
    r.gamma_star = Some(1.0 / (2.0 * (2.0 * lmax).sqrt()));
    Ok(r)
}

/// Relative tolerance on `beta == beta*` when checking the PPCA hypothesis.
const BETA_MATCH_TOL: f64 = 1e-9;
/// Per-step slack on the contraction inequality.
pub const CONTRACTION_SLACK: f64 = 1e-12;
/// Tolerance of the trajectory vs `K^t z_0` comparison.
pub const LINEAR_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub steps_run: usize,
    pub contraction: f64,
    pub sigma_max_k: f64,
    pub block_residual: f64,
    /// Largest observed `|z_{t+1}| / |z_t|`.
    pub max_ratio: f64,
    pub per_step_ok: bool,
    pub max_linear_deviation: f64,
    pub linear_ok: bool,
    pub t_bound: Option<u64>,
    pub epsilon: Option<f64>,
    pub norm_at_t_bound: Option<f64>,
    pub t_bound_ok: Option<bool>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.per_step_ok && self.linear_ok && self.t_bound_ok.unwrap_or(true)
    }
}

/// Runs PPCA on a centered full-rank bilinear game and checks, step by step,
/// `|z_{t+1}| <= (contraction + 1e-12) |z_t|`, that the iterates equal
/// `K^t z_0`, and (when `log_ratio` is given) that `|z_T| <= eps` at
/// `T = T_bound` with `eps = |z_0| exp(-log_ratio)`.
///
/// Runs `max(steps, T_bound)` steps. Refuses configurations outside the
/// hypothesis `0 <= alpha < alpha_bound`, `beta = lmin / (gamma lmax^2)`.
pub fn verify_contraction(
    game: &BilinearGame,
    cfg: &MethodConfig,
    init: &JointPoint,
    steps: usize,
    log_ratio: Option<f64>,
) -> Result<ContractionReport> {
    if !game.is_centered() {
        return Err(Error::Config(
            "contraction check needs a centered game (b = c = 0)".into(),
        ));
    }
    if cfg.method != Method::Ppca {
        return Err(Error::Config(format!(
            "contraction check runs PPCA, got {}",
            cfg.method
        )));
    }
    cfg.validate()?;
    use crate::game::Game;
    game.check_dims(init)?;
    let (lmin, lmax) = eig_extremes(game.a())?;
    let rates =
        ppca_rates_from_extremes(lmin, lmax, cfg.gamma, cfg.alpha, log_ratio.unwrap_or(0.0))?;
    let beta_star = rates.beta_star.expect("set by ppca_rates");
    if (cfg.beta - beta_star).abs() > BETA_MATCH_TOL * beta_star {
        return Err(Error::HypothesisViolation(format!(
            "need beta = lambda_min/(gamma*lambda_max^2) = {beta_star}, got beta = {}",
            cfg.beta
        )));
    }
    let contraction = rates.contraction.expect("set by ppca_rates");
    let k = ppca_iteration_matrix(game.a(), cfg.gamma, cfg.alpha, cfg.beta)?;
    let t_bound = log_ratio.map(|_| rates.t_bound.expect("set by ppca_rates"));
    let total = steps.max(t_bound.unwrap_or(0) as usize);
    let epsilon = log_ratio.map(|l| init.norm() * (-l).exp());

    let mut state = MethodState::new(init.clone());
    let mut linear = init.clone();
    let mut max_ratio = 0.0f64;
    let mut per_step_ok = true;
    let mut max_dev = 0.0f64;
    let mut norm_at_t = None;
    let limit = contraction + CONTRACTION_SLACK;
    if t_bound == Some(0) {
        norm_at_t = Some(init.norm());
    }

    for t in 0..total {
        let before = state.current.norm();
        state = ppca_step(game, &state, cfg)?;
        linear = k.apply(&linear);
        let after = state.current.norm();

        if before > 0.0 {
            let ratio = after / before;
            max_ratio = max_ratio.max(ratio);
            if ratio > limit {
                per_step_ok = false;
            }
        } else if after > 0.0 {
            per_step_ok = false;
            max_ratio = f64::INFINITY;
        }

        let scale = after.max(linear.norm());
        if scale > 0.0 {
            max_dev = max_dev.max(state.current.dist_sq(&linear).sqrt() / scale);
        }
        if Some((t + 1) as u64) == t_bound {
            norm_at_t = Some(after);
        }
    }

    let t_bound_ok = match (norm_at_t, epsilon) {
        (Some(norm), Some(eps)) => Some(norm <= eps),
        _ => None,
    };
    Ok(ContractionReport {
        steps_run: total,
        contraction,
        sigma_max_k: k.sigma_max(),
        block_residual: k.block_residual,
        max_ratio,
        per_step_ok,
        max_linear_deviation: max_dev,
        linear_ok: max_dev <= LINEAR_IDENTITY_TOL,
        t_bound,
        epsilon,
        norm_at_t_bound: norm_at_t,
        t_bound_ok,
    })
}
