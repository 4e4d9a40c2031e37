//! State-space model for the registered pulses.
//!
//! Each registered pulse `Y_i` (length `r`) is observed through the spline
//! design matrix `H` (`r x p`):
//!
//! ```text
//! Y_i = H X_i + eps_i,   eps_i ~ N(0, sigma2 I_r + sigma_eps2 H Sigma H^T)
//! X_i = X_{i-1} + xi_i,  xi_i  ~ N(0, sigma_xi2 I_p)
//! ```
//!
//! with `Sigma_jk = phi^|j-k|`. States are filtered pulse by pulse and the
//! variances re-estimated from the likelihood of the most recent window of
//! innovations.

mod fit;
mod likelihood;
pub mod nelder_mead;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use fit::{
    fit, reconstruct, relative_rmse, shape_quantiles, FitConfig, FitResult, PulseFit, QuantileBands, Reconstruction,
};
pub use likelihood::{estimate_hyperparams, neg_log_lik, WindowObjective};

/// Largest accepted condition number of the predictive covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Variance parameters and the Toeplitz correlation of the shape model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub sigma2: f64,
    pub sigma_eps2: f64,
    pub sigma_xi2: f64,
    pub phi: f64,
}

impl Hyperparams {
    pub fn new(sigma2: f64, sigma_eps2: f64, sigma_xi2: f64, phi: f64) -> Result<Self> {
        for (name, v) in [("sigma2", sigma2), ("sigma_eps2", sigma_eps2), ("sigma_xi2", sigma_xi2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(
                    "state-space",
                    "hyperparams",
                    format!("{name} = {v} must be finite and >= 0"),
                ));
            }
        }
        if !(phi.abs() < 1.0) {
            return Err(Error::param(
                "state-space",
                "phi",
                format!("|phi| must be < 1, got {phi}"),
            ));
        }
        Ok(Self {
            sigma2,
            sigma_eps2,
            sigma_xi2,
            phi,
        })
    }

    /// Splits a combined shape variance `sigma_c2` into the two identified
    /// components with fraction `rho_split` going to `sigma_eps2`.
    pub fn from_combined(sigma2: f64, sigma_c2: f64, phi: f64, rho_split: f64) -> Self {
        Self {
            sigma2,
            sigma_eps2: sigma_c2 * rho_split,
            sigma_xi2: sigma_c2 * (1.0 - rho_split),
            phi,
        }
    }

    /// `sigma_eps2 + sigma_xi2`, the only identified combination.
    pub fn sigma_c2(&self) -> f64 {
        self.sigma_eps2 + self.sigma_xi2
    }
}

impl Default for Hyperparams {
    /// Initial values: all variances 0.1, `Sigma = I`.
    fn default() -> Self {
        Self {
            sigma2: 0.1,
            sigma_eps2: 0.1,
            sigma_xi2: 0.1,
            phi: 0.0,
        }
    }
}

/// `Sigma_jk = phi^|j-k|`.
pub fn toeplitz(p: usize, phi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, k| phi.powi((j as i32 - k as i32).abs()))
}

/// Prior state covariance before observing pulse `i`, plus the shape
/// variability: `sigma_eps2 Sigma + sigma_xi2 I + Gamma_{i-1}`.
pub(crate) fn shape_covariance(gamma: &DMatrix<f64>, hyper: &Hyperparams) -> DMatrix<f64> {
    let p = gamma.nrows();
    let mut b = toeplitz(p, hyper.phi) * hyper.sigma_eps2 + gamma;
    for j in 0..p {
        b[(j, j)] += hyper.sigma_xi2;
    }
    b
}

/// `Theta = sigma2 I_r + H (sigma_eps2 Sigma + sigma_xi2 I_p + Gamma) H^T`.
pub fn predictive_cov(h: &DMatrix<f64>, gamma: &DMatrix<f64>, hyper: &Hyperparams) -> DMatrix<f64> {
    let b = shape_covariance(gamma, hyper);
    let mut theta = h * b * h.transpose();
    for k in 0..theta.nrows() {
        theta[(k, k)] += hyper.sigma2;
    }
    symmetrize(&mut theta);
    theta
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// One stored window entry: the innovation and the state covariance
/// before the step that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEntry {
    pub innovation: DVector<f64>,
    pub prior_gamma: DMatrix<f64>,
}

/// Filter state between pulses.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub xhat: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub hyper: Hyperparams,
    pub window: VecDeque<WindowEntry>,
    pub window_len: usize,
}

/// What one filter step reports besides the updated state.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub innovation: DVector<f64>,
    pub theta: DMatrix<f64>,
    /// `H X_{i-1}`, the one-step prediction of the pulse.
    pub predicted: DVector<f64>,
}

impl KalmanState {
    /// `X_0 = 0`, `Gamma_0 = I_p`.
    pub fn new(p: usize, hyper: Hyperparams, window_len: usize) -> Self {
        Self {
            xhat: DVector::zeros(p),
            gamma: DMatrix::identity(p, p),
            hyper,
            window: VecDeque::with_capacity(window_len),
            window_len: window_len.max(1),
        }
    }

    /// Filters one pulse:
    ///
    /// ```text
    /// Theta = sigma2 I + H (sigma_eps2 Sigma + sigma_xi2 I + Gamma) H^T
    /// K     = (Gamma + sigma_xi2 I) H^T Theta^{-1}
    /// X    <- X + K (Y - H X)
    /// Gamma <- (I - K H)(Gamma + sigma_xi2 I)
    /// ```
    ///
    /// and pushes the innovation with the prior covariance onto the window.
    pub fn step(&mut self, y: &DVector<f64>, h: &DMatrix<f64>) -> Result<StepOutput> {
        let (r, p) = h.shape();
        if y.len() != r || self.xhat.len() != p {
            return Err(Error::param(
                "state-space",
                "Y",
                format!(
                    "dimension mismatch: Y has {}, H is {r}x{p}, state has {}",
                    y.len(),
                    self.xhat.len()
                ),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("state-space", "Y", "pulse contains non-finite values"));
        }
        let theta = predictive_cov(h, &self.gamma, &self.hyper);
        let chol = cholesky_checked(&theta)?;
        let mut prior = self.gamma.clone();
        for j in 0..p {
            prior[(j, j)] += self.hyper.sigma_xi2;
        }
        let predicted = h * &self.xhat;
        let innovation = y - &predicted;
        // K^T = Theta^{-1} H P since Theta and P are symmetric.
        let gain_t = chol.solve(&(h * &prior));
        let gain = gain_t.transpose();
        self.xhat += &gain * &innovation;
        let mut gamma = (DMatrix::identity(p, p) - &gain * h) * &prior;
        symmetrize(&mut gamma);

        let entry = WindowEntry {
            innovation: innovation.clone(),
            prior_gamma: std::mem::replace(&mut self.gamma, gamma),
        };
        if self.window.len() == self.window_len {
            self.window.pop_front();
        }
        self.window.push_back(entry);
        Ok(StepOutput {
            innovation,
            theta,
            predicted,
        })
    }
}

/// Cholesky factor of a symmetric matrix, rejecting factorisations whose
/// condition estimate `(max L_ii / min L_ii)^2` exceeds [`MAX_CONDITION`].
pub(crate) fn cholesky_checked(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::numerical(
            "state-space",
            "predictive covariance is not positive definite; increase sigma2",
        )
    })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let cond = (hi / lo).powi(2);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::numerical(
            "state-space",
            format!("predictive covariance is numerically singular (condition ~{cond:.3e}); increase sigma2"),
        ));
    }
    Ok(chol)
}
