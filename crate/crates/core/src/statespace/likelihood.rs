use nalgebra::{DMatrix, DVector};

use super::nelder_mead::NelderMead;
use super::{shape_covariance, Hyperparams, KalmanState};
use crate::error::{Error, Result};

/// `sum_k v_k^T Theta_k^{-1} v_k + log|Theta_k|` over `(v_k, Theta_k)`
/// pairs, through a Cholesky factor of each `Theta_k`.
pub fn neg_log_lik<'a, I>(window: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a DVector<f64>, &'a DMatrix<f64>)>,
{
    let mut total = 0.0;
    let mut any = false;
    for (v, theta) in window {
        any = true;
        let chol = theta
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("state-space", "window covariance is not positive definite"))?;
        let l = chol.l_dirty();
        let mut z = v.clone();
        l.solve_lower_triangular_mut(&mut z);
        let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        total += z.norm_squared() + logdet;
    }
    if !any {
        return Err(Error::param("state-space", "window", "empty likelihood window"));
    }
    Ok(total)
}

struct Term {
    /// `H^T v`.
    hv: DVector<f64>,
    /// `v^T v`.
    vv: f64,
    prior_gamma: DMatrix<f64>,
}

/// The windowed negative log-likelihood as a function of the
/// hyperparameters, with the innovations and prior covariances frozen.
///
/// Uses `Theta = sigma2 I + G G^T` with `G = H L`, `L L^T` the shape
/// covariance, so every term costs a few `p x p` factorisations instead
/// of an `r x r` one:
///
/// ```text
/// v^T Theta^{-1} v = (v^T v - c^T C^{-1} c) / sigma2,   c = L^T H^T v
/// log|Theta|       = (r - p) log sigma2 + log|C|,       C = sigma2 I + L^T H^T H L
/// ```
pub struct WindowObjective {
    r: usize,
    hth: DMatrix<f64>,
    terms: Vec<Term>,
}

impl WindowObjective {
    pub fn new<'a>(h: &DMatrix<f64>, entries: impl IntoIterator<Item = &'a super::WindowEntry>) -> Self {
        let ht = h.transpose();
        let terms = entries
            .into_iter()
            .map(|e| Term {
                hv: &ht * &e.innovation,
                vv: e.innovation.norm_squared(),
                prior_gamma: e.prior_gamma.clone(),
            })
            .collect();
        Self {
            r: h.nrows(),
            hth: &ht * h,
            terms,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Objective value; `+inf` when a covariance cannot be factorised.
    pub fn value(&self, hyper: &Hyperparams) -> f64 {
        let s2 = hyper.sigma2;
        if !(s2 > 0.0) {
            return f64::INFINITY;
        }
        let p = self.hth.nrows();
        let mut total = 0.0;
        for t in &self.terms {
            let b = shape_covariance(&t.prior_gamma, hyper);
            let l = match factor_psd(b) {
                Some(l) => l,
                None => return f64::INFINITY,
            };
            let lt = l.transpose();
            let mut c_mat = &lt * &self.hth * &l;
            for j in 0..p {
                c_mat[(j, j)] += s2;
            }
            let c_vec = &lt * &t.hv;
            let chol = match c_mat.cholesky() {
                Some(c) => c,
                None => return f64::INFINITY,
            };
            let lc = chol.l_dirty();
            let mut z = c_vec;
            lc.solve_lower_triangular_mut(&mut z);
            let logdet_c: f64 = 2.0 * lc.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let quad = (t.vv - z.norm_squared()) / s2;
            total += quad + (self.r as f64 - p as f64) * s2.ln() + logdet_c;
        }
        total
    }
}

/// Cholesky factor of a positive semi-definite matrix, adding a small
/// diagonal jitter when it is singular.
fn factor_psd(b: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = b.clone().cholesky() {
        return Some(c.unpack());
    }
    let scale = b.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut jitter = 1e-12 * scale;
    for _ in 0..6 {
        let mut bj = b.clone();
        for j in 0..bj.nrows() {
            bj[(j, j)] += jitter;
        }
        if let Some(c) = bj.cholesky() {
            return Some(c.unpack());
        }
        jitter *= 100.0;
    }
    None
}

const LN_VAR_MIN: f64 = -20.723_265_836_946_41; // ln 1e-9
const LN_VAR_MAX: f64 = 6.907_755_278_982_137; // ln 1e3
const ATANH_PHI_MAX: f64 = 3.8;

/// Unconstrained coordinates `(ln sigma2, ln sigma_c2, atanh phi)`.
pub(crate) fn to_coords(h: &Hyperparams) -> [f64; 3] {
    [
        h.sigma2.max(f64::MIN_POSITIVE).ln().clamp(LN_VAR_MIN, LN_VAR_MAX),
        h.sigma_c2().max(f64::MIN_POSITIVE).ln().clamp(LN_VAR_MIN, LN_VAR_MAX),
        h.phi.atanh().clamp(-ATANH_PHI_MAX, ATANH_PHI_MAX),
    ]
}

pub(crate) fn from_coords(x: &[f64], rho_split: f64) -> Hyperparams {
    Hyperparams::from_combined(
        x[0].clamp(LN_VAR_MIN, LN_VAR_MAX).exp(),
        x[1].clamp(LN_VAR_MIN, LN_VAR_MAX).exp(),
        x[2].clamp(-ATANH_PHI_MAX, ATANH_PHI_MAX).tanh(),
        rho_split,
    )
}

/// Result of one hyperparameter update.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub hyper: Hyperparams,
    /// Objective at the returned hyperparameters.
    pub value: f64,
    pub evaluations: usize,
    /// Set when the update was skipped or the optimiser failed.
    pub warning: Option<String>,
}

/// Re-estimates the hyperparameters by minimising the windowed negative
/// log-likelihood, searching over `(ln sigma2, ln sigma_c2, atanh phi)` from
/// the current values with the shape variance split by `rho_split`.
///
/// With fewer than two window entries the current values are kept.
pub fn estimate_hyperparams(state: &KalmanState, h: &DMatrix<f64>, rho_split: f64, optimizer: &NelderMead) -> Estimate {
    let current = state.hyper;
    if state.window.len() < 2 {
        return Estimate {
            hyper: current,
            value: f64::NAN,
            evaluations: 0,
            warning: Some("window shorter than 2 pulses; hyperparameters unchanged".into()),
        };
    }
    let objective = WindowObjective::new(h, state.window.iter());
    let x0 = to_coords(&current);
    let start = from_coords(&x0, rho_split);
    let f0 = objective.value(&start);
    let best = optimizer.minimize(|x| objective.value(&from_coords(x, rho_split)), &x0);
    if !best.value.is_finite() {
        return Estimate {
            hyper: current,
            value: f0,
            evaluations: best.evaluations,
            warning: Some("likelihood not finite anywhere in the simplex; hyperparameters unchanged".into()),
        };
    }
    Estimate {
        hyper: from_coords(&best.x, rho_split),
        value: best.value,
        evaluations: best.evaluations,
        warning: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{predictive_cov, WindowEntry};

    #[test]
    fn scalar_terms() {
        let v = DVector::from_element(1, 0.0);
        let t = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(neg_log_lik([(&v, &t)]).unwrap(), 0.0);
        let v = DVector::from_element(1, 2.0);
        let t = DMatrix::from_element(1, 1, 4.0);
        assert!((neg_log_lik([(&v, &t)]).unwrap() - (1.0 + 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_and_indefinite_windows_fail() {
        assert!(neg_log_lik(std::iter::empty()).is_err());
        let v = DVector::from_element(1, 1.0);
        let t = DMatrix::from_element(1, 1, -1.0);
        assert!(neg_log_lik([(&v, &t)]).is_err());
    }

    #[test]
    fn low_rank_objective_matches_dense() {
        let h = crate::spline::SplineSpec::new(2, 2).design_matrix(9);
        let p = h.ncols();
        let hyper = Hyperparams::new(0.03, 0.02, 0.05, 0.4).unwrap();
        let entries: Vec<WindowEntry> = (0..4)
            .map(|k| {
                let g = DMatrix::from_fn(p, p, |i, j| ((i * 7 + j * 3 + k) % 5) as f64 * 0.01);
                let g = &g * g.transpose() + DMatrix::identity(p, p) * 0.01;
                WindowEntry {
                    innovation: DVector::from_fn(9, |i, _| ((i + k) as f64 * 0.7).sin() * 0.3),
                    prior_gamma: g,
                }
            })
            .collect();
        let thetas: Vec<DMatrix<f64>> = entries
            .iter()
            .map(|e| predictive_cov(&h, &e.prior_gamma, &hyper))
            .collect();
        let dense = neg_log_lik(entries.iter().map(|e| &e.innovation).zip(thetas.iter())).unwrap();
        let fast = WindowObjective::new(&h, entries.iter()).value(&hyper);
        assert!((dense - fast).abs() < 1e-9 * dense.abs().max(1.0), "{dense} vs {fast}");
    }

    #[test]
    fn coordinates_round_trip() {
        let h = Hyperparams::from_combined(0.01, 0.05, 0.5, 0.5);
        let back = from_coords(&to_coords(&h), 0.5);
        assert!((back.sigma2 - 0.01).abs() < 1e-15);
        assert!((back.sigma_c2() - 0.05).abs() < 1e-15);
        assert!((back.phi - 0.5).abs() < 1e-15);
    }
}
