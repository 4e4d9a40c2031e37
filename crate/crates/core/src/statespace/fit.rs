use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::likelihood::estimate_hyperparams;
use super::nelder_mead::NelderMead;
use super::{toeplitz, Hyperparams, KalmanState};
use crate::decomposition::{Envelope, Pulse, PulseSet};
use crate::error::{Error, Result};
use crate::registration::{unwarp, RegisteredPulse, Registration};
use crate::spline::SplineSpec;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Number of most recent pulses in the likelihood window.
    pub window: usize,
    /// Fraction of the combined shape variance assigned to `sigma_eps2`.
    pub rho_split: f64,
    /// Re-estimate the hyperparameters after every `reopt_every` pulses.
    pub reopt_every: usize,
    pub initial: Hyperparams,
    pub optimizer: NelderMead,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            window: 20,
            rho_split: 0.5,
            reopt_every: 1,
            initial: Hyperparams::default(),
            optimizer: NelderMead::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::param("state-space", "fit.window_s", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.rho_split) {
            return Err(Error::param("state-space", "fit.rho_split", "must lie in [0, 1]"));
        }
        if self.reopt_every < 1 {
            return Err(Error::param("state-space", "fit.reopt_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Filter output for one registered pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseFit {
    pub pulse_id: usize,
    /// Registered pulse `Y_i`.
    pub observed: Vec<f64>,
    /// One-step prediction `H X_{i-1}`.
    pub predicted: Vec<f64>,
    /// `Y_i - H X_{i-1}`.
    pub innovation: Vec<f64>,
    /// Diagonal of the predictive covariance `Theta_i`.
    pub theta_diag: Vec<f64>,
    /// Filtered state `X_i`.
    pub xhat: Vec<f64>,
    /// Filtered covariance `Gamma_i`.
    pub gamma: DMatrix<f64>,
    /// Hyperparameters used to filter this pulse.
    pub hyper_used: Hyperparams,
    /// Hyperparameters after the update that followed this pulse.
    pub hyper: Hyperparams,
}

impl PulseFit {
    /// Innovation divided elementwise by its predictive standard deviation.
    pub fn standardized_residual(&self) -> Vec<f64> {
        self.innovation
            .iter()
            .zip(&self.theta_diag)
            .map(|(v, t)| v / t.sqrt())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: SplineSpec,
    pub design: DMatrix<f64>,
    pub pulses: Vec<PulseFit>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn grid_size(&self) -> usize {
        self.design.nrows()
    }

    pub fn hyper_trace(&self) -> Vec<Hyperparams> {
        self.pulses.iter().map(|p| p.hyper).collect()
    }

    pub fn final_hyper(&self) -> Option<Hyperparams> {
        self.pulses.last().map(|p| p.hyper)
    }
}

/// Filters the registered pulses in order, re-estimating the
/// hyperparameters from the most recent window after each step.
pub fn fit(registered: &[RegisteredPulse], spec: &SplineSpec, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let first = registered
        .first()
        .ok_or_else(|| Error::param("state-space", "pulses", "need at least one registered pulse"))?;
    let r = first.values.len();
    let h = spec.design_matrix(r);
    let mut state = KalmanState::new(spec.dim(), config.initial, config.window);
    let mut pulses = Vec::with_capacity(registered.len());
    let mut warnings = Vec::new();
    for (i, reg) in registered.iter().enumerate() {
        if reg.values.len() != r {
            return Err(Error::param(
                "state-space",
                "pulses",
                "registered pulses differ in grid size",
            ));
        }
        let y = DVector::from_column_slice(&reg.values);
        let hyper_used = state.hyper;
        let out = state.step(&y, &h)?;
        if (i + 1) % config.reopt_every == 0 {
            let est = estimate_hyperparams(&state, &h, config.rho_split, &config.optimizer);
            if let Some(w) = est.warning {
                if state.window.len() >= 2 {
                    log::warn!("pulse {}: {w}", reg.pulse_id);
                    warnings.push(format!("pulse {}: {w}", reg.pulse_id));
                }
            }
            state.hyper = est.hyper;
        }
        pulses.push(PulseFit {
            pulse_id: reg.pulse_id,
            observed: reg.values.clone(),
            predicted: out.predicted.iter().copied().collect(),
            innovation: out.innovation.iter().copied().collect(),
            theta_diag: out.theta.diagonal().iter().copied().collect(),
            xhat: state.xhat.iter().copied().collect(),
            gamma: state.gamma.clone(),
            hyper_used,
            hyper: state.hyper,
        });
    }
    Ok(FitResult {
        spec: spec.clone(),
        design: h,
        pulses,
        warnings,
    })
}

/// Model fit and residual on the original sample grid. Samples of excluded
/// pulses are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub fitted: Vec<Option<f64>>,
    pub residual: Vec<Option<f64>>,
    pub fs: f64,
    pub t0: f64,
}

/// Maps each pulse's one-step prediction back to the original signal:
/// unwarp, rescale by the pulse amplitude and add the lower envelope.
/// The residual is fitted minus original.
pub fn reconstruct(
    fit: &FitResult,
    pulses: &PulseSet,
    registration: &Registration,
    envelope: &Envelope,
    original: &[f64],
) -> Result<Reconstruction> {
    if fit.pulses.len() != registration.pulses.len() {
        return Err(Error::param(
            "state-space",
            "fit",
            "fit and registration come from different runs",
        ));
    }
    let n = original.len();
    let env = envelope.sample_values();
    if env.len() != n {
        return Err(Error::param(
            "state-space",
            "envelope",
            "envelope and signal lengths differ",
        ));
    }
    let mut fitted = vec![None; n];
    let mut entries = fit.pulses.iter().zip(&registration.pulses).peekable();
    let last_start = pulses.pulses.last().map(Pulse::start);
    for pulse in &pulses.pulses {
        let Pulse::Normalized(p) = pulse else { continue };
        let (pf, reg) = entries
            .next_if(|(pf, _)| pf.pulse_id == p.id)
            .ok_or_else(|| Error::param("state-space", "fit", format!("no fit entry for pulse {}", p.id)))?;
        // The final pulse also owns the closing sample of the signal.
        let count = if Some(p.start) == last_start { p.len + 1 } else { p.len };
        let taus: Vec<f64> = (0..count).map(|j| j as f64 / p.len as f64).collect();
        let shape = unwarp(&pf.predicted, &reg.warp, &taus);
        for (j, v) in shape.into_iter().enumerate() {
            let k = p.start + j;
            fitted[k] = Some(p.amplitude * v + env[k]);
        }
    }
    let residual = fitted.iter().zip(original).map(|(f, o)| f.map(|f| f - o)).collect();
    Ok(Reconstruction {
        fitted,
        residual,
        fs: pulses.fs,
        t0: pulses.t0,
    })
}

/// Root mean squared error over the standard deviation of the original,
/// both over the samples where a fitted value exists.
pub fn relative_rmse(fitted: &[Option<f64>], original: &[f64]) -> Result<f64> {
    if fitted.len() != original.len() {
        return Err(Error::param(
            "state-space",
            "fitted",
            "length differs from the original",
        ));
    }
    let (f, o): (Vec<f64>, Vec<f64>) = fitted
        .iter()
        .zip(original)
        .filter_map(|(f, o)| f.map(|f| (f, *o)))
        .unzip();
    if o.is_empty() {
        return Err(Error::param("state-space", "fitted", "no fitted samples"));
    }
    let sd = stats::std_dev(&o);
    if !(sd > 0.0) {
        return Err(Error::param(
            "state-space",
            "original",
            "zero variance; relative RMSE undefined",
        ));
    }
    let mse = f.iter().zip(&o).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / o.len() as f64;
    Ok(mse.sqrt() / sd)
}

/// Pointwise quantile curves of the pulse shape on the registration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBands {
    pub probs: Vec<f64>,
    /// Gaussian quantiles of the fitted shape distribution, averaged over
    /// the pulse range; one curve per probability.
    pub model: Vec<Vec<f64>>,
    /// Empirical quantiles of the registered data pulses in the range.
    pub empirical: Vec<Vec<f64>>,
}

/// Quantile bands over fitted pulses `range` (positions in `fit.pulses`).
///
/// The model band at pulse `i` is `H X_i + z_p sqrt(diag(H (Gamma_i +
/// sigma_eps2 Sigma) H^T))`.
pub fn shape_quantiles(fit: &FitResult, range: Range<usize>, probs: &[f64]) -> Result<QuantileBands> {
    if range.is_empty() || range.end > fit.pulses.len() {
        return Err(Error::param(
            "state-space",
            "range",
            format!(
                "pulse range {range:?} is empty or exceeds {} fitted pulses",
                fit.pulses.len()
            ),
        ));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::param(
            "state-space",
            "quantiles.probs",
            format!("{p} outside (0, 1)"),
        ));
    }
    let h = &fit.design;
    let (r, p) = h.shape();
    let count = range.len() as f64;
    let z: Vec<f64> = probs.iter().map(|&q| stats::normal_quantile(q)).collect();
    let mut model = vec![vec![0.0; r]; probs.len()];
    for pf in &fit.pulses[range.clone()] {
        let x = DVector::from_column_slice(&pf.xhat);
        let mean = h * x;
        let cov = &pf.gamma + toeplitz(p, pf.hyper.phi) * pf.hyper.sigma_eps2;
        let hc = h * cov;
        for (q, zq) in z.iter().enumerate() {
            for k in 0..r {
                let var = hc.row(k).dot(&h.row(k)).max(0.0);
                model[q][k] += (mean[k] + zq * var.sqrt()) / count;
            }
        }
    }
    let empirical = probs
        .iter()
        .map(|&q| {
            (0..r)
                .map(|k| {
                    let col: Vec<f64> = fit.pulses[range.clone()].iter().map(|pf| pf.observed[k]).collect();
                    stats::quantile(&col, q)
                })
                .collect()
        })
        .collect();
    Ok(QuantileBands {
        probs: probs.to_vec(),
        model,
        empirical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::PiecewiseLinearWarp;

    fn reg(values: Vec<f64>, id: usize) -> RegisteredPulse {
        RegisteredPulse {
            values,
            warp: PiecewiseLinearWarp::identity(),
            pulse_id: id,
            duration: 1.0,
            amplitude: 1.0,
            max_location: 0.3,
            target: 0.3,
        }
    }

    #[test]
    fn relative_rmse_reference_points() {
        let o = [1.0, 2.0, 4.0, 7.0];
        let same: Vec<Option<f64>> = o.iter().map(|v| Some(*v)).collect();
        assert_eq!(relative_rmse(&same, &o).unwrap(), 0.0);
        let m = stats::mean(&o);
        let flat = vec![Some(m); 4];
        assert!((relative_rmse(&flat, &o).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_rmse(&flat, &[1.0; 4]).is_err());
        let partial = [Some(1.0), None, Some(4.0), None];
        assert!(relative_rmse(&partial, &o).unwrap() == 0.0);
    }

    #[test]
    fn one_constant_pulse_is_shrunk() {
        let spec = SplineSpec::new(1, 2);
        let r = 16;
        let y = vec![0.8; r];
        let cfg = FitConfig {
            reopt_every: 1000,
            ..Default::default()
        };
        let res = fit(&[reg(y.clone(), 0)], &spec, &cfg).unwrap();
        let x = DVector::from_column_slice(&res.pulses[0].xhat);
        let hx = &res.design * x;
        for v in hx.iter() {
            assert!(*v > 0.5 && *v < 0.8, "{v}");
        }
        assert_eq!(res.pulses[0].predicted, vec![0.0; r]);
    }

    #[test]
    fn quantile_median_is_mean_curve() {
        let spec = SplineSpec::new(1, 2);
        let r = 12;
        let pulses: Vec<RegisteredPulse> = (0..5)
            .map(|i| reg((0..r).map(|k| (k as f64 / r as f64) + 0.01 * i as f64).collect(), i))
            .collect();
        let mut res = fit(&pulses, &spec, &FitConfig::default()).unwrap();
        for pf in &mut res.pulses {
            pf.gamma = DMatrix::zeros(spec.dim(), spec.dim());
        }
        let q = shape_quantiles(&res, 2..5, &[0.5]).unwrap();
        let mut mean = vec![0.0; r];
        for pf in &res.pulses[2..5] {
            let hx = &res.design * DVector::from_column_slice(&pf.xhat);
            for k in 0..r {
                mean[k] += hx[k] / 3.0;
            }
        }
        for k in 0..r {
            assert!((q.model[0][k] - mean[k]).abs() < 1e-12);
        }
        assert!(shape_quantiles(&res, 3..3, &[0.5]).is_err());
        assert!(shape_quantiles(&res, 0..2, &[1.0]).is_err());
    }
}
