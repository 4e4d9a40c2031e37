//! wasm-bindgen surface for the static demo page in `www/`.

use ppg_shape::anomaly::{detect, DetectorParams, ResidualScale};
use ppg_shape::pipeline::{run_fit, PipelineConfig};
use ppg_shape::registration::{warp_pulse, PiecewiseLinearWarp, PulseCurve};
use ppg_shape::spline::SplineSpec;
use ppg_shape::synth::{generate, noise_sd_for_snr, random_schedule, SynthConfig};
use wasm_bindgen::prelude::*;

/// A synthetic recording run through decomposition, fit and threshold
/// detection.
#[wasm_bindgen]
pub struct FitDemo {
    fs: f64,
    signal: Vec<f64>,
    fitted: Vec<f64>,
    relative_rmse: f64,
    premature: Vec<f64>,
    flagged: Vec<f64>,
    smoothed: Vec<f64>,
    grid: usize,
    threshold: f64,
}

#[wasm_bindgen]
impl FitDemo {
    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn signal(&self) -> Vec<f64> {
        self.signal.clone()
    }

    /// One-step model fit on the signal grid; NaN where a pulse was excluded.
    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }

    pub fn relative_rmse(&self) -> f64 {
        self.relative_rmse
    }

    /// Annotated times of the injected premature beats.
    pub fn premature_times(&self) -> Vec<f64> {
        self.premature.clone()
    }

    /// Start times of the pulses the detector flagged.
    pub fn flagged_times(&self) -> Vec<f64> {
        self.flagged.clone()
    }

    /// Smoothed absolute residual series, `grid` values per pulse.
    pub fn smoothed(&self) -> Vec<f64> {
        self.smoothed.clone()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Generates `duration` seconds at 64 Hz with the given SNR and share of
/// premature beats, fits the model and runs the detector with threshold
/// `pi`.
#[wasm_bindgen]
pub fn fit_demo(seed: u64, duration: f64, snr_db: f64, premature_fraction: f64, pi: f64) -> Result<FitDemo, String> {
    let mut cfg = SynthConfig {
        duration,
        seed,
        ..Default::default()
    };
    let beats = (duration * cfg.mean_hr / 60.0).ceil() as usize;
    cfg.schedule = random_schedule(beats, premature_fraction, 0.5, 3, seed);
    let clean = generate(&cfg).map_err(|e| e.to_string())?;
    cfg.noise_sd = noise_sd_for_snr(&clean.clean, snr_db);
    let s = generate(&cfg).map_err(|e| e.to_string())?;
    let out = run_fit(&s.signal, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let params = DetectorParams {
        pi,
        ..Default::default()
    };
    let det =
        detect(&out.fit, &out.decomposition.pulses, &params, ResidualScale::default()).map_err(|e| e.to_string())?;
    let pulses = &out.decomposition.pulses;
    Ok(FitDemo {
        fs: out.signal.fs(),
        signal: out.signal.samples().to_vec(),
        fitted: out
            .reconstruction
            .fitted
            .iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect(),
        relative_rmse: out.relative_rmse,
        premature: s
            .annotation
            .events()
            .iter()
            .filter(|e| e.label.is_premature())
            .map(|e| e.time)
            .collect(),
        flagged: det
            .blocks
            .iter()
            .map(|&b| pulses.pulse_start_time(&pulses.pulses[b]))
            .collect(),
        grid: det.series.grid,
        smoothed: det.smoothed,
        threshold: pi,
    })
}

/// Number of basis functions for `degree` and `interior_knots`.
#[wasm_bindgen]
pub fn spline_dim(degree: usize, interior_knots: usize) -> usize {
    SplineSpec::new(degree, interior_knots).dim()
}

/// Basis values at `samples` evenly spaced points of `[0, 1]`, row-major
/// (one row of `spline_dim` values per point).
#[wasm_bindgen]
pub fn spline_basis(degree: usize, interior_knots: usize, samples: usize) -> Result<Vec<f64>, String> {
    if samples < 2 {
        return Err("need at least two sample points".into());
    }
    let spec = SplineSpec::new(degree, interior_knots);
    let mut out = Vec::with_capacity(samples * spec.dim());
    for k in 0..samples {
        let t = k as f64 / (samples - 1) as f64;
        out.extend(spec.basis_eval(t).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// A skewed test pulse with its maximum at `location`: rises as a half
/// sine, falls as a cosine with a small dicrotic bump.
fn test_pulse(location: f64, points: usize) -> Result<PulseCurve, String> {
    let times: Vec<f64> = (0..=points).map(|k| k as f64 / points as f64).collect();
    let values = times
        .iter()
        .map(|&u| {
            if u <= location {
                (std::f64::consts::FRAC_PI_2 * u / location).sin().powi(2)
            } else {
                let v = (u - location) / (1.0 - location);
                let fall = (std::f64::consts::FRAC_PI_2 * v).cos().powi(2);
                fall + 0.15 * (-((v - 0.45) / 0.08).powi(2)).exp()
            }
        })
        .collect();
    PulseCurve::new(times, values).map_err(|e| e.to_string())
}

/// Registers a test pulse peaking at `location` so its maximum lands on
/// `target`. Returns `[original; warped; warp]`, each `r` grid values.
#[wasm_bindgen]
pub fn registration_demo(target: f64, location: f64, r: usize) -> Result<Vec<f64>, String> {
    let curve = test_pulse(location, 400)?;
    let (warped, warp): (Vec<f64>, PiecewiseLinearWarp) =
        warp_pulse(&curve, target, location, r).map_err(|e| e.to_string())?;
    let mut out = curve.on_grid(r);
    out.extend(warped);
    out.extend((0..r).map(|j| warp.eval(j as f64 / r as f64)));
    Ok(out)
}
