//! The decompose, register and fit chain with its settings.

use crate::decomposition::{decompose, Decomposition, DecompositionParams};
use crate::error::{Error, Result};
use crate::registration::{register, Registration};
use crate::signal::{self, SampledSignal};
use crate::spline::SplineSpec;
use crate::statespace::{fit, reconstruct, relative_rmse, FitConfig, FitResult, Reconstruction};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Resample to this rate before anything else.
    pub target_fs: Option<f64>,
    /// Zero-phase band-pass `(f_hp, f_lp)` applied after resampling.
    pub band: Option<(f64, f64)>,
    /// `None` picks the quarter-second defaults for the signal rate.
    pub decomposition: Option<DecompositionParams>,
    pub grid_size: usize,
    pub spline: SplineSpec,
    pub fit: FitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_fs: None,
            band: None,
            decomposition: None,
            grid_size: 64,
            spline: SplineSpec::default(),
            fit: FitConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn decomposition_for(&self, fs: f64) -> DecompositionParams {
        self.decomposition.unwrap_or_else(|| DecompositionParams::for_rate(fs))
    }
}

/// Applies the optional resampling and band-pass steps.
pub fn prepare(signal: &SampledSignal, config: &PipelineConfig) -> Result<SampledSignal> {
    let mut s = signal.clone();
    if let Some(fs) = config.target_fs {
        s = signal::downsample(&s, fs)?;
    }
    if let Some((lo, hi)) = config.band {
        s = signal::bandpass(&s, lo, hi)?;
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    /// The signal after preparation; everything below refers to it.
    pub signal: SampledSignal,
    pub decomposition: Decomposition,
    pub registration: Registration,
    pub fit: FitResult,
    pub reconstruction: Reconstruction,
    pub relative_rmse: f64,
}

pub fn run_decompose(signal: &SampledSignal, config: &PipelineConfig) -> Result<(SampledSignal, Decomposition)> {
    let s = prepare(signal, config)?;
    let d = decompose(&s, config.decomposition_for(s.fs()))?;
    Ok((s, d))
}

pub fn run_fit(signal: &SampledSignal, config: &PipelineConfig) -> Result<FitOutput> {
    let (s, decomposition) = run_decompose(signal, config)?;
    let registration = register(&decomposition.pulses, config.grid_size)?;
    if registration.pulses.is_empty() {
        return Err(Error::NoUsablePulses {
            total: decomposition.pulses.pulses.len(),
        });
    }
    let fit = fit(&registration.pulses, &config.spline, &config.fit)?;
    let reconstruction = reconstruct(
        &fit,
        &decomposition.pulses,
        &registration,
        &decomposition.envelope,
        s.samples(),
    )?;
    let relative_rmse = relative_rmse(&reconstruction.fitted, s.samples())?;
    Ok(FitOutput {
        signal: s,
        decomposition,
        registration,
        fit,
        reconstruction,
        relative_rmse,
    })
}
