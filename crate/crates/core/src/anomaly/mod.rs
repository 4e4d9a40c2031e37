//! Premature-beat detection and classification from the model fit, plus
//! interbeat-interval and classification metrics.
//!
//! The threshold detector concatenates per-pulse residual blocks, smooths
//! their absolute values with a centred moving average and flags the
//! pulses holding large local maxima of the smoothed series.

mod features;
mod ibi;
mod metrics;
mod optimize;
mod svm;

pub use features::{build_features, FeatureSet, Pairing};
pub use ibi::{compare_ibis, extract_ibis, match_beats, IbiComparison};
pub use metrics::{score, Confusion, Scores};
pub use optimize::{optimize_detector, CorpusEntry, DetectorGrid, OptimizedDetector};
pub use svm::{cross_validate, svm_predict, svm_train, Kernel, SvmModel, SvmParams};

use std::fmt;
use std::str::FromStr;

use crate::annotation::{BeatAnnotation, BeatLabel};
use crate::decomposition::{greedy_extrema, ExtremumKind};
use crate::decomposition::{Pulse, PulseSet};
use crate::error::{Error, Result};
use crate::statespace::FitResult;

/// Which per-pulse residual the detector works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualScale {
    /// Innovations in normalised pulse units.
    #[default]
    Innovation,
    /// Innovations divided by their predictive standard deviation.
    Standardized,
}

impl FromStr for ResidualScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "innovation" | "raw" => Ok(ResidualScale::Innovation),
            "standardized" | "standardised" => Ok(ResidualScale::Standardized),
            other => Err(Error::param(
                "anomaly",
                "detect.scale",
                format!("unknown residual scale `{other}`"),
            )),
        }
    }
}

impl fmt::Display for ResidualScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResidualScale::Innovation => "innovation",
            ResidualScale::Standardized => "standardized",
        })
    }
}

/// Residual blocks of every segmented pulse laid end to end, `grid` values
/// per pulse. Excluded pulses hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub grid: usize,
    pub values: Vec<f64>,
    /// Pulse id of each block, in order.
    pub pulse_ids: Vec<usize>,
    /// True for blocks of excluded pulses.
    pub excluded: Vec<bool>,
}

impl ResidualSeries {
    pub fn blocks(&self) -> usize {
        self.pulse_ids.len()
    }

    /// Block holding series index `k`. An index on the boundary between
    /// two blocks belongs to the earlier one.
    pub fn block_of(&self, k: usize) -> usize {
        if k > 0 && k % self.grid == 0 {
            k / self.grid - 1
        } else {
            k / self.grid
        }
    }
}

/// Concatenates per-pulse residuals of `fit` over all pulses of `pulses`.
pub fn residual_series(fit: &FitResult, pulses: &PulseSet, scale: ResidualScale) -> Result<ResidualSeries> {
    let grid = fit.grid_size();
    let mut values = Vec::with_capacity(pulses.pulses.len() * grid);
    let mut pulse_ids = Vec::with_capacity(pulses.pulses.len());
    let mut excluded = Vec::with_capacity(pulses.pulses.len());
    let mut fitted = fit.pulses.iter().peekable();
    for p in &pulses.pulses {
        let id = match p {
            Pulse::Normalized(n) => n.id,
            Pulse::Excluded { id, .. } => *id,
        };
        pulse_ids.push(id);
        match fitted.next_if(|pf| pf.pulse_id == id) {
            Some(pf) if matches!(p, Pulse::Normalized(_)) => {
                excluded.push(false);
                match scale {
                    ResidualScale::Innovation => values.extend_from_slice(&pf.innovation),
                    ResidualScale::Standardized => values.extend(pf.standardized_residual()),
                }
            }
            Some(_) => unreachable!("excluded pulse with a fit entry"),
            None => {
                if matches!(p, Pulse::Normalized(_)) {
                    return Err(Error::param("anomaly", "fit", format!("pulse {id} has no fit entry")));
                }
                excluded.push(true);
                values.extend(std::iter::repeat_n(0.0, grid));
            }
        }
    }
    Ok(ResidualSeries {
        grid,
        values,
        pulse_ids,
        excluded,
    })
}

/// Innovations divided by `sqrt(diag Theta)`, concatenated over pulses.
pub fn standardized_residuals(fit: &FitResult, pulses: &PulseSet) -> Result<ResidualSeries> {
    residual_series(fit, pulses, ResidualScale::Standardized)
}

/// Centred moving average of `|x|` over `lambda` samples; near the ends the
/// window is cut at the series bounds and the mean taken over what is left.
pub fn smooth_abs(x: &[f64], lambda: usize) -> Result<Vec<f64>> {
    if lambda == 0 || lambda % 2 == 0 {
        return Err(Error::param(
            "anomaly",
            "lambda",
            format!("must be odd and at least 1, got {lambda}"),
        ));
    }
    if lambda > x.len() {
        return Err(Error::param(
            "anomaly",
            "lambda",
            format!("window {lambda} exceeds series length {}", x.len()),
        ));
    }
    let half = lambda / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v.abs();
        prefix.push(acc);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect())
}

/// Moving-average window `lambda`, peak radius `rho` and threshold `pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub lambda: usize,
    pub rho: usize,
    pub pi: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            lambda: 45,
            rho: 55,
            pi: 0.051,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda == 0 || self.lambda % 2 == 0 {
            return Err(Error::param("anomaly", "detect.lambda", "must be odd and at least 1"));
        }
        if self.rho == 0 {
            return Err(Error::param("anomaly", "detect.rho", "must be at least 1"));
        }
        if !(self.pi > 0.0) {
            return Err(Error::param("anomaly", "detect.pi", "must be positive"));
        }
        Ok(())
    }
}

/// Indices of the greedy radius-`rho` maxima of `smoothed` above `pi`.
pub fn detect_peaks(smoothed: &[f64], rho: usize, pi: f64) -> Vec<usize> {
    greedy_extrema(smoothed, rho, ExtremumKind::Maximum)
        .into_iter()
        .filter(|&k| smoothed[k] > pi)
        .collect()
}

/// Blocks (positions in the residual series) flagged as premature: the
/// blocks holding a peak of the smoothed series above the threshold, each
/// at most once, in increasing order.
pub fn detect_premature(smoothed: &[f64], params: &DetectorParams, grid: usize) -> Result<Vec<usize>> {
    params.validate()?;
    if grid == 0 {
        return Err(Error::param("anomaly", "grid", "must be positive"));
    }
    let series = ResidualSeries {
        grid,
        values: Vec::new(),
        pulse_ids: Vec::new(),
        excluded: Vec::new(),
    };
    let mut blocks: Vec<usize> = detect_peaks(smoothed, params.rho, params.pi)
        .into_iter()
        .map(|k| series.block_of(k))
        .collect();
    blocks.dedup();
    Ok(blocks)
}

/// Threshold detection on a fitted signal.
#[derive(Debug, Clone)]
pub struct Detection {
    pub series: ResidualSeries,
    pub smoothed: Vec<f64>,
    /// Flagged blocks; excluded pulses are never flagged.
    pub blocks: Vec<usize>,
    /// Pulse ids of the flagged blocks.
    pub pulse_ids: Vec<usize>,
}

pub fn detect(fit: &FitResult, pulses: &PulseSet, params: &DetectorParams, scale: ResidualScale) -> Result<Detection> {
    let series = residual_series(fit, pulses, scale)?;
    let smoothed = smooth_abs(&series.values, params.lambda)?;
    let blocks: Vec<usize> = detect_premature(&smoothed, params, series.grid)?
        .into_iter()
        .filter(|&b| !series.excluded[b])
        .collect();
    let pulse_ids = blocks.iter().map(|&b| series.pulse_ids[b]).collect();
    Ok(Detection {
        series,
        smoothed,
        blocks,
        pulse_ids,
    })
}

/// Reference label of every segmented pulse: the label of the reference
/// event nearest the pulse start within `tol` seconds, `None` when there is
/// no such event. AF and artifact events give `None` as well.
pub fn label_pulses(pulses: &PulseSet, reference: &BeatAnnotation, tol: f64) -> Vec<Option<BeatLabel>> {
    let times = reference.times();
    pulses
        .pulses
        .iter()
        .map(|p| {
            let t = pulses.pulse_start_time(p);
            let k = nearest(&times, t)?;
            if (times[k] - t).abs() > tol {
                return None;
            }
            let label = reference.events()[k].label;
            label.is_classifiable().then_some(label)
        })
        .collect()
}

/// Index of the element of sorted `times` closest to `t` (earlier on ties).
pub(crate) fn nearest(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        return Some(0);
    }
    if i == times.len() {
        return Some(i - 1);
    }
    if t - times[i - 1] <= times[i] - t {
        Some(i - 1)
    } else {
        Some(i)
    }
}
