//! Functional representation of pulses and maximum alignment by
//! piecewise-linear time warping.

use crate::decomposition::{NormalizedPulse, PulseSet};
use crate::error::{Error, Result};

/// Piecewise-linear interpolant of a pulse on normalised time `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PulseCurve {
    /// `times` must be increasing from 0 to 1.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::param(
                "registration",
                "pulse",
                "times and values differ in length",
            ));
        }
        if times.len() < 2 {
            return Err(Error::param(
                "registration",
                "pulse",
                "need at least two samples to interpolate",
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(
                "registration",
                "pulse",
                "times must be strictly increasing",
            ));
        }
        Ok(Self { times, values })
    }

    pub fn from_pulse(pulse: &NormalizedPulse) -> Result<Self> {
        Self::new(pulse.unit_times(), pulse.values.clone())
    }

    /// Value at `u`, clamped to the end values outside the sampled range.
    pub fn eval(&self, u: f64) -> f64 {
        interp(&self.times, &self.values, u)
    }

    /// Evaluates on the registration grid `(j - 1) / r`.
    pub fn on_grid(&self, r: usize) -> Vec<f64> {
        grid(r).map(|u| self.eval(u)).collect()
    }
}

/// The registration grid `0, 1/r, ..., (r-1)/r`.
pub fn grid(r: usize) -> impl Iterator<Item = f64> {
    (0..r).map(move |j| j as f64 / r as f64)
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let s = xs.partition_point(|&t| t <= x) - 1;
    if x == xs[s] {
        return ys[s];
    }
    ys[s] + (ys[s + 1] - ys[s]) * (x - xs[s]) / (xs[s + 1] - xs[s])
}

/// Median of the previous maximum locations; the first pulse (empty
/// history) is its own target.
pub fn target_max_location(history: &[f64], current: f64) -> f64 {
    if history.is_empty() {
        current
    } else {
        median(history)
    }
}

/// Median with the even-count convention of averaging the central pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Strictly increasing piecewise-linear bijection of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearWarp {
    breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseLinearWarp {
    pub fn identity() -> Self {
        Self {
            breakpoints: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    /// The warp through `(0, 0)`, `(target, location)`, `(1, 1)`: it sends
    /// the target grid location onto the pulse's own maximum.
    pub fn through(target: f64, location: f64) -> Result<Self> {
        for (name, v) in [("target", target), ("location", location)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::param(
                    "registration",
                    if name == "target" { "m" } else { "S" },
                    format!("{name} {v} must lie strictly inside (0, 1)"),
                ));
            }
        }
        Ok(Self {
            breakpoints: vec![(0.0, 0.0), (target, location), (1.0, 1.0)],
        })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn is_identity(&self) -> bool {
        self.breakpoints.iter().all(|(u, w)| u == w)
    }

    pub fn eval(&self, u: f64) -> f64 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self.breakpoints.iter().copied().unzip();
        interp(&xs, &ys, u)
    }

    pub fn inverse(&self, w: f64) -> f64 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self.breakpoints.iter().copied().unzip();
        interp(&ys, &xs, w)
    }
}

/// A pulse after registration, sampled on the common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredPulse {
    /// `r` values `W((j - 1) / r)`.
    pub values: Vec<f64>,
    pub warp: PiecewiseLinearWarp,
    pub pulse_id: usize,
    pub duration: f64,
    pub amplitude: f64,
    /// Maximum location of the source pulse, as a fraction of its duration.
    pub max_location: f64,
    /// Target maximum location this pulse was aligned to.
    pub target: f64,
}

/// Composes the pulse curve with the warp through `(target, location)` and
/// samples it on the `r`-point grid.
pub fn warp_pulse(curve: &PulseCurve, target: f64, location: f64, r: usize) -> Result<(Vec<f64>, PiecewiseLinearWarp)> {
    if r < 3 {
        return Err(Error::param("registration", "registration.grid", "must be at least 3"));
    }
    let warp = PiecewiseLinearWarp::through(target, location)?;
    let values = grid(r).map(|u| curve.eval(warp.eval(u))).collect();
    Ok((values, warp))
}

/// Maps grid values back to the pulse's own normalised sample times.
///
/// Registration read the pulse at `h(u)`, so the pulse at time `tau` is the
/// registered curve at `h^{-1}(tau)`. Locations past the last grid point
/// are linearly extrapolated from the final two grid values.
pub fn unwarp(grid_values: &[f64], warp: &PiecewiseLinearWarp, unit_times: &[f64]) -> Vec<f64> {
    let r = grid_values.len();
    unit_times
        .iter()
        .map(|&tau| {
            let x = (warp.inverse(tau) * r as f64).clamp(0.0, r as f64);
            let j = (x.floor() as usize).min(r - 2);
            let frac = x - j as f64;
            grid_values[j] + (grid_values[j + 1] - grid_values[j]) * frac
        })
        .collect()
}

/// All registered pulses of a signal plus the grid-sampled, unwarped
/// curves used for the median target.
#[derive(Debug, Clone)]
pub struct Registration {
    pub grid_size: usize,
    pub pulses: Vec<RegisteredPulse>,
    /// Each pulse's curve on the grid before warping.
    pub resampled: Vec<Vec<f64>>,
}

impl Registration {
    /// Pointwise median of the unwarped curves of pulses `0..i`: the
    /// alignment target for pulse `i`. `None` for the first pulse.
    pub fn target_curve(&self, i: usize) -> Option<Vec<f64>> {
        if i == 0 || i > self.resampled.len() {
            return None;
        }
        let prev = &self.resampled[..i];
        Some(
            (0..self.grid_size)
                .map(|j| median(&prev.iter().map(|c| c[j]).collect::<Vec<_>>()))
                .collect(),
        )
    }
}

/// Registers every retained pulse in order. Targets are causal: pulse `i`
/// is aligned to the median maximum location of pulses before it. A
/// degenerate warp (maximum on a pulse edge) falls back to the identity.
pub fn register(pulses: &PulseSet, r: usize) -> Result<Registration> {
    if r < 3 {
        return Err(Error::param("registration", "registration.grid", "must be at least 3"));
    }
    let mut history = Vec::with_capacity(pulses.n_retained);
    let mut out = Vec::with_capacity(pulses.n_retained);
    let mut resampled = Vec::with_capacity(pulses.n_retained);
    for p in pulses.retained() {
        let curve = PulseCurve::from_pulse(p)?;
        let location = p.max_location();
        let target = target_max_location(&history, location);
        let (values, warp) = match warp_pulse(&curve, target, location, r) {
            Ok(v) => v,
            Err(_) => {
                log::debug!(
                    "pulse {}: degenerate warp (m={target}, S={location}), using identity",
                    p.id
                );
                (curve.on_grid(r), PiecewiseLinearWarp::identity())
            }
        };
        history.push(location);
        resampled.push(curve.on_grid(r));
        out.push(RegisteredPulse {
            values,
            warp,
            pulse_id: p.id,
            duration: p.duration,
            amplitude: p.amplitude,
            max_location: location,
            target,
        });
    }
    Ok(Registration {
        grid_size: r,
        pulses: out,
        resampled,
    })
}
