//! Local extrema, the extended lower envelope, and segmentation of the
//! envelope-corrected signal into amplitude-normalised pulses.
//!
//! Component I is the set of minima and maxima; Component II is the signal
//! minus the lower envelope, cut at the minima and scaled so that every
//! retained pulse peaks at exactly 1.

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

/// A detected extremum, located by sample index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

/// Minima and per-pulse maxima of a signal.
///
/// The first and last samples are always minima, and there is exactly one
/// maximum between each pair of consecutive minima.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremaSet {
    pub minima: Vec<Extremum>,
    pub maxima: Vec<Extremum>,
}

impl ExtremaSet {
    pub fn minima_indices(&self) -> Vec<usize> {
        self.minima.iter().map(|e| e.index).collect()
    }

    pub fn minima_times(&self) -> Vec<f64> {
        self.minima.iter().map(|e| e.time).collect()
    }
}

/// Which side of the greedy comparison a sample must win.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Minimum,
    Maximum,
}

/// Greedy radius test: sample `i` is flagged when it is `>=` (maximum) or
/// `<=` (minimum) every sample within `radius` of it, the window clipped to
/// the bounds. Runs of consecutive flagged samples holding the same value
/// are reduced to their first and last members.
pub fn greedy_extrema(values: &[f64], radius: usize, kind: ExtremumKind) -> Vec<usize> {
    let n = values.len();
    let mut flagged = Vec::new();
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let v = values[i];
        let wins = values[lo..=hi].iter().all(|&w| match kind {
            ExtremumKind::Maximum => v >= w,
            ExtremumKind::Minimum => v <= w,
        });
        if wins {
            flagged.push(i);
        }
    }
    reduce_identical_runs(&flagged, values)
}

fn reduce_identical_runs(flagged: &[usize], values: &[f64]) -> Vec<usize> {
    let mut out = Vec::with_capacity(flagged.len());
    let mut k = 0;
    while k < flagged.len() {
        let mut end = k;
        while end + 1 < flagged.len()
            && flagged[end + 1] == flagged[end] + 1
            && values[flagged[end + 1]] == values[flagged[k]]
        {
            end += 1;
        }
        out.push(flagged[k]);
        if end > k {
            out.push(flagged[end]);
        }
        k = end + 1;
    }
    out
}

/// Detects minima with the greedy radius rule, forces both endpoints into
/// the minima, and takes the largest sample strictly between consecutive
/// minima (earliest on ties) as that pulse's maximum.
pub fn find_extrema(signal: &SampledSignal, radius: usize) -> Result<ExtremaSet> {
    if radius < 1 {
        return Err(Error::param(
            "decomposition",
            "decomposition.radius",
            "must be at least 1 sample",
        ));
    }
    let z = signal.samples();
    let n = z.len();
    if n < 3 {
        return Err(Error::param(
            "decomposition",
            "signal",
            format!("need at least 3 samples, got {n}"),
        ));
    }
    let mut min_idx = greedy_extrema(z, radius, ExtremumKind::Minimum);
    min_idx.push(0);
    min_idx.push(n - 1);
    min_idx.sort_unstable();
    min_idx.dedup();

    let at = |i: usize| Extremum {
        index: i,
        time: signal.time(i),
        value: z[i],
    };
    let maxima = min_idx
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (lo, hi) = if b > a + 1 { (a + 1, b - 1) } else { (a, a) };
            at(argmax_first(z, lo, hi))
        })
        .collect();
    Ok(ExtremaSet {
        minima: min_idx.into_iter().map(at).collect(),
        maxima,
    })
}

/// Index of the largest value in `values[lo..=hi]`, earliest on ties.
fn argmax_first(values: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo + 1..=hi {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// Piecewise-linear lower envelope through a sorted set of sample knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    knots: Vec<usize>,
    values: Vec<f64>,
    fs: f64,
    t0: f64,
}

impl Envelope {
    /// Builds an envelope from knot indices into `signal`. Knots must be
    /// strictly increasing and include the first and last samples.
    pub fn from_knots(signal: &SampledSignal, knots: Vec<usize>) -> Result<Self> {
        let n = signal.len();
        if knots.first() != Some(&0) || knots.last() != Some(&(n - 1)) {
            return Err(Error::param(
                "decomposition",
                "minima",
                "envelope knots must include the first and last samples",
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(
                "decomposition",
                "minima",
                "knots must be strictly increasing",
            ));
        }
        let values = knots.iter().map(|&k| signal.samples()[k]).collect();
        Ok(Self {
            knots,
            values,
            fs: signal.fs(),
            t0: signal.t0(),
        })
    }

    pub fn knot_indices(&self) -> &[usize] {
        &self.knots
    }

    /// Knots as `(time, value)` pairs.
    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.knots
            .iter()
            .zip(&self.values)
            .map(|(&k, &v)| (self.t0 + k as f64 / self.fs, v))
            .collect()
    }

    /// Envelope value at every sample from 0 to the last knot.
    pub fn sample_values(&self) -> Vec<f64> {
        let n = *self.knots.last().unwrap() + 1;
        let mut out = vec![0.0; n];
        for s in 0..self.knots.len() - 1 {
            fill_chord(
                &mut out,
                self.knots[s],
                self.values[s],
                self.knots[s + 1],
                self.values[s + 1],
            );
        }
        out[n - 1] = *self.values.last().unwrap();
        out
    }

    /// Envelope at an arbitrary time, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let x = (t - self.t0) * self.fs;
        let last = self.knots.len() - 1;
        if x <= self.knots[0] as f64 {
            return self.values[0];
        }
        if x >= self.knots[last] as f64 {
            return self.values[last];
        }
        let s = self.knots.partition_point(|&k| (k as f64) <= x) - 1;
        let (a, b) = (self.knots[s] as f64, self.knots[s + 1] as f64);
        self.values[s] + (self.values[s + 1] - self.values[s]) * (x - a) / (b - a)
    }
}

/// Writes the chord between knots `a` and `b` into `out[a..b]`; the value
/// at `a` is the knot value itself.
fn fill_chord(out: &mut [f64], a: usize, va: f64, b: usize, vb: f64) {
    out[a] = va;
    let span = (b - a) as f64;
    for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
        *slot = va + (vb - va) * ((k - a) as f64 / span);
    }
}

/// Extends the minima until the interpolating line never lies above the
/// signal.
///
/// Each step adds the sample with the largest violation (earliest on
/// ties). A new knot only changes the chord it splits, so segments are
/// refined independently; the resulting knot set is the one a global
/// largest-violation-first loop produces.
pub fn build_lower_envelope(signal: &SampledSignal, minima: &[usize]) -> Result<Envelope> {
    let z = signal.samples();
    let mut knots: Vec<usize> = minima.to_vec();
    knots.sort_unstable();
    knots.dedup();
    let initial = knots.clone();
    let mut added = Vec::new();
    let mut chord = vec![0.0; z.len()];
    let mut stack: Vec<(usize, usize)> = initial.windows(2).map(|w| (w[0], w[1])).collect();
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        fill_chord(&mut chord, a, z[a], b, z[b]);
        let mut worst = None;
        let mut worst_gap = 0.0;
        for k in a + 1..b {
            let gap = chord[k] - z[k];
            if gap > worst_gap {
                worst_gap = gap;
                worst = Some(k);
            }
        }
        if let Some(k) = worst {
            added.push(k);
            stack.push((k, b));
            stack.push((a, k));
        }
    }
    knots.extend(added);
    knots.sort_unstable();
    Envelope::from_knots(signal, knots)
}

/// Envelope-corrected signal: `V - L(t)`, non-negative by construction.
pub fn subtract_envelope(signal: &SampledSignal, envelope: &Envelope) -> Vec<f64> {
    signal
        .samples()
        .iter()
        .zip(envelope.sample_values())
        .map(|(v, l)| v - l)
        .collect()
}

/// One pulse of Component II: samples `start..start + len`, plus the
/// closing minimum so that the curve is defined on the whole of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPulse {
    /// Position among all segmented pulses, retained or not.
    pub id: usize,
    pub start: usize,
    pub len: usize,
    /// `len + 1` normalised values; the last is the closing minimum.
    pub values: Vec<f64>,
    /// Shifted amplitude the pulse was divided by.
    pub amplitude: f64,
    /// Offset of the maximum from `start`, in samples.
    pub max_offset: usize,
    /// Pulse duration in seconds, `len / fs`.
    pub duration: f64,
}

impl NormalizedPulse {
    /// Location of the maximum as a fraction of the pulse duration.
    pub fn max_location(&self) -> f64 {
        self.max_offset as f64 / self.len as f64
    }

    /// Normalised time of each stored value, `j / len` for `j = 0..=len`.
    pub fn unit_times(&self) -> Vec<f64> {
        (0..=self.len).map(|j| j as f64 / self.len as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pulse {
    Normalized(NormalizedPulse),
    /// Too short or completely flat; kept as a run of missing values.
    Excluded {
        id: usize,
        start: usize,
        len: usize,
    },
}

impl Pulse {
    pub fn start(&self) -> usize {
        match self {
            Pulse::Normalized(p) => p.start,
            Pulse::Excluded { start, .. } => *start,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Pulse::Normalized(p) => p.len,
            Pulse::Excluded { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn retained(&self) -> Option<&NormalizedPulse> {
        match self {
            Pulse::Normalized(p) => Some(p),
            Pulse::Excluded { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSet {
    pub pulses: Vec<Pulse>,
    pub min_len: usize,
    pub n_retained: usize,
    pub fs: f64,
    pub t0: f64,
}

impl PulseSet {
    pub fn retained(&self) -> impl Iterator<Item = &NormalizedPulse> {
        self.pulses.iter().filter_map(Pulse::retained)
    }

    /// Sum of all pulse durations; equals the signal duration.
    pub fn total_duration(&self) -> f64 {
        self.pulses.iter().map(|p| p.len() as f64).sum::<f64>() / self.fs
    }

    pub fn pulse_start_time(&self, pulse: &Pulse) -> f64 {
        self.t0 + pulse.start() as f64 / self.fs
    }
}

/// Cuts the shifted signal at the minima and normalises each pulse by its
/// shifted maximum. Pulses shorter than `min_len` samples or with zero
/// shifted amplitude are excluded.
pub fn segment(shifted: &[f64], minima: &[usize], min_len: usize, fs: f64, t0: f64) -> Result<PulseSet> {
    if min_len < 1 {
        return Err(Error::param(
            "decomposition",
            "decomposition.min_pulse_len",
            "must be at least 1",
        ));
    }
    if minima.len() < 2 {
        return Err(Error::param(
            "decomposition",
            "minima",
            "need at least two minima to form a pulse",
        ));
    }
    let mut pulses = Vec::with_capacity(minima.len() - 1);
    let mut n_retained = 0;
    for (id, w) in minima.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let closed = &shifted[a..=b];
        let max_offset = argmax_first(closed, 0, len);
        let amplitude = closed[max_offset];
        if len < min_len || !(amplitude > 0.0) {
            pulses.push(Pulse::Excluded { id, start: a, len });
            continue;
        }
        n_retained += 1;
        pulses.push(Pulse::Normalized(NormalizedPulse {
            id,
            start: a,
            len,
            values: closed.iter().map(|v| v / amplitude).collect(),
            amplitude,
            max_offset,
            duration: len as f64 / fs,
        }));
    }
    if n_retained == 0 {
        return Err(Error::NoUsablePulses { total: pulses.len() });
    }
    Ok(PulseSet {
        pulses,
        min_len,
        n_retained,
        fs,
        t0,
    })
}

/// Settings for the full decomposition chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionParams {
    /// Extrema search radius in samples.
    pub radius: usize,
    /// Minimum retained pulse length in samples.
    pub min_pulse_len: usize,
}

impl DecompositionParams {
    /// Quarter-second radius and minimum length at the given rate.
    pub fn for_rate(fs: f64) -> Self {
        let q = ((0.25 * fs).round() as usize).max(1);
        Self {
            radius: q,
            min_pulse_len: q,
        }
    }
}

/// Everything the decomposition stage produces.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub extrema: ExtremaSet,
    pub envelope: Envelope,
    pub shifted: Vec<f64>,
    pub pulses: PulseSet,
}

pub fn decompose(signal: &SampledSignal, params: DecompositionParams) -> Result<Decomposition> {
    let extrema = find_extrema(signal, params.radius)?;
    let minima = extrema.minima_indices();
    let envelope = build_lower_envelope(signal, &minima)?;
    let shifted = subtract_envelope(signal, &envelope);
    let pulses = segment(&shifted, &minima, params.min_pulse_len, signal.fs(), signal.t0())?;
    Ok(Decomposition {
        extrema,
        envelope,
        shifted,
        pulses,
    })
}
