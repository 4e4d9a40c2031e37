//! Uniformly sampled signals: CSV ingestion, decimation and zero-phase
//! band-pass filtering.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Maximum deviation (seconds) of a timestamp from the uniform grid.
pub const SPACING_TOLERANCE: f64 = 1e-6;

/// Anti-alias cutoff used by [`downsample`], as a fraction of the target rate.
pub const ANTI_ALIAS_FRACTION: f64 = 0.4;

/// A uniformly sampled, finite, non-empty time series.
///
/// Sample `k` sits at `t0 + k / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<f64>,
    fs: f64,
    t0: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param("signal-io", "fs", format!("must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::Input("signal has no samples".into()));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("sample {k} is not finite")));
        }
        if !t0.is_finite() {
            return Err(Error::param("signal-io", "t0", "must be finite"));
        }
        Ok(Self { samples, fs, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Timestamp of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }

    /// Total covered duration, `(n - 1) / fs`.
    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.fs
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Same sampling grid, different values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.fs, self.t0)
    }

    /// Two-column `time,value` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 24);
        out.push_str("time,value\n");
        for (k, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.time(k), v);
        }
        out
    }
}

/// Reads a signal CSV from disk. See [`parse_csv`] for the accepted layouts.
pub fn load_csv(path: impl AsRef<Path>, fs_override: Option<f64>) -> Result<SampledSignal> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, fs_override)
}

/// Parses either `time,value` rows (sampling rate inferred from the
/// spacing) or a single `value` column whose rate comes from `fs_override`
/// or a `# fs=<Hz>` comment line. A non-numeric first row is a header.
pub fn parse_csv(text: &str, fs_override: Option<f64>) -> Result<SampledSignal> {
    let mut header_fs = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen_data = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("fs=") {
                let fs: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Input(format!("line {}: bad fs comment `{line}`", lineno + 1)))?;
                header_fs = Some(fs);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                seen_data = true;
                rows.push(vals);
            }
            Err(_) if !seen_data && rows.is_empty() => {} // header
            Err(_) => {
                return Err(Error::Input(format!("line {}: non-numeric row `{line}`", lineno + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Input("empty file: no data rows".into()));
    }
    let width = rows[0].len();
    if let Some((k, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Input(format!(
            "data row {} has {} columns, expected {width}",
            k + 1,
            rows[k].len()
        )));
    }
    match width {
        1 => {
            let fs = fs_override.or(header_fs).ok_or_else(|| {
                Error::Input("single-column input needs a sampling rate (`# fs=<Hz>` or --fs)".into())
            })?;
            SampledSignal::new(rows.into_iter().map(|r| r[0]).collect(), fs, 0.0)
        }
        2 => {
            let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let values: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            let fs = match fs_override {
                Some(fs) => fs,
                None => infer_fs(&times)?,
            };
            check_uniform(&times, fs)?;
            SampledSignal::new(values, fs, times[0])
        }
        w => Err(Error::Input(format!("expected 1 or 2 columns, found {w}"))),
    }
}

fn infer_fs(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Input(
            "cannot infer sampling rate from a single timestamped row".into(),
        ));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Input("timestamps are not increasing".into()));
    }
    let fs = 1.0 / dt;
    // Snap to an integer rate when the file was written with one.
    let rounded = fs.round();
    Ok(if (fs - rounded).abs() < 1e-6 * fs.max(1.0) {
        rounded
    } else {
        fs
    })
}

fn check_uniform(times: &[f64], fs: f64) -> Result<()> {
    let t0 = times[0];
    for (k, t) in times.iter().enumerate() {
        let expected = t0 + k as f64 / fs;
        if (t - expected).abs() > SPACING_TOLERANCE {
            return Err(Error::Input(format!(
                "non-uniform spacing at row {}: t={t}, expected {expected} (tolerance {SPACING_TOLERANCE} s)",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Low-pass at `0.4 * target_fs` (zero phase) followed by integer decimation.
pub fn downsample(signal: &SampledSignal, target_fs: f64) -> Result<SampledSignal> {
    if !(target_fs > 0.0) {
        return Err(Error::param("signal-io", "io.target_fs", "must be positive"));
    }
    let ratio = signal.fs / target_fs;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::param(
            "signal-io",
            "target_fs",
            format!("decimation ratio {ratio} from {} Hz is not an integer", signal.fs),
        ));
    }
    let factor = factor as usize;
    if factor == 1 {
        return Ok(signal.clone());
    }
    let sos = butterworth_lowpass4(ANTI_ALIAS_FRACTION * target_fs, signal.fs);
    let filtered = filtfilt(&sos, &signal.samples);
    let kept: Vec<f64> = filtered.into_iter().step_by(factor).collect();
    SampledSignal::new(kept, target_fs, signal.t0)
}

/// Zero-phase band-pass: second-order Butterworth high-pass at `f_hp`
/// cascaded with a second-order Butterworth low-pass at `f_lp`, run
/// forward and backward. `f_hp = 0` skips the high-pass section.
pub fn bandpass(signal: &SampledSignal, f_hp: f64, f_lp: f64) -> Result<SampledSignal> {
    let nyq = signal.fs / 2.0;
    if !(f_hp >= 0.0 && f_hp < f_lp && f_lp < nyq) {
        return Err(Error::param(
            "signal-io",
            "io.band_hp",
            format!("need 0 <= f_hp < f_lp < fs/2, got f_hp={f_hp}, f_lp={f_lp}, fs/2={nyq}"),
        ));
    }
    let mut sos = Vec::with_capacity(2);
    if f_hp > 0.0 {
        sos.push(Biquad::highpass(f_hp, signal.fs, FRAC_1_SQRT_2));
    }
    sos.push(Biquad::lowpass(f_lp, signal.fs, FRAC_1_SQRT_2));
    signal.with_samples(filtfilt(&sos, &signal.samples))
}

/// One second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform low-pass with pre-warped cutoff.
    pub fn lowpass(fc: f64, fs: f64, q: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    pub fn highpass(fc: f64, fs: f64, q: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a unit step in steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[1] * g]
    }
}

fn butterworth_lowpass4(fc: f64, fs: f64) -> Vec<Biquad> {
    // Pole-pair quality factors of a 4th-order Butterworth prototype.
    [0.541_196_100_146_197, 1.306_562_964_876_376_6]
        .iter()
        .map(|&q| Biquad::lowpass(fc, fs, q))
        .collect()
}

fn sosfilt(sos: &[Biquad], x: &mut [f64], scale: f64) {
    let mut in_level = scale;
    for s in sos {
        let zi = s.step_state();
        let (mut z1, mut z2) = (zi[0] * in_level, zi[1] * in_level);
        for v in x.iter_mut() {
            let xin = *v;
            let y = s.b[0] * xin + z1;
            z1 = s.b[1] * xin - s.a[0] * y + z2;
            z2 = s.b[2] * xin - s.a[1] * y;
            *v = y;
        }
        in_level *= s.dc_gain();
    }
}

/// Forward-backward filtering with odd-reflection padding and
/// steady-state initial conditions.
pub fn filtfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 || sos.is_empty() {
        return x.to_vec();
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for k in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[k]);
    }
    ext.extend_from_slice(x);
    for k in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - k]);
    }
    let first = ext[0];
    sosfilt(sos, &mut ext, first);
    ext.reverse();
    let first = ext[0];
    sosfilt(sos, &mut ext, first);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * freq * k as f64 / fs).sin()).collect()
    }

    #[test]
    fn two_column_infers_rate() {
        let s = parse_csv("time,value\n0,1.0\n0.015625,2.0\n", None).unwrap();
        assert_eq!(s.fs(), 64.0);
        assert_eq!(s.samples(), &[1.0, 2.0]);
    }

    #[test]
    fn one_column_uses_header_rate() {
        let s = parse_csv("# fs=10\n5\n5\n5\n", None).unwrap();
        assert_eq!(s.fs(), 10.0);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn rejects_non_uniform_spacing() {
        let err = parse_csv("0,1\n0.01,2\n0.03,3\n", None).unwrap_err();
        assert!(err.to_string().contains("non-uniform"), "{err}");
    }

    #[test]
    fn rejects_empty_and_garbage() {
        assert!(parse_csv("", None).is_err());
        assert!(parse_csv("time,value\n", None).is_err());
        assert!(parse_csv("# fs=4\n1\nabc\n", None).is_err());
        assert!(parse_csv("1\n2\n", None).is_err(), "missing fs");
    }

    #[test]
    fn csv_round_trip() {
        let s = SampledSignal::new(vec![0.5, -1.25, 3.0], 64.0, 2.0).unwrap();
        let back = parse_csv(&s.to_csv(), None).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn downsample_by_two_keeps_every_other_sample() {
        let s = SampledSignal::new(sine(1.0, 128.0, 512), 128.0, 0.0).unwrap();
        let d = downsample(&s, 64.0).unwrap();
        assert_eq!(d.fs(), 64.0);
        assert_eq!(d.len(), 256);
        // 1 Hz is far inside the 25.6 Hz passband.
        for k in 20..236 {
            assert!((d.samples()[k] - s.samples()[2 * k]).abs() < 1e-4);
        }
    }

    #[test]
    fn downsample_identity_and_bad_ratio() {
        let s = SampledSignal::new(vec![1.0, 2.0, 3.0], 64.0, 0.0).unwrap();
        assert_eq!(downsample(&s, 64.0).unwrap(), s);
        let s = SampledSignal::new(vec![1.0; 10], 100.0, 0.0).unwrap();
        assert!(downsample(&s, 64.0).is_err());
    }

    #[test]
    fn bandpass_removes_dc() {
        let s = SampledSignal::new(vec![3.7; 640], 64.0, 0.0).unwrap();
        let y = bandpass(&s, 0.3, 5.0).unwrap();
        for v in &y.samples()[32..608] {
            assert!(v.abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn bandpass_keeps_one_hertz_amplitude() {
        let fs = 64.0;
        let n = 64 * 40;
        let s = SampledSignal::new(sine(1.0, fs, n), fs, 0.0).unwrap();
        let y = bandpass(&s, 0.3, 5.0).unwrap();
        // Discrete Fourier magnitude at 1 Hz over an interior window of whole periods.
        let (lo, hi) = (64 * 10, 64 * 30);
        let dft = |x: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, v) in x[lo..hi].iter().enumerate() {
                let w = 2.0 * PI * k as f64 / fs;
                re += v * w.cos();
                im += v * w.sin();
            }
            2.0 * (re * re + im * im).sqrt() / (hi - lo) as f64
        };
        let a_in = dft(s.samples());
        let a_out = dft(y.samples());
        assert!((a_in - 1.0).abs() < 1e-9);
        assert!((a_out / a_in - 1.0).abs() < 0.05, "gain {}", a_out / a_in);
    }

    #[test]
    fn bandpass_rejects_inverted_band() {
        let s = SampledSignal::new(vec![0.0; 100], 64.0, 0.0).unwrap();
        assert!(bandpass(&s, 5.0, 0.3).is_err());
        assert!(bandpass(&s, 0.3, 40.0).is_err());
    }
}
