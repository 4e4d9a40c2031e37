//! Synthetic PPG-like signals with known beat times and labels.
//!
//! Each beat is a mixture of Gaussian bumps placed after its onset. The
//! signal is the sum of all beats, a sinusoidal baseline wander, a
//! respiratory amplitude modulation and white Gaussian noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::annotation::{BeatAnnotation, BeatEvent, BeatLabel, Provenance};
use crate::error::{Error, Result};
use crate::signal::SampledSignal;
use crate::stats;

/// One Gaussian component of the pulse template, timed from beat onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

/// Rhythm and morphology change caused by a premature beat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrematureEffect {
    /// Multiplier of the interval preceding the premature beat.
    pub ibi_factor: f64,
    pub amplitude_factor: f64,
    pub width_factor: f64,
    /// Multiplier of the interval following the premature beat.
    pub pause_factor: f64,
}

impl PrematureEffect {
    pub const PAC: Self = Self {
        ibi_factor: 0.6,
        amplitude_factor: 0.8,
        width_factor: 1.0,
        pause_factor: 1.2,
    };
    pub const PVC: Self = Self {
        ibi_factor: 0.55,
        amplitude_factor: 0.6,
        width_factor: 1.4,
        pause_factor: 1.45,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrematureKind {
    Pac,
    Pvc,
}

impl PrematureKind {
    pub fn label(self) -> BeatLabel {
        match self {
            PrematureKind::Pac => BeatLabel::Pac,
            PrematureKind::Pvc => BeatLabel::Pvc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub fs: f64,
    /// Seconds.
    pub duration: f64,
    /// Beats per minute.
    pub mean_hr: f64,
    /// Standard deviation of the interbeat interval, seconds.
    pub hr_jitter: f64,
    /// Template components; heights are rescaled so the template peaks at 1.
    pub template: Vec<Bump>,
    pub baseline_amplitude: f64,
    /// Baseline wander and amplitude modulation frequency, Hz.
    pub respiration_freq: f64,
    /// Relative depth of the respiratory amplitude modulation.
    pub am_depth: f64,
    pub noise_sd: f64,
    /// Premature beats as `(beat index, kind)`; index 0 is the first
    /// beat with onset at or after time zero.
    pub schedule: Vec<(usize, PrematureKind)>,
    pub pac: PrematureEffect,
    pub pvc: PrematureEffect,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fs: 64.0,
            duration: 60.0,
            mean_hr: 72.0,
            hr_jitter: 0.05,
            // Systolic wave, dicrotic wave and a broad diastolic runoff that
            // keeps the signal falling into the next foot.
            template: vec![
                Bump {
                    center: 0.2,
                    width: 0.08,
                    height: 1.0,
                },
                Bump {
                    center: 0.4,
                    width: 0.1,
                    height: 0.5,
                },
                Bump {
                    center: 0.3,
                    width: 0.2,
                    height: 0.3,
                },
            ],
            baseline_amplitude: 0.3,
            respiration_freq: 0.25,
            am_depth: 0.1,
            noise_sd: 0.0,
            schedule: Vec::new(),
            pac: PrematureEffect::PAC,
            pvc: PrematureEffect::PVC,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("synth.fs", self.fs),
            ("synth.duration", self.duration),
            ("synth.mean_hr", self.mean_hr),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param("synth", name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("synth.hr_jitter", self.hr_jitter),
            ("synth.noise_sd", self.noise_sd),
            ("synth.baseline_amplitude", self.baseline_amplitude),
            ("synth.am_depth", self.am_depth),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param("synth", name, format!("must be non-negative, got {v}")));
            }
        }
        if self
            .template
            .iter()
            .any(|b| !(b.width > 0.0) || !(b.center >= 0.0) || !(b.height >= 0.0))
        {
            return Err(Error::param(
                "synth",
                "synth.template",
                "bumps need width > 0, center >= 0, height >= 0",
            ));
        }
        Ok(())
    }

    /// Time from onset to the peak of the normalised template.
    pub fn template_peak_time(&self) -> f64 {
        let (t, _) = template_peak(&self.template, 1.0);
        t
    }
}

fn template_value(bumps: &[Bump], width_factor: f64, t: f64) -> f64 {
    bumps
        .iter()
        .map(|b| {
            let w = b.width * width_factor;
            b.height * (-0.5 * ((t - b.center) / w).powi(2)).exp()
        })
        .sum()
}

/// Peak time and value of the un-normalised template, on a 1 ms grid.
fn template_peak(bumps: &[Bump], width_factor: f64) -> (f64, f64) {
    let end = bumps
        .iter()
        .map(|b| b.center + 4.0 * b.width * width_factor)
        .fold(0.0, f64::max);
    let steps = (end * 1000.0).ceil() as usize + 1;
    (0..steps)
        .map(|k| {
            let t = k as f64 / 1000.0;
            (t, template_value(bumps, width_factor, t))
        })
        .fold((0.0, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Generator output.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub signal: SampledSignal,
    /// Noise-free signal on the same grid.
    pub clean: Vec<f64>,
    /// One event per beat at the pulse foot (minimum of the clean signal).
    pub annotation: BeatAnnotation,
    /// Times of the ground-truth minima, one per annotated beat.
    pub truth_minima: Vec<f64>,
    /// Beat onset times.
    pub onsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Beat {
    onset: f64,
    amplitude: f64,
    width_factor: f64,
    label: BeatLabel,
}

/// Draws a reproducible schedule with roughly `fraction` premature beats,
/// a share `pvc_share` of them ventricular. Premature beats are never
/// adjacent and the first and last `margin` beats are left sinus.
pub fn random_schedule(
    n_beats: usize,
    fraction: f64,
    pvc_share: f64,
    margin: usize,
    seed: u64,
) -> Vec<(usize, PrematureKind)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5c4e_d01e);
    let mut out: Vec<(usize, PrematureKind)> = Vec::new();
    if n_beats <= 2 * margin {
        return out;
    }
    let target = (fraction * n_beats as f64).round() as usize;
    let mut candidates: Vec<usize> = (margin..n_beats - margin).collect();
    candidates.shuffle(&mut rng);
    for c in candidates {
        if out.len() == target {
            break;
        }
        if out.iter().any(|(b, _)| b.abs_diff(c) < 3) {
            continue;
        }
        let kind = if rng.random::<f64>() < pvc_share {
            PrematureKind::Pvc
        } else {
            PrematureKind::Pac
        };
        out.push((c, kind));
    }
    out.sort_by_key(|(b, _)| *b);
    out
}

/// Noise standard deviation giving the requested signal-to-noise ratio
/// (power of the mean-removed clean signal over noise power).
pub fn noise_sd_for_snr(clean: &[f64], snr_db: f64) -> f64 {
    stats::std_dev(clean) / 10f64.powf(snr_db / 20.0)
}

pub fn generate(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = (config.duration * config.fs).round() as usize + 1;
    let period = 60.0 / config.mean_hr;
    let (_, raw_peak) = template_peak(&config.template, 1.0);
    if !(raw_peak > 0.0) {
        return Err(Error::param("synth", "synth.template", "template is identically zero"));
    }
    let template: Vec<Bump> = config
        .template
        .iter()
        .map(|b| Bump {
            height: b.height / raw_peak,
            ..*b
        })
        .collect();
    let peak_time = template_peak(&template, 1.0).0;
    // A beat may not start before the previous one has peaked.
    let min_ibi = peak_time;

    let kind_at = |index: usize| config.schedule.iter().find(|(b, _)| *b == index).map(|(_, k)| *k);
    let effect = |k: PrematureKind| match k {
        PrematureKind::Pac => config.pac,
        PrematureKind::Pvc => config.pvc,
    };

    // Three lead-in beats before time zero so the signal starts in steady state.
    let lead_in = 3usize;
    let mut beats = Vec::new();
    let mut onset = 0.3 * period - lead_in as f64 * period;
    let end = config.duration;
    let mut index: isize = -(lead_in as isize);
    while onset < end + period {
        let label = if index >= 0 {
            kind_at(index as usize)
                .map(PrematureKind::label)
                .unwrap_or(BeatLabel::Sinus)
        } else {
            BeatLabel::Sinus
        };
        let (amp_factor, width_factor) = match label {
            BeatLabel::Pac => (config.pac.amplitude_factor, config.pac.width_factor),
            BeatLabel::Pvc => (config.pvc.amplitude_factor, config.pvc.width_factor),
            _ => (1.0, 1.0),
        };
        let am = 1.0 + config.am_depth * (2.0 * std::f64::consts::PI * config.respiration_freq * onset).sin();
        beats.push(Beat {
            onset,
            amplitude: am * amp_factor,
            width_factor,
            label,
        });

        let jitter: f64 = StandardNormal.sample(&mut rng);
        let mut ibi = period + config.hr_jitter * jitter;
        let this_kind = match label {
            BeatLabel::Pac => Some(PrematureKind::Pac),
            BeatLabel::Pvc => Some(PrematureKind::Pvc),
            _ => None,
        };
        if let Some(k) = this_kind {
            ibi *= effect(k).pause_factor;
        }
        if index + 1 >= 0 {
            if let Some(k) = kind_at((index + 1) as usize) {
                ibi *= effect(k).ibi_factor;
            }
        }
        if ibi < min_ibi {
            return Err(Error::param(
                "synth",
                "synth.mean_hr",
                format!("interbeat interval {ibi:.3} s is shorter than the onset-to-peak time ({min_ibi:.3} s); beats overlap"),
            ));
        }
        onset += ibi;
        index += 1;
    }

    let fs = config.fs;
    let mut clean = vec![0.0; n];
    for (k, slot) in clean.iter_mut().enumerate() {
        let t = k as f64 / fs;
        let mut v = config.baseline_amplitude * (2.0 * std::f64::consts::PI * config.respiration_freq * t).sin();
        for b in &beats {
            let dt = t - b.onset;
            if dt < -0.5 || dt > 3.0 {
                continue;
            }
            v += b.amplitude * template_value(&template, b.width_factor, dt);
        }
        *slot = v;
    }

    // Feet: minimum of the clean signal between the midpoint of the two
    // onsets (or the previous peak, if later) and this beat's peak.
    let mut events = Vec::new();
    let mut truth = Vec::new();
    let mut onsets = Vec::new();
    for w in beats.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        if cur.onset < 0.0 || cur.onset >= end {
            continue;
        }
        let from = (prev.onset + peak_time * prev.width_factor).max(0.5 * (prev.onset + cur.onset));
        let lo = (from * fs).ceil().max(0.0) as usize;
        let hi = (((cur.onset + peak_time * cur.width_factor) * fs).floor() as usize).min(n - 1);
        if hi <= lo {
            continue;
        }
        let k = (lo..=hi).min_by(|&a, &b| clean[a].total_cmp(&clean[b])).unwrap();
        let time = k as f64 / fs;
        if events.last().is_some_and(|e: &BeatEvent| e.time >= time) {
            continue;
        }
        events.push(BeatEvent { time, label: cur.label });
        truth.push(time);
        onsets.push(cur.onset);
    }

    let samples: Vec<f64> = clean
        .iter()
        .map(|v| {
            if config.noise_sd > 0.0 {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + config.noise_sd * e
            } else {
                *v
            }
        })
        .collect();
    Ok(Synthetic {
        signal: SampledSignal::new(samples, fs, 0.0)?,
        clean,
        annotation: BeatAnnotation::new(events, Provenance::Reference)?,
        truth_minima: truth,
        onsets,
    })
}

/// `time` CSV of the ground-truth minima.
pub fn minima_csv(times: &[f64]) -> String {
    let mut out = String::from("time\n");
    for t in times {
        out.push_str(&format!("{t}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = SynthConfig {
            noise_sd: 0.05,
            hr_jitter: 0.05,
            seed: 42,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.signal, b.signal);
        assert_eq!(a.annotation, b.annotation);
        let c = generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.signal, c.signal);
    }

    #[test]
    fn constant_rate_beat_count() {
        let cfg = SynthConfig {
            mean_hr: 60.0,
            hr_jitter: 0.0,
            duration: 10.0,
            baseline_amplitude: 0.0,
            am_depth: 0.0,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.annotation.events().len(), 10);
        let ibis: Vec<f64> = s.truth_minima.windows(2).map(|w| w[1] - w[0]).collect();
        for ibi in ibis {
            assert!((ibi - 1.0).abs() <= 1.0 / 64.0 + 1e-12, "{ibi}");
        }
    }

    #[test]
    fn single_pvc_is_annotated_once() {
        let cfg = SynthConfig {
            schedule: vec![(5, PrematureKind::Pvc)],
            hr_jitter: 0.0,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        let pvcs: Vec<_> = s
            .annotation
            .events()
            .iter()
            .filter(|e| e.label == BeatLabel::Pvc)
            .collect();
        assert_eq!(pvcs.len(), 1);
        assert_eq!(pvcs[0].time, s.annotation.events()[5].time);
        // The premature beat arrives early and is followed by a pause.
        let t = s.annotation.times();
        let before = t[5] - t[4];
        let after = t[6] - t[5];
        assert!(
            before < 0.8 * (60.0 / 72.0) && after > 1.1 * (60.0 / 72.0),
            "{before} {after}"
        );
    }

    #[test]
    fn overlapping_beats_are_rejected() {
        let cfg = SynthConfig {
            mean_hr: 400.0,
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn schedule_is_sparse_and_reproducible() {
        let a = random_schedule(400, 0.05, 0.5, 3, 9);
        assert_eq!(a, random_schedule(400, 0.05, 0.5, 3, 9));
        assert_eq!(a.len(), 20);
        assert!(a.windows(2).all(|w| w[1].0 - w[0].0 >= 3));
        assert!(a.iter().any(|(_, k)| *k == PrematureKind::Pvc) && a.iter().any(|(_, k)| *k == PrematureKind::Pac));
    }

    #[test]
    fn snr_noise_level() {
        let clean: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.1).sin()).collect();
        let sd = noise_sd_for_snr(&clean, 20.0);
        assert!((sd - stats::std_dev(&clean) / 10.0).abs() < 1e-15);
    }
}
