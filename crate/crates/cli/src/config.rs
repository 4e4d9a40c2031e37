//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ppg_shape::anomaly::{DetectorParams, FeatureSet, Kernel, Pairing, ResidualScale, SvmParams};
use ppg_shape::decomposition::DecompositionParams;
use ppg_shape::pipeline::PipelineConfig;
use ppg_shape::spline::SplineSpec;
use ppg_shape::statespace::FitConfig;
use ppg_shape::synth::{random_schedule, Bump, PrematureEffect, PrematureKind, SynthConfig};

use crate::failure::{Failure, Outcome};

pub struct Key {
    pub name: &'static str,
    /// Empty means "not set".
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const KEYS: &[Key] = &[
    key(
        "io.fs",
        "",
        "sampling rate for single-column input without a `# fs=` header",
    ),
    key("io.target_fs", "", "downsample to this rate first (integer factor)"),
    key(
        "io.band_hp",
        "",
        "band-pass lower edge in Hz (set together with io.band_lp)",
    ),
    key("io.band_lp", "", "band-pass upper edge in Hz"),
    key(
        "decomposition.radius",
        "auto",
        "extrema search radius in samples; auto = 0.25 s",
    ),
    key(
        "decomposition.min_pulse_len",
        "auto",
        "shortest retained pulse in samples; auto = 0.25 s",
    ),
    key("registration.grid", "64", "points per registered pulse (r)"),
    key("spline.degree", "3", "B-spline degree"),
    key(
        "spline.interior_knots",
        "10",
        "interior knots; basis size is degree + knots + 1",
    ),
    key("fit.window_s", "20", "likelihood window in pulses"),
    key(
        "fit.rho_split",
        "0.5",
        "share of the shape variance given to the observation part",
    ),
    key(
        "fit.reopt_every",
        "1",
        "re-estimate hyperparameters every this many pulses",
    ),
    key(
        "fit.max_evals",
        "200",
        "Nelder-Mead evaluation budget per re-estimation",
    ),
    key(
        "quantiles.probs",
        "0.05,0.5,0.95",
        "probabilities of the shape quantile bands",
    ),
    key(
        "quantiles.pulses",
        "50",
        "bands summarise this many final fitted pulses",
    ),
    key("detect.lambda", "45", "moving-average window in samples (odd)"),
    key("detect.rho", "55", "peak search radius in samples"),
    key("detect.pi", "0.051", "detection threshold on the smoothed residual"),
    key(
        "detect.scale",
        "innovation",
        "residual scale: innovation or standardized",
    ),
    key("classify.features", "Y,eps,X", "feature blocks: any of Y, eps, X"),
    key("classify.kernel", "linear", "SVM kernel: linear, polynomial or sigmoid"),
    key(
        "classify.pairing",
        "current",
        "feature pulse: current, next or paired-next",
    ),
    key("classify.c", "1", "SVM box constraint"),
    key("match.tol", "0.15", "beat matching tolerance in seconds"),
    key("synth.fs", "64", "sampling rate in Hz"),
    key("synth.duration", "60", "duration in seconds"),
    key("synth.mean_hr", "72", "mean heart rate in beats per minute"),
    key("synth.hr_jitter", "0.05", "SD of the inter-beat interval in seconds"),
    key(
        "synth.template",
        "0.2:0.08:1;0.4:0.1:0.5;0.3:0.2:0.3",
        "pulse bumps center:width:height, `;`-separated",
    ),
    key("synth.baseline_amplitude", "0.3", "baseline wander amplitude"),
    key("synth.respiration_freq", "0.25", "baseline wander frequency in Hz"),
    key("synth.am_depth", "0.1", "respiratory amplitude modulation depth"),
    key("synth.noise_sd", "0", "white noise SD"),
    key("synth.snr_db", "", "if set, overrides synth.noise_sd to reach this SNR"),
    key(
        "synth.schedule",
        "",
        "premature beats as index:PAC|PVC, comma-separated",
    ),
    key(
        "synth.premature_fraction",
        "0",
        "random premature share when no schedule is given",
    ),
    key("synth.pvc_share", "0.5", "share of PVCs among random premature beats"),
    key("synth.seed", "0", "random seed (overridden by --seed)"),
    key("synth.pac.ibi_factor", "0.6", "PAC coupling interval factor"),
    key("synth.pac.amplitude_factor", "0.8", "PAC amplitude factor"),
    key("synth.pac.width_factor", "1", "PAC template width factor"),
    key("synth.pac.pause_factor", "1.2", "interval after a PAC, as a factor"),
    key("synth.pvc.ibi_factor", "0.55", "PVC coupling interval factor"),
    key("synth.pvc.amplitude_factor", "0.6", "PVC amplitude factor"),
    key("synth.pvc.width_factor", "1.4", "PVC template width factor"),
    key(
        "synth.pvc.pause_factor",
        "1.45",
        "interval after a PVC (compensatory pause)",
    ),
];

/// Explicitly set keys; everything else falls back to [`KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

impl RunConfig {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cli: config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::input(format!("{e} (in {})", path.display())))
    }

    /// One `key = value` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Outcome<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::input(format!("cli: config line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, name: &str, value: &str) -> Outcome<()> {
        if lookup(name).is_none() {
            return Err(Failure::input(format!("cli: unknown config key `{name}`")));
        }
        self.values.insert(name.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, name: &str) -> &str {
        match self.values.get(name) {
            Some(v) => v,
            None => lookup(name).map_or("", |k| k.default),
        }
    }

    fn bad(name: &str, value: &str, why: impl std::fmt::Display) -> Failure {
        let module = name.split('.').next().unwrap_or("cli");
        Failure::input(format!("{module}: invalid value `{value}` for `{name}`: {why}"))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Outcome<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(name);
        v.parse().map_err(|e| Self::bad(name, v, e))
    }

    pub fn optional<T: FromStr>(&self, name: &str) -> Outcome<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(name).is_empty() {
            Ok(None)
        } else {
            self.get(name).map(Some)
        }
    }

    fn auto(&self, name: &str) -> Outcome<Option<usize>> {
        if self.raw(name) == "auto" {
            Ok(None)
        } else {
            self.get(name).map(Some)
        }
    }

    fn list_f64(&self, name: &str) -> Outcome<Vec<f64>> {
        let v = self.raw(name);
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Self::bad(name, v, e)))
            .collect()
    }

    pub fn fs_override(&self) -> Outcome<Option<f64>> {
        self.optional("io.fs")
    }

    /// Pipeline settings for an input sampled at `input_fs`; decomposition
    /// values left on `auto` follow the rate after resampling.
    pub fn pipeline(&self, input_fs: f64) -> Outcome<PipelineConfig> {
        let band = match (self.optional::<f64>("io.band_hp")?, self.optional::<f64>("io.band_lp")?) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => {
                return Err(Self::bad(
                    "io.band_hp",
                    self.raw("io.band_hp"),
                    "set both band edges or neither",
                ))
            }
        };
        let target_fs: Option<f64> = self.optional("io.target_fs")?;
        let decomposition = match (
            self.auto("decomposition.radius")?,
            self.auto("decomposition.min_pulse_len")?,
        ) {
            (None, None) => None,
            (radius, min_len) => {
                let auto = DecompositionParams::for_rate(target_fs.unwrap_or(input_fs));
                Some(DecompositionParams {
                    radius: radius.unwrap_or(auto.radius),
                    min_pulse_len: min_len.unwrap_or(auto.min_pulse_len),
                })
            }
        };
        let mut fit = FitConfig {
            window: self.get("fit.window_s")?,
            rho_split: self.get("fit.rho_split")?,
            reopt_every: self.get("fit.reopt_every")?,
            ..FitConfig::default()
        };
        fit.optimizer.max_evals = self.get("fit.max_evals")?;
        fit.validate()?;
        let degree: usize = self.get("spline.degree")?;
        let knots: usize = self.get("spline.interior_knots")?;
        Ok(PipelineConfig {
            target_fs,
            band,
            decomposition,
            grid_size: self.get("registration.grid")?,
            spline: SplineSpec::new(degree, knots),
            fit,
        })
    }

    pub fn quantile_probs(&self) -> Outcome<Vec<f64>> {
        self.list_f64("quantiles.probs")
    }

    pub fn detector(&self) -> Outcome<(DetectorParams, ResidualScale)> {
        let p = DetectorParams {
            lambda: self.get("detect.lambda")?,
            rho: self.get("detect.rho")?,
            pi: self.get("detect.pi")?,
        };
        p.validate()?;
        Ok((p, self.get("detect.scale")?))
    }

    pub fn classifier(&self) -> Outcome<(FeatureSet, Pairing, SvmParams)> {
        let params = SvmParams {
            kernel: self.get::<Kernel>("classify.kernel")?,
            c: self.get("classify.c")?,
            ..SvmParams::default()
        };
        if !(params.c > 0.0) {
            return Err(Self::bad("classify.c", self.raw("classify.c"), "must be positive"));
        }
        Ok((self.get("classify.features")?, self.get("classify.pairing")?, params))
    }

    pub fn tolerance(&self) -> Outcome<f64> {
        let t: f64 = self.get("match.tol")?;
        if !(t > 0.0) {
            return Err(Self::bad("match.tol", self.raw("match.tol"), "must be positive"));
        }
        Ok(t)
    }

    fn effect(&self, prefix: &str) -> Outcome<PrematureEffect> {
        Ok(PrematureEffect {
            ibi_factor: self.get(&format!("{prefix}.ibi_factor"))?,
            amplitude_factor: self.get(&format!("{prefix}.amplitude_factor"))?,
            width_factor: self.get(&format!("{prefix}.width_factor"))?,
            pause_factor: self.get(&format!("{prefix}.pause_factor"))?,
        })
    }

    /// Generator settings plus the requested SNR, if any. The schedule is
    /// drawn here when only a premature fraction is given.
    pub fn synth(&self, seed: Option<u64>) -> Outcome<(SynthConfig, Option<f64>)> {
        let template = parse_template(self.raw("synth.template"))
            .map_err(|why| Self::bad("synth.template", self.raw("synth.template"), why))?;
        let mut cfg = SynthConfig {
            fs: self.get("synth.fs")?,
            duration: self.get("synth.duration")?,
            mean_hr: self.get("synth.mean_hr")?,
            hr_jitter: self.get("synth.hr_jitter")?,
            template,
            baseline_amplitude: self.get("synth.baseline_amplitude")?,
            respiration_freq: self.get("synth.respiration_freq")?,
            am_depth: self.get("synth.am_depth")?,
            noise_sd: self.get("synth.noise_sd")?,
            schedule: parse_schedule(self.raw("synth.schedule"))
                .map_err(|why| Self::bad("synth.schedule", self.raw("synth.schedule"), why))?,
            pac: self.effect("synth.pac")?,
            pvc: self.effect("synth.pvc")?,
            seed: match seed {
                Some(s) => s,
                None => self.get("synth.seed")?,
            },
        };
        cfg.validate()?;
        let fraction: f64 = self.get("synth.premature_fraction")?;
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Self::bad(
                "synth.premature_fraction",
                self.raw("synth.premature_fraction"),
                "must lie in [0, 1]",
            ));
        }
        if cfg.schedule.is_empty() && fraction > 0.0 {
            let beats = (cfg.duration * cfg.mean_hr / 60.0).ceil() as usize;
            cfg.schedule = random_schedule(beats, fraction, self.get("synth.pvc_share")?, 3, cfg.seed);
        }
        Ok((cfg, self.optional("synth.snr_db")?))
    }

    /// Every key with its effective value, as printed by `--version`.
    pub fn table(&self) -> String {
        let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for k in KEYS {
            let v = self.raw(k.name);
            let shown = if v.is_empty() { "-" } else { v };
            let _ = writeln!(out, "{:<width$}  {:<12}  {}", k.name, shown, k.help);
        }
        out
    }
}

fn parse_template(s: &str) -> Result<Vec<Bump>, String> {
    let bumps: Vec<Bump> = s
        .split(';')
        .map(str::trim)
        .filter(|b| !b.is_empty())
        .map(|b| {
            let v: Vec<f64> = b
                .split(':')
                .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            match v[..] {
                [center, width, height] => Ok(Bump { center, width, height }),
                _ => Err(format!("bump `{b}` needs center:width:height")),
            }
        })
        .collect::<Result<_, _>>()?;
    if bumps.is_empty() {
        return Err("at least one bump required".into());
    }
    Ok(bumps)
}

fn parse_schedule(s: &str) -> Result<Vec<(usize, PrematureKind)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|e| {
            let (i, kind) = e
                .split_once(':')
                .ok_or_else(|| format!("entry `{e}` needs index:PAC|PVC"))?;
            let i: usize = i.trim().parse().map_err(|_| format!("bad beat index in `{e}`"))?;
            let kind = match kind.trim().to_ascii_uppercase().as_str() {
                "PAC" => PrematureKind::Pac,
                "PVC" => PrematureKind::Pvc,
                other => return Err(format!("unknown premature kind `{other}`")),
            };
            Ok((i, kind))
        })
        .collect()
}
