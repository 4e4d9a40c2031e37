use std::fs;
use std::path::{Path, PathBuf};

use ppg_shape::annotation::{BeatAnnotation, BeatEvent, BeatLabel, Provenance};
use ppg_shape::anomaly::{
    build_features, compare_ibis, detect, extract_ibis, label_pulses, match_beats, score, standardized_residuals,
    svm_predict, svm_train, Confusion, Detection, FeatureSet, Pairing, SvmModel, SvmParams,
};
use ppg_shape::pipeline::{run_decompose, run_fit, FitOutput};
use ppg_shape::signal::load_csv;
use ppg_shape::statespace::shape_quantiles;
use ppg_shape::synth::{generate, minima_csv, noise_sd_for_snr};
use ppg_shape::{stats, SampledSignal};

use crate::config::RunConfig;
use crate::csv_out;
use crate::failure::{Failure, Outcome};
use crate::plot::{histogram, Chart, Mark, Series};

/// Where one input's artifacts go.
pub struct Target {
    pub input: PathBuf,
    pub dir: PathBuf,
}

fn write(dir: &Path, name: &str, body: &str) -> Outcome<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Failure::input(format!("cli: cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("cli: cannot read {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cli: cannot create {}: {e}", dir.display())))
}

fn load(cfg: &RunConfig, path: &Path) -> Outcome<SampledSignal> {
    Ok(load_csv(path, cfg.fs_override()?)?)
}

fn load_annotation(path: &Path, provenance: Provenance) -> Outcome<BeatAnnotation> {
    BeatAnnotation::parse_csv(&read(path)?, provenance)
        .map_err(|e| Failure::input(format!("{e} (in {})", path.display())))
}

fn fit_signal(cfg: &RunConfig, signal: &SampledSignal) -> Outcome<FitOutput> {
    Ok(run_fit(signal, &cfg.pipeline(signal.fs())?)?)
}

pub fn decompose(cfg: &RunConfig, t: &Target) -> Outcome<String> {
    let raw = load(cfg, &t.input)?;
    let (signal, d) = run_decompose(&raw, &cfg.pipeline(raw.fs())?)?;
    write(&t.dir, "component1.csv", &csv_out::component1(&d))?;
    write(&t.dir, "envelope.csv", &csv_out::envelope(&signal, &d))?;
    write(&t.dir, "pulses.csv", &csv_out::pulses(&signal, &d))?;
    Ok(format!(
        "pulses={} retained={} minima={}",
        d.pulses.pulses.len(),
        d.pulses.n_retained,
        d.extrema.minima.len()
    ))
}

pub struct FitOptions {
    pub dump_registration: bool,
    pub plots: bool,
}

pub fn fit(cfg: &RunConfig, t: &Target, opts: &FitOptions) -> Outcome<String> {
    let raw = load(cfg, &t.input)?;
    let out = fit_signal(cfg, &raw)?;
    write(&t.dir, "fit.csv", &csv_out::fit(&out.signal, &out.reconstruction))?;
    write(&t.dir, "states.csv", &csv_out::states(&out.fit))?;
    write(&t.dir, "hyper.csv", &csv_out::hyper(&out.fit))?;
    let n = out.fit.pulses.len();
    let last: usize = cfg.get("quantiles.pulses")?;
    let bands = shape_quantiles(&out.fit, n.saturating_sub(last.max(1))..n, &cfg.quantile_probs()?)?;
    write(&t.dir, "quantiles.csv", &csv_out::quantiles(&bands))?;
    if opts.dump_registration {
        write(&t.dir, "registered.csv", &csv_out::registered(&out.registration))?;
        write(&t.dir, "warps.csv", &csv_out::warps(&out.registration))?;
    }
    if opts.plots {
        fit_plots(&t.dir, &out, &bands)?;
    }
    for w in &out.fit.warnings {
        log::warn!("{}: {w}", t.input.display());
    }
    Ok(format!("relative_rmse={:.6}", out.relative_rmse))
}

fn fit_plots(dir: &Path, out: &FitOutput, bands: &ppg_shape::statespace::QuantileBands) -> Outcome<()> {
    let s = &out.signal;
    let times =
        |v: &[Option<f64>]| -> Vec<(f64, Option<f64>)> { v.iter().enumerate().map(|(k, y)| (s.time(k), *y)).collect() };
    let original: Vec<Option<f64>> = s.samples().iter().map(|&v| Some(v)).collect();
    let overlay = Chart {
        title: "Signal and one-step model fit".into(),
        mark: Mark::Lines(vec![
            Series {
                label: "signal".into(),
                points: times(&original),
            },
            Series {
                label: "fit".into(),
                points: times(&out.reconstruction.fitted),
            },
        ]),
        hlines: vec![],
    };
    write(dir, "overlay.svg", &overlay.render())?;

    let series = standardized_residuals(&out.fit, &out.decomposition.pulses)?;
    let kept: Vec<f64> = series
        .values
        .chunks(series.grid)
        .zip(&series.excluded)
        .filter(|(_, &ex)| !ex)
        .flat_map(|(c, _)| c.iter().copied())
        .collect();
    let resid = Chart {
        title: "Standardized residuals, concatenated over pulses".into(),
        mark: Mark::Lines(vec![Series {
            label: "residual".into(),
            points: series
                .values
                .iter()
                .enumerate()
                .map(|(k, &v)| (k as f64, Some(v)))
                .collect(),
        }]),
        hlines: vec![0.0],
    };
    write(dir, "residuals.svg", &resid.render())?;

    let (x, y, width) = histogram(&kept, 60);
    let hist = Chart {
        title: "Residual histogram".into(),
        mark: Mark::Bars { x, y, width },
        hlines: vec![],
    };
    write(dir, "residual_hist.svg", &hist.render())?;

    let band = stats::white_noise_band(kept.len());
    let acf = stats::acf(&kept, 100);
    let pacf = stats::pacf(&kept, 100);
    for (name, title, lags, vals) in [
        ("residual_acf.svg", "Residual autocorrelation", 0, acf),
        ("residual_pacf.svg", "Residual partial autocorrelation", 1, pacf),
    ] {
        let chart = Chart {
            title: title.into(),
            mark: Mark::Bars {
                x: (0..vals.len()).map(|k| (k + lags) as f64).collect(),
                y: vals,
                width: 0.6,
            },
            hlines: vec![band, -band],
        };
        write(dir, name, &chart.render())?;
    }

    let r = out.fit.grid_size();
    let grid = |curve: &[f64]| -> Vec<(f64, Option<f64>)> {
        curve
            .iter()
            .enumerate()
            .map(|(j, &v)| (j as f64 / r as f64, Some(v)))
            .collect()
    };
    let mut lines = Vec::new();
    for (i, p) in bands.probs.iter().enumerate() {
        lines.push(Series {
            label: format!("model {p}"),
            points: grid(&bands.model[i]),
        });
    }
    for (i, p) in bands.probs.iter().enumerate() {
        lines.push(Series {
            label: format!("data {p}"),
            points: grid(&bands.empirical[i]),
        });
    }
    let q = Chart {
        title: "Pulse shape quantiles".into(),
        mark: Mark::Lines(lines),
        hlines: vec![],
    };
    write(dir, "quantiles.svg", &q.render())
}

pub struct DetectOptions {
    pub classifier: Option<Classifier>,
    pub plots: bool,
}

/// Trained beat classifier and how to build its inputs.
pub struct Classifier {
    model: SvmModel,
    features: FeatureSet,
    pairing: Pairing,
    labels: Vec<BeatLabel>,
}

fn fit_position(out: &FitOutput, pulse_id: usize) -> Option<usize> {
    out.fit.pulses.binary_search_by_key(&pulse_id, |pf| pf.pulse_id).ok()
}

/// Trains on `(signal, annotation)` pairs: every fitted pulse with a
/// classifiable reference label becomes one example. Any `PB` label in the
/// training data switches to two classes (N versus premature).
pub fn train_classifier(cfg: &RunConfig, pairs: &[(PathBuf, PathBuf)]) -> Outcome<Classifier> {
    let (features, pairing, params): (FeatureSet, Pairing, SvmParams) = cfg.classifier()?;
    let tol = cfg.tolerance()?;
    let mut examples: Vec<(Vec<f64>, BeatLabel)> = Vec::new();
    for (sig, ann) in pairs {
        let reference = load_annotation(ann, Provenance::Reference)?;
        let (reference, dropped) = reference.classifiable();
        if dropped > 0 {
            log::info!("{}: {dropped} AF/artifact events left out of training", ann.display());
        }
        let out = fit_signal(cfg, &load(cfg, sig)?)?;
        let labels = label_pulses(&out.decomposition.pulses, &reference, tol);
        for (i, pf) in out.fit.pulses.iter().enumerate() {
            let Some(label) = labels[pf.pulse_id] else { continue };
            if let Some(x) = build_features(&out.fit, i, features, pairing)? {
                examples.push((x, label));
            }
        }
    }
    let binary = examples.iter().any(|(_, l)| *l == BeatLabel::Premature);
    let labels = if binary {
        vec![BeatLabel::Sinus, BeatLabel::Premature]
    } else {
        vec![BeatLabel::Sinus, BeatLabel::Pac, BeatLabel::Pvc]
    };
    let class = |l: BeatLabel| -> usize {
        if binary {
            usize::from(l.is_premature())
        } else {
            labels.iter().position(|&c| c == l).unwrap_or(0)
        }
    };
    let y: Vec<usize> = examples.iter().map(|(_, l)| class(*l)).collect();
    let x: Vec<Vec<f64>> = examples.into_iter().map(|(x, _)| x).collect();
    if x.is_empty() {
        return Err(Failure::input("anomaly: classify training data has no labelled pulses"));
    }
    let model = svm_train(&x, &y, &params)?;
    Ok(Classifier {
        model,
        features,
        pairing,
        labels,
    })
}

pub fn detect_cmd(cfg: &RunConfig, t: &Target, opts: &DetectOptions) -> Outcome<String> {
    let (params, scale) = cfg.detector()?;
    let raw = load(cfg, &t.input)?;
    let out = fit_signal(cfg, &raw)?;
    let det: Detection = detect(&out.fit, &out.decomposition.pulses, &params, scale)?;
    let pulses = &out.decomposition.pulses;
    let mut events = Vec::with_capacity(det.blocks.len());
    for (&b, &id) in det.blocks.iter().zip(&det.pulse_ids) {
        let time = pulses.pulse_start_time(&pulses.pulses[b]);
        let label = match &opts.classifier {
            None => BeatLabel::Premature,
            Some(c) => {
                let x = match fit_position(&out, id) {
                    Some(i) => build_features(&out.fit, i, c.features, c.pairing)?,
                    None => None,
                };
                match x {
                    Some(x) => c.labels[svm_predict(&c.model, &[x])[0]],
                    None => {
                        log::warn!(
                            "{}: pulse {id} lacks the successors its features need; left as PB",
                            t.input.display()
                        );
                        BeatLabel::Premature
                    }
                }
            }
        };
        events.push(BeatEvent { time, label });
    }
    let flagged = events.len();
    let annotation = BeatAnnotation::new(events, Provenance::Detected)?;
    write(&t.dir, "detections.csv", &annotation.to_csv())?;
    write(&t.dir, "residuals.csv", &csv_out::residuals(&det))?;
    if opts.plots {
        let chart = Chart {
            title: format!("Smoothed |residual| (lambda={}, rho={})", params.lambda, params.rho),
            mark: Mark::Lines(vec![Series {
                label: "smoothed".into(),
                points: det
                    .smoothed
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| (k as f64, Some(v)))
                    .collect(),
            }]),
            hlines: vec![params.pi],
        };
        write(&t.dir, "detection.svg", &chart.render())?;
    }
    Ok(format!(
        "flagged={flagged} pulses={} relative_rmse={:.6}",
        pulses.pulses.len(),
        out.relative_rmse
    ))
}

pub fn ibis(cfg: &RunConfig, t: &Target, reference: Option<&Path>) -> Outcome<String> {
    let raw = load(cfg, &t.input)?;
    let (_, d) = run_decompose(&raw, &cfg.pipeline(raw.fs())?)?;
    let times = d.extrema.minima_times();
    let ibis = extract_ibis(&times)?;
    write(&t.dir, "ibis.csv", &csv_out::ibis(&times, &ibis))?;
    let Some(path) = reference else {
        return Ok(format!("beats={}", times.len()));
    };
    let reference = load_annotation(path, Provenance::Reference)?;
    let c = compare_ibis(&times, &reference.times(), cfg.tolerance()?)?;
    write(&t.dir, "ibi_metrics.csv", &csv_out::ibi_metrics(&c))?;
    let show = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.4}"));
    Ok(format!(
        "beats={} correlation={} relative_abs_error={} missed_pct={:.2} extra_pct={:.2}",
        times.len(),
        show(c.correlation),
        show(c.relative_abs_error),
        c.missed_pct,
        c.extra_pct
    ))
}

/// Writes `<prefix>_signal.csv`, `<prefix>_annotations.csv` and
/// `<prefix>_minima.csv`.
pub fn synth(cfg: &RunConfig, seed: Option<u64>, prefix: &Path) -> Outcome<String> {
    let (mut config, snr) = cfg.synth(seed)?;
    if let Some(db) = snr {
        let clean = generate(&ppg_shape::synth::SynthConfig {
            noise_sd: 0.0,
            ..config.clone()
        })?;
        config.noise_sd = noise_sd_for_snr(&clean.clean, db);
    }
    let s = generate(&config)?;
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let name = |suffix: &str| -> PathBuf {
        let mut p = prefix.as_os_str().to_owned();
        p.push(suffix);
        PathBuf::from(p)
    };
    let mut signal = format!("# fs={}\n", s.signal.fs());
    signal.push_str(&s.signal.to_csv());
    for (suffix, body) in [
        ("_signal.csv", signal),
        ("_annotations.csv", s.annotation.to_csv()),
        ("_minima.csv", minima_csv(&s.truth_minima)),
    ] {
        let path = name(suffix);
        fs::write(&path, body).map_err(|e| Failure::input(format!("cli: cannot write {}: {e}", path.display())))?;
    }
    let premature = s.annotation.events().iter().filter(|e| e.label.is_premature()).count();
    Ok(format!(
        "beats={} premature={premature} noise_sd={}",
        s.annotation.events().len(),
        config.noise_sd
    ))
}

/// Scores detected labels against a reference. Each reference event takes
/// the label of the detection matched to it within the tolerance, or `N`
/// when none is. Any `PB` on either side switches to two classes.
pub fn eval(cfg: &RunConfig, detected: &Path, reference: &Path, dir: &Path) -> Outcome<String> {
    let tol = cfg.tolerance()?;
    let (reference, dropped) = load_annotation(reference, Provenance::Reference)?.classifiable();
    if dropped > 0 {
        log::info!("eval: {dropped} AF/artifact reference events excluded");
    }
    let detected = load_annotation(detected, Provenance::Detected)?;
    let binary = reference
        .events()
        .iter()
        .chain(detected.events())
        .any(|e| e.label == BeatLabel::Premature);
    let names: &[&str] = if binary { &["N", "PB"] } else { &["N", "PAC", "PVC"] };
    let class = |l: BeatLabel| -> Outcome<usize> {
        if binary {
            return Ok(usize::from(l.is_premature()));
        }
        match l {
            BeatLabel::Sinus => Ok(0),
            BeatLabel::Pac => Ok(1),
            BeatLabel::Pvc => Ok(2),
            other => Err(Failure::input(format!("anomaly: label {other} cannot be scored"))),
        }
    };
    let m = match_beats(&detected.times(), &reference.times(), tol);
    let mut predicted = vec![BeatLabel::Sinus; reference.events().len()];
    let mut unmatched = 0usize;
    for (d, r) in m.iter().enumerate() {
        match r {
            Some(r) => predicted[*r] = detected.events()[d].label,
            None => unmatched += 1,
        }
    }
    let mut c = Confusion::new(names.len());
    for (e, p) in reference.events().iter().zip(&predicted) {
        c.add(class(e.label)?, class(*p)?);
    }
    let s = score(&c);
    ensure_dir(dir)?;
    write(
        dir,
        "metrics.csv",
        &csv_out::metrics(
            &s,
            names,
            &[
                ("reference_beats", reference.events().len().to_string()),
                ("unmatched_detections", unmatched.to_string()),
                ("excluded_reference", dropped.to_string()),
            ],
        ),
    )?;
    write(dir, "confusion.csv", &csv_out::confusion(c.rows(), names))?;
    Ok(format!(
        "accuracy={}",
        s.accuracy.map_or("NA".into(), |a| format!("{a:.4}"))
    ))
}
