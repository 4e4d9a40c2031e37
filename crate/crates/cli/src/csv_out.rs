//! CSV artifacts. Numbers use the shortest round-trip form; missing values
//! are empty fields.

use std::fmt::Write as _;

use ppg_shape::anomaly::{Detection, IbiComparison, Scores};
use ppg_shape::decomposition::{Decomposition, Pulse};
use ppg_shape::registration::Registration;
use ppg_shape::statespace::{FitResult, QuantileBands, Reconstruction};
use ppg_shape::SampledSignal;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn component1(d: &Decomposition) -> String {
    let mut rows: Vec<(f64, &str, f64)> = d
        .extrema
        .minima
        .iter()
        .map(|e| (e.time, "min", e.value))
        .chain(d.extrema.maxima.iter().map(|e| (e.time, "max", e.value)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from("type,time,value\n");
    for (t, kind, v) in rows {
        let _ = writeln!(out, "{kind},{t},{v}");
    }
    out
}

pub fn envelope(signal: &SampledSignal, d: &Decomposition) -> String {
    let mut out = String::from("time,value\n");
    for (k, v) in d.envelope.sample_values().iter().enumerate() {
        let _ = writeln!(out, "{},{v}", signal.time(k));
    }
    out
}

pub fn pulses(signal: &SampledSignal, d: &Decomposition) -> String {
    let mut out = String::from("pulse_id,sample_idx,time,normalized_value,excluded_flag\n");
    for p in &d.pulses.pulses {
        match p {
            Pulse::Normalized(n) => {
                for (j, v) in n.values[..n.len].iter().enumerate() {
                    let k = n.start + j;
                    let _ = writeln!(out, "{},{k},{},{v},0", n.id, signal.time(k));
                }
            }
            Pulse::Excluded { id, start, len } => {
                for k in *start..start + len {
                    let _ = writeln!(out, "{id},{k},{},,1", signal.time(k));
                }
            }
        }
    }
    out
}

pub fn fit(signal: &SampledSignal, rec: &Reconstruction) -> String {
    let mut out = String::from("time,original,fitted,residual\n");
    for (k, x) in signal.samples().iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{x},{},{}",
            signal.time(k),
            opt(rec.fitted[k]),
            opt(rec.residual[k])
        );
    }
    out
}

pub fn states(fit: &FitResult) -> String {
    let p = fit.design.ncols();
    let mut out = String::from("pulse_id");
    for j in 1..=p {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for pf in &fit.pulses {
        let _ = write!(out, "{}", pf.pulse_id);
        for v in &pf.xhat {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn hyper(fit: &FitResult) -> String {
    let mut out = String::from("pulse_id,sigma2,sigma_c2,phi\n");
    for pf in &fit.pulses {
        let h = &pf.hyper;
        let _ = writeln!(out, "{},{},{},{}", pf.pulse_id, h.sigma2, h.sigma_c2(), h.phi);
    }
    out
}

pub fn quantiles(q: &QuantileBands) -> String {
    let mut out = String::from("source,prob,grid_idx,value\n");
    for (source, curves) in [("model", &q.model), ("empirical", &q.empirical)] {
        for (prob, curve) in q.probs.iter().zip(curves) {
            for (j, v) in curve.iter().enumerate() {
                let _ = writeln!(out, "{source},{prob},{j},{v}");
            }
        }
    }
    out
}

pub fn registered(reg: &Registration) -> String {
    let mut out = String::from("pulse_id,grid_idx,value\n");
    for p in &reg.pulses {
        for (j, v) in p.values.iter().enumerate() {
            let _ = writeln!(out, "{},{j},{v}", p.pulse_id);
        }
    }
    out
}

pub fn warps(reg: &Registration) -> String {
    let mut out = String::from("pulse_id,m_i,S_i\n");
    for p in &reg.pulses {
        let _ = writeln!(out, "{},{},{}", p.pulse_id, p.target, p.max_location);
    }
    out
}

/// The residual series the detector ran on, sample by sample.
pub fn residuals(det: &Detection) -> String {
    let r = det.series.grid;
    let mut out = String::from("index,pulse_id,grid_idx,excluded,residual,smoothed\n");
    for (k, (v, s)) in det.series.values.iter().zip(&det.smoothed).enumerate() {
        let b = k / r;
        let _ = writeln!(
            out,
            "{k},{},{},{},{v},{s}",
            det.series.pulse_ids[b],
            k % r,
            u8::from(det.series.excluded[b])
        );
    }
    out
}

pub fn ibis(times: &[f64], ibis: &[f64]) -> String {
    let mut out = String::from("time,ibi\n");
    for (t, v) in times[1..].iter().zip(ibis) {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}

pub fn ibi_metrics(c: &IbiComparison) -> String {
    format!(
        "metric,value\ncorrelation,{}\nrelative_abs_error,{}\nmissed_pct,{}\nextra_pct,{}\nmatched_beats,{}\nmatched_intervals,{}\n",
        opt(c.correlation),
        opt(c.relative_abs_error),
        c.missed_pct,
        c.extra_pct,
        c.matched_beats,
        c.matched_intervals
    )
}

pub fn metrics(s: &Scores, class_names: &[&str], extra: &[(&str, String)]) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "accuracy,{}", opt(s.accuracy));
    for (name, v) in class_names.iter().zip(&s.sensitivity) {
        let _ = writeln!(out, "sensitivity_{name},{}", opt(*v));
    }
    if class_names.len() == 2 {
        let _ = writeln!(out, "specificity,{}", opt(s.specificity));
    }
    for (k, v) in extra {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

pub fn confusion(rows: &[Vec<u64>], class_names: &[&str]) -> String {
    let mut out = String::from("truth");
    for n in class_names {
        let _ = write!(out, ",pred_{n}");
    }
    out.push('\n');
    for (n, row) in class_names.iter().zip(rows) {
        out.push_str(n);
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}
