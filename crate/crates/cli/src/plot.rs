//! Minimal static SVG charts.

use std::fmt::Write as _;

const W: f64 = 800.0;
const H: f64 = 300.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    /// Points with a missing `y` break the line.
    pub points: Vec<(f64, Option<f64>)>,
}

pub enum Mark {
    Lines(Vec<Series>),
    /// Vertical bars at `x` from zero, e.g. histograms and correlograms.
    Bars {
        x: Vec<f64>,
        y: Vec<f64>,
        width: f64,
    },
}

pub struct Chart {
    pub title: String,
    pub mark: Mark,
    /// Dashed horizontal reference lines.
    pub hlines: Vec<f64>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn bounds(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
    let fold = |it: &mut dyn Iterator<Item = f64>| {
        it.filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (mut x0, mut x1) = fold(&mut xs.clone());
    let (mut y0, mut y1) = fold(&mut ys.clone());
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let m = 0.05 * (y1 - y0);
    Frame {
        x0,
        x1,
        y0: y0 - m,
        y1: y1 + m,
    }
}

fn num(v: f64) -> String {
    format!("{v:.4}")
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

impl Chart {
    pub fn render(&self) -> String {
        let hl = self.hlines.iter().copied();
        let f = match &self.mark {
            Mark::Lines(series) => bounds(
                series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
                series
                    .iter()
                    .flat_map(|s| s.points.iter().filter_map(|p| p.1))
                    .chain(hl),
            ),
            Mark::Bars { x, y, width } => bounds(
                x.iter()
                    .map(|v| v - width / 2.0)
                    .chain(x.iter().map(|v| v + width / 2.0)),
                y.iter().copied().chain(hl).chain([0.0]),
            ),
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            W / 2.0,
            self.title
        );
        let _ = writeln!(
            s,
            r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for (x, anchor) in [(f.x0, "start"), (f.x1, "end")] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="{anchor}">{}</text>"#,
                f.px(x),
                H - PAD + 14.0,
                num(x)
            );
        }
        for y in [f.y0, f.y1] {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                PAD - 4.0,
                f.py(y) + 4.0,
                num(y)
            );
        }
        for &y in &self.hlines {
            let _ = writeln!(
                s,
                r##"<line x1="{PAD}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#555" stroke-dasharray="4 3"/>"##,
                W - PAD,
                f.py(y),
                f.py(y)
            );
        }
        match &self.mark {
            Mark::Lines(series) => {
                for (i, ser) in series.iter().enumerate() {
                    let color = COLORS[i % COLORS.len()];
                    let mut d = String::new();
                    let mut pen_down = false;
                    for &(x, y) in &ser.points {
                        match y {
                            Some(y) if y.is_finite() => {
                                let _ = write!(d, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, f.px(x), f.py(y));
                                pen_down = true;
                            }
                            _ => pen_down = false,
                        }
                    }
                    let _ = writeln!(
                        s,
                        r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
                        d.trim_end()
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                        PAD + 6.0 + 120.0 * i as f64,
                        PAD - 6.0,
                        ser.label
                    );
                }
            }
            Mark::Bars { x, y, width } => {
                let base = f.py(0.0);
                for (&x, &y) in x.iter().zip(y) {
                    let left = f.px(x - width / 2.0);
                    let w = (f.px(x + width / 2.0) - left).max(0.5);
                    let top = f.py(y).min(base);
                    let h = (f.py(y) - base).abs();
                    let _ = writeln!(
                        s,
                        r##"<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="{}"/>"##,
                        COLORS[0]
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Equal-width histogram: bin centres, counts and bin width.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if values.is_empty() || !(hi > lo) {
        return (vec![lo.max(0.0)], vec![values.len() as f64], 1.0);
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        counts[(((v - lo) / w) as usize).min(bins - 1)] += 1.0;
    }
    let centres = (0..bins).map(|i| lo + (i as f64 + 0.5) * w).collect();
    (centres, counts, w)
}
