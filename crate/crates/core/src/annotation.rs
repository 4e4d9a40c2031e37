//! Labelled beat events and their `time,label` CSV form.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BeatLabel {
    Sinus,
    Pac,
    Pvc,
    /// Premature beat of unspecified origin (threshold detector output).
    Premature,
    AtrialFibrillation,
    Artifact,
}

impl BeatLabel {
    /// Labels that take part in beat classification.
    pub fn is_classifiable(self) -> bool {
        !matches!(self, BeatLabel::AtrialFibrillation | BeatLabel::Artifact)
    }

    pub fn is_premature(self) -> bool {
        matches!(self, BeatLabel::Pac | BeatLabel::Pvc | BeatLabel::Premature)
    }

    pub fn code(self) -> &'static str {
        match self {
            BeatLabel::Sinus => "N",
            BeatLabel::Pac => "PAC",
            BeatLabel::Pvc => "PVC",
            BeatLabel::Premature => "PB",
            BeatLabel::AtrialFibrillation => "AF",
            BeatLabel::Artifact => "ART",
        }
    }
}

impl fmt::Display for BeatLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for BeatLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "N" | "SINUS" => BeatLabel::Sinus,
            "PAC" => BeatLabel::Pac,
            "PVC" => BeatLabel::Pvc,
            "PB" => BeatLabel::Premature,
            "AF" => BeatLabel::AtrialFibrillation,
            "ART" => BeatLabel::Artifact,
            other => return Err(Error::Input(format!("unknown beat label `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatEvent {
    pub time: f64,
    pub label: BeatLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Reference,
    Detected,
}

/// Beat events with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatAnnotation {
    events: Vec<BeatEvent>,
    pub provenance: Provenance,
}

impl BeatAnnotation {
    pub fn new(events: Vec<BeatEvent>, provenance: Provenance) -> Result<Self> {
        if let Some(w) = events.windows(2).find(|w| !(w[1].time > w[0].time)) {
            return Err(Error::Input(format!(
                "annotation times must be strictly increasing ({} then {})",
                w[0].time, w[1].time
            )));
        }
        if events.iter().any(|e| !e.time.is_finite()) {
            return Err(Error::Input("annotation time is not finite".into()));
        }
        Ok(Self { events, provenance })
    }

    pub fn events(&self) -> &[BeatEvent] {
        &self.events
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    /// Drops AF and artifact rows, returning how many were removed.
    pub fn classifiable(&self) -> (Self, usize) {
        let kept: Vec<BeatEvent> = self
            .events
            .iter()
            .copied()
            .filter(|e| e.label.is_classifiable())
            .collect();
        let dropped = self.events.len() - kept.len();
        (
            Self {
                events: kept,
                provenance: self.provenance,
            },
            dropped,
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,label\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{}", e.time, e.label);
        }
        out
    }

    pub fn parse_csv(text: &str, provenance: Provenance) -> Result<Self> {
        let mut events = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let t = parts.next().unwrap_or("").trim();
            let l = parts.next().unwrap_or("").trim();
            let Ok(time) = t.parse::<f64>() else {
                if events.is_empty() && lineno == 0 {
                    continue; // header
                }
                return Err(Error::Input(format!("annotation line {}: bad time `{t}`", lineno + 1)));
            };
            let label = l
                .parse()
                .map_err(|e| Error::Input(format!("annotation line {}: {e}", lineno + 1)))?;
            events.push(BeatEvent { time, label });
        }
        Self::new(events, provenance)
    }
}
