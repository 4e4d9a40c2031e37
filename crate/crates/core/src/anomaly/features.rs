use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::statespace::FitResult;

/// Which per-pulse blocks enter a feature vector; always concatenated in
/// the order data, residual, shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSet {
    /// Registered pulse `Y_i`.
    pub data: bool,
    /// Innovation `Y_i - H X_{i-1}`.
    pub residual: bool,
    /// Shape parameters `X_i`.
    pub shape: bool,
}

impl FeatureSet {
    pub const ALL: Self = Self {
        data: true,
        residual: true,
        shape: true,
    };
    pub const SHAPE: Self = Self {
        data: false,
        residual: false,
        shape: true,
    };

    pub fn block_len(&self, r: usize, p: usize) -> usize {
        r * (self.data as usize + self.residual as usize) + p * self.shape as usize
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// Comma-separated subset of `Y`, `eps`, `X` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let mut set = FeatureSet {
            data: false,
            residual: false,
            shape: false,
        };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name.to_ascii_lowercase().as_str() {
                "y" | "data" => set.data = true,
                "eps" | "e" | "residual" | "epsilon" => set.residual = true,
                "x" | "shape" => set.shape = true,
                other => {
                    return Err(Error::param(
                        "anomaly",
                        "classify.features",
                        format!("unknown feature `{other}`"),
                    ));
                }
            }
        }
        if !(set.data || set.residual || set.shape) {
            return Err(Error::param("anomaly", "classify.features", "empty feature set"));
        }
        Ok(set)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.data, "Y"), (self.residual, "eps"), (self.shape, "X")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Features of the pulse itself.
    #[default]
    Current,
    /// Features of the following pulse.
    Next,
    /// Features of the two following pulses, concatenated.
    PairedNext,
}

impl FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "current" => Ok(Pairing::Current),
            "next" => Ok(Pairing::Next),
            "paired-next" | "paired_next" | "pairednext" => Ok(Pairing::PairedNext),
            other => Err(Error::param(
                "anomaly",
                "classify.pairing",
                format!("unknown pairing `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pairing::Current => "current",
            Pairing::Next => "next",
            Pairing::PairedNext => "paired-next",
        })
    }
}

/// Feature vector for the fitted pulse at position `index` of
/// `fit.pulses`. `None` when the pairing needs successors that were not
/// fitted (end of signal or an excluded pulse in between).
pub fn build_features(fit: &FitResult, index: usize, set: FeatureSet, pairing: Pairing) -> Result<Option<Vec<f64>>> {
    if index >= fit.pulses.len() {
        return Err(Error::param(
            "anomaly",
            "pulse",
            format!("index {index} out of range for {} fitted pulses", fit.pulses.len()),
        ));
    }
    let offsets: &[usize] = match pairing {
        Pairing::Current => &[0],
        Pairing::Next => &[1],
        Pairing::PairedNext => &[1, 2],
    };
    let id = fit.pulses[index].pulse_id;
    let mut out = Vec::new();
    for &o in offsets {
        let Some(pf) = fit.pulses.get(index + o) else {
            return Ok(None);
        };
        if pf.pulse_id != id + o {
            return Ok(None);
        }
        if set.data {
            out.extend_from_slice(&pf.observed);
        }
        if set.residual {
            out.extend_from_slice(&pf.innovation);
        }
        if set.shape {
            out.extend_from_slice(&pf.xhat);
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_feature_sets() {
        assert_eq!("Y,eps,X".parse::<FeatureSet>().unwrap(), FeatureSet::ALL);
        assert_eq!("x".parse::<FeatureSet>().unwrap(), FeatureSet::SHAPE);
        assert!("Y,Z".parse::<FeatureSet>().is_err());
        assert!("".parse::<FeatureSet>().is_err());
        assert_eq!(FeatureSet::ALL.to_string(), "Y,eps,X");
        assert_eq!(FeatureSet::ALL.block_len(64, 14), 64 + 64 + 14);
        assert_eq!("paired-next".parse::<Pairing>().unwrap(), Pairing::PairedNext);
    }
}
