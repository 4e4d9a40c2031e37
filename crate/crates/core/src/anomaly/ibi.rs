use crate::error::{Error, Result};
use crate::stats;

/// Differences of consecutive beat times.
pub fn extract_ibis(times: &[f64]) -> Result<Vec<f64>> {
    if times.len() < 2 {
        return Err(Error::param("anomaly", "minima", "need at least two beat times"));
    }
    Ok(times.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Pairs beats in time order: each estimated beat takes the nearest
/// still-unmatched reference beat within `tol`. Returns, per estimated
/// beat, the matched reference index.
pub fn match_beats(estimated: &[f64], reference: &[f64], tol: f64) -> Vec<Option<usize>> {
    let mut used = vec![false; reference.len()];
    let mut out = Vec::with_capacity(estimated.len());
    let mut lo = 0;
    for &t in estimated {
        while lo < reference.len() && reference[lo] < t - tol {
            lo += 1;
        }
        let mut best: Option<usize> = None;
        let mut k = lo;
        while k < reference.len() && reference[k] <= t + tol {
            if !used[k] && best.is_none_or(|b| (reference[k] - t).abs() < (reference[b] - t).abs()) {
                best = Some(k);
            }
            k += 1;
        }
        if let Some(b) = best {
            used[b] = true;
        }
        out.push(best);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbiComparison {
    /// Correlation of matched interval pairs; `None` with fewer than two.
    pub correlation: Option<f64>,
    /// Mean of `|IBI_est - IBI_ref| / IBI_ref` over matched pairs.
    pub relative_abs_error: Option<f64>,
    /// Unmatched reference beats, percent of reference beats.
    pub missed_pct: f64,
    /// Unmatched estimated beats, percent of estimated beats.
    pub extra_pct: f64,
    pub matched_beats: usize,
    pub matched_intervals: usize,
}

/// Compares beat sequences through their intervals. Only intervals whose
/// two end beats are matched to consecutive reference beats enter the
/// correlation and the error.
pub fn compare_ibis(estimated: &[f64], reference: &[f64], tol: f64) -> Result<IbiComparison> {
    if estimated.len() < 2 || reference.len() < 2 {
        return Err(Error::param(
            "anomaly",
            "beats",
            "need at least two estimated and two reference beats",
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::param("anomaly", "match.tol", "must be positive"));
    }
    let m = match_beats(estimated, reference, tol);
    let matched_beats = m.iter().flatten().count();
    let mut est = Vec::new();
    let mut refs = Vec::new();
    for k in 1..estimated.len() {
        if let (Some(a), Some(b)) = (m[k - 1], m[k]) {
            if b == a + 1 {
                est.push(estimated[k] - estimated[k - 1]);
                refs.push(reference[b] - reference[a]);
            }
        }
    }
    let correlation = if est.len() >= 2 {
        stats::correlation(&est, &refs)
    } else {
        None
    };
    let relative_abs_error = (!est.is_empty())
        .then(|| est.iter().zip(&refs).map(|(e, r)| (e - r).abs() / r).sum::<f64>() / est.len() as f64);
    Ok(IbiComparison {
        correlation,
        relative_abs_error,
        missed_pct: 100.0 * (reference.len() - matched_beats) as f64 / reference.len() as f64,
        extra_pct: 100.0 * (estimated.len() - matched_beats) as f64 / estimated.len() as f64,
        matched_beats,
        matched_intervals: est.len(),
    })
}
