use super::metrics::{score, Confusion};
use super::{detect_peaks, smooth_abs, DetectorParams, ResidualSeries};
use crate::error::{Error, Result};
use crate::registration::median;

/// One signal of the tuning corpus: its residual series and, per block,
/// whether the pulse is premature (`None` for pulses left out of scoring).
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub series: ResidualSeries,
    pub truth: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorGrid {
    pub lambdas: Vec<usize>,
    pub rhos: Vec<usize>,
    pub pis: Vec<f64>,
}

impl Default for DetectorGrid {
    fn default() -> Self {
        Self {
            lambdas: (15..=75).step_by(10).collect(),
            rhos: (25..=85).step_by(10).collect(),
            pis: (0..=16).map(|k| 0.02 + 0.005 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedDetector {
    /// Optimum found with each corpus entry held out.
    pub folds: Vec<DetectorParams>,
    /// Confusion of each fold's optimum on its held-out entry.
    pub held_out: Vec<Confusion>,
    /// Medians of the fold optima. The integer parameters use the lower
    /// median so the result stays on the grid (and `lambda` odd).
    pub median: DetectorParams,
}

/// Binary confusion (0 = regular, 1 = premature) of one entry for
/// every threshold, given the peaks of its smoothed series.
fn confusions_for_peaks(entry: &CorpusEntry, smoothed: &[f64], peaks: &[usize], pis: &[f64]) -> Vec<Confusion> {
    pis.iter()
        .map(|&pi| {
            let mut flagged = vec![false; entry.truth.len()];
            for &k in peaks {
                if smoothed[k] > pi {
                    flagged[entry.series.block_of(k)] = true;
                }
            }
            let mut c = Confusion::new(2);
            for (b, t) in entry.truth.iter().enumerate() {
                if let Some(t) = t {
                    if !entry.series.excluded[b] {
                        c.add(usize::from(*t), usize::from(flagged[b]));
                    }
                }
            }
            c
        })
        .collect()
}

fn objective(c: &Confusion) -> f64 {
    let s = score(c);
    s.sensitivity[1].unwrap_or(0.0) + s.specificity.unwrap_or(0.0)
}

fn lower_median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Leave-one-out grid search maximising sensitivity plus specificity of
/// the pooled training entries. Ties go to the first grid point in
/// `(lambda, rho, pi)` order.
pub fn optimize_detector(corpus: &[CorpusEntry], grid: &DetectorGrid) -> Result<OptimizedDetector> {
    if grid.lambdas.is_empty() || grid.rhos.is_empty() || grid.pis.is_empty() {
        return Err(Error::param("anomaly", "grid", "empty parameter grid"));
    }
    if corpus.len() < 2 {
        return Err(Error::param("anomaly", "corpus", "need at least two signals"));
    }
    for &l in &grid.lambdas {
        DetectorParams {
            lambda: l,
            rho: 1,
            pi: 1.0,
        }
        .validate()?;
    }
    if grid.rhos.contains(&0) {
        return Err(Error::param("anomaly", "detect.rho", "must be at least 1"));
    }
    for e in corpus {
        if e.truth.len() != e.series.blocks() {
            return Err(Error::param(
                "anomaly",
                "corpus",
                "one truth entry per residual block required",
            ));
        }
    }
    // table[e][l][r][p]
    let table: Vec<Vec<Vec<Vec<Confusion>>>> = crate::par::map(corpus, |e| -> Result<_> {
        grid.lambdas
            .iter()
            .map(|&l| {
                let s = smooth_abs(&e.series.values, l)?;
                Ok(grid
                    .rhos
                    .iter()
                    .map(|&r| {
                        let peaks = detect_peaks(&s, r, f64::NEG_INFINITY);
                        confusions_for_peaks(e, &s, &peaks, &grid.pis)
                    })
                    .collect())
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut folds = Vec::with_capacity(corpus.len());
    let mut held_out = Vec::with_capacity(corpus.len());
    for out in 0..corpus.len() {
        let mut best = f64::NEG_INFINITY;
        let mut arg = (0, 0, 0);
        for (li, _) in grid.lambdas.iter().enumerate() {
            for (ri, _) in grid.rhos.iter().enumerate() {
                for (pi, _) in grid.pis.iter().enumerate() {
                    let mut pooled = Confusion::new(2);
                    for (e, t) in table.iter().enumerate() {
                        if e != out {
                            pooled.merge(&t[li][ri][pi]);
                        }
                    }
                    let v = objective(&pooled);
                    if v > best {
                        best = v;
                        arg = (li, ri, pi);
                    }
                }
            }
        }
        folds.push(DetectorParams {
            lambda: grid.lambdas[arg.0],
            rho: grid.rhos[arg.1],
            pi: grid.pis[arg.2],
        });
        held_out.push(table[out][arg.0][arg.1][arg.2].clone());
    }
    let median = DetectorParams {
        lambda: lower_median(folds.iter().map(|p| p.lambda).collect()),
        rho: lower_median(folds.iter().map(|p| p.rho).collect()),
        pi: median(&folds.iter().map(|p| p.pi).collect::<Vec<_>>()),
    };
    Ok(OptimizedDetector {
        folds,
        held_out,
        median,
    })
}
