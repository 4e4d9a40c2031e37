use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    /// `(gamma x.y + coef0)^degree`; `gamma = None` means `1 / features`.
    Polynomial {
        degree: u32,
        gamma: Option<f64>,
        coef0: f64,
    },
    /// `tanh(gamma x.y + coef0)`; `gamma = None` means `1 / features`.
    Sigmoid {
        gamma: Option<f64>,
        coef0: f64,
    },
}

impl Kernel {
    pub const POLYNOMIAL: Self = Kernel::Polynomial {
        degree: 3,
        gamma: None,
        coef0: 1.0,
    };
    pub const SIGMOID: Self = Kernel::Sigmoid {
        gamma: None,
        coef0: 0.0,
    };

    fn resolved(self, features: usize) -> Self {
        let g = 1.0 / features.max(1) as f64;
        match self {
            Kernel::Polynomial { degree, gamma, coef0 } => Kernel::Polynomial {
                degree,
                gamma: Some(gamma.unwrap_or(g)),
                coef0,
            },
            Kernel::Sigmoid { gamma, coef0 } => Kernel::Sigmoid {
                gamma: Some(gamma.unwrap_or(g)),
                coef0,
            },
            k => k,
        }
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match *self {
            Kernel::Linear => dot,
            Kernel::Polynomial { degree, gamma, coef0 } => (gamma.unwrap_or(1.0) * dot + coef0).powi(degree as i32),
            Kernel::Sigmoid { gamma, coef0 } => (gamma.unwrap_or(1.0) * dot + coef0).tanh(),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Kernel::Linear),
            "polynomial" | "poly" => Ok(Kernel::POLYNOMIAL),
            "sigmoid" => Ok(Kernel::SIGMOID),
            other => Err(Error::param(
                "anomaly",
                "classify.kernel",
                format!("unknown kernel `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Linear => "linear",
            Kernel::Polynomial { .. } => "polynomial",
            Kernel::Sigmoid { .. } => "sigmoid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub kernel: Kernel,
    /// Box constraint `C`.
    pub c: f64,
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: Kernel::Linear,
            c: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// One binary soft-margin machine, `f(x) = sum_i coef_i K(sv_i, x) - rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub support: Vec<Vec<f64>>,
    /// `y_i alpha_i` of each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Final maximal KKT violation.
    pub violation: f64,
}

impl BinaryMachine {
    fn decision(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * kernel.eval(s, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Number of classes, labels `0..classes`.
    pub classes: usize,
    /// Two classes: one machine, class 1 positive. More: one machine per
    /// class against the rest, `None` for classes absent from training.
    pub machines: Vec<Option<BinaryMachine>>,
}

impl SvmModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Raw decision values: one for two classes, one per class otherwise
    /// (`-inf` for untrained classes).
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.machines
            .iter()
            .map(|m| m.as_ref().map_or(f64::NEG_INFINITY, |m| m.decision(&self.kernel, &z)))
            .collect()
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        let d = self.decision_values(x);
        if self.classes == 2 {
            return usize::from(d[0] > 0.0);
        }
        let mut best = 0;
        for (k, v) in d.iter().enumerate() {
            if *v > d[best] {
                best = k;
            }
        }
        best
    }
}

/// Trains on rows `x` with class labels `y` (`0..classes`); two classes
/// give one machine, more classes one-vs-rest machines. Features are
/// standardised with the training mean and standard deviation.
pub fn svm_train(x: &[Vec<f64>], y: &[usize], params: &SvmParams) -> Result<SvmModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::param(
            "anomaly",
            "features",
            "need one label per non-empty feature row",
        ));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::param("anomaly", "features", "feature rows differ in length"));
    }
    if !(params.c > 0.0) {
        return Err(Error::param("anomaly", "classify.c", "must be positive"));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; classes];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::param("anomaly", "labels", "training set holds a single class"));
    }
    let classes = classes.max(2);
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let kernel = params.kernel.resolved(d);
    let gram = Gram::new(&z, &kernel);
    let machines = if classes == 2 {
        let s: Vec<f64> = y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
        vec![Some(smo(&gram, &z, &s, params))]
    } else {
        (0..classes)
            .map(|k| {
                let s: Vec<f64> = y.iter().map(|&c| if c == k { 1.0 } else { -1.0 }).collect();
                (present[k] && s.iter().any(|v| *v < 0.0)).then(|| smo(&gram, &z, &s, params))
            })
            .collect()
    };
    Ok(SvmModel {
        kernel,
        c: params.c,
        mean,
        scale,
        classes,
        machines,
    })
}

pub fn svm_predict(model: &SvmModel, x: &[Vec<f64>]) -> Vec<usize> {
    x.iter().map(|r| model.predict_one(r)).collect()
}

struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn new(z: &[Vec<f64>], kernel: &Kernel) -> Self {
        let n = z.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel.eval(&z[i], &z[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Self { n, k }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

const TAU: f64 = 1e-12;

/// Sequential minimal optimisation of the soft-margin dual with
/// second-order working-set selection. Pair selection is deterministic
/// (lowest index on ties).
fn smo(gram: &Gram, z: &[Vec<f64>], y: &[f64], params: &SvmParams) -> BinaryMachine {
    let n = y.len();
    let c = params.c;
    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a^T Q a - e^T a at a = 0.
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * gram.at(i, j);
    let is_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let is_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut violation = f64::INFINITY;
    for _ in 0..params.max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if is_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !is_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let a = (gram.at(i, i) + gram.at(t, t) - 2.0 * gram.at(i, t)).max(TAU);
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        violation = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || violation < params.tol {
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // rho from the free vectors, or the midpoint of the feasible interval.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(z[t].clone());
            coef.push(y[t] * alpha[t]);
        }
    }
    BinaryMachine {
        support,
        coef,
        rho,
        violation,
    }
}

/// Out-of-fold predictions, holding out one group at a time. Folds run in
/// parallel where threads are available.
pub fn cross_validate(x: &[Vec<f64>], y: &[usize], groups: &[usize], params: &SvmParams) -> Result<Vec<usize>> {
    if x.len() != y.len() || x.len() != groups.len() {
        return Err(Error::param("anomaly", "groups", "need one group per row"));
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::param(
            "anomaly",
            "groups",
            "cross-validation needs at least two groups",
        ));
    }
    let run = |g: usize| -> Result<Vec<(usize, usize)>> {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&k| groups[k] != g);
        let tx: Vec<Vec<f64>> = train.iter().map(|&k| x[k].clone()).collect();
        let ty: Vec<usize> = train.iter().map(|&k| y[k]).collect();
        let model = svm_train(&tx, &ty, params)?;
        Ok(test.into_iter().map(|k| (k, model.predict_one(&x[k]))).collect())
    };
    let per_fold: Vec<Result<Vec<(usize, usize)>>> = crate::par::map(&ids, |&g| run(g));
    let mut out = vec![0; x.len()];
    for fold in per_fold {
        for (k, p) in fold? {
            out[k] = p;
        }
    }
    Ok(out)
}
