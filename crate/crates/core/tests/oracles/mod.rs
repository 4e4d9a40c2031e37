//! Slow, direct reference implementations the library is checked against.
//! Shared by the property suites here and the acceptance run in the CLI
//! crate.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ppg_shape::statespace::{toeplitz, Hyperparams};

/// Minima and per-pulse maxima straight from the definition: window scan,
/// identical-run reduction, forced endpoints, earliest largest sample
/// strictly between consecutive minima.
pub fn extrema(z: &[f64], radius: usize) -> (Vec<usize>, Vec<usize>) {
    let n = z.len();
    let flagged: Vec<usize> = (0..n)
        .filter(|&i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            (lo..=hi).all(|k| z[i] <= z[k])
        })
        .collect();
    let mut minima = Vec::new();
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &i in &flagged {
        match runs.last_mut() {
            Some(run) if *run.last().unwrap() + 1 == i && z[run[0]] == z[i] => run.push(i),
            _ => runs.push(vec![i]),
        }
    }
    for run in runs {
        minima.push(run[0]);
        if run.len() > 1 {
            minima.push(*run.last().unwrap());
        }
    }
    minima.push(0);
    minima.push(n - 1);
    minima.sort_unstable();
    minima.dedup();
    let maxima = minima
        .windows(2)
        .map(|w| {
            let inner: Vec<usize> = if w[1] > w[0] + 1 {
                (w[0] + 1..w[1]).collect()
            } else {
                vec![w[0]]
            };
            let best = inner.iter().map(|&k| z[k]).fold(f64::NEG_INFINITY, f64::max);
            *inner.iter().find(|&&k| z[k] == best).unwrap()
        })
        .collect();
    (minima, maxima)
}

fn interpolate(z: &[f64], knots: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let f = (k - a) as f64 / (b - a) as f64;
            *slot = z[a] + (z[b] - z[a]) * f;
        }
    }
    for &k in knots {
        out[k] = z[k];
    }
    out
}

/// Global largest-violation-first envelope extension, re-interpolating
/// the whole signal after every added knot.
pub fn envelope_knots(z: &[f64], minima: &[usize]) -> Vec<usize> {
    let mut knots = minima.to_vec();
    loop {
        let line = interpolate(z, &knots);
        let mut worst: Option<(usize, f64)> = None;
        for k in 0..z.len() {
            let gap = line[k] - z[k];
            if gap > 0.0 && worst.is_none_or(|(_, g)| gap > g) {
                worst = Some((k, gap));
            }
        }
        match worst {
            Some((k, _)) => {
                knots.push(k);
                knots.sort_unstable();
            }
            None => return knots,
        }
    }
}

/// Cox-de Boor recursion, `0 / 0 = 0`, with the last nonempty span closed
/// on the right.
pub fn bspline(knots: &[f64], i: usize, d: usize, t: f64) -> f64 {
    if d == 0 {
        let (a, b) = (knots[i], knots[i + 1]);
        let last = *knots.last().unwrap();
        return if (a <= t && t < b) || (t == last && a < b && b == last) {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let l = knots[i + d] - knots[i];
    if l > 0.0 {
        v += (t - knots[i]) / l * bspline(knots, i, d - 1, t);
    }
    let r = knots[i + d + 1] - knots[i + 1];
    if r > 0.0 {
        v += (knots[i + d + 1] - t) / r * bspline(knots, i + 1, d - 1, t);
    }
    v
}

/// Filtered means `E[X_n | Y_1..Y_n]` for every `n`, by conditioning the
/// joint Gaussian of states and observations directly.
///
/// `X_0 ~ N(0, I)`, `X_i = X_{i-1} + xi_i` and
/// `Y_i = H (X_i + eta_i) + e_i` with `eta ~ N(0, sigma_eps2 Sigma)`,
/// `e ~ N(0, sigma2 I)`.
pub fn batch_filtered_means(h: &DMatrix<f64>, hyper: &Hyperparams, ys: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let (r, p) = h.shape();
    let state_cov = |i: usize, j: usize| -> f64 { 1.0 + i.min(j) as f64 * hyper.sigma_xi2 };
    let hht = h * h.transpose();
    let mut own = h * toeplitz(p, hyper.phi) * h.transpose() * hyper.sigma_eps2;
    for k in 0..r {
        own[(k, k)] += hyper.sigma2;
    }
    (1..=ys.len())
        .map(|n| {
            let mut cyy = DMatrix::zeros(n * r, n * r);
            let mut cxy = DMatrix::zeros(p, n * r);
            let mut y = DVector::zeros(n * r);
            for i in 1..=n {
                y.rows_mut((i - 1) * r, r).copy_from(&ys[i - 1]);
                for j in 1..=n {
                    let mut block = &hht * state_cov(i, j);
                    if i == j {
                        block += &own;
                    }
                    cyy.view_mut(((i - 1) * r, (j - 1) * r), (r, r)).copy_from(&block);
                }
                cxy.view_mut((0, (i - 1) * r), (p, r))
                    .copy_from(&(h.transpose() * state_cov(n, i)));
            }
            let chol = cyy.cholesky().expect("joint covariance is positive definite");
            cxy * chol.solve(&y)
        })
        .collect()
}

/// `sum v^T Theta^{-1} v + log|Theta|` with dense `r x r` algebra.
pub fn dense_neg_log_lik(h: &DMatrix<f64>, hyper: &Hyperparams, entries: &[(DVector<f64>, DMatrix<f64>)]) -> f64 {
    entries
        .iter()
        .map(|(v, prior_gamma)| {
            let theta = ppg_shape::statespace::predictive_cov(h, prior_gamma, hyper);
            let inv = theta.clone().try_inverse().expect("invertible");
            (v.transpose() * inv * v)[(0, 0)] + theta.determinant().ln()
        })
        .sum()
}

/// Centred moving average of `|x|` with the window cut at the ends.
pub fn smooth_abs(x: &[f64], lambda: usize) -> Vec<f64> {
    let half = lambda / 2;
    (0..x.len())
        .map(|i| {
            let window: Vec<f64> = x
                .iter()
                .enumerate()
                .filter(|(k, _)| k.abs_diff(i) <= half)
                .map(|(_, v)| v.abs())
                .collect();
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}
