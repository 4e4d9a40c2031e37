//! Derivative-free simplex minimisation.

/// Outcome of a [`minimize`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Initial simplex edge along each coordinate.
    pub step: f64,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this fraction of
    /// the best value's magnitude.
    pub ftol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            step: 0.5,
            max_evals: 200,
            ftol: 1e-6,
        }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

impl NelderMead {
    /// Minimises `f` starting from `x0`, which is always one of the initial
    /// vertices: the returned value never exceeds `f(x0)`. Non-finite
    /// objective values are treated as `+inf`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        let mut converged = false;
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if best.is_finite() && (worst - best).abs() <= self.ftol * best.abs().max(1e-12) {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
                centroid.iter().zip(from).map(|(c, w)| c + coef * (c - w)).collect()
            };

            let xr = toward(REFLECT, &simplex[n].0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = toward(EXPAND, &simplex[n].0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            // Outside contraction when the reflection improved on the worst
            // vertex, inside contraction otherwise.
            let coef = if fr < simplex[n].1 { CONTRACT } else { -CONTRACT };
            let xc = toward(coef, &simplex[n].0);
            let fc = eval(&xc, &mut evals);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x_best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x_best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + SHRINK * (v - b))
                    .collect();
                let v = eval(&x, &mut evals);
                *vertex = (x, v);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            evaluations: evals,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let nm = NelderMead {
            max_evals: 2000,
            ftol: 1e-14,
            ..Default::default()
        };
        let m = nm.minimize(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 5.0, &[0.0, 0.0]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] + 2.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_evals: 5000,
            ftol: 1e-16,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn never_worse_than_start_and_respects_budget() {
        let nm = NelderMead {
            max_evals: 10,
            ..Default::default()
        };
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1].cos() + x[2] * x[2];
        let x0 = [0.3, -0.2, 0.1];
        let m = nm.minimize(f, &x0);
        assert!(m.value <= f(&x0));
        // The budget check runs between iterations, which use at most n + 2 calls.
        assert!(m.evaluations <= 10 + 3 + 2);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.2).powi(2) }, &[1.0]);
        assert!(m.value.is_finite());
        assert!(m.x[0] >= 0.0);
    }
}
