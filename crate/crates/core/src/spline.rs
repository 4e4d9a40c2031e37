//! Clamped uniform B-spline bases on `[0, 1]` and their design matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::registration::grid;

/// A clamped B-spline basis with uniformly spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpec {
    degree: usize,
    interior_knots: usize,
    knots: Vec<f64>,
}

impl SplineSpec {
    pub fn new(degree: usize, interior_knots: usize) -> Self {
        let mut knots = vec![0.0; degree + 1];
        let spans = interior_knots + 1;
        knots.extend((1..spans).map(|k| k as f64 / spans as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self {
            degree,
            interior_knots,
            knots,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> usize {
        self.interior_knots
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `q + d + 1`.
    pub fn dim(&self) -> usize {
        self.interior_knots + self.degree + 1
    }

    /// Knot span containing `t`; the final span is closed on the right.
    fn span(&self, t: f64) -> usize {
        let p = self.dim();
        if t >= 1.0 {
            return p - 1;
        }
        // Largest i in [d, p-1] with knots[i] <= t.
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        i.clamp(self.degree, p - 1)
    }

    /// The `d + 1` possibly nonzero basis values at `t`, starting at index
    /// `first`. Cox-de Boor triangle, evaluated without divisions by zero.
    pub fn nonzero(&self, t: f64) -> (usize, Vec<f64>) {
        let d = self.degree;
        let i = self.span(t);
        let u = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = t - u[i + 1 - j];
            right[j] = u[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (i - d, n)
    }

    /// All `p` basis values at `t`.
    pub fn basis_eval(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::param("spline-basis", "t", format!("{t} outside [0, 1]")));
        }
        let mut out = vec![0.0; self.dim()];
        let (first, vals) = self.nonzero(t);
        out[first..first + vals.len()].copy_from_slice(&vals);
        Ok(out)
    }

    /// Rows are the basis evaluated on the registration grid `(k - 1) / r`.
    pub fn design_matrix(&self, r: usize) -> DMatrix<f64> {
        let p = self.dim();
        if r < p {
            log::warn!("design matrix has fewer rows ({r}) than basis functions ({p})");
        }
        let mut h = DMatrix::zeros(r, p);
        for (k, t) in grid(r).enumerate() {
            let (first, vals) = self.nonzero(t);
            for (j, v) in vals.into_iter().enumerate() {
                h[(k, first + j)] = v;
            }
        }
        h
    }

    /// Evaluates the spline with coefficients `coef` at `t`.
    pub fn eval_curve(&self, coef: &[f64], t: f64) -> f64 {
        let (first, vals) = self.nonzero(t.clamp(0.0, 1.0));
        vals.iter().zip(&coef[first..]).map(|(b, c)| b * c).sum()
    }
}

impl Default for SplineSpec {
    /// Cubic with ten interior knots.
    fn default() -> Self {
        Self::new(3, 10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_indicators() {
        let s = SplineSpec::new(0, 1);
        assert_eq!(s.basis_eval(0.25).unwrap(), vec![1.0, 0.0]);
        assert_eq!(s.basis_eval(0.75).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn hat_function_peak() {
        let s = SplineSpec::new(1, 1);
        assert_eq!(s.basis_eval(0.5).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn right_endpoint_is_closed() {
        for d in 0..4 {
            let s = SplineSpec::new(d, 3);
            let b = s.basis_eval(1.0).unwrap();
            assert_eq!(*b.last().unwrap(), 1.0);
            assert_eq!(b.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn outside_unit_interval_is_an_error() {
        let s = SplineSpec::default();
        assert!(s.basis_eval(-0.01).is_err());
        assert!(s.basis_eval(1.01).is_err());
    }

    #[test]
    fn step_design_matrix() {
        let h = SplineSpec::new(0, 1).design_matrix(4);
        let expected = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 0., 0., 1., 0., 1.]);
        // Grid is 0, 1/4, 1/2, 3/4 and the knot at 1/2 opens the second span.
        assert_eq!(h, expected);
    }

    #[test]
    fn default_design_matrix_shape() {
        let h = SplineSpec::new(3, 10).design_matrix(64);
        assert_eq!(h.shape(), (64, 14));
        for k in 0..64 {
            let row = h.row(k);
            assert!(row.iter().filter(|v| **v != 0.0).count() <= 4);
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
