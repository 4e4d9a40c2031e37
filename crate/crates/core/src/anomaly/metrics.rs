use crate::error::{Error, Result};

/// Square confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::param(
                "anomaly",
                "confusion",
                "matrix must be square and non-empty",
            ));
        }
        Ok(Self { counts: rows })
    }

    pub fn from_pairs(classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut c = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.add(t, p);
        }
        c
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    /// Trace over total; `None` for an empty matrix.
    pub accuracy: Option<f64>,
    /// Per true class, `C_ii / sum_j C_ij`; `None` when the class is absent.
    pub sensitivity: Vec<Option<f64>>,
    /// Two-class only: true-negative rate with class 0 as the negative.
    pub specificity: Option<f64>,
}

pub fn score(c: &Confusion) -> Scores {
    let total = c.total();
    let trace: u64 = (0..c.classes()).map(|i| c.counts[i][i]).sum();
    let sensitivity: Vec<Option<f64>> = c
        .counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: u64 = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect();
    Scores {
        accuracy: (total > 0).then(|| trace as f64 / total as f64),
        specificity: if c.classes() == 2 { sensitivity[0] } else { None },
        sensitivity,
    }
}
