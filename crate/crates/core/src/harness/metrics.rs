use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge-type agreement between predicted and ground-truth labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub accuracy: f64,
    /// F1 with every non-zero type counted as "edge present".
    pub f1: f64,
    /// Accuracy under the best relabelling of the predicted types.
    pub permutation_accuracy: f64,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

impl EdgeMetrics {
    pub fn from_labels(predicted: &[usize], truth: &[usize], edge_types: usize) -> Result<Self> {
        let mut confusion = vec![vec![0u64; edge_types]; edge_types];
        Self::accumulate(&mut confusion, predicted, truth)?;
        Ok(Self::from_confusion(confusion))
    }

    pub fn accumulate(confusion: &mut [Vec<u64>], predicted: &[usize], truth: &[usize]) -> Result<()> {
        if predicted.len() != truth.len() {
            return Err(Error::ShapeMismatch {
                op: "edge_metrics",
                lhs: vec![predicted.len()],
                rhs: vec![truth.len()],
            });
        }
        let k = confusion.len();
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= k || t >= k {
                return Err(Error::Domain {
                    op: "edge_metrics",
                    detail: format!("label pair ({t}, {p}) with {k} edge types"),
                });
            }
            confusion[t][p] += 1;
        }
        Ok(())
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let k = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();

        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (t, row) in confusion.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                match (t != 0, p != 0) {
                    (true, true) => tp += c,
                    (false, true) => fp += c,
                    (true, false) => fn_ += c,
                    (false, false) => {}
                }
            }
        }
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);

        let mut best = 0u64;
        for perm in permutations(k) {
            let hits = (0..k).map(|t| confusion[t][perm[t]]).sum();
            best = best.max(hits);
        }
        EdgeMetrics {
            accuracy: ratio(correct, total),
            f1,
            permutation_accuracy: ratio(best, total),
            confusion,
        }
    }
}

/// All permutations of `0..k` in lexicographic order.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Squared-error accumulators for one prediction window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTotals {
    /// Summed squared error at each step of the window.
    pub error: Vec<f64>,
    /// Summed squared ground-truth displacement between consecutive steps.
    pub displacement: Vec<f64>,
    /// Number of scalar terms per step.
    pub terms: usize,
}

impl ErrorTotals {
    pub fn new(horizon: usize) -> Self {
        ErrorTotals {
            error: vec![0.0; horizon],
            displacement: vec![0.0; horizon],
            terms: 0,
        }
    }

    pub fn merge(&mut self, other: &ErrorTotals) {
        for (a, b) in self.error.iter_mut().zip(&other.error) {
            *a += b;
        }
        for (a, b) in self.displacement.iter_mut().zip(&other.displacement) {
            *a += b;
        }
        self.terms += other.terms;
    }

    /// Mean squared error over steps `1..=h`.
    pub fn mse(&self, h: usize) -> f64 {
        if self.terms == 0 {
            return 0.0;
        }
        self.error[..h].iter().sum::<f64>() / (self.terms * h) as f64
    }

    /// Error energy over ground-truth displacement energy for steps `1..=h`;
    /// `0/0` is reported as 0.
    pub fn msen(&self, h: usize) -> f64 {
        let e: f64 = self.error[..h].iter().sum();
        let d: f64 = self.displacement[..h].iter().sum();
        if d == 0.0 {
            if e == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            e / d
        }
    }

    /// Cumulative sum of the per-step mean squared error.
    pub fn cumulative_curve(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.error
            .iter()
            .map(|e| {
                acc += if self.terms == 0 { 0.0 } else { e / self.terms as f64 };
                acc
            })
            .collect()
    }
}
