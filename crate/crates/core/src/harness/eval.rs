use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{EdgeMetrics, ErrorTotals};
use super::predictor::Predictor;
use crate::error::{Error, Result};
use crate::model::edge_labels;
use crate::sim::{Sample, SplitName};

/// Evaluation windows: the encoder reads steps `0..50`, predictions start
/// after `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub horizons: Vec<usize>,
    pub start: usize,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizons: vec![5, 10, 15, 20, 25],
            start: 54,
            batch_size: 32,
        }
    }
}

impl EvalConfig {
    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub mse: f64,
    pub msen: f64,
}

/// Metrics of one model on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub model: String,
    pub split: SplitName,
    pub samples: usize,
    pub horizons: Vec<HorizonMetrics>,
    /// Cumulative per-step MSE over the longest horizon.
    pub curve: Vec<f64>,
    /// MSE of each sample over the longest horizon, in split order.
    pub per_sample_mse: Vec<f64>,
    pub edges: Option<EdgeMetrics>,
}

struct SampleResult {
    totals: ErrorTotals,
    confusion: Option<Vec<Vec<u64>>>,
}

/// Evaluates `predictor` on every sample of a split.
pub fn evaluate(predictor: &Predictor, split: SplitName, samples: &[Sample], cfg: &EvalConfig) -> Result<SplitEvaluation> {
    let horizon = cfg.max_horizon();
    if horizon == 0 || cfg.horizons.contains(&0) {
        return Err(Error::config("horizons must be positive"));
    }
    if let Some(s) = samples.iter().find(|s| cfg.start + horizon >= s.steps) {
        return Err(Error::InvalidShape {
            op: "evaluate",
            detail: format!(
                "horizon {horizon} from step {} exceeds the {} recorded steps",
                cfg.start, s.steps
            ),
        });
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut sizes: Vec<usize> = samples.iter().map(|s| s.nodes).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for n in sizes {
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].nodes == n).collect();
        groups.extend(idx.chunks(cfg.batch_size.max(1)).map(<[usize]>::to_vec));
    }
    let results: Vec<Vec<(usize, SampleResult)>> = groups
        .par_iter()
        .map(|idx| evaluate_batch(predictor, samples, idx, cfg.start, horizon))
        .collect::<Result<_>>()?;

    let mut per_sample = vec![0.0; samples.len()];
    let mut totals = ErrorTotals::new(horizon);
    let mut confusion: Option<Vec<Vec<u64>>> = None;
    for (i, r) in results.into_iter().flatten() {
        per_sample[i] = r.totals.mse(horizon);
        totals.merge(&r.totals);
        if let Some(c) = r.confusion {
            let acc = confusion.get_or_insert_with(|| vec![vec![0; c.len()]; c.len()]);
            for (row, add) in acc.iter_mut().zip(&c) {
                for (a, b) in row.iter_mut().zip(add) {
                    *a += b;
                }
            }
        }
    }
    Ok(SplitEvaluation {
        model: predictor.name(),
        split,
        samples: samples.len(),
        horizons: cfg
            .horizons
            .iter()
            .map(|&h| HorizonMetrics {
                horizon: h,
                mse: totals.mse(h),
                msen: totals.msen(h),
            })
            .collect(),
        curve: totals.cumulative_curve(),
        per_sample_mse: per_sample,
        edges: confusion.map(EdgeMetrics::from_confusion),
    })
}

fn evaluate_batch(
    predictor: &Predictor,
    samples: &[Sample],
    idx: &[usize],
    start: usize,
    horizon: usize,
) -> Result<Vec<(usize, SampleResult)>> {
    let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
    let pred = predictor.predict(&batch, start, horizon)?;
    let e = &pred.episodes;
    let mut out = Vec::with_capacity(batch.len());
    for (b, (&i, s)) in idx.iter().zip(&batch).enumerate() {
        let mut totals = ErrorTotals::new(horizon);
        totals.terms = s.nodes * 3;
        for k in 0..horizon {
            let truth = e.positions_at(start + 1 + k);
            let before = e.positions_at(start + k);
            let guess = &pred.steps[k];
            for n in 0..s.nodes {
                let row = (b * e.nodes + n) * 3;
                for d in 0..3 {
                    let err = guess.data()[row + d] as f64 - truth.data()[row + d] as f64;
                    let disp = truth.data()[row + d] as f64 - before.data()[row + d] as f64;
                    totals.error[k] += err * err;
                    totals.displacement[k] += disp * disp;
                }
            }
        }
        let confusion = match (&pred.edges, predictor.edge_types()) {
            (Some(edges), Some(k)) => {
                let mut c = vec![vec![0u64; k]; k];
                EdgeMetrics::accumulate(&mut c, &edges[b], &edge_labels(s, k)?)?;
                Some(c)
            }
            _ => None,
        };
        out.push((i, SampleResult { totals, confusion }));
    }
    Ok(out)
}
