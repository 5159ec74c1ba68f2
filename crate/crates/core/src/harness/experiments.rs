use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalConfig, SplitEvaluation};
use super::predictor::{ModelSpec, Predictor, Supervision};
use super::train::{train, TrainConfig};
use crate::baselines::{BaselineConfig, BaselineKind};
use crate::error::{Error, Result};
use crate::model::{DecoderKind, GumbelConfig, NriConfig};
use crate::rng::Rng;
use crate::sim::{DatasetSplit, Sample, SplitName};

/// Model families of the comparison tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SupNriMlp,
    SupNriRnn,
    UnsNriMlp,
    UnsNriRnn,
    LastPosition,
    Linear,
    Mlp,
    Lstm,
    Oracle,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::SupNriMlp,
        ModelKind::SupNriRnn,
        ModelKind::UnsNriMlp,
        ModelKind::UnsNriRnn,
        ModelKind::LastPosition,
        ModelKind::Linear,
        ModelKind::Mlp,
        ModelKind::Lstm,
        ModelKind::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SupNriMlp => "sup_nri_mlp",
            ModelKind::SupNriRnn => "sup_nri_rnn",
            ModelKind::UnsNriMlp => "uns_nri_mlp",
            ModelKind::UnsNriRnn => "uns_nri_rnn",
            ModelKind::LastPosition => "last_position",
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
            ModelKind::Oracle => "oracle",
        }
    }

    pub fn is_nri(self) -> bool {
        matches!(
            self,
            ModelKind::SupNriMlp | ModelKind::SupNriRnn | ModelKind::UnsNriMlp | ModelKind::UnsNriRnn
        )
    }

    /// Models whose input layout is tied to the node order and count seen in
    /// training.
    pub fn is_order_bound(self) -> bool {
        matches!(self, ModelKind::Linear | ModelKind::Mlp)
    }

    pub fn spec(self, settings: &ModelSettings) -> ModelSpec {
        let nri = |decoder, supervision| {
            let base = NriConfig::new(decoder);
            ModelSpec::Nri {
                config: NriConfig {
                    edge_types: settings.edge_types,
                    hidden: settings.hidden,
                    rnn_hidden: settings.rnn_hidden,
                    sigma2: settings.sigma2,
                    gumbel: settings.gumbel,
                    actuators: settings.actuators,
                    skip_null_edge: settings.skip_null_edge,
                    burn_in: match decoder {
                        DecoderKind::Mlp => base.burn_in,
                        DecoderKind::Rnn => settings.rnn_burn_in,
                    },
                    ..base
                },
                supervision,
            }
        };
        let baseline = |kind: BaselineKind, hidden: usize| ModelSpec::Baseline {
            config: BaselineConfig {
                hidden,
                ..BaselineConfig::new(kind, settings.nodes, settings.actuators)
            },
        };
        match self {
            ModelKind::SupNriMlp => nri(DecoderKind::Mlp, Supervision::Supervised),
            ModelKind::SupNriRnn => nri(DecoderKind::Rnn, Supervision::Supervised),
            ModelKind::UnsNriMlp => nri(DecoderKind::Mlp, Supervision::Unsupervised),
            ModelKind::UnsNriRnn => nri(DecoderKind::Rnn, Supervision::Unsupervised),
            ModelKind::LastPosition => baseline(BaselineKind::LastPosition, 0),
            ModelKind::Linear => baseline(BaselineKind::Linear, 0),
            ModelKind::Mlp => baseline(BaselineKind::Mlp, settings.mlp_hidden),
            ModelKind::Lstm => baseline(BaselineKind::Lstm, settings.lstm_hidden),
            ModelKind::Oracle => ModelSpec::Oracle,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::config(format!("unknown model {s:?}; valid models: {}", valid.join(", ")))
            })
    }
}

/// Architecture settings applied to every model of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub hidden: usize,
    pub rnn_hidden: usize,
    pub edge_types: usize,
    pub sigma2: f64,
    pub gumbel: GumbelConfig,
    pub skip_null_edge: bool,
    pub rnn_burn_in: usize,
    pub mlp_hidden: usize,
    pub lstm_hidden: usize,
    /// Node count of the training scenes, fixing the flat-state baselines.
    pub nodes: usize,
    pub actuators: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            hidden: 64,
            rnn_hidden: 64,
            edge_types: 2,
            sigma2: 5e-5,
            gumbel: GumbelConfig::default(),
            skip_null_edge: false,
            rnn_burn_in: 5,
            mlp_hidden: 256,
            lstm_hidden: 128,
            nodes: 12,
            actuators: 4,
        }
    }
}

/// A hyperparameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    PredictionSteps,
    EdgeTypes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
}

/// Which models to train, on which seeds, and where to evaluate them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub models: Vec<ModelKind>,
    pub splits: Vec<SplitName>,
    pub seeds: Vec<u64>,
    pub settings: ModelSettings,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: Option<Sweep>,
    /// Timed repetitions per model in a benchmark.
    pub bench_iterations: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            models: vec![
                ModelKind::UnsNriMlp,
                ModelKind::UnsNriRnn,
                ModelKind::SupNriMlp,
                ModelKind::SupNriRnn,
                ModelKind::LastPosition,
                ModelKind::Linear,
                ModelKind::Mlp,
                ModelKind::Lstm,
            ],
            splits: vec![SplitName::TestBase],
            seeds: vec![0],
            settings: ModelSettings::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: None,
            bench_iterations: 20,
        }
    }
}

impl ExperimentPlan {
    /// Input-condition ablation: models trained with ten prediction steps,
    /// tested over 25 steps on every held-out split.
    pub fn ablation() -> Self {
        ExperimentPlan {
            models: vec![ModelKind::SupNriRnn, ModelKind::Mlp, ModelKind::Lstm],
            splits: vec![
                SplitName::TestBase,
                SplitName::TestMotion,
                SplitName::TestConfig,
                SplitName::TestFingers,
                SplitName::TestShuffle,
            ],
            train: TrainConfig {
                prediction_steps: 10,
                ..TrainConfig::default()
            },
            eval: EvalConfig {
                horizons: vec![5, 10, 15, 20, 25],
                ..EvalConfig::default()
            },
            ..ExperimentPlan::default()
        }
    }
}

/// Outcome of one model on one split for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub label: String,
    pub model: ModelKind,
    pub split: SplitName,
    pub seed: u64,
    /// Absent when the model cannot be applied to the split.
    pub evaluation: Option<SplitEvaluation>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub label: String,
    pub seed: u64,
    pub losses: Vec<f64>,
}

/// Median MSE per sweep value and horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub model: ModelKind,
    pub split: SplitName,
    pub values: Vec<usize>,
    pub horizons: Vec<usize>,
    /// `mse[value][horizon]`
    pub mse: Vec<Vec<f64>>,
    pub edge_accuracy: Vec<Option<f64>>,
    pub edge_f1: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub model: ModelKind,
    pub ms_per_iteration: f64,
    pub iterations: usize,
    pub parameters: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub evaluations: Vec<EvaluationRecord>,
    pub losses: Vec<LossRecord>,
    pub sweeps: Vec<SweepTable>,
    pub timings: Vec<Timing>,
}

pub fn find_split(splits: &[DatasetSplit], name: SplitName) -> Result<&DatasetSplit> {
    splits
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::config(format!("dataset has no {} split", name.as_str())))
}

/// Applies a trained predictor to a split, recording why it cannot be applied
/// instead of failing when the split breaks the model's input layout.
pub fn evaluate_record(
    predictor: &Predictor,
    kind: ModelKind,
    label: &str,
    split: &DatasetSplit,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<EvaluationRecord> {
    let record = |evaluation, note| EvaluationRecord {
        label: label.to_string(),
        model: kind,
        split: split.name,
        seed,
        evaluation,
        note,
    };
    if kind.is_order_bound() && split.name == SplitName::TestShuffle {
        return Ok(record(None, Some("node order differs from training".to_string())));
    }
    match evaluate(predictor, split.name, &split.samples, cfg) {
        Ok(e) => {
            let note = (kind == ModelKind::Lstm && split.samples.iter().any(|s| s.nodes < settings_nodes(predictor)))
                .then(|| "absent nodes zero padded".to_string());
            Ok(record(Some(e), note))
        }
        Err(Error::WidthMismatch { expected, actual }) => Ok(record(
            None,
            Some(format!("input width {actual} differs from trained width {expected}")),
        )),
        Err(e) => Err(e),
    }
}

fn settings_nodes(p: &Predictor) -> usize {
    match &p.spec {
        ModelSpec::Baseline { config } => config.nodes,
        _ => 0,
    }
}

/// Trains one model for one seed and evaluates it on every split of the plan.
fn train_and_evaluate(
    plan: &ExperimentPlan,
    kind: ModelKind,
    label: &str,
    settings: &ModelSettings,
    train_cfg: &TrainConfig,
    seed: u64,
    trainset: &[Sample],
    splits: &[DatasetSplit],
    report: &mut Report,
) -> Result<()> {
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let outcome = train(kind.spec(settings), trainset, &cfg)?;
    report.losses.push(LossRecord {
        label: label.to_string(),
        seed,
        losses: outcome.losses,
    });
    for &name in &plan.splits {
        let split = find_split(splits, name)?;
        report
            .evaluations
            .push(evaluate_record(&outcome.predictor, kind, label, split, seed, &plan.eval)?);
    }
    Ok(())
}

/// Trains every model of the plan on the training split for every seed and
/// evaluates it on the plan's splits.
pub fn run_experiments(plan: &ExperimentPlan, splits: &[DatasetSplit]) -> Result<Report> {
    let trainset = &find_split(splits, SplitName::Trainset)?.samples;
    let mut report = Report::default();
    for &seed in &plan.seeds {
        for &kind in &plan.models {
            train_and_evaluate(
                plan,
                kind,
                kind.as_str(),
                &plan.settings,
                &plan.train,
                seed,
                trainset,
                splits,
                &mut report,
            )?;
        }
    }
    Ok(report)
}

/// Repeats the experiment for every value of the plan's sweep and collects
/// the median MSE over seeds into one table per model and split.
pub fn run_sweep(plan: &ExperimentPlan, splits: &[DatasetSplit]) -> Result<Report> {
    let sweep = plan
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("plan has no sweep section"))?;
    if sweep.values.is_empty() {
        return Err(Error::config("sweep has no values"));
    }
    let trainset = &find_split(splits, SplitName::Trainset)?.samples;
    let mut report = Report::default();
    for &value in &sweep.values {
        let mut settings = plan.settings.clone();
        let mut train_cfg = plan.train.clone();
        match sweep.parameter {
            SweepParameter::PredictionSteps => train_cfg.prediction_steps = value,
            SweepParameter::EdgeTypes => settings.edge_types = value,
        }
        for &seed in &plan.seeds {
            for &kind in &plan.models {
                let label = sweep_label(kind, sweep.parameter, value);
                train_and_evaluate(
                    plan, kind, &label, &settings, &train_cfg, seed, trainset, splits, &mut report,
                )?;
            }
        }
    }
    for &kind in &plan.models {
        for &split in &plan.splits {
            report.sweeps.push(sweep_table(&report, sweep, kind, split, &plan.eval.horizons));
        }
    }
    Ok(report)
}

pub fn sweep_label(kind: ModelKind, parameter: SweepParameter, value: usize) -> String {
    let key = match parameter {
        SweepParameter::PredictionSteps => "ps",
        SweepParameter::EdgeTypes => "k",
    };
    format!("{}_{key}{value}", kind.as_str())
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn sweep_table(report: &Report, sweep: &Sweep, kind: ModelKind, split: SplitName, horizons: &[usize]) -> SweepTable {
    let mut mse = Vec::new();
    let mut acc = Vec::new();
    let mut f1 = Vec::new();
    for &value in &sweep.values {
        let label = sweep_label(kind, sweep.parameter, value);
        let evals: Vec<&SplitEvaluation> = report
            .evaluations
            .iter()
            .filter(|r| r.label == label && r.split == split)
            .filter_map(|r| r.evaluation.as_ref())
            .collect();
        mse.push(
            horizons
                .iter()
                .map(|&h| {
                    let mut v: Vec<f64> = evals
                        .iter()
                        .filter_map(|e| e.horizons.iter().find(|m| m.horizon == h).map(|m| m.mse))
                        .collect();
                    median(&mut v)
                })
                .collect(),
        );
        let mut a: Vec<f64> = evals.iter().filter_map(|e| e.edges.as_ref().map(|m| m.accuracy)).collect();
        let mut f: Vec<f64> = evals.iter().filter_map(|e| e.edges.as_ref().map(|m| m.f1)).collect();
        acc.push((!a.is_empty()).then(|| median(&mut a)));
        f1.push((!f.is_empty()).then(|| median(&mut f)));
    }
    SweepTable {
        parameter: sweep.parameter,
        model: kind,
        split,
        values: sweep.values.clone(),
        horizons: horizons.to_vec(),
        mse,
        edge_accuracy: acc,
        edge_f1: f1,
    }
}

/// Wall-clock time of single-sample prediction for every model of the plan,
/// on one thread, over the plan's first split and ten prediction steps.
pub fn run_bench(plan: &ExperimentPlan, splits: &[DatasetSplit]) -> Result<Report> {
    let split = find_split(splits, *plan.splits.first().unwrap_or(&SplitName::TestBase))?;
    let sample = split
        .samples
        .first()
        .ok_or_else(|| Error::config("benchmark split is empty"))?;
    let iterations = plan.bench_iterations.max(1);
    let horizon = 10;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let norm = super::data::NormStats::from_samples(&find_split(splits, SplitName::Trainset)?.samples)?;
    let mut report = Report::default();
    for &kind in &plan.models {
        let predictor = Predictor::new(kind.spec(&plan.settings), norm.clone(), &mut Rng::new(0))?;
        let elapsed = pool.install(|| -> Result<f64> {
            predictor.predict(&[sample], plan.eval.start, horizon)?;
            let t0 = Instant::now();
            for _ in 0..iterations {
                predictor.predict(&[sample], plan.eval.start, horizon)?;
            }
            Ok(t0.elapsed().as_secs_f64())
        })?;
        report.timings.push(Timing {
            model: kind,
            ms_per_iteration: 1e3 * elapsed / iterations as f64,
            iterations,
            parameters: predictor.store.num_scalars(),
            horizon,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_splits_with, GenerateOptions};

    fn splits() -> Vec<DatasetSplit> {
        generate_splits_with(&GenerateOptions {
            master_seed: 2,
            draws_per_cell: 1,
            test_samples: 4,
            ..GenerateOptions::default()
        })
        .unwrap()
    }

    fn untrained(models: Vec<ModelKind>, splits: Vec<SplitName>) -> ExperimentPlan {
        ExperimentPlan {
            models,
            splits,
            train: TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            ..ExperimentPlan::default()
        }
    }

    #[test]
    fn model_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{kind}\""));
        }
        let err = "nri".parse::<ModelKind>().unwrap_err().to_string();
        assert!(err.contains("sup_nri_rnn"));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn fixed_width_baselines_are_marked_on_foreign_layouts() {
        let plan = untrained(
            vec![ModelKind::Linear, ModelKind::LastPosition],
            vec![SplitName::TestFingers, SplitName::TestShuffle],
        );
        let report = run_experiments(&plan, &splits()).unwrap();
        assert_eq!(report.evaluations.len(), 4);
        for r in &report.evaluations {
            match r.model {
                ModelKind::Linear => assert!(r.evaluation.is_none() && r.note.is_some()),
                _ => assert!(r.evaluation.is_some() && r.note.is_none()),
            }
        }
    }

    #[test]
    fn sweep_tables_follow_the_grid() {
        let mut plan = untrained(vec![ModelKind::LastPosition], vec![SplitName::TestBase, SplitName::TestConfig]);
        assert!(run_sweep(&plan, &splits()).is_err());
        plan.seeds = vec![0, 1, 2];
        plan.sweep = Some(Sweep {
            parameter: SweepParameter::EdgeTypes,
            values: vec![2, 3, 4],
        });
        let report = run_sweep(&plan, &splits()).unwrap();
        assert_eq!(report.evaluations.len(), 3 * 3 * 2);
        assert_eq!(report.sweeps.len(), 2);
        let t = &report.sweeps[0];
        assert_eq!(t.mse.len(), 3);
        assert!(t.mse.iter().all(|row| row.len() == 5));
        assert!(t.edge_accuracy.iter().all(Option::is_none));
        assert_eq!(report.evaluations[0].label, "last_position_k2");
    }

    #[test]
    fn bench_times_every_model() {
        let plan = ExperimentPlan {
            bench_iterations: 1,
            ..untrained(vec![ModelKind::LastPosition, ModelKind::Mlp], vec![SplitName::TestBase])
        };
        let report = run_bench(&plan, &splits()).unwrap();
        assert_eq!(report.timings.len(), 2);
        assert_eq!(report.timings[0].parameters, 0);
        assert!(report.timings[1].parameters > 0);
        assert!(report.timings.iter().all(|t| t.ms_per_iteration >= 0.0 && t.horizon == 10));
    }
}
