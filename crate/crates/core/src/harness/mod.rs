//! Normalisation, training, evaluation and the experiment matrix.

mod data;
mod eval;
mod experiments;
mod metrics;
mod plot;
mod predictor;
mod report;
mod train;

pub use data::NormStats;
pub use eval::{evaluate, EvalConfig, HorizonMetrics, SplitEvaluation};
pub use experiments::{
    evaluate_record, find_split, median, run_bench, run_experiments, run_sweep, sweep_label, EvaluationRecord,
    ExperimentPlan, LossRecord, ModelKind, ModelSettings, Report, Sweep, SweepParameter, SweepTable, Timing,
};
pub use metrics::{EdgeMetrics, ErrorTotals};
pub use plot::{parse_curve_csv, render_svg, Series};
pub use predictor::{ModelSpec, Network, Prediction, Predictor, Supervision};
pub use report::{curve_csv, mean_curves, report_csv, timing_csv, write_report};
pub use train::{batch_loss, train, train_predictor, TrainConfig, TrainOutcome, BASELINE_SIGMA2};
