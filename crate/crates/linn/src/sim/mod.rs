//! The logical-equation experiment.
//!
//! A hidden truth assignment generates labeled DNF expressions; the model is
//! trained to predict expression truth values with cross-entropy, and probes
//! measure how well the learned embedding space recovers per-variable truth
//! and satisfies the logic rules.

mod dataset;
mod report;
mod train;

pub use dataset::SimDataset;

pub use crate::Split;
pub use report::{write_metrics_csv, write_sweep_csv, write_variables_tsv};
pub use train::{
    eval_sim, solve_variables, sweep_lambda_l, train_sim, train_sim_with, EpochMetrics, SimRun,
    SimTrainConfig, SplitMetrics, SweepPoint, VariableReport, VariableRow,
};
