//! The Top-K recommendation experiment.
//!
//! User interaction histories become logic expressions — "the user liked
//! these items (and disliked those), therefore they will like the target" —
//! and the model is trained pairwise so positive targets outrank sampled
//! negatives. The model is non-personalized: users exist only through the
//! expressions their histories induce.

mod data;
mod report;
mod train;

pub use data::{
    binarize, build_expression, build_expression_ordered, load_amazon_csv, load_ml100k,
    split_leave_one_out, BinarizedEvent, Interaction, InteractionLog, ItemMap, RecDataset,
    RecInstance, EVAL_NEGATIVES,
};
pub use report::{write_cooccur_csv, write_rec_metrics_csv};
pub use train::{
    cooccurrence, evaluate_topk, score_candidates, train_rec, train_rec_with, RecEpochMetrics,
    RecRun, RecTrainConfig, TopkMetrics,
};

pub use crate::Split;
