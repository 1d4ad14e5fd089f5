//! Cross-entropy training on labeled DNFs and the associated probes.
//!
//! Each mini-batch is processed in small chunks so tapes stay modest: chunk
//! losses and their gradients add up to the batch objective because the
//! cross-entropy, the logic regularizer, and the length regularizer are all
//! sums over batch elements. The two batch-global terms — the parameter
//! penalty and the anchor's own-negation term — are attached to the first
//! chunk only so they enter the objective exactly once.

use rand::seq::SliceRandom;

use crate::autodiff::{Adam, GradBuffer};
use crate::logic::Assignment;
use crate::model::{GraphBuilder, LinnModel, ModelConfig};
use crate::seeds;
use crate::sim::{SimDataset, Split};
use crate::{Error, Result, StopReason};

/// Expressions per tape; keeps graphs small without changing the math.
const CHUNK: usize = 16;

/// Coin-stream index reserved for the fixed regularizer probe (training
/// chunks use three-part indices, so this can never collide).
const PROBE_COINS: u64 = u64::MAX;

/// Hyperparameters for one training run.
#[derive(Clone, Debug)]
pub struct SimTrainConfig {
    pub d: usize,
    /// Weight of the logic-rule regularizer; 0 disables it (the ablation).
    pub lambda_logic: f64,
    /// Weight of the vector-length penalty over materialized vectors.
    pub lambda_length: f64,
    /// Weight of the L2 penalty over all trainable parameters.
    pub lambda_theta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-RMSE improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for SimTrainConfig {
    fn default() -> Self {
        SimTrainConfig {
            d: 64,
            lambda_logic: 0.01,
            lambda_length: 0.001,
            lambda_theta: 1e-7,
            learning_rate: 0.001,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            dropout: 0.0,
            seed: 2024,
        }
    }
}

impl SimTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("lambda_logic", self.lambda_logic),
            ("lambda_length", self.lambda_length),
            ("lambda_theta", self.lambda_theta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Accuracy and RMSE over one split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitMetrics {
    pub accuracy: f64,
    pub rmse: f64,
}

/// One row of the training log.
#[derive(Clone, Debug)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-batch objective (task loss plus weighted regularizers).
    pub loss: f64,
    pub train: SplitMetrics,
    pub valid: SplitMetrics,
    pub test: SplitMetrics,
    /// The ten rule penalties measured on a fixed probe batch, comparable
    /// across runs that share data and seed.
    pub regularizers: [f64; 10],
}

/// A finished run: the best-validation model and the full log.
pub struct SimRun {
    pub model: LinnModel,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped: StopReason,
}

/// Trains with default (silent) epoch reporting.
pub fn train_sim(ds: &SimDataset, cfg: &SimTrainConfig) -> Result<SimRun> {
    train_sim_with(ds, cfg, |_| {})
}

/// Trains a fresh model on the dataset's train split, early-stopping on
/// validation RMSE and restoring the best epoch's parameters. `on_epoch` sees
/// every log row as soon as it is complete.
pub fn train_sim_with(
    ds: &SimDataset,
    cfg: &SimTrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<SimRun> {
    cfg.validate()?;
    let mut model = LinnModel::new(
        ModelConfig {
            d: cfg.d,
            dropout: cfg.dropout,
        },
        ds.n(),
        cfg.seed,
    )?;
    let mut adam = Adam::new(cfg.learning_rate, model.store());
    let mut grads = GradBuffer::zeros_like(model.store());

    let mut history: Vec<EpochMetrics> = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_rmse = f64::INFINITY;
    let mut best_params = model.store().snapshot();
    let mut stale = 0usize;
    let mut stopped = StopReason::MaxEpochs;

    'training: for epoch in 0..cfg.max_epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = ds.split(Split::Train).to_vec();
        order.shuffle(&mut seeds::rng(cfg.seed, seeds::SHUFFLE, &[e, 0]));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_ix, batch) in order.chunks(cfg.batch_size).enumerate() {
            let b = batch_ix as u64;
            // Operand order inside each expression is re-randomized every
            // epoch so the modules see both argument orders of ∧ and ∨.
            let mut tree_rng = seeds::rng(cfg.seed, seeds::SHUFFLE, &[e, 1 + b]);
            let items: Vec<_> = batch
                .iter()
                .map(|&ix| {
                    let tree = ds.expression(ix).to_shuffled_tree(&mut tree_rng);
                    (tree, ds.label(ix))
                })
                .collect();

            let mut batch_loss = 0.0;
            for (chunk_ix, chunk) in items.chunks(CHUNK).enumerate() {
                let c = chunk_ix as u64;
                let mut dropout_rng = seeds::rng(cfg.seed, seeds::DROPOUT, &[e, b, c]);
                let mut coins = seeds::rng(cfg.seed, seeds::REG, &[e, b, c]);
                let first = chunk_ix == 0;

                let mut chunk_pass = || -> Result<f64> {
                    let mut gb = GraphBuilder::new(&model, true);
                    let mut preds = Vec::with_capacity(chunk.len());
                    let mut labels = Vec::with_capacity(chunk.len());
                    for (tree, label) in chunk {
                        let root = gb.assemble(tree, &mut dropout_rng)?;
                        preds.push(gb.prediction(root)?);
                        labels.push(*label);
                    }
                    let ce = gb.loss_ce(&preds, &labels)?;

                    let mut terms = Vec::new();
                    if cfg.lambda_logic != 0.0 {
                        let (r_total, _) =
                            gb.logic_regularizer(&mut coins, &mut dropout_rng, first)?;
                        terms.push((r_total, cfg.lambda_logic));
                    }
                    if cfg.lambda_length != 0.0 {
                        terms.push((gb.length_regularizer()?, cfg.lambda_length));
                    }
                    if first && cfg.lambda_theta != 0.0 {
                        terms.push((gb.theta_penalty()?, cfg.lambda_theta));
                    }
                    let total = gb.weighted_sum(ce, &terms)?;

                    let value = gb.scalar(total)?;
                    if !value.is_finite() {
                        return Err(Error::Divergence(format!(
                            "objective became {value} at epoch {epoch}, batch {batch_ix}"
                        )));
                    }
                    gb.backward(total, &mut grads)?;
                    Ok(value)
                };
                match chunk_pass() {
                    Ok(value) => batch_loss += value,
                    // A dropout mask zeroed some module's hidden layer: the
                    // similarity this step needs is undefined, so training
                    // ends here with the best parameters found so far. With
                    // nothing learned yet it is a plain failure.
                    Err(Error::ZeroNorm) if !history.is_empty() => {
                        stopped = StopReason::ZeroCollapse { epoch };
                        break 'training;
                    }
                    Err(e) => return Err(e),
                }
            }
            if !grads.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient at epoch {epoch}, batch {batch_ix}"
                )));
            }
            adam.step(model.store_mut(), &grads)?;
            grads.reset();
            loss_sum += batch_loss;
            batches += 1;
        }

        let row = EpochMetrics {
            epoch,
            loss: loss_sum / batches as f64,
            train: eval_sim(&model, ds, Split::Train)?,
            valid: eval_sim(&model, ds, Split::Valid)?,
            test: eval_sim(&model, ds, Split::Test)?,
            regularizers: probe_regularizers(&model, ds, cfg)?,
        };
        let valid_rmse = row.valid.rmse;
        on_epoch(&row);
        history.push(row);

        if valid_rmse < best_rmse {
            best_rmse = valid_rmse;
            best_epoch = epoch;
            best_params = model.store().snapshot();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped = StopReason::Patience;
                break;
            }
        }
    }

    model.store_mut().restore(&best_params)?;
    Ok(SimRun {
        model,
        history,
        best_epoch,
        stopped,
    })
}

/// Threshold accuracy and RMSE of the model's predictions on a split.
/// Expressions are evaluated in their canonical operand order.
pub fn eval_sim(model: &LinnModel, ds: &SimDataset, which: Split) -> Result<SplitMetrics> {
    let ixs = ds.split(which);
    if ixs.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut correct = 0usize;
    let mut se = 0.0;
    for &ix in ixs {
        let p = model.infer_prediction(&ds.expression(ix).to_tree())?;
        let y = ds.label(ix);
        if (p >= 0.5) == y {
            correct += 1;
        }
        let target = if y { 1.0 } else { 0.0 };
        se += (p - target) * (p - target);
    }
    Ok(SplitMetrics {
        accuracy: correct as f64 / ixs.len() as f64,
        rmse: (se / ixs.len() as f64).sqrt(),
    })
}

/// Measures the ten rule penalties on a fixed probe: the first train-split
/// batch in canonical order, with a dedicated coin stream. Because data,
/// probe, and coins are identical for runs sharing a seed, these values are
/// directly comparable across regularizer-weight settings.
fn probe_regularizers(
    model: &LinnModel,
    ds: &SimDataset,
    cfg: &SimTrainConfig,
) -> Result<[f64; 10]> {
    let train = ds.split(Split::Train);
    let take = train.len().min(cfg.batch_size);
    let mut w = Vec::new();
    for &ix in &train[..take] {
        let (_, mut vectors) = model.infer_assemble(&ds.expression(ix).to_tree())?;
        w.append(&mut vectors);
    }
    let mut coins = seeds::rng(cfg.seed, seeds::REG, &[PROBE_COINS]);
    model.infer_regularizers(&w, &mut coins, true)
}

/// One variable's verdict from the embedding space.
#[derive(Clone, Copy, Debug)]
pub struct VariableRow {
    pub id: u32,
    pub sim_to_true: f64,
    pub predicted: bool,
    pub truth: bool,
}

/// Per-variable predictions against the hidden assignment.
#[derive(Clone, Debug)]
pub struct VariableReport {
    pub rows: Vec<VariableRow>,
    pub accuracy: f64,
}

/// Reads each variable's truth value off its embedding: predicted true iff
/// its similarity to the true anchor is at least 0.5.
pub fn solve_variables(model: &LinnModel, hidden: &Assignment) -> Result<VariableReport> {
    if model.n_vars() != hidden.len() {
        return Err(Error::Shape {
            op: "solve_variables",
            detail: format!(
                "model has {} variables, assignment has {}",
                model.n_vars(),
                hidden.len()
            ),
        });
    }
    let mut rows = Vec::with_capacity(hidden.len());
    let mut correct = 0usize;
    for id in 0..hidden.len() as u32 {
        let emb = model.embedding_vector(id)?;
        let sim = model.infer_sim(&emb, model.anchor())?;
        let predicted = sim >= 0.5;
        let truth = hidden.get(id)?;
        if predicted == truth {
            correct += 1;
        }
        rows.push(VariableRow {
            id,
            sim_to_true: sim,
            predicted,
            truth,
        });
    }
    Ok(VariableReport {
        accuracy: correct as f64 / rows.len() as f64,
        rows,
    })
}

/// Test-split outcome of one sweep point.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    pub lambda_logic: f64,
    pub accuracy: f64,
    pub rmse: f64,
}

/// Trains once per grid value of the logic-regularizer weight (all other
/// hyperparameters and the seed shared) and reports test metrics.
pub fn sweep_lambda_l(
    ds: &SimDataset,
    grid: &[f64],
    base: &SimTrainConfig,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!(
                "sweep grid values must be non-negative, got {lambda}"
            )));
        }
        let cfg = SimTrainConfig {
            lambda_logic: lambda,
            ..base.clone()
        };
        let run = train_sim(ds, &cfg)?;
        let test = eval_sim(&run.model, ds, Split::Test)?;
        points.push(SweepPoint {
            lambda_logic: lambda,
            accuracy: test.accuracy,
            rmse: test.rmse,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SimTrainConfig {
        SimTrainConfig {
            d: 16,
            batch_size: 32,
            max_epochs: 6,
            seed: 7,
            ..SimTrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_within_a_few_epochs() {
        let ds = SimDataset::generate(30, 200, 7).unwrap();
        let run = train_sim(&ds, &tiny_cfg()).unwrap();
        assert!(run.history.len() == 6);
        assert!(
            run.history[5].loss < run.history[0].loss,
            "loss did not decrease: {} -> {}",
            run.history[0].loss,
            run.history[5].loss
        );
    }

    #[test]
    fn fixed_seed_reproduces_the_trajectory() {
        let ds = SimDataset::generate(12, 50, 3).unwrap();
        let cfg = SimTrainConfig {
            d: 8,
            batch_size: 16,
            max_epochs: 3,
            seed: 11,
            ..SimTrainConfig::default()
        };
        let a = train_sim(&ds, &cfg).unwrap();
        let b = train_sim(&ds, &cfg).unwrap();
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
            assert_eq!(x.valid.rmse.to_bits(), y.valid.rmse.to_bits());
            assert_eq!(x.test.accuracy.to_bits(), y.test.accuracy.to_bits());
        }
    }

    #[test]
    fn restored_model_matches_best_epoch_metrics() {
        let ds = SimDataset::generate(12, 60, 5).unwrap();
        let cfg = SimTrainConfig {
            d: 8,
            batch_size: 16,
            max_epochs: 4,
            seed: 5,
            ..SimTrainConfig::default()
        };
        let run = train_sim(&ds, &cfg).unwrap();
        let best = &run.history[run.best_epoch];
        assert!(run
            .history
            .iter()
            .all(|row| best.valid.rmse <= row.valid.rmse));
        let again = eval_sim(&run.model, &ds, Split::Valid).unwrap();
        assert_eq!(again.rmse.to_bits(), best.valid.rmse.to_bits());
        assert_eq!(again.accuracy.to_bits(), best.valid.accuracy.to_bits());
    }

    #[test]
    fn eval_on_empty_split_is_an_error() {
        // m = 5 gives floor(5/10) = 0 validation/test expressions.
        let ds = SimDataset::generate(10, 5, 1).unwrap();
        let model = LinnModel::new(ModelConfig { d: 8, dropout: 0.0 }, 10, 1).unwrap();
        assert!(matches!(
            eval_sim(&model, &ds, Split::Valid),
            Err(Error::EmptySplit)
        ));
        assert!(eval_sim(&model, &ds, Split::Train).is_ok());
    }

    #[test]
    fn probe_regularizers_are_finite_and_logged() {
        let ds = SimDataset::generate(12, 50, 3).unwrap();
        let cfg = SimTrainConfig {
            d: 8,
            batch_size: 16,
            max_epochs: 2,
            seed: 11,
            ..SimTrainConfig::default()
        };
        let run = train_sim(&ds, &cfg).unwrap();
        for row in &run.history {
            assert!(row.regularizers.iter().all(|r| r.is_finite()));
        }
    }

    #[test]
    fn untrained_variable_solving_is_chance_level() {
        let n = 400;
        let ds = SimDataset::generate(n, 10, 13).unwrap();
        let model = LinnModel::new(ModelConfig { d: 32, dropout: 0.0 }, n, 13).unwrap();
        let report = solve_variables(&model, ds.hidden()).unwrap();
        // Three binomial sigmas around chance for n = 400: 0.5 ± 0.075.
        assert!(
            (report.accuracy - 0.5).abs() <= 0.075,
            "untrained accuracy {} is implausibly far from chance",
            report.accuracy
        );
    }

    #[test]
    fn variables_equal_to_anchor_are_all_predicted_true() {
        let n = 6;
        let mut model = LinnModel::new(ModelConfig { d: 8, dropout: 0.0 }, n, 2).unwrap();
        let anchor = model.anchor().clone();
        let emb_id = model.embeddings();
        for row in 0..n {
            for col in 0..8 {
                model
                    .store_mut()
                    .get_mut(emb_id)
                    .set(row, col, anchor.get(col, 0));
            }
        }
        let hidden = Assignment::new(vec![true; n]);
        let report = solve_variables(&model, &hidden).unwrap();
        assert!(report.rows.iter().all(|r| r.predicted));
        assert!((report.accuracy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_of_one_point_equals_a_single_run() {
        let ds = SimDataset::generate(12, 50, 3).unwrap();
        let cfg = SimTrainConfig {
            d: 8,
            batch_size: 16,
            max_epochs: 2,
            seed: 11,
            ..SimTrainConfig::default()
        };
        let points = sweep_lambda_l(&ds, &[cfg.lambda_logic], &cfg).unwrap();
        let run = train_sim(&ds, &cfg).unwrap();
        let test = eval_sim(&run.model, &ds, Split::Test).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].accuracy.to_bits(), test.accuracy.to_bits());
        assert_eq!(points[0].rmse.to_bits(), test.rmse.to_bits());
    }

    #[test]
    fn mask_collapse_ends_the_run_with_best_so_far() {
        let ds = SimDataset::generate(12, 50, 3).unwrap();
        // Aggressive dropout at tiny d makes an all-zero hidden mask likely;
        // scan seeds until one collapses after at least one finished epoch.
        let mut seen = false;
        for seed in 0..60 {
            let cfg = SimTrainConfig {
                d: 8,
                batch_size: 16,
                max_epochs: 8,
                dropout: 0.4,
                seed,
                ..SimTrainConfig::default()
            };
            match train_sim(&ds, &cfg) {
                Ok(run) => {
                    if let StopReason::ZeroCollapse { epoch } = run.stopped {
                        // History holds exactly the epochs that finished.
                        assert_eq!(epoch, run.history.len());
                        assert!(run.best_epoch < run.history.len());
                        // The restored best model evaluates cleanly.
                        let m = eval_sim(&run.model, &ds, Split::Valid).unwrap();
                        assert!(m.rmse.is_finite());
                        seen = true;
                        break;
                    }
                }
                // Collapsed inside epoch 0: plain failure, also acceptable.
                Err(Error::ZeroNorm) => {}
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
        assert!(seen, "no seed in range collapsed after a finished epoch");
    }

    #[test]
    fn collapse_before_any_finished_epoch_is_an_error() {
        let ds = SimDataset::generate(12, 50, 3).unwrap();
        // At dropout 0.7 and d = 4 the very first chunks zero out almost
        // surely, so the trainer has nothing to fall back to.
        let mut seen = false;
        for seed in 0..20 {
            let cfg = SimTrainConfig {
                d: 4,
                batch_size: 16,
                max_epochs: 3,
                dropout: 0.7,
                seed,
                ..SimTrainConfig::default()
            };
            if matches!(train_sim(&ds, &cfg), Err(Error::ZeroNorm)) {
                seen = true;
                break;
            }
        }
        assert!(seen, "no seed in range failed inside epoch 0");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SimTrainConfig::default();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg = SimTrainConfig::default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        cfg = SimTrainConfig::default();
        cfg.lambda_logic = -0.1;
        assert!(cfg.validate().is_err());
        assert!(SimTrainConfig::default().validate().is_ok());
    }
}
