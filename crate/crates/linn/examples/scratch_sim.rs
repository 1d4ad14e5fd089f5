//! Scratch driver for timing/tuning runs. Not part of the public surface.

use std::time::Instant;

use linn::sim::{eval_sim, solve_variables, train_sim_with, SimDataset, SimTrainConfig, Split};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lambda_logic: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let lambda_theta: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let max_epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(100);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let dropout: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let patience: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(10);
    let lr: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.001);

    let t0 = Instant::now();
    let ds = SimDataset::generate(1000, 3000, seed).unwrap();
    println!("dataset generated in {:.2?}", t0.elapsed());

    let cfg = SimTrainConfig {
        lambda_logic,
        lambda_theta,
        max_epochs,
        seed,
        dropout,
        patience,
        learning_rate: lr,
        ..SimTrainConfig::default()
    };
    let t1 = Instant::now();
    let mut last = Instant::now();
    let run = train_sim_with(&ds, &cfg, |row| {
        println!(
            "epoch {:3}  loss {:10.4}  train {:.4}/{:.4}  valid {:.4}/{:.4}  test {:.4}/{:.4}  sum_r {:9.3}  [{:.2?}]",
            row.epoch,
            row.loss,
            row.train.accuracy,
            row.train.rmse,
            row.valid.accuracy,
            row.valid.rmse,
            row.test.accuracy,
            row.test.rmse,
            row.regularizers.iter().sum::<f64>(),
            last.elapsed(),
        );
        last = Instant::now();
    })
    .unwrap();
    println!(
        "trained in {:.2?}, best epoch {}, stopped: {}",
        t1.elapsed(),
        run.best_epoch,
        run.stopped
    );

    let test = eval_sim(&run.model, &ds, Split::Test).unwrap();
    let vars = solve_variables(&run.model, ds.hidden()).unwrap();
    println!(
        "final: test acc {:.4} rmse {:.4}, variable acc {:.4}",
        test.accuracy, test.rmse, vars.accuracy
    );
}
