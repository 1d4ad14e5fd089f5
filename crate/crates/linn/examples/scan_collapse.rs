//! Throwaway: find (dropout, seed) pairs that collapse after epoch 0.

use linn::sim::{train_sim, SimDataset, SimTrainConfig};
use linn::StopReason;

fn main() {
    let ds = SimDataset::generate(12, 50, 3).unwrap();
    for dropout in [0.1, 0.15, 0.2, 0.25] {
        let mut ep0 = 0;
        let mut mid = Vec::new();
        let mut clean = 0;
        for seed in 0..40 {
            let cfg = SimTrainConfig {
                d: 8,
                batch_size: 16,
                max_epochs: 8,
                dropout,
                seed,
                ..SimTrainConfig::default()
            };
            match train_sim(&ds, &cfg) {
                Ok(run) => match run.stopped {
                    StopReason::ZeroCollapse { epoch } => mid.push((seed, epoch)),
                    _ => clean += 1,
                },
                Err(e) => {
                    if ep0 == 0 {
                        println!("  first error (seed {seed}): {e}");
                    }
                    ep0 += 1;
                }
            }
        }
        println!("dropout {dropout}: errors {ep0}, clean {clean}, mid-run {mid:?}");
    }
}
