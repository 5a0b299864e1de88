//! Trains the same network with SGD, Adam, AdamW and Muon and prints where each
//! one ends up.

use modlab::network::Activation;
use modlab::optim::{OptimConfig, OptimizerKind};
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("epochs"));
    let task = TaskSpec::new(Op::Add, 23).unwrap();
    let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.1, NoiseMode::Asymmetric, 5, 5).unwrap();
    let settings = [
        OptimConfig::new(OptimizerKind::Sgd, 0.1, 1e-4),
        OptimConfig::new(OptimizerKind::Adam, 1e-3, 1e-4),
        OptimConfig::new(OptimizerKind::AdamW, 1e-3, 0.1),
        OptimConfig::new(OptimizerKind::Muon, 0.02, 0.1),
    ];
    println!("{:<7} {:>10} {:>8} {:>8} {:>8}", "optim", "loss", "clean", "noisy", "test");
    for optim in settings {
        let name = optim.kind.name();
        let config = TrainConfig {
            width: 129,
            activation: Activation::Relu,
            tied: false,
            optim,
            epochs,
            eval_every: epochs,
            diag_every: 0,
            init_seed: 5,
        };
        match train(&config, &ds) {
            Ok(run) => {
                let m = run.metrics.last().unwrap();
                println!(
                    "{name:<7} {:>10.4} {:>8.3} {:>8.3} {:>8.3}",
                    m.train_loss,
                    m.acc_clean,
                    m.acc_noisy.unwrap_or(f64::NAN),
                    m.acc_test
                );
            }
            Err(f) => println!("{name:<7} failed: {}", f.error),
        }
    }
}
