//! Full-batch training on modular addition with a fraction of the training
//! labels corrupted. Prints the clean, noisy and test accuracy as training
//! goes, which shows the noisy labels being fitted before the clean ones.
//!
//! ```text
//! cargo run --release --example noisy_training -- [epochs] [width] [alpha]
//! ```

use modlab::network::Activation;
use modlab::optim::OptimConfig;
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train_with, TrainConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).map_or(default, |s| s.parse().ok().expect("bad argument"))
}

fn main() {
    let epochs: usize = arg(1, 3000);
    let width: usize = arg(2, 257);
    let alpha: f64 = arg(3, 0.3);

    let task = TaskSpec::new(Op::Add, 23).unwrap();
    let ds = NoisyDataset::generate(task, SplitRatios::default(), alpha, NoiseMode::Asymmetric, 1, 1).unwrap();
    println!(
        "train {} samples ({} noisy), val {}, test {}",
        ds.train.len(),
        ds.noisy_count(),
        ds.val.len(),
        ds.test.len()
    );
    let config = TrainConfig {
        width,
        activation: Activation::Relu,
        tied: false,
        optim: OptimConfig::default(),
        epochs,
        eval_every: (epochs / 30).max(1),
        diag_every: 0,
        init_seed: 1,
    };
    println!("{:>7} {:>10} {:>8} {:>8} {:>8}", "epoch", "loss", "clean", "noisy", "test");
    let result = train_with(&config, &ds, |row| {
        println!(
            "{:>7} {:>10.4} {:>8.3} {:>8.3} {:>8.3}",
            row.epoch,
            row.train_loss,
            row.acc_clean,
            row.acc_noisy.unwrap_or(f64::NAN),
            row.acc_test
        );
    });
    if let Err(failure) = result {
        eprintln!("training stopped: {} (last good epoch {})", failure.error, failure.last_good_epoch);
        std::process::exit(1);
    }
}
