//! Tracks how the clean-sample and noisy-sample gradients line up with the
//! full gradient during the first epochs of training.
//!
//! `s_c` and `s_n` are the per-sample inner products of each subset's gradient
//! with the full gradient. They satisfy `s_c·|D_c| + s_n·|D_n| = ‖∇L‖²`.

use modlab::network::Activation;
use modlab::optim::OptimConfig;
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train_with, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(50, |s| s.parse().expect("epochs"));
    let task = TaskSpec::new(Op::Add, 23).unwrap();
    let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.3, NoiseMode::Asymmetric, 4, 4).unwrap();
    let config = TrainConfig {
        width: 257,
        activation: Activation::Relu,
        tied: false,
        optim: OptimConfig::default(),
        epochs,
        eval_every: epochs,
        diag_every: 1,
        init_seed: 4,
    };
    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "epoch", "s_c", "s_n", "<g_c,g_n>", "residual");
    train_with(&config, &ds, |row| {
        if let Some(d) = row.diagnostics {
            println!(
                "{:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.1e}",
                row.epoch,
                d.s_c,
                d.s_n,
                d.inner,
                d.identity_residual / d.total_norm_sq
            );
        }
    })
    .map_err(|f| f.error)
    .expect("training");
}
