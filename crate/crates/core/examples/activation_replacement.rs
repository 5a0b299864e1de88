//! Trains a ReLU network, then swaps its activation for quadratic and reverse
//! ReLU without touching the weights.

use modlab::network::{accuracy, replace_activation, Activation, LabelField};
use modlab::optim::OptimConfig;
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(5000, |s| s.parse().expect("epochs"));
    let task = TaskSpec::new(Op::Add, 23).unwrap();
    let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.3, NoiseMode::Asymmetric, 7, 7).unwrap();
    let config = TrainConfig {
        width: 257,
        activation: Activation::Relu,
        tied: false,
        optim: OptimConfig::default(),
        epochs,
        eval_every: epochs,
        diag_every: 0,
        init_seed: 7,
    };
    let trained = train(&config, &ds).map_err(|f| f.error).expect("training").params;
    println!("{:<13} {:>8} {:>8} {:>8}", "activation", "clean", "noisy", "test");
    for kind in Activation::ALL {
        let p = replace_activation(&trained, kind);
        println!(
            "{:<13} {:>8.3} {:>8.3} {:>8.3}",
            kind.name(),
            accuracy(&p, &ds.clean_train(), LabelField::True),
            accuracy(&p, &ds.noisy_train(), LabelField::Observed),
            accuracy(&p, &ds.test, LabelField::True)
        );
    }
}
