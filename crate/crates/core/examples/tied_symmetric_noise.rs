//! A tied first layer (`U = V`) makes the network commutative, so it cannot
//! fit a noisy label on `(a, b)` without also predicting it on `(b, a)`.
//! Symmetric noise corrupts both orders of a pair with the same wrong label,
//! which a tied model can fit.

use modlab::network::{predict, Activation};
use modlab::optim::OptimConfig;
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(3000, |s| s.parse().expect("epochs"));
    let task = TaskSpec::new(Op::Add, 23).unwrap();
    for mode in [NoiseMode::Asymmetric, NoiseMode::Symmetric] {
        let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.1, mode, 6, 6).unwrap();
        for tied in [false, true] {
            let config = TrainConfig {
                width: 129,
                activation: Activation::Relu,
                tied,
                optim: OptimConfig::default(),
                epochs,
                eval_every: epochs,
                diag_every: 0,
                init_seed: 6,
            };
            let run = train(&config, &ds).map_err(|f| f.error).expect("training");
            let m = run.metrics.last().unwrap();
            let inputs: Vec<(usize, usize)> = (0..23).flat_map(|a| (0..23).map(move |b| (a, b))).collect();
            let preds = predict(&run.params, &inputs);
            let symmetric = (0..23).all(|a| (0..23).all(|b| preds[a * 23 + b] == preds[b * 23 + a]));
            println!(
                "{:<10} tied={tied:<5} clean {:.3} noisy {:.3} test {:.3} predictions symmetric: {symmetric}",
                mode.name(),
                m.acc_clean,
                m.acc_noisy.unwrap_or(f64::NAN),
                m.acc_test
            );
        }
    }
}
