//! Trains a noisy model, splits every neuron into its dominant-frequency part
//! G and the residual R, and compares the three networks.
//!
//! ```text
//! cargo run --release --example frequency_filtration -- [epochs]
//! ```

use modlab::network::Activation;
use modlab::optim::OptimConfig;
use modlab::spectral::{evaluate_filtration, frequency_report_csv, frequency_stats, phase_report_csv};
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(5000, |s| s.parse().expect("epochs"));
    let task = TaskSpec::new(Op::Add, 23).unwrap();
    let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.3, NoiseMode::Asymmetric, 2, 2).unwrap();
    let config = TrainConfig {
        width: 129,
        activation: Activation::Relu,
        tied: false,
        optim: OptimConfig::default(),
        epochs,
        eval_every: epochs,
        diag_every: 0,
        init_seed: 2,
    };
    let run = train(&config, &ds).map_err(|f| f.error).expect("training");

    let (split, report) = evaluate_filtration(&run.params, &ds);
    println!("{:<5} {:>8} {:>8} {:>8}", "", "clean", "noisy", "test");
    for (name, acc) in [("f", report.full), ("f^G", report.g), ("f^R", report.r)] {
        println!("{name:<5} {:>8.3} {:>8.3} {:>8.3}", acc.clean, acc.noisy, acc.test);
    }
    println!("‖G‖ = {:.3}, ‖R‖ = {:.3}", report.g_weight_norm, report.r_weight_norm);
    println!("phase MSE over neurons: {:?}", report.phase_mse);

    println!("\nfrequency report");
    print!("{}", frequency_report_csv(&frequency_stats(&split)));
    println!("\nfirst phase rows");
    for line in phase_report_csv(&split, Op::Add).lines().take(6) {
        println!("{line}");
    }
}
