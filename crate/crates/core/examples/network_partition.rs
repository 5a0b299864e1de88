//! Ranks neurons by spectral concentration (IPR) or by strength and selects a
//! generalising sub-network and a memorising one.
//!
//! ```text
//! cargo run --release --example network_partition -- [epochs] [ipr|str]
//! ```

use modlab::network::{accuracy, Activation, LabelField};
use modlab::optim::OptimConfig;
use modlab::partition::{evaluate_partition, rank_neurons, score_neurons, select_partition, spearman, ScoreKind};
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use modlab::trainer::{train, TrainConfig};

fn main() -> modlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(5000, |s| s.parse().expect("epochs"));
    let kind: ScoreKind = args.next().map_or(Ok(ScoreKind::Ipr), |s| s.parse())?;

    let task = TaskSpec::new(Op::Add, 23)?;
    let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.3, NoiseMode::Asymmetric, 3, 3)?;
    let config = TrainConfig {
        width: 129,
        activation: Activation::Relu,
        tied: false,
        optim: OptimConfig::default(),
        epochs,
        eval_every: epochs,
        diag_every: 0,
        init_seed: 3,
    };
    let params = train(&config, &ds).map_err(|f| f.error)?.params;

    let scores = score_neurons(&params);
    let ipr: Vec<f64> = scores.iter().map(|s| s.ipr).collect();
    let strength: Vec<f64> = scores.iter().map(|s| s.strength).collect();
    println!("spearman(IPR, Str) = {:.3}", spearman(&ipr, &strength));

    let ranking = rank_neurons(&params, kind);
    println!("top five neurons by {kind}: {:?}", &ranking.order[..5]);
    let result = select_partition(&params, &ranking, &ds.val, &ds.noisy_train(), 0.95)?;
    println!("generalising prefix: k = {}, γ = {:.3}", result.k_g, result.gamma_g);
    if let Some(mem) = &result.memorization {
        println!("memorising suffix: k = {}, γ = {:.3}, reached τ: {}", mem.k, mem.gamma, mem.reached_tau);
    }

    let report = evaluate_partition(&params, &result, &ds, true);
    println!("val accuracy: f {:.3}, f^G {:.3}", report.val_full, report.val_g);
    println!("test accuracy: f {:.3}, f^G {:.3}, f^R {:?}", report.test_full, report.test_g, report.test_r);
    println!("noisy-label accuracy: f {:?}, f^R {:?}", report.noisy_full, report.noisy_r);
    let sub = params.select_neurons(&result.m_g);
    println!("sub-network of {} neurons, test {:.3}", sub.width(), accuracy(&sub, &ds.test, LabelField::True));
    Ok(())
}
