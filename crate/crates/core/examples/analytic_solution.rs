//! Builds the closed-form quadratic network for modular addition and checks it
//! exhaustively.
//!
//! ```text
//! cargo run --release --example analytic_solution -- 113 sub
//! ```

use modlab::analytic::{build_solution, neuron_layout, verify_solution, AnalyticSpec};
use modlab::network::{forward, Batch};
use modlab::task::{Op, TaskSpec};

fn main() -> modlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let p: usize = args.next().map_or(Ok(23), |s| s.parse()).expect("modulus must be an integer");
    let op: Op = args.next().map_or(Ok(Op::Add), |s| s.parse())?;

    let spec = AnalyticSpec::new(p, op);
    let params = build_solution(&spec)?;
    println!("P = {p}, {op}: {} neurons over {} frequencies", spec.width(), spec.frequencies());
    for m in [0, 1, spec.frequencies()] {
        let (omega, a, b, c) = neuron_layout(&spec, m);
        println!("  neuron {m}: ω = {omega}, φa = {a:.3}, φb = {b:.3}, φc = {c:.3}");
    }

    let report = verify_solution(&params, &TaskSpec::new(op, p)?)?;
    println!("accuracy over all {} inputs: {}", p * p, report.accuracy);
    println!("phase MSE: {:?}", report.phase_mse);
    println!("minimum margin {} (K·P/2 = {})", report.min_margin, spec.logit_constant() * p as f64 / 2.0);

    let logits = forward(&params, &Batch::new(vec![(3, 5)], vec![0])?)?;
    let top: Vec<String> = logits.row(0).iter().take(10).map(|z| format!("{z:.2}")).collect();
    println!("logits for (3, 5), first ten classes: {}", top.join(" "));
    Ok(())
}
