//! Runs a small grid of widths and seeds through the sweep runner and prints
//! mean test accuracy per width. The runner skips finished runs, so running
//! this twice with the same directory only fills in what is missing.
//!
//! ```text
//! cargo run --release --example width_sweep -- [out_dir] [epochs]
//! ```

use std::collections::BTreeMap;

use modlab::config::SweepConfig;
use modlab::sweep::{run_sweep, SweepOptions};

fn main() -> modlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "width_sweep_out".into());
    let epochs: usize = args.next().map_or(2000, |s| s.parse().expect("epochs"));
    let text = format!(
        r#"
parallelism = 4

[grid]
widths = [9, 17, 33, 65, 129]
seeds = [1, 2]

[base.task]
op = "add"
modulus = 23

[base.data]
noise_ratio = 0.3

[base.training]
epochs = {epochs}
eval_every = {epochs}
"#
    );
    let cfg = SweepConfig::from_toml(&text, "width_sweep")?;
    let opts = SweepOptions { resume: true, threads: None };
    let outcome = run_sweep(&cfg, &text, out.as_ref(), &opts, |row| {
        println!("finished {} (test {:?})", row.run_id, row.acc_test);
    })?;
    println!("{} runs executed, {} reused", outcome.executed, outcome.skipped);

    let mut by_width: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in outcome.rows.iter().filter(|r| r.ok) {
        by_width.entry(row.width).or_default().push(row.acc_test.unwrap_or(f64::NAN));
    }
    println!("{:>6} {:>10}", "width", "test acc");
    for (w, accs) in by_width {
        println!("{w:>6} {:>10.3}", accs.iter().sum::<f64>() / accs.len() as f64);
    }
    Ok(())
}
