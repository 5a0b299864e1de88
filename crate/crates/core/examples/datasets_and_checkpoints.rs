//! Dataset generation, manifests and checkpoints: everything a run needs to
//! be reproduced or re-analysed later.

use modlab::checkpoint::{Checkpoint, Seeds};
use modlab::network::{init_params, Activation};
use modlab::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("modlab_example");
    std::fs::create_dir_all(&dir)?;

    let task = TaskSpec::new(Op::Add, 11)?;
    let ratios = SplitRatios { train: 0.6, val: 0.2, test: 0.2 };
    let ds = NoisyDataset::generate(task, ratios, 0.2, NoiseMode::Symmetric, 10, 20)?;
    println!("{} train ({} noisy), {} val, {} test", ds.train.len(), ds.noisy_count(), ds.val.len(), ds.test.len());
    for s in ds.noisy_train().iter().take(4) {
        println!("  ({}, {}) true {} observed {}", s.a, s.b, s.true_label, s.observed_label);
    }

    let manifest = dir.join("dataset.manifest");
    ds.write_manifest(&manifest)?;
    assert_eq!(NoisyDataset::read_manifest(&manifest)?, ds);
    println!("manifest round trip ok: {}", manifest.display());

    let params = init_params(11, 16, Activation::Gelu, false, 30)?;
    let seeds = Seeds { split: 10, noise: 20, init: 30 };
    let path = dir.join("checkpoint.json");
    Checkpoint::new(Op::Add, seeds, 0, params.clone()).save(&path)?;
    let back = Checkpoint::load(&path)?;
    assert_eq!(back.params, params);
    println!("checkpoint round trip is bit-exact: {}", path.display());
    Ok(())
}
