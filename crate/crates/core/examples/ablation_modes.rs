//! Trains the same network three ways (learned attention, no attention, and
//! fixed input-independent weights) on identical data and compares held-out
//! L1 and PSNR. The default 15 epochs only show the trend; pass a larger
//! epoch count for a closer comparison.
//!
//! cargo run --release --example ablation_modes [epochs]

use owan::model::{AttentionMode, OwanConfig};
use owan::synth::{build_dataset, scene, DatasetOptions, Protocol};
use owan::train::{evaluate_model, train_with, PairSet, TrainConfig};

fn main() -> anyhow::Result<()> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(15);
    let dir = std::env::temp_dir().join("owan-ablation");
    scene::write_scenes(&dir.join("sources"), 6, 96, 96, 31)?;
    let protocol = Protocol::from_name("mixed", None)?;
    for (split, seed, count) in [("train", 1, 8), ("test", 2, 3)] {
        let opts = DatasetOptions {
            protocol,
            patch_size: 32,
            count,
            master_seed: seed,
        };
        build_dataset(&dir.join("sources"), &dir.join(split), &opts)?;
    }
    let train = PairSet::load(&dir.join("train"), 3)?;
    let test = PairSet::load(&dir.join("test"), 3)?;

    println!("{:<8} {:>10} {:>10} {:>12}", "mode", "test L1", "test PSNR", "parameters");
    for mode in [AttentionMode::Learned, AttentionMode::None, AttentionMode::Fixed] {
        let config = TrainConfig {
            epochs,
            batch_size: 1,
            seed: 1,
            checkpoint_every: 0,
            model: OwanConfig {
                layers: 8,
                channels: 16,
                res_blocks: 2,
                attention_mode: mode,
                ..OwanConfig::default()
            },
            ..TrainConfig::default()
        };
        let model = train_with(&config, &train, None, None)?.checkpoint.model::<f32>()?;
        let eval = evaluate_model(&model, &test, 8)?;
        println!(
            "{:<8} {:>10.4} {:>10.2} {:>12}",
            mode.to_string(),
            eval.mean_l1,
            eval.mean_psnr,
            model.count_params()
        );
        if mode == AttentionMode::Learned {
            println!("{:<8} {:>10.4} {:>10.2}", "input", eval.input_l1, eval.input_psnr);
        }
    }
    Ok(())
}

