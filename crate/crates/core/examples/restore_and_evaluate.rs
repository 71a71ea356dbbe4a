//! Trains a small model on mixed distortions, restores a held-out set with
//! tiled inference and scores the result against the clean references.
//! About a minute of training on 24 patches lifts SSIM but is usually not
//! enough to beat the distorted inputs on PSNR; the acceptance harness has
//! longer runs that do.
//!
//! cargo run --release --example restore_and_evaluate [out_dir]

use std::path::PathBuf;

use owan::analysis::write_attention_csv;
use owan::metrics::evaluate_pairs;
use owan::model::OwanConfig;
use owan::synth::{build_dataset, scene, DatasetOptions, Protocol};
use owan::train::{restore_images, train_with, PairSet, RestoreOptions, TrainConfig};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("owan-restore"));
    scene::write_scenes(&out.join("sources"), 4, 80, 80, 11)?;
    let protocol = Protocol::from_name("mixed", None)?;
    for (split, seed) in [("train", 1), ("test", 2)] {
        let opts = DatasetOptions {
            protocol,
            patch_size: 32,
            count: 6,
            master_seed: seed,
        };
        build_dataset(&out.join("sources"), &out.join(split), &opts)?;
    }

    let config = TrainConfig {
        epochs: 150,
        batch_size: 1,
        seed: 5,
        checkpoint_every: 0,
        model: OwanConfig {
            layers: 4,
            channels: 16,
            res_blocks: 2,
            ..OwanConfig::default()
        },
        ..TrainConfig::default()
    };
    let train = PairSet::load(&out.join("train"), 3)?;
    println!("training on {} patches", train.len());
    let ckpt = train_with(&config, &train, None, Some(&out.join("run")))?.checkpoint;

    // Small tiles force the overlap-averaging path even on 32×32 inputs.
    let opts = RestoreOptions {
        max_tile: 24,
        overlap: 8,
    };
    let summary = restore_images(&ckpt, &out.join("test/distorted"), &out.join("restored"), &opts)?;
    write_attention_csv(&out.join("attention.csv"), &summary.records)?;
    println!("restored {} images", summary.written.len());

    let before = evaluate_pairs(&out.join("test/distorted"), &out.join("test/clean"))?;
    let after = evaluate_pairs(&out.join("restored"), &out.join("test/clean"))?;
    println!(
        "distorted: {:.2} dB / SSIM {:.4}\nrestored:  {:.2} dB / SSIM {:.4}",
        before.mean_psnr(),
        before.mean_ssim(),
        after.mean_psnr(),
        after.mean_ssim()
    );
    after.write_csv(&out.join("report.csv"))?;
    println!("report and attention records in {}", out.display());
    Ok(())
}
