//! Trains a four-layer model to remove Gaussian noise from a handful of
//! patches, writes checkpoints and the loss log, then resumes from a
//! mid-run checkpoint and confirms the result is identical.
//!
//! cargo run --release --example train_tiny [out_dir]

use std::path::PathBuf;

use owan::model::OwanConfig;
use owan::rng::{rng_from_seed, split_seed};
use owan::synth::{apply_gaussian_noise, scene};
use owan::train::{evaluate_model, load_checkpoint, train_with, PairSet, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("owan-train"));

    let mut ids = Vec::new();
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    for i in 0..8u64 {
        let c = scene::procedural_scene(32, 32, split_seed(1, i)).quantize8();
        let d = apply_gaussian_noise(&c, 25.0, &mut rng_from_seed(split_seed(2, i)))?.quantize8();
        ids.push(format!("patch{i}"));
        clean.push(c);
        noisy.push(d);
    }
    let data = PairSet::from_images(ids, clean, noisy)?;

    let config = TrainConfig {
        epochs: 250,
        batch_size: 1,
        seed: 3,
        checkpoint_every: 1000,
        out_dir: out.clone(),
        model: OwanConfig {
            layers: 4,
            channels: 16,
            attention_hidden: 32,
            res_blocks: 2,
            ..OwanConfig::default()
        },
        ..TrainConfig::default()
    };
    print!("{}", config.to_text());

    let outcome = train_with(&config, &data, None, Some(&out))?;
    let first = outcome.losses.first().map_or(f64::NAN, |r| r.loss);
    let last = outcome.losses.last().map_or(f64::NAN, |r| r.loss);
    println!("loss {first:.3} -> {last:.3} over {} steps", outcome.losses.len());

    let model = outcome.checkpoint.model::<f32>()?;
    let eval = evaluate_model(&model, &data, 8)?;
    println!(
        "per-pixel L1 {:.4} (input {:.4}), PSNR {:.2} dB (input {:.2} dB)",
        eval.mean_l1, eval.input_l1, eval.mean_psnr, eval.input_psnr
    );

    let resumed_dir = out.join("resumed");
    let mid = load_checkpoint(&out.join("checkpoint_00001000.owan"))?;
    train_with(&config, &data, Some(mid), Some(&resumed_dir))?;
    let same = std::fs::read(out.join("final.owan"))? == std::fs::read(resumed_dir.join("final.owan"))?;
    println!("resumed run identical to uninterrupted run: {same}");
    Ok(())
}
