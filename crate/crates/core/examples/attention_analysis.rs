//! Trains a model on mixed distortions, then compares how its layers weight
//! the operations on noise-only, JPEG-only and motion-blur-only inputs: the
//! per-tag mean/variance tables and each tag's difference from the pooled
//! mean.
//!
//! cargo run --release --example attention_analysis [out_dir]

use std::path::PathBuf;

use owan::analysis::{collect_attention, diff_maps, export_diff_csv, export_stats_csv, stats};
use owan::model::OwanConfig;
use owan::rng::{named_seed, rng_from_seed, split_seed};
use owan::synth::{
    apply_gaussian_noise, apply_jpeg, apply_motion_blur, build_dataset, generate_trajectory, scene,
    trajectory_to_kernel, DatasetOptions, Image, Protocol, TrajectoryParams,
};
use owan::train::{train_with, PairSet, TrainConfig};

fn distort(tag: &str, img: &Image, seed: u64) -> anyhow::Result<Image> {
    let mut rng = rng_from_seed(seed);
    Ok(match tag {
        "noise" => apply_gaussian_noise(img, 25.0, &mut rng)?,
        "jpeg" => apply_jpeg(img, 20)?,
        _ => {
            let path = generate_trajectory(&TrajectoryParams::with_len(15.0), &mut rng)?;
            apply_motion_blur(img, &trajectory_to_kernel(&path, 3)?)?
        }
    }
    .quantize8())
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("owan-attention"));
    scene::write_scenes(&out.join("sources"), 4, 80, 80, 21)?;
    let opts = DatasetOptions {
        protocol: Protocol::from_name("mixed", None)?,
        patch_size: 32,
        count: 8,
        master_seed: 4,
    };
    build_dataset(&out.join("sources"), &out.join("train"), &opts)?;
    let config = TrainConfig {
        epochs: 15,
        batch_size: 8,
        seed: 8,
        checkpoint_every: 0,
        model: OwanConfig {
            layers: 8,
            channels: 16,
            res_blocks: 2,
            ..OwanConfig::default()
        },
        ..TrainConfig::default()
    };
    let ckpt = train_with(&config, &PairSet::load(&out.join("train"), 3)?, None, None)?.checkpoint;

    let tags = ["noise", "jpeg", "motion"];
    let mut per_tag = Vec::new();
    for tag in tags {
        let dir = out.join(tag).join("distorted");
        std::fs::create_dir_all(&dir)?;
        for i in 0..10u64 {
            let clean = scene::procedural_scene(32, 32, split_seed(77, i)).quantize8();
            distort(tag, &clean, named_seed(i, tag))?.save_png(&dir.join(format!("{i:02}.png")))?;
        }
        let records = collect_attention(&ckpt, &out.join(tag), tag)?;
        per_tag.push(stats(tag, &records)?);
    }

    let ops: Vec<String> = config.model.ops.iter().map(ToString::to_string).collect();
    let diffs = diff_maps(&per_tag)?;
    for (s, d) in per_tag.iter().zip(&diffs) {
        println!("\n{} ({} images): mean weight, |difference from pooled mean|", s.tag, s.samples);
        println!("layer {}", ops.iter().map(|o| format!("{o:>15}")).collect::<String>());
        for l in 0..s.layers {
            print!("{:>5} ", l + 1);
            for o in 0..s.ops {
                let i = l * s.ops + o;
                print!("{:>7.3}/{:<7.3}", s.mean[i], d.absdiff[i]);
            }
            println!();
        }
    }
    export_stats_csv(&per_tag, &out.join("attention_stats.csv"))?;
    export_diff_csv(&diffs, &out.join("attention_diff.csv"))?;
    println!("\nCSV tables in {}", out.display());
    Ok(())
}
