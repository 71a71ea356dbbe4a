//! Writes a few procedural scenes, builds a mixed-distortion dataset from
//! them and replays one manifest row to show that samples are reproducible.
//!
//! cargo run --release --example synthesize_distortions [out_dir]

use std::path::PathBuf;

use owan::metrics::psnr;
use owan::synth::{build_dataset, replay_sample, scene, DatasetOptions, Protocol, Severity};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("owan-synth"));
    let sources = out.join("sources");
    scene::write_scenes(&sources, 3, 96, 96, 5)?;

    for (name, protocol) in [
        ("mixed", Protocol::from_name("mixed", None)?),
        ("div2k-moderate", Protocol::Div2k(Some(Severity::Moderate))),
    ] {
        let dir = out.join(name);
        let opts = DatasetOptions {
            protocol,
            patch_size: 63,
            count: 4,
            master_seed: 42,
        };
        let manifest = build_dataset(&sources, &dir, &opts)?;
        println!("{name}: {} pairs in {}", manifest.rows.len(), dir.display());
        for row in manifest.rows.iter().take(4) {
            println!(
                "  {:<14} blur {:<8} noise {:<8} jpeg {:<5} motion {}",
                row.sample_id,
                fmt(row.blur_sigma),
                fmt(row.noise_sigma),
                row.jpeg_quality.map_or("-".into(), |q| q.to_string()),
                fmt(row.motion_max_len),
            );
        }

        let row = &manifest.rows[0];
        let (clean, distorted) = replay_sample(row, &sources)?;
        let stored = owan::synth::Image::load(&dir.join("distorted").join(format!("{}.png", row.sample_id)))?;
        println!(
            "  replayed {}: PSNR(distorted, clean) {:.2} dB, matches stored file: {}",
            row.sample_id,
            psnr(&distorted.quantize8(), &clean.quantize8())?,
            stored == distorted.quantize8()
        );
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.2}"))
}
