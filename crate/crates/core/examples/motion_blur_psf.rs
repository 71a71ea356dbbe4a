//! Simulates camera-shake trajectories of a few lengths, rasterises them into
//! point-spread functions and blurs a scene with each one. The PSFs are
//! printed as ASCII art and saved next to the blurred images.
//!
//! cargo run --release --example motion_blur_psf [out_dir]

use std::path::PathBuf;

use owan::metrics::psnr;
use owan::rng::{named_seed, rng_from_seed};
use owan::synth::{apply_motion_blur, arc_length, generate_trajectory, scene, trajectory_to_kernel, Image, TrajectoryParams};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("owan-motion"));
    std::fs::create_dir_all(&out)?;
    let clean = scene::procedural_scene(128, 128, 9);
    clean.save_png(&out.join("clean.png"))?;

    for len in [5.0, 15.0, 40.0] {
        let mut rng = rng_from_seed(named_seed(3, "trajectory"));
        let path = generate_trajectory(&TrajectoryParams::with_len(len), &mut rng)?;
        let psf = trajectory_to_kernel(&path, 3)?;
        let blurred = apply_motion_blur(&clean, &psf)?;
        println!(
            "length {len:>4}: arc {:.2}, kernel {}×{}, sum {:.6}, PSNR {:.2} dB",
            arc_length(&path),
            psf.size(),
            psf.size(),
            psf.sum(),
            psnr(&blurred, &clean)?
        );
        if psf.size() <= 17 {
            let peak = psf.data().iter().cloned().fold(0.0, f64::max);
            for y in 0..psf.size() {
                let line: String = (0..psf.size())
                    .map(|x| match psf.at(x, y) / peak {
                        v if v > 0.5 => '#',
                        v if v > 0.1 => '+',
                        v if v > 0.0 => '.',
                        _ => ' ',
                    })
                    .collect();
                println!("    |{line}|");
            }
        }

        let size = psf.size();
        let peak = psf.data().iter().cloned().fold(0.0, f64::max);
        let image = Image::from_fn(size, size, 1, |x, y, _| psf.at(x, y) / peak);
        image.save_png(&out.join(format!("psf_{len}.png")))?;
        blurred.save_png(&out.join(format!("blurred_{len}.png")))?;
    }
    println!("images written to {}", out.display());
    Ok(())
}
