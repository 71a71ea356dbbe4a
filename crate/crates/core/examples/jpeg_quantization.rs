//! Prints the scaled JPEG quantisation tables for several quality levels and
//! measures the round-trip error and PSNR each one causes on a scene.
//!
//! cargo run --release --example jpeg_quantization

use owan::metrics::psnr;
use owan::synth::{apply_jpeg, block_dct, block_idct, jpeg_quant_tables, scene, BASE_LUMA};

fn main() -> anyhow::Result<()> {
    let (luma50, _) = jpeg_quant_tables(50)?;
    println!("quality 50 equals the base luma table: {}", luma50 == BASE_LUMA);
    for q in [10, 50, 90] {
        let (luma, _) = jpeg_quant_tables(q)?;
        println!("quality {q}, first luma row: {:?}", &luma[..8]);
    }

    // The 8×8 DCT is orthonormal, so a round trip reproduces the block.
    let block: [f64; 64] = std::array::from_fn(|i| ((i * 37) % 64) as f64 - 32.0);
    let back = block_idct(&block_dct(&block));
    let err = block.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("DCT round trip max error: {err:.2e}");

    let img = scene::procedural_scene(96, 96, 4).quantize8();
    println!("quality  PSNR (dB)  max abs error (/255)");
    for q in [5, 15, 35, 60, 90, 100] {
        let out = apply_jpeg(&img, q)?;
        let max = img.data().iter().zip(out.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{q:>7}  {:>9.2}  {:>8.2}", psnr(&out, &img)?, max * 255.0);
    }
    Ok(())
}
