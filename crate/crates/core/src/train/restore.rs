use std::fs;
use std::path::Path;

use log::warn;

use super::checkpoint::Checkpoint;
use super::config::Precision;
use super::data::image_to_input;
use super::{io_err, TrainError};
use crate::model::{AttentionRecord, Owan};
use crate::synth::{list_images, Image};
use crate::tensor::{Real, Tensor};

/// Tiling of images too large for a single forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RestoreOptions {
    /// Largest side processed in one pass.
    pub max_tile: usize,
    /// Overlap between neighbouring tiles; outputs are averaged there.
    pub overlap: usize,
}

impl Default for RestoreOptions {
    fn default() -> Self {
        RestoreOptions {
            max_tile: 256,
            overlap: 16,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RestoreSummary {
    /// File names written to the output directory.
    pub written: Vec<String>,
    /// Inputs that could not be read.
    pub skipped: Vec<String>,
    pub records: Vec<AttentionRecord>,
}

/// Tile origins covering `len` with windows of `tile` overlapping by at
/// least `overlap`. The last window is flush with the end.
fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile.saturating_sub(overlap).max(1);
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + tile < len).collect();
    starts.push(len - tile);
    starts
}

/// Restores one image (`image.channels()` must equal the model's input
/// channels). Attention weights of a tiled image are averaged over tiles.
pub fn restore_image<T: Real>(
    model: &Owan<T>,
    image: &Image,
    sample_id: &str,
    opts: &RestoreOptions,
) -> Result<(Image, Vec<AttentionRecord>), TrainError> {
    let (w, h, c) = (image.width(), image.height(), image.channels());
    if c != model.config.in_channels {
        return Err(TrainError::Data(format!(
            "{sample_id}: image has {c} channels, model expects {}",
            model.config.in_channels
        )));
    }
    let tile = opts.max_tile.max(1);
    let (tw, th) = (w.min(tile), h.min(tile));
    let xs = tile_starts(w, tile, opts.overlap);
    let ys = tile_starts(h, tile, opts.overlap);
    let mut acc = vec![0.0f64; w * h * c];
    let mut hits = vec![0u32; w * h];
    let mut weights: Vec<AttentionRecord> = Vec::new();
    let ids = [sample_id.to_string()];
    for &y0 in &ys {
        for &x0 in &xs {
            let patch = image.crop(x0, y0, tw, th)?;
            let input = Tensor::new(&[1, c, th, tw], patch.to_planar().into_iter().map(T::lit).collect())?;
            let (out, records) = model.restore(&input, &ids)?;
            let plane = tw * th;
            for y in 0..th {
                for x in 0..tw {
                    let idx = (y0 + y) * w + x0 + x;
                    hits[idx] += 1;
                    for ch in 0..c {
                        acc[idx * c + ch] += out.data()[ch * plane + y * tw + x].as_f64();
                    }
                }
            }
            if weights.is_empty() {
                weights = records;
            } else {
                for (a, r) in weights.iter_mut().zip(records) {
                    a.weight += r.weight;
                }
            }
        }
    }
    let tiles = (xs.len() * ys.len()) as f64;
    weights.iter_mut().for_each(|r| r.weight /= tiles);
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, v)| v / hits[i / c] as f64)
        .collect();
    Ok((Image::new(w, h, c, data)?, weights))
}

/// Restores every readable image in `input_dir` (sorted by name) into
/// `output_dir` as PNG with the same file stem. Unreadable files are skipped
/// with a warning.
pub fn restore_images(
    checkpoint: &Checkpoint,
    input_dir: &Path,
    output_dir: &Path,
    opts: &RestoreOptions,
) -> Result<RestoreSummary, TrainError> {
    match checkpoint.config.precision {
        Precision::F32 => restore_dir(&checkpoint.model::<f32>()?, input_dir, output_dir, opts),
        Precision::F64 => restore_dir(&checkpoint.model::<f64>()?, input_dir, output_dir, opts),
    }
}

fn restore_dir<T: Real>(
    model: &Owan<T>,
    input_dir: &Path,
    output_dir: &Path,
    opts: &RestoreOptions,
) -> Result<RestoreSummary, TrainError> {
    let inputs = list_images(input_dir)?;
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let mut summary = RestoreSummary::default();
    for path in inputs {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = format!("{stem}.png");
        let image = match Image::load(&path) {
            Ok(img) => image_to_input(&img, model.config.in_channels),
            Err(e) => {
                warn!("skipping unreadable image {e}");
                summary.skipped.push(name);
                continue;
            }
        };
        let (restored, records) = restore_image(model, &image, &stem, opts)?;
        restored.save_png(&output_dir.join(&name))?;
        summary.written.push(name);
        summary.records.extend(records);
    }
    Ok(summary)
}
