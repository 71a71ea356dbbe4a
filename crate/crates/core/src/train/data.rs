use std::path::Path;

use log::warn;

use super::TrainError;
use crate::synth::{list_images, read_manifest, Image};
use crate::tensor::{Real, Tensor};

/// Smallest patch side the network accepts (the widest dilated operation
/// spans 13 pixels, so anything below 7 is mostly padding).
pub const MIN_PATCH: usize = 7;

/// Aligned clean/distorted training pairs, all of one size.
#[derive(Clone, Debug)]
pub struct PairSet {
    pub ids: Vec<String>,
    pub clean: Vec<Image>,
    pub distorted: Vec<Image>,
}

/// Converts to the channel count the network expects: grayscale is
/// replicated to RGB, RGB is reduced to BT.601 luma.
pub fn image_to_input(img: &Image, channels: usize) -> Image {
    match (img.channels(), channels) {
        (a, b) if a == b => img.clone(),
        (_, 3) => img.to_rgb(),
        _ => Image::from_fn(img.width(), img.height(), 1, |x, y, _| {
            0.299 * img.get(x, y, 0) + 0.587 * img.get(x, y, 1) + 0.114 * img.get(x, y, 2)
        }),
    }
}

impl PairSet {
    /// Loads `{dir}/clean/{id}.png` and `{dir}/distorted/{id}.png`. Sample
    /// ids come from `{dir}/manifest.csv` when present, otherwise from the
    /// PNG names found in both subdirectories. Unreadable pairs are skipped
    /// with a warning.
    pub fn load(dir: &Path, channels: usize) -> Result<PairSet, TrainError> {
        let manifest = dir.join("manifest.csv");
        let ids: Vec<String> = if manifest.is_file() {
            read_manifest(&manifest)?.rows.into_iter().map(|r| r.sample_id).collect()
        } else {
            let clean_dir = dir.join("clean");
            if !clean_dir.is_dir() || !dir.join("distorted").is_dir() {
                return Err(TrainError::Data(format!(
                    "{} has neither manifest.csv nor clean/ and distorted/ subdirectories",
                    dir.display()
                )));
            }
            list_images(&dir.join("distorted"))?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|e| e == "png"))
                .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .filter(|id| clean_dir.join(format!("{id}.png")).is_file())
                .collect()
        };
        let mut set = PairSet {
            ids: Vec::new(),
            clean: Vec::new(),
            distorted: Vec::new(),
        };
        for id in ids {
            let load = |sub: &str| Image::load(&dir.join(sub).join(format!("{id}.png")));
            match (load("clean"), load("distorted")) {
                (Ok(c), Ok(d)) if c.width() == d.width() && c.height() == d.height() => {
                    set.clean.push(image_to_input(&c, channels));
                    set.distorted.push(image_to_input(&d, channels));
                    set.ids.push(id);
                }
                (Ok(_), Ok(_)) => warn!("skipping {id}: clean and distorted sizes differ"),
                (Err(e), _) | (_, Err(e)) => warn!("skipping {id}: {e}"),
            }
        }
        set.validate()?;
        Ok(set)
    }

    pub fn from_images(ids: Vec<String>, clean: Vec<Image>, distorted: Vec<Image>) -> Result<PairSet, TrainError> {
        if ids.len() != clean.len() || ids.len() != distorted.len() {
            return Err(TrainError::Data("ids, clean and distorted lengths differ".into()));
        }
        let set = PairSet { ids, clean, distorted };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), TrainError> {
        let Some(first) = self.clean.first() else {
            return Err(TrainError::Data("dataset is empty".into()));
        };
        let (w, h) = (first.width(), first.height());
        if w < MIN_PATCH || h < MIN_PATCH {
            return Err(TrainError::Data(format!(
                "patch size {w}×{h} is smaller than {MIN_PATCH}×{MIN_PATCH}"
            )));
        }
        for (i, (c, d)) in self.clean.iter().zip(&self.distorted).enumerate() {
            if !c.same_shape(first) || !d.same_shape(first) {
                return Err(TrainError::Data(format!(
                    "sample {} has a different size or channel count than {}",
                    self.ids[i], self.ids[0]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `(channels, height, width)` shared by every sample.
    pub fn sample_shape(&self) -> (usize, usize, usize) {
        let img = &self.clean[0];
        (img.channels(), img.height(), img.width())
    }

    /// Stacks the selected samples into `N×C×H×W` tensors
    /// `(distorted, clean)`. `flips[i]` mirrors sample `i` horizontally.
    pub fn batch<T: Real>(&self, indices: &[usize], flips: &[bool]) -> (Tensor<T>, Tensor<T>) {
        let (c, h, w) = self.sample_shape();
        let stack = |images: &[Image]| {
            let mut data = Vec::with_capacity(indices.len() * c * h * w);
            for (k, &i) in indices.iter().enumerate() {
                let planar = if flips.get(k).copied().unwrap_or(false) {
                    images[i].flip_horizontal().to_planar()
                } else {
                    images[i].to_planar()
                };
                data.extend(planar.into_iter().map(T::lit));
            }
            Tensor::new(&[indices.len(), c, h, w], data).expect("stacked size matches")
        };
        (stack(&self.distorted), stack(&self.clean))
    }
}
