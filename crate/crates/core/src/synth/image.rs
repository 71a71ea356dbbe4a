use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use super::{domain, SynthError};

/// Interleaved `H×W×C` image with real-valued samples, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, SynthError> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(domain(format!("image dimensions must be positive, got {width}×{height}×{channels}")));
        }
        if data.len() != width * height * channels {
            return Err(domain(format!(
                "image data length {} does not match {width}×{height}×{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image, SynthError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(domain(format!(
                "crop {w}×{h} at ({x0}, {y0}) exceeds {}×{} image",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(w, h, self.channels, |x, y, c| self.get(x0 + x, y0 + y, c)))
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(self.width - 1 - x, y, c)
        })
    }

    /// Planar `C×H×W` copy, the layout of one network input sample.
    pub fn to_planar(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.data.chunks(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[f64]) -> Result<Image, SynthError> {
        let plane = width * height;
        if planar.len() != plane * channels {
            return Err(domain("planar data length does not match image size"));
        }
        Ok(Image::from_fn(width, height, channels, |x, y, c| planar[c * plane + y * width + x]))
    }

    /// Three-channel copy; grayscale is replicated.
    pub fn to_rgb(&self) -> Image {
        match self.channels {
            3 => self.clone(),
            _ => Image::from_fn(self.width, self.height, 3, |x, y, _| self.get(x, y, 0)),
        }
    }

    /// Rounds to 8 bits and back, the precision of the on-disk format.
    pub fn quantize8(&self) -> Image {
        let data = self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect();
        Image { data, ..*self }
    }

    /// Loads an 8-bit PNG (or any format the `image` crate decodes) as RGB,
    /// or as single-channel when the file is grayscale.
    pub fn load(path: &Path) -> Result<Image, SynthError> {
        let dynimg = image::open(path).map_err(|source| SynthError::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = matches!(dynimg.color().channel_count(), 1 | 2);
        if gray {
            let buf = dynimg.to_luma8();
            let (w, h) = buf.dimensions();
            let data = buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            Image::new(w as usize, h as usize, 1, data)
        } else {
            let buf = dynimg.to_rgb8();
            let (w, h) = buf.dimensions();
            let data = buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            Image::new(w as usize, h as usize, 3, data)
        }
    }

    /// Writes an 8-bit PNG; samples are clamped and rounded.
    pub fn save_png(&self, path: &Path) -> Result<(), SynthError> {
        let raw: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let err = |source| SynthError::Image {
            path: path.to_path_buf(),
            source,
        };
        match self.channels {
            1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                .expect("buffer size matches")
                .save(path)
                .map_err(err),
            3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
                .expect("buffer size matches")
                .save(path)
                .map_err(err),
            c => Err(domain(format!("cannot write a {c}-channel image as PNG"))),
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
