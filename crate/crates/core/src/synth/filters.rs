use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{domain, Image, SynthError};
use crate::rng::Rng;

/// Square, odd-sized convolution kernel stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Kernel, SynthError> {
        if size % 2 == 0 || data.len() != size * size {
            return Err(domain(format!(
                "kernel must be odd-sized and square, got size {size} with {} entries",
                data.len()
            )));
        }
        Ok(Kernel { size, data })
    }

    pub fn identity() -> Kernel {
        Kernel {
            size: 1,
            data: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Entry at row `y`, column `x`.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.size + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Half-sample symmetric reflection: `-1 → 0`, `n → n-1`, repeating for
/// offsets beyond one period.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

fn gaussian_1d(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut g: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Normalised 2-D Gaussian of size `2·ceil(3σ)+1`; `σ = 0` gives `[[1]]`.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel, SynthError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(domain(format!("gaussian sigma must be finite and non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(Kernel::identity());
    }
    let r = (3.0 * sigma).ceil() as isize;
    let size = (2 * r + 1) as usize;
    let mut data = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            data.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let s: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= s);
    Kernel::new(size, data)
}

/// Per-channel 2-D convolution `out(p) = Σ_q k(q) · img(p − q)` with
/// symmetric reflection at the borders. The result is not clamped. Zero taps
/// are skipped, which keeps sparse motion kernels cheap.
pub fn convolve_reflect(img: &Image, kernel: &Kernel) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = kernel.radius() as isize;
    let taps: Vec<(isize, isize, f64)> = (0..kernel.size())
        .flat_map(|ky| (0..kernel.size()).map(move |kx| (kx, ky)))
        .filter_map(|(kx, ky)| {
            let v = kernel.at(kx, ky);
            (v != 0.0).then_some((kx as isize - r, ky as isize - r, v))
        })
        .collect();
    let src = img.data();
    let mut out = Image::filled(w, h, ch, 0.0);
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * ch;
            for &(dx, dy, k) in &taps {
                let sx = reflect(x as isize - dx, w);
                let sy = reflect(y as isize - dy, h);
                let s = (sy * w + sx) * ch;
                for c in 0..ch {
                    dst[o + c] += k * src[s + c];
                }
            }
        }
    }
    out
}

fn convolve_separable(img: &Image, g: &[f64]) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = (g.len() / 2) as isize;
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * ch;
            for (t, &k) in g.iter().enumerate() {
                let sx = reflect(x as isize - (t as isize - r), w);
                let s = (y * w + sx) * ch;
                for c in 0..ch {
                    tmp[o + c] += k * src[s + c];
                }
            }
        }
    }
    let mut out = Image::filled(w, h, ch, 0.0);
    let dst = out.data_mut();
    for y in 0..h {
        for (t, &k) in g.iter().enumerate() {
            let sy = reflect(y as isize - (t as isize - r), h);
            let (drow, srow) = (y * w * ch, sy * w * ch);
            for i in 0..w * ch {
                dst[drow + i] += k * tmp[srow + i];
            }
        }
    }
    out
}

/// Gaussian blur with reflected borders, clamped to `[0, 1]`. Evaluated as
/// two 1-D passes, which equals the 2-D kernel up to rounding.
pub fn apply_gaussian_blur(img: &Image, sigma: f64) -> Result<Image, SynthError> {
    gaussian_kernel(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut out = convolve_separable(img, &gaussian_1d(sigma));
    out.clamp01();
    Ok(out)
}

/// Adds i.i.d. normal noise of standard deviation `sigma_255 / 255` and
/// clamps to `[0, 1]`.
pub fn apply_gaussian_noise(img: &Image, sigma_255: f64, rng: &mut Rng) -> Result<Image, SynthError> {
    if !(sigma_255 >= 0.0) || !sigma_255.is_finite() {
        return Err(domain(format!("noise sigma must be finite and non-negative, got {sigma_255}")));
    }
    if sigma_255 == 0.0 {
        return Ok(img.clone());
    }
    let s = sigma_255 / 255.0;
    let mut out = img.clone();
    for v in out.data_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v = (*v + s * n).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Convolves with a motion point-spread function and clamps to `[0, 1]`.
pub fn apply_motion_blur(img: &Image, psf: &Kernel) -> Result<Image, SynthError> {
    if psf.data().iter().any(|&v| v < 0.0) || (psf.sum() - 1.0).abs() > 1e-6 {
        return Err(domain("motion PSF must be non-negative and sum to 1"));
    }
    let mut out = convolve_reflect(img, psf);
    out.clamp01();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(-1, 1), 0);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn one_dimensional_profile_is_normalised() {
        let g = gaussian_1d(1.3);
        assert_eq!(g.len(), 2 * 4 + 1);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
