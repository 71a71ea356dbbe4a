//! Procedural stand-ins for natural photographs: smooth gradients, soft-edged
//! shapes, striped textures and low-frequency shading. Useful wherever real
//! clean images are not at hand.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng as _;

use super::{Image, SynthError};
use crate::rng::{rng_from_seed, split_seed, Rng};

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, rot: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, rot: f64 },
}

struct Layer {
    shape: Shape,
    color: [f64; 3],
    /// Stripe amplitude, angular frequency and direction.
    stripes: Option<(f64, f64, f64)>,
}

fn color(rng: &mut Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Signed distance-like coverage in [0, 1] with a one-pixel soft edge.
fn coverage(shape: &Shape, x: f64, y: f64) -> f64 {
    let rotate = |cx: f64, cy: f64, rot: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let (s, c) = rot.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    };
    let d = match *shape {
        Shape::Ellipse { cx, cy, rx, ry, rot } => {
            let (u, v) = rotate(cx, cy, rot);
            let r = ((u / rx).powi(2) + (v / ry).powi(2)).sqrt();
            (r - 1.0) * rx.min(ry)
        }
        Shape::Rect { cx, cy, hw, hh, rot } => {
            let (u, v) = rotate(cx, cy, rot);
            (u.abs() - hw).max(v.abs() - hh)
        }
    };
    (0.5 - d).clamp(0.0, 1.0)
}

/// Smooth random field from bilinear interpolation of a coarse grid.
fn shading(rng: &mut Rng, w: usize, h: usize) -> impl Fn(f64, f64) -> f64 {
    let cells = 4;
    let grid: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f64>() - 0.5).collect();
    let (sx, sy) = (cells as f64 / w as f64, cells as f64 / h as f64);
    move |x, y| {
        let (gx, gy) = ((x * sx).min(cells as f64 - 1e-9), (y * sy).min(cells as f64 - 1e-9));
        let (i, j) = (gx.floor() as usize, gy.floor() as usize);
        let (fx, fy) = (gx - i as f64, gy - j as f64);
        let at = |a: usize, b: usize| grid[b * (cells + 1) + a];
        (1.0 - fy) * ((1.0 - fx) * at(i, j) + fx * at(i + 1, j)) + fy * ((1.0 - fx) * at(i, j + 1) + fx * at(i + 1, j + 1))
    }
}

/// A deterministic RGB scene of the given size.
pub fn procedural_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = rng_from_seed(seed);
    let (wf, hf) = (width as f64, height as f64);
    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let grad_angle = rng.random::<f64>() * TAU;
    let (gs, gc) = grad_angle.sin_cos();
    let n_layers = rng.random_range(8..16);
    let layers: Vec<Layer> = (0..n_layers)
        .map(|_| {
            let cx = rng.random::<f64>() * wf;
            let cy = rng.random::<f64>() * hf;
            let scale = wf.min(hf) * (0.05 + 0.3 * rng.random::<f64>());
            let rot = rng.random::<f64>() * TAU;
            let aspect = 0.4 + 1.2 * rng.random::<f64>();
            let shape = if rng.random::<bool>() {
                Shape::Ellipse {
                    cx,
                    cy,
                    rx: scale,
                    ry: scale * aspect,
                    rot,
                }
            } else {
                Shape::Rect {
                    cx,
                    cy,
                    hw: scale,
                    hh: scale * aspect,
                    rot,
                }
            };
            let stripes = rng.random_bool(0.4).then(|| {
                (
                    0.1 + 0.2 * rng.random::<f64>(),
                    TAU / (3.0 + 12.0 * rng.random::<f64>()),
                    rng.random::<f64>() * TAU,
                )
            });
            Layer {
                shape,
                color: color(&mut rng),
                stripes,
            }
        })
        .collect();
    let shade = shading(&mut rng, width, height);

    Image::from_fn(width, height, 3, |x, y, c| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = (((xf - wf / 2.0) * gc + (yf - hf / 2.0) * gs) / wf.max(hf) + 0.5).clamp(0.0, 1.0);
        let mut v = c0[c] * (1.0 - t) + c1[c] * t;
        for layer in &layers {
            let a = coverage(&layer.shape, xf, yf);
            if a > 0.0 {
                let mut col = layer.color[c];
                if let Some((amp, freq, dir)) = layer.stripes {
                    col += amp * (freq * (xf * dir.cos() + yf * dir.sin())).sin();
                }
                v = v * (1.0 - a) + col * a;
            }
        }
        (v + 0.25 * shade(xf, yf)).clamp(0.0, 1.0)
    })
}

/// Writes `count` scenes as `scene_{i:03}.png` into `dir`; scene `i` uses
/// `split_seed(seed, i)`.
pub fn write_scenes(dir: &Path, count: usize, width: usize, height: usize, seed: u64) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for i in 0..count {
        procedural_scene(width, height, split_seed(seed, i as u64)).save_png(&dir.join(format!("scene_{i:03}.png")))?;
    }
    Ok(())
}
