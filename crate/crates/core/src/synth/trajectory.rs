//! Random camera-shake trajectories and their point-spread functions.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{domain, Kernel, SynthError};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryParams {
    pub num_steps: usize,
    /// Fraction of the previous velocity kept at each step.
    pub inertia: f64,
    /// Standard deviation of the per-step velocity perturbation, relative to
    /// the unit speed.
    pub gaussian_jitter_std: f64,
    /// Per-step probability of an abrupt shake.
    pub impulse_probability: f64,
    /// Arc length of the final path in pixels.
    pub max_len: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            num_steps: 2000,
            inertia: 0.7,
            gaussian_jitter_std: 0.03,
            impulse_probability: 0.005,
            max_len: 40.0,
        }
    }
}

impl TrajectoryParams {
    pub fn with_len(max_len: f64) -> Self {
        TrajectoryParams {
            max_len,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.num_steps < 2 {
            return Err(domain("trajectory needs at least 2 steps"));
        }
        if !(0.0..1.0).contains(&self.inertia) {
            return Err(domain(format!("inertia must be in [0, 1), got {}", self.inertia)));
        }
        if !(0.0..=1.0).contains(&self.impulse_probability) {
            return Err(domain("impulse probability must be in [0, 1]"));
        }
        if !(self.gaussian_jitter_std >= 0.0) {
            return Err(domain("jitter std must be non-negative"));
        }
        if !(self.max_len >= 1.0) || !self.max_len.is_finite() {
            return Err(domain(format!("trajectory length must be ≥ 1, got {}", self.max_len)));
        }
        Ok(())
    }
}

/// Simulates a particle with inertia, Gaussian jitter and rare impulses,
/// moving at unit speed, then rescales the path to arc length `max_len`.
pub fn generate_trajectory(params: &TrajectoryParams, rng: &mut Rng) -> Result<Vec<[f64; 2]>, SynthError> {
    params.validate()?;
    let angle = rng.random::<f64>() * TAU;
    let mut v = [angle.cos(), angle.sin()];
    let mut p = [0.0, 0.0];
    let mut points = Vec::with_capacity(params.num_steps);
    points.push(p);
    let mut arc = 0.0;
    for _ in 1..params.num_steps {
        let jx: f64 = rng.sample(StandardNormal);
        let jy: f64 = rng.sample(StandardNormal);
        let mut nv = [
            params.inertia * v[0] + params.gaussian_jitter_std * jx,
            params.inertia * v[1] + params.gaussian_jitter_std * jy,
        ];
        if rng.random::<f64>() < params.impulse_probability {
            let a = rng.random::<f64>() * TAU;
            nv[0] += 2.0 * a.cos();
            nv[1] += 2.0 * a.sin();
        }
        let speed = nv[0].hypot(nv[1]);
        if speed > 0.0 {
            v = [nv[0] / speed, nv[1] / speed];
        }
        p = [p[0] + v[0], p[1] + v[1]];
        arc += 1.0;
        points.push(p);
    }
    let scale = params.max_len / arc;
    for q in &mut points {
        q[0] *= scale;
        q[1] *= scale;
    }
    Ok(points)
}

/// Total polyline length of `points`.
pub fn arc_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// Rasterises a trajectory into a normalised PSF by bilinear splatting of
/// unit masses. The path is centred on its bounding-box midpoint; the kernel
/// grows past `kernel_size` to the next odd size that holds every point.
pub fn trajectory_to_kernel(points: &[[f64; 2]], kernel_size: usize) -> Result<Kernel, SynthError> {
    if points.is_empty() {
        return Err(domain("cannot build a PSF from an empty trajectory"));
    }
    if kernel_size % 2 == 0 {
        return Err(domain(format!("kernel size must be odd, got {kernel_size}")));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let half = ((hi[0] - lo[0]) / 2.0).max((hi[1] - lo[1]) / 2.0);
    let r = (kernel_size / 2).max(half.ceil() as usize);
    let size = 2 * r + 1;
    let mut data = vec![0.0; size * size];
    for p in points {
        // Clamping only absorbs rounding in `p − mid`.
        let gx = ((p[0] - mid[0]) + r as f64).clamp(0.0, 2.0 * r as f64);
        let gy = ((p[1] - mid[1]) + r as f64).clamp(0.0, 2.0 * r as f64);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let wgt = wx * wy;
                if wgt > 0.0 {
                    data[(y0 + dy) * size + x0 + dx] += wgt;
                }
            }
        }
    }
    let s: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= s);
    Kernel::new(size, data)
}
