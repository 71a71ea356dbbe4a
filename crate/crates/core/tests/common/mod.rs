//! Brute-force reference implementations shared by the integration tests.
//! Each one is a direct nested loop over the defining formula and shares no
//! code with the library kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Zero-padded "same" convolution (cross-correlation), stride 1.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_oracle(
    x: &[f64],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    f: usize,
    bias: &[f64],
    dilation: usize,
) -> Vec<f64> {
    let r = (f as isize - 1) / 2;
    let mut out = vec![0.0; n * cout * h * w];
    for b in 0..n {
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..f {
                            for kx in 0..f {
                                let sy = y as isize + (ky as isize - r) * dilation as isize;
                                let sx = xx as isize + (kx as isize - r) * dilation as isize;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * cin + ci) * h + sy as usize) * w + sx as usize];
                                let wv = weight[((co * cin + ci) * f + ky) * f + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b * cout + co) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

pub fn depthwise_oracle(
    x: &[f64],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    f: usize,
    dilation: usize,
) -> Vec<f64> {
    let r = (f as isize - 1) / 2;
    let mut out = vec![0.0; n * c * h * w];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for ky in 0..f {
                        for kx in 0..f {
                            let sy = y as isize + (ky as isize - r) * dilation as isize;
                            let sx = xx as isize + (kx as isize - r) * dilation as isize;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += x[((b * c + ch) * h + sy as usize) * w + sx as usize]
                                * weight[(ch * f + ky) * f + kx];
                        }
                    }
                    out[((b * c + ch) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

/// Windowed mean over in-bounds taps only.
pub fn avg_pool_oracle(x: &[f64], planes: usize, h: usize, w: usize, window: usize) -> Vec<f64> {
    let r = (window / 2) as isize;
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let (mut s, mut cnt) = (0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (sy, sx) = (y + dy, xx + dx);
                        if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                            s += x[(p * h + sy as usize) * w + sx as usize];
                            cnt += 1.0;
                        }
                    }
                }
                out[(p * h + y as usize) * w + xx as usize] = s / cnt;
            }
        }
    }
    out
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Relative error scaled by the largest magnitude in the reference.
pub fn scaled_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    got.iter()
        .zip(want)
        .map(|(&x, &y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

/// Mirror index by repeated folding (independent of the library's modular
/// formula).
pub fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2-D convolution of an interleaved `h×w×ch` image with a `k×k`
/// kernel, mirrored borders, clamped to [0, 1].
pub fn reflect_conv_oracle(img: &[f64], w: usize, h: usize, ch: usize, kernel: &[f64], k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; img.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for ky in 0..k {
                    for kx in 0..k {
                        let sx = mirror(x as isize - (kx as isize - r), w);
                        let sy = mirror(y as isize - (ky as isize - r), h);
                        acc += kernel[ky * k + kx] * img[(sy * w + sx) * ch + c];
                    }
                }
                out[(y * w + x) * ch + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    out
}
