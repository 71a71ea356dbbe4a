//! Baseline-JPEG quantisation artefacts without the lossless stages.
//!
//! Pixels go through full-range BT.601 YCbCr, 8×8 orthonormal DCT-II,
//! quantisation with the scaled standard tables and back. There is no chroma
//! subsampling and no entropy coding, so quantisation is the only loss.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{domain, Image, SynthError};

#[rustfmt::skip]
pub const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
pub const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Luma and chroma tables for `quality` in `1..=100` using the usual
/// IJG scaling (`5000/q` below 50, `200 − 2q` above).
pub fn jpeg_quant_tables(quality: u32) -> Result<([u16; 64], [u16; 64]), SynthError> {
    if !(1..=100).contains(&quality) {
        return Err(domain(format!("JPEG quality must be in 1..=100, got {quality}")));
    }
    let scale = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    let scaled = |base: &[u16; 64]| {
        let mut t = [0u16; 64];
        for (dst, &b) in t.iter_mut().zip(base) {
            *dst = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
        }
        t
    };
    Ok((scaled(&BASE_LUMA), scaled(&BASE_CHROMA)))
}

fn dct_matrix() -> &'static [f64; 64] {
    static M: OnceLock<[f64; 64]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [0.0; 64];
        for u in 0..8 {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for x in 0..8 {
                m[u * 8 + x] = a * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

/// `M·B·Mᵀ` for the forward transform, `Mᵀ·B·M` for the inverse.
fn sandwich(block: &[f64; 64], inverse: bool) -> [f64; 64] {
    let m = dct_matrix();
    let at = |r: usize, c: usize| if inverse { m[c * 8 + r] } else { m[r * 8 + c] };
    let mut tmp = [0.0; 64];
    for r in 0..8 {
        for c in 0..8 {
            tmp[r * 8 + c] = (0..8).map(|k| at(r, k) * block[k * 8 + c]).sum();
        }
    }
    let mut out = [0.0; 64];
    for r in 0..8 {
        for c in 0..8 {
            out[r * 8 + c] = (0..8).map(|k| tmp[r * 8 + k] * at(c, k)).sum();
        }
    }
    out
}

/// Orthonormal 2-D DCT-II of a row-major 8×8 block.
pub fn block_dct(block: &[f64; 64]) -> [f64; 64] {
    sandwich(block, false)
}

/// Inverse of [`block_dct`].
pub fn block_idct(coefs: &[f64; 64]) -> [f64; 64] {
    sandwich(coefs, true)
}

const RGB_TO_YCC: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

fn ycc_to_rgb() -> &'static [[f64; 3]; 3] {
    static INV: OnceLock<[[f64; 3]; 3]> = OnceLock::new();
    INV.get_or_init(|| {
        let m = RGB_TO_YCC;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for (r, row) in inv.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
            }
        }
        inv
    })
}

/// Simulated JPEG round trip at `quality`, clamped to `[0, 1]`.
/// Single-channel images are treated as luma only.
pub fn apply_jpeg(img: &Image, quality: u32) -> Result<Image, SynthError> {
    let (luma_q, chroma_q) = jpeg_quant_tables(quality)?;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if ch != 1 && ch != 3 {
        return Err(domain(format!("JPEG simulation needs 1 or 3 channels, got {ch}")));
    }
    let pw = w.div_ceil(8) * 8;
    let ph = h.div_ceil(8) * 8;

    // Centred planes (value − 128 on the 0..255 scale), edge-replicated.
    let mut planes = vec![vec![0.0; pw * ph]; ch];
    for y in 0..ph {
        for x in 0..pw {
            let (sx, sy) = (x.min(w - 1), y.min(h - 1));
            let i = y * pw + x;
            if ch == 1 {
                planes[0][i] = img.get(sx, sy, 0) * 255.0 - 128.0;
            } else {
                let rgb = [0, 1, 2].map(|c| img.get(sx, sy, c) * 255.0);
                for (p, row) in RGB_TO_YCC.iter().enumerate() {
                    planes[p][i] = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2] - if p == 0 { 128.0 } else { 0.0 };
                }
            }
        }
    }

    for (p, plane) in planes.iter_mut().enumerate() {
        let table = if p == 0 { &luma_q } else { &chroma_q };
        for by in (0..ph).step_by(8) {
            for bx in (0..pw).step_by(8) {
                let mut block = [0.0; 64];
                for r in 0..8 {
                    block[r * 8..r * 8 + 8].copy_from_slice(&plane[(by + r) * pw + bx..(by + r) * pw + bx + 8]);
                }
                let mut coefs = block_dct(&block);
                for (c, &q) in coefs.iter_mut().zip(table) {
                    let q = q as f64;
                    *c = (*c / q).round() * q;
                }
                let back = block_idct(&coefs);
                for r in 0..8 {
                    plane[(by + r) * pw + bx..(by + r) * pw + bx + 8].copy_from_slice(&back[r * 8..r * 8 + 8]);
                }
            }
        }
    }

    let inv = ycc_to_rgb();
    let mut out = Image::filled(w, h, ch, 0.0);
    for y in 0..h {
        for x in 0..w {
            let i = y * pw + x;
            if ch == 1 {
                out.set(x, y, 0, ((planes[0][i] + 128.0) / 255.0).clamp(0.0, 1.0));
            } else {
                let ycc = [planes[0][i] + 128.0, planes[1][i], planes[2][i]];
                for (c, row) in inv.iter().enumerate() {
                    let v = row[0] * ycc[0] + row[1] * ycc[1] + row[2] * ycc[2];
                    out.set(x, y, c, (v / 255.0).clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(out)
}
