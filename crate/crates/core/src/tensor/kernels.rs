//! Slice-level forward and backward kernels behind the tape operations.
//!
//! All feature maps are `N×C×H×W`, row-major. Convolutions use stride 1 and
//! zero "same" padding of `dilation * (f - 1) / 2` pixels.

use super::real::{gemm, lane_dot, lane_sum, MatRef, Real};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub dilation: usize,
}

impl ConvGeom {
    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn col_rows(&self) -> usize {
        self.cin * self.f * self.f
    }
}

/// Valid destination range `[lo, hi)` along an axis of length `len` when
/// reading from `dst + offset`.
#[inline]
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

#[inline]
fn tap_offset(k: usize, f: usize, dilation: usize) -> isize {
    (k as isize - (f as isize - 1) / 2) * dilation as isize
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (h, w, f) = (g.h, g.w, g.f);
    let hw = g.hw();
    for ci in 0..g.cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..f {
            let dy = tap_offset(ky, f, g.dilation);
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..f {
                let dx = tap_offset(kx, f, g.dilation);
                let (x0, x1) = valid_range(w, dx);
                let row = (ci * f + ky) * f + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let drow = &mut dst[y * w..(y + 1) * w];
                    if y < y0 || y >= y1 || x0 >= x1 {
                        drow.fill(T::zero());
                        continue;
                    }
                    let sy = (y as isize + dy) as usize;
                    let srow = &plane[sy * w..(sy + 1) * w];
                    drow[..x0].fill(T::zero());
                    let sx0 = (x0 as isize + dx) as usize;
                    drow[x0..x1].copy_from_slice(&srow[sx0..sx0 + (x1 - x0)]);
                    drow[x1..].fill(T::zero());
                }
            }
        }
    }
}

fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (h, w, f) = (g.h, g.w, g.f);
    let hw = g.hw();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..f {
            let oy = tap_offset(ky, f, g.dilation);
            let (y0, y1) = valid_range(h, oy);
            for kx in 0..f {
                let ox = tap_offset(kx, f, g.dilation);
                let (x0, x1) = valid_range(w, ox);
                if x0 >= x1 {
                    continue;
                }
                let row = (ci * f + ky) * f + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in y0..y1 {
                    let sy = (y as isize + oy) as usize;
                    let sx0 = (x0 as isize + ox) as usize;
                    let drow = &mut plane[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    let crow = &src[y * w + x0..y * w + x1];
                    drow.iter_mut().zip(crow).for_each(|(d, &c)| *d += c);
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    x: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
    out: &mut [T],
) {
    let hw = g.hw();
    let k = g.col_rows();
    let mut cols = if g.f == 1 { Vec::new() } else { vec![T::zero(); k * hw] };
    for n in 0..g.n {
        let xn = &x[n * g.cin * hw..(n + 1) * g.cin * hw];
        let on = &mut out[n * g.cout * hw..(n + 1) * g.cout * hw];
        match bias {
            Some(b) => {
                for (co, &bv) in b.iter().enumerate() {
                    on[co * hw..(co + 1) * hw].fill(bv);
                }
            }
            None => on.fill(T::zero()),
        }
        let src = if g.f == 1 {
            xn
        } else {
            im2col(xn, g, &mut cols);
            &cols[..]
        };
        gemm(
            g.cout,
            k,
            hw,
            MatRef::row_major(weight, k),
            MatRef::row_major(src, hw),
            T::one(),
            on,
        );
    }
}

/// Accumulates input, weight and bias gradients for `conv2d_forward`.
pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    g: &ConvGeom,
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let hw = g.hw();
    let k = g.col_rows();
    let mut cols = if g.f == 1 || dw.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); k * hw]
    };
    let mut dcols = if g.f == 1 || dx.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); k * hw]
    };
    for n in 0..g.n {
        let xn = &x[n * g.cin * hw..(n + 1) * g.cin * hw];
        let dyn_ = &dy[n * g.cout * hw..(n + 1) * g.cout * hw];
        if let Some(db) = db.as_deref_mut() {
            for (co, acc) in db.iter_mut().enumerate() {
                *acc += lane_sum(&dyn_[co * hw..(co + 1) * hw]);
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let src = if g.f == 1 {
                xn
            } else {
                im2col(xn, g, &mut cols);
                &cols[..]
            };
            // dW (cout×k) += dY (cout×hw) · colsᵀ (hw×k)
            gemm(
                g.cout,
                hw,
                k,
                MatRef::row_major(dyn_, hw),
                MatRef::transposed(src, hw),
                T::one(),
                dw,
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * g.cin * hw..(n + 1) * g.cin * hw];
            if g.f == 1 {
                gemm(
                    k,
                    g.cout,
                    hw,
                    MatRef::transposed(weight, k),
                    MatRef::row_major(dyn_, hw),
                    T::one(),
                    dxn,
                );
            } else {
                gemm(
                    k,
                    g.cout,
                    hw,
                    MatRef::transposed(weight, k),
                    MatRef::row_major(dyn_, hw),
                    T::zero(),
                    &mut dcols,
                );
                col2im_add(&dcols, g, dxn);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DepthwiseGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub dilation: usize,
}

/// Iterates over `(tap index, dy, dx, y-range, x-range)` of a dilated kernel.
fn for_each_tap(
    f: usize,
    dilation: usize,
    h: usize,
    w: usize,
    mut body: impl FnMut(usize, isize, isize, (usize, usize), (usize, usize)),
) {
    for ky in 0..f {
        let dy = tap_offset(ky, f, dilation);
        let yr = valid_range(h, dy);
        for kx in 0..f {
            let dx = tap_offset(kx, f, dilation);
            let xr = valid_range(w, dx);
            if yr.0 < yr.1 && xr.0 < xr.1 {
                body(ky * f + kx, dy, dx, yr, xr);
            }
        }
    }
}

/// Zero-padded copy of one plane: `pad` pixels on every side, row stride
/// `w + 2·pad`.
struct Padded {
    stride: usize,
    pad: usize,
}

impl Padded {
    fn new(w: usize, pad: usize) -> Self {
        Padded { stride: w + 2 * pad, pad }
    }

    fn fill<T: Real>(&self, plane: &[T], w: usize, buf: &mut [T]) {
        let (s, p) = (self.stride, self.pad);
        for (y, row) in plane.chunks_exact(w).enumerate() {
            let at = (y + p) * s + p;
            buf[at..at + w].copy_from_slice(row);
        }
    }
}

/// `acc[i] = Σ_t kern[t] · padded[i + offset(t)]` over a dilated `f×f`
/// kernel, each tap one contiguous pass of `acc.len()` elements.
fn correlate_padded<T: Real>(padded: &[T], kern: &[T], f: usize, d: usize, stride: usize, acc: &mut [T]) {
    let span = acc.len();
    acc.fill(T::zero());
    for ky in 0..f {
        for kx in 0..f {
            let wv = kern[ky * f + kx];
            if wv == T::zero() {
                continue;
            }
            let off = ky * d * stride + kx * d;
            acc.iter_mut().zip(&padded[off..off + span]).for_each(|(a, &v)| *a += wv * v);
        }
    }
}

/// Depthwise convolution, one channel at a time. With the input padded,
/// every tap becomes a single contiguous multiply-add over an `h × stride`
/// accumulator whose pad columns are discarded afterwards.
pub(crate) fn depthwise_forward<T: Real>(x: &[T], weight: &[T], g: &DepthwiseGeom, out: &mut [T]) {
    let (h, w, f, d) = (g.h, g.w, g.f, g.dilation);
    let hw = h * w;
    let pad = d * (f - 1) / 2;
    let geo = Padded::new(w, pad);
    let s = geo.stride;
    let span = (h - 1) * s + w;
    let mut px = vec![T::zero(); (h + 2 * pad) * s];
    let mut acc = vec![T::zero(); span];
    for n in 0..g.n {
        for c in 0..g.c {
            let base = (n * g.c + c) * hw;
            geo.fill(&x[base..base + hw], w, &mut px);
            correlate_padded(&px, &weight[c * f * f..(c + 1) * f * f], f, d, s, &mut acc);
            for (y, row) in out[base..base + hw].chunks_exact_mut(w).enumerate() {
                row.copy_from_slice(&acc[y * s..y * s + w]);
            }
        }
    }
}

pub(crate) fn depthwise_backward<T: Real>(
    x: &[T],
    weight: &[T],
    g: &DepthwiseGeom,
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
) {
    let (h, w, f, d) = (g.h, g.w, g.f, g.dilation);
    let hw = h * w;
    let pad = d * (f - 1) / 2;
    let geo = Padded::new(w, pad);
    let s = geo.stride;
    let span = (h - 1) * s + w;
    let rows = h + 2 * pad;
    let mut pbuf = vec![T::zero(); rows * s];
    let mut gbuf = vec![T::zero(); rows * s];
    let mut acc = vec![T::zero(); span];
    let mut flipped = vec![T::zero(); f * f];
    for n in 0..g.n {
        for c in 0..g.c {
            let base = (n * g.c + c) * hw;
            let gout = &dy[base..base + hw];
            let kern = &weight[c * f * f..(c + 1) * f * f];
            if let Some(dw) = dw.as_deref_mut() {
                // Gradient laid out on the accumulator grid (zero pad columns).
                geo.fill(&x[base..base + hw], w, &mut pbuf);
                for (y, row) in gout.chunks_exact(w).enumerate() {
                    gbuf[y * s..y * s + w].copy_from_slice(row);
                }
                let gk = &mut dw[c * f * f..(c + 1) * f * f];
                for ky in 0..f {
                    for kx in 0..f {
                        let off = ky * d * s + kx * d;
                        gk[ky * f + kx] += lane_dot(&gbuf[..span], &pbuf[off..off + span]);
                    }
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                // Full correlation: the flipped kernel over the padded gradient.
                gbuf.fill(T::zero());
                geo.fill(gout, w, &mut gbuf);
                flipped.iter_mut().zip(kern.iter().rev()).for_each(|(a, &b)| *a = b);
                correlate_padded(&gbuf, &flipped, f, d, s, &mut acc);
                let gin = &mut dx[base..base + hw];
                for (y, row) in gin.chunks_exact_mut(w).enumerate() {
                    row.iter_mut().zip(&acc[y * s..y * s + w]).for_each(|(r, &a)| *r += a);
                }
                gbuf.fill(T::zero());
            }
        }
    }
}

/// Number of in-bounds taps of a `window×window` box centred on each pixel.
pub(crate) fn pool_counts(h: usize, w: usize, window: usize) -> Vec<u32> {
    let r = (window / 2) as isize;
    let count_1d = |len: usize, i: usize| -> u32 {
        let lo = (i as isize - r).max(0);
        let hi = (i as isize + r).min(len as isize - 1);
        (hi - lo + 1) as u32
    };
    let mut counts = Vec::with_capacity(h * w);
    for y in 0..h {
        let cy = count_1d(h, y);
        for x in 0..w {
            counts.push(cy * count_1d(w, x));
        }
    }
    counts
}

pub(crate) fn avg_pool_forward<T: Real>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
    out: &mut [T],
) {
    let counts = pool_counts(h, w, window);
    let hw = h * w;
    out.fill(T::zero());
    for p in 0..planes {
        let xin = &x[p * hw..(p + 1) * hw];
        let o = &mut out[p * hw..(p + 1) * hw];
        for_each_tap(window, 1, h, w, |_, dy, dx, (y0, y1), (x0, x1)| {
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx0 = (x0 as isize + dx) as usize;
                let src = &xin[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                let dst = &mut o[y * w + x0..y * w + x1];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        });
        o.iter_mut()
            .zip(&counts)
            .for_each(|(v, &c)| *v /= T::lit(c as f64));
    }
}

pub(crate) fn avg_pool_backward<T: Real>(
    dy: &[T],
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
    dx: &mut [T],
) {
    let counts = pool_counts(h, w, window);
    let hw = h * w;
    let mut scaled = vec![T::zero(); hw];
    for p in 0..planes {
        let g = &dy[p * hw..(p + 1) * hw];
        scaled
            .iter_mut()
            .zip(g.iter().zip(&counts))
            .for_each(|(s, (&v, &c))| *s = v / T::lit(c as f64));
        let gin = &mut dx[p * hw..(p + 1) * hw];
        for_each_tap(window, 1, h, w, |_, oy, ox, (y0, y1), (x0, x1)| {
            for y in y0..y1 {
                let sy = (y as isize + oy) as usize;
                let sx0 = (x0 as isize + ox) as usize;
                let src = &scaled[y * w + x0..y * w + x1];
                let dst = &mut gin[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_edges() {
        assert_eq!(valid_range(5, 0), (0, 5));
        assert_eq!(valid_range(5, 2), (0, 3));
        assert_eq!(valid_range(5, -2), (2, 5));
        assert_eq!(valid_range(5, 7), (0, 0));
        let (lo, hi) = valid_range(5, -9);
        assert!(lo >= hi);
    }

    #[test]
    fn pool_counts_3x3() {
        assert_eq!(pool_counts(3, 3, 3), vec![4, 6, 4, 6, 9, 6, 4, 6, 4]);
        assert_eq!(pool_counts(1, 1, 3), vec![1]);
    }
}
