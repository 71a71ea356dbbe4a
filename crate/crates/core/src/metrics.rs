//! Image quality metrics: PSNR over RGB and single-scale luma SSIM.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::synth::{Image, SynthError};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("image of {width}×{height} is smaller than the {window}×{window} SSIM window")]
    TooSmall { width: usize, height: usize, window: usize },

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] SynthError),
}

fn check_shapes(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricsError::Shape(format!(
            "{}×{}×{} vs {}×{}×{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )))
    }
}

/// `10·log10(1 / MSE)` over all channels, with peak 1. Identical images give
/// [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// BT.601 luma plane (row-major); single-channel images pass through.
pub fn luma(img: &Image) -> Vec<f64> {
    if img.channels() == 1 {
        return img.data().to_vec();
    }
    img.data()
        .chunks(img.channels())
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect()
}

fn window_1d() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-region separable filtering of a `w×h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|t| g[t] * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|t| g[t] * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean single-scale SSIM of the luma planes: 11×11 Gaussian window
/// (σ = 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1, averaged over the
/// valid region only.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let (ya, yb) = (luma(a), luma(b));
    let g = window_1d();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&ya, w, h, &g);
    let mu_b = filter_valid(&yb, w, h, &g);
    let e_aa = filter_valid(&prod(&ya, &ya), w, h, &g);
    let e_bb = filter_valid(&prod(&yb, &yb), w, h, &g);
    let e_ab = filter_valid(&prod(&ya, &yb), w, h, &g);
    let (c1, c2) = ((K1 * 1.0f64).powi(2), (K2 * 1.0f64).powi(2));
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub filename: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EvalReport {
    /// Successfully scored files, sorted by name.
    pub rows: Vec<EvalRow>,
    /// Files that could not be scored, with the reason.
    pub errors: Vec<(String, String)>,
}

impl EvalReport {
    pub fn count(&self) -> usize {
        self.rows.len()
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr_db))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.ssim))
    }

    /// CSV with columns `filename,psnr_db,ssim,status`, one line per file in
    /// name order (errors included, without scores) and a final `MEAN` line
    /// over the scored files.
    pub fn to_csv(&self) -> String {
        let mut lines: Vec<(String, String)> = self
            .rows
            .iter()
            .map(|r| (r.filename.clone(), format!("{},{:.6},{:.6},ok", r.filename, r.psnr_db, r.ssim)))
            .chain(
                self.errors
                    .iter()
                    .map(|(f, e)| (f.clone(), format!("{f},,,error: {}", e.replace([',', '\n'], ";")))),
            )
            .collect();
        lines.sort();
        let mut out = String::from("filename,psnr_db,ssim,status\n");
        for (_, l) in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out.push_str(&format!(
            "MEAN,{:.6},{:.6},n={}\n",
            self.mean_psnr(),
            self.mean_ssim(),
            self.count()
        ));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let io = |source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn image_names(dir: &Path) -> Result<BTreeSet<String>, MetricsError> {
    let io = |source| MetricsError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = BTreeSet::new();
    for e in fs::read_dir(dir).map_err(io)? {
        let p = e.map_err(io)?.path();
        let is_png = p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"));
        if p.is_file() && is_png {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    Ok(out)
}

/// Scores every PNG of `restored` against the same-named file of
/// `reference`. Files present on only one side, unreadable files and size
/// mismatches become error rows.
pub fn evaluate_pairs(restored: &Path, reference: &Path) -> Result<EvalReport, MetricsError> {
    let (a, b) = (image_names(restored)?, image_names(reference)?);
    let mut report = EvalReport::default();
    for name in a.union(&b) {
        if !a.contains(name) {
            report.errors.push((name.clone(), "missing from restored directory".into()));
            continue;
        }
        if !b.contains(name) {
            report.errors.push((name.clone(), "missing from reference directory".into()));
            continue;
        }
        let scored = Image::load(&restored.join(name))
            .and_then(|x| Ok((x, Image::load(&reference.join(name))?)))
            .map_err(MetricsError::from)
            .and_then(|(x, y)| Ok((psnr(&x, &y)?, ssim(&x, &y)?)));
        match scored {
            Ok((p, s)) => report.rows.push(EvalRow {
                filename: name.clone(),
                psnr_db: p,
                ssim: s,
            }),
            Err(e) => report.errors.push((name.clone(), e.to_string())),
        }
    }
    Ok(report)
}
