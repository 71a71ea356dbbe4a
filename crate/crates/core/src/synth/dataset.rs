use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{
    crop_patches, domain, sample_div2k_pipeline, sample_mixed_pipeline, Image, MixedRanges, PipelineSpec, Severity,
    SynthError,
};
use crate::rng::{named_seed, rng_from_seed, split_seed};
use rand::Rng as _;

/// Synthesis protocol of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Protocol {
    /// Blur → noise → JPEG with a fixed severity, or a random class per
    /// patch when `None`.
    Div2k(Option<Severity>),
    /// Random subsets of motion blur, noise and JPEG.
    Mixed(MixedRanges),
}

impl Protocol {
    /// Parses `div2k`, `mixed`, `novel-train` or `novel-test`.
    pub fn from_name(name: &str, severity: Option<Severity>) -> Result<Protocol, SynthError> {
        match name {
            "div2k" => Ok(Protocol::Div2k(severity)),
            "mixed" => Ok(Protocol::Mixed(MixedRanges::default())),
            "novel-train" => Ok(Protocol::Mixed(MixedRanges::novel_train())),
            "novel-test" => Ok(Protocol::Mixed(MixedRanges::novel_test())),
            other => Err(domain(format!(
                "unknown protocol `{other}` (expected div2k, mixed, novel-train or novel-test)"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Protocol::Div2k(_) => "div2k",
            Protocol::Mixed(r) if *r == MixedRanges::novel_train() => "novel-train",
            Protocol::Mixed(r) if *r == MixedRanges::novel_test() => "novel-test",
            Protocol::Mixed(_) => "mixed",
        }
    }

    /// Pipeline for the sample with seed `seed`.
    pub fn sample(&self, seed: u64) -> Result<PipelineSpec, SynthError> {
        match self {
            Protocol::Div2k(fixed) => {
                let severity = match fixed {
                    Some(s) => *s,
                    None => {
                        let mut rng = rng_from_seed(named_seed(seed, "severity"));
                        Severity::CLASSES[rng.random_range(0..3)]
                    }
                };
                sample_div2k_pipeline(severity, seed)
            }
            Protocol::Mixed(ranges) => Ok(sample_mixed_pipeline(ranges, seed)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetOptions {
    pub protocol: Protocol,
    pub patch_size: usize,
    /// Patches cropped from each source image.
    pub count: usize,
    pub master_seed: u64,
}

/// One manifest line. Empty optional fields mean the stage is absent.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub source_image: String,
    pub crop_x: usize,
    pub crop_y: usize,
    pub size: usize,
    pub protocol: String,
    pub severity: Severity,
    pub blur_sigma: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub jpeg_quality: Option<u32>,
    pub motion_max_len: Option<f64>,
    pub external: bool,
    pub seed: u64,
}

impl ManifestRow {
    pub fn pipeline(&self) -> PipelineSpec {
        PipelineSpec::from_parts(
            self.seed,
            self.severity,
            self.blur_sigma,
            self.motion_max_len,
            self.noise_sigma,
            self.jpeg_quality,
            self.external,
        )
    }
}

const HEADER: [&str; 13] = [
    "sample_id",
    "source_image",
    "crop_x",
    "crop_y",
    "size",
    "protocol",
    "severity",
    "blur_sigma",
    "noise_sigma",
    "jpeg_quality",
    "motion_max_len",
    "external",
    "seed",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.sample_id.clone(),
                r.source_image.clone(),
                r.crop_x.to_string(),
                r.crop_y.to_string(),
                r.size.to_string(),
                r.protocol.clone(),
                r.severity.to_string(),
                opt(r.blur_sigma),
                opt(r.noise_sigma),
                opt(r.jpeg_quality),
                opt(r.motion_max_len),
                (r.external as u8).to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads a manifest written by [`build_dataset`].
pub fn read_manifest(path: &Path) -> Result<Manifest, SynthError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(domain(format!("{}: unexpected manifest header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |field: &str| domain(format!("{}: bad `{field}` in row {:?}", path.display(), rec.position()));
        let num = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(HEADER[i]));
        let real = |i: usize| -> Result<Option<f64>, SynthError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| bad(HEADER[i]))
            }
        };
        rows.push(ManifestRow {
            sample_id: rec[0].to_string(),
            source_image: rec[1].to_string(),
            crop_x: num(2)?,
            crop_y: num(3)?,
            size: num(4)?,
            protocol: rec[5].to_string(),
            severity: rec[6].parse()?,
            blur_sigma: real(7)?,
            noise_sigma: real(8)?,
            jpeg_quality: if rec[9].is_empty() {
                None
            } else {
                Some(rec[9].parse().map_err(|_| bad("jpeg_quality"))?)
            },
            motion_max_len: real(10)?,
            external: &rec[11] == "1",
            seed: rec[12].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(Manifest { rows })
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "bmp" | "ppm" | "tif" | "tiff"))
        .unwrap_or(false)
}

/// Image files in `dir`, sorted by name.
pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    let io = |source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn load_rgb(path: &Path) -> Option<Image> {
    match Image::load(path) {
        Ok(img) => Some(img.to_rgb()),
        Err(e) => {
            warn!("skipping unreadable image {e}");
            None
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn create_dir(path: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(path).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Crops and distorts every image of `input_dir`, writing
/// `{out}/clean/{id}.png`, `{out}/distorted/{id}.png` and
/// `{out}/manifest.csv`.
///
/// When `input_dir` has `clean/` and `distorted/` subdirectories, the files
/// are treated as externally distorted pairs (matched by name) and cropped
/// at identical positions instead of being synthesised.
///
/// Sample `k` (source images sorted by name, `count` patches each) uses seed
/// `split_seed(master_seed, k)`, so the output does not depend on the order
/// in which samples are produced.
pub fn build_dataset(input_dir: &Path, output_dir: &Path, opts: &DatasetOptions) -> Result<Manifest, SynthError> {
    let external = input_dir.join("clean").is_dir() && input_dir.join("distorted").is_dir();
    let sources = list_images(&if external { input_dir.join("clean") } else { input_dir.to_path_buf() })?;
    if sources.is_empty() {
        return Err(domain(format!("no input images in {}", input_dir.display())));
    }
    let (clean_dir, dist_dir) = (output_dir.join("clean"), output_dir.join("distorted"));
    create_dir(&clean_dir)?;
    create_dir(&dist_dir)?;

    let mut manifest = Manifest::default();
    for (i, path) in sources.iter().enumerate() {
        let Some(img) = load_rgb(path) else { continue };
        let partner = if external {
            let p = input_dir.join("distorted").join(file_name(path));
            match load_rgb(&p) {
                Some(d) if d.same_shape(&img) => Some(d),
                Some(_) => {
                    warn!("skipping {}: distorted counterpart has a different size", path.display());
                    continue;
                }
                None => continue,
            }
        } else {
            None
        };
        if img.width() < opts.patch_size || img.height() < opts.patch_size {
            warn!(
                "skipping {}: smaller than the {} px patch size",
                path.display(),
                opts.patch_size
            );
            continue;
        }
        for j in 0..opts.count {
            let seed = split_seed(opts.master_seed, (i * opts.count + j) as u64);
            let mut crop_rng = rng_from_seed(named_seed(seed, "crop"));
            let crop = crop_patches(&img, opts.patch_size, 1, &mut crop_rng)?.remove(0);
            let (pipeline, distorted) = match &partner {
                Some(d) => (
                    PipelineSpec::from_parts(seed, Severity::Unclassed, None, None, None, None, true),
                    d.crop(crop.x, crop.y, opts.patch_size, opts.patch_size)?,
                ),
                None => {
                    let spec = opts.protocol.sample(seed)?;
                    let out = spec.apply(&crop.image)?;
                    (spec, out)
                }
            };
            let id = format!("{}_{j:04}", stem(path));
            crop.image.save_png(&clean_dir.join(format!("{id}.png")))?;
            distorted.save_png(&dist_dir.join(format!("{id}.png")))?;
            manifest.rows.push(ManifestRow {
                sample_id: id,
                source_image: file_name(path),
                crop_x: crop.x,
                crop_y: crop.y,
                size: opts.patch_size,
                protocol: if external { "external".into() } else { opts.protocol.name().into() },
                severity: pipeline.severity,
                blur_sigma: pipeline.blur_sigma(),
                noise_sigma: pipeline.noise_sigma(),
                jpeg_quality: pipeline.jpeg_quality(),
                motion_max_len: pipeline.motion_len(),
                external,
                seed,
            });
        }
    }
    if manifest.rows.is_empty() {
        return Err(domain(format!("no usable input images in {}", input_dir.display())));
    }
    manifest.write(&output_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Recomputes one sample from its manifest row and the source directory.
/// Returns `(clean, distorted)` before 8-bit quantisation.
pub fn replay_sample(row: &ManifestRow, input_dir: &Path) -> Result<(Image, Image), SynthError> {
    let load = |p: PathBuf| Image::load(&p).map(|i| i.to_rgb());
    if row.external {
        let clean = load(input_dir.join("clean").join(&row.source_image))?;
        let dist = load(input_dir.join("distorted").join(&row.source_image))?;
        return Ok((
            clean.crop(row.crop_x, row.crop_y, row.size, row.size)?,
            dist.crop(row.crop_x, row.crop_y, row.size, row.size)?,
        ));
    }
    let clean = load(input_dir.join(&row.source_image))?.crop(row.crop_x, row.crop_y, row.size, row.size)?;
    let distorted = row.pipeline().apply(&clean)?;
    Ok((clean, distorted))
}
