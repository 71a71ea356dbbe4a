use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::{
    apply_gaussian_blur, apply_gaussian_noise, apply_jpeg, apply_motion_blur, domain, generate_trajectory,
    trajectory_to_kernel, Image, SynthError, TrajectoryParams,
};
use crate::rng::{named_seed, rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
    Unclassed,
}

impl Severity {
    pub const CLASSES: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Severe];

    /// Index of the severity third (0 = mildest), `None` when unclassed.
    fn third(self) -> Option<usize> {
        match self {
            Severity::Mild => Some(0),
            Severity::Moderate => Some(1),
            Severity::Severe => Some(2),
            Severity::Unclassed => None,
        }
    }

    /// Gaussian blur σ range `[lo, hi)` of this class within `[0, 5]`.
    pub fn blur_range(self) -> Option<(f64, f64)> {
        self.third().map(|t| (5.0 * t as f64 / 3.0, 5.0 * (t + 1) as f64 / 3.0))
    }

    /// Noise σ range `[lo, hi)` (0–255 scale) within `[0, 50]`.
    pub fn noise_range(self) -> Option<(f64, f64)> {
        self.third().map(|t| (50.0 * t as f64 / 3.0, 50.0 * (t + 1) as f64 / 3.0))
    }

    /// Inclusive JPEG quality range within `[10, 100]`; the highest
    /// qualities are the mildest.
    pub fn quality_range(self) -> Option<(u32, u32)> {
        self.third().map(|t| match t {
            0 => (71, 100),
            1 => (41, 70),
            _ => (10, 40),
        })
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
            Severity::Unclassed => "unclassed",
        })
    }
}

impl FromStr for Severity {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mild" => Ok(Severity::Mild),
            "moderate" => Ok(Severity::Moderate),
            "severe" => Ok(Severity::Severe),
            "unclassed" | "" => Ok(Severity::Unclassed),
            other => Err(domain(format!("unknown severity `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistortionKind {
    GaussianBlur { sigma: f64 },
    /// Standard deviation on the 0–255 scale.
    GaussianNoise { sigma_255: f64 },
    Jpeg { quality: u32 },
    MotionBlur { max_traj_len: f64 },
    /// A distortion present in externally supplied pairs (e.g. raindrops).
    External,
}

impl DistortionKind {
    pub fn label(&self) -> &'static str {
        match self {
            DistortionKind::GaussianBlur { .. } => "blur",
            DistortionKind::GaussianNoise { .. } => "noise",
            DistortionKind::Jpeg { .. } => "jpeg",
            DistortionKind::MotionBlur { .. } => "motion",
            DistortionKind::External => "external",
        }
    }
}

/// One distortion stage: parameters plus the seed of its own random stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub seed: u64,
}

impl DistortionSpec {
    /// A stage whose seed is derived from `base` and the stage label, so a
    /// pipeline can be rebuilt from a sample seed and its parameters alone.
    pub fn derived(kind: DistortionKind, base: u64) -> Self {
        DistortionSpec {
            kind,
            seed: named_seed(base, kind.label()),
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image, SynthError> {
        match self.kind {
            DistortionKind::GaussianBlur { sigma } => apply_gaussian_blur(img, sigma),
            DistortionKind::GaussianNoise { sigma_255 } => {
                apply_gaussian_noise(img, sigma_255, &mut rng_from_seed(self.seed))
            }
            DistortionKind::Jpeg { quality } => apply_jpeg(img, quality),
            DistortionKind::MotionBlur { max_traj_len } => {
                let params = TrajectoryParams::with_len(max_traj_len);
                let points = generate_trajectory(&params, &mut rng_from_seed(self.seed))?;
                let psf = trajectory_to_kernel(&points, 1)?;
                apply_motion_blur(img, &psf)
            }
            DistortionKind::External => Err(domain("external distortions cannot be synthesised")),
        }
    }
}

/// Ordered distortion stages applied left to right.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSpec {
    pub stages: Vec<DistortionSpec>,
    pub severity: Severity,
}

impl PipelineSpec {
    pub fn apply(&self, img: &Image) -> Result<Image, SynthError> {
        let mut out = img.clone();
        for stage in &self.stages {
            out = stage.apply(&out)?;
        }
        Ok(out)
    }

    pub fn blur_sigma(&self) -> Option<f64> {
        self.stages.iter().find_map(|s| match s.kind {
            DistortionKind::GaussianBlur { sigma } => Some(sigma),
            _ => None,
        })
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        self.stages.iter().find_map(|s| match s.kind {
            DistortionKind::GaussianNoise { sigma_255 } => Some(sigma_255),
            _ => None,
        })
    }

    pub fn jpeg_quality(&self) -> Option<u32> {
        self.stages.iter().find_map(|s| match s.kind {
            DistortionKind::Jpeg { quality } => Some(quality),
            _ => None,
        })
    }

    pub fn motion_len(&self) -> Option<f64> {
        self.stages.iter().find_map(|s| match s.kind {
            DistortionKind::MotionBlur { max_traj_len } => Some(max_traj_len),
            _ => None,
        })
    }

    pub fn is_external(&self) -> bool {
        self.stages.iter().any(|s| s.kind == DistortionKind::External)
    }

    /// Rebuilds a pipeline from recorded parameters. Stages run in the order
    /// blur, motion, noise, JPEG, which covers both synthesis protocols.
    pub fn from_parts(
        seed: u64,
        severity: Severity,
        blur: Option<f64>,
        motion: Option<f64>,
        noise: Option<f64>,
        quality: Option<u32>,
        external: bool,
    ) -> PipelineSpec {
        let mut stages = Vec::new();
        let mut push = |k| stages.push(DistortionSpec::derived(k, seed));
        if external {
            push(DistortionKind::External);
        }
        if let Some(sigma) = blur {
            push(DistortionKind::GaussianBlur { sigma });
        }
        if let Some(max_traj_len) = motion {
            push(DistortionKind::MotionBlur { max_traj_len });
        }
        if let Some(sigma_255) = noise {
            push(DistortionKind::GaussianNoise { sigma_255 });
        }
        if let Some(quality) = quality {
            push(DistortionKind::Jpeg { quality });
        }
        PipelineSpec { stages, severity }
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws blur σ, noise σ and JPEG quality from the thirds of `severity`
/// and returns the blur → noise → JPEG pipeline. Stage seeds derive from
/// `seed`.
pub fn sample_div2k_pipeline(severity: Severity, seed: u64) -> Result<PipelineSpec, SynthError> {
    let (Some(b), Some(n), Some(q)) = (severity.blur_range(), severity.noise_range(), severity.quality_range()) else {
        return Err(domain("the blur/noise/JPEG protocol needs mild, moderate or severe"));
    };
    let mut rng = rng_from_seed(named_seed(seed, "params"));
    let sigma = uniform(&mut rng, b);
    let noise = uniform(&mut rng, n);
    let quality = rng.random_range(q.0..=q.1);
    Ok(PipelineSpec::from_parts(seed, severity, Some(sigma), None, Some(noise), Some(quality), false))
}

/// Applies a freshly sampled blur → noise → JPEG pipeline.
pub fn synth_div2k_style(img: &Image, severity: Severity, rng: &mut Rng) -> Result<(Image, PipelineSpec), SynthError> {
    let spec = sample_div2k_pipeline(severity, rng.random())?;
    Ok((spec.apply(img)?, spec))
}

/// Parameter ranges of the mixed (noise / JPEG / motion blur) protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedRanges {
    pub noise: (f64, f64),
    pub quality: (u32, u32),
    pub traj_len: (f64, f64),
}

impl Default for MixedRanges {
    fn default() -> Self {
        MixedRanges {
            noise: (10.0, 30.0),
            quality: (15, 35),
            traj_len: (10.0, 80.0),
        }
    }
}

impl MixedRanges {
    /// Weak distortions used to train the novel-strength experiment.
    pub fn novel_train() -> Self {
        MixedRanges {
            noise: (0.0, 20.0),
            quality: (60, 100),
            traj_len: (10.0, 40.0),
        }
    }

    /// Strong distortions, disjoint from [`MixedRanges::novel_train`] in
    /// noise and trajectory length.
    pub fn novel_test() -> Self {
        MixedRanges {
            noise: (20.0, 40.0),
            quality: (15, 60),
            traj_len: (40.0, 80.0),
        }
    }
}

/// Chooses a uniformly random nonempty subset of {noise, JPEG, motion blur}
/// and samples each parameter uniformly; stages run motion → noise → JPEG.
pub fn sample_mixed_pipeline(ranges: &MixedRanges, seed: u64) -> PipelineSpec {
    let mut rng = rng_from_seed(named_seed(seed, "params"));
    let mask: u32 = rng.random_range(1..=7);
    let motion = (mask & 1 != 0).then(|| uniform(&mut rng, ranges.traj_len));
    let noise = (mask & 2 != 0).then(|| uniform(&mut rng, ranges.noise));
    let quality = (mask & 4 != 0).then(|| rng.random_range(ranges.quality.0..=ranges.quality.1));
    PipelineSpec::from_parts(seed, Severity::Unclassed, None, motion, noise, quality, false)
}

pub fn synth_mixed(img: &Image, ranges: &MixedRanges, rng: &mut Rng) -> Result<(Image, PipelineSpec), SynthError> {
    let spec = sample_mixed_pipeline(ranges, rng.random());
    Ok((spec.apply(img)?, spec))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub image: Image,
}

/// Draws `n` uniformly placed `size×size` crops.
pub fn crop_patches(img: &Image, size: usize, n: usize, rng: &mut Rng) -> Result<Vec<Crop>, SynthError> {
    if size == 0 || img.width() < size || img.height() < size {
        return Err(domain(format!(
            "a {}×{} image cannot hold {size}×{size} crops",
            img.width(),
            img.height()
        )));
    }
    (0..n)
        .map(|_| {
            let x = rng.random_range(0..=img.width() - size);
            let y = rng.random_range(0..=img.height() - size);
            Ok(Crop {
                x,
                y,
                image: img.crop(x, y, size, size)?,
            })
        })
        .collect()
}

/// A clean/distorted pair with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample {
    pub clean: Image,
    pub distorted: Image,
    pub pipeline: PipelineSpec,
    pub source_image_id: String,
    pub crop_origin: (usize, usize),
}
