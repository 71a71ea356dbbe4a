//! Deterministic synthesis of distorted training and test data.
//!
//! Distortions operate on [`Image`]s with values in `[0, 1]`. Every stage is
//! a pure function of its input and a [`DistortionSpec`] (parameters plus a
//! seed), so a [`PipelineSpec`] recorded in a manifest replays bit-exactly.

mod dataset;
mod filters;
mod image;
mod jpeg;
mod pipeline;
pub mod scene;
mod trajectory;

use std::path::PathBuf;

use thiserror::Error;

pub(crate) use dataset::list_images;
pub use dataset::{build_dataset, read_manifest, replay_sample, DatasetOptions, Manifest, ManifestRow, Protocol};
pub use filters::{apply_gaussian_blur, apply_gaussian_noise, apply_motion_blur, convolve_reflect, gaussian_kernel, Kernel};
pub use image::Image;
pub use jpeg::{apply_jpeg, block_dct, block_idct, jpeg_quant_tables, BASE_CHROMA, BASE_LUMA};
pub use pipeline::{
    crop_patches, sample_div2k_pipeline, sample_mixed_pipeline, synth_div2k_style, synth_mixed, Crop,
    DistortionKind, DistortionSpec, MixedRanges, PatchSample, PipelineSpec, Severity,
};
pub use trajectory::{arc_length, generate_trajectory, trajectory_to_kernel, TrajectoryParams};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> SynthError {
    SynthError::Domain(msg.into())
}
