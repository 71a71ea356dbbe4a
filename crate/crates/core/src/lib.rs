//! Operation-wise attention network (OWAN) for restoring images degraded by
//! combined distortions.
//!
//! The crate bundles everything needed to reproduce the method end to end:
//!
//! - [`tensor`]: a small define-by-run autodiff engine (`f32` and `f64`).
//! - [`model`]: the operation-wise attention layers, group attention, the
//!   feature extraction block and the two ablation variants.
//! - [`synth`]: deterministic synthesis of blur / noise / JPEG / motion-blur
//!   datasets.
//! - [`metrics`]: PSNR and SSIM.
//! - [`train`]: L1 training with Adam and cosine annealing, checkpoints and
//!   tiled restoration.
//! - [`analysis`]: per-layer attention statistics and difference maps.
//! - [`cli`]: the `owan` command-line front end.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod analysis;
pub mod cli;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;
