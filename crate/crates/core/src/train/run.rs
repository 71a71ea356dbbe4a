use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::{Precision, TrainConfig};
use super::data::PairSet;
use super::optim::{adam_step_filtered, cosine_lr, AdamState, ScheduleConfig};
use super::{io_err, TrainError};
use crate::metrics::psnr;
use crate::model::{names, AttentionMode, Owan};
use crate::rng::{named_seed, rng_from_seed, split_seed, Rng, RngState};
use crate::synth::Image;
use crate::tensor::{ParamStore, Real, Tape};

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    /// 0-based optimizer step.
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Rows produced by this call (a resumed run only reports the steps it
    /// ran).
    pub losses: Vec<LossRow>,
}

/// Trains on `config.train_dir`, writing `loss.csv`, periodic
/// `checkpoint_{step:08}.owan` files and `final.owan` into `config.out_dir`.
pub fn train(config: &TrainConfig, resume: Option<Checkpoint>) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let data = PairSet::load(&config.train_dir, config.model.in_channels)?;
    train_with(config, &data, resume, Some(&config.out_dir))
}

/// Training on in-memory pairs. Nothing is written when `out_dir` is `None`.
pub fn train_with(
    config: &TrainConfig,
    data: &PairSet,
    resume: Option<Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if data.sample_shape().0 != config.model.in_channels {
        return Err(TrainError::Data(format!(
            "samples have {} channels, model expects {}",
            data.sample_shape().0,
            config.model.in_channels
        )));
    }
    if let Some(ckpt) = &resume {
        check_resume_compatible(config, &ckpt.config)?;
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match config.precision {
        Precision::F32 => run::<f32>(config, data, resume, out_dir),
        Precision::F64 => run::<f64>(config, data, resume, out_dir),
    }
}

/// Resuming requires every setting that influences the trajectory to match;
/// only output locations and checkpoint cadence may change.
fn check_resume_compatible(config: &TrainConfig, saved: &TrainConfig) -> Result<(), TrainError> {
    let mut a = config.clone();
    let mut b = saved.clone();
    for c in [&mut a, &mut b] {
        c.out_dir = PathBuf::new();
        c.train_dir = PathBuf::new();
        c.checkpoint_every = 0;
    }
    if a != b {
        let diff: Vec<String> = a
            .to_pairs()
            .into_iter()
            .zip(b.to_pairs())
            .filter(|(x, y)| x != y)
            .map(|((k, v), (_, w))| format!("{k}: {v} (checkpoint: {w})"))
            .collect();
        return Err(TrainError::Config(format!(
            "configuration differs from the checkpoint's: {}",
            diff.join(", ")
        )));
    }
    Ok(())
}

/// Sample order for one epoch, a function of `(seed, epoch)` only.
fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(split_seed(named_seed(seed, "shuffle"), epoch));
    order.shuffle(&mut rng);
    order
}

/// Checkpoints leave out the data and output locations so identical runs
/// written to different directories produce identical files.
fn snapshot<T: Real>(config: &TrainConfig, model: &Owan<T>, adam: &AdamState<T>, rng: &Rng, step: u64) -> Checkpoint {
    let defaults = TrainConfig::default();
    Checkpoint {
        config: TrainConfig {
            train_dir: defaults.train_dir,
            out_dir: defaults.out_dir,
            ..config.clone()
        },
        params: strip_grads(&model.params),
        adam: adam.cast(),
        rng: RngState::capture(rng),
        step,
    }
}

fn strip_grads<T: Real>(params: &ParamStore<T>) -> ParamStore<f32> {
    let mut out = params.cast::<f32>();
    out.zero_grad();
    out
}

fn run<T: Real>(
    config: &TrainConfig,
    data: &PairSet,
    resume: Option<Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    let n = data.len();
    let batches = n.div_ceil(config.batch_size) as u64;
    let total = config.epochs as u64 * batches;
    let (mut model, mut adam, mut rng, start) = match resume {
        Some(ckpt) => {
            let model = ckpt.model::<T>()?;
            let adam = ckpt.adam.cast::<T>();
            (model, adam, ckpt.rng.restore(), ckpt.step)
        }
        None => {
            let model = Owan::<T>::build(&config.model, config.seed)?;
            let adam = AdamState::new(&model.params);
            (model, adam, rng_from_seed(named_seed(config.seed, "train")), 0)
        }
    };
    if start > total {
        return Err(TrainError::Config(format!(
            "checkpoint is at step {start}, beyond the run's {total} steps"
        )));
    }
    let schedule = ScheduleConfig {
        eta_max: config.eta_max,
        eta_min: config.eta_min,
        total_steps: total.max(1),
    };
    let mut log = LossLog::open(out_dir, start)?;
    let mut losses = Vec::new();
    let mut order = Vec::new();
    let mut order_epoch = u64::MAX;
    let mut epoch_sum = 0.0;
    info!(
        "training {} parameters on {n} samples: {} epochs × {batches} batches ({} precision)",
        model.count_params(),
        config.epochs,
        config.precision
    );

    for step in start..total {
        let epoch = step / batches;
        if epoch != order_epoch {
            order = epoch_order(n, config.seed, epoch);
            order_epoch = epoch;
            epoch_sum = 0.0;
        }
        let b = (step % batches) as usize;
        let indices = &order[b * config.batch_size..((b + 1) * config.batch_size).min(n)];
        let flips: Vec<bool> = if config.augment {
            indices.iter().map(|_| rng.random::<bool>()).collect()
        } else {
            Vec::new()
        };
        let (x, y) = data.batch::<T>(indices, &flips);

        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let yv = tape.leaf(&y);
        let pass = model.network_forward(&mut tape, xv, true)?;
        let loss_var = tape.l1_loss(pass.output, yv)?;
        let loss = tape.value(loss_var)[0].as_f64();
        if !loss.is_finite() {
            let ckpt = snapshot(config, &model, &adam, &rng, step);
            let path = match out_dir {
                Some(dir) => {
                    let path = dir.join(format!("diverged_{step:08}.owan"));
                    save_checkpoint(&path, &ckpt)?;
                    log.flush()?;
                    path
                }
                None => PathBuf::new(),
            };
            return Err(TrainError::Diverged { step, checkpoint: path });
        }
        model.params.zero_grad();
        tape.backward_into(loss_var, &mut model.params)?;
        drop(tape);

        let lr = cosine_lr(step, &schedule);
        let fixed = config.model.attention_mode == AttentionMode::Fixed;
        // Fixed-attention baseline alternates: even steps train the kernels,
        // odd steps train the logits.
        let logits_turn = step % 2 == 1;
        adam_step_filtered(&mut model.params, &mut adam, lr, |name| {
            !fixed || ((name == names::FIXED_LOGITS) == logits_turn)
        })?;

        let row = LossRow { step, lr, loss };
        log.push(&row);
        losses.push(row);
        epoch_sum += loss;
        let done = step + 1;
        if done % batches == 0 {
            info!(
                "epoch {}/{}: mean loss {:.6}, lr {:.3e}",
                epoch + 1,
                config.epochs,
                epoch_sum / batches as f64,
                lr
            );
        }
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && done % config.checkpoint_every as u64 == 0 && done < total {
                save_checkpoint(
                    &dir.join(format!("checkpoint_{done:08}.owan")),
                    &snapshot(config, &model, &adam, &rng, done),
                )?;
                log.flush()?;
            }
        }
    }

    let checkpoint = snapshot(config, &model, &adam, &rng, total);
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("final.owan"), &checkpoint)?;
        log.flush()?;
    }
    Ok(TrainOutcome { checkpoint, losses })
}

/// `loss.csv` writer. On resume, rows for steps before the checkpoint are
/// kept verbatim so the file matches an uninterrupted run.
struct LossLog {
    path: Option<PathBuf>,
    text: String,
}

impl LossLog {
    const HEADER: &'static str = "step,lr,loss\n";

    fn open(out_dir: Option<&Path>, start: u64) -> Result<LossLog, TrainError> {
        let Some(dir) = out_dir else {
            return Ok(LossLog {
                path: None,
                text: String::new(),
            });
        };
        let path = dir.join("loss.csv");
        let mut text = String::from(Self::HEADER);
        if start > 0 {
            match fs::read_to_string(&path) {
                Ok(old) => {
                    let kept = old
                        .lines()
                        .skip(1)
                        .filter(|line| {
                            line.split(',')
                                .next()
                                .and_then(|s| s.parse::<u64>().ok())
                                .is_some_and(|s| s < start)
                        })
                        .count();
                    for line in old.lines().skip(1).take(kept) {
                        text.push_str(line);
                        text.push('\n');
                    }
                    if kept as u64 != start {
                        warn!("loss.csv has {kept} rows before step {start}; earlier rows are missing");
                    }
                }
                Err(_) => warn!("no loss.csv to extend in {}; log starts at step {start}", dir.display()),
            }
        }
        Ok(LossLog { path: Some(path), text })
    }

    fn push(&mut self, row: &LossRow) {
        if self.path.is_some() {
            let _ = writeln!(self.text, "{},{},{}", row.step, row.lr, row.loss);
        }
    }

    fn flush(&self) -> Result<(), TrainError> {
        match &self.path {
            Some(path) => fs::write(path, &self.text).map_err(io_err(path)),
            None => Ok(()),
        }
    }
}

/// Quality of a model on a pair set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    /// Mean absolute error per pixel and channel, restored vs clean.
    pub mean_l1: f64,
    /// Same for the unrestored inputs.
    pub input_l1: f64,
    pub mean_psnr: f64,
    pub input_psnr: f64,
}

/// Runs the network over `data` in batches of `batch_size` and compares the
/// clamped outputs with the clean targets.
pub fn evaluate_model<T: Real>(model: &Owan<T>, data: &PairSet, batch_size: usize) -> Result<EvalSummary, TrainError> {
    let (c, h, w) = data.sample_shape();
    let plane = c * h * w;
    let mut sums = [0.0f64; 4];
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, _) = data.batch::<T>(chunk, &[]);
        let (out, _) = model.restore(&x, &[])?;
        for (k, &i) in chunk.iter().enumerate() {
            let planar: Vec<f64> = out.data()[k * plane..(k + 1) * plane].iter().map(|v| v.as_f64()).collect();
            let restored = Image::from_planar(w, h, c, &planar)?;
            let clean = &data.clean[i];
            let input = &data.distorted[i];
            sums[0] += mae(&restored, clean);
            sums[1] += mae(input, clean);
            sums[2] += psnr(&restored, clean).map_err(|e| TrainError::Data(e.to_string()))?;
            sums[3] += psnr(input, clean).map_err(|e| TrainError::Data(e.to_string()))?;
        }
    }
    let n = data.len() as f64;
    Ok(EvalSummary {
        mean_l1: sums[0] / n,
        input_l1: sums[1] / n,
        mean_psnr: sums[2] / n,
        input_psnr: sums[3] / n,
    })
}

fn mae(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64
}
