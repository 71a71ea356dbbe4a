//! Attention-weight statistics: per-(layer, op) mean and variance for a set
//! of images, and the absolute difference of each tag's mean from the pooled
//! mean over all tags.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{AttentionRecord, Owan};
use crate::synth::{list_images, Image};
use crate::tensor::Real;
use crate::train::{image_to_input, restore_image, Checkpoint, Precision, RestoreOptions, TrainError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Empty(String),

    #[error("statistics disagree in shape: {0}")]
    Mismatch(String),

    #[error("invalid attention record: {0}")]
    Record(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Train(#[from] TrainError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Mean and population variance of the attention weights per (layer, op),
/// stored row-major as `layers × ops`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionStats {
    pub tag: String,
    pub layers: usize,
    pub ops: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Records contributing to each cell.
    pub counts: Vec<usize>,
    /// Distinct sample ids.
    pub samples: usize,
}

impl AttentionStats {
    pub fn mean_at(&self, layer: usize, op: usize) -> f64 {
        self.mean[(layer - 1) * self.ops + op - 1]
    }

    pub fn variance_at(&self, layer: usize, op: usize) -> f64 {
        self.variance[(layer - 1) * self.ops + op - 1]
    }
}

/// `|mean_tag − mean_all|` per (layer, op), row-major `layers × ops`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMap {
    pub tag: String,
    pub layers: usize,
    pub ops: usize,
    pub absdiff: Vec<f64>,
}

/// Runs evaluation passes over the distorted images of `dataset_dir` (its
/// `distorted/` subdirectory when present) and returns one record per
/// (image, layer, op). Sample ids are file stems.
pub fn collect_attention(checkpoint: &Checkpoint, dataset_dir: &Path, tag: &str) -> Result<Vec<AttentionRecord>, AnalysisError> {
    let dir = if dataset_dir.join("distorted").is_dir() {
        dataset_dir.join("distorted")
    } else {
        dataset_dir.to_path_buf()
    };
    let records = match checkpoint.config.precision {
        Precision::F32 => collect_dir(&checkpoint.model::<f32>()?, &dir)?,
        Precision::F64 => collect_dir(&checkpoint.model::<f64>()?, &dir)?,
    };
    if records.is_empty() {
        return Err(AnalysisError::Empty(format!(
            "no attention records for tag `{tag}` from {} (empty dataset or attention_mode=none)",
            dir.display()
        )));
    }
    Ok(records)
}

fn collect_dir<T: Real>(model: &Owan<T>, dir: &Path) -> Result<Vec<AttentionRecord>, AnalysisError> {
    let mut out = Vec::new();
    let opts = RestoreOptions::default();
    for path in list_images(dir).map_err(TrainError::from)? {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let image = match Image::load(&path) {
            Ok(img) => image_to_input(&img, model.config.in_channels),
            Err(e) => {
                log::warn!("skipping unreadable image {e}");
                continue;
            }
        };
        out.extend(restore_image(model, &image, &stem, &opts)?.1);
    }
    Ok(out)
}

/// Per-(layer, op) statistics over `records`. The matrix size is taken from
/// the largest layer and op indices present. Records are sorted before
/// accumulation, so the result does not depend on their order.
pub fn stats(tag: &str, records: &[AttentionRecord]) -> Result<AttentionStats, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::Empty(format!("no records for tag `{tag}`")));
    }
    if let Some(r) = records.iter().find(|r| r.layer == 0 || r.op == 0 || !r.weight.is_finite()) {
        return Err(AnalysisError::Record(format!(
            "{} layer {} op {} weight {}",
            r.sample_id, r.layer, r.op, r.weight
        )));
    }
    let layers = records.iter().map(|r| r.layer).max().unwrap_or(0);
    let ops = records.iter().map(|r| r.op).max().unwrap_or(0);
    let mut sorted: Vec<&AttentionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.layer, a.op, &a.sample_id)
            .cmp(&(b.layer, b.op, &b.sample_id))
            .then(a.weight.total_cmp(&b.weight))
    });
    let cells = layers * ops;
    let mut sum = vec![0.0; cells];
    let mut counts = vec![0usize; cells];
    for r in &sorted {
        let i = (r.layer - 1) * ops + r.op - 1;
        sum[i] += r.weight;
        counts[i] += 1;
    }
    let mean: Vec<f64> = sum
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    let mut sq = vec![0.0; cells];
    for r in &sorted {
        let i = (r.layer - 1) * ops + r.op - 1;
        let d = r.weight - mean[i];
        sq[i] += d * d;
    }
    let variance = sq
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    let samples = records.iter().map(|r| r.sample_id.as_str()).collect::<BTreeSet<_>>().len();
    Ok(AttentionStats {
        tag: tag.to_string(),
        layers,
        ops,
        mean,
        variance,
        counts,
        samples,
    })
}

/// Pooled mean over all tags: every record weighs the same, so a tag's
/// influence is proportional to its record count.
pub fn pooled_mean(per_tag: &[AttentionStats]) -> Result<Vec<f64>, AnalysisError> {
    let first = per_tag
        .first()
        .ok_or_else(|| AnalysisError::Empty("no statistics to pool".into()))?;
    for s in per_tag {
        if (s.layers, s.ops) != (first.layers, first.ops) {
            return Err(AnalysisError::Mismatch(format!(
                "`{}` is {}×{}, `{}` is {}×{}",
                first.tag, first.layers, first.ops, s.tag, s.layers, s.ops
            )));
        }
    }
    let cells = first.layers * first.ops;
    let mut out = vec![0.0; cells];
    for (i, cell) in out.iter_mut().enumerate() {
        let n: usize = per_tag.iter().map(|s| s.counts[i]).sum();
        if n > 0 {
            let weighted: f64 = per_tag.iter().map(|s| s.mean[i] * s.counts[i] as f64).sum();
            *cell = weighted / n as f64;
        }
    }
    Ok(out)
}

/// One difference map per tag, against the pooled mean of all tags.
pub fn diff_maps(per_tag: &[AttentionStats]) -> Result<Vec<DiffMap>, AnalysisError> {
    let all = pooled_mean(per_tag)?;
    Ok(per_tag
        .iter()
        .map(|s| DiffMap {
            tag: s.tag.clone(),
            layers: s.layers,
            ops: s.ops,
            absdiff: s.mean.iter().zip(&all).map(|(a, b)| (a - b).abs()).collect(),
        })
        .collect())
}

fn write_text(path: &Path, text: &str) -> Result<(), AnalysisError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn sorted_by_tag<T>(items: &[T], tag: impl Fn(&T) -> &str) -> Vec<&T> {
    let mut v: Vec<&T> = items.iter().collect();
    v.sort_by(|a, b| tag(a).cmp(tag(b)));
    v
}

/// CSV `tag,layer,op,mean,variance`, rows ordered by (tag, layer, op).
pub fn stats_csv(stats: &[AttentionStats]) -> String {
    let mut out = String::from("tag,layer,op,mean,variance\n");
    for s in sorted_by_tag(stats, |s| &s.tag) {
        for l in 0..s.layers {
            for o in 0..s.ops {
                let i = l * s.ops + o;
                let _ = writeln!(out, "{},{},{},{},{}", s.tag, l + 1, o + 1, s.mean[i], s.variance[i]);
            }
        }
    }
    out
}

/// CSV `tag,layer,op,absdiff`, rows ordered by (tag, layer, op).
pub fn diff_csv(diffs: &[DiffMap]) -> String {
    let mut out = String::from("tag,layer,op,absdiff\n");
    for d in sorted_by_tag(diffs, |d| &d.tag) {
        for l in 0..d.layers {
            for o in 0..d.ops {
                let _ = writeln!(out, "{},{},{},{}", d.tag, l + 1, o + 1, d.absdiff[l * d.ops + o]);
            }
        }
    }
    out
}

pub fn export_stats_csv(stats: &[AttentionStats], path: &Path) -> Result<(), AnalysisError> {
    write_text(path, &stats_csv(stats))
}

pub fn export_diff_csv(diffs: &[DiffMap], path: &Path) -> Result<(), AnalysisError> {
    write_text(path, &diff_csv(diffs))
}

/// CSV `sample_id,layer,op,weight`, one row per record in the given order.
pub fn write_attention_csv(path: &Path, records: &[AttentionRecord]) -> Result<(), AnalysisError> {
    let mut out = String::from("sample_id,layer,op,weight\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.sample_id, r.layer, r.op, r.weight);
    }
    write_text(path, &out)
}

pub fn read_attention_csv(path: &Path) -> Result<Vec<AttentionRecord>, AnalysisError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let parse_err = || AnalysisError::Record(format!("{}: malformed row {:?}", path.display(), row));
        out.push(AttentionRecord {
            sample_id: field(0).to_string(),
            layer: field(1).parse().map_err(|_| parse_err())?,
            op: field(2).parse().map_err(|_| parse_err())?,
            weight: field(3).parse().map_err(|_| parse_err())?,
        });
    }
    Ok(out)
}
