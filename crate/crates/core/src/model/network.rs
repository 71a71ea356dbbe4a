use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::config::{AttentionMode, OpKind, OwanConfig};
use super::ModelError;
use crate::rng::{named_seed, rng_from_seed};
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

/// Parameter names. Layer and block indices are zero-based and zero-padded
/// so lexicographic order follows network order.
pub mod names {
    pub const STEM_WEIGHT: &str = "stem.weight";
    pub const STEM_BIAS: &str = "stem.bias";
    pub const OUTPUT_WEIGHT: &str = "output.weight";
    pub const OUTPUT_BIAS: &str = "output.bias";
    pub const FIXED_LOGITS: &str = "fixed_logits";

    pub fn res(block: usize, conv: usize, part: &str) -> String {
        format!("res.{block:02}.conv{conv}.{part}")
    }

    pub fn op(layer: usize, op: usize, part: &str) -> String {
        format!("layer.{layer:03}.op.{op}.{part}")
    }

    pub fn merge(layer: usize, part: &str) -> String {
        format!("layer.{layer:03}.merge.{part}")
    }

    pub fn attn(layer: usize, matrix: &str) -> String {
        format!("attn.{layer:03}.{matrix}")
    }
}

/// A configured network together with all of its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Owan<T> {
    pub config: OwanConfig,
    pub params: ParamStore<T>,
}

enum Init {
    HeNormal { fan_in: usize },
    GlorotUniform { fan_in: usize, fan_out: usize },
    Zeros,
}

fn init_tensor<T: Real>(shape: &[usize], init: Init, seed: u64, name: &str) -> Tensor<T> {
    let mut rng = rng_from_seed(named_seed(seed, name));
    match init {
        Init::HeNormal { fan_in } => {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            Tensor::from_fn(shape, |_| T::lit(normal.sample(&mut rng)))
        }
        Init::GlorotUniform { fan_in, fan_out } => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Tensor::from_fn(shape, |_| T::lit(rng.random_range(-limit..=limit)))
        }
        Init::Zeros => Tensor::zeros(shape),
    }
}

/// Creates a network with deterministic initial weights.
///
/// Each tensor draws from its own stream derived from `seed` and its name,
/// so networks that differ only in attention mode share every common
/// weight.
pub fn build_network<T: Real>(config: &OwanConfig, seed: u64) -> Result<Owan<T>, ModelError> {
    config.validate()?;
    let c = config.channels;
    let cin = config.in_channels;
    let n_ops = config.num_ops();
    let mut store = ParamStore::new();
    let mut add = |name: String, shape: &[usize], init: Init| -> Result<(), ModelError> {
        let t = init_tensor::<T>(shape, init, seed, &name);
        store.insert(name, t)?;
        Ok(())
    };
    let conv = |cout: usize, cin: usize, f: usize| ([cout, cin, f, f], Init::HeNormal { fan_in: cin * f * f });

    let (s, i) = conv(c, cin, 3);
    add(names::STEM_WEIGHT.into(), &s, i)?;
    add(names::STEM_BIAS.into(), &[c], Init::Zeros)?;
    for b in 0..config.res_blocks {
        for k in 1..=2 {
            let (s, i) = conv(c, c, 3);
            add(names::res(b, k, "weight"), &s, i)?;
            add(names::res(b, k, "bias"), &[c], Init::Zeros)?;
        }
    }
    for l in 0..config.layers {
        for (o, op) in config.ops.iter().enumerate() {
            if !op.has_params() {
                continue;
            }
            if op.has_depthwise() {
                let f = op.filter_size;
                add(names::op(l, o, "depthwise"), &[c, f, f], Init::HeNormal { fan_in: f * f })?;
            }
            let (s, i) = conv(c, c, 1);
            add(names::op(l, o, "pointwise"), &s, i)?;
            add(names::op(l, o, "bias"), &[c], Init::Zeros)?;
        }
        let (s, i) = conv(c, c * n_ops, 1);
        add(names::merge(l, "weight"), &s, i)?;
        add(names::merge(l, "bias"), &[c], Init::Zeros)?;
    }
    match config.attention_mode {
        AttentionMode::Learned => {
            let t = config.attention_hidden;
            for l in 0..config.layers {
                add(
                    names::attn(l, "w1"),
                    &[t, c],
                    Init::GlorotUniform { fan_in: c, fan_out: t },
                )?;
                add(
                    names::attn(l, "w2"),
                    &[n_ops, t],
                    Init::GlorotUniform { fan_in: t, fan_out: n_ops },
                )?;
            }
        }
        AttentionMode::Fixed if config.layers > 0 => {
            add(names::FIXED_LOGITS.into(), &[config.layers, n_ops], Init::Zeros)?;
        }
        _ => {}
    }
    let (s, i) = conv(cin, c, 3);
    add(names::OUTPUT_WEIGHT.into(), &s, i)?;
    add(names::OUTPUT_BIAS.into(), &[cin], Init::Zeros)?;
    Ok(Owan {
        config: config.clone(),
        params: store,
    })
}

/// One attention weight of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub sample_id: String,
    /// 1-based layer index.
    pub layer: usize,
    /// 1-based operation index.
    pub op: usize,
    pub weight: f64,
}

/// Output of one operation-wise attention layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    /// Weighted, channel-concatenated branch outputs (`N×C|O|×H×W`).
    pub concat: Var,
    /// Layer output after the merge convolution and skip connection.
    pub output: Var,
}

/// Handles to the interesting intermediates of a full forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub x0: Var,
    pub layers: Vec<Var>,
    /// Per-layer weight matrix (`N×|O|`, or `1×|O|` in fixed mode); `None`
    /// when attention is disabled.
    pub attention: Vec<Option<Var>>,
    pub output: Var,
}

impl ForwardPass {
    /// Flattens attention weights into records, one per (sample, layer, op).
    /// Nothing is emitted in `AttentionMode::None`.
    pub fn attention_records<T: Real>(&self, tape: &Tape<T>, sample_ids: &[String]) -> Vec<AttentionRecord> {
        let mut out = Vec::new();
        for (s, id) in sample_ids.iter().enumerate() {
            for (l, weights) in self.attention.iter().enumerate() {
                let Some(w) = weights else { continue };
                let shape = tape.shape(*w);
                let m = shape[1];
                let row = if shape[0] == 1 { 0 } else { s };
                for (o, &v) in tape.value(*w)[row * m..(row + 1) * m].iter().enumerate() {
                    out.push(AttentionRecord {
                        sample_id: id.clone(),
                        layer: l + 1,
                        op: o + 1,
                        weight: v.as_f64(),
                    });
                }
            }
        }
        out
    }
}

impl<T: Real> Owan<T> {
    pub fn build(config: &OwanConfig, seed: u64) -> Result<Self, ModelError> {
        build_network(config, seed)
    }

    /// Total number of trainable scalars.
    pub fn count_params(&self) -> usize {
        self.params.numel()
    }

    fn p(&self, tape: &mut Tape<T>, name: &str, trainable: bool) -> Result<Var, ModelError> {
        if trainable {
            return Ok(tape.param(&self.params, name)?);
        }
        let t = self
            .params
            .get(name)
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))?;
        Ok(tape.constant(t.shape(), t.data().to_vec())?)
    }

    fn conv(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        weight: &str,
        bias: &str,
        trainable: bool,
    ) -> Result<Var, ModelError> {
        let w = self.p(tape, weight, trainable)?;
        let b = self.p(tape, bias, trainable)?;
        Ok(tape.conv2d(x, w, Some(b), 1)?)
    }

    /// Stem convolution + ReLU followed by the residual blocks.
    pub fn feature_extract(&self, tape: &mut Tape<T>, image: Var, trainable: bool) -> Result<Var, ModelError> {
        let got = tape.shape(image).get(1).copied();
        if got != Some(self.config.in_channels) {
            return Err(ModelError::Shape(format!(
                "expected {} input channels, got shape {:?}",
                self.config.in_channels,
                tape.shape(image)
            )));
        }
        let stem = self.conv(tape, image, names::STEM_WEIGHT, names::STEM_BIAS, trainable)?;
        let mut h = tape.relu(stem);
        for b in 0..self.config.res_blocks {
            let t = self.conv(tape, h, &names::res(b, 1, "weight"), &names::res(b, 1, "bias"), trainable)?;
            let t = tape.relu(t);
            let t = self.conv(tape, t, &names::res(b, 2, "weight"), &names::res(b, 2, "bias"), trainable)?;
            h = tape.add(t, h)?;
        }
        Ok(h)
    }

    /// Attention weights for the `k` layers of `group`, all computed from the
    /// group-head input `x_head`.
    ///
    /// Learned mode yields `N×|O|` matrices `softmax(W2 relu(W1 z))`; fixed
    /// mode yields `1×|O|` rows `softmax(fixed_logits[l])`; `None` mode yields
    /// no weights.
    pub fn compute_group_attention(
        &self,
        tape: &mut Tape<T>,
        x_head: Var,
        group: usize,
        trainable: bool,
    ) -> Result<Vec<Option<Var>>, ModelError> {
        let groups = self.config.groups();
        if group >= groups {
            return Err(ModelError::GroupIndex { group, groups });
        }
        let k = self.config.group_size;
        let layers = group * k..(group + 1) * k;
        match self.config.attention_mode {
            AttentionMode::None => Ok(vec![None; k]),
            AttentionMode::Fixed => {
                let logits = self.p(tape, names::FIXED_LOGITS, trainable)?;
                layers
                    .map(|l| {
                        let row = tape.select_row(logits, l)?;
                        Ok(Some(tape.softmax(row)))
                    })
                    .collect()
            }
            AttentionMode::Learned => {
                let z = tape.global_channel_mean(x_head)?;
                layers
                    .map(|l| {
                        let w1 = self.p(tape, &names::attn(l, "w1"), trainable)?;
                        let w2 = self.p(tape, &names::attn(l, "w2"), trainable)?;
                        let hidden = tape.dense_nobias(w1, z)?;
                        let hidden = tape.relu(hidden);
                        let logits = tape.dense_nobias(w2, hidden)?;
                        Ok(Some(tape.softmax(logits)))
                    })
                    .collect()
            }
        }
    }

    /// The parallel branches of layer `layer` applied to `x`.
    pub fn op_layer_forward(
        &self,
        tape: &mut Tape<T>,
        layer: usize,
        x: Var,
        trainable: bool,
    ) -> Result<Vec<Var>, ModelError> {
        let mut outs = Vec::with_capacity(self.config.num_ops());
        for (o, op) in self.config.ops.iter().enumerate() {
            let h = match op.kind {
                OpKind::AvgPool => tape.avg_pool_same(x, op.filter_size)?,
                OpKind::SeparableConv | OpKind::DilatedSeparableConv => {
                    let mut h = x;
                    if op.has_depthwise() {
                        let dw = self.p(tape, &names::op(layer, o, "depthwise"), trainable)?;
                        h = tape.depthwise_conv2d(h, dw, op.dilation)?;
                    }
                    let h = self.conv(
                        tape,
                        h,
                        &names::op(layer, o, "pointwise"),
                        &names::op(layer, o, "bias"),
                        trainable,
                    )?;
                    tape.relu(h)
                }
            };
            outs.push(h);
        }
        Ok(outs)
    }

    /// One operation-wise attention layer: weight each branch, concatenate,
    /// merge with a 1×1 convolution and add the skip connection.
    pub fn owal_forward(
        &self,
        tape: &mut Tape<T>,
        layer: usize,
        weights: Option<Var>,
        x_prev: Var,
        trainable: bool,
    ) -> Result<LayerOutput, ModelError> {
        let branches = self.op_layer_forward(tape, layer, x_prev, trainable)?;
        let scaled = match weights {
            None => branches,
            Some(w) => branches
                .into_iter()
                .enumerate()
                .map(|(o, h)| {
                    let s = tape.select_column(w, o)?;
                    tape.scale_channels(h, s)
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let concat = tape.concat_channels(&scaled)?;
        let merged = self.conv(
            tape,
            concat,
            &names::merge(layer, "weight"),
            &names::merge(layer, "bias"),
            trainable,
        )?;
        let output = tape.add(merged, x_prev)?;
        Ok(LayerOutput { concat, output })
    }

    /// Full network: feature extraction, the attention-layer stack (group
    /// attention at each group head) and the 3×3 output convolution. The
    /// output is not clamped.
    pub fn network_forward(&self, tape: &mut Tape<T>, image: Var, trainable: bool) -> Result<ForwardPass, ModelError> {
        let x0 = self.feature_extract(tape, image, trainable)?;
        let mut h = x0;
        let mut layers = Vec::with_capacity(self.config.layers);
        let mut attention = Vec::with_capacity(self.config.layers);
        for g in 0..self.config.groups() {
            let weights = self.compute_group_attention(tape, h, g, trainable)?;
            for (j, w) in weights.into_iter().enumerate() {
                let l = g * self.config.group_size + j;
                h = self.owal_forward(tape, l, w, h, trainable)?.output;
                layers.push(h);
                attention.push(w);
            }
        }
        let output = self.conv(tape, h, names::OUTPUT_WEIGHT, names::OUTPUT_BIAS, trainable)?;
        Ok(ForwardPass {
            x0,
            layers,
            attention,
            output,
        })
    }

    /// Evaluation pass on a batch: returns the output clamped to [0, 1] and
    /// the attention records for `sample_ids` (one id per batch element).
    pub fn restore(&self, image: &Tensor<T>, sample_ids: &[String]) -> Result<(Tensor<T>, Vec<AttentionRecord>), ModelError> {
        let mut tape = Tape::new();
        let x = tape.constant(image.shape(), image.data().to_vec())?;
        let pass = self.network_forward(&mut tape, x, false)?;
        let mut out = tape.to_tensor(pass.output);
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = v.max(T::zero()).min(T::one()));
        let records = pass.attention_records(&tape, sample_ids);
        Ok((out, records))
    }

    pub fn cast<U: Real>(&self) -> Owan<U> {
        Owan {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}
