//! Define-by-run reverse-mode tape.
//!
//! Every operation appends one node holding its output value. Nodes are
//! stored in creation order, which is a topological order, and `backward`
//! walks them once in reverse.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::error::{shape_err, TensorError};
use super::kernels::{self, ConvGeom, DepthwiseGeom};
use super::params::ParamStore;
use super::real::{gemm, lane_dot, lane_sum, MatRef, Real};
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// User-defined differentiable operation.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &str;

    /// Returns one gradient buffer per input, each the length of that input.
    fn backward(&self, inputs: &[&[T]], output: &[T], grad_output: &[T]) -> Vec<Vec<T>>;
}

enum Op<T: Real> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Depthwise {
        input: Var,
        weight: Var,
        geom: DepthwiseGeom,
    },
    AvgPool {
        input: Var,
        window: usize,
    },
    Relu(Var),
    ChannelMean(Var),
    DenseNoBias {
        weight: Var,
        input: Var,
    },
    Softmax(Var),
    ScaleChannels {
        map: Var,
        scale: Var,
    },
    Concat(Vec<Var>),
    Add(Var, Var),
    L1Loss {
        pred: Var,
        target: Var,
    },
    Sum(Var),
    SelectColumn {
        input: Var,
        col: usize,
    },
    SelectRow {
        input: Var,
        row: usize,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T: Real> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
    name: Option<String>,
}

/// Gradients of the leaves that required them, keyed by node.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    leaves: HashMap<usize, Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, var: Var) -> Option<&[T]> {
        self.leaves.get(&var.0).map(Vec::as_slice)
    }
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims4(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize), TensorError> {
    match *shape {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(shape_err(op, format!("expected N×C×H×W, got {shape:?}"))),
    }
}

/// Splits an `[.., M]` shape into (rows, M).
fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let m = *shape.last().unwrap_or(&1);
    let rows = if m == 0 { 0 } else { shape.iter().product::<usize>() / m };
    (rows, m)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        Tensor::new(&node.shape, node.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            name: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf copied from `tensor`; it is differentiated iff the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, tensor: &Tensor<T>) -> Var {
        self.push(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            Op::Leaf,
            tensor.requires_grad(),
        )
    }

    pub fn constant(&mut self, shape: &[usize], value: Vec<T>) -> Result<Var, TensorError> {
        let t = Tensor::new(shape, value)?;
        Ok(self.push(shape.to_vec(), t.into_data(), Op::Leaf, false))
    }

    /// Records the named parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var, TensorError> {
        let t = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true);
        self.nodes[v.0].name = Some(name.to_string());
        Ok(v)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        dilation: usize,
    ) -> Result<Var, TensorError> {
        const OP: &str = "conv2d";
        let (n, cin, h, w) = dims4(OP, self.shape(input))?;
        let (cout, wcin, f, f2) = match *self.shape(weight) {
            [a, b, c, d] => (a, b, c, d),
            ref s => return Err(shape_err(OP, format!("weight must be Cout×Cin×f×f, got {s:?}"))),
        };
        if f != f2 {
            return Err(shape_err(OP, format!("kernel must be square, got {f}×{f2}")));
        }
        if f % 2 == 0 {
            return Err(TensorError::EvenKernel { op: OP, size: f });
        }
        if dilation == 0 {
            return Err(TensorError::Invalid {
                op: OP,
                detail: "dilation must be positive".into(),
            });
        }
        if wcin != cin {
            return Err(shape_err(
                OP,
                format!("input has {cin} channels but weight expects {wcin}"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(shape_err(
                    OP,
                    format!("bias must have shape [{cout}], got {:?}", self.shape(b)),
                ));
            }
        }
        let geom = ConvGeom {
            n,
            cin,
            cout,
            h,
            w,
            f,
            dilation,
        };
        let mut out = vec![T::zero(); n * cout * h * w];
        kernels::conv2d_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            &geom,
            &mut out,
        );
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            vec![n, cout, h, w],
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            rg,
        ))
    }

    /// Per-channel convolution with a `C×f×f` kernel.
    pub fn depthwise_conv2d(
        &mut self,
        input: Var,
        weight: Var,
        dilation: usize,
    ) -> Result<Var, TensorError> {
        const OP: &str = "depthwise_conv2d";
        let (n, c, h, w) = dims4(OP, self.shape(input))?;
        let (wc, f, f2) = match *self.shape(weight) {
            [a, b, c] => (a, b, c),
            ref s => return Err(shape_err(OP, format!("weight must be C×f×f, got {s:?}"))),
        };
        if f != f2 {
            return Err(shape_err(OP, format!("kernel must be square, got {f}×{f2}")));
        }
        if f % 2 == 0 {
            return Err(TensorError::EvenKernel { op: OP, size: f });
        }
        if dilation == 0 {
            return Err(TensorError::Invalid {
                op: OP,
                detail: "dilation must be positive".into(),
            });
        }
        if wc != c {
            return Err(shape_err(
                OP,
                format!("input has {c} channels but weight has {wc}"),
            ));
        }
        let geom = DepthwiseGeom {
            n,
            c,
            h,
            w,
            f,
            dilation,
        };
        let mut out = vec![T::zero(); n * c * h * w];
        kernels::depthwise_forward(self.value(input), self.value(weight), &geom, &mut out);
        let rg = self.any_grad(&[input, weight]);
        Ok(self.push(vec![n, c, h, w], out, Op::Depthwise { input, weight, geom }, rg))
    }

    /// Stride-1 average pooling whose divisor counts only in-bounds taps.
    pub fn avg_pool_same(&mut self, input: Var, window: usize) -> Result<Var, TensorError> {
        const OP: &str = "avg_pool_same";
        let (n, c, h, w) = dims4(OP, self.shape(input))?;
        if window % 2 == 0 {
            return Err(TensorError::EvenKernel { op: OP, size: window });
        }
        let mut out = vec![T::zero(); n * c * h * w];
        kernels::avg_pool_forward(self.value(input), n * c, h, w, window, &mut out);
        let rg = self.any_grad(&[input]);
        Ok(self.push(vec![n, c, h, w], out, Op::AvgPool { input, window }, rg))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = self
            .value(input)
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let rg = self.any_grad(&[input]);
        self.push(self.shape(input).to_vec(), out, Op::Relu(input), rg)
    }

    /// `N×C×H×W -> N×C` spatial means.
    pub fn global_channel_mean(&mut self, input: Var) -> Result<Var, TensorError> {
        let (n, c, h, w) = dims4("global_channel_mean", self.shape(input))?;
        let hw = h * w;
        let inv = T::lit(1.0 / hw as f64);
        let out = self
            .value(input)
            .chunks(hw)
            .map(|plane| lane_sum(plane) * inv)
            .collect();
        let rg = self.any_grad(&[input]);
        Ok(self.push(vec![n, c], out, Op::ChannelMean(input), rg))
    }

    /// Matrix-vector product without bias. `weight` is `M×C`; `input` is a
    /// single `C` vector or a batch `N×C`, giving `M` or `N×M`.
    pub fn dense_nobias(&mut self, weight: Var, input: Var) -> Result<Var, TensorError> {
        const OP: &str = "dense_nobias";
        let (m, c) = match *self.shape(weight) {
            [m, c] => (m, c),
            ref s => return Err(shape_err(OP, format!("weight must be M×C, got {s:?}"))),
        };
        let (rows, out_shape) = match *self.shape(input) {
            [ci] if ci == c => (1, vec![m]),
            [n, ci] if ci == c => (n, vec![n, m]),
            ref s => {
                return Err(shape_err(
                    OP,
                    format!("weight is {m}×{c} but input has shape {s:?}"),
                ))
            }
        };
        let mut out = vec![T::zero(); rows * m];
        // out (rows×m) = input (rows×c) · weightᵀ (c×m)
        gemm(
            rows,
            c,
            m,
            MatRef::row_major(self.value(input), c),
            MatRef::transposed(self.value(weight), c),
            T::zero(),
            &mut out,
        );
        let rg = self.any_grad(&[weight, input]);
        Ok(self.push(out_shape, out, Op::DenseNoBias { weight, input }, rg))
    }

    /// Softmax over the last dimension, with max subtraction.
    pub fn softmax(&mut self, input: Var) -> Var {
        let (_, m) = rows_cols(self.shape(input));
        let mut out = self.value(input).to_vec();
        if m > 0 {
            for row in out.chunks_mut(m) {
                let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - mx).exp();
                    total += *v;
                }
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
        let rg = self.any_grad(&[input]);
        self.push(self.shape(input).to_vec(), out, Op::Softmax(input), rg)
    }

    /// Multiplies every element of sample `n` by `scale[n]`; a single-element
    /// `scale` is broadcast over the batch.
    pub fn scale_channels(&mut self, map: Var, scale: Var) -> Result<Var, TensorError> {
        const OP: &str = "scale_channels";
        let (n, c, h, w) = dims4(OP, self.shape(map))?;
        let s = self.value(scale);
        if s.len() != 1 && s.len() != n {
            return Err(shape_err(
                OP,
                format!("scale must have 1 or {n} elements, got {}", s.len()),
            ));
        }
        let per = c * h * w;
        let mut out = Vec::with_capacity(n * per);
        for (sample, chunk) in self.value(map).chunks(per.max(1)).enumerate() {
            let sv = s[if s.len() == 1 { 0 } else { sample }];
            out.extend(chunk.iter().map(|&v| v * sv));
        }
        let rg = self.any_grad(&[map, scale]);
        Ok(self.push(vec![n, c, h, w], out, Op::ScaleChannels { map, scale }, rg))
    }

    pub fn concat_channels(&mut self, maps: &[Var]) -> Result<Var, TensorError> {
        const OP: &str = "concat_channels";
        let first = *maps
            .first()
            .ok_or_else(|| shape_err(OP, "at least one map is required"))?;
        let (n, _, h, w) = dims4(OP, self.shape(first))?;
        let mut total_c = 0;
        for &m in maps {
            let (mn, mc, mh, mw) = dims4(OP, self.shape(m))?;
            if (mn, mh, mw) != (n, h, w) {
                return Err(shape_err(
                    OP,
                    format!("expected N={n}, H={h}, W={w}, got {:?}", self.shape(m)),
                ));
            }
            total_c += mc;
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * total_c * hw);
        for s in 0..n {
            for &m in maps {
                let c = self.shape(m)[1];
                out.extend_from_slice(&self.value(m)[s * c * hw..(s + 1) * c * hw]);
            }
        }
        let rg = self.any_grad(maps);
        Ok(self.push(vec![n, total_c, h, w], out, Op::Concat(maps.to_vec()), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    /// `(1/N) Σ_n ‖pred_n − target_n‖₁`, where `N` is the leading dimension.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err(
                "l1_loss",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let batch = self.shape(pred).first().copied().unwrap_or(1).max(1);
        let total: T = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(&p, &t)| (p - t).abs())
            .sum();
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(
            vec![1],
            vec![total / T::lit(batch as f64)],
            Op::L1Loss { pred, target },
            rg,
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = lane_sum(self.value(input));
        let rg = self.any_grad(&[input]);
        self.push(vec![1], vec![total], Op::Sum(input), rg)
    }

    /// Column `col` of an `N×M` matrix, as an `N` vector.
    pub fn select_column(&mut self, input: Var, col: usize) -> Result<Var, TensorError> {
        let (rows, m) = match *self.shape(input) {
            [r, m] => (r, m),
            [m] => (1, m),
            ref s => return Err(shape_err("select_column", format!("expected N×M, got {s:?}"))),
        };
        if col >= m {
            return Err(TensorError::Invalid {
                op: "select_column",
                detail: format!("column {col} out of range for width {m}"),
            });
        }
        let out = (0..rows).map(|r| self.value(input)[r * m + col]).collect();
        let rg = self.any_grad(&[input]);
        Ok(self.push(vec![rows], out, Op::SelectColumn { input, col }, rg))
    }

    /// Row `row` of an `R×M` matrix, as a `1×M` matrix.
    pub fn select_row(&mut self, input: Var, row: usize) -> Result<Var, TensorError> {
        let (rows, m) = match *self.shape(input) {
            [r, m] => (r, m),
            ref s => return Err(shape_err("select_row", format!("expected R×M, got {s:?}"))),
        };
        if row >= rows {
            return Err(TensorError::Invalid {
                op: "select_row",
                detail: format!("row {row} out of range for {rows} rows"),
            });
        }
        let out = self.value(input)[row * m..(row + 1) * m].to_vec();
        let rg = self.any_grad(&[input]);
        Ok(self.push(vec![1, m], out, Op::SelectRow { input, row }, rg))
    }

    /// Records a caller-defined operation whose forward value was computed
    /// outside the tape.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: &[usize],
        value: Vec<T>,
        op: Box<dyn CustomOp<T>>,
    ) -> Result<Var, TensorError> {
        let value = Tensor::new(shape, value)?.into_data();
        let rg = self.any_grad(inputs);
        Ok(self.push(
            shape.to_vec(),
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        ))
    }

    /// Fingerprint of every non-differentiable branch decision on the tape
    /// (ReLU input signs and L1 residual signs). Two evaluations with equal
    /// fingerprints lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        let sign = |v: T| -> u8 {
            if v > T::zero() {
                2
            } else if v < T::zero() {
                0
            } else {
                1
            }
        };
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) => {
                    for &v in self.value(x) {
                        sign(v).hash(&mut hasher);
                    }
                }
                Op::L1Loss { pred, target } => {
                    for (&p, &t) in self.value(pred).iter().zip(self.value(target)) {
                        sign(p - t).hash(&mut hasher);
                    }
                }
                _ => {}
            }
        }
        hasher.finish()
    }

    /// Reverse sweep from a scalar `loss`. Leaves with `requires_grad` receive
    /// `∂loss/∂leaf`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        let mut leaves = HashMap::new();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { leaves });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    leaves.insert(i, g);
                }
                continue;
            }
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { leaves })
    }

    /// Runs [`Tape::backward`] and adds every named parameter's gradient into
    /// the matching tensor of `store`. Repeated calls accumulate.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore<T>) -> Result<(), TensorError> {
        let grads = self.backward(loss)?;
        for (idx, g) in &grads.leaves {
            if let Some(name) = &self.nodes[*idx].name {
                store
                    .get_mut(name)
                    .ok_or_else(|| TensorError::UnknownParam(name.clone()))?
                    .accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Gradient buffer for `v`, allocated lazily; `None` when `v` does not
    /// need a gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            grads[v.0]
                .get_or_insert_with(|| vec![T::zero(); node.value.len()])
                .as_mut_slice(),
        )
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let x = self.value(*input);
                let wt = self.value(*weight);
                // Separate passes keep each slot borrow exclusive.
                if let Some(b) = bias {
                    if let Some(db) = self.slot(grads, *b) {
                        kernels::conv2d_backward(x, wt, geom, g, None, None, Some(db));
                    }
                }
                if let Some(dw) = self.slot(grads, *weight) {
                    kernels::conv2d_backward(x, wt, geom, g, None, Some(dw), None);
                }
                if let Some(dx) = self.slot(grads, *input) {
                    kernels::conv2d_backward(x, wt, geom, g, Some(dx), None, None);
                }
            }
            Op::Depthwise {
                input,
                weight,
                geom,
            } => {
                let x = self.value(*input);
                let wt = self.value(*weight);
                if let Some(dw) = self.slot(grads, *weight) {
                    kernels::depthwise_backward(x, wt, geom, g, None, Some(dw));
                }
                if let Some(dx) = self.slot(grads, *input) {
                    kernels::depthwise_backward(x, wt, geom, g, Some(dx), None);
                }
            }
            Op::AvgPool { input, window } => {
                let [n, c, h, w] = node.shape[..] else { unreachable!() };
                if let Some(dx) = self.slot(grads, *input) {
                    kernels::avg_pool_backward(g, n * c, h, w, *window, dx);
                }
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                if let Some(dx) = self.slot(grads, *input) {
                    for ((d, &xv), &gv) in dx.iter_mut().zip(x).zip(g) {
                        if xv > T::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::ChannelMean(input) => {
                let [_, _, h, w] = self.shape(*input)[..] else { unreachable!() };
                let hw = h * w;
                let inv = T::lit(1.0 / hw as f64);
                if let Some(dx) = self.slot(grads, *input) {
                    for (plane, &gv) in dx.chunks_mut(hw).zip(g) {
                        let v = gv * inv;
                        plane.iter_mut().for_each(|d| *d += v);
                    }
                }
            }
            Op::DenseNoBias { weight, input } => {
                let [m, c] = self.shape(*weight)[..] else { unreachable!() };
                let rows = self.value(*input).len() / c;
                if let Some(dw) = self.slot(grads, *weight) {
                    // dW (m×c) += gᵀ (m×rows) · x (rows×c)
                    gemm(
                        m,
                        rows,
                        c,
                        MatRef::transposed(g, m),
                        MatRef::row_major(self.value(*input), c),
                        T::one(),
                        dw,
                    );
                }
                if let Some(dx) = self.slot(grads, *input) {
                    // dx (rows×c) += g (rows×m) · W (m×c)
                    gemm(
                        rows,
                        m,
                        c,
                        MatRef::row_major(g, m),
                        MatRef::row_major(self.value(*weight), c),
                        T::one(),
                        dx,
                    );
                }
            }
            Op::Softmax(input) => {
                let (_, m) = rows_cols(&node.shape);
                if let Some(dx) = self.slot(grads, *input) {
                    for ((drow, yrow), grow) in dx
                        .chunks_mut(m)
                        .zip(node.value.chunks(m))
                        .zip(g.chunks(m))
                    {
                        let dot: T = yrow.iter().zip(grow).map(|(&y, &gv)| y * gv).sum();
                        for ((d, &y), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                            *d += y * (gv - dot);
                        }
                    }
                }
            }
            Op::ScaleChannels { map, scale } => {
                let n = node.shape[0];
                let per = node.value.len() / n.max(1);
                let s = self.value(*scale);
                let broadcast = s.len() == 1;
                if let Some(ds) = self.slot(grads, *scale) {
                    let x = self.value(*map);
                    for sample in 0..n {
                        let r = sample * per..(sample + 1) * per;
                        let acc = lane_dot(&x[r.clone()], &g[r]);
                        ds[if broadcast { 0 } else { sample }] += acc;
                    }
                }
                if let Some(dx) = self.slot(grads, *map) {
                    for (sample, (dchunk, gchunk)) in dx.chunks_mut(per).zip(g.chunks(per)).enumerate() {
                        let sv = s[if broadcast { 0 } else { sample }];
                        dchunk.iter_mut().zip(gchunk).for_each(|(d, &gv)| *d += gv * sv);
                    }
                }
            }
            Op::Concat(inputs) => {
                let [n, _, h, w] = node.shape[..] else { unreachable!() };
                let hw = h * w;
                let total_c = node.shape[1];
                let mut offset = 0;
                for &m in inputs {
                    let c = self.shape(m)[1];
                    if let Some(dx) = self.slot(grads, m) {
                        for s in 0..n {
                            let src = &g[(s * total_c + offset) * hw..(s * total_c + offset + c) * hw];
                            let dst = &mut dx[s * c * hw..(s + 1) * c * hw];
                            dst.iter_mut().zip(src).for_each(|(d, &v)| *d += v);
                        }
                    }
                    offset += c;
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.slot(grads, v) {
                        d.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            Op::L1Loss { pred, target } => {
                let batch = self.shape(*pred).first().copied().unwrap_or(1).max(1);
                let scale = g[0] / T::lit(batch as f64);
                let p = self.value(*pred);
                let t = self.value(*target);
                let sign = |v: T| {
                    if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                };
                if let Some(dp) = self.slot(grads, *pred) {
                    for ((d, &pv), &tv) in dp.iter_mut().zip(p).zip(t) {
                        *d += scale * sign(pv - tv);
                    }
                }
                if let Some(dt) = self.slot(grads, *target) {
                    for ((d, &pv), &tv) in dt.iter_mut().zip(p).zip(t) {
                        *d -= scale * sign(pv - tv);
                    }
                }
            }
            Op::Sum(input) => {
                if let Some(dx) = self.slot(grads, *input) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::SelectColumn { input, col } => {
                let m = *self.shape(*input).last().unwrap();
                if let Some(dx) = self.slot(grads, *input) {
                    for (r, &gv) in g.iter().enumerate() {
                        dx[r * m + col] += gv;
                    }
                }
            }
            Op::SelectRow { input, row } => {
                let m = self.shape(*input)[1];
                if let Some(dx) = self.slot(grads, *input) {
                    dx[row * m..(row + 1) * m]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, &gv)| *d += gv);
                }
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&[T]> = inputs.iter().map(|&v| self.value(v)).collect();
                let contribs = op.backward(&values, &node.value, g);
                for (&v, contrib) in inputs.iter().zip(contribs) {
                    if let Some(d) = self.slot(grads, v) {
                        d.iter_mut().zip(&contrib).for_each(|(d, &c)| *d += c);
                    }
                }
            }
        }
    }
}
