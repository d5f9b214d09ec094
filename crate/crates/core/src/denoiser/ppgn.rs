//! A small provably-powerful graph network with hand-written backpropagation.
//!
//! The input is an `n x n x 2` tensor holding the noisy adjacency matrix and
//! `beta_bar_t * I`. Each block applies two pair-wise perceptrons, multiplies
//! their outputs channel by channel as `n x n` matrices, mixes the product
//! with its input through a third perceptron and instance-normalises the
//! result. The outputs of every block are concatenated and a pair-wise head
//! maps them to one logit per pair, which is symmetrised by averaging with
//! its transpose.
//!
//! Tensors are stored position-major: row `i * n + j` of an `(n*n, c)` array
//! holds the `c` channels of pair `(i, j)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::graph::{pair_count, Graph};
use crate::schedule::NoiseSchedule;

const INPUT_CHANNELS: usize = 2;
const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of a two-layer perceptron `w2 * silu(w1 * x + b1) + b2`.
#[derive(Clone, Copy, Debug)]
struct MlpLayout {
    input: usize,
    hidden: usize,
    output: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct BlockLayout {
    c_in: usize,
    m1: MlpLayout,
    m2: MlpLayout,
    skip: MlpLayout,
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    blocks: Vec<BlockLayout>,
    head: MlpLayout,
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Layout {
    fn new(depth: usize, hidden: usize) -> Self {
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec {
                name,
                shape,
                offset,
            });
            offset
        };
        let mut mlp = |prefix: String, input: usize, hidden: usize, output: usize| MlpLayout {
            input,
            hidden,
            output,
            w1: push(format!("{prefix}.w1"), vec![input, hidden]),
            b1: push(format!("{prefix}.b1"), vec![hidden]),
            w2: push(format!("{prefix}.w2"), vec![hidden, output]),
            b2: push(format!("{prefix}.b2"), vec![output]),
        };
        let mut blocks = Vec::with_capacity(depth);
        for b in 0..depth {
            let c_in = if b == 0 { INPUT_CHANNELS } else { hidden };
            let m1 = mlp(format!("block{b}.m1"), c_in, hidden, hidden);
            let m2 = mlp(format!("block{b}.m2"), c_in, hidden, hidden);
            let skip = mlp(format!("block{b}.skip"), c_in + hidden, hidden, hidden);
            blocks.push((c_in, m1, m2, skip));
        }
        let head = mlp("head".into(), depth * hidden, hidden, 1);
        // Norm parameters are laid out after the perceptrons they follow.
        let blocks = blocks
            .into_iter()
            .enumerate()
            .map(|(b, (c_in, m1, m2, skip))| BlockLayout {
                c_in,
                m1,
                m2,
                skip,
                gamma: push(format!("block{b}.norm.gamma"), vec![hidden]),
                beta: push(format!("block{b}.norm.beta"), vec![hidden]),
            })
            .collect();
        Layout {
            blocks,
            head,
            tensors,
            total,
        }
    }
}

/// Parameters of a MiniPPGN with `depth` blocks of width `hidden`, stored as
/// one flat vector described by [`TensorSpec`]s.
#[derive(Clone, Debug)]
pub struct MiniPpgnParams {
    depth: usize,
    hidden: usize,
    layout: Layout,
    values: Vec<f64>,
}

impl PartialEq for MiniPpgnParams {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.hidden == other.hidden && self.values == other.values
    }
}

impl MiniPpgnParams {
    pub fn zeros(depth: usize, hidden: usize) -> Result<Self> {
        if depth == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "MiniPPGN needs at least one block and one hidden channel".into(),
            ));
        }
        let layout = Layout::new(depth, hidden);
        let values = vec![0.0; layout.total];
        Ok(MiniPpgnParams {
            depth,
            hidden,
            layout,
            values,
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`;
    /// normalisation scales 1 and offsets 0.
    pub fn init<R: Rng + ?Sized>(depth: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(depth, hidden)?;
        for spec in p.layout.tensors.clone() {
            let range = spec.range();
            if spec.name.ends_with("norm.gamma") {
                p.values[range].fill(1.0);
            } else if spec.name.ends_with("norm.beta") {
                continue;
            } else {
                let fan_in = if spec.shape.len() == 2 {
                    spec.shape[0]
                } else {
                    // bias: fan-in of the matching weight matrix
                    let w = p.layout.tensors.iter().find(|t| {
                        t.name == spec.name.replace(".b", ".w") && t.shape.len() == 2
                    });
                    w.map_or(1, |w| w.shape[0])
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in &mut p.values[range] {
                    *v = rng.random_range(-bound..=bound);
                }
            }
        }
        Ok(p)
    }

    pub fn from_values(depth: usize, hidden: usize, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(depth, hidden)?;
        if values.len() != p.values.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters for depth {depth}, hidden {hidden}; got {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let spec = self.layout.tensors.iter().find(|t| t.name == name)?;
        Some(&self.values[spec.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let spec = self.layout.tensors.iter().find(|t| t.name == name)?;
        Some(&mut self.values[spec.range()])
    }

    pub fn forward(&self, a_t: &Graph, beta_bar_t: f64) -> Result<DenoiserOutput> {
        Ok(self.forward_traced(a_t, beta_bar_t)?.0)
    }

    /// Forward pass that keeps every intermediate needed by [`backward`](Self::backward).
    pub fn forward_traced(&self, a_t: &Graph, beta_bar_t: f64) -> Result<(DenoiserOutput, ForwardTrace)> {
        if let Some(spec) = self
            .layout
            .tensors
            .iter()
            .find(|t| self.values[t.range()].iter().any(|v| !v.is_finite()))
        {
            return Err(non_finite(&format!("parameter {}", spec.name)));
        }
        if !beta_bar_t.is_finite() {
            return Err(non_finite("input noise level"));
        }
        let n = a_t.n();
        let positions = n * n;
        let mut input = Array2::zeros((positions, INPUT_CHANNELS));
        for (i, j) in a_t.edges() {
            input[[i * n + j, 0]] = 1.0;
            input[[j * n + i, 0]] = 1.0;
        }
        for i in 0..n {
            input[[i * n + i, 1]] = beta_bar_t;
        }

        let mut blocks: Vec<BlockTrace> = Vec::with_capacity(self.depth);
        for (b, layout) in self.layout.blocks.iter().enumerate() {
            let x = blocks.last().map_or(&input, |prev| &prev.out);
            let trace = self.block_forward(layout, x, n).map_err(|stage| {
                non_finite(&format!("block{b}.{stage}"))
            })?;
            blocks.push(trace);
        }

        let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.out.view()).collect();
        let concat = ndarray::concatenate(Axis(1), &views).expect("block outputs share rows");
        let (head_out, head) = mlp_forward(&self.layout.head, &self.values, &concat);
        check_finite(&head_out, "head")?;

        let full = head_out.column(0);
        let mut logits = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in (i + 1)..n {
                logits.push(0.5 * (full[i * n + j] + full[j * n + i]));
            }
        }
        let trace = ForwardTrace {
            n,
            input,
            blocks,
            concat,
            head,
        };
        Ok((DenoiserOutput::from_logits(logits), trace))
    }

    fn block_forward(&self, layout: &BlockLayout, x: &Array2<f64>, n: usize) -> Result<BlockTrace, &'static str> {
        let (u, m1) = mlp_forward(&layout.m1, &self.values, x);
        finite_or(&u, "m1")?;
        let (v, m2) = mlp_forward(&layout.m2, &self.values, x);
        finite_or(&v, "m2")?;
        let product = channel_matmul(&u, &v, n);
        finite_or(&product, "mult")?;
        let skip_in = ndarray::concatenate(Axis(1), &[x.view(), product.view()]).expect("same rows");
        let (z, skip) = mlp_forward(&layout.skip, &self.values, &skip_in);
        finite_or(&z, "skip")?;

        let gamma = ArrayView1::from(&self.values[layout.gamma..layout.gamma + z.ncols()]);
        let beta = ArrayView1::from(&self.values[layout.beta..layout.beta + z.ncols()]);
        let (xhat, std) = instance_norm(&z);
        let out = &xhat * &gamma + beta;
        finite_or(&out, "norm")?;
        Ok(BlockTrace {
            m1,
            u,
            m2,
            v,
            skip_in,
            skip,
            xhat,
            std,
            out,
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient at the returned (symmetrised, upper-triangular) logits.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &[f64]) -> Result<Vec<f64>> {
        let n = trace.n;
        if grad_logits.len() != pair_count(n) {
            return Err(Error::InvalidArgument(format!(
                "expected {} logit gradients, got {}",
                pair_count(n),
                grad_logits.len()
            )));
        }
        if grad_logits.iter().any(|g| !g.is_finite()) {
            return Err(non_finite("logit gradient"));
        }
        let mut grads = vec![0.0; self.values.len()];

        let mut d_full = Array2::zeros((n * n, 1));
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                d_full[[i * n + j, 0]] = 0.5 * grad_logits[k];
                d_full[[j * n + i, 0]] = 0.5 * grad_logits[k];
                k += 1;
            }
        }
        let d_concat = mlp_backward(&self.layout.head, &self.values, &trace.concat, &trace.head, &d_full, &mut grads);

        let h = self.hidden;
        let mut carry: Option<Array2<f64>> = None;
        for (b, layout) in self.layout.blocks.iter().enumerate().rev() {
            let bt = &trace.blocks[b];
            let mut d_out = d_concat.slice(s![.., b * h..(b + 1) * h]).to_owned();
            if let Some(c) = carry.take() {
                d_out += &c;
            }

            let gamma = ArrayView1::from(&self.values[layout.gamma..layout.gamma + h]);
            add_into(&mut grads[layout.gamma..layout.gamma + h], (&d_out * &bt.xhat).sum_axis(Axis(0)));
            add_into(&mut grads[layout.beta..layout.beta + h], d_out.sum_axis(Axis(0)));
            let d_xhat = &d_out * &gamma;
            let d_z = instance_norm_backward(&bt.xhat, &bt.std, &d_xhat);

            let d_skip_in = mlp_backward(&layout.skip, &self.values, &bt.skip_in, &bt.skip, &d_z, &mut grads);
            let mut d_x = d_skip_in.slice(s![.., ..layout.c_in]).to_owned();
            let d_product = d_skip_in.slice(s![.., layout.c_in..]).to_owned();
            let (d_u, d_v) = channel_matmul_backward(&bt.u, &bt.v, &d_product, n);

            let x = if b == 0 { &trace.input } else { &trace.blocks[b - 1].out };
            d_x += &mlp_backward(&layout.m1, &self.values, x, &bt.m1, &d_u, &mut grads);
            d_x += &mlp_backward(&layout.m2, &self.values, x, &bt.m2, &d_v, &mut grads);
            if b > 0 {
                carry = Some(d_x);
            }
        }
        if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
            let name = self
                .layout
                .tensors
                .iter()
                .find(|t| t.range().contains(&pos))
                .map_or("?", |t| t.name.as_str());
            return Err(non_finite(&format!("gradient of {name}")));
        }
        Ok(grads)
    }
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    n: usize,
    input: Array2<f64>,
    blocks: Vec<BlockTrace>,
    concat: Array2<f64>,
    head: MlpTrace,
}

#[derive(Clone, Debug)]
struct BlockTrace {
    m1: MlpTrace,
    u: Array2<f64>,
    m2: MlpTrace,
    v: Array2<f64>,
    skip_in: Array2<f64>,
    skip: MlpTrace,
    xhat: Array2<f64>,
    std: Array1<f64>,
    out: Array2<f64>,
}

#[derive(Clone, Debug)]
struct MlpTrace {
    pre: Array2<f64>,
    act: Array2<f64>,
}

fn weight(values: &[f64], offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &values[offset..offset + rows * cols]).expect("layout shape")
}

fn bias(values: &[f64], offset: usize, len: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&values[offset..offset + len])
}

fn silu(z: f64) -> f64 {
    z * super::sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = super::sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

fn mlp_forward(l: &MlpLayout, values: &[f64], x: &Array2<f64>) -> (Array2<f64>, MlpTrace) {
    let pre = x.dot(&weight(values, l.w1, l.input, l.hidden)) + bias(values, l.b1, l.hidden);
    let act = pre.mapv(silu);
    let out = act.dot(&weight(values, l.w2, l.hidden, l.output)) + bias(values, l.b2, l.output);
    (out, MlpTrace { pre, act })
}

fn mlp_backward(
    l: &MlpLayout,
    values: &[f64],
    x: &Array2<f64>,
    trace: &MlpTrace,
    d_out: &Array2<f64>,
    grads: &mut [f64],
) -> Array2<f64> {
    add_into(&mut grads[l.b2..l.b2 + l.output], d_out.sum_axis(Axis(0)));
    add_into(&mut grads[l.w2..l.w2 + l.hidden * l.output], trace.act.t().dot(d_out));
    let d_act = d_out.dot(&weight(values, l.w2, l.hidden, l.output).t());
    let d_pre = d_act * trace.pre.mapv(silu_grad);
    add_into(&mut grads[l.b1..l.b1 + l.hidden], d_pre.sum_axis(Axis(0)));
    add_into(&mut grads[l.w1..l.w1 + l.input * l.hidden], x.t().dot(&d_pre));
    d_pre.dot(&weight(values, l.w1, l.input, l.hidden).t())
}

fn add_into<D: ndarray::Dimension>(dst: &mut [f64], src: ndarray::Array<f64, D>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

/// `out[(i,j), c] = sum_l u[(i,l), c] * v[(l,j), c]`.
fn channel_matmul(u: &Array2<f64>, v: &Array2<f64>, n: usize) -> Array2<f64> {
    let c = u.ncols();
    let (u, v) = (u.as_standard_layout(), v.as_standard_layout());
    let mut out = Array2::zeros((n * n, c));
    let (us, vs) = (u.as_slice().expect("standard layout"), v.as_slice().expect("standard layout"));
    let os = out.as_slice_mut().expect("standard layout");
    for i in 0..n {
        for l in 0..n {
            let u_row = &us[(i * n + l) * c..(i * n + l + 1) * c];
            for j in 0..n {
                let v_row = &vs[(l * n + j) * c..(l * n + j + 1) * c];
                let o_row = &mut os[(i * n + j) * c..(i * n + j + 1) * c];
                for ((o, a), b) in o_row.iter_mut().zip(u_row).zip(v_row) {
                    *o += a * b;
                }
            }
        }
    }
    out
}

fn channel_matmul_backward(
    u: &Array2<f64>,
    v: &Array2<f64>,
    d_out: &Array2<f64>,
    n: usize,
) -> (Array2<f64>, Array2<f64>) {
    let c = u.ncols();
    let mut du = Array2::zeros((n * n, c));
    let mut dv = Array2::zeros((n * n, c));
    let (u, v, d_out) = (u.as_standard_layout(), v.as_standard_layout(), d_out.as_standard_layout());
    let us = u.as_slice().expect("standard layout");
    let vs = v.as_slice().expect("standard layout");
    let ds = d_out.as_slice().expect("standard layout");
    {
        let dus = du.as_slice_mut().expect("standard layout");
        let dvs = dv.as_slice_mut().expect("standard layout");
        for i in 0..n {
            for l in 0..n {
                let il = (i * n + l) * c;
                for j in 0..n {
                    let lj = (l * n + j) * c;
                    let ij = (i * n + j) * c;
                    for ch in 0..c {
                        let g = ds[ij + ch];
                        dus[il + ch] += g * vs[lj + ch];
                        dvs[lj + ch] += g * us[il + ch];
                    }
                }
            }
        }
    }
    (du, dv)
}

/// Per-channel normalisation over all `n*n` positions (population variance).
fn instance_norm(z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mean = z.mean_axis(Axis(0)).expect("at least one position");
    let centered = z - &mean;
    let var = centered.mapv(|x| x * x).mean_axis(Axis(0)).expect("at least one position");
    let std = var.mapv(|v| (v + NORM_EPS).sqrt());
    (centered / &std, std)
}

fn instance_norm_backward(xhat: &Array2<f64>, std: &Array1<f64>, d_xhat: &Array2<f64>) -> Array2<f64> {
    let mean_d = d_xhat.mean_axis(Axis(0)).expect("rows");
    let mean_dx = (d_xhat * xhat).mean_axis(Axis(0)).expect("rows");
    (d_xhat - &mean_d - &(xhat * &mean_dx)) / std
}

fn non_finite(layer: &str) -> Error {
    Error::NonFinite {
        layer: layer.to_string(),
    }
}

fn finite_or(a: &Array2<f64>, stage: &'static str) -> Result<(), &'static str> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(stage)
    }
}

fn check_finite(a: &Array2<f64>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(non_finite(layer))
    }
}

pub fn mini_ppgn_forward(params: &MiniPpgnParams, a_t: &Graph, beta_bar_t: f64) -> Result<DenoiserOutput> {
    params.forward(a_t, beta_bar_t)
}

pub fn mini_ppgn_backward(
    params: &MiniPpgnParams,
    a_t: &Graph,
    beta_bar_t: f64,
    grad_logits: &[f64],
) -> Result<Vec<f64>> {
    let (_, trace) = params.forward_traced(a_t, beta_bar_t)?;
    params.backward(&trace, grad_logits)
}

/// A MiniPPGN bound to the schedule it is conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniPpgn {
    pub params: MiniPpgnParams,
    pub schedule: NoiseSchedule,
}

impl MiniPpgn {
    pub fn new(params: MiniPpgnParams, schedule: NoiseSchedule) -> Self {
        MiniPpgn { params, schedule }
    }
}

impl Denoiser for MiniPpgn {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict(&self, a_t: &Graph, t: usize) -> Result<DenoiserOutput> {
        self.schedule.check_step(t, 1)?;
        self.params.forward(a_t, self.schedule.beta_bar(t))
    }
}
