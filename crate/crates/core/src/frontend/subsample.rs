//! Factor-4 time subsampling: two 3×3 stride-2 convolutions over
//! (time × frequency), each followed by a squared ReLU, then a linear
//! projection to the encoder width.
//!
//! Tensors are channels-last (`[time × freq × channels]`). The streaming
//! variant keeps the last three input rows of each convolution and produces
//! bit-identical rows to the whole-sequence path.

use crate::error::{shape_err, Error, Result};
use crate::numerics::kernels::{dot, matvec, squared_relu_scalar};
use crate::numerics::{CustomOp, Graph, Scalar, Tensor, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::RunRng;

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
/// Shortest input that survives both convolutions.
pub const MIN_FRAMES: usize = 7;

fn conv_out(n: usize) -> usize {
    if n < KERNEL {
        0
    } else {
        (n - KERNEL) / STRIDE + 1
    }
}

/// Encoder frames produced from `t_raw` feature frames, or `None` below the minimum.
pub fn subsampled_len(t_raw: usize) -> Option<usize> {
    let t = conv_out(conv_out(t_raw));
    (t > 0).then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsampleParams {
    pub feat_dim: usize,
    pub channels: usize,
    pub d_io: usize,
    /// `[channels × 3 × 3 × 1]`
    pub conv1_kernel: ParamId,
    pub conv1_bias: ParamId,
    /// `[channels × 3 × 3 × channels]`
    pub conv2_kernel: ParamId,
    pub conv2_bias: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

impl SubsampleParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, feat_dim: usize, channels: usize, d_io: usize, rng: &mut RunRng) -> Self {
        let w2 = conv_out(conv_out(feat_dim));
        let flat = w2 * channels;
        Self {
            feat_dim,
            channels,
            d_io,
            conv1_kernel: store.add_uniform("subsample.conv1.kernel", &[channels, KERNEL, KERNEL, 1], KERNEL * KERNEL, rng),
            conv1_bias: store.add("subsample.conv1.bias", Tensor::zeros(&[channels])),
            conv2_kernel: store.add_uniform(
                "subsample.conv2.kernel",
                &[channels, KERNEL, KERNEL, channels],
                KERNEL * KERNEL * channels,
                rng,
            ),
            conv2_bias: store.add("subsample.conv2.bias", Tensor::zeros(&[channels])),
            proj_w: store.add_uniform("subsample.proj.weight", &[d_io, flat], flat, rng),
            proj_b: store.add("subsample.proj.bias", Tensor::zeros(&[d_io])),
        }
    }

    /// Width (frequency × channels) of one row after the first convolution.
    pub fn conv1_row_len(&self) -> usize {
        conv_out(self.feat_dim) * self.channels
    }
}

/// One output row of a valid 3×3 stride-2 convolution from its three input rows
/// (each `width × c_in`, channels-last).
fn conv_row<T: Scalar>(rows: [&[T]; 3], width: usize, c_in: usize, kernel: &Tensor<T>, bias: &[T]) -> Vec<T> {
    let c_out = bias.len();
    let w_out = conv_out(width);
    let kd = kernel.data();
    let mut out = Vec::with_capacity(w_out * c_out);
    for wo in 0..w_out {
        for co in 0..c_out {
            let mut acc = T::zero();
            for (di, row) in rows.iter().enumerate() {
                let start = STRIDE * wo * c_in;
                let patch = &row[start..start + KERNEL * c_in];
                let kbase = ((co * KERNEL + di) * KERNEL) * c_in;
                acc += dot(patch, &kd[kbase..kbase + KERNEL * c_in]);
            }
            out.push(acc + bias[co]);
        }
    }
    out
}

fn conv2d<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [h, w, c_in] = *x.shape() else {
        return Err(shape_err("conv2d", format!("input {:?}", x.shape())));
    };
    let ks = kernel.shape();
    if ks != [bias.len(), KERNEL, KERNEL, c_in] {
        return Err(shape_err("conv2d", format!("kernel {ks:?} for {c_in} input channels")));
    }
    let (h_out, w_out) = (conv_out(h), conv_out(w));
    let row_len = w * c_in;
    let mut data = Vec::with_capacity(h_out * w_out * bias.len());
    for ho in 0..h_out {
        let r = |i: usize| &x.data()[(STRIDE * ho + i) * row_len..(STRIDE * ho + i + 1) * row_len];
        data.extend(conv_row([r(0), r(1), r(2)], w, c_in, kernel, bias.data()));
    }
    Tensor::new(vec![h_out, w_out, bias.len()], data)
}

struct Conv2dOp;

impl<T: Scalar> CustomOp<T> for Conv2dOp {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (x, kernel) = (inputs[0], inputs[1]);
        let [_, w, c_in] = *x.shape() else { unreachable!() };
        let [h_out, w_out, c_out] = *grad.shape() else { unreachable!() };
        let mut gx = Tensor::zeros(x.shape());
        let mut gk = Tensor::zeros(kernel.shape());
        let mut gb = vec![T::zero(); c_out];
        let (xd, kd, gd) = (x.data(), kernel.data(), grad.data());
        for ho in 0..h_out {
            for wo in 0..w_out {
                for co in 0..c_out {
                    let d = gd[(ho * w_out + wo) * c_out + co];
                    if d == T::zero() {
                        continue;
                    }
                    gb[co] += d;
                    for di in 0..KERNEL {
                        for dj in 0..KERNEL {
                            let xi = ((STRIDE * ho + di) * w + STRIDE * wo + dj) * c_in;
                            let ki = ((co * KERNEL + di) * KERNEL + dj) * c_in;
                            for ci in 0..c_in {
                                gk.data_mut()[ki + ci] += d * xd[xi + ci];
                                gx.data_mut()[xi + ci] += d * kd[ki + ci];
                            }
                        }
                    }
                }
            }
        }
        vec![Some(gx), Some(gk), Some(Tensor::vector(gb))]
    }
}

fn conv2d_graph<T: Scalar>(g: &Graph<T>, x: Var, kernel: Var, bias: Var) -> Result<Var> {
    let out = conv2d(&g.value(x), &g.value(kernel), &g.value(bias))?;
    g.custom(Box::new(Conv2dOp), &[x, kernel, bias], out)
}

/// `features: [T_raw × feat_dim]` to `[T × d_io]`.
pub fn conv_subsample_graph<T: Scalar>(g: &Graph<T>, b: &Bound, p: &SubsampleParams, features: Var) -> Result<Var> {
    let shape = g.shape(features);
    if shape.len() != 2 || shape[1] != p.feat_dim {
        return Err(shape_err("conv_subsample", format!("features {shape:?}, expected width {}", p.feat_dim)));
    }
    if subsampled_len(shape[0]).is_none() {
        return Err(Error::TooShort(format!(
            "{} feature frames; subsampling needs at least {MIN_FRAMES}",
            shape[0]
        )));
    }
    let x = g.reshape(features, vec![shape[0], shape[1], 1])?;
    let c1 = conv2d_graph(g, x, b[p.conv1_kernel], b[p.conv1_bias])?;
    let c1 = g.squared_relu(c1)?;
    let c2 = conv2d_graph(g, c1, b[p.conv2_kernel], b[p.conv2_bias])?;
    let c2 = g.squared_relu(c2)?;
    let s = g.shape(c2);
    let flat = g.reshape(c2, vec![s[0], s[1] * s[2]])?;
    let proj = g.linear(flat, b[p.proj_w])?;
    g.add_row(proj, b[p.proj_b])
}

pub fn conv_subsample<T: Scalar>(store: &ParamStore<T>, p: &SubsampleParams, features: &Tensor<T>) -> Result<Tensor<T>> {
    let g = Graph::new();
    let b = store.bind(&g)?;
    let x = g.constant(features.clone())?;
    let out = conv_subsample_graph(&g, &b, p, x)?;
    let v = g.value(out).clone();
    Ok(v)
}

/// Frame-at-a-time subsampling with a fixed three-row window per convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingSubsampler<T> {
    raw: [Vec<T>; 3],
    raw_seen: u64,
    conv1: [Vec<T>; 3],
    conv1_seen: u64,
}

impl<T: Scalar> StreamingSubsampler<T> {
    pub fn new(p: &SubsampleParams) -> Self {
        let c1 = p.conv1_row_len();
        Self {
            raw: std::array::from_fn(|_| vec![T::zero(); p.feat_dim]),
            raw_seen: 0,
            conv1: std::array::from_fn(|_| vec![T::zero(); c1]),
            conv1_seen: 0,
        }
    }

    /// Feeds one feature frame; returns an encoder input frame whenever one completes.
    pub fn push(&mut self, store: &ParamStore<T>, p: &SubsampleParams, frame: &[T]) -> Result<Option<Vec<T>>> {
        if frame.len() != p.feat_dim {
            return Err(shape_err("subsample", format!("frame width {} vs {}", frame.len(), p.feat_dim)));
        }
        let n = self.raw_seen;
        self.raw[(n % 3) as usize].copy_from_slice(frame);
        self.raw_seen += 1;
        if n < 2 || !n.is_multiple_of(2) {
            return Ok(None);
        }
        let slot = |i: u64| (i % 3) as usize;
        let row1: Vec<T> = conv_row(
            [&self.raw[slot(n - 2)], &self.raw[slot(n - 1)], &self.raw[slot(n)]],
            p.feat_dim,
            1,
            store.get(p.conv1_kernel),
            store.get(p.conv1_bias).data(),
        )
        .into_iter()
        .map(squared_relu_scalar)
        .collect();
        let i = self.conv1_seen;
        self.conv1[slot(i)].copy_from_slice(&row1);
        self.conv1_seen += 1;
        if i < 2 || !i.is_multiple_of(2) {
            return Ok(None);
        }
        let row2: Vec<T> = conv_row(
            [&self.conv1[slot(i - 2)], &self.conv1[slot(i - 1)], &self.conv1[slot(i)]],
            conv_out(p.feat_dim),
            p.channels,
            store.get(p.conv2_kernel),
            store.get(p.conv2_bias).data(),
        )
        .into_iter()
        .map(squared_relu_scalar)
        .collect();
        let proj = matvec(store.get(p.proj_w), &row2);
        Ok(Some(
            proj.iter()
                .zip(store.get(p.proj_b).data())
                .map(|(&a, &b)| a + b)
                .collect(),
        ))
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.raw_seen.to_le_bytes());
        out.extend_from_slice(&self.conv1_seen.to_le_bytes());
        for row in self.raw.iter().chain(&self.conv1) {
            for &x in row {
                x.write_le(out);
            }
        }
    }

    pub fn byte_size(p: &SubsampleParams) -> usize {
        16 + 3 * (p.feat_dim + p.conv1_row_len()) * T::DTYPE.size()
    }

    pub fn read_bytes(p: &SubsampleParams, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::byte_size(p) {
            return Err(Error::Invalid("subsampler state has the wrong size".into()));
        }
        let raw_seen = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes"));
        let conv1_seen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let mut vals = bytes[16..].chunks_exact(T::DTYPE.size()).map(T::read_le);
        let mut take = |n: usize| -> Vec<T> { vals.by_ref().take(n).collect() };
        let raw = std::array::from_fn(|_| take(p.feat_dim));
        let conv1 = std::array::from_fn(|_| take(p.conv1_row_len()));
        Ok(Self {
            raw,
            raw_seen,
            conv1,
            conv1_seen,
        })
    }
}
