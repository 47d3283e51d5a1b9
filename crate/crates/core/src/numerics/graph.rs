//! Taped reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation evaluates eagerly and appends a node recording its inputs.
//! [`Graph::backward`] walks the tape once in reverse, accumulating adjoints.
//! Leaves get gradients; constants do not.

use std::cell::{Ref, RefCell};

use crate::error::{shape_err, Error, Result};
use crate::numerics::kernels;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a hand-written vector-Jacobian product, registered by
/// modules that need fused kernels (wkv, convolution).
pub trait CustomOp<T: Scalar> {
    fn name(&self) -> &'static str;

    /// Returns one adjoint per input (`None` when the input receives no gradient).
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Scalar> {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Linear(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Tensor<T>),
    Scale(Var, T),
    AddConst(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    SquaredRelu(Var),
    Abs(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    LogAddExp(Var, Var),
    Sum(Var),
    ShiftRows(Var),
    Mix { x: Var, prev: Var, mu: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, eps: T },
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    Row(Var, usize),
    ConcatRows(Vec<Var>),
    PairSum(Var, Var, Vec<(usize, usize)>),
    Pick(Var, Vec<usize>),
    Custom(Box<dyn CustomOp<T>>, Vec<Var>),
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded forward computation.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value.item()
    }

    fn push(&self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Ok(Var(nodes.len() - 1))
    }

    /// Differentiable input (parameter or input tensor).
    pub fn leaf(&self, t: Tensor<T>) -> Result<Var> {
        self.push("leaf", t, Op::Leaf)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, t: Tensor<T>) -> Result<Var> {
        self.push("constant", t, Op::Constant)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(&self.value(a), &self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b))
    }

    /// `x · wᵀ` with `w` stored as `out × in`.
    pub fn linear(&self, x: Var, w: Var) -> Result<Var> {
        let out = kernels::linear(&self.value(x), &self.value(w))?;
        self.push("linear", out, Op::Linear(x, w))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(&self.value(b), "add", |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(&self.value(b), "sub", |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(&self.value(b), "mul", |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    /// Adds a length-`n` vector to every row of `a[m×n]`.
    pub fn add_row(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            if bv.len() != av.cols() {
                return Err(shape_err(
                    "add_row",
                    format!("{:?} + {:?}", av.shape(), bv.shape()),
                ));
            }
            let mut out = av.clone();
            let c = av.cols();
            for row in out.data_mut().chunks_mut(c) {
                for (o, &x) in row.iter_mut().zip(bv.data()) {
                    *o += x;
                }
            }
            out
        };
        self.push("add_row", out, Op::AddRow(a, b))
    }

    /// Elementwise product with a fixed tensor (dropout masks).
    pub fn mul_const(&self, a: Var, mask: Tensor<T>) -> Result<Var> {
        let out = self.value(a).zip_map(&mask, "mul_const", |x, y| x * y)?;
        self.push("mul_const", out, Op::MulConst(a, mask))
    }

    pub fn scale(&self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push("scale", out, Op::Scale(a, s))
    }

    pub fn add_const(&self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        self.push("add_const", out, Op::AddConst(a))
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        let out = kernels::sigmoid(&self.value(a));
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        let out = kernels::tanh(&self.value(a));
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::exp);
        self.push("exp", out, Op::Exp(a))
    }

    pub fn squared_relu(&self, a: Var) -> Result<Var> {
        let out = kernels::squared_relu(&self.value(a));
        self.push("squared_relu", out, Op::SquaredRelu(a))
    }

    pub fn abs(&self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::abs);
        self.push("abs", out, Op::Abs(a))
    }

    /// Row-wise log-softmax (a rank-1 input is one row).
    pub fn log_softmax(&self, a: Var) -> Result<Var> {
        let out = kernels::log_softmax(&self.value(a));
        self.push("log_softmax", out, Op::LogSoftmax(a))
    }

    /// Scalar `log Σ exp` over all entries.
    pub fn logsumexp(&self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(kernels::logsumexp(&self.value(a)));
        self.push("logsumexp", out, Op::LogSumExp(a))
    }

    /// `log(e^a + e^b)` for scalars.
    pub fn logaddexp(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            if av.len() != 1 || bv.len() != 1 {
                return Err(shape_err("logaddexp", "operands must be scalars"));
            }
            Tensor::scalar(kernels::logaddexp(av.item(), bv.item()))
        };
        self.push("logaddexp", out, Op::LogAddExp(a, b))
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a))
    }

    /// Row `i` of the output is row `i − 1` of the input; row 0 is zero.
    pub fn shift_rows(&self, a: Var) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if av.rank() != 2 {
                return Err(shape_err("shift_rows", format!("{:?}", av.shape())));
            }
            let c = av.cols();
            let mut out = Tensor::zeros(av.shape());
            let n = av.len();
            if n > c {
                out.data_mut()[c..].copy_from_slice(&av.data()[..n - c]);
            }
            out
        };
        self.push("shift_rows", out, Op::ShiftRows(a))
    }

    /// Row-wise `mu ⊙ x + (1 − mu) ⊙ prev`.
    pub fn mix(&self, x: Var, prev: Var, mu: Var) -> Result<Var> {
        let out = {
            let (xv, pv, mv) = (self.value(x), self.value(prev), self.value(mu));
            if xv.shape() != pv.shape() || mv.len() != xv.cols() {
                return Err(shape_err(
                    "mix",
                    format!("{:?} / {:?} / {:?}", xv.shape(), pv.shape(), mv.shape()),
                ));
            }
            let c = xv.cols();
            let mut data = Vec::with_capacity(xv.len());
            for (xr, pr) in xv.data().chunks(c).zip(pv.data().chunks(c)) {
                data.extend(kernels::token_shift(xr, pr, mv.data())?);
            }
            Tensor::new(xv.shape().to_vec(), data)?
        };
        self.push("mix", out, Op::Mix { x, prev, mu })
    }

    /// Per-row layer normalization with learnable gain and bias.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let out = {
            let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
            let c = xv.cols();
            if gv.len() != c || bv.len() != c {
                return Err(shape_err("layer_norm", format!("{:?}", xv.shape())));
            }
            let mut data = Vec::with_capacity(xv.len());
            for row in xv.data().chunks(c) {
                data.extend(kernels::layer_norm_row(row, gv.data(), bv.data(), eps));
            }
            Tensor::new(xv.shape().to_vec(), data)?
        };
        self.push("layer_norm", out, Op::LayerNorm { x, gain, bias, eps })
    }

    pub fn reshape(&self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(a))
    }

    /// Embedding lookup: rows `idx` of `table`.
    pub fn gather_rows(&self, table: Var, idx: Vec<usize>) -> Result<Var> {
        let out = {
            let tv = self.value(table);
            let c = tv.cols();
            let mut data = Vec::with_capacity(idx.len() * c);
            for &i in &idx {
                if i >= tv.rows() {
                    return Err(shape_err("gather_rows", format!("row {i} of {}", tv.rows())));
                }
                data.extend_from_slice(tv.row(i));
            }
            Tensor::new(vec![idx.len(), c], data)?
        };
        self.push("gather_rows", out, Op::GatherRows(table, idx))
    }

    /// Row `i` as a `[1×n]` tensor.
    pub fn row(&self, a: Var, i: usize) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if i >= av.rows() {
                return Err(shape_err("row", format!("row {i} of {}", av.rows())));
            }
            Tensor::new(vec![1, av.cols()], av.row(i).to_vec())?
        };
        self.push("row", out, Op::Row(a, i))
    }

    /// Stacks equal-width rows (each `[n]` or `[1×n]`) into `[k×n]`.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let c = parts
                .first()
                .map(|p| nodes[p.0].value.len())
                .ok_or_else(|| shape_err("concat_rows", "no rows"))?;
            let mut data = Vec::with_capacity(c * parts.len());
            for p in parts {
                let v = &nodes[p.0].value;
                if v.len() != c {
                    return Err(shape_err("concat_rows", "ragged rows"));
                }
                data.extend_from_slice(v.data());
            }
            Tensor::new(vec![parts.len(), c], data)?
        };
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()))
    }

    /// For each `(i, j)` the row `a[i] + b[j]`: the joint network's combination of
    /// encoder and predictor projections over selected lattice cells.
    pub fn pair_sum(&self, a: Var, b: Var, pairs: Vec<(usize, usize)>) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            let c = av.cols();
            if bv.cols() != c {
                return Err(shape_err(
                    "pair_sum",
                    format!("{:?} / {:?}", av.shape(), bv.shape()),
                ));
            }
            let mut data = Vec::with_capacity(pairs.len() * c);
            for &(i, j) in &pairs {
                if i >= av.rows() || j >= bv.rows() {
                    return Err(shape_err("pair_sum", format!("pair ({i},{j}) out of range")));
                }
                data.extend(av.row(i).iter().zip(bv.row(j)).map(|(&x, &y)| x + y));
            }
            Tensor::new(vec![pairs.len(), c], data)?
        };
        self.push("pair_sum", out, Op::PairSum(a, b, pairs))
    }

    /// Gathers flat (row-major) positions into a vector.
    pub fn pick(&self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let out = {
            let av = self.value(a);
            let mut data = Vec::with_capacity(idx.len());
            for &i in &idx {
                data.push(
                    *av.data()
                        .get(i)
                        .ok_or_else(|| shape_err("pick", format!("index {i} of {}", av.len())))?,
                );
            }
            Tensor::vector(data)
        };
        self.push("pick", out, Op::Pick(a, idx))
    }

    /// One flat position as a scalar.
    pub fn element(&self, a: Var, i: usize) -> Result<Var> {
        let out = {
            let av = self.value(a);
            let v = *av
                .data()
                .get(i)
                .ok_or_else(|| shape_err("element", format!("index {i} of {}", av.len())))?;
            Tensor::scalar(v)
        };
        self.push("element", out, Op::Pick(a, vec![i]))
    }

    pub fn custom(&self, op: Box<dyn CustomOp<T>>, inputs: &[Var], output: Tensor<T>) -> Result<Var> {
        let name = op.name();
        self.push(name, output, Op::Custom(op, inputs.to_vec()))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let lv = &nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |v: Var| &nodes[v.0].value;
            if matches!(node.op, Op::Leaf | Op::Constant) {
                grads[id] = Some(g);
                continue;
            }
            let mut acc = |v: Var, t: Tensor<T>| match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf | Op::Constant => unreachable!(),
                Op::MatMul(a, b) => {
                    acc(*a, reshape_like(kernels::linear(&g, val(*b))?, val(*a)));
                    acc(*b, reshape_like(kernels::matmul_tn(val(*a), &g)?, val(*b)));
                }
                Op::Linear(x, w) => {
                    acc(*x, reshape_like(kernels::matmul(&g, val(*w))?, val(*x)));
                    acc(*w, kernels::matmul_tn(&g, val(*x))?);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(val(*b), "mul", |x, y| x * y)?);
                    acc(*b, g.zip_map(val(*a), "mul", |x, y| x * y)?);
                }
                Op::AddRow(a, b) => {
                    let bv = val(*b);
                    let mut gb = vec![T::zero(); bv.len()];
                    for row in g.data().chunks(bv.len()) {
                        for (s, &x) in gb.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    acc(*b, Tensor::new(bv.shape().to_vec(), gb)?);
                    acc(*a, g);
                }
                Op::MulConst(a, m) => acc(*a, g.zip_map(m, "mul_const", |x, y| x * y)?),
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(*a, g.map(|x| x * s));
                }
                Op::AddConst(a) => acc(*a, g),
                Op::Sigmoid(a) => {
                    acc(*a, g.zip_map(&node.value, "sigmoid", |d, y| d * y * (T::one() - y))?)
                }
                Op::Tanh(a) => {
                    acc(*a, g.zip_map(&node.value, "tanh", |d, y| d * (T::one() - y * y))?)
                }
                Op::Exp(a) => acc(*a, g.zip_map(&node.value, "exp", |d, y| d * y)?),
                Op::SquaredRelu(a) => {
                    let two = T::one() + T::one();
                    acc(
                        *a,
                        g.zip_map(val(*a), "squared_relu", |d, x| d * two * x.max(T::zero()))?,
                    )
                }
                Op::Abs(a) => acc(
                    *a,
                    g.zip_map(val(*a), "abs", |d, x| {
                        if x > T::zero() {
                            d
                        } else if x < T::zero() {
                            -d
                        } else {
                            T::zero()
                        }
                    })?,
                ),
                Op::LogSoftmax(a) => {
                    let c = node.value.cols();
                    let mut out = Vec::with_capacity(g.len());
                    for (gr, yr) in g.data().chunks(c).zip(node.value.data().chunks(c)) {
                        let s: T = gr.iter().copied().sum();
                        out.extend(gr.iter().zip(yr).map(|(&d, &y)| d - y.exp() * s));
                    }
                    acc(*a, Tensor::new(node.value.shape().to_vec(), out)?);
                }
                Op::LogSumExp(a) => {
                    let (d, y) = (g.item(), node.value.item());
                    acc(*a, val(*a).map(|x| d * (x - y).exp()));
                }
                Op::LogAddExp(a, b) => {
                    let (d, y) = (g.item(), node.value.item());
                    let ga = d * (val(*a).item() - y).exp();
                    let gb = d * (val(*b).item() - y).exp();
                    acc(*a, Tensor::full(val(*a).shape(), ga));
                    acc(*b, Tensor::full(val(*b).shape(), gb));
                }
                Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
                Op::ShiftRows(a) => {
                    let c = g.cols();
                    let n = g.len();
                    let mut out = Tensor::zeros(g.shape());
                    if n > c {
                        out.data_mut()[..n - c].copy_from_slice(&g.data()[c..]);
                    }
                    acc(*a, out);
                }
                Op::Mix { x, prev, mu } => {
                    let mv = val(*mu).data();
                    let (xv, pv) = (val(*x), val(*prev));
                    let c = mv.len();
                    let mut gx = Vec::with_capacity(g.len());
                    let mut gp = Vec::with_capacity(g.len());
                    let mut gm = vec![T::zero(); c];
                    for r in 0..g.rows() {
                        for j in 0..c {
                            let d = g.data()[r * c + j];
                            gx.push(d * mv[j]);
                            gp.push(d * (T::one() - mv[j]));
                            gm[j] += d * (xv.data()[r * c + j] - pv.data()[r * c + j]);
                        }
                    }
                    acc(*x, Tensor::new(g.shape().to_vec(), gx)?);
                    acc(*prev, Tensor::new(g.shape().to_vec(), gp)?);
                    acc(*mu, Tensor::new(val(*mu).shape().to_vec(), gm)?);
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let (xv, gv) = (val(*x), val(*gain).data());
                    let c = gv.len();
                    let n = T::from_usize(c).unwrap();
                    let mut gx = Vec::with_capacity(xv.len());
                    let mut gg = vec![T::zero(); c];
                    let mut gb = vec![T::zero(); c];
                    for (xr, dr) in xv.data().chunks(c).zip(g.data().chunks(c)) {
                        let (mean, rstd) = kernels::row_stats(xr, *eps);
                        let xhat: Vec<T> = xr.iter().map(|&v| (v - mean) * rstd).collect();
                        let dxhat: Vec<T> = dr.iter().zip(gv).map(|(&d, &w)| d * w).collect();
                        let m1 = dxhat.iter().copied().sum::<T>() / n;
                        let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
                        for j in 0..c {
                            gg[j] += dr[j] * xhat[j];
                            gb[j] += dr[j];
                            gx.push(rstd * (dxhat[j] - m1 - xhat[j] * m2));
                        }
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                    acc(*gain, Tensor::new(val(*gain).shape().to_vec(), gg)?);
                    acc(*bias, Tensor::new(val(*bias).shape().to_vec(), gb)?);
                }
                Op::Reshape(a) => acc(*a, g.reshape(val(*a).shape().to_vec())?),
                Op::GatherRows(t, idx) => {
                    let tv = val(*t);
                    let mut out = Tensor::zeros(tv.shape());
                    let c = tv.cols();
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, &d) in out.row_mut(i).iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                            *o += d;
                        }
                    }
                    acc(*t, out);
                }
                Op::Row(a, i) => {
                    let mut out = Tensor::zeros(val(*a).shape());
                    out.row_mut(*i).copy_from_slice(g.data());
                    acc(*a, out);
                }
                Op::ConcatRows(parts) => {
                    let c = g.cols();
                    for (r, p) in parts.iter().enumerate() {
                        let t = Tensor::new(
                            val(*p).shape().to_vec(),
                            g.data()[r * c..(r + 1) * c].to_vec(),
                        )?;
                        acc(*p, t);
                    }
                }
                Op::PairSum(a, b, pairs) => {
                    let (av, bv) = (val(*a), val(*b));
                    let c = av.cols();
                    let mut ga = Tensor::zeros(av.shape());
                    let mut gb = Tensor::zeros(bv.shape());
                    for (r, &(i, j)) in pairs.iter().enumerate() {
                        let dr = &g.data()[r * c..(r + 1) * c];
                        for (o, &d) in ga.row_mut(i).iter_mut().zip(dr) {
                            *o += d;
                        }
                        for (o, &d) in gb.row_mut(j).iter_mut().zip(dr) {
                            *o += d;
                        }
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Pick(a, idx) => {
                    let mut out = Tensor::zeros(val(*a).shape());
                    for (&i, &d) in idx.iter().zip(g.data()) {
                        out.data_mut()[i] += d;
                    }
                    acc(*a, out);
                }
                Op::Custom(op, inputs) => {
                    let ins: Vec<&Tensor<T>> = inputs.iter().map(|v| val(*v)).collect();
                    for (v, gi) in inputs.iter().zip(op.backward(&ins, &node.value, &g)) {
                        if let Some(gi) = gi {
                            acc(*v, gi);
                        }
                    }
                }
            }
        }
        let leaf: Vec<bool> = nodes.iter().map(|n| matches!(n.op, Op::Leaf)).collect();
        Ok(Gradients { grads, leaf })
    }
}

fn reshape_like<T: Scalar>(g: Tensor<T>, like: &Tensor<T>) -> Tensor<T> {
    if g.shape() == like.shape() {
        g
    } else {
        g.reshape(like.shape().to_vec()).expect("same element count")
    }
}

/// Adjoints of every leaf after [`Graph::backward`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    leaf: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`; exactly zero when `v` did not influence the loss.
    pub fn wrt(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) if self.leaf[v.0] => g.clone(),
            _ => Tensor::zeros(shape),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if self.leaf.get(v.0).copied().unwrap_or(false) {
            self.grads[v.0].as_ref()
        } else {
            None
        }
    }
}
