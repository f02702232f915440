use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::{axis_split, broadcast_offsets, broadcast_shape, reduce_to, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    BroadcastTo(usize),
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
    },
    Relu(usize),
    Sigmoid(usize),
    Softmax(usize, usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize),
    MaxAxis(usize, usize, Vec<usize>),
    Concat(Vec<usize>, usize),
    AvgPool {
        x: usize,
        k: usize,
        stride: usize,
    },
    MaxPool {
        x: usize,
        argmax: Vec<usize>,
    },
    Resize(usize),
    L1(usize, usize),
    Mse(usize, usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations. Node ids grow in creation order, so a
/// reverse sweep over ids is a reverse topological traversal.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.shape().as_slice()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.leaf(t, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.leaf(t, false)
    }

    fn leaf(&self, t: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(t),
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn push(&self, name: &str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var<'_>> {
        value.check_finite(name)?;
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(loss.tape, self), "loss from another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, gi) in backward_op(&nodes, node, &g) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&gi),
                    slot => *slot = Some(gi),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::shape(op, a, b)
}

fn binary_broadcast(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| shape_err(op, a.shape(), b.shape()))?;
    let oa = broadcast_offsets(&out, a.shape());
    let ob = broadcast_offsets(&out, b.shape());
    let data = oa.iter().zip(&ob).map(|(&i, &j)| f(a.data()[i], b.data()[j])).collect();
    Tensor::new(out, data)
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn backward_op(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let y = &node.value;
    match &node.op {
        Op::Leaf => vec![],
        Op::Add(a, b) => vec![(*a, reduce_to(g, val(*a).shape())), (*b, reduce_to(g, val(*b).shape()))],
        Op::Sub(a, b) => vec![
            (*a, reduce_to(g, val(*a).shape())),
            (*b, reduce_to(&g.map(|v| -v), val(*b).shape())),
        ],
        Op::Mul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let ga = binary_broadcast("mul", g, tb, |x, y| x * y).expect("broadcast");
            let gb = binary_broadcast("mul", g, ta, |x, y| x * y).expect("broadcast");
            vec![(*a, reduce_to(&ga, ta.shape())), (*b, reduce_to(&gb, tb.shape()))]
        }
        Op::Scale(a, s) => vec![(*a, g.map(|v| v * s))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
            let ga = kernels::matmul_bt(g.data(), tb.data(), m, n, k);
            let gb = kernels::matmul_at(ta.data(), g.data(), m, k, n);
            vec![
                (*a, Tensor::new([m, k], ga).expect("shape")),
                (*b, Tensor::new([k, n], gb).expect("shape")),
            ]
        }
        Op::Transpose(a) => {
            let (m, n) = (val(*a).shape()[0], val(*a).shape()[1]);
            vec![(
                *a,
                Tensor::new([m, n], kernels::transpose(g.data(), n, m)).expect("shape"),
            )]
        }
        Op::Reshape(a) => vec![(*a, g.reshape(val(*a).shape()).expect("shape"))],
        Op::BroadcastTo(a) => vec![(*a, reduce_to(g, val(*a).shape()))],
        Op::Conv2d { x, w, b, geom } => {
            let tw = val(*w);
            let o = tw.shape()[0];
            let ck = geom.c * geom.kh * geom.kw;
            let (ho, wo) = geom.out_hw().expect("geometry");
            let cols = kernels::im2col(val(*x).data(), geom);
            let gw = kernels::matmul_bt(g.data(), &cols, o, ho * wo, ck);
            let gcols = kernels::matmul_at(tw.data(), g.data(), o, ck, ho * wo);
            let gx = kernels::col2im(&gcols, geom);
            let mut out = vec![
                (*x, Tensor::new([geom.c, geom.h, geom.w], gx).expect("shape")),
                (*w, Tensor::new(tw.shape(), gw).expect("shape")),
            ];
            if let Some(b) = b {
                let gb = g.data().chunks(ho * wo).map(|r| r.iter().sum()).collect();
                out.push((*b, Tensor::new([o], gb).expect("shape")));
            }
            out
        }
        Op::Relu(a) => {
            let ga = val(*a)
                .data()
                .iter()
                .zip(g.data())
                .map(|(&x, &gv)| if x > 0.0 { gv } else { 0.0 })
                .collect();
            vec![(*a, Tensor::new(g.shape(), ga).expect("shape"))]
        }
        Op::Sigmoid(a) => {
            let ga = y
                .data()
                .iter()
                .zip(g.data())
                .map(|(&s, &gv)| gv * s * (1.0 - s))
                .collect();
            vec![(*a, Tensor::new(g.shape(), ga).expect("shape"))]
        }
        Op::Softmax(a, axis) => {
            let (outer, n, inner) = axis_split(y.shape(), *axis);
            let mut ga = vec![0.0; y.numel()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * n + k) * inner + i;
                    let dot: f64 = (0..n).map(|k| g.data()[idx(k)] * y.data()[idx(k)]).sum();
                    for k in 0..n {
                        ga[idx(k)] = y.data()[idx(k)] * (g.data()[idx(k)] - dot);
                    }
                }
            }
            vec![(*a, Tensor::new(y.shape(), ga).expect("shape"))]
        }
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.data()[0]))],
        Op::Mean(a) => {
            let n = val(*a).numel() as f64;
            vec![(*a, Tensor::full(val(*a).shape(), g.data()[0] / n))]
        }
        Op::SumAxis(a) => vec![(*a, reduce_to_inverse(g, val(*a).shape()))],
        Op::MaxAxis(a, axis, argmax) => {
            let shape = val(*a).shape();
            let (_, n, inner) = axis_split(shape, *axis);
            let mut ga = vec![0.0; val(*a).numel()];
            for (j, (&k, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                let (o, i) = (j / inner, j % inner);
                ga[(o * n + k) * inner + i] += gv;
            }
            vec![(*a, Tensor::new(shape, ga).expect("shape"))]
        }
        Op::Concat(inputs, axis) => {
            let (outer, total, inner) = axis_split(y.shape(), *axis);
            let mut start = 0;
            inputs
                .iter()
                .map(|&i| {
                    let shape = val(i).shape();
                    let n = shape[*axis];
                    let mut gi = Vec::with_capacity(val(i).numel());
                    for o in 0..outer {
                        let base = (o * total + start) * inner;
                        gi.extend_from_slice(&g.data()[base..base + n * inner]);
                    }
                    start += n;
                    (i, Tensor::new(shape, gi).expect("shape"))
                })
                .collect()
        }
        Op::AvgPool { x, k, stride } => {
            let s = val(*x).shape();
            let (c, h, w) = (s[0], s[1], s[2]);
            let (ho, wo) = (y.shape()[1], y.shape()[2]);
            let mut gx = vec![0.0; c * h * w];
            let norm = 1.0 / (k * k) as f64;
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = g.data()[(ch * ho + oy) * wo + ox] * norm;
                        for dy in 0..*k {
                            for dx in 0..*k {
                                gx[(ch * h + oy * stride + dy) * w + ox * stride + dx] += gv;
                            }
                        }
                    }
                }
            }
            vec![(*x, Tensor::new(s, gx).expect("shape"))]
        }
        Op::MaxPool { x, argmax } => {
            let mut gx = vec![0.0; val(*x).numel()];
            for (&src, &gv) in argmax.iter().zip(g.data()) {
                gx[src] += gv;
            }
            vec![(*x, Tensor::new(val(*x).shape(), gx).expect("shape"))]
        }
        Op::Resize(x) => {
            let s = val(*x).shape();
            let gx = kernels::resize_backward(g.data(), s[0], s[1], s[2], y.shape()[1], y.shape()[2]);
            vec![(*x, Tensor::new(s, gx).expect("shape"))]
        }
        Op::L1(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let scale = g.data()[0] / ta.numel() as f64;
            let ga: Vec<f64> = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| scale * sign(x - y))
                .collect();
            let gb = ga.iter().map(|v| -v).collect();
            vec![
                (*a, Tensor::new(ta.shape(), ga).expect("shape")),
                (*b, Tensor::new(tb.shape(), gb).expect("shape")),
            ]
        }
        Op::Mse(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let scale = 2.0 * g.data()[0] / ta.numel() as f64;
            let ga: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| scale * (x - y)).collect();
            let gb = ga.iter().map(|v| -v).collect();
            vec![
                (*a, Tensor::new(ta.shape(), ga).expect("shape")),
                (*b, Tensor::new(tb.shape(), gb).expect("shape")),
            ]
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Broadcasts a keep-dim reduction gradient back to the source shape.
fn reduce_to_inverse(g: &Tensor, shape: &[usize]) -> Tensor {
    let offs = broadcast_offsets(shape, g.shape());
    Tensor::new(shape, offs.iter().map(|&o| g.data()[o]).collect()).expect("shape")
}

// Arithmetic is fallible (broadcast errors), so it stays out of std::ops.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Convenience for one-element results.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let out = binary_broadcast(name, &self.value(), &other.value(), f)?;
        self.tape.push(name, out, op(self.id, other.id), &[self.id, other.id])
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>> {
        let out = self.value().map(|v| v * s);
        self.tape.push("scale", out, Op::Scale(self.id, s), &[self.id])
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'t>> {
        let out = self.value().map(|v| v + s);
        self.tape.push("add_scalar", out, Op::AddScalar(self.id), &[self.id])
    }

    /// `[m,k] · [k,n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let ok = a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0];
        if !ok {
            return Err(shape_err("matmul", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let out = Tensor::new([m, n], kernels::matmul(a.data(), b.data(), m, k, n))?;
        self.tape
            .push("matmul", out, Op::MatMul(self.id, other.id), &[self.id, other.id])
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(shape_err("transpose", a.shape(), &[]));
        }
        let (m, n) = (a.shape()[0], a.shape()[1]);
        let out = Tensor::new([n, m], kernels::transpose(a.data(), m, n))?;
        self.tape.push("transpose", out, Op::Transpose(self.id), &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        let out = a.reshape(shape).map_err(|_| shape_err("reshape", a.shape(), shape))?;
        self.tape.push("reshape", out, Op::Reshape(self.id), &[self.id])
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if broadcast_shape(a.shape(), shape).as_deref() != Some(shape) {
            return Err(shape_err("broadcast_to", a.shape(), shape));
        }
        let data = broadcast_offsets(shape, a.shape())
            .iter()
            .map(|&o| a.data()[o])
            .collect();
        let out = Tensor::new(shape, data)?;
        self.tape
            .push("broadcast_to", out, Op::BroadcastTo(self.id), &[self.id])
    }

    /// Cross-correlation of `self[c,h,w]` with `weight[o,c,kh,kw]`, zero padding.
    pub fn conv2d(self, weight: Var<'t>, bias: Option<Var<'t>>, stride: usize, pad: usize) -> Result<Var<'t>> {
        self.same_tape(&weight);
        let (x, w) = (self.value(), weight.value());
        if x.rank() != 3 || w.rank() != 4 || w.shape()[1] != x.shape()[0] {
            return Err(shape_err("conv2d", x.shape(), w.shape()));
        }
        let o = w.shape()[0];
        let geom = ConvGeom {
            c: x.shape()[0],
            h: x.shape()[1],
            w: x.shape()[2],
            kh: w.shape()[2],
            kw: w.shape()[3],
            stride,
            pad,
        };
        let (ho, wo) = geom.out_hw().ok_or_else(|| shape_err("conv2d", x.shape(), w.shape()))?;
        let cols = kernels::im2col(x.data(), &geom);
        let ck = geom.c * geom.kh * geom.kw;
        let mut data = kernels::matmul(w.data(), &cols, o, ck, ho * wo);
        let mut inputs = vec![self.id, weight.id];
        if let Some(b) = bias {
            self.same_tape(&b);
            let bv = b.value();
            if bv.shape() != [o] {
                return Err(shape_err("conv2d bias", bv.shape(), &[o]));
            }
            for (row, bo) in data.chunks_mut(ho * wo).zip(bv.data()) {
                row.iter_mut().for_each(|v| *v += bo);
            }
            inputs.push(b.id);
        }
        let out = Tensor::new([o, ho, wo], data)?;
        let op = Op::Conv2d {
            x: self.id,
            w: weight.id,
            b: bias.map(|b| b.id),
            geom,
        };
        self.tape.push("conv2d", out, op, &inputs)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        let out = self.value().map(|v| v.max(0.0));
        self.tape.push("relu", out, Op::Relu(self.id), &[self.id])
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        let out = self.value().map(sigmoid);
        self.tape.push("sigmoid", out, Op::Sigmoid(self.id), &[self.id])
    }

    fn check_axis(&self, op: &str, axis: usize) -> Result<Rc<Tensor>> {
        let a = self.value();
        if axis >= a.rank() {
            return Err(Error::InvalidArgument(format!(
                "{op}: axis {axis} out of range for shape {:?}",
                a.shape()
            )));
        }
        Ok(a)
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let a = self.check_axis("softmax", axis)?;
        let (outer, n, inner) = axis_split(a.shape(), axis);
        let mut out = vec![0.0; a.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let max = (0..n).map(|k| a.data()[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..n {
                    let e = (a.data()[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    total += e;
                }
                for k in 0..n {
                    out[idx(k)] /= total;
                }
            }
        }
        let out = Tensor::new(a.shape(), out)?;
        self.tape.push("softmax", out, Op::Softmax(self.id, axis), &[self.id])
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let out = Tensor::scalar(self.value().sum());
        self.tape.push("sum", out, Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let out = Tensor::scalar(self.value().mean());
        self.tape.push("mean", out, Op::Mean(self.id), &[self.id])
    }

    fn keepdim_shape(shape: &[usize], axis: usize) -> Vec<usize> {
        let mut s = shape.to_vec();
        s[axis] = 1;
        s
    }

    /// Sum along `axis`, keeping it with length 1.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let a = self.check_axis("sum_axis", axis)?;
        let (outer, n, inner) = axis_split(a.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &a.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let out = Tensor::new(Self::keepdim_shape(a.shape(), axis), out)?;
        self.tape.push("sum_axis", out, Op::SumAxis(self.id), &[self.id])
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        let n = self.check_axis("mean_axis", axis)?.shape()[axis];
        self.sum_axis(axis)?.scale(1.0 / n as f64)
    }

    /// Max along `axis`, keeping it with length 1. Ties route the gradient
    /// to the first maximum.
    pub fn max_axis(self, axis: usize) -> Result<Var<'t>> {
        let a = self.check_axis("max_axis", axis)?;
        let (outer, n, inner) = axis_split(a.shape(), axis);
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    let v = a.data()[(o * n + k) * inner + i];
                    let j = o * inner + i;
                    if v > out[j] {
                        out[j] = v;
                        argmax[j] = k;
                    }
                }
            }
        }
        let out = Tensor::new(Self::keepdim_shape(a.shape(), axis), out)?;
        self.tape
            .push("max_axis", out, Op::MaxAxis(self.id, axis, argmax), &[self.id])
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let values: Vec<Rc<Tensor>> = parts
            .iter()
            .map(|p| {
                first.same_tape(p);
                p.value()
            })
            .collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidArgument(format!(
                "concat: axis {axis} out of range for shape {base:?}"
            )));
        }
        for v in &values[1..] {
            let s = v.shape();
            let ok = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !ok {
                return Err(shape_err("concat", &base, s));
            }
        }
        let total: usize = values.iter().map(|v| v.shape()[axis]).sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let n = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let out = Tensor::new(shape, data)?;
        first.tape.push("concat", out, Op::Concat(ids.clone(), axis), &ids)
    }

    fn chw(&self, op: &'static str) -> Result<(Rc<Tensor>, usize, usize, usize)> {
        let a = self.value();
        if a.rank() != 3 {
            return Err(shape_err(op, a.shape(), &[0, 0, 0]));
        }
        let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        Ok((a, c, h, w))
    }

    pub fn avg_pool2d(self, k: usize, stride: usize) -> Result<Var<'t>> {
        let (a, c, h, w) = self.chw("avg_pool2d")?;
        let (ho, wo) = kernels::pool_out(h, w, k, stride).ok_or_else(|| shape_err("avg_pool2d", a.shape(), &[k, k]))?;
        let mut out = vec![0.0; c * ho * wo];
        let norm = 1.0 / (k * k) as f64;
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            s += a.data()[(ch * h + oy * stride + dy) * w + ox * stride + dx];
                        }
                    }
                    out[(ch * ho + oy) * wo + ox] = s * norm;
                }
            }
        }
        let out = Tensor::new([c, ho, wo], out)?;
        let op = Op::AvgPool { x: self.id, k, stride };
        self.tape.push("avg_pool2d", out, op, &[self.id])
    }

    pub fn max_pool2d(self, k: usize, stride: usize) -> Result<Var<'t>> {
        let (a, c, h, w) = self.chw("max_pool2d")?;
        let (ho, wo) = kernels::pool_out(h, w, k, stride).ok_or_else(|| shape_err("max_pool2d", a.shape(), &[k, k]))?;
        let mut out = vec![f64::NEG_INFINITY; c * ho * wo];
        let mut argmax = vec![0usize; c * ho * wo];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let j = (ch * ho + oy) * wo + ox;
                    for dy in 0..k {
                        for dx in 0..k {
                            let src = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                            if a.data()[src] > out[j] {
                                out[j] = a.data()[src];
                                argmax[j] = src;
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new([c, ho, wo], out)?;
        let op = Op::MaxPool { x: self.id, argmax };
        self.tape.push("max_pool2d", out, op, &[self.id])
    }

    /// Bilinear resize of `[c,h,w]` with half-pixel centers (no corner alignment).
    pub fn resize_bilinear(self, ho: usize, wo: usize) -> Result<Var<'t>> {
        let (a, c, h, w) = self.chw("resize_bilinear")?;
        if ho == 0 || wo == 0 {
            return Err(shape_err("resize_bilinear", a.shape(), &[c, ho, wo]));
        }
        let out = Tensor::new([c, ho, wo], kernels::resize_forward(a.data(), c, h, w, ho, wo))?;
        self.tape.push("resize_bilinear", out, Op::Resize(self.id), &[self.id])
    }

    fn paired(&self, other: &Var<'t>, op: &'static str) -> Result<(Rc<Tensor>, Rc<Tensor>)> {
        self.same_tape(other);
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(shape_err(op, a.shape(), b.shape()));
        }
        Ok((a, b))
    }

    /// Mean absolute difference.
    pub fn l1_loss(self, target: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.paired(&target, "l1_loss")?;
        let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
        let out = Tensor::scalar(s / a.numel() as f64);
        self.tape
            .push("l1_loss", out, Op::L1(self.id, target.id), &[self.id, target.id])
    }

    /// Mean squared difference.
    pub fn mse_loss(self, target: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.paired(&target, "mse_loss")?;
        let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let out = Tensor::scalar(s / a.numel() as f64);
        self.tape
            .push("mse_loss", out, Op::Mse(self.id, target.id), &[self.id, target.id])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_fn(&[2, 3], |i| i as f64));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        assert_eq!(g.wrt(x), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn mse_of_scalar() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let zero = tape.constant(Tensor::scalar(0.0));
        let loss = x.mse_loss(zero).unwrap();
        assert_eq!(tape.backward(loss).unwrap().wrt(x).item().unwrap(), 3.0);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let y = x.mul(x).unwrap().add(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item().unwrap(), 5.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::ones(&[3]));
        assert!(matches!(tape.backward(x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identity_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tape = Tape::new();
        let eye = tape.constant(Tensor::from_fn(&[3, 3], |i| (i % 4 == 0) as u8 as f64));
        let a = Tensor::randn(&[3, 3], &mut rng);
        let out = eye.matmul(tape.constant(a.clone())).unwrap();
        assert_eq!(*out.value(), a);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4, 2]));
        let msg = a.matmul(b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
        assert!(a.add(b).is_err());
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::full(&[2], 1e308));
        assert!(matches!(a.scale(10.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tape = Tape::new();
        let x = tape.constant(Tensor::randn(&[4, 7], &mut rng).map(|v| v * 30.0));
        for axis in [0, 1] {
            let y = x.softmax(axis).unwrap().sum_axis(axis).unwrap().value();
            assert!(y.data().iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tape = Tape::new();
        let x = Tensor::randn(&[2, 6, 5], &mut rng);
        let mut w = Tensor::zeros(&[2, 2, 3, 3]);
        w.data_mut()[4] = 1.0; // out 0 <- in 0 center
        w.data_mut()[9 + 9 + 9 + 4] = 1.0; // out 1 <- in 1 center
        let y = tape
            .constant(x.clone())
            .conv2d(tape.constant(w), None, 1, 1)
            .unwrap()
            .value();
        assert_eq!(*y, x);
    }

    #[test]
    fn concat_and_pools() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(&[1, 2, 2], |i| i as f64));
        let b = tape.constant(Tensor::from_fn(&[1, 2, 2], |i| 10.0 + i as f64));
        let c = Var::concat(&[a, b], 2).unwrap().value();
        assert_eq!(c.shape(), &[1, 2, 4]);
        assert_eq!(c.data(), &[0.0, 1.0, 10.0, 11.0, 2.0, 3.0, 12.0, 13.0]);
        let x = tape.constant(Tensor::from_fn(&[1, 4, 4], |i| i as f64));
        assert_eq!(x.avg_pool2d(2, 2).unwrap().value().data(), &[2.5, 4.5, 10.5, 12.5]);
        assert_eq!(x.max_pool2d(2, 2).unwrap().value().data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn backward_is_bit_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let tape = Tape::new();
            let x = tape.param(Tensor::randn(&[3, 8, 8], &mut rng));
            let w = tape.param(Tensor::randn(&[4, 3, 3, 3], &mut rng));
            let y = x.conv2d(w, None, 2, 1).unwrap().sigmoid().unwrap();
            let loss = y.resize_bilinear(7, 9).unwrap().mean().unwrap();
            let g = tape.backward(loss).unwrap();
            (g.wrt(x), g.wrt(w))
        };
        assert_eq!(run(), run());
    }
}
