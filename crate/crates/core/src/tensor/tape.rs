use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::array::{axis_split, matmul_at_raw, matmul_bt_raw, matmul_raw};
use super::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Sqrt(usize),
    Square(usize),
    Softmax { input: usize, axis: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Narrow { input: usize, axis: usize, start: usize },
    Sum(usize),
    SumAxis { input: usize, axis: usize },
    Mean(usize),
    Conv { input: usize, kernel: usize },
    ChannelMix { input: usize, kernels: usize },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    is_param: bool,
    requires_grad: bool,
}

/// Records operations in evaluation order for reverse-mode differentiation.
///
/// A tape is single-owner; independent tapes may be used from different threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients of a scalar with respect to every registered parameter.
#[derive(Debug, Default)]
pub struct Gradients {
    by_node: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.by_node.get(&var.id)
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Registers a trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, true)
    }

    /// Registers a leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&self, value: Tensor, is_param: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            is_param,
            requires_grad: is_param,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            is_param: false,
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

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(loss.tape, self), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(loss_value.shape()));
        let mut out = Gradients::default();

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.is_param {
                out.by_node.insert(id, g);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            backprop_node(&nodes, node, &g, &mut grads);
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn backprop_node(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| &*nodes[i].value;
    let y = &*node.value;
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, a, g.clone());
            accumulate(grads, nodes, b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, a, g.clone());
            accumulate(grads, nodes, b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            accumulate(grads, nodes, a, zip_map(g, val(b), |x, y| x * y));
            accumulate(grads, nodes, b, zip_map(g, val(a), |x, y| x * y));
        }
        Op::Div(a, b) => {
            let bv = val(b);
            accumulate(grads, nodes, a, zip_map(g, bv, |x, y| x / y));
            // d(a/b)/db = -(a/b)/b
            let gb = zip_map(&zip_map(g, y, |x, q| x * q), bv, |x, d| -x / d);
            accumulate(grads, nodes, b, gb);
        }
        Op::Scale(a, f) => accumulate(grads, nodes, a, g.map(|x| x * f)),
        Op::ScaleBy(a, s) => {
            let sv = val(s).item();
            accumulate(grads, nodes, a, g.map(|x| x * sv));
            let ds: f64 = g.data().iter().zip(val(a).data()).map(|(x, y)| x * y).sum();
            accumulate(
                grads,
                nodes,
                s,
                Tensor::scalar(ds).reshaped(val(s).shape()).expect("1 elem"),
            );
        }
        Op::Matmul(a, b) => {
            let (av, bv) = (val(a), val(b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if nodes[a].requires_grad {
                let ga = matmul_bt_raw(g.data(), bv.data(), m, n, k);
                accumulate(grads, nodes, a, Tensor::new(vec![m, k], ga).expect("shape"));
            }
            if nodes[b].requires_grad {
                let gb = matmul_at_raw(av.data(), g.data(), m, k, n);
                accumulate(grads, nodes, b, Tensor::new(vec![k, n], gb).expect("shape"));
            }
        }
        Op::Transpose(a) => accumulate(grads, nodes, a, transpose(g)),
        Op::Reshape(a) => {
            let ga = g.clone().reshaped(val(a).shape()).expect("same count");
            accumulate(grads, nodes, a, ga);
        }
        Op::Tanh(a) => accumulate(grads, nodes, a, zip_map(g, y, |x, t| x * (1.0 - t * t))),
        Op::Sigmoid(a) => accumulate(grads, nodes, a, zip_map(g, y, |x, s| x * s * (1.0 - s))),
        Op::Relu(a) => accumulate(
            grads,
            nodes,
            a,
            zip_map(g, val(a), |x, v| if v > 0.0 { x } else { 0.0 }),
        ),
        Op::LeakyRelu(a, slope) => accumulate(
            grads,
            nodes,
            a,
            zip_map(g, val(a), |x, v| if v > 0.0 { x } else { x * slope }),
        ),
        Op::Exp(a) => accumulate(grads, nodes, a, zip_map(g, y, |x, e| x * e)),
        Op::Sqrt(a) => accumulate(grads, nodes, a, zip_map(g, y, |x, r| x * 0.5 / r)),
        Op::Square(a) => accumulate(grads, nodes, a, zip_map(g, val(a), |x, v| 2.0 * x * v)),
        Op::Softmax { input, axis } => {
            let (outer, len, inner) = axis_split(y.shape(), axis);
            let mut gx = vec![0.0; y.len()];
            let (yd, gd) = (y.data(), g.data());
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * len + k) * inner + i;
                    let dot: f64 = (0..len).map(|k| yd[idx(k)] * gd[idx(k)]).sum();
                    for k in 0..len {
                        gx[idx(k)] = yd[idx(k)] * (gd[idx(k)] - dot);
                    }
                }
            }
            accumulate(grads, nodes, input, Tensor::new(y.shape().to_vec(), gx).expect("shape"));
        }
        Op::Concat { ref inputs, axis } => {
            let (outer, _, inner) = axis_split(y.shape(), axis);
            let total = y.shape()[axis];
            let mut offset = 0;
            for &inp in inputs {
                let shape = val(inp).shape().to_vec();
                let len = shape[axis];
                if nodes[inp].requires_grad {
                    let mut part = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        part.extend_from_slice(&g.data()[start..start + len * inner]);
                    }
                    accumulate(grads, nodes, inp, Tensor::new(shape, part).expect("shape"));
                }
                offset += len;
            }
        }
        Op::Narrow { input, axis, start } => {
            let in_shape = val(input).shape().to_vec();
            let (outer, total, inner) = axis_split(&in_shape, axis);
            let len = y.shape()[axis];
            let mut gx = vec![0.0; outer * total * inner];
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                let src = o * len * inner;
                gx[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            accumulate(grads, nodes, input, Tensor::new(in_shape, gx).expect("shape"));
        }
        Op::Sum(a) => {
            let gv = g.item();
            accumulate(grads, nodes, a, Tensor::full(val(a).shape(), gv));
        }
        Op::Mean(a) => {
            let av = val(a);
            let gv = g.item() / av.len() as f64;
            accumulate(grads, nodes, a, Tensor::full(av.shape(), gv));
        }
        Op::SumAxis { input, axis } => {
            let in_shape = val(input).shape().to_vec();
            let (outer, len, inner) = axis_split(&in_shape, axis);
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for k in 0..len {
                    for i in 0..inner {
                        gx[(o * len + k) * inner + i] = g.data()[o * inner + i];
                    }
                }
            }
            accumulate(grads, nodes, input, Tensor::new(in_shape, gx).expect("shape"));
        }
        Op::Conv { input, kernel } => {
            let (x, k) = (val(input), val(kernel));
            let (gx, gk) = conv_backward(x, k, g, nodes[input].requires_grad, nodes[kernel].requires_grad);
            if let Some(gx) = gx {
                accumulate(grads, nodes, input, gx);
            }
            if let Some(gk) = gk {
                accumulate(grads, nodes, kernel, gk);
            }
        }
        Op::ChannelMix { input, kernels } => {
            let (x, o) = (val(input), val(kernels));
            let (gx, go) = channel_mix_backward(x, o, g, nodes[input].requires_grad, nodes[kernels].requires_grad);
            if let Some(gx) = gx {
                accumulate(grads, nodes, input, gx);
            }
            if let Some(go) = go {
                accumulate(grads, nodes, kernels, go);
            }
        }
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).expect("shape")
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn conv_forward(x: &Tensor, k: &Tensor) -> Tensor {
    let (n, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, ks, kt) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let (no, to) = (n - ks + 1, t - kt + 1);
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; no * to * cout];
    for r in 0..no {
        for m in 0..to {
            for c in 0..cout {
                let mut acc = 0.0;
                for i in 0..ks {
                    for j in 0..kt {
                        let xo = ((r + i) * t + m + j) * cin;
                        let ko = ((c * ks + i) * kt + j) * cin;
                        acc += xd[xo..xo + cin]
                            .iter()
                            .zip(&kd[ko..ko + cin])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                }
                out[(r * to + m) * cout + c] = acc;
            }
        }
    }
    Tensor::new(vec![no, to, cout], out).expect("shape")
}

fn conv_backward(x: &Tensor, k: &Tensor, g: &Tensor, want_x: bool, want_k: bool) -> (Option<Tensor>, Option<Tensor>) {
    let (n, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, ks, kt) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let (no, to) = (n - ks + 1, t - kt + 1);
    let (xd, kd, gd) = (x.data(), k.data(), g.data());
    let mut gx = want_x.then(|| vec![0.0; xd.len()]);
    let mut gk = want_k.then(|| vec![0.0; kd.len()]);
    for r in 0..no {
        for m in 0..to {
            for c in 0..cout {
                let gv = gd[(r * to + m) * cout + c];
                if gv == 0.0 {
                    continue;
                }
                for i in 0..ks {
                    for j in 0..kt {
                        let xo = ((r + i) * t + m + j) * cin;
                        let ko = ((c * ks + i) * kt + j) * cin;
                        if let Some(gx) = gx.as_mut() {
                            for q in 0..cin {
                                gx[xo + q] += gv * kd[ko + q];
                            }
                        }
                        if let Some(gk) = gk.as_mut() {
                            for q in 0..cin {
                                gk[ko + q] += gv * xd[xo + q];
                            }
                        }
                    }
                }
            }
        }
    }
    (
        gx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("shape")),
        gk.map(|d| Tensor::new(k.shape().to_vec(), d).expect("shape")),
    )
}

fn channel_mix_forward(x: &Tensor, o: &Tensor) -> Tensor {
    let (n, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, s) = (o.shape()[0], o.shape()[3]);
    let (xd, od) = (x.data(), o.data());
    let mut out = vec![0.0; n * s * cout * cin];
    let mut row = vec![0.0; s];
    for r in 0..n {
        for i in 0..cin {
            for j in 0..cout {
                row.iter_mut().for_each(|v| *v = 0.0);
                for tt in 0..t {
                    let xv = xd[(r * t + tt) * cin + i];
                    if xv == 0.0 {
                        continue;
                    }
                    let oo = ((j * cin + i) * t + tt) * s;
                    for (acc, &ov) in row.iter_mut().zip(&od[oo..oo + s]) {
                        *acc += xv * ov;
                    }
                }
                for (q, &v) in row.iter().enumerate() {
                    out[((r * s + q) * cout + j) * cin + i] = v;
                }
            }
        }
    }
    Tensor::new(vec![n, s, cout, cin], out).expect("shape")
}

fn channel_mix_backward(
    x: &Tensor,
    o: &Tensor,
    g: &Tensor,
    want_x: bool,
    want_o: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (n, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, s) = (o.shape()[0], o.shape()[3]);
    let (xd, od, gd) = (x.data(), o.data(), g.data());
    let mut gx = want_x.then(|| vec![0.0; xd.len()]);
    let mut go = want_o.then(|| vec![0.0; od.len()]);
    let mut grow = vec![0.0; s];
    for r in 0..n {
        for i in 0..cin {
            for j in 0..cout {
                for (q, gv) in grow.iter_mut().enumerate() {
                    *gv = gd[((r * s + q) * cout + j) * cin + i];
                }
                for tt in 0..t {
                    let xo = (r * t + tt) * cin + i;
                    let oo = ((j * cin + i) * t + tt) * s;
                    if let Some(gx) = gx.as_mut() {
                        gx[xo] += grow.iter().zip(&od[oo..oo + s]).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if let Some(go) = go.as_mut() {
                        let xv = xd[xo];
                        for (acc, &gv) in go[oo..oo + s].iter_mut().zip(&grow) {
                            *acc += xv * gv;
                        }
                    }
                }
            }
        }
    }
    (
        gx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("shape")),
        go.map(|d| Tensor::new(o.shape().to_vec(), d).expect("shape")),
    )
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Shared handle to the forward value.
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = self.value().map(f);
        self.tape.push(v, op, &[self.id])
    }

    fn binary(self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(mismatch(name, &a, &b));
        }
        Ok(self.tape.push(zip_map(&a, &b, f), op, &[self.id, other.id]))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", Op::Div(self.id, other.id), |x, y| x / y)
    }

    /// Multiplies by a constant.
    pub fn scale(self, factor: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, factor), |x| x * factor)
    }

    /// Multiplies every element by the single value held in `s`.
    pub fn scale_by(self, s: Var<'t>) -> Result<Var<'t>> {
        let (a, sv) = (self.value(), s.value());
        if sv.len() != 1 {
            return Err(mismatch("scale_by", &a, &sv));
        }
        let f = sv.item();
        Ok(self
            .tape
            .push(a.map(|x| x * f), Op::ScaleBy(self.id, s.id), &[self.id, s.id]))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(mismatch("matmul", &a, &b));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let out = Tensor::new(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n)).expect("shape");
        Ok(self.tape.push(out, Op::Matmul(self.id, other.id), &[self.id, other.id]))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.ndim() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "transpose",
                lhs: a.shape().to_vec(),
                rhs: vec![],
            });
        }
        Ok(self.tape.push(transpose(&a), Op::Transpose(self.id), &[self.id]))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = (*self.value()).clone().reshaped(shape)?;
        Ok(self.tape.push(v, Op::Reshape(self.id), &[self.id]))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(
            Op::LeakyRelu(self.id, slope),
            move |x| if x > 0.0 { x } else { slope * x },
        )
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    /// Softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        self.masked_softmax(axis, None)
    }

    /// Softmax along `axis` restricted to positions where `mask` is true.
    /// Masked-out positions are exactly zero; a line with no admitted
    /// position is all zeros.
    pub fn masked_softmax(self, axis: usize, mask: Option<&[bool]>) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.ndim() {
            return Err(TensorError::BadAxis {
                op: "softmax",
                axis,
                shape: x.shape().to_vec(),
            });
        }
        if let Some(m) = mask {
            if m.len() != x.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "masked_softmax",
                    lhs: x.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        let admitted = |k: usize| mask.is_none_or(|m| m[k]);
        let (outer, len, inner) = axis_split(x.shape(), axis);
        let xd = x.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let max = (0..len)
                    .filter(|&k| admitted(idx(k)))
                    .map(|k| xd[idx(k)])
                    .fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    continue;
                }
                let mut z = 0.0;
                for k in 0..len {
                    if admitted(idx(k)) {
                        let e = (xd[idx(k)] - max).exp();
                        out[idx(k)] = e;
                        z += e;
                    }
                }
                for k in 0..len {
                    out[idx(k)] /= z;
                }
            }
        }
        let v = Tensor::new(x.shape().to_vec(), out).expect("shape");
        Ok(self.tape.push(v, Op::Softmax { input: self.id, axis }, &[self.id]))
    }

    /// Joins `parts` along `axis`; all other axes must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::Empty { op: "concat" })?;
        let tape = first.tape;
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::BadAxis {
                op: "concat",
                axis,
                shape: base,
            });
        }
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &values[0], v));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let v = Tensor::new(shape, out).expect("shape");
        Ok(tape.push(
            v,
            Op::Concat {
                inputs: ids.clone(),
                axis,
            },
            &ids,
        ))
    }

    /// Window `[start, start+len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.ndim() || start + len > x.shape()[axis] || len == 0 {
            return Err(TensorError::BadAxis {
                op: "narrow",
                axis,
                shape: x.shape().to_vec(),
            });
        }
        let (outer, total, inner) = axis_split(x.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let s = (o * total + start) * inner;
            out.extend_from_slice(&x.data()[s..s + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let v = Tensor::new(shape, out).expect("shape");
        Ok(self.tape.push(
            v,
            Op::Narrow {
                input: self.id,
                axis,
                start,
            },
            &[self.id],
        ))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        self.tape.push(Tensor::scalar(s), Op::Mean(self.id), &[self.id])
    }

    /// Sums out `axis`. A 1-D input reduces to shape `[1]`.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.ndim() {
            return Err(TensorError::BadAxis {
                op: "sum_axis",
                axis,
                shape: x.shape().to_vec(),
            });
        }
        let (outer, len, inner) = axis_split(x.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += x.data()[(o * len + k) * inner + i];
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let v = Tensor::new(shape, out).expect("shape");
        Ok(self.tape.push(v, Op::SumAxis { input: self.id, axis }, &[self.id]))
    }

    /// Valid-mode multichannel cross-correlation over the (node, time) axes.
    ///
    /// `self` is `(N, T, c_in)`, `kernels` is `(c_out, K_s, K_t, c_in)`; the
    /// result is `(N-K_s+1, T-K_t+1, c_out)`. No activation is applied.
    pub fn conv(self, kernels: Var<'t>) -> Result<Var<'t>> {
        let (x, k) = (self.value(), kernels.value());
        let ok = x.ndim() == 3
            && k.ndim() == 4
            && k.shape()[3] == x.shape()[2]
            && k.shape()[1] >= 1
            && k.shape()[2] >= 1
            && k.shape()[1] <= x.shape()[0]
            && k.shape()[2] <= x.shape()[1];
        if !ok {
            return Err(mismatch("conv", &x, &k));
        }
        let out = conv_forward(&x, &k);
        Ok(self.tape.push(
            out,
            Op::Conv {
                input: self.id,
                kernel: kernels.id,
            },
            &[self.id, kernels.id],
        ))
    }

    /// Per-channel time mixing: `self` is `(N, T, c_in)`, `kernels` is
    /// `(c_out, c_in, T, S)`; returns `(N, S, c_out, c_in)` with
    /// `y[n,s,j,i] = Σ_t x[n,t,i] · k[j,i,t,s]`.
    pub fn channel_mix(self, kernels: Var<'t>) -> Result<Var<'t>> {
        let (x, o) = (self.value(), kernels.value());
        let ok = x.ndim() == 3 && o.ndim() == 4 && o.shape()[1] == x.shape()[2] && o.shape()[2] == x.shape()[1];
        if !ok {
            return Err(mismatch("channel_mix", &x, &o));
        }
        let out = channel_mix_forward(&x, &o);
        Ok(self.tape.push(
            out,
            Op::ChannelMix {
                input: self.id,
                kernels: kernels.id,
            },
            &[self.id, kernels.id],
        ))
    }
}
