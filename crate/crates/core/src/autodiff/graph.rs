use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value on the tape or to a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Node(usize),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, k: Var, stride: usize },
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    Sum(Vec<Var>),
    /// Output is `[h, c]`; `gates` holds the activated `i, f, g, o`.
    Lstm { x: Var, h: Var, c: Var, w_ih: Var, w_hh: Var, b: Var, gates: Vec<f64> },
    HorizonLoss { pred: Var, target: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Tape of primitive ops over a borrowed parameter set. Nodes are appended in
/// evaluation order, so the tape is topologically sorted by construction.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

/// Reverse-mode result: gradients for parameters and for differentiable leaves.
#[derive(Clone, Debug)]
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    leaves: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    pub fn of(&self, v: Var) -> Option<&Tensor> {
        match v {
            Var::Param(id) => self.param(id),
            Var::Node(i) => self.leaves.get(i).and_then(Option::as_ref),
        }
    }
}

/// Penalty weights `w_k = exp(-k^(1/4))` for `k = 1..=h`.
pub fn horizon_weights(h: usize) -> Vec<f64> {
    (1..=h).map(|k| (-(k as f64).powf(0.25)).exp()).collect()
}

fn shape_err(msg: String) -> Error {
    Error::ShapeMismatch(msg)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match v {
            Var::Node(i) => &self.nodes[i].value,
            Var::Param(id) => self.params.value(id),
        }
    }

    fn needs_grad(&self, v: Var) -> bool {
        match v {
            Var::Node(i) => self.nodes[i].needs_grad,
            Var::Param(_) => true,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|&v| self.needs_grad(v));
        self.nodes.push(Node { value, op, needs_grad });
        Var::Node(self.nodes.len() - 1)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var::Node(self.nodes.len() - 1)
    }

    /// Input whose gradient is reported by [`Graph::backward`].
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var::Node(self.nodes.len() - 1)
    }

    pub fn param(&self, name: &str) -> Result<Var> {
        Ok(Var::Param(self.params.require(name)?))
    }

    /// Valid cross-correlation of `x: [C,H,W]` with `k: [K,C,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let (xs, ks) = (self.value(x).shape(), self.value(k).shape());
        if xs.len() != 3 || ks.len() != 4 || ks[1] != xs[0] || stride == 0 || ks[2] > xs[1] || ks[3] > xs[2] {
            return Err(shape_err(format!("conv2d input {xs:?} kernels {ks:?} stride {stride}")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (kn, kh, kw) = (ks[0], ks[2], ks[3]);
        let (oh, ow) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
        let xd = self.value(x).data();
        let kd = self.value(k).data();
        let mut out = vec![0.0; kn * oh * ow];
        for ko in 0..kn {
            for ci in 0..c {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let kv = kd[((ko * c + ci) * kh + ky) * kw + kx];
                        for oy in 0..oh {
                            let row = &xd[(ci * h + oy * stride + ky) * w..][..w];
                            let orow = &mut out[(ko * oh + oy) * ow..][..ow];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                *o += kv * row[ox * stride + kx];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![kn, oh, ow], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, stride }, &[x, k]))
    }

    /// `W x + b` with `x: [n]` (any shape of n elements), `W: [m,n]`, `b: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xn, ws, bs) = (self.value(x).len(), self.value(w).shape(), self.value(b).shape());
        if ws.len() != 2 || ws[1] != xn || bs != [ws[0]] {
            return Err(shape_err(format!("linear input {xn} weights {ws:?} bias {bs:?}")));
        }
        let (m, n) = (ws[0], ws[1]);
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let out = self
            .value(b)
            .data()
            .iter()
            .enumerate()
            .map(|(i, bi)| bi + wd[i * n..(i + 1) * n].iter().zip(xd).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let value = Tensor::new(vec![m], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape");
        self.push(value, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    /// Flattens and concatenates.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat of nothing".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::vector(out);
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Flat slice `[start, start + len)`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(x).len();
        if start + len > n || len == 0 {
            return Err(shape_err(format!("slice {start}..{} of {n}", start + len)));
        }
        let value = Tensor::vector(self.value(x).data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Sum of scalars.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("sum of nothing".into()));
        }
        let mut total = 0.0;
        for &p in parts {
            let t = self.value(p);
            if t.len() != 1 {
                return Err(shape_err(format!("sum term of shape {:?}", t.shape())));
            }
            total += t.data()[0];
        }
        Ok(self.push(Tensor::scalar(total), Op::Sum(parts.to_vec()), parts))
    }

    /// One LSTM step. Gate rows of `w_ih: [4H,I]`, `w_hh: [4H,H]`, `b: [4H]`
    /// are ordered input, forget, candidate, output.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<(Var, Var)> {
        let hn = self.value(h).len();
        let xn = self.value(x).len();
        let (wi, wh, bs) = (self.value(w_ih).shape(), self.value(w_hh).shape(), self.value(b).shape());
        if self.value(c).len() != hn || wi != [4 * hn, xn] || wh != [4 * hn, hn] || bs != [4 * hn] {
            return Err(shape_err(format!("lstm x {xn} h {hn} w_ih {wi:?} w_hh {wh:?} b {bs:?}")));
        }
        let xd = self.value(x).data();
        let hd = self.value(h).data();
        let cd = self.value(c).data();
        let wid = self.value(w_ih).data();
        let whd = self.value(w_hh).data();
        let mut gates: Vec<f64> = self.value(b).data().to_vec();
        for (r, z) in gates.iter_mut().enumerate() {
            let a: f64 = wid[r * xn..(r + 1) * xn].iter().zip(xd).map(|(w, v)| w * v).sum();
            let bb: f64 = whd[r * hn..(r + 1) * hn].iter().zip(hd).map(|(w, v)| w * v).sum();
            *z += a + bb;
        }
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if (2 * hn..3 * hn).contains(&r) { z.tanh() } else { sigmoid(*z) };
        }
        let mut out = vec![0.0; 2 * hn];
        for j in 0..hn {
            let (i, f, g, o) = (gates[j], gates[hn + j], gates[2 * hn + j], gates[3 * hn + j]);
            let cn = f * cd[j] + i * g;
            out[hn + j] = cn;
            out[j] = o * cn.tanh();
        }
        let value = Tensor::vector(out);
        let node = self.push(value, Op::Lstm { x, h, c, w_ih, w_hh, b, gates }, &[x, h, c, w_ih, w_hh, b]);
        Ok((self.slice(node, 0, hn)?, self.slice(node, hn, hn)?))
    }

    /// `sum_k weights[k] * |pred_k - target_k|^2` over `h` 2-vectors.
    /// A zero weight masks the term out entirely.
    pub fn weighted_horizon_loss(&mut self, pred: Var, target: &Tensor, weights: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || p.len() != 2 * weights.len() || weights.is_empty() {
            return Err(shape_err(format!(
                "horizon loss pred {:?} target {:?} weights {}",
                p.shape(),
                target.shape(),
                weights.len()
            )));
        }
        let mut loss = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let dx = p.data()[2 * k] - target.data()[2 * k];
            let dy = p.data()[2 * k + 1] - target.data()[2 * k + 1];
            loss += w * (dx * dx + dy * dy);
        }
        let op = Op::HorizonLoss { pred, target: target.data().to_vec(), weights: weights.to_vec() };
        Ok(self.push(Tensor::scalar(loss), op, &[pred]))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Var::Node(root) = loss else {
            return Err(Error::NotScalarLoss(self.value(loss).shape().to_vec()));
        };
        if self.nodes[root].value.len() != 1 {
            return Err(Error::NotScalarLoss(self.nodes[root].value.shape().to_vec()));
        }
        let mut store = GradStore {
            nodes: (0..self.nodes.len()).map(|_| None).collect(),
            params: (0..self.params.len()).map(|_| None).collect(),
        };
        store.nodes[root] = Some(vec![1.0]);
        for i in (0..=root).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = store.nodes[i].take() else { continue };
            self.backprop_node(node, &g, &mut store);
        }
        let leaves = store
            .nodes
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match (g, &n.op) {
                (Some(g), Op::Leaf) => Some(Tensor::new(n.value.shape().to_vec(), g).expect("leaf shape")),
                _ => None,
            })
            .collect();
        let params = store
            .params
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::new(self.params.value(ParamId(i)).shape().to_vec(), g).expect("param shape")))
            .collect();
        Ok(Gradients { params, leaves })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], store: &mut GradStore) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, stride } => {
                let (xs, ks) = (self.value(*x).shape(), self.value(*k).shape());
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                let (kn, kh, kw) = (ks[0], ks[2], ks[3]);
                let (oh, ow) = (node.value.shape()[1], node.value.shape()[2]);
                let s = *stride;
                let xd = self.value(*x).data();
                let kd = self.value(*k).data();
                if self.needs_grad(*k) {
                    let dk = store.slot(*k, kd.len());
                    for ko in 0..kn {
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let mut acc = 0.0;
                                    for oy in 0..oh {
                                        let row = &xd[(ci * h + oy * s + ky) * w..][..w];
                                        let grow = &g[(ko * oh + oy) * ow..][..ow];
                                        for (ox, gv) in grow.iter().enumerate() {
                                            acc += gv * row[ox * s + kx];
                                        }
                                    }
                                    dk[((ko * c + ci) * kh + ky) * kw + kx] += acc;
                                }
                            }
                        }
                    }
                }
                if self.needs_grad(*x) {
                    let dx = store.slot(*x, xd.len());
                    for ko in 0..kn {
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let kv = kd[((ko * c + ci) * kh + ky) * kw + kx];
                                    for oy in 0..oh {
                                        let drow = &mut dx[(ci * h + oy * s + ky) * w..][..w];
                                        let grow = &g[(ko * oh + oy) * ow..][..ow];
                                        for (ox, gv) in grow.iter().enumerate() {
                                            drow[ox * s + kx] += kv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let n = xd.len();
                if self.needs_grad(*b) {
                    let db = store.slot(*b, g.len());
                    for (d, gv) in db.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                if self.needs_grad(*w) {
                    let dw = store.slot(*w, wd.len());
                    for (i, gv) in g.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        for (d, xv) in dw[i * n..(i + 1) * n].iter_mut().zip(xd) {
                            *d += gv * xv;
                        }
                    }
                }
                if self.needs_grad(*x) {
                    let dx = store.slot(*x, n);
                    for (i, gv) in g.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        for (d, wv) in dx.iter_mut().zip(&wd[i * n..(i + 1) * n]) {
                            *d += gv * wv;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                let dx = store.slot(*x, xd.len());
                for ((d, gv), xv) in dx.iter_mut().zip(g).zip(xd) {
                    if *xv > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                let dx = store.slot(*x, y.len());
                for ((d, gv), yv) in dx.iter_mut().zip(g).zip(y) {
                    *d += gv * (1.0 - yv * yv);
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let dx = store.slot(*x, y.len());
                for ((d, gv), yv) in dx.iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (1.0 - yv);
                }
            }
            Op::Scale(x, s) => {
                let dx = store.slot(*x, g.len());
                for (d, gv) in dx.iter_mut().zip(g) {
                    *d += gv * s;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.needs_grad(p) {
                        let dp = store.slot(p, n);
                        for (d, gv) in dp.iter_mut().zip(&g[off..off + n]) {
                            *d += gv;
                        }
                    }
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let n = self.value(*x).len();
                let dx = store.slot(*x, n);
                for (d, gv) in dx[*start..*start + g.len()].iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Reshape(x) => {
                let dx = store.slot(*x, g.len());
                for (d, gv) in dx.iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    if self.needs_grad(p) {
                        store.slot(p, 1)[0] += g[0];
                    }
                }
            }
            Op::Lstm { x, h, c, w_ih, w_hh, b, gates } => {
                let hn = self.value(*h).len();
                let xd = self.value(*x).data();
                let hd = self.value(*h).data();
                let cd = self.value(*c).data();
                let out = node.value.data();
                let mut dz = vec![0.0; 4 * hn];
                let mut dc_prev = vec![0.0; hn];
                for j in 0..hn {
                    let (i, f, gg, o) = (gates[j], gates[hn + j], gates[2 * hn + j], gates[3 * hn + j]);
                    let tc = out[hn + j].tanh();
                    let dh = g[j];
                    let dc = g[hn + j] + dh * o * (1.0 - tc * tc);
                    dz[j] = dc * gg * i * (1.0 - i);
                    dz[hn + j] = dc * cd[j] * f * (1.0 - f);
                    dz[2 * hn + j] = dc * i * (1.0 - gg * gg);
                    dz[3 * hn + j] = dh * tc * o * (1.0 - o);
                    dc_prev[j] = dc * f;
                }
                if self.needs_grad(*c) {
                    let d = store.slot(*c, hn);
                    for (a, v) in d.iter_mut().zip(&dc_prev) {
                        *a += v;
                    }
                }
                if self.needs_grad(*b) {
                    let d = store.slot(*b, 4 * hn);
                    for (a, v) in d.iter_mut().zip(&dz) {
                        *a += v;
                    }
                }
                for (wv, inp, id) in [(*w_ih, *x, xd), (*w_hh, *h, hd)] {
                    let wd = self.value(wv).data();
                    let n = id.len();
                    if self.needs_grad(wv) {
                        let dw = store.slot(wv, wd.len());
                        for (r, zv) in dz.iter().enumerate() {
                            for (d, iv) in dw[r * n..(r + 1) * n].iter_mut().zip(id) {
                                *d += zv * iv;
                            }
                        }
                    }
                    if self.needs_grad(inp) {
                        let di = store.slot(inp, n);
                        for (r, zv) in dz.iter().enumerate() {
                            for (d, w) in di.iter_mut().zip(&wd[r * n..(r + 1) * n]) {
                                *d += zv * w;
                            }
                        }
                    }
                }
            }
            Op::HorizonLoss { pred, target, weights } => {
                let p = self.value(*pred).data();
                let dp = store.slot(*pred, p.len());
                for (k, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..2 {
                        let i = 2 * k + a;
                        dp[i] += g[0] * 2.0 * w * (p[i] - target[i]);
                    }
                }
            }
        }
    }
}

struct GradStore {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl GradStore {
    fn slot(&mut self, v: Var, len: usize) -> &mut [f64] {
        let s = match v {
            Var::Node(i) => &mut self.nodes[i],
            Var::Param(id) => &mut self.params[id.0],
        };
        s.get_or_insert_with(|| vec![0.0; len])
    }
}
