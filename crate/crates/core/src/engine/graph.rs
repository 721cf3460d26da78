//! Reverse-mode automatic differentiation over a recorded trace.
//!
//! Every operation appends one node holding its forward value. Because a node
//! can only reference nodes that already exist, insertion order is a valid
//! topological order and `backward` is a single reverse sweep.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Result, VampError};

/// Additive value marking a masked attention score.
pub const MASK_NEG: f64 = 1e9;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Bmm(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Sigmoid(Var),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MeanAxis(Var, usize),
    SumAll(Var),
    EmbeddingBag {
        table: Var,
        bags: Vec<Vec<u32>>,
    },
    Conv1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<usize>,
    },
    Dropout(Var, Vec<f64>),
    ConcatLast(Var, Var),
    SelectLast(Var, usize),
    WeightedCe {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation trace. Build one per forward pass; it must not be shared
/// between threads while recording.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn dim_err(op: &str, a: &[usize], b: &[usize]) -> VampError {
    VampError::Dimension(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

/// Number of leading repetitions when `b` broadcasts over `a`, or None.
fn broadcast_reps(a: &[usize], b: &[usize]) -> Option<usize> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return None;
    }
    let inner: usize = b.iter().product();
    Some(if inner == 0 { 0 } else { a.iter().product::<usize>() / inner })
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out[m,n] += a[m,k] · b[n,k]ᵀ
fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

// out[k,n] += a[m,k]ᵀ · g[m,n]
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_raw(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[off]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn conv_out_len(len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if k == 0 || k > padded || stride == 0 {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf: receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` call w.r.t. `v`, if `v` was reachable.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(self.shape(v).to_vec(), g.clone()).ok()
    }

    // ---------------------------------------------------------------- elementwise

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: impl Fn(Var, Var) -> Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let Some(_) = broadcast_reps(&sa, &sb) else {
            return Err(dim_err(name, &sa, &sb));
        };
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let inner = bv.len();
        let data: Vec<f64> = if inner == 0 {
            Vec::new()
        } else {
            av.iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv[i % inner]))
                .collect()
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(sa, data)?, mk(a, b), rg))
    }

    /// `a + b`; `b` may broadcast over the leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Element-wise product; `b` may broadcast over leading dimensions.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(v, Op::Gelu(a), rg)
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(VampError::Config(format!("dropout p={p} outside [0,1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Dropout(a, mask), rg))
    }

    // ---------------------------------------------------------------- linear algebra

    /// `a[..., k] × b[k, n] -> [..., n]`. Leading dimensions of `a` are flattened.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(dim_err("matmul", &sa, &sb));
        }
        let k = sb[0];
        let n = sb[1];
        let m = if k == 0 { 0 } else { self.value(a).len() / k };
        let mut out = vec![0.0; m * n];
        matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), rg))
    }

    /// Batched product `[B, m, k] × [B, k, n] -> [B, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(dim_err("bmm", &sa, &sb));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            matmul_raw(
                &ad[i * m * k..(i + 1) * m * k],
                &bd[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![bs, m, n], out)?, Op::Bmm(a, b), rg))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&x| x >= shape.len() || std::mem::replace(&mut seen[x], true)) {
            return Err(VampError::Dimension(format!(
                "permute: axes {axes:?} invalid for shape {shape:?}"
            )));
        }
        let (data, out_shape) = permute_raw(self.value(a).data(), &shape, axes);
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::Permute(a, axes.to_vec()), rg))
    }

    /// Swap the last two axes.
    pub fn transpose_last2(&mut self, a: Var) -> Result<Var> {
        let r = self.shape(a).len();
        if r < 2 {
            return Err(VampError::Dimension("transpose needs rank >= 2".into()));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(a, &axes)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Concatenate along the last axis; all other dimensions must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(dim_err("concat", &sa, &sb));
        }
        let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = if ca == 0 { 0 } else { self.value(a).len() / ca };
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&ad[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&bd[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = ca + cb;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::ConcatLast(a, b), rg))
    }

    /// `a[..., index]`, dropping the last axis.
    pub fn select_last(&mut self, a: Var, index: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let Some(&c) = s.last() else {
            return Err(VampError::Dimension("select on scalar".into()));
        };
        if index >= c {
            return Err(VampError::Dimension(format!("select index {index} >= {c}")));
        }
        let data: Vec<f64> = self.value(a).data().iter().skip(index).step_by(c).copied().collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(s[..s.len() - 1].to_vec(), data)?, Op::SelectLast(a, index), rg))
    }

    // ---------------------------------------------------------------- reductions

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_over_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(VampError::Dimension(format!("mean over axis {axis} of {s:?}")));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let n = s[axis];
        let x = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let base = (o * n + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x[base + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let mut shape = s;
        shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanAxis(a, axis), rg))
    }

    // ---------------------------------------------------------------- normalisation

    fn check_finite(&self, a: Var, op: &str) -> Result<()> {
        if self.value(a).all_finite() {
            Ok(())
        } else {
            Err(VampError::NumericDomain(format!("{op}: non-finite input")))
        }
    }

    /// Softmax along the last axis, stabilised by subtracting the row max.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check_finite(a, "softmax")?;
        let x = self.value(a);
        let n = *x.shape().last().unwrap_or(&1);
        if n == 0 {
            return Err(VampError::Dimension("softmax over empty axis".into()));
        }
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Softmax(a), rg))
    }

    /// Softmax of `a + mask` along the last axis where `mask` holds 0 or
    /// `-MASK_NEG`. Masked entries come out exactly 0; a row with every entry
    /// masked comes out all 0.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &Tensor) -> Result<Var> {
        if self.shape(a) != mask.shape() {
            return Err(dim_err("masked_softmax", self.shape(a), mask.shape()));
        }
        self.check_finite(a, "masked_softmax")?;
        let x = self.value(a);
        let n = *x.shape().last().unwrap_or(&1);
        let mut out: Vec<f64> = x.data().iter().zip(mask.data()).map(|(v, m)| v + m).collect();
        let cut = -0.5 * MASK_NEG;
        for (row, mrow) in out.chunks_mut(n).zip(mask.data().chunks(n)) {
            if mrow.iter().all(|&m| m <= cut) {
                row.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            let mx = row
                .iter()
                .zip(mrow)
                .filter(|(_, &m)| m > cut)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (v, &m) in row.iter_mut().zip(mrow) {
                *v = if m > cut { (*v - mx).exp() } else { 0.0 };
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(a);
        // The adjoint of a masked softmax equals the plain softmax adjoint
        // evaluated with the (zeroed) output.
        Ok(self.push(t, Op::Softmax(a), rg))
    }

    /// Layer normalisation over the last axis, without affine terms.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let x = self.value(a);
        let n = *x.shape().last().unwrap_or(&1);
        if n == 0 {
            return Err(VampError::Dimension("layer_norm over empty axis".into()));
        }
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.len() / n);
        for row in x.data().chunks(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (v - mu) * is));
        }
        let t = Tensor::new(x.shape().to_vec(), xhat.clone())?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::LayerNorm { x: a, xhat, inv_std }, rg))
    }

    // ---------------------------------------------------------------- lookups and convolutions

    /// Mean of the table rows listed in each bag: `table[V, d]` → `[bags, d]`.
    /// An empty bag yields the zero vector.
    pub fn embedding_bag(&mut self, table: Var, bags: Vec<Vec<u32>>) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(VampError::Dimension(format!("embedding table shape {s:?}")));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(bad) = bags.iter().flatten().find(|&&id| id as usize >= v) {
            return Err(VampError::Contract(format!("token id {bad} out of range for vocabulary of {v}")));
        }
        let tv = self.value(table).data();
        let mut out = vec![0.0; bags.len() * d];
        for (row, bag) in out.chunks_mut(d.max(1)).zip(&bags) {
            if bag.is_empty() {
                continue;
            }
            let w = 1.0 / bag.len() as f64;
            for &id in bag {
                let src = &tv[id as usize * d..(id as usize + 1) * d];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        let t = Tensor::new(vec![bags.len(), d], out)?;
        let rg = self.rg(table);
        Ok(self.push(t, Op::EmbeddingBag { table, bags }, rg))
    }

    /// Cross-correlation of `x[B, C_in, L]` (or `[C_in, L]`) with
    /// `w[C_out, C_in, K]`, zero padding on both ends.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let (bsz, cin, len, batched) = match sx.len() {
            2 => (1, sx[0], sx[1], false),
            3 => (sx[0], sx[1], sx[2], true),
            _ => return Err(dim_err("conv1d", &sx, &sw)),
        };
        if stride == 0 {
            return Err(VampError::Config("conv1d stride must be >= 1".into()));
        }
        if sw.len() != 3 || sw[1] != cin {
            return Err(dim_err("conv1d", &sx, &sw));
        }
        let (cout, k) = (sw[0], sw[2]);
        let Some(lout) = conv_out_len(len, k, stride, padding) else {
            return Err(VampError::Dimension(format!(
                "conv1d: kernel {k} larger than padded input {}",
                len + 2 * padding
            )));
        };
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(dim_err("conv1d bias", self.shape(b), &[cout]));
            }
        }
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; bsz * cout * lout];
        for b in 0..bsz {
            for o in 0..cout {
                let orow = &mut out[(b * cout + o) * lout..(b * cout + o + 1) * lout];
                if let Some(bv) = bias {
                    let bias_v = self.nodes[bv.0].value.data()[o];
                    orow.iter_mut().for_each(|v| *v = bias_v);
                }
                for c in 0..cin {
                    let xrow = &xd[(b * cin + c) * len..(b * cin + c + 1) * len];
                    let wrow = &wd[(o * cin + c) * k..(o * cin + c + 1) * k];
                    for (t, ov) in orow.iter_mut().enumerate() {
                        let start = (t * stride) as isize - padding as isize;
                        let mut acc = 0.0;
                        for (kk, &wv) in wrow.iter().enumerate() {
                            let pos = start + kk as isize;
                            if pos >= 0 && (pos as usize) < len {
                                acc += wv * xrow[pos as usize];
                            }
                        }
                        *ov += acc;
                    }
                }
            }
        }
        let shape = if batched { vec![bsz, cout, lout] } else { vec![cout, lout] };
        let rg = self.rg(x) || self.rg(w) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Conv1d {
                x,
                w,
                bias,
                stride,
                padding,
            },
            rg,
        ))
    }

    /// Non-overlapping max pooling of `x[B, C, L]` with window = stride = `size`.
    pub fn max_pool1d(&mut self, x: Var, size: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || size == 0 || s[2] < size {
            return Err(VampError::Dimension(format!(
                "max_pool1d: window {size} on shape {s:?}"
            )));
        }
        let (b, c, l) = (s[0], s[1], s[2]);
        let lout = l / size;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(b * c * lout);
        let mut argmax = Vec::with_capacity(b * c * lout);
        for row in 0..b * c {
            for t in 0..lout {
                let base = row * l + t * size;
                let (mut bi, mut bv) = (base, xd[base]);
                for i in base + 1..base + size {
                    if xd[i] > bv {
                        bi = i;
                        bv = xd[i];
                    }
                }
                out.push(bv);
                argmax.push(bi);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![b, c, lout], out)?, Op::MaxPool1d { x, argmax }, rg))
    }

    // ---------------------------------------------------------------- loss

    /// `mean_i w[y_i] * -log softmax(logits_i)[y_i]` over a `[B, C]` logit matrix.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: &[f64],
    ) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(VampError::Dimension(format!(
                "cross entropy: logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let c = s[1];
        if class_weights.len() != c {
            return Err(VampError::Config(format!(
                "{} class weights for {c} classes",
                class_weights.len()
            )));
        }
        if class_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(VampError::Config("class weights must be positive".into()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= c) {
            return Err(VampError::Contract(format!("label {y} >= {c} classes")));
        }
        self.check_finite(logits, "cross entropy")?;
        let x = self.value(logits).data();
        let mut probs = Vec::with_capacity(x.len());
        let mut total = 0.0;
        for (row, &y) in x.chunks(c).zip(labels) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            total += class_weights[y] * (lse - row[y]);
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let loss = total / labels.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedCe {
                logits,
                labels: labels.to_vec(),
                weights: class_weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    // ---------------------------------------------------------------- backward

    /// Propagate adjoints from a scalar `loss` to every node that requires a
    /// gradient. Replaces the gradients of any previous call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(VampError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn reduce_broadcast(g: &[f64], inner: usize) -> Vec<f64> {
        let mut out = vec![0.0; inner];
        if inner > 0 {
            for (i, v) in g.iter().enumerate() {
                out[i % inner] += v;
            }
        }
        out
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.to_vec());
                }
                if self.rg(*b) {
                    let inner = self.value(*b).len();
                    let mut gb = Self::reduce_broadcast(g, inner);
                    gb.iter_mut().for_each(|v| *v *= sign);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let inner = bv.len();
                if self.rg(*a) {
                    let ga = g.iter().enumerate().map(|(k, gv)| gv * bv[k % inner]).collect();
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let prod: Vec<f64> = g.iter().zip(av).map(|(gv, x)| gv * x).collect();
                    self.accumulate(grads, *b, Self::reduce_broadcast(&prod, inner));
                }
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, g.iter().map(|v| v * c).collect());
            }
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::MatMul(a, b) => {
                let sb = self.shape(*b);
                let (k, n) = (sb[0], sb[1]);
                let m = if n == 0 { 0 } else { g.len() / n };
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    matmul_nt(g, self.value(*b).data(), m, n, k, &mut ga);
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    matmul_tn(self.value(*a).data(), g, m, k, n, &mut gb);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Bmm(a, b) => {
                let sa = self.shape(*a);
                let sb = self.shape(*b);
                let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    let mut ga = vec![0.0; bs * m * k];
                    for t in 0..bs {
                        matmul_nt(
                            &g[t * m * n..(t + 1) * m * n],
                            &bd[t * k * n..(t + 1) * k * n],
                            m,
                            n,
                            k,
                            &mut ga[t * m * k..(t + 1) * m * k],
                        );
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; bs * k * n];
                    for t in 0..bs {
                        matmul_tn(
                            &ad[t * m * k..(t + 1) * m * k],
                            &g[t * m * n..(t + 1) * m * n],
                            m,
                            k,
                            n,
                            &mut gb[t * k * n..(t + 1) * k * n],
                        );
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Permute(a, axes) => {
                let mut inverse = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let (ga, _) = permute_raw(g, node.value.shape(), &inverse);
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g.iter().zip(out).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let ga = g.iter().zip(x).map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 }).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                let ga = g.iter().zip(x).map(|(gv, &x)| gv * gelu_grad(x)).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Dropout(a, mask) => {
                self.accumulate(grads, *a, g.iter().zip(mask).map(|(gv, m)| gv * m).collect());
            }
            Op::Softmax(a) => {
                let n = *node.value.shape().last().unwrap_or(&1);
                let mut ga = vec![0.0; g.len()];
                for ((gr, yr), outr) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, gv), y) in outr.iter_mut().zip(gr).zip(yr) {
                        *o = y * (gv - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, xhat, inv_std } => {
                let n = *node.value.shape().last().unwrap_or(&1);
                let mut ga = vec![0.0; g.len()];
                for (r, ((gr, xr), outr)) in g.chunks(n).zip(xhat.chunks(n)).zip(ga.chunks_mut(n)).enumerate() {
                    let mg = gr.iter().sum::<f64>() / n as f64;
                    let mgx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for ((o, gv), xh) in outr.iter_mut().zip(gr).zip(xr) {
                        *o = inv_std[r] * (gv - mg - xh * mgx);
                    }
                }
                self.accumulate(grads, *x, ga);
            }
            Op::MeanAxis(a, axis) => {
                let s = self.shape(*a);
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let n = s[*axis];
                let mut ga = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        for t in 0..inner {
                            ga[(o * n + j) * inner + t] = g[o * inner + t] / n as f64;
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::ConcatLast(a, b) => {
                let ca = *self.shape(*a).last().unwrap();
                let cb = *self.shape(*b).last().unwrap();
                let rows = g.len() / (ca + cb).max(1);
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * cb);
                for r in g.chunks(ca + cb) {
                    ga.extend_from_slice(&r[..ca]);
                    gb.extend_from_slice(&r[ca..]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::SelectLast(a, idx) => {
                let c = *self.shape(*a).last().unwrap();
                let mut ga = vec![0.0; g.len() * c];
                for (r, gv) in g.iter().enumerate() {
                    ga[r * c + idx] = *gv;
                }
                self.accumulate(grads, *a, ga);
            }
            Op::EmbeddingBag { table, bags } => {
                let d = self.shape(*table)[1];
                let mut gt = vec![0.0; self.value(*table).len()];
                for (gr, bag) in g.chunks(d.max(1)).zip(bags) {
                    if bag.is_empty() {
                        continue;
                    }
                    let w = 1.0 / bag.len() as f64;
                    for &id in bag {
                        let dst = &mut gt[id as usize * d..(id as usize + 1) * d];
                        for (o, gv) in dst.iter_mut().zip(gr) {
                            *o += w * gv;
                        }
                    }
                }
                self.accumulate(grads, *table, gt);
            }
            Op::Conv1d {
                x,
                w,
                bias,
                stride,
                padding,
            } => {
                let sx = self.shape(*x);
                let (bsz, cin, len) = if sx.len() == 2 {
                    (1, sx[0], sx[1])
                } else {
                    (sx[0], sx[1], sx[2])
                };
                let sw = self.shape(*w);
                let (cout, k) = (sw[0], sw[2]);
                let lout = *node.value.shape().last().unwrap();
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                let mut gbias = vec![0.0; cout];
                for b in 0..bsz {
                    for o in 0..cout {
                        let grow = &g[(b * cout + o) * lout..(b * cout + o + 1) * lout];
                        gbias[o] += grow.iter().sum::<f64>();
                        for c in 0..cin {
                            let xoff = (b * cin + c) * len;
                            let woff = (o * cin + c) * k;
                            for (t, &gv) in grow.iter().enumerate() {
                                if gv == 0.0 {
                                    continue;
                                }
                                let start = (t * stride) as isize - *padding as isize;
                                for kk in 0..k {
                                    let pos = start + kk as isize;
                                    if pos >= 0 && (pos as usize) < len {
                                        let p = pos as usize;
                                        gw[woff + kk] += gv * xd[xoff + p];
                                        gx[xoff + p] += gv * wd[woff + kk];
                                    }
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
                if let Some(bv) = bias {
                    self.accumulate(grads, *bv, gbias);
                }
            }
            Op::MaxPool1d { x, argmax } => {
                let mut gx = vec![0.0; self.value(*x).len()];
                for (gv, &src) in g.iter().zip(argmax) {
                    gx[src] += gv;
                }
                self.accumulate(grads, *x, gx);
            }
            Op::WeightedCe {
                logits,
                labels,
                weights,
                probs,
            } => {
                let c = self.shape(*logits)[1];
                let scale = g[0] / labels.len() as f64;
                let mut gl = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    let w = weights[y] * scale;
                    for j in 0..c {
                        gl[r * c + j] *= w;
                    }
                    gl[r * c + y] -= w;
                }
                self.accumulate(grads, *logits, gl);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let mut g = Graph::new();
        let i2 = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3., 4.]);

        let a = g.constant(t(&[1, 2], &[1., 2.]));
        let b = g.constant(t(&[2, 1], &[3., 4.]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 2]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn matmul_gradient_matches_hand_value() {
        let mut g = Graph::new();
        let a = g.param(t(&[1, 2], &[1., 1.]));
        let b = g.constant(t(&[2, 1], &[2., 5.]));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[2., 5.]);
        assert!(g.grad(b).is_none());
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3, 2], &[0., 0., 1., 2., 1000., 1000.]));
        let y = g.softmax_rows(x).unwrap();
        let v = g.value(y).data();
        assert_eq!(&v[0..2], &[0.5, 0.5]);
        assert!((v[2] - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert!((v[3] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(&v[4..6], &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[f64::NAN, 0.0]));
        assert!(matches!(g.softmax_rows(x), Err(VampError::NumericDomain(_))));
    }

    #[test]
    fn masked_softmax_zeroes_masked_and_empty_rows() {
        let mut g = Graph::new();
        let x = g.param(t(&[2, 3], &[0.3, -1.0, 2.0, 1.0, 2.0, 3.0]));
        let mask = t(&[2, 3], &[0., 0., -MASK_NEG, -MASK_NEG, -MASK_NEG, -MASK_NEG]);
        let y = g.masked_softmax_rows(x, &mask).unwrap();
        let v = g.value(y).data().to_vec();
        assert_eq!(v[2], 0.0);
        assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
        assert_eq!(&v[3..], &[0.0, 0.0, 0.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!(g.grad(x).unwrap().all_finite());
    }

    #[test]
    fn conv1d_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 3], &[1., 2., 3.]));
        let k = g.constant(t(&[1, 1, 1], &[1.]));
        let y = g.conv1d(x, k, None, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3.]);

        let x = g.constant(t(&[1, 4], &[1., 2., 3., 4.]));
        let k = g.constant(t(&[1, 1, 2], &[1., 1.]));
        let y = g.conv1d(x, k, None, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[3., 5., 7.]);

        let x = g.constant(t(&[1, 3], &[1., 2., 3.]));
        let k = g.constant(t(&[1, 1, 3], &[0., 1., 0.]));
        let y = g.conv1d(x, k, None, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3.]);
    }

    #[test]
    fn conv1d_kernel_too_large() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2], &[1., 2.]));
        let k = g.constant(Tensor::zeros(&[1, 1, 3]));
        assert!(matches!(g.conv1d(x, k, None, 1, 0), Err(VampError::Dimension(_))));
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::vector(vec![0.0]));
        let s = g.sigmoid(z);
        assert_eq!(g.value(s).item(), 0.5);
        let ge = g.gelu(z);
        assert_eq!(g.value(ge).item(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let d = g.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(d, x);
        let d = g.dropout(x, 0.7, false, &mut rng).unwrap();
        assert_eq!(d, x);
        assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
        assert!(g.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_rescales_survivors() {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = g.constant(Tensor::filled(&[10_000], 1.0));
        let d = g.dropout(x, 0.25, true, &mut rng).unwrap();
        let v = g.value(d).data();
        assert!(v.iter().all(|&e| e == 0.0 || (e - 1.0 / 0.75).abs() < 1e-15));
        let zeros = v.iter().filter(|&&e| e == 0.0).count() as f64 / v.len() as f64;
        assert!((zeros - 0.25).abs() < 0.02, "{zeros}");
    }

    #[test]
    fn backward_simple_cases() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1., 1., 1.]);

        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2., 4.]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(VampError::Contract(_))));
    }

    #[test]
    fn broadcast_only_over_leading_dims() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let ok = g.constant(Tensor::vector(vec![1., 2., 3.]));
        let bad = g.constant(Tensor::vector(vec![1., 2.]));
        assert!(g.add(a, ok).is_ok());
        assert!(g.add(a, bad).is_err());
    }

    #[test]
    fn max_pool_picks_window_max() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 7], &[1., 5., 2., 0., -1., 3., 9.]));
        let y = g.max_pool1d(x, 3).unwrap();
        assert_eq!(g.value(y).data(), &[5., 3.]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0., 1., 0., 0., 0., 1., 0.]);
    }

    #[test]
    fn weighted_ce_uniform_logits() {
        let mut g = Graph::new();
        let l = g.param(t(&[1, 2], &[0., 0.]));
        let loss = g.weighted_cross_entropy(l, &[0], &[1.0, 1.0]).unwrap();
        assert!((g.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(g.weighted_cross_entropy(l, &[0], &[0.0, 1.0]).is_err());
    }
}
