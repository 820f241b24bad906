//! Dense 2-D tensors with a reverse-mode tape.
//!
//! A [`Tape`] records every operation in execution order together with its
//! forward value. [`Tape::backward`] walks the records in exact reverse and
//! returns a [`Gradients`] table; callers fold those into their parameter
//! [`Tensor`]s and apply [`sgd_step`].
//!
//! Everything is `f64` and row-major. The only broadcasting is adding a
//! `1×c` row to every row of an `n×c` matrix.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} tensor needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols]).unwrap()
    }

    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(1, n, data).unwrap()
    }

    pub fn scalar(x: f64) -> Self {
        Self::row(vec![x])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform in `(-1/√fan_in, 1/√fan_in)`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(rows, cols, data).unwrap()
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.data.len(), "gradient shape");
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, x)| *a += x),
            None => self.grad = Some(g.to_vec()),
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SoftmaxRows(Var),
    Sigmoid(Var),
    Relu(Var),
    SumRows(Var),
    MeanRows(Var),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    SoftmaxCrossEntropy(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `t.grad`; a leaf that did not reach the
    /// loss contributes zeros.
    pub fn accumulate(&self, v: Var, t: &mut Tensor) {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => {
                if t.grad.is_none() {
                    t.zero_grad();
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a tensor; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.rows, t.cols, t.data.clone(), t.requires_grad)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "constant {rows}x{cols} given {} values",
                data.len()
            )));
        }
        Ok(self.push(Op::Leaf, rows, cols, data, false))
    }

    pub fn constant_row(&mut self, data: &[f64]) -> Var {
        self.push(Op::Leaf, 1, data.len(), data.to_vec(), false)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.rows, n.cols, n.value.clone()).unwrap()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(Error::shape(format!("matmul {n}x{k} by {k2}x{m}")));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * m..(p + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), n, m, out, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::shape(format!("{what} {}x{} with {}x{}", sa.0, sa.1, sb.0, sb.1)));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Add(a, b), r, c, out, rg))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != c {
            return Err(Error::shape(format!("add_row {r}x{c} with {rr}x{rc}")));
        }
        let bv = self.value(row);
        let out = self.value(a).iter().enumerate().map(|(i, x)| x + bv[i % c]).collect();
        let rg = self.rg(&[a, row]);
        Ok(self.push(Op::AddRow(a, row), r, c, out, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Mul(a, b), r, c, out, rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * s).collect();
        let rg = self.rg(&[a]);
        self.push(Op::Scale(a, s), r, c, out, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols of nothing"));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::shape(format!("concat_cols rows {rows} with {r}x{c}")));
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), rows, cols, out, rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        let rg = self.rg(&[a]);
        self.push(Op::SoftmaxRows(a), r, c, out, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| crate::linalg::sigmoid(x)).collect();
        let rg = self.rg(&[a]);
        self.push(Op::Sigmoid(a), r, c, out, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let rg = self.rg(&[a]);
        self.push(Op::Relu(a), r, c, out, rg)
    }

    /// Column sums: `n×c → 1×c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = column_sums(self.value(a), r, c);
        let rg = self.rg(&[a]);
        self.push(Op::SumRows(a), 1, c, out, rg)
    }

    /// Column means: `n×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let inv = 1.0 / r.max(1) as f64;
        let out = column_sums(self.value(a), r, c).into_iter().map(|x| x * inv).collect();
        let rg = self.rg(&[a]);
        self.push(Op::MeanRows(a), 1, c, out, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = transposed(self.value(a), r, c);
        let rg = self.rg(&[a]);
        self.push(Op::Transpose(a), c, r, out, rg)
    }

    /// Row lookup into an embedding table.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::shape(format!("gather row {bad} from {r}x{c}")));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&tv[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(Op::GatherRows(table, idx.to_vec()), idx.len(), c, out, rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of `logits`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r || targets.iter().any(|&t| t >= c) {
            return Err(Error::shape(format!(
                "cross entropy over {r}x{c} logits with {} targets",
                targets.len()
            )));
        }
        let z = self.value(logits);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = &z[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        loss /= r as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(Op::SoftmaxCrossEntropy(logits, targets.to_vec()), 1, 1, vec![loss], rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::shape(format!("backward needs a 1x1 loss, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, x)| *a += x),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).1;
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.node(*a).requires_grad {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        for p in 0..k {
                            da[i * k + p] = (0..m).map(|j| g[i * m + j] * bv[p * m + j]).sum();
                        }
                    }
                    send(*a, da);
                }
                if self.node(*b).requires_grad {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        for p in 0..k {
                            let x = av[i * k + p];
                            for j in 0..m {
                                db[p * m + j] += x * g[i * m + j];
                            }
                        }
                    }
                    send(*b, db);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::AddRow(a, row) => {
                send(*a, g.to_vec());
                send(*row, column_sums(g, node.rows, node.cols));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                send(*a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                send(*b, g.iter().zip(av).map(|(x, y)| x * y).collect());
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|x| x * s).collect()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    let mut gp = Vec::with_capacity(node.rows * c);
                    for i in 0..node.rows {
                        let start = i * node.cols + offset;
                        gp.extend_from_slice(&g[start..start + c]);
                    }
                    send(p, gp);
                    offset += c;
                }
            }
            Op::SoftmaxRows(a) => {
                let c = node.cols;
                let mut dx = vec![0.0; g.len()];
                for i in 0..node.rows {
                    let y = &node.value[i * c..(i + 1) * c];
                    let gy = &g[i * c..(i + 1) * c];
                    let s: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[i * c + j] = y[j] * (gy[j] - s);
                    }
                }
                send(*a, dx);
            }
            Op::Sigmoid(a) => send(*a, g.iter().zip(&node.value).map(|(d, y)| d * y * (1.0 - y)).collect()),
            Op::Relu(a) => send(
                *a,
                g.iter()
                    .zip(self.value(*a))
                    .map(|(d, x)| if *x > 0.0 { *d } else { 0.0 })
                    .collect(),
            ),
            Op::SumRows(a) | Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let s = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / r.max(1) as f64
                } else {
                    1.0
                };
                let dx = (0..r * c).map(|i| g[i % c] * s).collect();
                send(*a, dx);
            }
            Op::Transpose(a) => send(*a, transposed(g, node.rows, node.cols)),
            Op::GatherRows(t, idx) => {
                let (r, c) = self.shape(*t);
                let mut dt = vec![0.0; r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        dt[i * c + j] += g[k * c + j];
                    }
                }
                send(*t, dt);
            }
            Op::SoftmaxCrossEntropy(z, targets) => {
                let (r, c) = self.shape(*z);
                let mut dz = self.value(*z).to_vec();
                for (i, &t) in targets.iter().enumerate() {
                    let row = &mut dz[i * c..(i + 1) * c];
                    softmax_in_place(row);
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= g[0] / r as f64);
                }
                send(*z, dz);
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    row.iter_mut().for_each(|x| *x /= s);
}

fn column_sums(v: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for i in 0..r {
        for j in 0..c {
            out[j] += v[i * c + j];
        }
    }
    out
}

fn transposed(v: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = v[i * c + j];
        }
    }
    out
}

/// `p ← p − lr·grad` for every tensor, then zeroes the gradients.
///
/// Fails if a tensor has never received a gradient.
pub fn sgd_step(params: &mut [&mut Tensor], lr: f64) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if p.grad.is_none() {
            return Err(Error::Numerical(format!(
                "parameter {i} ({}x{}) has no gradient",
                p.rows, p.cols
            )));
        }
    }
    for p in params.iter_mut() {
        let g = p.grad.as_mut().unwrap();
        for (x, d) in p.data.iter_mut().zip(g.iter_mut()) {
            *x -= lr * *d;
            *d = 0.0;
        }
    }
    Ok(())
}

/// Central finite differences of `loss` w.r.t. every entry of every tensor.
///
/// Independent of the tape; used to check [`Tape::backward`].
pub fn finite_difference<F>(params: &mut [Tensor], h: f64, mut loss: F) -> Vec<Vec<f64>>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = vec![0.0; params[p].data.len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = params[p].data[i];
            params[p].data[i] = orig + h;
            let up = loss(params);
            params[p].data[i] = orig - h;
            let down = loss(params);
            params[p].data[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

const CHECKPOINT_FORMAT: &str = "divrank-params";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    tensors: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Writes named tensors as a versioned JSON document.
pub fn save_checkpoint(path: &Path, tensors: &[(String, &Tensor)]) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        tensors: tensors
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                rows: t.rows,
                cols: t.cols,
                data: t.data.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&ck)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            ck.format,
            ck.version
        )));
    }
    ck.tensors
        .into_iter()
        .map(|t| Ok((t.name, Tensor::new(t.rows, t.cols, t.data)?)))
        .collect()
}
