//! Operation recording and reverse-mode gradients.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! return [`Var`] handles; [`Tape::backward`] walks the record in reverse and
//! accumulates gradients for every node that depends on a `requires_grad`
//! leaf.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{ensure, KpError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Which slices of a matrix form the distributions.
///
/// `Row` normalizes each row (across columns); `Column` normalizes each
/// column (across rows).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

/// Argument order of the KL divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(target ‖ predicted)`.
    #[default]
    Forward,
    /// `KL(predicted ‖ target)`.
    Reverse,
}

enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Conv1d { x: Var, w: Var, b: Var },
    MeanTime { x: Var },
    Reshape { x: Var },
    Cosine {
        a: Var,
        b: Var,
        a_unit: Vec<f64>,
        b_unit: Vec<f64>,
        a_norm: Vec<f64>,
        b_norm: Vec<f64>,
    },
    NegSqDist { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    LogSoftmax { x: Var, axis: Axis },
    Kl {
        pred: Var,
        target: Tensor,
        target_log: Tensor,
        axis: Axis,
        direction: KlDirection,
    },
    Sum { x: Var },
    Square { x: Var },
    Weighted { a: Var, b: Var, wa: f64, wb: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn col_stats(m: usize, n: usize, data: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..m {
        for (o, x) in out.iter_mut().zip(&data[i * n..(i + 1) * n]) {
            *o += x;
        }
    }
    out
}

/// Stable log-softmax over the slices selected by `axis`.
pub fn log_softmax_values(m: usize, n: usize, x: &[f64], axis: Axis) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let (outer, inner, idx): (usize, usize, fn(usize, usize, usize, usize) -> usize) = match axis {
        Axis::Row => (m, n, |o, i, _m, n| o * n + i),
        Axis::Column => (n, m, |o, i, _m, n| i * n + o),
    };
    for o in 0..outer {
        let mut max = f64::NEG_INFINITY;
        for i in 0..inner {
            max = max.max(x[idx(o, i, m, n)]);
        }
        let mut s = 0.0;
        for i in 0..inner {
            s += (x[idx(o, i, m, n)] - max).exp();
        }
        let lse = max + s.ln();
        for i in 0..inner {
            let k = idx(o, i, m, n);
            out[k] = x[k] - lse;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// `y[b] = w · x[b] + bias` for `x: [batch × in]`, `w: [out × in]`, `bias: [out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, din) = self.value(x).dims2()?;
        let (dout, win) = self.value(w).dims2()?;
        ensure!(
            din == win,
            Dimension,
            "affine layer expects input width {win}, got {din}"
        );
        let bias = self.value(b);
        ensure!(
            bias.shape() == [dout],
            Dimension,
            "bias shape {:?} does not match output width {dout}",
            bias.shape()
        );
        let mut out = vec![0.0; batch * dout];
        for row in out.chunks_mut(dout) {
            row.copy_from_slice(bias.data());
        }
        gemm(
            batch,
            din,
            dout,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            &mut out,
            true,
        );
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::new(vec![batch, dout], out)?, Op::Affine { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(value, Op::Relu { x }, rg)
    }

    /// Valid (unpadded) stride-1 convolution over time.
    ///
    /// `x: [batch × c_in × len]`, `w: [c_out × c_in × kernel]`, `b: [c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, cin, len) = self.value(x).dims3()?;
        let (cout, wcin, kernel) = self.value(w).dims3()?;
        ensure!(
            cin == wcin,
            Dimension,
            "conv1d expects {wcin} input channels, got {cin}"
        );
        ensure!(
            kernel <= len,
            Dimension,
            "conv1d kernel {kernel} longer than input length {len}"
        );
        ensure!(
            self.value(b).shape() == [cout],
            Dimension,
            "conv1d bias must have {cout} entries"
        );
        let lout = len - kernel + 1;
        let mut out = vec![0.0; batch * cout * lout];
        let mut col = vec![0.0; cin * kernel * lout];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        for bi in 0..batch {
            im2col(&xv[bi * cin * len..(bi + 1) * cin * len], cin, len, kernel, &mut col);
            let ob = &mut out[bi * cout * lout..(bi + 1) * cout * lout];
            for (o, row) in ob.chunks_mut(lout).enumerate() {
                row.fill(bv[o]);
            }
            gemm(cout, cin * kernel, lout, wv, false, &col, false, ob, true);
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Tensor::new(vec![batch, cout, lout], out)?,
            Op::Conv1d { x, w, b },
            rg,
        ))
    }

    /// Average over the last axis: `[batch × c × len] -> [batch × c]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let (batch, c, len) = self.value(x).dims3()?;
        let xv = self.value(x).data();
        let out: Vec<f64> = xv
            .chunks(len)
            .map(|s| s.iter().sum::<f64>() / len as f64)
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![batch, c], out)?, Op::MeanTime { x }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Pairwise cosine similarity of the rows of `a: [m × d]` and `b: [n × d]`.
    ///
    /// With `eps = None` a zero-norm row is an error; otherwise norms are
    /// clamped from below at `eps`.
    pub fn cosine_matrix(&mut self, a: Var, b: Var, eps: Option<f64>) -> Result<Var> {
        let (m, d) = self.value(a).dims2()?;
        let (n, db) = self.value(b).dims2()?;
        ensure!(
            d == db,
            Dimension,
            "cosine operands have widths {d} and {db}"
        );
        let (a_unit, a_norm) = unit_rows(self.value(a).data(), m, d, eps, "left")?;
        let (b_unit, b_norm) = unit_rows(self.value(b).data(), n, d, eps, "right")?;
        let mut out = vec![0.0; m * n];
        gemm(m, d, n, &a_unit, false, &b_unit, true, &mut out, false);
        for v in &mut out {
            *v = v.clamp(-1.0, 1.0);
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::Cosine {
                a,
                b,
                a_unit,
                b_unit,
                a_norm,
                b_norm,
            },
            rg,
        ))
    }

    /// `out[i][j] = -‖a_i − b_j‖²`.
    pub fn neg_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, d) = self.value(a).dims2()?;
        let (n, db) = self.value(b).dims2()?;
        ensure!(
            d == db,
            Dimension,
            "distance operands have widths {d} and {db}"
        );
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ai = &av[i * d..(i + 1) * d];
            for j in 0..n {
                let bj = &bv[j * d..(j + 1) * d];
                out[i * n + j] = -ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::NegSqDist { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    pub fn log_softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        let out = log_softmax_values(m, n, self.value(x).data(), axis);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::LogSoftmax { x, axis }, rg))
    }

    /// Mean KL divergence between constant target distributions and the
    /// log-distributions in `pred`, one distribution per slice along `axis`.
    ///
    /// `target_log` must be the elementwise log of `target`; it is only read
    /// for the reverse direction and lets targets with underflowed zeros keep
    /// a finite log.
    pub fn kl_divergence(
        &mut self,
        target: Tensor,
        target_log: Tensor,
        pred: Var,
        axis: Axis,
        direction: KlDirection,
    ) -> Result<Var> {
        let (m, n) = self.value(pred).dims2()?;
        ensure!(
            target.shape() == [m, n] && target_log.shape() == [m, n],
            Dimension,
            "KL target shape {:?} does not match prediction [{m}, {n}]",
            target.shape()
        );
        let p = self.value(pred).data();
        let count = match axis {
            Axis::Row => m,
            Axis::Column => n,
        } as f64;
        let mut total = 0.0;
        for k in 0..m * n {
            total += match direction {
                KlDirection::Forward => {
                    let t = target.data()[k];
                    if t > 0.0 {
                        t * (target_log.data()[k] - p[k])
                    } else {
                        0.0
                    }
                }
                KlDirection::Reverse => p[k].exp() * (p[k] - target_log.data()[k]),
            };
        }
        let rg = self.rg(&[pred]);
        Ok(self.push(
            Tensor::scalar(total / count),
            Op::Kl {
                pred,
                target,
                target_log,
                axis,
                direction,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::Sum { x }, rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(&[x]);
        self.push(value, Op::Square { x }, rg)
    }

    /// `wa·a + wb·b` for equally shaped operands.
    pub fn weighted_sum(&mut self, a: Var, wa: f64, b: Var, wb: f64) -> Result<Var> {
        ensure!(
            self.value(a).shape() == self.value(b).shape(),
            Dimension,
            "weighted sum of shapes {:?} and {:?}",
            self.value(a).shape(),
            self.value(b).shape()
        );
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| wa * x + wb * y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Weighted { a, b, wa, wb }, rg))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        ensure!(
            node.value.len() == 1,
            Usage,
            "backward needs a scalar loss, got shape {:?}",
            node.value.shape()
        );
        if !node.requires_grad {
            return Err(KpError::Usage(
                "backward called on a value detached from every trainable tensor".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(node.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (batch, din) = xv.dims2()?;
                let dout = wv.shape()[0];
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; batch * din];
                    gemm(batch, dout, din, gd, false, wv.data(), false, &mut dx, false);
                    self.accumulate(grads, *x, Tensor::new(vec![batch, din], dx)?);
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![0.0; dout * din];
                    gemm(dout, batch, din, gd, true, xv.data(), false, &mut dw, false);
                    self.accumulate(grads, *w, Tensor::new(vec![dout, din], dw)?);
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, Tensor::vector(col_stats(batch, dout, gd)));
                }
            }
            Op::Relu { x } => {
                let data = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &gi)| if v > 0.0 { gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Conv1d { x, w, b } => {
                let (batch, cin, len) = self.value(*x).dims3()?;
                let (cout, _, kernel) = self.value(*w).dims3()?;
                let lout = len - kernel + 1;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let need_x = self.requires_grad(*x);
                let need_w = self.requires_grad(*w);
                let mut dx = vec![0.0; if need_x { batch * cin * len } else { 0 }];
                let mut dw = vec![0.0; if need_w { cout * cin * kernel } else { 0 }];
                let mut col = vec![0.0; cin * kernel * lout];
                let mut dcol = vec![0.0; cin * kernel * lout];
                for bi in 0..batch {
                    let gb = &gd[bi * cout * lout..(bi + 1) * cout * lout];
                    if need_w {
                        im2col(&xv[bi * cin * len..(bi + 1) * cin * len], cin, len, kernel, &mut col);
                        gemm(cout, lout, cin * kernel, gb, false, &col, true, &mut dw, true);
                    }
                    if need_x {
                        gemm(cin * kernel, cout, lout, wv, true, gb, false, &mut dcol, false);
                        col2im_add(&dcol, cin, len, kernel, &mut dx[bi * cin * len..(bi + 1) * cin * len]);
                    }
                }
                if need_x {
                    self.accumulate(grads, *x, Tensor::new(vec![batch, cin, len], dx)?);
                }
                if need_w {
                    self.accumulate(grads, *w, Tensor::new(vec![cout, cin, kernel], dw)?);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; cout];
                    for (k, chunk) in gd.chunks(lout).enumerate() {
                        db[k % cout] += chunk.iter().sum::<f64>();
                    }
                    self.accumulate(grads, *b, Tensor::vector(db));
                }
            }
            Op::MeanTime { x } => {
                let shape = self.value(*x).shape().to_vec();
                let len = shape[2];
                let mut dx = Vec::with_capacity(shape.iter().product());
                for &gi in gd {
                    dx.extend(std::iter::repeat_n(gi / len as f64, len));
                }
                self.accumulate(grads, *x, Tensor::new(shape, dx)?);
            }
            Op::Reshape { x } => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshape(shape)?);
            }
            Op::Cosine {
                a,
                b,
                a_unit,
                b_unit,
                a_norm,
                b_norm,
            } => {
                let (m, n) = g.dims2()?;
                let d = a_unit.len() / m;
                let c = node.value.data();
                if self.requires_grad(*a) {
                    // dA_i = (Σ_j G_ij b̂_j − (Σ_j G_ij C_ij) â_i) / ‖a_i‖
                    let mut da = vec![0.0; m * d];
                    gemm(m, n, d, gd, false, b_unit, false, &mut da, false);
                    for i in 0..m {
                        let gc: f64 = (0..n).map(|j| gd[i * n + j] * c[i * n + j]).sum();
                        for k in 0..d {
                            da[i * d + k] = (da[i * d + k] - gc * a_unit[i * d + k]) / a_norm[i];
                        }
                    }
                    self.accumulate(grads, *a, Tensor::new(vec![m, d], da)?);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; n * d];
                    gemm(n, m, d, gd, true, a_unit, false, &mut db, false);
                    let gc: Vec<f64> = {
                        let prod: Vec<f64> = gd.iter().zip(c).map(|(x, y)| x * y).collect();
                        col_stats(m, n, &prod)
                    };
                    for j in 0..n {
                        for k in 0..d {
                            db[j * d + k] = (db[j * d + k] - gc[j] * b_unit[j * d + k]) / b_norm[j];
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![n, d], db)?);
                }
            }
            Op::NegSqDist { a, b } => {
                let (m, n) = g.dims2()?;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let d = av.len() / m;
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; m * d];
                    gemm(m, n, d, gd, false, bv, false, &mut da, false);
                    for i in 0..m {
                        let rs: f64 = gd[i * n..(i + 1) * n].iter().sum();
                        for k in 0..d {
                            da[i * d + k] = -2.0 * (rs * av[i * d + k] - da[i * d + k]);
                        }
                    }
                    self.accumulate(grads, *a, Tensor::new(vec![m, d], da)?);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; n * d];
                    gemm(n, m, d, gd, true, av, false, &mut db, false);
                    let cs = col_stats(m, n, gd);
                    for j in 0..n {
                        for k in 0..d {
                            db[j * d + k] = -2.0 * (cs[j] * bv[j * d + k] - db[j * d + k]);
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![n, d], db)?);
                }
            }
            Op::Scale { x, factor } => {
                self.accumulate(grads, *x, g.map(|v| v * factor));
            }
            Op::LogSoftmax { x, axis } => {
                let (m, n) = g.dims2()?;
                let y = node.value.data();
                let mut dx = gd.to_vec();
                match axis {
                    Axis::Row => {
                        for i in 0..m {
                            let s: f64 = gd[i * n..(i + 1) * n].iter().sum();
                            for j in 0..n {
                                dx[i * n + j] -= y[i * n + j].exp() * s;
                            }
                        }
                    }
                    Axis::Column => {
                        let s = col_stats(m, n, gd);
                        for i in 0..m {
                            for j in 0..n {
                                dx[i * n + j] -= y[i * n + j].exp() * s[j];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![m, n], dx)?);
            }
            Op::Kl {
                pred,
                target,
                target_log,
                axis,
                direction,
            } => {
                let (m, n) = self.value(*pred).dims2()?;
                let count = match axis {
                    Axis::Row => m,
                    Axis::Column => n,
                } as f64;
                let scale = gd[0] / count;
                let p = self.value(*pred).data();
                let dp = match direction {
                    KlDirection::Forward => target.data().iter().map(|t| -t * scale).collect(),
                    KlDirection::Reverse => p
                        .iter()
                        .zip(target_log.data())
                        .map(|(&pk, &tl)| pk.exp() * (pk - tl + 1.0) * scale)
                        .collect(),
                };
                self.accumulate(grads, *pred, Tensor::new(vec![m, n], dp)?);
            }
            Op::Sum { x } => {
                let shape = self.value(*x).shape();
                self.accumulate(grads, *x, Tensor::full(shape, gd[0]));
            }
            Op::Square { x } => {
                let data = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(v, gi)| 2.0 * v * gi)
                    .collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Weighted { a, b, wa, wb } => {
                self.accumulate(grads, *a, g.map(|v| v * wa));
                self.accumulate(grads, *b, g.map(|v| v * wb));
            }
        }
        Ok(())
    }
}

fn unit_rows(
    data: &[f64],
    rows: usize,
    d: usize,
    eps: Option<f64>,
    side: &str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut unit = vec![0.0; rows * d];
    let mut norms = vec![0.0; rows];
    for i in 0..rows {
        let r = &data[i * d..(i + 1) * d];
        let mut norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        match eps {
            Some(e) => norm = norm.max(e),
            None if norm == 0.0 || !norm.is_finite() => {
                return Err(KpError::DegenerateInput(format!(
                    "row {i} of the {side} cosine operand has norm {norm}"
                )))
            }
            None => {}
        }
        norms[i] = norm;
        for k in 0..d {
            unit[i * d + k] = r[k] / norm;
        }
    }
    Ok((unit, norms))
}

/// `col[(c·kernel + k) × lout + t] = x[c × len + t + k]`.
fn im2col(x: &[f64], cin: usize, len: usize, kernel: usize, col: &mut [f64]) {
    let lout = len - kernel + 1;
    for c in 0..cin {
        for k in 0..kernel {
            let dst = &mut col[(c * kernel + k) * lout..(c * kernel + k + 1) * lout];
            dst.copy_from_slice(&x[c * len + k..c * len + k + lout]);
        }
    }
}

fn col2im_add(col: &[f64], cin: usize, len: usize, kernel: usize, dx: &mut [f64]) {
    let lout = len - kernel + 1;
    for c in 0..cin {
        for k in 0..kernel {
            let src = &col[(c * kernel + k) * lout..(c * kernel + k + 1) * lout];
            for (d, s) in dx[c * len + k..c * len + k + lout].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}
