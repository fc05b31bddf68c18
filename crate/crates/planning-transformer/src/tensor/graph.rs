//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every operation appends one node holding its inputs and the cached state
//! its backward rule needs. Nodes are created in topological order, so
//! [`Graph::backward`] is a single reverse sweep that visits each node once
//! and accumulates gradients into per-node buffers (a value feeding two
//! consumers therefore receives both contributions).

use super::{Float, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Handle to a value in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul {
        a: Var,
        b: Var,
    },
    /// Elementwise add; `b` may be a trailing-shape tensor broadcast over
    /// the leading rows of `a` (bias add).
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: Float,
    },
    Relu {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    SoftmaxRows {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<Float>,
        inv_std: Vec<Float>,
    },
    Attention(Box<AttentionState>),
    Dropout {
        x: Var,
        // Inverted-dropout multipliers: 0 or 1/(1-p).
        mask: Vec<Float>,
    },
    /// Row gather from a table by index; backward scatters into the table.
    Lookup {
        table: Var,
        indices: Vec<usize>,
    },
    /// Places src row i at output row rows[i]; untouched rows stay zero.
    ScatterRows {
        src: Var,
        rows: Vec<usize>,
    },
    MseMasked {
        pred: Var,
        target: Vec<Float>,
        mask: Vec<Float>,
        denom: Float,
    },
    /// Fixed-weight contraction to a scalar; linear, used by gradient checks.
    WeightedSum {
        x: Var,
        weights: Vec<Float>,
    },
}

struct AttentionState {
    q: Var,
    k: Var,
    v: Var,
    n_heads: usize,
    batch: usize,
    seq_len: usize,
    /// Post-softmax weights, pre-dropout: [batch][head][query][key].
    weights: Vec<Float>,
    /// Inverted-dropout multipliers over `weights`, when training.
    drop_mask: Option<Vec<Float>>,
    /// Per key position: true = masked out of attention (padding).
    pad: Vec<bool>,
}

struct Node {
    op: Op,
}

/// Execution mode; dropout is active only in [`Mode::Train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct Graph {
    nodes: Vec<Node>,
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<Float>>>,
    mode: Mode,
    rng: ChaCha8Rng,
}

fn dot(a: &[Float], b: &[Float]) -> Float {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn axpy(acc: &mut [Float], a: Float, x: &[Float]) {
    for (o, v) in acc.iter_mut().zip(x) {
        *o += a * v;
    }
}

impl Graph {
    pub fn new(mode: Mode, dropout_seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(dropout_seed),
        }
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval, 0)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[Float]> {
        self.grads[v.0].as_deref()
    }

    /// Copies the accumulated gradient for `v` into `t.grad`.
    pub fn write_grad(&self, v: Var, t: &mut Tensor) {
        t.grad = self.grads[v.0].clone();
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op });
        self.values.push(value);
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn leaf_from(&mut self, t: &Tensor) -> Var {
        let mut c = t.clone();
        c.grad = None;
        self.push(Op::Leaf, c)
    }

    // ── forward ops ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.values[a.0].as_matrix_dims();
        let (kb, n) = self.values[b.0].as_matrix_dims();
        assert_eq!(
            ka, kb,
            "shape mismatch in matmul: {:?} vs {:?}",
            self.values[a.0].shape, self.values[b.0].shape
        );
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, &self.values[a.0].data, &self.values[b.0].data, m, ka, n);
        let t = Tensor::new(vec![m, n], out).unwrap();
        self.push(Op::Matmul { a, b }, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (na, nb) = (self.values[a.0].numel(), self.values[b.0].numel());
        assert!(
            na == nb || (nb > 0 && na % nb == 0 && trailing_compatible(&self.values[a.0], &self.values[b.0])),
            "shape mismatch in add: {:?} vs {:?}",
            self.values[a.0].shape,
            self.values[b.0].shape
        );
        let mut data = self.values[a.0].data.clone();
        let bd = &self.values[b.0].data;
        for (i, v) in data.iter_mut().enumerate() {
            *v += bd[i % nb];
        }
        let t = Tensor::new(self.values[a.0].shape.clone(), data).unwrap();
        self.push(Op::Add { a, b }, t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (na, nb) = (self.values[a.0].numel(), self.values[b.0].numel());
        assert!(
            na == nb || (nb > 0 && na % nb == 0 && trailing_compatible(&self.values[a.0], &self.values[b.0])),
            "shape mismatch in mul: {:?} vs {:?}",
            self.values[a.0].shape,
            self.values[b.0].shape
        );
        let mut data = self.values[a.0].data.clone();
        let bd = &self.values[b.0].data;
        for (i, v) in data.iter_mut().enumerate() {
            *v *= bd[i % nb];
        }
        let t = Tensor::new(self.values[a.0].shape.clone(), data).unwrap();
        self.push(Op::Mul { a, b }, t)
    }

    pub fn scale(&mut self, x: Var, c: Float) -> Var {
        let data = self.values[x.0].data.iter().map(|v| v * c).collect();
        let t = Tensor::new(self.values[x.0].shape.clone(), data).unwrap();
        self.push(Op::Scale { x, c }, t)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.values[x.0]
            .data
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        let t = Tensor::new(self.values[x.0].shape.clone(), data).unwrap();
        self.push(Op::Relu { x }, t)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let data = self.values[x.0].data.iter().map(|v| v.tanh()).collect();
        let t = Tensor::new(self.values[x.0].shape.clone(), data).unwrap();
        self.push(Op::Tanh { x }, t)
    }

    /// Row-wise softmax with max subtraction for stability.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (rows, cols) = self.values[x.0].as_matrix_dims();
        let mut data = self.values[x.0].data.clone();
        for r in 0..rows {
            let row = &mut data[r * cols..(r + 1) * cols];
            let mx = row.iter().cloned().fold(Float::NEG_INFINITY, Float::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            let inv = 1.0 / sum;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let t = Tensor::new(self.values[x.0].shape.clone(), data).unwrap();
        self.push(Op::SoftmaxRows { x }, t)
    }

    /// Per-row normalization over the last dimension (epsilon 1e-5), then a
    /// learned affine: `y = (x - mean) / sqrt(var + eps) * gain + bias`.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        const EPS: Float = 1e-5;
        let (rows, d) = self.values[x.0].as_matrix_dims();
        assert_eq!(
            self.values[gain.0].numel(),
            d,
            "shape mismatch in layernorm: {:?} vs gain {:?}",
            self.values[x.0].shape,
            self.values[gain.0].shape
        );
        assert_eq!(
            self.values[bias.0].numel(),
            d,
            "shape mismatch in layernorm: {:?} vs bias {:?}",
            self.values[x.0].shape,
            self.values[bias.0].shape
        );
        let xd = &self.values[x.0].data;
        let g = &self.values[gain.0].data;
        let b = &self.values[bias.0].data;
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let xr = &xd[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<Float>() / d as Float;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<Float>() / d as Float;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..d {
                let xh = (xr[c] - mean) * inv;
                xhat[r * d + c] = xh;
                out[r * d + c] = xh * g[c] + b[c];
            }
        }
        let t = Tensor::new(self.values[x.0].shape.clone(), out).unwrap();
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            t,
        )
    }

    /// Multi-head causal attention over `batch` packed sequences.
    ///
    /// `q`, `k`, `v` are `(batch*seq_len) x d` with heads laid out as
    /// contiguous column blocks. Position `i` attends to positions `j <= i`
    /// within its own sequence; `pad[j]` keys carry zero weight. Attention
    /// dropout (when training) scales surviving weights by `1/(1-p)`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        n_heads: usize,
        batch: usize,
        seq_len: usize,
        pad: &[bool],
        dropout_p: Float,
    ) -> Var {
        let (rows, d) = self.values[q.0].as_matrix_dims();
        assert_eq!(rows, batch * seq_len, "attention rows vs batch*seq_len");
        assert_eq!(self.values[k.0].as_matrix_dims(), (rows, d));
        assert_eq!(self.values[v.0].as_matrix_dims(), (rows, d));
        assert_eq!(d % n_heads, 0, "d_model not divisible by n_heads");
        assert_eq!(pad.len(), rows);
        let dh = d / n_heads;
        let scale = 1.0 / (dh as Float).sqrt();

        let mut weights = vec![0.0; batch * n_heads * seq_len * seq_len];
        let drop_mask = if self.mode == Mode::Train && dropout_p > 0.0 {
            let keep = 1.0 - dropout_p;
            let inv = 1.0 / keep;
            Some(
                (0..weights.len())
                    .map(|_| {
                        if self.rng.gen::<f64>() < keep as f64 {
                            inv
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<Float>>(),
            )
        } else {
            None
        };

        let qd = &self.values[q.0].data;
        let kd = &self.values[k.0].data;
        let vd = &self.values[v.0].data;
        let mut out = vec![0.0; rows * d];
        for bi in 0..batch {
            for h in 0..n_heads {
                let col = h * dh;
                for i in 0..seq_len {
                    let qrow = &qd[(bi * seq_len + i) * d + col..][..dh];
                    let wrow_off = ((bi * n_heads + h) * seq_len + i) * seq_len;
                    // Scores over the causal, non-padded key set.
                    let mut mx = Float::NEG_INFINITY;
                    for j in 0..=i {
                        if pad[bi * seq_len + j] {
                            continue;
                        }
                        let krow = &kd[(bi * seq_len + j) * d + col..][..dh];
                        let s = dot(qrow, krow) * scale;
                        weights[wrow_off + j] = s;
                        if s > mx {
                            mx = s;
                        }
                    }
                    let mut sum = 0.0;
                    for j in 0..=i {
                        if pad[bi * seq_len + j] {
                            continue;
                        }
                        let e = (weights[wrow_off + j] - mx).exp();
                        weights[wrow_off + j] = e;
                        sum += e;
                    }
                    let inv = 1.0 / sum;
                    let orow_off = (bi * seq_len + i) * d + col;
                    for j in 0..=i {
                        if pad[bi * seq_len + j] {
                            continue;
                        }
                        weights[wrow_off + j] *= inv;
                        let mut w = weights[wrow_off + j];
                        if let Some(m) = &drop_mask {
                            w *= m[wrow_off + j];
                        }
                        if w != 0.0 {
                            let vrow = &vd[(bi * seq_len + j) * d + col..][..dh];
                            axpy(&mut out[orow_off..orow_off + dh], w, vrow);
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![rows, d], out).unwrap();
        self.push(
            Op::Attention(Box::new(AttentionState {
                q,
                k,
                v,
                n_heads,
                batch,
                seq_len,
                weights,
                drop_mask,
                pad: pad.to_vec(),
            })),
            t,
        )
    }

    /// Post-softmax attention weights of an attention node, pre-dropout:
    /// `(weights, batch, n_heads, seq_len)` indexed `[b][h][query][key]`.
    pub fn attention_weights(&self, attn: Var) -> (&[Float], usize, usize, usize) {
        match &self.nodes[attn.0].op {
            Op::Attention(st) => (&st.weights, st.batch, st.n_heads, st.seq_len),
            _ => panic!("attention_weights called on a non-attention node"),
        }
    }

    /// Inverted dropout; identity in eval mode or at p = 0.
    pub fn dropout(&mut self, x: Var, p: Float) -> Var {
        if self.mode == Mode::Eval || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let inv = 1.0 / keep;
        let mask: Vec<Float> = (0..self.values[x.0].numel())
            .map(|_| {
                if self.rng.gen::<f64>() < keep as f64 {
                    inv
                } else {
                    0.0
                }
            })
            .collect();
        let data = self.values[x.0]
            .data
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let t = Tensor::new(self.values[x.0].shape.clone(), data).unwrap();
        self.push(Op::Dropout { x, mask }, t)
    }

    /// Gathers rows of `table` at `indices`; gradients accumulate back into
    /// the table rows (embedding lookup).
    pub fn lookup(&mut self, table: Var, indices: &[usize]) -> Var {
        let (rows, d) = self.values[table.0].as_matrix_dims();
        for &i in indices {
            assert!(i < rows, "lookup index {i} out of range ({rows} rows)");
        }
        let td = &self.values[table.0].data;
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        let t = Tensor::new(vec![indices.len(), d], out).unwrap();
        self.push(
            Op::Lookup {
                table,
                indices: indices.to_vec(),
            },
            t,
        )
    }

    /// Builds an `out_rows x d` tensor with src row i placed at `rows[i]`
    /// and zeros elsewhere. Target rows must be distinct.
    pub fn scatter_rows(&mut self, src: Var, rows: &[usize], out_rows: usize) -> Var {
        let (n, d) = self.values[src.0].as_matrix_dims();
        assert_eq!(n, rows.len(), "scatter_rows: src rows vs index count");
        let sd = &self.values[src.0].data;
        let mut out = vec![0.0; out_rows * d];
        for (i, &r) in rows.iter().enumerate() {
            assert!(r < out_rows, "scatter_rows target {r} out of range");
            out[r * d..(r + 1) * d].copy_from_slice(&sd[i * d..(i + 1) * d]);
        }
        let t = Tensor::new(vec![out_rows, d], out).unwrap();
        self.push(
            Op::ScatterRows {
                src,
                rows: rows.to_vec(),
            },
            t,
        )
    }

    /// Masked mean squared error:
    /// `sum(mask * (pred - target)^2) / max(1, sum(mask))`.
    /// Gradient flows only through `pred` at unmasked positions. An all-zero
    /// mask yields 0 with zero gradient.
    pub fn mse_masked(&mut self, pred: Var, target: &Tensor, mask: &Tensor) -> Var {
        let p = &self.values[pred.0];
        assert_eq!(
            p.numel(),
            target.numel(),
            "shape mismatch in mse_masked: {:?} vs {:?}",
            p.shape,
            target.shape
        );
        assert_eq!(
            p.numel(),
            mask.numel(),
            "shape mismatch in mse_masked: {:?} vs mask {:?}",
            p.shape,
            mask.shape
        );
        let count: Float = mask.data.iter().sum();
        if count == 0.0 {
            log::warn!("mse_masked: all-zero mask; loss fixed at 0");
        }
        let denom = count.max(1.0);
        let mut sum = 0.0;
        for i in 0..p.numel() {
            let d = p.data[i] - target.data[i];
            sum += mask.data[i] * d * d;
        }
        let t = Tensor::scalar(sum / denom);
        self.push(
            Op::MseMasked {
                pred,
                target: target.data.clone(),
                mask: mask.data.clone(),
                denom,
            },
            t,
        )
    }

    /// Scalar `sum(x * weights)` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor) -> Var {
        assert_eq!(self.values[x.0].numel(), weights.numel());
        let s = dot(&self.values[x.0].data, &weights.data);
        let t = Tensor::scalar(s);
        self.push(
            Op::WeightedSum {
                x,
                weights: weights.data.clone(),
            },
            t,
        )
    }

    // ── backward ─────────────────────────────────────────────────────────

    fn acc(grads: &mut [Option<Vec<Float>>], v: Var, len: usize) -> &mut Vec<Float> {
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Reverse sweep from a scalar loss. Gradients of all reachable nodes
    /// (including leaves) are accumulated and readable via [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(
            self.values[loss.0].numel(),
            1,
            "backward requires a scalar loss"
        );
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let dout = match &self.grads[id] {
                Some(g) => g.clone(),
                None => continue,
            };
            // Borrow values immutably and grads mutably via split borrows.
            let (values, grads) = (&self.values, &mut self.grads);
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = values[a.0].as_matrix_dims();
                    let (_, n) = values[b.0].as_matrix_dims();
                    let ad = &values[a.0].data;
                    let bd = &values[b.0].data;
                    {
                        let ga = Self::acc(grads, *a, m * k);
                        // dA[i,kk] += dot(dC[i,:], B[kk,:])
                        for i in 0..m {
                            let drow = &dout[i * n..(i + 1) * n];
                            let garow = &mut ga[i * k..(i + 1) * k];
                            for (kk, gv) in garow.iter_mut().enumerate() {
                                *gv += dot(drow, &bd[kk * n..(kk + 1) * n]);
                            }
                        }
                    }
                    {
                        let gb = Self::acc(grads, *b, k * n);
                        // dB[kk,:] += A[i,kk] * dC[i,:]
                        for i in 0..m {
                            let drow = &dout[i * n..(i + 1) * n];
                            let arow = &ad[i * k..(i + 1) * k];
                            for (kk, &aik) in arow.iter().enumerate() {
                                if aik != 0.0 {
                                    axpy(&mut gb[kk * n..(kk + 1) * n], aik, drow);
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (na, nb) = (values[a.0].numel(), values[b.0].numel());
                    {
                        let ga = Self::acc(grads, *a, na);
                        for (g, d) in ga.iter_mut().zip(&dout) {
                            *g += d;
                        }
                    }
                    {
                        let gb = Self::acc(grads, *b, nb);
                        for (i, d) in dout.iter().enumerate() {
                            gb[i % nb] += d;
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let (na, nb) = (values[a.0].numel(), values[b.0].numel());
                    let ad = values[a.0].data.clone();
                    let bd = values[b.0].data.clone();
                    {
                        let ga = Self::acc(grads, *a, na);
                        for i in 0..na {
                            ga[i] += dout[i] * bd[i % nb];
                        }
                    }
                    {
                        let gb = Self::acc(grads, *b, nb);
                        for i in 0..na {
                            gb[i % nb] += dout[i] * ad[i];
                        }
                    }
                }
                Op::Scale { x, c } => {
                    let c = *c;
                    let gx = Self::acc(grads, *x, dout.len());
                    for (g, d) in gx.iter_mut().zip(&dout) {
                        *g += c * d;
                    }
                }
                Op::Relu { x } => {
                    let xd = &values[x.0].data;
                    let gx = Self::acc(grads, *x, dout.len());
                    for i in 0..dout.len() {
                        // relu'(0) = 0 by convention.
                        if xd[i] > 0.0 {
                            gx[i] += dout[i];
                        }
                    }
                }
                Op::Tanh { x } => {
                    let yd = &values[id].data;
                    let gx = Self::acc(grads, *x, dout.len());
                    for i in 0..dout.len() {
                        gx[i] += dout[i] * (1.0 - yd[i] * yd[i]);
                    }
                }
                Op::SoftmaxRows { x } => {
                    let yd = &values[id].data;
                    let (rows, cols) = values[id].as_matrix_dims();
                    let gx = Self::acc(grads, *x, rows * cols);
                    for r in 0..rows {
                        let y = &yd[r * cols..(r + 1) * cols];
                        let dy = &dout[r * cols..(r + 1) * cols];
                        let rowdot = dot(y, dy);
                        let gr = &mut gx[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            gr[c] += y[c] * (dy[c] - rowdot);
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (rows, d) = values[x.0].as_matrix_dims();
                    let g = values[gain.0].data.clone();
                    {
                        let gg = Self::acc(grads, *gain, d);
                        for r in 0..rows {
                            for c in 0..d {
                                gg[c] += dout[r * d + c] * xhat[r * d + c];
                            }
                        }
                    }
                    {
                        let gb = Self::acc(grads, *bias, d);
                        for r in 0..rows {
                            for c in 0..d {
                                gb[c] += dout[r * d + c];
                            }
                        }
                    }
                    let xhat = xhat.clone();
                    let inv_std = inv_std.clone();
                    let gx = Self::acc(grads, *x, rows * d);
                    for r in 0..rows {
                        let xh = &xhat[r * d..(r + 1) * d];
                        let dy = &dout[r * d..(r + 1) * d];
                        let mut mean_dyg = 0.0;
                        let mut mean_dyg_xh = 0.0;
                        for c in 0..d {
                            let dyg = dy[c] * g[c];
                            mean_dyg += dyg;
                            mean_dyg_xh += dyg * xh[c];
                        }
                        mean_dyg /= d as Float;
                        mean_dyg_xh /= d as Float;
                        let gr = &mut gx[r * d..(r + 1) * d];
                        for c in 0..d {
                            let dyg = dy[c] * g[c];
                            gr[c] += inv_std[r] * (dyg - mean_dyg - xh[c] * mean_dyg_xh);
                        }
                    }
                }
                Op::Attention(st) => {
                    attention_backward(st, values, grads, &dout);
                }
                Op::Dropout { x, mask } => {
                    let mask = mask.clone();
                    let gx = Self::acc(grads, *x, dout.len());
                    for i in 0..dout.len() {
                        gx[i] += dout[i] * mask[i];
                    }
                }
                Op::Lookup { table, indices } => {
                    let (_, d) = values[table.0].as_matrix_dims();
                    let indices = indices.clone();
                    let n = values[table.0].numel();
                    let gt = Self::acc(grads, *table, n);
                    for (i, &idx) in indices.iter().enumerate() {
                        axpy(&mut gt[idx * d..(idx + 1) * d], 1.0, &dout[i * d..(i + 1) * d]);
                    }
                }
                Op::ScatterRows { src, rows } => {
                    let (n, d) = values[src.0].as_matrix_dims();
                    let rows = rows.clone();
                    let gs = Self::acc(grads, *src, n * d);
                    for (i, &r) in rows.iter().enumerate() {
                        axpy(&mut gs[i * d..(i + 1) * d], 1.0, &dout[r * d..(r + 1) * d]);
                    }
                }
                Op::MseMasked {
                    pred,
                    target,
                    mask,
                    denom,
                } => {
                    let scale = 2.0 * dout[0] / denom;
                    let pd = values[pred.0].data.clone();
                    let target = target.clone();
                    let mask = mask.clone();
                    let gp = Self::acc(grads, *pred, pd.len());
                    for i in 0..pd.len() {
                        gp[i] += scale * mask[i] * (pd[i] - target[i]);
                    }
                }
                Op::WeightedSum { x, weights } => {
                    let weights = weights.clone();
                    let gx = Self::acc(grads, *x, weights.len());
                    for i in 0..weights.len() {
                        gx[i] += dout[0] * weights[i];
                    }
                }
            }
        }
    }
}

fn attention_backward(
    st: &AttentionState,
    values: &[Tensor],
    grads: &mut [Option<Vec<Float>>],
    dout: &[Float],
) {
    let (rows, d) = values[st.q.0].as_matrix_dims();
    let dh = d / st.n_heads;
    let scale = 1.0 / (dh as Float).sqrt();
    let l = st.seq_len;
    let qd = &values[st.q.0].data;
    let kd = &values[st.k.0].data;
    let vd = &values[st.v.0].data;

    let mut gq = vec![0.0; rows * d];
    let mut gk = vec![0.0; rows * d];
    let mut gv = vec![0.0; rows * d];
    let mut da = vec![0.0; l];
    let mut ds = vec![0.0; l];

    for bi in 0..st.batch {
        for h in 0..st.n_heads {
            let col = h * dh;
            for i in 0..l {
                let wrow_off = ((bi * st.n_heads + h) * l + i) * l;
                let dorow = &dout[(bi * l + i) * d + col..][..dh];
                // dV and dA through O = (A . dropmask) V
                for j in 0..=i {
                    if st.pad[bi * l + j] {
                        da[j] = 0.0;
                        continue;
                    }
                    let m = st.drop_mask.as_ref().map_or(1.0, |m| m[wrow_off + j]);
                    let a = st.weights[wrow_off + j];
                    let w_eff = a * m;
                    if w_eff != 0.0 {
                        axpy(
                            &mut gv[(bi * l + j) * d + col..(bi * l + j) * d + col + dh],
                            w_eff,
                            dorow,
                        );
                    }
                    let vrow = &vd[(bi * l + j) * d + col..][..dh];
                    da[j] = dot(dorow, vrow) * m;
                }
                // Softmax jacobian within the row.
                let mut rowdot = 0.0;
                for j in 0..=i {
                    rowdot += da[j] * st.weights[wrow_off + j];
                }
                for j in 0..=i {
                    ds[j] = st.weights[wrow_off + j] * (da[j] - rowdot);
                }
                // dQ, dK through S = scale * Q K^T
                let gqrow_off = (bi * l + i) * d + col;
                for j in 0..=i {
                    if ds[j] == 0.0 {
                        continue;
                    }
                    let krow = &kd[(bi * l + j) * d + col..][..dh];
                    axpy(&mut gq[gqrow_off..gqrow_off + dh], ds[j] * scale, krow);
                    let qrow = &qd[(bi * l + i) * d + col..][..dh];
                    axpy(
                        &mut gk[(bi * l + j) * d + col..(bi * l + j) * d + col + dh],
                        ds[j] * scale,
                        qrow,
                    );
                }
            }
        }
    }
    for (dst, src) in [(st.q, gq), (st.k, gk), (st.v, gv)] {
        let g = Graph::acc(grads, dst, rows * d);
        for (a, b) in g.iter_mut().zip(&src) {
            *a += b;
        }
    }
}

/// `b`'s shape must equal the trailing suffix of `a`'s shape.
fn trailing_compatible(a: &Tensor, b: &Tensor) -> bool {
    let (sa, sb) = (&a.shape, &b.shape);
    sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == sb[..]
}

/// Row-major matmul kernel: `out[m x n] += a[m x k] * b[k x n]`.
/// The i-k-j loop order keeps all inner accesses contiguous.
fn matmul_into(out: &mut [Float], a: &[Float], b: &[Float], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik != 0.0 {
                axpy(orow, aik, &b[kk * n..(kk + 1) * n]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[Vec<Float>]) -> Tensor {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::eval();
        let i2 = g.leaf(t2(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let m = g.leaf(t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let c = g.matmul(i2, m);
        assert_eq!(g.value(c).data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut g = Graph::eval();
        let a = g.leaf(t2(&[vec![1.0, 2.0]]));
        let b = g.leaf(t2(&[vec![3.0], vec![4.0]]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data, vec![11.0]);
    }

    #[test]
    #[should_panic(expected = "shape mismatch in matmul")]
    fn matmul_shape_mismatch_names_shapes() {
        let mut g = Graph::eval();
        let a = g.leaf(Tensor::zeros(vec![2, 3]));
        let b = g.leaf(Tensor::zeros(vec![4, 2]));
        g.matmul(a, b);
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::eval();
        let x = g.leaf(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn add_zero_is_identity() {
        let mut g = Graph::eval();
        let x = g.leaf(Tensor::from_vec(vec![1.5, -2.0, 0.25]));
        let z = g.leaf(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
        let y = g.add(x, z);
        assert_eq!(g.value(y).data, g.value(x).data);
    }

    #[test]
    fn softmax_uniform_on_zero_row() {
        let mut g = Graph::eval();
        let x = g.leaf(t2(&[vec![0.0, 0.0, 0.0, 0.0]]));
        let y = g.softmax_rows(x);
        for v in &g.value(y).data {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_large_inputs_no_overflow() {
        let mut g = Graph::eval();
        let x = g.leaf(t2(&[vec![1000.0, 1000.0]]));
        let y = g.softmax_rows(x);
        let d = &g.value(y).data;
        assert!(d.iter().all(|v| v.is_finite()));
        assert!((d[0] - 0.5).abs() < 1e-6 && (d[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::eval();
        let x = g.leaf(t2(&[vec![3.0, -2.0, 0.5], vec![10.0, 9.0, 8.0]]));
        let y = g.softmax_rows(x);
        for r in 0..2 {
            let s: Float = g.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn layernorm_constant_vector_is_zero() {
        let mut g = Graph::eval();
        let x = g.leaf(t2(&[vec![3.0, 3.0, 3.0, 3.0]]));
        let gain = g.leaf(Tensor::from_vec(vec![1.0; 4]));
        let bias = g.leaf(Tensor::from_vec(vec![0.0; 4]));
        let y = g.layernorm(x, gain, bias);
        for v in &g.value(y).data {
            assert!(v.abs() < 1e-3);
        }
    }

    #[test]
    fn layernorm_already_normalized() {
        let mut g = Graph::eval();
        let x = g.leaf(t2(&[vec![1.0, -1.0]]));
        let gain = g.leaf(Tensor::from_vec(vec![1.0; 2]));
        let bias = g.leaf(Tensor::from_vec(vec![0.0; 2]));
        let y = g.layernorm(x, gain, bias);
        let d = &g.value(y).data;
        assert!((d[0] - 1.0).abs() < 1e-4 && (d[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn mse_identical_inputs_is_zero() {
        let mut g = Graph::eval();
        let p = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let m = Tensor::from_vec(vec![1.0, 1.0, 1.0]);
        let l = g.mse_masked(p, &t, &m);
        assert_eq!(g.value(l).data[0], 0.0);
    }

    #[test]
    fn mse_definition() {
        let mut g = Graph::eval();
        let p = g.leaf(Tensor::from_vec(vec![2.0]));
        let t = Tensor::from_vec(vec![0.0]);
        let m = Tensor::from_vec(vec![1.0]);
        let l = g.mse_masked(p, &t, &m);
        assert_eq!(g.value(l).data[0], 4.0);
    }

    #[test]
    fn mse_all_zero_mask_returns_zero_with_zero_grad() {
        let mut g = Graph::eval();
        let p = g.leaf(Tensor::from_vec(vec![5.0, -1.0]));
        let t = Tensor::from_vec(vec![0.0, 0.0]);
        let m = Tensor::from_vec(vec![0.0, 0.0]);
        let l = g.mse_masked(p, &t, &m);
        assert_eq!(g.value(l).data[0], 0.0);
        g.backward(l);
        assert!(g.grad(p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_matches_brute_force_recomputation() {
        let mut g = Graph::eval();
        let pv = vec![0.3, -1.2, 2.0, 0.7, 0.0, 4.0];
        let tv = vec![0.1, 0.2, -2.0, 0.7, 1.0, 3.5];
        let mv = vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let p = g.leaf(Tensor::from_vec(pv.clone()));
        let l = g.mse_masked(
            p,
            &Tensor::from_vec(tv.clone()),
            &Tensor::from_vec(mv.clone()),
        );
        let mut s = 0.0;
        let mut c = 0.0;
        for i in 0..pv.len() {
            s += mv[i] * (pv[i] - tv[i]) * (pv[i] - tv[i]);
            c += mv[i];
        }
        let expect = s / c.max(1.0);
        assert!((g.value(l).data[0] - expect).abs() < 1e-6);
    }

    #[test]
    fn fan_out_accumulates_both_contributions() {
        // y = sum(x) + sum(x) should produce grad 2 everywhere, matching a
        // duplicated-input graph y = sum(x) + sum(x_copy).
        let mut g = Graph::eval();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let w = Tensor::from_vec(vec![1.0, 1.0]);
        let s1 = g.weighted_sum(x, &w);
        let s2 = g.weighted_sum(x, &w);
        let tot = g.add(s1, s2);
        g.backward(tot);
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);

        let mut g2 = Graph::eval();
        let xa = g2.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let xb = g2.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let sa = g2.weighted_sum(xa, &w);
        let sb = g2.weighted_sum(xb, &w);
        let tot2 = g2.add(sa, sb);
        g2.backward(tot2);
        let dup: Vec<Float> = g2
            .grad(xa)
            .unwrap()
            .iter()
            .zip(g2.grad(xb).unwrap())
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(g.grad(x).unwrap(), dup.as_slice());
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let run = || {
            let mut g = Graph::eval();
            let x = g.leaf(t2(&[vec![0.3, -0.7, 1.1], vec![0.0, 2.0, -1.0]]));
            let y = g.softmax_rows(x);
            let z = g.tanh(y);
            g.value(z).data.clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut g = Graph::eval();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let y = g.dropout(x, 0.5);
        assert_eq!(x, y);
    }

    #[test]
    fn attention_rows_sum_to_one_and_causal() {
        let mut g = Graph::eval();
        let l = 4;
        let d = 4;
        let mk = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Tensor::randn(vec![l, d], 1.0, &mut rng)
        };
        let q = g.leaf(mk(1));
        let k = g.leaf(mk(2));
        let v = g.leaf(mk(3));
        let pad = vec![false, false, false, true];
        let a = g.attention(q, k, v, 2, 1, l, &pad, 0.0);
        let (w, _, heads, sl) = g.attention_weights(a);
        for h in 0..heads {
            for i in 0..sl {
                let row = &w[(h * sl + i) * sl..(h * sl + i + 1) * sl];
                let sum: Float = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-5, "row {i} sums to {sum}");
                for (j, &wv) in row.iter().enumerate() {
                    if j > i || pad[j] {
                        assert_eq!(wv, 0.0, "weight at ({i},{j}) should be masked");
                    }
                }
            }
        }
    }
}
