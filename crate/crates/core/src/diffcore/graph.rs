//! Define-by-run expression graph with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` walks it once in reverse.

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    ScalarMul(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    Relu(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    RowLpNormScale { input: Var, p: f64, eps: f64 },
    Conv1dValid { input: Var, filters: Var },
    MaxPoolFull { input: Var, argmax: Vec<usize> },
    Sum(Var),
    SumAbs(Var),
    Transpose(Var),
    BroadcastAddRow(Var, Var),
    Reshape(Var),
    PairwiseAdd(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: OpKind,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
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

    /// A differentiable leaf (a parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(OpKind::Leaf, value, true)
    }

    /// A leaf that never receives gradients (inputs, masks, fixed matrices).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(OpKind::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &OpKind {
        &self.nodes[v.0].op
    }

    /// Gradient accumulated on `v` by the last `backward`, or zeros.
    pub fn grad(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[v.0].value.shape()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    fn push(&mut self, op: OpKind, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.value(v).shape();
        if shape.len() != 2 {
            return Err(Error::shape(op, shape, &[]));
        }
        Ok((shape[0], shape[1]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(OpKind::MatMul(a, b), Tensor::new(vec![m, n], out)?, rg))
    }

    fn zip_with(&mut self, a: Var, b: Var, op: OpKind, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, OpKind::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, OpKind::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, OpKind::Hadamard(a, b), "hadamard", |x, y| x * y)
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.rg(&[a]);
        self.push(OpKind::ScalarMul(a, c), value, rg)
    }

    fn unary(&mut self, a: Var, op: OpKind, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(op, value, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, OpKind::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, OpKind::Sigmoid(a), sigmoid)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, OpKind::Elu(a), elu)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, OpKind::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.matrix_dims(*parts.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?, "concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_rows")?;
            if c != cols {
                return Err(Error::shape("concat_rows", &[rows, cols], &[r, c]));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(OpKind::ConcatRows(parts.to_vec()), Tensor::new(vec![rows, cols], data)?, rg))
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.matrix_dims(*parts.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?, "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_cols")?;
            if r != rows {
                return Err(Error::shape("concat_cols", &[rows], &[r, c]));
            }
            widths.push(c);
        }
        let cols: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(OpKind::ConcatCols(parts.to_vec()), Tensor::new(vec![rows, cols], data)?, rg))
    }

    /// Scales row `i` by `1 / max(‖row_i‖_p, eps)`.
    pub fn row_lp_norm_scale(&mut self, a: Var, p: f64, eps: f64) -> Result<Var> {
        if p < 1.0 || eps <= 0.0 {
            return Err(Error::Contract(format!("row normalization needs p >= 1 and eps > 0, got p={p}, eps={eps}")));
        }
        let (r, c) = self.matrix_dims(a, "row_lp_norm_scale")?;
        let src = self.value(a);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = src.row_slice(i);
            let denom = lp_norm(row, p).max(eps);
            data.extend(row.iter().map(|x| x / denom));
        }
        let rg = self.rg(&[a]);
        Ok(self.push(OpKind::RowLpNormScale { input: a, p, eps }, Tensor::new(vec![r, c], data)?, rg))
    }

    /// Valid cross-correlation of every row of `input (R×T)` with every
    /// row of `filters (K×Q)`; output row `r·K + k` holds the `T−Q+1`
    /// responses of input row `r` to filter `k`. No bias.
    pub fn conv1d_valid(&mut self, input: Var, filters: Var) -> Result<Var> {
        let (r, t) = self.matrix_dims(input, "conv1d_valid")?;
        let (k, q) = self.matrix_dims(filters, "conv1d_valid")?;
        if q > t || q == 0 {
            return Err(Error::shape("conv1d_valid", &[r, t], &[k, q]));
        }
        let l = t - q + 1;
        let (x, f) = (self.value(input).data(), self.value(filters).data());
        let mut out = vec![0.0; r * k * l];
        for ri in 0..r {
            let xr = &x[ri * t..(ri + 1) * t];
            for ki in 0..k {
                let fk = &f[ki * q..(ki + 1) * q];
                let o = &mut out[(ri * k + ki) * l..(ri * k + ki + 1) * l];
                for (s, os) in o.iter_mut().enumerate() {
                    *os = xr[s..s + q].iter().zip(fk).map(|(a, b)| a * b).sum();
                }
            }
        }
        let rg = self.rg(&[input, filters]);
        Ok(self.push(OpKind::Conv1dValid { input, filters }, Tensor::new(vec![r * k, l], out)?, rg))
    }

    /// Maximum over each row, giving an `M×1` column. Ties go to the lowest index.
    pub fn maxpool_full(&mut self, a: Var) -> Result<Var> {
        let (m, l) = self.matrix_dims(a, "maxpool_full")?;
        if l == 0 {
            return Err(Error::shape("maxpool_full", &[m, l], &[]));
        }
        let src = self.value(a);
        let mut argmax = Vec::with_capacity(m);
        let mut data = Vec::with_capacity(m);
        for i in 0..m {
            let row = src.row_slice(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            argmax.push(best);
            data.push(row[best]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(OpKind::MaxPoolFull { input: a, argmax }, Tensor::new(vec![m, 1], data)?, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(OpKind::Sum(a), Tensor::scalar(s), rg)
    }

    pub fn sum_abs(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x.abs()).sum();
        let rg = self.rg(&[a]);
        self.push(OpKind::SumAbs(a), Tensor::scalar(s), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.matrix_dims(a, "transpose")?;
        let value = self.value(a).transpose();
        let rg = self.rg(&[a]);
        Ok(self.push(OpKind::Transpose(a), value, rg))
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix, or a `1×1`
    /// scalar to every entry.
    pub fn broadcast_add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "broadcast_add_row")?;
        let (br, bc) = self.matrix_dims(bias, "broadcast_add_row")?;
        if br != 1 || (bc != n && bc != 1) {
            return Err(Error::shape("broadcast_add_row", &[m, n], &[br, bc]));
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            for (j, x) in row.iter_mut().enumerate() {
                *x += if bc == 1 { b[0] } else { b[j] };
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(OpKind::BroadcastAddRow(a, bias), Tensor::new(vec![m, n], data)?, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(OpKind::Reshape(a), value, rg))
    }

    /// For `s (N×d)` and `t (M×d)`, row `i·M + j` of the `(N·M)×d` result
    /// is `s_i + t_j`.
    pub fn pairwise_add(&mut self, s: Var, t: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(s, "pairwise_add")?;
        let (m, d2) = self.matrix_dims(t, "pairwise_add")?;
        if d != d2 {
            return Err(Error::shape("pairwise_add", &[n, d], &[m, d2]));
        }
        let (sv, tv) = (self.value(s), self.value(t));
        let mut data = Vec::with_capacity(n * m * d);
        for i in 0..n {
            let si = sv.row_slice(i);
            for j in 0..m {
                data.extend(si.iter().zip(tv.row_slice(j)).map(|(a, b)| a + b));
            }
        }
        let rg = self.rg(&[s, t]);
        Ok(self.push(OpKind::PairwiseAdd(s, t), Tensor::new(vec![n * m, d], data)?, rg))
    }

    /// Reverse sweep from a scalar output. Gradients of earlier calls are
    /// discarded, so repeated calls give identical results.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, found shape {:?}",
                self.value(output).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(Tensor::full(self.value(output).shape(), 1.0));
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            if matches!(self.nodes[i].op, OpKind::Leaf) {
                self.grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        let Graph { nodes, grads } = self;
        let nodes: &[Node] = nodes;
        let value = |v: Var| &nodes[v.0].value;
        let op = nodes[i].op.clone();
        let gd = g.data();
        match op {
            OpKind::Leaf => {}
            OpKind::MatMul(a, b) => {
                let (m, k) = (value(a).rows(), value(a).cols());
                let n = value(b).cols();
                let bv = value(b).data();
                accumulate(nodes, grads, a, |ga| gemm_nt_acc(gd, bv, ga, m, n, k));
                let av = value(a).data();
                accumulate(nodes, grads, b, |gb| gemm_tn_acc(av, gd, gb, m, k, n));
            }
            OpKind::Add(a, b) => {
                accumulate(nodes, grads, a, |ga| axpy(ga, gd, 1.0));
                accumulate(nodes, grads, b, |gb| axpy(gb, gd, 1.0));
            }
            OpKind::Sub(a, b) => {
                accumulate(nodes, grads, a, |ga| axpy(ga, gd, 1.0));
                accumulate(nodes, grads, b, |gb| axpy(gb, gd, -1.0));
            }
            OpKind::Hadamard(a, b) => {
                let bv = value(b).data();
                accumulate(nodes, grads, a, |ga| {
                    for ((x, g), y) in ga.iter_mut().zip(gd).zip(bv) {
                        *x += g * y;
                    }
                });
                let av = value(a).data();
                accumulate(nodes, grads, b, |gb| {
                    for ((x, g), y) in gb.iter_mut().zip(gd).zip(av) {
                        *x += g * y;
                    }
                });
            }
            OpKind::ScalarMul(a, c) => accumulate(nodes, grads, a, |ga| axpy(ga, gd, c)),
            OpKind::Tanh(a) => {
                let y = nodes[i].value.data();
                accumulate(nodes, grads, a, |ga| {
                    for ((x, g), y) in ga.iter_mut().zip(gd).zip(y) {
                        *x += g * (1.0 - y * y);
                    }
                });
            }
            OpKind::Sigmoid(a) => {
                let y = nodes[i].value.data();
                accumulate(nodes, grads, a, |ga| {
                    for ((x, g), y) in ga.iter_mut().zip(gd).zip(y) {
                        *x += g * y * (1.0 - y);
                    }
                });
            }
            OpKind::Elu(a) => {
                let input = value(a).data();
                accumulate(nodes, grads, a, |ga| {
                    for ((x, g), u) in ga.iter_mut().zip(gd).zip(input) {
                        *x += g * elu_grad(*u);
                    }
                });
            }
            OpKind::Relu(a) => {
                let input = value(a).data();
                accumulate(nodes, grads, a, |ga| {
                    for ((x, g), u) in ga.iter_mut().zip(gd).zip(input) {
                        if *u > 0.0 {
                            *x += g;
                        }
                    }
                });
            }
            OpKind::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = value(p).len();
                    let chunk = &gd[offset..offset + len];
                    accumulate(nodes, grads, p, |gp| axpy(gp, chunk, 1.0));
                    offset += len;
                }
            }
            OpKind::ConcatCols(parts) => {
                let total = g.cols();
                let mut col = 0;
                for p in parts {
                    let (r, c) = (value(p).rows(), value(p).cols());
                    accumulate(nodes, grads, p, |gp| {
                        for row in 0..r {
                            for j in 0..c {
                                gp[row * c + j] += gd[row * total + col + j];
                            }
                        }
                    });
                    col += c;
                }
            }
            OpKind::RowLpNormScale { input, p, eps } => {
                let x = value(input);
                let c = x.cols();
                accumulate(nodes, grads, input, |ga| {
                    for r in 0..x.rows() {
                        let row = x.row_slice(r);
                        let gr = &gd[r * c..(r + 1) * c];
                        let out = &mut ga[r * c..(r + 1) * c];
                        let norm = lp_norm(row, p);
                        if norm > eps {
                            let dot: f64 = gr.iter().zip(row).map(|(g, a)| g * a).sum();
                            let scale = dot / (norm * norm);
                            for j in 0..c {
                                let dn = row[j].signum() * row[j].abs().powf(p - 1.0) / norm.powf(p - 1.0);
                                out[j] += gr[j] / norm - scale * dn;
                            }
                        } else {
                            for j in 0..c {
                                out[j] += gr[j] / eps;
                            }
                        }
                    }
                });
            }
            OpKind::Conv1dValid { input, filters } => {
                let (r, t) = (value(input).rows(), value(input).cols());
                let (k, q) = (value(filters).rows(), value(filters).cols());
                let l = t - q + 1;
                let f = value(filters).data();
                accumulate(nodes, grads, input, |gx| {
                    for ri in 0..r {
                        for ki in 0..k {
                            let grow = &gd[(ri * k + ki) * l..(ri * k + ki + 1) * l];
                            for (s, &gv) in grow.iter().enumerate() {
                                for tau in 0..q {
                                    gx[ri * t + s + tau] += gv * f[ki * q + tau];
                                }
                            }
                        }
                    }
                });
                let x = value(input).data();
                accumulate(nodes, grads, filters, |gf| {
                    for ri in 0..r {
                        for ki in 0..k {
                            let grow = &gd[(ri * k + ki) * l..(ri * k + ki + 1) * l];
                            for (s, &gv) in grow.iter().enumerate() {
                                for tau in 0..q {
                                    gf[ki * q + tau] += gv * x[ri * t + s + tau];
                                }
                            }
                        }
                    }
                });
            }
            OpKind::MaxPoolFull { input, argmax } => {
                let l = value(input).cols();
                accumulate(nodes, grads, input, |ga| {
                    for (row, &j) in argmax.iter().enumerate() {
                        ga[row * l + j] += gd[row];
                    }
                });
            }
            OpKind::Sum(a) => {
                let s = gd[0];
                accumulate(nodes, grads, a, |ga| ga.iter_mut().for_each(|x| *x += s));
            }
            OpKind::SumAbs(a) => {
                let s = gd[0];
                let input = value(a).data();
                accumulate(nodes, grads, a, |ga| {
                    for (x, u) in ga.iter_mut().zip(input) {
                        // sign(0) = 0: the subgradient at the kink
                        if *u > 0.0 {
                            *x += s;
                        } else if *u < 0.0 {
                            *x -= s;
                        }
                    }
                });
            }
            OpKind::Transpose(a) => {
                let gt = g.transpose();
                accumulate(nodes, grads, a, |ga| axpy(ga, gt.data(), 1.0));
            }
            OpKind::BroadcastAddRow(a, bias) => {
                accumulate(nodes, grads, a, |ga| axpy(ga, gd, 1.0));
                let n = g.cols();
                accumulate(nodes, grads, bias, |gb| {
                    if gb.len() == 1 && n != 1 {
                        gb[0] += gd.iter().sum::<f64>();
                    } else {
                        for row in gd.chunks(n.max(1)) {
                            axpy(gb, row, 1.0);
                        }
                    }
                });
            }
            OpKind::Reshape(a) => accumulate(nodes, grads, a, |ga| axpy(ga, gd, 1.0)),
            OpKind::PairwiseAdd(s, t) => {
                let (n, d) = (value(s).rows(), value(s).cols());
                let m = value(t).rows();
                accumulate(nodes, grads, s, |gs| {
                    for i in 0..n {
                        for j in 0..m {
                            let row = &gd[(i * m + j) * d..(i * m + j + 1) * d];
                            axpy(&mut gs[i * d..(i + 1) * d], row, 1.0);
                        }
                    }
                });
                accumulate(nodes, grads, t, |gt| {
                    for i in 0..n {
                        for j in 0..m {
                            let row = &gd[(i * m + j) * d..(i * m + j + 1) * d];
                            axpy(&mut gt[j * d..(j + 1) * d], row, 1.0);
                        }
                    }
                });
            }
        }
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
    if !nodes[v.0].requires_grad {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape()));
    f(slot.data_mut());
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn lp_norm(row: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        row.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else if p == 1.0 {
        row.iter().map(|x| x.abs()).sum()
    } else {
        row.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}
