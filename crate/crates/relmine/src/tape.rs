//! Define-by-run reverse-mode differentiation over f64 matrices. Every
//! training stage builds a fresh tape per example, calls `backward` on a
//! scalar loss node, and folds the resulting parameter gradients in a
//! fixed order, which keeps runs bit-reproducible at any thread count.

use std::collections::HashMap;

use ndarray::{concatenate, Array2, Axis};
use sha2::{Digest, Sha256};

/// Named parameter matrices plus a trainable flag per entry. Frozen
/// parameters enter tapes as constants, so their gradients are
/// structurally zero rather than merely discarded.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    trainable: Vec<bool>,
    index: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            trainable: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>, trainable: bool) -> usize {
        assert!(
            !self.index.contains_key(name),
            "parameter {name:?} registered twice"
        );
        let idx = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.trainable.push(trainable);
        self.index.insert(name.to_string(), idx);
        idx
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn value(&self, idx: usize) -> &Array2<f64> {
        &self.values[idx]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Array2<f64> {
        &mut self.values[idx]
    }

    pub fn is_trainable(&self, idx: usize) -> bool {
        self.trainable[idx]
    }

    pub fn set_trainable(&mut self, idx: usize, trainable: bool) {
        self.trainable[idx] = trainable;
    }

    /// Freeze every parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for i in 0..self.names.len() {
            if self.names[i].starts_with(prefix) {
                self.trainable[i] = false;
                n += 1;
            }
        }
        n
    }

    /// Indices of parameters whose name starts with `prefix`.
    pub fn indices_with_prefix(&self, prefix: &str) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&i| self.names[i].starts_with(prefix))
            .collect()
    }

    pub fn zero_grads(&self) -> Vec<Array2<f64>> {
        self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect()
    }

    /// Hex digest over names, shapes, and little-endian f64 bytes of the
    /// parameters matching `prefix` (all parameters when empty).
    pub fn digest(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for i in 0..self.names.len() {
            if !self.names[i].starts_with(prefix) {
                continue;
            }
            h.update(self.names[i].as_bytes());
            h.update([0u8]);
            let (r, c) = self.values[i].dim();
            h.update((r as u64).to_le_bytes());
            h.update((c as u64).to_le_bytes());
            for v in self.values[i].iter() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    /// a @ b.T; the common orientation for row-major linear layers.
    MatMulBT(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    SumAll(Var),
    MeanAll(Var),
    RowSoftmax(Var),
    /// Mean cross entropy of row logits against `Some` targets.
    CrossEntropy(Var, Vec<Option<usize>>),
    /// Mean binary cross entropy of an n-by-1 logit column against 0/1 targets.
    BceWithLogits(Var, Vec<f64>),
    /// Rows scaled by fixed coefficients.
    RowScale(Var, Vec<f64>),
    /// out[dst] += w * inputs[k][src] for each (k, src, dst, w).
    MultiScatter {
        inputs: Vec<Var>,
        triplets: Vec<(u32, u32, u32, f64)>,
    },
    /// sum_b coeff[0, b] * mats[b].
    LinComb { coeff: Var, mats: Vec<Var> },
    RmsNormRows(Var, f64),
    /// Identity forward; the backward sweep stops here.
    StopGrad,
}

struct TapeNode {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(TapeNode { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, a: Array2<f64>) -> Var {
        self.push(a, Op::Const)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.push(Array2::from_elem((1, 1), x), Op::Const)
    }

    pub fn ones(&mut self, r: usize, c: usize) -> Var {
        self.push(Array2::ones((r, c)), Op::Const)
    }

    /// Frozen parameters become constants: no gradient is ever recorded.
    pub fn param(&mut self, store: &ParamStore, idx: usize) -> Var {
        let value = store.value(idx).clone();
        if store.is_trainable(idx) {
            self.push(value, Op::Param(idx))
        } else {
            self.push(value, Op::Const)
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a), self.dim(b), "add shape mismatch");
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a), self.dim(b), "sub shape mismatch");
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a), self.dim(b), "mul shape mismatch");
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = &self.nodes[a.0].value * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a).1, self.dim(b).0, "matmul inner dim");
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a).1, self.dim(b).1, "matmul_bt inner dim");
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value.t());
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a).0, self.dim(b).0, "concat_cols rows");
        let v = concatenate(
            Axis(1),
            &[self.nodes[a.0].value.view(), self.nodes[b.0].value.view()],
        )
        .expect("concat_cols");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = concatenate(Axis(0), &views).expect("concat_rows");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let src = &self.nodes[a.0].value;
        let mut v = Array2::zeros((rows.len(), src.ncols()));
        for (k, &r) in rows.iter().enumerate() {
            v.row_mut(k).assign(&src.row(r));
        }
        self.push(v, Op::GatherRows(a, rows.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.nodes[a.0]
            .value
            .slice(ndarray::s![start..start + len, ..])
            .to_owned();
        self.push(v, Op::SliceRows(a, start, len))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.nodes[a.0]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(v, Op::SliceCols(a, start, len))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        self.push(v, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len() as f64;
        let v = Array2::from_elem((1, 1), self.nodes[a.0].value.sum() / n);
        self.push(v, Op::MeanAll(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(&self.nodes[a.0].value);
        self.push(v, Op::RowSoftmax(a))
    }

    /// Mean cross entropy over rows with a `Some` target.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let x = &self.nodes[logits.0].value;
        assert_eq!(x.nrows(), targets.len(), "cross_entropy target count");
        let mut total = 0.0;
        let mut count = 0usize;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                let row = x.row(r);
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[*t];
                count += 1;
            }
        }
        assert!(count > 0, "cross_entropy with no targets");
        let v = Array2::from_elem((1, 1), total / count as f64);
        self.push(v, Op::CrossEntropy(logits, targets))
    }

    /// Mean binary cross entropy; `logits` must be n-by-1.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        let x = &self.nodes[logits.0].value;
        assert_eq!(x.ncols(), 1, "bce_with_logits expects a column");
        assert_eq!(x.nrows(), targets.len(), "bce_with_logits target count");
        let mut total = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let z = x[(r, 0)];
            total += z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln();
        }
        let v = Array2::from_elem((1, 1), total / targets.len() as f64);
        self.push(v, Op::BceWithLogits(logits, targets))
    }

    pub fn row_scale(&mut self, a: Var, coefs: &[f64]) -> Var {
        let src = &self.nodes[a.0].value;
        assert_eq!(src.nrows(), coefs.len(), "row_scale length");
        let mut v = src.clone();
        for (mut row, &c) in v.rows_mut().into_iter().zip(coefs) {
            row *= c;
        }
        self.push(v, Op::RowScale(a, coefs.to_vec()))
    }

    /// Sparse scatter-accumulate across several input matrices, all with
    /// the same column count: out[dst] += w * inputs[k][src].
    pub fn multi_scatter(
        &mut self,
        inputs: &[Var],
        out_rows: usize,
        triplets: Vec<(u32, u32, u32, f64)>,
    ) -> Var {
        assert!(!inputs.is_empty());
        let cols = self.dim(inputs[0]).1;
        for i in inputs {
            assert_eq!(self.dim(*i).1, cols, "multi_scatter column mismatch");
        }
        let mut v = Array2::zeros((out_rows, cols));
        for &(k, src, dst, w) in &triplets {
            let row = self.nodes[inputs[k as usize].0].value.row(src as usize);
            let mut out = v.row_mut(dst as usize);
            out.scaled_add(w, &row);
        }
        self.push(v, Op::MultiScatter { inputs: inputs.to_vec(), triplets })
    }

    /// Weighted sum of equally shaped matrices; `coeff` is 1-by-B.
    pub fn lin_comb(&mut self, coeff: Var, mats: &[Var]) -> Var {
        assert_eq!(self.dim(coeff).0, 1, "lin_comb coeff row");
        assert_eq!(self.dim(coeff).1, mats.len(), "lin_comb coeff width");
        let dim = self.dim(mats[0]);
        let mut v = Array2::zeros(dim);
        for (b, m) in mats.iter().enumerate() {
            assert_eq!(self.dim(*m), dim, "lin_comb shape mismatch");
            let c = self.nodes[coeff.0].value[(0, b)];
            v.scaled_add(c, &self.nodes[m.0].value);
        }
        self.push(v, Op::LinComb { coeff, mats: mats.to_vec() })
    }

    pub fn rms_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let src = &self.nodes[a.0].value;
        let mut v = src.clone();
        for mut row in v.rows_mut() {
            let m = row.iter().map(|x| x * x).sum::<f64>() / row.len() as f64;
            let r = (m + eps).sqrt();
            row.mapv_inplace(|x| x / r);
        }
        self.push(v, Op::RmsNormRows(a, eps))
    }

    pub fn stop_grad(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.clone();
        self.push(v, Op::StopGrad)
    }

    // Composite helpers built from primitive ops.

    /// Broadcast-add a 1-by-d row to every row of an n-by-d matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let n = self.dim(a).0;
        let ones = self.ones(n, 1);
        let tiled = self.matmul(ones, row);
        self.add(a, tiled)
    }

    /// Repeat a 1-by-d row n times.
    pub fn tile_row(&mut self, row: Var, n: usize) -> Var {
        let ones = self.ones(n, 1);
        self.matmul(ones, row)
    }

    /// x @ w.T + b with b broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul_bt(x, w);
        self.add_row(y, b)
    }

    fn dim(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Reverse sweep from a 1-by-1 root. Returns per-node gradients.
    pub fn backward(&self, root: Var) -> TapeGrads {
        assert_eq!(self.dim(root), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..self.nodes.len()).rev() {
            let g = match &grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Const | Op::Param(_) => {}
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &(-&g));
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.nodes[b.0].value;
                    let db = &g * &self.nodes[a.0].value;
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, &(&g * *c)),
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.nodes[b.0].value.t());
                    let db = self.nodes[a.0].value.t().dot(&g);
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::MatMulBT(a, b) => {
                    let da = g.dot(&self.nodes[b.0].value);
                    let db = g.t().dot(&self.nodes[a.0].value);
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Relu(a) => {
                    let da = &g * &self.nodes[i].value.mapv(|y| if y > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut grads, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let da = &g * &(y * &y.mapv(|v| 1.0 - v));
                    acc(&mut grads, *a, &da);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.dim(*a).1;
                    let da = g.slice(ndarray::s![.., ..ca]).to_owned();
                    let db = g.slice(ndarray::s![.., ca..]).to_owned();
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let r = self.dim(*p).0;
                        let dp = g.slice(ndarray::s![start..start + r, ..]).to_owned();
                        acc(&mut grads, *p, &dp);
                        start += r;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let mut da = Array2::zeros(self.dim(*a));
                    for (k, &r) in rows.iter().enumerate() {
                        let mut row = da.row_mut(r);
                        row += &g.row(k);
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::SliceRows(a, start, len) => {
                    let mut da = Array2::zeros(self.dim(*a));
                    da.slice_mut(ndarray::s![*start..start + len, ..]).assign(&g);
                    acc(&mut grads, *a, &da);
                }
                Op::SliceCols(a, start, len) => {
                    let mut da = Array2::zeros(self.dim(*a));
                    da.slice_mut(ndarray::s![.., *start..start + len]).assign(&g);
                    acc(&mut grads, *a, &da);
                }
                Op::Transpose(a) => acc(&mut grads, *a, &g.t().to_owned()),
                Op::SumAll(a) => {
                    let da = Array2::from_elem(self.dim(*a), g[(0, 0)]);
                    acc(&mut grads, *a, &da);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].value.len() as f64;
                    let da = Array2::from_elem(self.dim(*a), g[(0, 0)] / n);
                    acc(&mut grads, *a, &da);
                }
                Op::RowSoftmax(a) => {
                    let y = &self.nodes[i].value;
                    let mut da = Array2::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let gy: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..y.ncols() {
                            da[(r, c)] = y[(r, c)] * (g[(r, c)] - gy);
                        }
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::CrossEntropy(logits, targets) => {
                    let x = &self.nodes[logits.0].value;
                    let p = row_softmax(x);
                    let count = targets.iter().flatten().count() as f64;
                    let mut da = Array2::zeros(x.raw_dim());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            for c in 0..x.ncols() {
                                let ind = if c == *t { 1.0 } else { 0.0 };
                                da[(r, c)] = (p[(r, c)] - ind) * g[(0, 0)] / count;
                            }
                        }
                    }
                    acc(&mut grads, *logits, &da);
                }
                Op::BceWithLogits(logits, targets) => {
                    let x = &self.nodes[logits.0].value;
                    let n = targets.len() as f64;
                    let mut da = Array2::zeros(x.raw_dim());
                    for (r, &y) in targets.iter().enumerate() {
                        da[(r, 0)] = (sigmoid(x[(r, 0)]) - y) * g[(0, 0)] / n;
                    }
                    acc(&mut grads, *logits, &da);
                }
                Op::RowScale(a, coefs) => {
                    let mut da = g.clone();
                    for (mut row, &c) in da.rows_mut().into_iter().zip(coefs) {
                        row *= c;
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::MultiScatter { inputs, triplets } => {
                    let mut das: Vec<Array2<f64>> =
                        inputs.iter().map(|v| Array2::zeros(self.dim(*v))).collect();
                    for &(k, src, dst, w) in triplets {
                        let mut row = das[k as usize].row_mut(src as usize);
                        row.scaled_add(w, &g.row(dst as usize));
                    }
                    for (v, da) in inputs.iter().zip(das) {
                        acc(&mut grads, *v, &da);
                    }
                }
                Op::LinComb { coeff, mats } => {
                    let mut dc = Array2::zeros((1, mats.len()));
                    for (b, m) in mats.iter().enumerate() {
                        dc[(0, b)] = (&g * &self.nodes[m.0].value).sum();
                        let c = self.nodes[coeff.0].value[(0, b)];
                        acc(&mut grads, *m, &(&g * c));
                    }
                    acc(&mut grads, *coeff, &dc);
                }
                Op::RmsNormRows(a, eps) => {
                    // y_j = x_j / r with r = sqrt(mean(x^2) + eps), so
                    // dL/dx_k = g_k / r - (sum_j g_j x_j) x_k / (n r^3).
                    let x = &self.nodes[a.0].value;
                    let mut da = Array2::zeros(x.raw_dim());
                    for r in 0..x.nrows() {
                        let n = x.ncols() as f64;
                        let m = x.row(r).iter().map(|v| v * v).sum::<f64>() / n;
                        let rms = (m + eps).sqrt();
                        let gx: f64 = g.row(r).iter().zip(x.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..x.ncols() {
                            da[(r, c)] = g[(r, c)] / rms - gx * x[(r, c)] / (n * rms.powi(3));
                        }
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::StopGrad => {}
            }
        }
        TapeGrads { node: grads }
    }

    /// Fold node gradients into per-parameter gradients, zeros included,
    /// aligned with the store. A parameter used twice accumulates.
    pub fn param_grads(&self, grads: &TapeGrads, store: &ParamStore) -> Vec<Array2<f64>> {
        let mut out = store.zero_grads();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(p) = node.op {
                if let Some(g) = &grads.node[i] {
                    out[p] += g;
                }
            }
        }
        out
    }
}

pub struct TapeGrads {
    node: Vec<Option<Array2<f64>>>,
}

impl TapeGrads {
    pub fn of(&self, v: Var) -> Option<&Array2<f64>> {
        self.node[v.0].as_ref()
    }
}

fn acc(grads: &mut [Option<Array2<f64>>], v: Var, delta: &Array2<f64>) {
    match &mut grads[v.0] {
        Some(g) => *g += delta,
        slot => *slot = Some(delta.clone()),
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

pub fn row_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}
