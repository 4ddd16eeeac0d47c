use std::sync::Arc;

use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Directed edge list over `node_count` nodes. Edge `e` carries a message
/// from `src[e]` into `dst[e]`; softmax segments are grouped by `dst`.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    node_count: usize,
}

impl EdgeIndex {
    pub fn new(src: Vec<usize>, dst: Vec<usize>, node_count: usize) -> Result<Self, AutodiffError> {
        if src.len() != dst.len() {
            return Err(AutodiffError::InvalidData(format!(
                "{} sources but {} destinations",
                src.len(),
                dst.len()
            )));
        }
        if let Some(&bad) = src.iter().chain(&dst).find(|&&i| i >= node_count) {
            return Err(AutodiffError::InvalidData(format!(
                "edge endpoint {bad} out of range for {node_count} nodes"
            )));
        }
        Ok(Self {
            src: src.into(),
            dst: dst.into(),
            node_count,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    RowSoftmax(Var),
    Scale(Var, f64),
    ConcatRows(Vec<Var>),
    RowSelect(Var, Arc<[usize]>),
    Mean(Var),
    Sum(Var),
    AbsSum(Var),
    EdgeScores {
        query: Var,
        key: Var,
        edges: EdgeIndex,
        heads: usize,
        scale: f64,
    },
    SegmentSoftmax(Var, EdgeIndex),
    EdgeAggregate {
        weights: Var,
        values: Var,
        edges: EdgeIndex,
        heads: usize,
    },
    HeadMean(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive applications in evaluation order and replays them in
/// reverse to accumulate gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// `c = beta * c + op(a) · op(b)` where `op(a)` is m×k and `op(b)` is k×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the length assertions above cover every index touched for the
    // given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf. Its `requires_grad` flag decides whether gradients flow into it.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let rg = tensor.requires_grad();
        self.push(tensor, Op::Leaf, rg)
    }

    /// Records a trainable copy of `tensor`.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        let t = Tensor::from_parts(tensor.shape().to_vec(), tensor.data().to_vec());
        self.push(t, Op::Leaf, true)
    }

    /// Records a non-trainable value.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    /// Gradient accumulated by the last [`Tape::backward`]; zeros when `v` was unreachable.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; self.node(v).value.numel()])
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize), AutodiffError> {
        let s = self.node(v).value.shape();
        if s.len() != 2 {
            return Err(AutodiffError::ShapeMismatch {
                op,
                left: s.to_vec(),
                right: vec![],
            });
        }
        Ok((s[0], s[1]))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            left: self.node(a).value.shape().to_vec(),
            right: self.node(b).value.shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    fn zip_same(&mut self, a: Var, b: Var, op_name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, AutodiffError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.mismatch(op_name, a, b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, data), op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-c row (shape `[c]` or `[1, c]`) to every row of an n×c matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (n, c) = self.dims2(a, "add_row")?;
        let rv = self.value(row);
        let ok = match rv.shape() {
            [len] => *len == c,
            [1, len] => *len == c,
            _ => false,
        };
        if !ok {
            return Err(self.mismatch("add_row", a, row));
        }
        let bias = rv.data();
        let mut data = self.value(a).data().to_vec();
        for r in 0..n {
            for (x, b) in data[r * c..(r + 1) * c].iter_mut().zip(bias) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Tensor::from_parts(vec![n, c], data), Op::AddRow(a, row), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x.max(0.0)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::from_parts(shape, data), Op::Relu(a), rg)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let (n, c) = self.dims2(a, "row_softmax")?;
        let mut data = self.value(a).data().to_vec();
        for r in 0..n {
            softmax_in_place(&mut data[r * c..(r + 1) * c]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![n, c], data), Op::RowSoftmax(a), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x * s).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::from_parts(shape, data), Op::Scale(a, s), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = *parts
            .first()
            .ok_or_else(|| AutodiffError::InvalidData("concat_rows of nothing".into()))?;
        let (_, c) = self.dims2(first, "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (r, pc) = self.dims2(p, "concat_rows")?;
            if pc != c {
                return Err(self.mismatch("concat_rows", first, p));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * c);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(vec![rows, c], data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn row_select(&mut self, a: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        let (n, c) = self.dims2(a, "row_select")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(AutodiffError::ShapeMismatch {
                op: "row_select",
                left: vec![n, c],
                right: vec![bad],
            });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            data.extend_from_slice(&src[r * c..(r + 1) * c]);
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::from_parts(vec![rows.len(), c], data),
            Op::RowSelect(a, rows.into()),
            rg,
        ))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().sum::<f64>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Sum(a), rg)
    }

    pub fn abs_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().map(|x| x.abs()).sum::<f64>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::AbsSum(a), rg)
    }

    /// Per-edge, per-head scaled dot products `scale * <q[dst], k[src]>` over
    /// each head's column block. Output is `edges × heads`.
    pub fn edge_scores(
        &mut self,
        query: Var,
        key: Var,
        edges: &EdgeIndex,
        heads: usize,
        scale: f64,
    ) -> Result<Var, AutodiffError> {
        let (n, c) = self.dims2(query, "edge_scores")?;
        if self.value(key).shape() != [n, c] || n != edges.node_count() || heads == 0 || c % heads != 0 {
            return Err(self.mismatch("edge_scores", query, key));
        }
        let w = c / heads;
        let q = self.value(query).data();
        let k = self.value(key).data();
        let mut out = vec![0.0; edges.len() * heads];
        for (e, (&s, &d)) in edges.src().iter().zip(edges.dst()).enumerate() {
            let qr = &q[d * c..(d + 1) * c];
            let kr = &k[s * c..(s + 1) * c];
            for h in 0..heads {
                let dot: f64 = qr[h * w..(h + 1) * w]
                    .iter()
                    .zip(&kr[h * w..(h + 1) * w])
                    .map(|(a, b)| a * b)
                    .sum();
                out[e * heads + h] = dot * scale;
            }
        }
        let rg = self.rg(query) || self.rg(key);
        Ok(self.push(
            Tensor::from_parts(vec![edges.len(), heads], out),
            Op::EdgeScores {
                query,
                key,
                edges: edges.clone(),
                heads,
                scale,
            },
            rg,
        ))
    }

    /// Softmax of each column over the edges sharing a destination node.
    pub fn segment_softmax(&mut self, scores: Var, edges: &EdgeIndex) -> Result<Var, AutodiffError> {
        let (e_count, heads) = self.dims2(scores, "segment_softmax")?;
        if e_count != edges.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "segment_softmax",
                left: vec![e_count, heads],
                right: vec![edges.len()],
            });
        }
        let x = self.value(scores).data();
        let n = edges.node_count();
        let mut max = vec![f64::NEG_INFINITY; n * heads];
        for (e, &d) in edges.dst().iter().enumerate() {
            for h in 0..heads {
                let m = &mut max[d * heads + h];
                *m = m.max(x[e * heads + h]);
            }
        }
        let mut out = vec![0.0; e_count * heads];
        let mut denom = vec![0.0; n * heads];
        for (e, &d) in edges.dst().iter().enumerate() {
            for h in 0..heads {
                let v = (x[e * heads + h] - max[d * heads + h]).exp();
                out[e * heads + h] = v;
                denom[d * heads + h] += v;
            }
        }
        for (e, &d) in edges.dst().iter().enumerate() {
            for h in 0..heads {
                out[e * heads + h] /= denom[d * heads + h];
            }
        }
        let rg = self.rg(scores);
        Ok(self.push(
            Tensor::from_parts(vec![e_count, heads], out),
            Op::SegmentSoftmax(scores, edges.clone()),
            rg,
        ))
    }

    /// `out[dst] += weights[e, h] * values[src]` per head column block.
    /// Nodes without incoming edges receive zeros.
    pub fn edge_aggregate(
        &mut self,
        weights: Var,
        values: Var,
        edges: &EdgeIndex,
        heads: usize,
    ) -> Result<Var, AutodiffError> {
        let (n, c) = self.dims2(values, "edge_aggregate")?;
        if self.value(weights).shape() != [edges.len(), heads]
            || n != edges.node_count()
            || heads == 0
            || c % heads != 0
        {
            return Err(self.mismatch("edge_aggregate", weights, values));
        }
        let w = c / heads;
        let a = self.value(weights).data();
        let v = self.value(values).data();
        let mut out = vec![0.0; n * c];
        for (e, (&s, &d)) in edges.src().iter().zip(edges.dst()).enumerate() {
            for h in 0..heads {
                let coef = a[e * heads + h];
                let dst_block = &mut out[d * c + h * w..d * c + (h + 1) * w];
                let src_block = &v[s * c + h * w..s * c + (h + 1) * w];
                for (o, x) in dst_block.iter_mut().zip(src_block) {
                    *o += coef * x;
                }
            }
        }
        let rg = self.rg(weights) || self.rg(values);
        Ok(self.push(
            Tensor::from_parts(vec![n, c], out),
            Op::EdgeAggregate {
                weights,
                values,
                edges: edges.clone(),
                heads,
            },
            rg,
        ))
    }

    /// Averages the `heads` column blocks of an n×(heads·w) matrix into n×w.
    pub fn head_mean(&mut self, a: Var, heads: usize) -> Result<Var, AutodiffError> {
        let (n, c) = self.dims2(a, "head_mean")?;
        if heads == 0 || c % heads != 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "head_mean",
                left: vec![n, c],
                right: vec![heads],
            });
        }
        let w = c / heads;
        let x = self.value(a).data();
        let inv = 1.0 / heads as f64;
        let mut out = vec![0.0; n * w];
        for r in 0..n {
            for j in 0..w {
                let s: f64 = (0..heads).map(|h| x[r * c + h * w + j]).sum();
                out[r * w + j] = s * inv;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![n, w], out), Op::HeadMean(a, heads), rg))
    }

    /// Reverse pass from a scalar loss. Replaces gradients from any previous pass.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let lv = &self.node(loss).value;
        if lv.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..count).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(buf);
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                let n = self.value(*b).cols();
                let bd = self.value(*b).data();
                self.accumulate(grads, *a, |ga| gemm(m, n, k, g, false, bd, true, ga, 1.0));
                let ad = self.value(*a).data();
                self.accumulate(grads, *b, |gb| gemm(k, m, n, ad, true, g, false, gb, 1.0));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.accumulate(grads, v, |gv| add_into(gv, g));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                let c = out.cols();
                self.accumulate(grads, *row, |gr| {
                    for chunk in g.chunks_exact(c) {
                        add_into(gr, chunk);
                    }
                });
            }
            Op::Mul(a, b) => {
                let bd = self.value(*b).data();
                self.accumulate(grads, *a, |ga| {
                    for ((x, gi), bi) in ga.iter_mut().zip(g).zip(bd) {
                        *x += gi * bi;
                    }
                });
                let ad = self.value(*a).data();
                self.accumulate(grads, *b, |gb| {
                    for ((x, gi), ai) in gb.iter_mut().zip(g).zip(ad) {
                        *x += gi * ai;
                    }
                });
            }
            Op::Relu(a) => {
                let ad = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((x, gi), ai) in ga.iter_mut().zip(g).zip(ad) {
                        if *ai > 0.0 {
                            *x += gi;
                        }
                    }
                });
            }
            Op::RowSoftmax(a) => {
                let c = out.cols();
                let y = out.data();
                self.accumulate(grads, *a, |ga| {
                    for ((gar, gr), yr) in ga.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((x, gi), yi) in gar.iter_mut().zip(gr).zip(yr) {
                            *x += yi * (gi - dot);
                        }
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |ga| {
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += s * gi;
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    self.accumulate(grads, p, |gp| add_into(gp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::RowSelect(a, rows) => {
                let c = out.cols();
                self.accumulate(grads, *a, |ga| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut ga[r * c..(r + 1) * c], &g[i * c..(i + 1) * c]);
                    }
                });
            }
            Op::Mean(a) => {
                let share = g[0] / self.value(*a).numel() as f64;
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += share));
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::AbsSum(a) => {
                let ad = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for (x, ai) in ga.iter_mut().zip(ad) {
                        if *ai > 0.0 {
                            *x += g[0];
                        } else if *ai < 0.0 {
                            *x -= g[0];
                        }
                    }
                });
            }
            Op::EdgeScores {
                query,
                key,
                edges,
                heads,
                scale,
            } => {
                let c = self.value(*query).cols();
                let w = c / heads;
                let kd = self.value(*key).data();
                self.accumulate(grads, *query, |gq| {
                    for (e, (&s, &d)) in edges.src().iter().zip(edges.dst()).enumerate() {
                        for h in 0..*heads {
                            let coef = g[e * heads + h] * scale;
                            let o = h * w;
                            for j in 0..w {
                                gq[d * c + o + j] += coef * kd[s * c + o + j];
                            }
                        }
                    }
                });
                let qd = self.value(*query).data();
                self.accumulate(grads, *key, |gk| {
                    for (e, (&s, &d)) in edges.src().iter().zip(edges.dst()).enumerate() {
                        for h in 0..*heads {
                            let coef = g[e * heads + h] * scale;
                            let o = h * w;
                            for j in 0..w {
                                gk[s * c + o + j] += coef * qd[d * c + o + j];
                            }
                        }
                    }
                });
            }
            Op::SegmentSoftmax(x, edges) => {
                let heads = out.cols();
                let y = out.data();
                let mut dot = vec![0.0; edges.node_count() * heads];
                for (e, &d) in edges.dst().iter().enumerate() {
                    for h in 0..heads {
                        dot[d * heads + h] += y[e * heads + h] * g[e * heads + h];
                    }
                }
                self.accumulate(grads, *x, |gx| {
                    for (e, &d) in edges.dst().iter().enumerate() {
                        for h in 0..heads {
                            let i = e * heads + h;
                            gx[i] += y[i] * (g[i] - dot[d * heads + h]);
                        }
                    }
                });
            }
            Op::EdgeAggregate {
                weights,
                values,
                edges,
                heads,
            } => {
                let c = self.value(*values).cols();
                let w = c / heads;
                let vd = self.value(*values).data();
                self.accumulate(grads, *weights, |gw| {
                    for (e, (&s, &d)) in edges.src().iter().zip(edges.dst()).enumerate() {
                        for h in 0..*heads {
                            let o = h * w;
                            gw[e * heads + h] += g[d * c + o..d * c + o + w]
                                .iter()
                                .zip(&vd[s * c + o..s * c + o + w])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                });
                let wd = self.value(*weights).data();
                self.accumulate(grads, *values, |gv| {
                    for (e, (&s, &d)) in edges.src().iter().zip(edges.dst()).enumerate() {
                        for h in 0..*heads {
                            let coef = wd[e * heads + h];
                            let o = h * w;
                            for j in 0..w {
                                gv[s * c + o + j] += coef * g[d * c + o + j];
                            }
                        }
                    }
                });
            }
            Op::HeadMean(a, heads) => {
                let w = out.cols();
                let c = w * heads;
                let inv = 1.0 / *heads as f64;
                self.accumulate(grads, *a, |ga| {
                    for (r, gr) in g.chunks_exact(w).enumerate() {
                        for h in 0..*heads {
                            for (j, gi) in gr.iter().enumerate() {
                                ga[r * c + h * w + j] += gi * inv;
                            }
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
