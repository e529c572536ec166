//! Reverse-mode differentiation over a recorded sequence of small dense
//! operations. Node values live in one arena in recording order, so the
//! backward sweep is a single reverse pass over the nodes.

use nalgebra::DMatrix;

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    /// `W x + b`
    Affine { w: ParamId, b: Option<ParamId>, x: NodeId },
    /// `W x + U h + b`
    Gate { w: ParamId, x: NodeId, u: ParamId, h: NodeId, b: ParamId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Square(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    Symmetrize(NodeId),
    LowerFactor { raw: NodeId },
    GaussianNll { e: NodeId, p: NodeId },
    Mean(Vec<NodeId>),
}

#[derive(Debug, Clone)]
struct Node {
    off: usize,
    rows: usize,
    cols: usize,
    op: Op,
}

impl Node {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn span(&self) -> std::ops::Range<usize> {
        self.off..self.off + self.len()
    }
}

/// Forward record of one computation. Parameters are read from the borrowed
/// store and never copied into the tape (except through [`Tape::param`]).
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    vals: Vec<f64>,
}

/// Result of a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    spans: Vec<(usize, usize)>,
    nodes: Vec<f64>,
    /// Flat gradient in the store's ordering.
    pub params: Vec<f64>,
}

impl Gradients {
    pub fn node(&self, id: NodeId) -> &[f64] {
        let (off, len) = self.spans[id.0];
        &self.nodes[off..off + len]
    }
}

/// Dot product with four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ca, ra) = a[..n].as_chunks::<4>();
    let (cb, rb) = b[..n].as_chunks::<4>();
    let mut acc = [0.0; 4];
    for (x, y) in ca.iter().zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a x`
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Lower Cholesky factor of a row-major `m x m` matrix (lower triangle read).
pub(crate) fn small_cholesky(p: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = p[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        for i in (j + 1)..m {
            let mut s = p[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b`.
pub(crate) fn small_chol_solve(l: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..m {
        for k in 0..i {
            y[i] -= l[i * m + k] * y[k];
        }
        y[i] /= l[i * m + i];
    }
    for i in (0..m).rev() {
        for k in (i + 1)..m {
            y[i] -= l[k * m + i] * y[k];
        }
        y[i] /= l[i * m + i];
    }
    y
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new(), vals: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.vals[self.nodes[id.0].span()]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    pub fn matrix(&self, id: NodeId) -> DMatrix<f64> {
        let (r, c) = self.shape(id);
        DMatrix::from_row_slice(r, c, self.value(id))
    }

    fn span(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.off, n.len())
    }

    fn push<F>(&mut self, rows: usize, cols: usize, op: Op, fill: F) -> NodeId
    where
        F: FnOnce(&[f64], &ParamStore, &mut [f64]),
    {
        let off = self.vals.len();
        self.vals.resize(off + rows * cols, 0.0);
        let (before, out) = self.vals.split_at_mut(off);
        fill(before, self.params, out);
        self.nodes.push(Node { off, rows, cols, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a constant or input (row-major data).
    pub fn constant(&mut self, rows: usize, cols: usize, data: &[f64]) -> NodeId {
        assert_eq!(rows * cols, data.len(), "constant data does not match its shape");
        self.push(rows, cols, Op::Leaf, |_, _, out| out.copy_from_slice(data))
    }

    pub fn vector(&mut self, data: &[f64]) -> NodeId {
        self.constant(data.len(), 1, data)
    }

    pub fn constant_matrix(&mut self, m: &DMatrix<f64>) -> NodeId {
        let data = crate::linalg::flatten_row_major(m);
        self.constant(m.nrows(), m.ncols(), &data)
    }

    /// Copies a parameter onto the tape as a node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let info = self.params.info(id);
        let (r, c) = (info.rows, info.cols);
        self.push(r, c, Op::Param(id), |_, ps, out| out.copy_from_slice(ps.value(id)))
    }

    fn expect_vector(&self, id: NodeId, len: usize, what: &str) -> Result<()> {
        let (r, c) = self.shape(id);
        if c != 1 || r != len {
            return Err(Error::dim(format!("{what}: expected a {len}-vector, got {r}x{c}")));
        }
        Ok(())
    }

    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: NodeId) -> Result<NodeId> {
        let wi = self.params.info(w);
        let (r, c) = (wi.rows, wi.cols);
        self.expect_vector(x, c, "affine input")?;
        if let Some(b) = b {
            if self.params.info(b).len() != r {
                return Err(Error::dim("affine bias length"));
            }
        }
        let (xo, _) = self.span(x);
        Ok(self.push(r, 1, Op::Affine { w, b, x }, |vals, ps, out| {
            let wv = ps.value(w);
            let xv = &vals[xo..xo + c];
            for (o, row) in out.iter_mut().zip(wv.chunks_exact(c)) {
                *o = dot(row, xv);
            }
            if let Some(b) = b {
                for (o, bv) in out.iter_mut().zip(ps.value(b)) {
                    *o += bv;
                }
            }
        }))
    }

    pub fn gate(&mut self, w: ParamId, x: NodeId, u: ParamId, h: NodeId, b: ParamId) -> Result<NodeId> {
        let (wi, ui) = (self.params.info(w), self.params.info(u));
        let (r, dx, dh) = (wi.rows, wi.cols, ui.cols);
        if ui.rows != r || self.params.info(b).len() != r {
            return Err(Error::dim("gate weights disagree on output size"));
        }
        self.expect_vector(x, dx, "gate input")?;
        self.expect_vector(h, dh, "gate state")?;
        let ((xo, _), (ho, _)) = (self.span(x), self.span(h));
        Ok(self.push(r, 1, Op::Gate { w, x, u, h, b }, |vals, ps, out| {
            let (wv, uv, bv) = (ps.value(w), ps.value(u), ps.value(b));
            let xv = &vals[xo..xo + dx];
            let hv = &vals[ho..ho + dh];
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&wv[i * dx..(i + 1) * dx], xv) + dot(&uv[i * dh..(i + 1) * dh], hv) + bv[i];
            }
        }))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, f: fn(f64, f64) -> f64) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(format!("elementwise operands {sa:?} and {sb:?}")));
        }
        let ((ao, len), (bo, _)) = (self.span(a), self.span(b));
        Ok(self.push(sa.0, sa.1, op, |vals, _, out| {
            for i in 0..len {
                out[i] = f(vals[ao + i], vals[bo + i]);
            }
        }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let (r, c) = self.shape(a);
        let (ao, len) = self.span(a);
        self.push(r, c, op, |vals, _, out| {
            for i in 0..len {
                out[i] = f(vals[ao + i]);
            }
        })
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::OneMinus(a), |x| 1.0 - x)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        self.unary(a, Op::Scale(a, s), move |x| s * x)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ((r, k), (k2, c)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::dim(format!("matmul {r}x{k} by {k2}x{c}")));
        }
        let ((ao, _), (bo, _)) = (self.span(a), self.span(b));
        Ok(self.push(r, c, Op::MatMul(a, b), |vals, _, out| {
            for i in 0..r {
                for j in 0..c {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += vals[ao + i * k + p] * vals[bo + p * c + j];
                    }
                    out[i * c + j] = s;
                }
            }
        }))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let (ao, _) = self.span(a);
        self.push(c, r, Op::Transpose(a), |vals, _, out| {
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = vals[ao + i * c + j];
                }
            }
        })
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let (ao, len) = self.span(a);
        if rows * cols != len {
            return Err(Error::dim(format!("cannot reshape {len} entries to {rows}x{cols}")));
        }
        Ok(self.push(rows, cols, Op::Reshape(a), |vals, _, out| out.copy_from_slice(&vals[ao..ao + len])))
    }

    /// Stacks the row-major data of all parts into one column vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let spans: Vec<(usize, usize)> = parts.iter().map(|&p| self.span(p)).collect();
        let total = spans.iter().map(|s| s.1).sum();
        self.push(total, 1, Op::Concat(parts.to_vec()), |vals, _, out| {
            let mut at = 0;
            for &(o, l) in &spans {
                out[at..at + l].copy_from_slice(&vals[o..o + l]);
                at += l;
            }
        })
    }

    pub fn symmetrize(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(a);
        if r != c {
            return Err(Error::dim("symmetrize needs a square matrix"));
        }
        let (ao, _) = self.span(a);
        Ok(self.push(r, r, Op::Symmetrize(a), |vals, _, out| {
            for i in 0..r {
                for j in 0..r {
                    out[i * r + j] = 0.5 * (vals[ao + i * r + j] + vals[ao + j * r + i]);
                }
            }
        }))
    }

    /// Lower-triangular `m x m` matrix filled row-major from `m(m+1)/2` raw
    /// values; diagonal entries go through `softplus(u) + floor`.
    pub fn lower_factor(&mut self, raw: NodeId, floor: f64) -> Result<NodeId> {
        let (ro, len) = self.span(raw);
        let m = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        if m * (m + 1) / 2 != len || len == 0 {
            return Err(Error::dim(format!("{len} values do not fill a lower triangle")));
        }
        Ok(self.push(m, m, Op::LowerFactor { raw }, |vals, _, out| {
            let mut k = 0;
            for i in 0..m {
                for j in 0..=i {
                    let u = vals[ro + k];
                    out[i * m + j] = if i == j { softplus(u) + floor } else { u };
                    k += 1;
                }
            }
        }))
    }

    /// `½ (ln det P + eᵀ P⁻¹ e + m ln 2π)` through the Cholesky factor of `P`.
    pub fn gaussian_nll(&mut self, e: NodeId, p: NodeId) -> Result<NodeId> {
        let (m, one) = self.shape(e);
        if one != 1 || self.shape(p) != (m, m) {
            return Err(Error::dim("gaussian_nll expects an m-vector and an m x m matrix"));
        }
        let l = small_cholesky(self.value(p), m)
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let ev = self.value(e).to_vec();
        let alpha = small_chol_solve(&l, m, &ev);
        let quad: f64 = ev.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let logdet: f64 = (0..m).map(|i| 2.0 * l[i * m + i].ln()).sum();
        let v = 0.5 * (logdet + quad + m as f64 * LN_2PI);
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite negative log-likelihood".into()));
        }
        Ok(self.push(1, 1, Op::GaussianNll { e, p }, |_, _, out| out[0] = v))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::invalid("mean of no nodes"));
        }
        if items.iter().any(|&i| self.shape(i) != (1, 1)) {
            return Err(Error::dim("mean expects scalar nodes"));
        }
        let v = items.iter().map(|&i| self.scalar(i)).sum::<f64>() / items.len() as f64;
        Ok(self.push(1, 1, Op::Mean(items.to_vec()), |_, _, out| out[0] = v))
    }

    /// Reverse sweep from `out` seeded with `seed` (same length as the
    /// output). Returns gradients for every node and every parameter.
    pub fn backward(&self, out: NodeId, seed: &[f64]) -> Result<Gradients> {
        let (oo, ol) = self.span(out);
        if seed.len() != ol {
            return Err(Error::Internal(format!("seed has {} entries for an output of {ol}", seed.len())));
        }
        let mut g = vec![0.0; self.vals.len()];
        let mut pg = vec![0.0; self.params.len()];
        g[oo..oo + ol].copy_from_slice(seed);
        let vals = &self.vals;
        let ps = self.params;

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let (gb, gn) = g.split_at_mut(node.off);
            let go = &gn[..node.len()];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y = &vals[node.span()];
            let span = |id: NodeId| self.nodes[id.0].span();
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => {
                    let o = ps.info(*p).offset;
                    for (i, gv) in go.iter().enumerate() {
                        pg[o + i] += gv;
                    }
                }
                Op::Affine { w, b, x } => {
                    let info = ps.info(*w);
                    let (r, c, wo) = (info.rows, info.cols, info.offset);
                    let wv = ps.value(*w);
                    let xs = span(*x);
                    let xv = &vals[xs.clone()];
                    let gx = &mut gb[xs];
                    let gw = &mut pg[wo..wo + r * c];
                    for ((&gi, row), grow) in go.iter().zip(wv.chunks_exact(c)).zip(gw.chunks_exact_mut(c)) {
                        if gi != 0.0 {
                            axpy(gx, gi, row);
                            axpy(grow, gi, xv);
                        }
                    }
                    if let Some(b) = b {
                        let bo = ps.info(*b).offset;
                        for i in 0..r {
                            pg[bo + i] += go[i];
                        }
                    }
                }
                Op::Gate { w, x, u, h, b } => {
                    let (wi, ui) = (ps.info(*w), ps.info(*u));
                    let (r, dx, dh) = (wi.rows, wi.cols, ui.cols);
                    let (wv, uv) = (ps.value(*w), ps.value(*u));
                    let (xs, hs) = (span(*x), span(*h));
                    for (mat, d, off, src) in [(wv, dx, wi.offset, xs), (uv, dh, ui.offset, hs)] {
                        let input = &vals[src.clone()];
                        let gin = &mut gb[src];
                        let gw = &mut pg[off..off + r * d];
                        for ((&gi, row), grow) in go.iter().zip(mat.chunks_exact(d)).zip(gw.chunks_exact_mut(d)) {
                            if gi != 0.0 {
                                axpy(gin, gi, row);
                                axpy(grow, gi, input);
                            }
                        }
                    }
                    let bo = ps.info(*b).offset;
                    for (p, gi) in pg[bo..bo + r].iter_mut().zip(go) {
                        *p += gi;
                    }
                }
                Op::Add(a, b) => {
                    let (sa, sb) = (span(*a).start, span(*b).start);
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += gv;
                        gb[sb + i] += gv;
                    }
                }
                Op::Sub(a, b) => {
                    let (sa, sb) = (span(*a).start, span(*b).start);
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += gv;
                        gb[sb + i] -= gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (sa, sb) = (span(*a).start, span(*b).start);
                    for (i, gv) in go.iter().enumerate() {
                        let (av, bv) = (vals[sa + i], vals[sb + i]);
                        gb[sa + i] += gv * bv;
                        gb[sb + i] += gv * av;
                    }
                }
                Op::OneMinus(a) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] -= gv;
                    }
                }
                Op::Scale(a, s) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += s * gv;
                    }
                }
                Op::Sigmoid(a) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += gv * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(a) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += gv * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Relu(a) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        if vals[sa + i] > 0.0 {
                            gb[sa + i] += gv;
                        }
                    }
                }
                Op::Square(a) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += 2.0 * vals[sa + i] * gv;
                    }
                }
                Op::MatMul(a, b) => {
                    let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                    let (r, k, c) = (na.rows, na.cols, nb.cols);
                    let (sa, sb) = (na.off, nb.off);
                    for i in 0..r {
                        for j in 0..c {
                            let gij = go[i * c + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                gb[sa + i * k + p] += gij * vals[sb + p * c + j];
                                gb[sb + p * c + j] += vals[sa + i * k + p] * gij;
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let sa = span(*a).start;
                    let (r, c) = (node.cols, node.rows);
                    for i in 0..r {
                        for j in 0..c {
                            gb[sa + i * c + j] += go[j * r + i];
                        }
                    }
                }
                Op::Reshape(a) => {
                    let sa = span(*a).start;
                    for (i, gv) in go.iter().enumerate() {
                        gb[sa + i] += gv;
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let s = span(*p);
                        for j in 0..s.len() {
                            gb[s.start + j] += go[at + j];
                        }
                        at += s.len();
                    }
                }
                Op::Symmetrize(a) => {
                    let sa = span(*a).start;
                    let r = node.rows;
                    for i in 0..r {
                        for j in 0..r {
                            gb[sa + i * r + j] += 0.5 * (go[i * r + j] + go[j * r + i]);
                        }
                    }
                }
                Op::LowerFactor { raw, .. } => {
                    let sr = span(*raw).start;
                    let m = node.rows;
                    let mut k = 0;
                    for i in 0..m {
                        for j in 0..=i {
                            let gv = go[i * m + j];
                            gb[sr + k] += if i == j { gv * sigmoid(vals[sr + k]) } else { gv };
                            k += 1;
                        }
                    }
                }
                Op::GaussianNll { e, p } => {
                    let gv = go[0];
                    let (se, sp) = (span(*e), span(*p));
                    let m = se.len();
                    let l = small_cholesky(&vals[sp.clone()], m)
                        .ok_or_else(|| Error::Internal("covariance lost definiteness between passes".into()))?;
                    let alpha = small_chol_solve(&l, m, &vals[se.clone()]);
                    let mut unit = vec![0.0; m];
                    for j in 0..m {
                        unit.iter_mut().for_each(|u| *u = 0.0);
                        unit[j] = 1.0;
                        let col = small_chol_solve(&l, m, &unit);
                        for i in 0..m {
                            // column j of P⁻¹ is row j by symmetry
                            gb[sp.start + i * m + j] += gv * 0.5 * (col[i] - alpha[i] * alpha[j]);
                        }
                    }
                    for i in 0..m {
                        gb[se.start + i] += gv * alpha[i];
                    }
                }
                Op::Mean(items) => {
                    let w = go[0] / items.len() as f64;
                    for it in items {
                        gb[span(*it).start] += w;
                    }
                }
            }
        }
        Ok(Gradients {
            spans: self.nodes.iter().map(|n| (n.off, n.len())).collect(),
            nodes: g,
            params: pg,
        })
    }
}
