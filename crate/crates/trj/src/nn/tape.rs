//! Reverse-mode automatic differentiation over dense 2-d tensors.
//!
//! A [`Tape`] records one forward computation; `backward` walks the nodes in
//! reverse insertion order (a valid reverse topological order, since parents
//! always precede children) and visits each node exactly once. Tapes are
//! single-owner and rebuilt per training step; parameters live outside the
//! tape and are leased in as leaves.

use crate::error::{Error, Result};
use crate::mesh::PoissonSystem;
use ndarray::{Array2, Axis};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    /// Same-shape elementwise sum.
    Add(NodeId, NodeId),
    /// Row broadcast: (m x n) + (1 x n).
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    Relu(NodeId),
    /// Row-wise softmax.
    SoftmaxRows(NodeId),
    ConcatCols(Vec<NodeId>),
    /// Mean over rows: (m x n) -> (1 x n).
    MeanRows(NodeId),
    /// Per-block mean over rows: (b*t x n) -> (b x n).
    BlockMeanRows(NodeId, usize),
    /// Column-wise max over rows: (m x n) -> (1 x n); argmax rows recorded.
    MaxRows(NodeId, Vec<usize>),
    /// Tile a single row: (1 x n) -> (m x n).
    RepeatRows(NodeId),
    /// Per-block `A_b * B_b^T` over row blocks of `t`: two (b*t x d) inputs
    /// give (b*t x t).
    BlockMatmulNt { a: NodeId, b: NodeId, t: usize },
    /// Per-block `S_b * V_b` where `S` is (b*t x t) and `V` is (b*t x d).
    BlockMatmulNn { s: NodeId, v: NodeId, t: usize },
    /// Stack per-frame face tensors (each f x d) into face-major time blocks
    /// ((f*t) x d) with row `face * t + frame`.
    StackTimeTokens(Vec<NodeId>),
    /// Sum of squared entries -> (1 x 1).
    SumSq(NodeId),
    /// Right-multiply each face's 3x3 (row-major in a 9-wide row) by the
    /// transposed rest-pose frame: local basis -> world.
    BasisToWorld {
        j: NodeId,
        system: Arc<PoissonSystem>,
    },
    /// Differentiable Poisson solve: world-frame rows (f x 9) -> (n x 3).
    PoissonSolve {
        j: NodeId,
        system: Arc<PoissonSystem>,
    },
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dims(a: &Array2<f64>) -> String {
    format!("{}x{}", a.nrows(), a.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated at a node by the last `backward` call.
    pub fn grad(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Leaf from a row vector.
    pub fn leaf_row(&mut self, row: &[f64]) -> NodeId {
        self.leaf(Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row shape"))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.dim() != vb.dim() {
            return Err(Error::shape("add", dims(va), dims(vb)));
        }
        let value = va + vb;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        if vr.nrows() != 1 || va.ncols() != vr.ncols() {
            return Err(Error::shape("add_row", format!("{} + 1x{}", dims(va), va.ncols()), dims(vr)));
        }
        let value = va + &vr.row(0);
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.dim() != vb.dim() {
            return Err(Error::shape("sub", dims(va), dims(vb)));
        }
        let value = va - vb;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.dim() != vb.dim() {
            return Err(Error::shape("mul", dims(va), dims(vb)));
        }
        let value = va * vb;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let value = &self.nodes[a.0].value * s;
        self.push(value, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.ncols() != vb.nrows() {
            return Err(Error::shape("matmul", format!("{} * kx?", dims(va)), dims(vb)));
        }
        let value = va.dot(vb);
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let mut value = va.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", ">= 1 part", "0 parts"));
        }
        let rows = self.nodes[parts[0].0].value.nrows();
        let mut total = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.nrows() != rows {
                return Err(Error::shape("concat_cols", format!("{rows} rows"), dims(v)));
            }
            total += v.ncols();
        }
        let mut value = Array2::zeros((rows, total));
        let mut col = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            value
                .slice_mut(ndarray::s![.., col..col + v.ncols()])
                .assign(v);
            col += v.ncols();
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let value = va
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        self.push(value, Op::MeanRows(a))
    }

    pub fn block_mean_rows(&mut self, a: NodeId, block: usize) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        if block == 0 || va.nrows() % block != 0 {
            return Err(Error::shape(
                "block_mean_rows",
                format!("rows divisible by {block}"),
                dims(va),
            ));
        }
        let blocks = va.nrows() / block;
        let mut value = Array2::zeros((blocks, va.ncols()));
        for b in 0..blocks {
            let slab = va.slice(ndarray::s![b * block..(b + 1) * block, ..]);
            value
                .row_mut(b)
                .assign(&slab.mean_axis(Axis(0)).expect("non-empty"));
        }
        Ok(self.push(value, Op::BlockMeanRows(a, block)))
    }

    pub fn max_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let mut argmax = vec![0usize; va.ncols()];
        let mut value = Array2::from_elem((1, va.ncols()), f64::NEG_INFINITY);
        for (r, row) in va.rows().into_iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if x > value[(0, c)] {
                    value[(0, c)] = x;
                    argmax[c] = r;
                }
            }
        }
        self.push(value, Op::MaxRows(a, argmax))
    }

    pub fn repeat_rows(&mut self, a: NodeId, count: usize) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        if va.nrows() != 1 {
            return Err(Error::shape("repeat_rows", "1 row", dims(va)));
        }
        let row = va.row(0).to_owned();
        let value = Array2::from_shape_fn((count, va.ncols()), |(_, c)| row[c]);
        Ok(self.push(value, Op::RepeatRows(a)))
    }

    pub fn block_matmul_nt(&mut self, a: NodeId, b: NodeId, t: usize) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.dim() != vb.dim() || t == 0 || va.nrows() % t != 0 {
            return Err(Error::shape(
                "block_matmul_nt",
                format!("matching (b*{t}) x d", t = t),
                format!("{} vs {}", dims(va), dims(vb)),
            ));
        }
        let mut value = Array2::zeros((va.nrows(), t));
        par_blocks(&mut value, t, |blk, mut out| {
            let r = blk * t..(blk + 1) * t;
            let q = va.slice(ndarray::s![r.clone(), ..]);
            let k = vb.slice(ndarray::s![r, ..]);
            out.assign(&q.dot(&k.t()));
        });
        Ok(self.push(value, Op::BlockMatmulNt { a, b, t }))
    }

    pub fn block_matmul_nn(&mut self, s: NodeId, v: NodeId, t: usize) -> Result<NodeId> {
        let (vs, vv) = (&self.nodes[s.0].value, &self.nodes[v.0].value);
        if t == 0 || vs.nrows() % t != 0 || vs.ncols() != t || vv.nrows() != vs.nrows() {
            return Err(Error::shape(
                "block_matmul_nn",
                format!("(b*{t}) x {t} and (b*{t}) x d"),
                format!("{} vs {}", dims(vs), dims(vv)),
            ));
        }
        let mut value = Array2::zeros((vv.nrows(), vv.ncols()));
        par_blocks(&mut value, t, |blk, mut out| {
            let r = blk * t..(blk + 1) * t;
            let sb = vs.slice(ndarray::s![r.clone(), ..]);
            let vb = vv.slice(ndarray::s![r, ..]);
            out.assign(&sb.dot(&vb));
        });
        Ok(self.push(value, Op::BlockMatmulNn { s, v, t }))
    }

    /// Stack `t` per-frame tensors (each f x d) into face-major time blocks:
    /// output row `face * t + frame` is row `face` of input `frame`.
    pub fn stack_time_tokens(&mut self, frames: &[NodeId]) -> Result<NodeId> {
        if frames.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let f = self.nodes[frames[0].0].value.nrows();
        let d = self.nodes[frames[0].0].value.ncols();
        for &fr in frames {
            let v = &self.nodes[fr.0].value;
            if v.dim() != (f, d) {
                return Err(Error::shape("stack_time_tokens", format!("{f}x{d}"), dims(v)));
            }
        }
        let t = frames.len();
        let mut value = Array2::zeros((f * t, d));
        for (fi, &fr) in frames.iter().enumerate() {
            let v = &self.nodes[fr.0].value;
            for face in 0..f {
                value.row_mut(face * t + fi).assign(&v.row(face));
            }
        }
        Ok(self.push(value, Op::StackTimeTokens(frames.to_vec())))
    }

    /// Sum of squared entries, as a 1x1 node.
    pub fn sum_sq(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.iter().map(|x| x * x).sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumSq(a))
    }

    /// Rotate per-face local-basis Jacobian rows into world frame.
    pub fn basis_to_world(&mut self, j: NodeId, system: &Arc<PoissonSystem>) -> Result<NodeId> {
        let vj = &self.nodes[j.0].value;
        if vj.dim() != (system.face_count(), 9) {
            return Err(Error::shape(
                "basis_to_world",
                format!("{}x9", system.face_count()),
                dims(vj),
            ));
        }
        let frames = system.bases().frames();
        let mut value = Array2::zeros(vj.dim());
        for f in 0..vj.nrows() {
            let m = row_to_mat(vj, f);
            mat_to_row(&(m * frames[f].transpose()), &mut value, f);
        }
        Ok(self.push(
            value,
            Op::BasisToWorld {
                j,
                system: Arc::clone(system),
            },
        ))
    }

    /// Differentiable Poisson solve; the backward pass reuses the system's
    /// prefactorized matrix.
    pub fn poisson_solve(&mut self, j: NodeId, system: &Arc<PoissonSystem>) -> Result<NodeId> {
        let vj = &self.nodes[j.0].value;
        let value = system.solve_world_rows(vj)?;
        Ok(self.push(
            value,
            Op::PoissonSolve {
                j,
                system: Arc::clone(system),
            },
        ))
    }

    /// Backpropagate from a scalar (1x1) output. Visits every reachable node
    /// exactly once in reverse insertion order.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        let out_val = &self.nodes[output.0].value;
        if out_val.dim() != (1, 1) {
            return Err(Error::shape("backward output", "1x1", dims(out_val)));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[output.0].grad = Some(Array2::from_elem((1, 1), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            // parents always precede children on the tape
            let (parents, current) = self.nodes.split_at_mut(idx);
            let node = &mut current[0];
            match &node.op {
                Op::Leaf => {
                    node.grad = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(parents, *a, &g);
                    accumulate(parents, *b, &g);
                }
                Op::AddRow(a, row) => {
                    accumulate(parents, *a, &g);
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(parents, *row, &summed);
                }
                Op::Sub(a, b) => {
                    accumulate(parents, *a, &g);
                    accumulate(parents, *b, &(-&g));
                }
                Op::Mul(a, b) => {
                    let da = &g * &parents[b.0].value;
                    let db = &g * &parents[a.0].value;
                    accumulate(parents, *a, &da);
                    accumulate(parents, *b, &db);
                }
                Op::Scale(a, s) => {
                    accumulate(parents, *a, &(&g * *s));
                }
                Op::Matmul(a, b) => {
                    let da = g.dot(&parents[b.0].value.t());
                    let db = parents[a.0].value.t().dot(&g);
                    accumulate(parents, *a, &da);
                    accumulate(parents, *b, &db);
                }
                Op::Relu(a) => {
                    let mask = parents[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accumulate(parents, *a, &(&g * &mask));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = &g * y;
                    for (mut drow, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = drow.sum();
                        for (d, &yv) in drow.iter_mut().zip(yrow) {
                            *d -= dot * yv;
                        }
                    }
                    accumulate(parents, *a, &dx);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for p in parts.clone() {
                        let w = parents[p.0].value.ncols();
                        let slice = g.slice(ndarray::s![.., col..col + w]).to_owned();
                        accumulate(parents, p, &slice);
                        col += w;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = parents[a.0].value.nrows();
                    let expanded =
                        Array2::from_shape_fn(parents[a.0].value.dim(), |(_, c)| {
                            g[(0, c)] / rows as f64
                        });
                    accumulate(parents, *a, &expanded);
                }
                Op::BlockMeanRows(a, block) => {
                    let block = *block;
                    let dim = parents[a.0].value.dim();
                    let expanded = Array2::from_shape_fn(dim, |(r, c)| {
                        g[(r / block, c)] / block as f64
                    });
                    accumulate(parents, *a, &expanded);
                }
                Op::MaxRows(a, argmax) => {
                    let mut dx = Array2::zeros(parents[a.0].value.dim());
                    for (c, &r) in argmax.iter().enumerate() {
                        dx[(r, c)] = g[(0, c)];
                    }
                    accumulate(parents, *a, &dx);
                }
                Op::RepeatRows(a) => {
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(parents, *a, &summed);
                }
                Op::BlockMatmulNt { a, b, t } => {
                    let t = *t;
                    let (va, vb) = (&parents[a.0].value, &parents[b.0].value);
                    let mut da = Array2::zeros(va.dim());
                    let mut db = Array2::zeros(vb.dim());
                    par_blocks(&mut da, t, |blk, mut out| {
                        let r = blk * t..(blk + 1) * t;
                        let gs = g.slice(ndarray::s![r.clone(), ..]);
                        let k = vb.slice(ndarray::s![r, ..]);
                        out.assign(&gs.dot(&k));
                    });
                    par_blocks(&mut db, t, |blk, mut out| {
                        let r = blk * t..(blk + 1) * t;
                        let gs = g.slice(ndarray::s![r.clone(), ..]);
                        let q = va.slice(ndarray::s![r, ..]);
                        out.assign(&gs.t().dot(&q));
                    });
                    accumulate(parents, *a, &da);
                    accumulate(parents, *b, &db);
                }
                Op::BlockMatmulNn { s, v, t } => {
                    let t = *t;
                    let (vs, vv) = (&parents[s.0].value, &parents[v.0].value);
                    let mut ds = Array2::zeros(vs.dim());
                    let mut dv = Array2::zeros(vv.dim());
                    par_blocks(&mut ds, t, |blk, mut out| {
                        let r = blk * t..(blk + 1) * t;
                        let go = g.slice(ndarray::s![r.clone(), ..]);
                        let vb = vv.slice(ndarray::s![r, ..]);
                        out.assign(&go.dot(&vb.t()));
                    });
                    par_blocks(&mut dv, t, |blk, mut out| {
                        let r = blk * t..(blk + 1) * t;
                        let go = g.slice(ndarray::s![r.clone(), ..]);
                        let sb = vs.slice(ndarray::s![r, ..]);
                        out.assign(&sb.t().dot(&go));
                    });
                    accumulate(parents, *s, &ds);
                    accumulate(parents, *v, &dv);
                }
                Op::StackTimeTokens(frames) => {
                    let t = frames.len();
                    for (fi, p) in frames.clone().into_iter().enumerate() {
                        let f = parents[p.0].value.nrows();
                        let mut dp = Array2::zeros(parents[p.0].value.dim());
                        for face in 0..f {
                            dp.row_mut(face).assign(&g.row(face * t + fi));
                        }
                        accumulate(parents, p, &dp);
                    }
                }
                Op::SumSq(a) => {
                    let dx = &parents[a.0].value * (2.0 * g[(0, 0)]);
                    accumulate(parents, *a, &dx);
                }
                Op::BasisToWorld { j, system } => {
                    let frames = system.bases().frames();
                    let mut dj = Array2::zeros(parents[j.0].value.dim());
                    for f in 0..dj.nrows() {
                        let gm = row_to_mat(&g, f);
                        mat_to_row(&(gm * frames[f]), &mut dj, f);
                    }
                    accumulate(parents, *j, &dj);
                }
                Op::PoissonSolve { j, system } => {
                    let dj = system.adjoint_world_rows(&g);
                    accumulate(parents, *j, &dj);
                }
            }
        }
        Ok(())
    }
}

/// Run a per-block kernel over disjoint row blocks of `out` in parallel.
/// Blocks are independent and written disjointly, so the result does not
/// depend on scheduling.
fn par_blocks<F>(out: &mut Array2<f64>, t: usize, kernel: F)
where
    F: Fn(usize, ndarray::ArrayViewMut2<'_, f64>) + Sync,
{
    use rayon::prelude::*;
    let chunks: Vec<(usize, ndarray::ArrayViewMut2<'_, f64>)> = out
        .axis_chunks_iter_mut(Axis(0), t)
        .enumerate()
        .collect();
    chunks
        .into_par_iter()
        .for_each(|(blk, view)| kernel(blk, view));
}

fn accumulate(nodes: &mut [Node], id: NodeId, delta: &Array2<f64>) {
    match &mut nodes[id.0].grad {
        Some(g) => *g += delta,
        slot => *slot = Some(delta.clone()),
    }
}

fn row_to_mat(rows: &Array2<f64>, f: usize) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(
        rows[(f, 0)],
        rows[(f, 1)],
        rows[(f, 2)],
        rows[(f, 3)],
        rows[(f, 4)],
        rows[(f, 5)],
        rows[(f, 6)],
        rows[(f, 7)],
        rows[(f, 8)],
    )
}

fn mat_to_row(m: &nalgebra::Matrix3<f64>, rows: &mut Array2<f64>, f: usize) {
    for r in 0..3 {
        for c in 0..3 {
            rows[(f, 3 * r + c)] = m[(r, c)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_rel_err, numeric_grad};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[-1.0, 0.0, 2.0]]);
        let y = tape.relu(x);
        assert_eq!(tape.value(y), &array![[0.0, 0.0, 2.0]]);
    }

    #[test]
    fn softmax_of_single_element_is_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[3.7]]);
        let y = tape.softmax_rows(x);
        assert!((tape.value(y)[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Array2::zeros((2, 3)));
        let b = tape.leaf(Array2::zeros((4, 5)));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("4x5"), "message: {err}");
    }

    /// Central finite differences against the recorded adjoints, 10 seeds.
    #[test]
    fn matmul_adjoint_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a0 = Array2::from_shape_fn((4, 4), |_| rng.gen::<f64>() - 0.5);
            let b0 = Array2::from_shape_fn((4, 4), |_| rng.gen::<f64>() - 0.5);

            let eval = |a: &Array2<f64>, b: &Array2<f64>| {
                let mut tape = Tape::new();
                let na = tape.leaf(a.clone());
                let nb = tape.leaf(b.clone());
                let m = tape.matmul(na, nb).unwrap();
                let s = tape.sum_sq(m);
                tape.value(s)[(0, 0)]
            };

            let mut tape = Tape::new();
            let na = tape.leaf(a0.clone());
            let nb = tape.leaf(b0.clone());
            let m = tape.matmul(na, nb).unwrap();
            let s = tape.sum_sq(m);
            tape.backward(s).unwrap();

            let fd_a = numeric_grad(&a0, |a| eval(a, &b0));
            let fd_b = numeric_grad(&b0, |b| eval(&a0, b));
            assert!(max_rel_err(tape.grad(na).unwrap(), &fd_a) < 1e-7);
            assert!(max_rel_err(tape.grad(nb).unwrap(), &fd_b) < 1e-7);
        }
    }

    #[test]
    fn elementwise_ops_pass_gradcheck() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x0 = Array2::from_shape_fn((3, 5), |_| rng.gen::<f64>() * 2.0 - 1.0);

            let eval = |x: &Array2<f64>| {
                let mut tape = Tape::new();
                let n = tape.leaf(x.clone());
                let r = tape.relu(n);
                let sm = tape.softmax_rows(r);
                let sc = tape.scale(sm, 1.7);
                let m = tape.mul(sc, n).unwrap();
                let s = tape.sum_sq(m);
                tape.value(s)[(0, 0)]
            };

            let mut tape = Tape::new();
            let n = tape.leaf(x0.clone());
            let r = tape.relu(n);
            let sm = tape.softmax_rows(r);
            let sc = tape.scale(sm, 1.7);
            let m = tape.mul(sc, n).unwrap();
            let s = tape.sum_sq(m);
            tape.backward(s).unwrap();

            let fd = numeric_grad(&x0, eval);
            assert!(max_rel_err(tape.grad(n).unwrap(), &fd) < 1e-7);
        }
    }

    #[test]
    fn pooling_and_stacking_pass_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a0 = Array2::from_shape_fn((4, 3), |_| rng.gen::<f64>() - 0.5);
        let b0 = Array2::from_shape_fn((4, 3), |_| rng.gen::<f64>() - 0.5);

        let eval = |a: &Array2<f64>, b: &Array2<f64>| {
            let mut tape = Tape::new();
            let na = tape.leaf(a.clone());
            let nb = tape.leaf(b.clone());
            let st = tape.stack_time_tokens(&[na, nb]).unwrap(); // 8x3, blocks of 2
            let bm = tape.block_mean_rows(st, 2).unwrap(); // 4x3
            let mx = tape.max_rows(bm); // 1x3
            let rp = tape.repeat_rows(mx, 3).unwrap();
            let s = tape.sum_sq(rp);
            tape.value(s)[(0, 0)]
        };

        let mut tape = Tape::new();
        let na = tape.leaf(a0.clone());
        let nb = tape.leaf(b0.clone());
        let st = tape.stack_time_tokens(&[na, nb]).unwrap();
        let bm = tape.block_mean_rows(st, 2).unwrap();
        let mx = tape.max_rows(bm);
        let rp = tape.repeat_rows(mx, 3).unwrap();
        let s = tape.sum_sq(rp);
        tape.backward(s).unwrap();

        let fd_a = numeric_grad(&a0, |a| eval(a, &b0));
        let fd_b = numeric_grad(&b0, |b| eval(&a0, b));
        assert!(max_rel_err(tape.grad(na).unwrap(), &fd_a) < 1e-7);
        assert!(max_rel_err(tape.grad(nb).unwrap(), &fd_b) < 1e-7);
    }

    #[test]
    fn block_matmuls_pass_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = 3;
        let q0 = Array2::from_shape_fn((2 * t, 4), |_| rng.gen::<f64>() - 0.5);
        let k0 = Array2::from_shape_fn((2 * t, 4), |_| rng.gen::<f64>() - 0.5);

        let eval = |q: &Array2<f64>, k: &Array2<f64>| {
            let mut tape = Tape::new();
            let nq = tape.leaf(q.clone());
            let nk = tape.leaf(k.clone());
            let s = tape.block_matmul_nt(nq, nk, t).unwrap();
            let sm = tape.softmax_rows(s);
            let o = tape.block_matmul_nn(sm, nk, t).unwrap();
            let out = tape.sum_sq(o);
            tape.value(out)[(0, 0)]
        };

        let mut tape = Tape::new();
        let nq = tape.leaf(q0.clone());
        let nk = tape.leaf(k0.clone());
        let s = tape.block_matmul_nt(nq, nk, t).unwrap();
        let sm = tape.softmax_rows(s);
        let o = tape.block_matmul_nn(sm, nk, t).unwrap();
        let out = tape.sum_sq(o);
        tape.backward(out).unwrap();

        let fd_q = numeric_grad(&q0, |q| eval(q, &k0));
        let fd_k = numeric_grad(&k0, |k| eval(&q0, k));
        assert!(max_rel_err(tape.grad(nq).unwrap(), &fd_q) < 1e-7);
        assert!(max_rel_err(tape.grad(nk).unwrap(), &fd_k) < 1e-7);
    }

    /// Backward of a sum of outputs equals the sum of per-output backwards.
    #[test]
    fn adjoint_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x0 = Array2::from_shape_fn((3, 3), |_| rng.gen::<f64>() - 0.5);
        let build = |tape: &mut Tape, x: &Array2<f64>| {
            let n = tape.leaf(x.clone());
            let r = tape.relu(n);
            let a = tape.sum_sq(r);
            let sm = tape.softmax_rows(n);
            let b = tape.sum_sq(sm);
            (n, a, b)
        };

        let mut t1 = Tape::new();
        let (n1, a1, _) = build(&mut t1, &x0);
        t1.backward(a1).unwrap();
        let ga = t1.grad(n1).unwrap().clone();

        let mut t2 = Tape::new();
        let (n2, _, b2) = build(&mut t2, &x0);
        t2.backward(b2).unwrap();
        let gb = t2.grad(n2).unwrap().clone();

        let mut t3 = Tape::new();
        let (n3, a3, b3) = build(&mut t3, &x0);
        let total = t3.add(a3, b3).unwrap();
        t3.backward(total).unwrap();
        let gsum = t3.grad(n3).unwrap();

        assert!(max_rel_err(gsum, &(&ga + &gb)) < 1e-12);
    }

    /// Tapes are rebuilt per step; a fresh tape starts from zero nodes.
    #[test]
    fn no_graph_leaks_across_steps() {
        let baseline = Tape::new().node_count();
        assert_eq!(baseline, 0);
        for _ in 0..3 {
            let mut tape = Tape::new();
            let x = tape.leaf(Array2::zeros((4, 4)));
            let y = tape.relu(x);
            let s = tape.sum_sq(y);
            tape.backward(s).unwrap();
            drop(tape);
            assert_eq!(Tape::new().node_count(), baseline);
        }
    }

    #[test]
    fn poisson_solve_op_passes_gradcheck() {
        let mesh = crate::mesh::shapes::icosphere(0);
        let system = Arc::new(crate::mesh::poisson_prefactorize(&mesh).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let j0 = Array2::from_shape_fn((mesh.face_count(), 9), |_| rng.gen::<f64>() - 0.5);

        let eval = |j: &Array2<f64>| {
            let mut tape = Tape::new();
            let nj = tape.leaf(j.clone());
            let w = tape.basis_to_world(nj, &system).unwrap();
            let v = tape.poisson_solve(w, &system).unwrap();
            let s = tape.sum_sq(v);
            tape.value(s)[(0, 0)]
        };

        let mut tape = Tape::new();
        let nj = tape.leaf(j0.clone());
        let w = tape.basis_to_world(nj, &system).unwrap();
        let v = tape.poisson_solve(w, &system).unwrap();
        let s = tape.sum_sq(v);
        tape.backward(s).unwrap();

        let fd = numeric_grad(&j0, eval);
        assert!(max_rel_err(tape.grad(nj).unwrap(), &fd) < 1e-6);
    }
}
