//! Reverse-mode automatic differentiation over a tape of matrix primitives.
//!
//! Forward values are computed eagerly as operations are pushed; `backward`
//! walks the tape in reverse and accumulates exact analytic gradients.

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// [m x n] plus a [1 x n] row, broadcast over rows.
    AddRow { a: NodeId, row: NodeId },
    /// [m x n] plus a [m x 1] column, broadcast over columns.
    AddCol { a: NodeId, col: NodeId },
    Scale { a: NodeId, c: f64 },
    AddScalar { a: NodeId },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    Tanh { a: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    SliceCols { a: NodeId, start: usize },
    ConcatRows { parts: Vec<NodeId> },
    SliceRows { a: NodeId, start: usize },
    GatherRows { a: NodeId, idx: Vec<usize> },
    SegmentSum { a: NodeId, ids: Vec<usize> },
    /// Softmax over elements grouped by segment id; shape is preserved.
    SegmentSoftmax { a: NodeId, ids: Vec<usize>, num_segments: usize },
    SumAll { a: NodeId },
    RowSum { a: NodeId },
    Transpose { a: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound_params: BTreeMap<String, NodeId>,
}

pub struct Gradients {
    node_grads: Vec<Option<Tensor>>,
    param_grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.node_grads[id.0].as_ref()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.param_grads.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.param_grads
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.param_grads
    }
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows out of it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Binds a named parameter from the store. Binding the same name twice
    /// returns the same node, so shared parameters accumulate one gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.bound_params.get(name) {
            return Ok(id);
        }
        let value = store.value(name)?.clone();
        let id = self.push(Op::Leaf, value);
        self.bound_params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::Matmul { a, b }, value))
    }

    fn elementwise_pair(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(mismatch(op, self.value(a), self.value(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair("sub", a, b)?;
        let vb = self.value(b);
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x - y)
            .collect();
        let value = Tensor::from_vec(self.value(a).shape(), data).unwrap();
        Ok(self.push(Op::Sub { a, b }, value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair("mul", a, b)?;
        let vb = self.value(b);
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::from_vec(self.value(a).shape(), data).unwrap();
        Ok(self.push(Op::Mul { a, b }, value))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if !va.is_matrix() || !vr.is_matrix() || vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(mismatch("add_row", va, vr));
        }
        let cols = va.cols();
        let mut value = va.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += vr.data()[i % cols];
        }
        Ok(self.push(Op::AddRow { a, row }, value))
    }

    pub fn add_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (va, vc) = (self.value(a), self.value(col));
        if !va.is_matrix() || !vc.is_matrix() || vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(mismatch("add_col", va, vc));
        }
        let cols = va.cols();
        let mut value = va.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += vc.data()[i / cols];
        }
        Ok(self.push(Op::AddCol { a, col }, value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|v| v * c);
        self.push(Op::Scale { a, c }, value)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|v| v + c);
        self.push(Op::AddScalar { a }, value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(Op::Relu { a }, value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid { a }, value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh { a }, value)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let mut total_cols = 0;
        for &p in parts {
            let v = self.value(p);
            if !v.is_matrix() || v.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), v));
            }
            total_cols += v.cols();
        }
        let mut value = Tensor::zeros(&[rows, total_cols]);
        let mut start = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                for c in 0..v.cols() {
                    value.set2(r, start + c, v.get2(r, c));
                }
            }
            start += v.cols();
        }
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_matrix() || start + len > va.cols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: va.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let rows = va.rows();
        let mut value = Tensor::zeros(&[rows, len]);
        for r in 0..rows {
            for c in 0..len {
                value.set2(r, c, va.get2(r, start + c));
            }
        }
        Ok(self.push(Op::SliceCols { a, start }, value))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut total_rows = 0;
        for &p in parts {
            let v = self.value(p);
            if !v.is_matrix() || v.cols() != cols {
                return Err(mismatch("concat_rows", self.value(parts[0]), v));
            }
            total_rows += v.rows();
        }
        let mut data = Vec::with_capacity(total_rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::from_vec(&[total_rows, cols], data).unwrap();
        Ok(self.push(
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_matrix() || start + len > va.rows() {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                lhs: va.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let cols = va.cols();
        let data = va.data()[start * cols..(start + len) * cols].to_vec();
        let value = Tensor::from_vec(&[len, cols], data).unwrap();
        Ok(self.push(Op::SliceRows { a, start }, value))
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_matrix() {
            return Err(mismatch("gather_rows", va, va));
        }
        let cols = va.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= va.rows() {
                return Err(Error::SegmentIdOutOfRange {
                    id: i,
                    num_segments: va.rows(),
                });
            }
            data.extend_from_slice(&va.data()[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::from_vec(&[idx.len(), cols], data).unwrap();
        Ok(self.push(
            Op::GatherRows {
                a,
                idx: idx.to_vec(),
            },
            value,
        ))
    }

    /// Row `s` of the output is the sum of input rows whose segment id is `s`.
    /// Empty segments produce zero rows.
    pub fn segment_sum(&mut self, a: NodeId, ids: &[usize], num_segments: usize) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_matrix() || va.rows() != ids.len() {
            return Err(Error::ShapeMismatch {
                op: "segment_sum",
                lhs: va.shape().to_vec(),
                rhs: vec![ids.len()],
            });
        }
        let cols = va.cols();
        let mut value = Tensor::zeros(&[num_segments, cols]);
        for (r, &s) in ids.iter().enumerate() {
            if s >= num_segments {
                return Err(Error::SegmentIdOutOfRange {
                    id: s,
                    num_segments,
                });
            }
            for c in 0..cols {
                let v = va.get2(r, c);
                value.set2(s, c, value.get2(s, c) + v);
            }
        }
        Ok(self.push(
            Op::SegmentSum {
                a,
                ids: ids.to_vec(),
            },
            value,
        ))
    }

    /// Softmax over elements sharing a segment id, computed with per-segment
    /// max subtraction. One id per element of `a` (flattened); shape preserved.
    pub fn segment_softmax(
        &mut self,
        a: NodeId,
        ids: &[usize],
        num_segments: usize,
    ) -> Result<NodeId> {
        let va = self.value(a);
        if va.numel() != ids.len() {
            return Err(Error::ShapeMismatch {
                op: "segment_softmax",
                lhs: va.shape().to_vec(),
                rhs: vec![ids.len()],
            });
        }
        for &s in ids {
            if s >= num_segments {
                return Err(Error::SegmentIdOutOfRange {
                    id: s,
                    num_segments,
                });
            }
        }
        let mut maxes = vec![f64::NEG_INFINITY; num_segments];
        for (v, &s) in va.data().iter().zip(ids) {
            maxes[s] = maxes[s].max(*v);
        }
        let mut sums = vec![0.0; num_segments];
        let mut exps = Vec::with_capacity(va.numel());
        for (v, &s) in va.data().iter().zip(ids) {
            let e = (v - maxes[s]).exp();
            sums[s] += e;
            exps.push(e);
        }
        for (e, &s) in exps.iter_mut().zip(ids) {
            *e /= sums[s];
        }
        let value = Tensor::from_vec(va.shape(), exps).unwrap();
        Ok(self.push(
            Op::SegmentSoftmax {
                a,
                ids: ids.to_vec(),
                num_segments,
            },
            value,
        ))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::SumAll { a }, value)
    }

    /// [m x n] -> [m x 1], summing along each row.
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_matrix() {
            return Err(mismatch("row_sum", va, va));
        }
        let sums: Vec<f64> = (0..va.rows())
            .map(|r| (0..va.cols()).map(|c| va.get2(r, c)).sum())
            .collect();
        let value = Tensor::column(&sums);
        Ok(self.push(Op::RowSum { a }, value))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_matrix() {
            return Err(mismatch("transpose", va, va));
        }
        let value = va.transposed();
        Ok(self.push(Op::Transpose { a }, value))
    }

    /// Backpropagates from a scalar-valued node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.value(loss).shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(self.value(loss).shape(), vec![1.0]).unwrap());

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(&self.nodes[i].op, i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut param_grads = BTreeMap::new();
        for (name, id) in &self.bound_params {
            if let Some(g) = &grads[id.0] {
                param_grads.insert(name.clone(), g.clone());
            }
        }
        Ok(Gradients {
            node_grads: grads,
            param_grads,
        })
    }

    fn add_grad(&self, grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn grad_slot<'a>(
        &self,
        grads: &'a mut [Option<Tensor>],
        id: NodeId,
    ) -> &'a mut Tensor {
        if grads[id.0].is_none() {
            grads[id.0] = Some(Tensor::zeros(self.value(id).shape()));
        }
        grads[id.0].as_mut().unwrap()
    }

    fn accumulate(&self, op: &Op, node: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let mut da = Tensor::zeros(self.value(*a).shape());
                Tensor::matmul_a_bt(g, self.value(*b), &mut da);
                let mut db = Tensor::zeros(self.value(*b).shape());
                Tensor::matmul_at_b(self.value(*a), g, &mut db);
                self.add_grad(grads, *a, da);
                self.add_grad(grads, *b, db);
            }
            Op::Add { a, b } => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.clone());
            }
            Op::Sub { a, b } => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.map(|v| -v));
            }
            Op::Mul { a, b } => {
                let da = {
                    let vb = self.value(*b);
                    let data: Vec<f64> =
                        g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    Tensor::from_vec(g.shape(), data).unwrap()
                };
                let db = {
                    let va = self.value(*a);
                    let data: Vec<f64> =
                        g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    Tensor::from_vec(g.shape(), data).unwrap()
                };
                self.add_grad(grads, *a, da);
                self.add_grad(grads, *b, db);
            }
            Op::AddRow { a, row } => {
                self.add_grad(grads, *a, g.clone());
                let cols = g.cols();
                let mut sum = vec![0.0; cols];
                for (i, v) in g.data().iter().enumerate() {
                    sum[i % cols] += v;
                }
                self.add_grad(grads, *row, Tensor::from_vec(&[1, cols], sum).unwrap());
            }
            Op::AddCol { a, col } => {
                self.add_grad(grads, *a, g.clone());
                let cols = g.cols();
                let mut sum = vec![0.0; g.rows()];
                for (i, v) in g.data().iter().enumerate() {
                    sum[i / cols] += v;
                }
                self.add_grad(grads, *col, Tensor::column(&sum));
            }
            Op::Scale { a, c } => {
                self.add_grad(grads, *a, g.map(|v| v * c));
            }
            Op::AddScalar { a } => {
                self.add_grad(grads, *a, g.clone());
            }
            Op::Relu { a } => {
                // subgradient 0 at the kink
                let va = self.value(*a);
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(va.data())
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.add_grad(grads, *a, Tensor::from_vec(g.shape(), data).unwrap());
            }
            Op::Sigmoid { a } => {
                let y = &self.nodes[node].value;
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, yv)| gv * yv * (1.0 - yv))
                    .collect();
                self.add_grad(grads, *a, Tensor::from_vec(g.shape(), data).unwrap());
            }
            Op::Tanh { a } => {
                let y = &self.nodes[node].value;
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, yv)| gv * (1.0 - yv * yv))
                    .collect();
                self.add_grad(grads, *a, Tensor::from_vec(g.shape(), data).unwrap());
            }
            Op::ConcatCols { parts } => {
                let mut start = 0;
                for &p in parts {
                    let v = self.value(p);
                    let (rows, cols) = (v.rows(), v.cols());
                    let mut dp = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        for c in 0..cols {
                            dp.set2(r, c, g.get2(r, start + c));
                        }
                    }
                    self.add_grad(grads, p, dp);
                    start += cols;
                }
            }
            Op::SliceCols { a, start } => {
                let da = self.grad_slot(grads, *a);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let v = da.get2(r, start + c) + g.get2(r, c);
                        da.set2(r, start + c, v);
                    }
                }
            }
            Op::ConcatRows { parts } => {
                let mut start = 0;
                for &p in parts {
                    let v = self.value(p);
                    let rows = v.rows();
                    let cols = v.cols();
                    let data = g.data()[start * cols..(start + rows) * cols].to_vec();
                    self.add_grad(grads, p, Tensor::from_vec(&[rows, cols], data).unwrap());
                    start += rows;
                }
            }
            Op::SliceRows { a, start } => {
                let cols = g.cols();
                let da = self.grad_slot(grads, *a);
                let base = start * cols;
                for (i, v) in g.data().iter().enumerate() {
                    da.data_mut()[base + i] += v;
                }
            }
            Op::GatherRows { a, idx } => {
                let cols = g.cols();
                let da = self.grad_slot(grads, *a);
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        da.data_mut()[i * cols + c] += g.get2(r, c);
                    }
                }
            }
            Op::SegmentSum { a, ids } => {
                let cols = g.cols();
                let da = self.grad_slot(grads, *a);
                for (r, &s) in ids.iter().enumerate() {
                    for c in 0..cols {
                        da.data_mut()[r * cols + c] += g.get2(s, c);
                    }
                }
            }
            Op::SegmentSoftmax {
                a,
                ids,
                num_segments,
            } => {
                let y = &self.nodes[node].value;
                let mut dots = vec![0.0; *num_segments];
                for ((yv, gv), &s) in y.data().iter().zip(g.data()).zip(ids) {
                    dots[s] += yv * gv;
                }
                let data: Vec<f64> = y
                    .data()
                    .iter()
                    .zip(g.data())
                    .zip(ids)
                    .map(|((yv, gv), &s)| yv * (gv - dots[s]))
                    .collect();
                self.add_grad(grads, *a, Tensor::from_vec(g.shape(), data).unwrap());
            }
            Op::SumAll { a } => {
                let gv = g.data()[0];
                self.add_grad(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::RowSum { a } => {
                let va = self.value(*a);
                let (rows, cols) = (va.rows(), va.cols());
                let mut da = Tensor::zeros(&[rows, cols]);
                for r in 0..rows {
                    let gv = g.get2(r, 0);
                    for c in 0..cols {
                        da.set2(r, c, gv);
                    }
                }
                self.add_grad(grads, *a, da);
            }
            Op::Transpose { a } => {
                self.add_grad(grads, *a, g.transposed());
            }
        }
    }
}
