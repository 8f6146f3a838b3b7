//! Reverse-mode automatic differentiation over a recorded computation tape.
//!
//! Values are dense rank-0/1/2 arrays. Every primitive computes its forward
//! value at record time; [`Tape::backward`] replays the node list in exact
//! reverse order and accumulates adjoints for the trainable parameters.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Identifier of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Train/eval switch; dropout fires only in [`Mode::Train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense rank-0/1/2 array of scalars, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Value<S> {
    data: Vec<S>,
    dims: Vec<usize>,
}

impl<S: Scalar> Value<S> {
    pub fn scalar(x: S) -> Self {
        Self {
            data: vec![x],
            dims: vec![],
        }
    }

    pub fn vector(data: Vec<S>) -> Self {
        let dims = vec![data.len()];
        Self { data, dims }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self {
            data,
            dims: vec![rows, cols],
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        // An empty dims product is 1, which is exactly the scalar case.
        let len = dims.iter().product::<usize>();
        Self {
            data: vec![S::zero(); len],
            dims: dims.to_vec(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn as_scalar(&self) -> Option<S> {
        if self.is_scalar() {
            Some(self.data[0])
        } else {
            None
        }
    }

    /// (rows, cols) when rank 2.
    pub fn shape2(&self) -> Option<(usize, usize)> {
        if self.rank() == 2 {
            Some((self.dims[0], self.dims[1]))
        } else {
            None
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Inverted-scaling dropout mask: each element is 0 with probability `rate`,
/// otherwise `1/(1-rate)`, so eval-mode forward needs no rescaling.
pub fn dropout_mask<S: Scalar>(rng: &mut Rng, n: usize, rate: f64) -> Result<Vec<S>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    let keep = S::of(1.0 / (1.0 - rate));
    Ok((0..n)
        .map(|_| if rng.unit() < rate { S::zero() } else { keep })
        .collect())
}

#[derive(Debug, Clone)]
enum OpKind<S> {
    /// Leaf constant; no gradient.
    Input,
    /// Leaf trainable parameter.
    Param,
    /// `W·x + b` on a vector, or row-wise `X·Wᵀ + b` on a matrix batch.
    Affine,
    Relu,
    /// Softmax over a vector, or independently over each row of a matrix.
    Softmax,
    /// Element-wise product; a rank-0 operand broadcasts.
    Mul,
    /// Vector concatenation, or column-wise concatenation of matrices
    /// (length-n vectors promote to n×1 columns).
    Concat,
    /// Inverted dropout with the mask baked in at record time.
    Dropout { mask: Vec<S> },
    /// Mean over all elements; yields a scalar.
    Mean,
    Square,
    /// `a - b`; a rank-0 operand broadcasts.
    Sub,
    /// `a + b`; a rank-0 operand broadcasts.
    Add,
    /// `c·x` for a fixed (non-trainable) coefficient.
    ScalarMul { factor: S },
    /// Natural log; the caller guards the domain (the loss adds an epsilon).
    Ln,
    Abs,
    /// Column `index` of a matrix, as a vector.
    Column { index: usize },
}

#[derive(Debug, Clone)]
struct Node<S> {
    op: OpKind<S>,
    inputs: Vec<NodeId>,
    value: Value<S>,
}

pub(crate) struct ParamTweak<S> {
    pub param_index: usize,
    pub element: usize,
    pub delta: S,
}

/// Recorded computation. Single-writer while recording and during backward;
/// independent tapes are fully independent.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    params: Vec<NodeId>,
    rng: Rng,
    tweak: Option<ParamTweak<S>>,
}

impl<S: Scalar> Tape<S> {
    /// The seed drives dropout masks; replaying with the same seed and the
    /// same recording order reproduces them bit-for-bit.
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            rng: Rng::new(seed),
            tweak: None,
        }
    }

    /// Same as [`Tape::new`] but nudges one parameter element at
    /// registration time; used by the finite-difference checker.
    pub(crate) fn with_tweak(seed: u64, tweak: ParamTweak<S>) -> Self {
        let mut tape = Self::new(seed);
        tape.tweak = Some(tweak);
        tape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value<S> {
        &self.nodes[id.0].value
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_dims(&self, index: usize) -> &[usize] {
        self.nodes[self.params[index].0].value.dims()
    }

    fn push(&mut self, op: OpKind<S>, inputs: Vec<NodeId>, value: Value<S>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        id
    }

    /// Constant (non-trainable) leaf.
    pub fn input(&mut self, value: Value<S>) -> NodeId {
        self.push(OpKind::Input, vec![], value)
    }

    /// Trainable leaf; `backward` reports gradients for these, in
    /// registration order.
    pub fn param(&mut self, mut value: Value<S>) -> NodeId {
        if let Some(tweak) = &self.tweak {
            if tweak.param_index == self.params.len() {
                value.data[tweak.element] += tweak.delta;
            }
        }
        let id = self.push(OpKind::Param, vec![], value);
        self.params.push(id);
        id
    }

    /// `W·x + b` (vector x) or `X·Wᵀ + b` row-wise (matrix x).
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (out, inn) = self.value(w).shape2().ok_or_else(|| {
            Error::Shape(format!("affine weight must be rank 2, got {:?}", self.value(w).dims()))
        })?;
        if self.value(b).dims() != [out] {
            return Err(Error::Shape(format!(
                "affine bias must have {out} elements, got {:?}",
                self.value(b).dims()
            )));
        }
        let xv = self.value(x);
        let value = match xv.rank() {
            1 => {
                if xv.len() != inn {
                    return Err(Error::Shape(format!(
                        "affine input width {} does not match weight width {inn}",
                        xv.len()
                    )));
                }
                let wd = self.value(w).data();
                let xd = self.value(x).data();
                let bd = self.value(b).data();
                let mut y = vec![S::zero(); out];
                for (o, yo) in y.iter_mut().enumerate() {
                    let row = &wd[o * inn..(o + 1) * inn];
                    let mut acc = bd[o];
                    for (wi, xi) in row.iter().zip(xd) {
                        acc += *wi * *xi;
                    }
                    *yo = acc;
                }
                Value::vector(y)
            }
            2 => {
                let (n, width) = xv.shape2().unwrap();
                if width != inn {
                    return Err(Error::Shape(format!(
                        "affine input width {width} does not match weight width {inn}"
                    )));
                }
                let wd = self.value(w).data();
                let xd = self.value(x).data();
                let bd = self.value(b).data();
                let mut y = vec![S::zero(); n * out];
                for r in 0..n {
                    let xrow = &xd[r * inn..(r + 1) * inn];
                    let yrow = &mut y[r * out..(r + 1) * out];
                    for (o, yo) in yrow.iter_mut().enumerate() {
                        let wrow = &wd[o * inn..(o + 1) * inn];
                        let mut acc = bd[o];
                        for (wi, xi) in wrow.iter().zip(xrow) {
                            acc += *wi * *xi;
                        }
                        *yo = acc;
                    }
                }
                Value::matrix(n, out, y)?
            }
            r => {
                return Err(Error::Shape(format!(
                    "affine input must be rank 1 or 2, got rank {r}"
                )))
            }
        };
        Ok(self.push(OpKind::Affine, vec![w, x, b], value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e.max(S::zero())).collect();
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        self.push(OpKind::Relu, vec![x], value)
    }

    /// Softmax with max-subtraction, over a vector or over each matrix row.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (rows, cols) = match v.rank() {
            1 => (1, v.len()),
            2 => v.shape2().unwrap(),
            r => {
                return Err(Error::Shape(format!(
                    "softmax needs a vector or matrix, got rank {r}"
                )))
            }
        };
        if cols == 0 {
            return Err(Error::Shape("softmax over an empty axis".into()));
        }
        let mut data = v.data().to_vec();
        for r in 0..rows {
            let row = &mut data[r * cols..(r + 1) * cols];
            let mut max = row[0];
            for &e in row.iter() {
                if e > max {
                    max = e;
                }
            }
            let mut sum = S::zero();
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                sum += *e;
            }
            for e in row.iter_mut() {
                *e /= sum;
            }
        }
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        Ok(self.push(OpKind::Softmax, vec![x], value))
    }

    fn broadcast_shapes(&self, a: NodeId, b: NodeId, what: &str) -> Result<Vec<usize>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dims() == vb.dims() {
            Ok(va.dims().to_vec())
        } else if va.is_scalar() {
            Ok(vb.dims().to_vec())
        } else if vb.is_scalar() {
            Ok(va.dims().to_vec())
        } else {
            Err(Error::Shape(format!(
                "{what} operands must match (or one be scalar): {:?} vs {:?}",
                va.dims(),
                vb.dims()
            )))
        }
    }

    fn zip_broadcast(
        &mut self,
        a: NodeId,
        b: NodeId,
        what: &str,
        op: OpKind<S>,
        f: impl Fn(S, S) -> S,
    ) -> Result<NodeId> {
        let dims = self.broadcast_shapes(a, b, what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let n = dims.iter().product::<usize>().max(1);
        let pick = |v: &Value<S>, i: usize| {
            if v.is_scalar() {
                v.data()[0]
            } else {
                v.data()[i]
            }
        };
        let data = (0..n).map(|i| f(pick(va, i), pick(vb, i))).collect();
        let value = Value { data, dims };
        Ok(self.push(op, vec![a, b], value))
    }

    /// Element-wise product; one operand may be scalar.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_broadcast(a, b, "multiply", OpKind::Mul, |x, y| x * y)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_broadcast(a, b, "add", OpKind::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_broadcast(a, b, "subtract", OpKind::Sub, |x, y| x - y)
    }

    /// Concatenate vectors end-to-end, or matrices column-wise when any part
    /// is rank 2 (length-n vectors then act as n×1 columns).
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat needs at least one part".into()));
        }
        let all_vectors = parts.iter().all(|&p| self.value(p).rank() == 1);
        let value = if all_vectors {
            let mut data = Vec::new();
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            Value::vector(data)
        } else {
            let mut rows = None;
            for &p in parts {
                let r = match self.value(p).rank() {
                    1 => self.value(p).len(),
                    2 => self.value(p).shape2().unwrap().0,
                    r => {
                        return Err(Error::Shape(format!(
                            "concat parts must be rank 1 or 2, got rank {r}"
                        )))
                    }
                };
                match rows {
                    None => rows = Some(r),
                    Some(n) if n == r => {}
                    Some(n) => {
                        return Err(Error::Shape(format!(
                            "concat row counts differ: {n} vs {r}"
                        )))
                    }
                }
            }
            let n = rows.unwrap();
            let widths: Vec<usize> = parts
                .iter()
                .map(|&p| match self.value(p).rank() {
                    1 => 1,
                    _ => self.value(p).shape2().unwrap().1,
                })
                .collect();
            let total: usize = widths.iter().sum();
            let mut data = vec![S::zero(); n * total];
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = self.value(p).data();
                for r in 0..n {
                    data[r * total + offset..r * total + offset + w]
                        .copy_from_slice(&src[r * w..(r + 1) * w]);
                }
                offset += w;
            }
            Value::matrix(n, total, data)?
        };
        Ok(self.push(OpKind::Concat, parts.to_vec(), value))
    }

    /// Inverted dropout. Eval mode (or rate 0) is the exact identity: the
    /// input node is returned untouched and no randomness is consumed.
    pub fn dropout(&mut self, x: NodeId, rate: f64, mode: Mode) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let n = self.value(x).len();
        let mask: Vec<S> = dropout_mask(&mut self.rng, n, rate)?;
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(&e, &m)| e * m).collect();
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        Ok(self.push(OpKind::Dropout { mask }, vec![x], value))
    }

    /// Mean over all elements.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let n = S::of(v.len() as f64);
        let sum = v.data().iter().copied().sum::<S>();
        self.push(OpKind::Mean, vec![x], Value::scalar(sum / n))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e * e).collect();
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        self.push(OpKind::Square, vec![x], value)
    }

    /// `c·x` with a fixed coefficient.
    pub fn scalar_mul(&mut self, factor: S, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| factor * e).collect();
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        self.push(OpKind::ScalarMul { factor }, vec![x], value)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e.ln()).collect();
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        self.push(OpKind::Ln, vec![x], value)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e.abs()).collect();
        let value = Value {
            data,
            dims: v.dims().to_vec(),
        };
        self.push(OpKind::Abs, vec![x], value)
    }

    /// Column `index` of a matrix, as a vector of length `rows`.
    pub fn column(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(x);
        let (rows, cols) = v.shape2().ok_or_else(|| {
            Error::Shape(format!("column needs a matrix, got {:?}", v.dims()))
        })?;
        if index >= cols {
            return Err(Error::Shape(format!(
                "column {index} out of range for a {rows}x{cols} matrix"
            )));
        }
        let data = (0..rows).map(|r| v.data()[r * cols + index]).collect();
        Ok(self.push(OpKind::Column { index }, vec![x], Value::vector(data)))
    }

    /// Reverse accumulation from a scalar root. Returns `d(root)/d(p)` for
    /// every trainable parameter, in registration order; adjoints of
    /// non-parameter nodes are discarded.
    pub fn backward(&self, root: NodeId) -> Result<Vec<Value<S>>> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).dims()
            )));
        }
        let mut adjoint: Vec<Vec<S>> = self
            .nodes
            .iter()
            .map(|n| vec![S::zero(); n.value.len()])
            .collect();
        adjoint[root.0][0] = S::one();

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if adjoint[idx].iter().all(|g| *g == S::zero()) {
                continue;
            }
            let grad = std::mem::take(&mut adjoint[idx]);
            match &node.op {
                OpKind::Input | OpKind::Param => {
                    adjoint[idx] = grad;
                }
                OpKind::Affine => {
                    let [w, x, b] = [node.inputs[0], node.inputs[1], node.inputs[2]];
                    let (out, inn) = self.nodes[w.0].value.shape2().unwrap();
                    let wd = self.nodes[w.0].value.data();
                    let xd = self.nodes[x.0].value.data();
                    let n = if self.nodes[x.0].value.rank() == 1 {
                        1
                    } else {
                        self.nodes[x.0].value.shape2().unwrap().0
                    };
                    // Borrow the three adjoint buffers disjointly.
                    let mut gw = std::mem::take(&mut adjoint[w.0]);
                    let mut gx = std::mem::take(&mut adjoint[x.0]);
                    let mut gb = std::mem::take(&mut adjoint[b.0]);
                    for r in 0..n {
                        let gy = &grad[r * out..(r + 1) * out];
                        let xrow = &xd[r * inn..(r + 1) * inn];
                        let gxrow = &mut gx[r * inn..(r + 1) * inn];
                        for (o, &g) in gy.iter().enumerate() {
                            if g == S::zero() {
                                continue;
                            }
                            gb[o] += g;
                            let wrow = &wd[o * inn..(o + 1) * inn];
                            let gwrow = &mut gw[o * inn..(o + 1) * inn];
                            for i in 0..inn {
                                gwrow[i] += g * xrow[i];
                                gxrow[i] += g * wrow[i];
                            }
                        }
                    }
                    adjoint[w.0] = gw;
                    adjoint[x.0] = gx;
                    adjoint[b.0] = gb;
                }
                OpKind::Relu => {
                    let x = node.inputs[0];
                    let xd = self.nodes[x.0].value.data();
                    let gx = &mut adjoint[x.0];
                    for i in 0..grad.len() {
                        // Derivative at exactly zero is defined as zero.
                        if xd[i] > S::zero() {
                            gx[i] += grad[i];
                        }
                    }
                }
                OpKind::Softmax => {
                    let x = node.inputs[0];
                    let y = node.value.data();
                    let (rows, cols) = match node.value.rank() {
                        1 => (1, node.value.len()),
                        _ => node.value.shape2().unwrap(),
                    };
                    let gx = &mut adjoint[x.0];
                    for r in 0..rows {
                        let yrow = &y[r * cols..(r + 1) * cols];
                        let grow = &grad[r * cols..(r + 1) * cols];
                        let mut dot = S::zero();
                        for (gi, yi) in grow.iter().zip(yrow) {
                            dot += *gi * *yi;
                        }
                        let gxrow = &mut gx[r * cols..(r + 1) * cols];
                        for i in 0..cols {
                            gxrow[i] += yrow[i] * (grow[i] - dot);
                        }
                    }
                }
                OpKind::Mul => {
                    let [a, b] = [node.inputs[0], node.inputs[1]];
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let pick = |v: &Value<S>, i: usize| {
                        if v.is_scalar() {
                            v.data()[0]
                        } else {
                            v.data()[i]
                        }
                    };
                    for (i, &g) in grad.iter().enumerate() {
                        let ai = if av.is_scalar() { 0 } else { i };
                        let bi = if bv.is_scalar() { 0 } else { i };
                        adjoint[a.0][ai] += g * pick(&bv, i);
                        adjoint[b.0][bi] += g * pick(&av, i);
                    }
                }
                OpKind::Add => {
                    let [a, b] = [node.inputs[0], node.inputs[1]];
                    for (i, &g) in grad.iter().enumerate() {
                        let ai = if self.nodes[a.0].value.is_scalar() { 0 } else { i };
                        let bi = if self.nodes[b.0].value.is_scalar() { 0 } else { i };
                        adjoint[a.0][ai] += g;
                        adjoint[b.0][bi] += g;
                    }
                }
                OpKind::Sub => {
                    let [a, b] = [node.inputs[0], node.inputs[1]];
                    for (i, &g) in grad.iter().enumerate() {
                        let ai = if self.nodes[a.0].value.is_scalar() { 0 } else { i };
                        let bi = if self.nodes[b.0].value.is_scalar() { 0 } else { i };
                        adjoint[a.0][ai] += g;
                        adjoint[b.0][bi] -= g;
                    }
                }
                OpKind::Concat => {
                    if node.value.rank() == 1 {
                        let mut offset = 0;
                        for &p in &node.inputs {
                            let len = self.nodes[p.0].value.len();
                            for i in 0..len {
                                adjoint[p.0][i] += grad[offset + i];
                            }
                            offset += len;
                        }
                    } else {
                        let (n, total) = node.value.shape2().unwrap();
                        let mut offset = 0;
                        for &p in &node.inputs {
                            let w = match self.nodes[p.0].value.rank() {
                                1 => 1,
                                _ => self.nodes[p.0].value.shape2().unwrap().1,
                            };
                            let gp = &mut adjoint[p.0];
                            for r in 0..n {
                                for c in 0..w {
                                    gp[r * w + c] += grad[r * total + offset + c];
                                }
                            }
                            offset += w;
                        }
                    }
                }
                OpKind::Dropout { mask } => {
                    let x = node.inputs[0];
                    let gx = &mut adjoint[x.0];
                    for i in 0..grad.len() {
                        gx[i] += grad[i] * mask[i];
                    }
                }
                OpKind::Mean => {
                    let x = node.inputs[0];
                    let n = S::of(self.nodes[x.0].value.len() as f64);
                    let g = grad[0] / n;
                    for e in adjoint[x.0].iter_mut() {
                        *e += g;
                    }
                }
                OpKind::Square => {
                    let x = node.inputs[0];
                    let xd = self.nodes[x.0].value.data();
                    let two = S::of(2.0);
                    let gx = &mut adjoint[x.0];
                    for i in 0..grad.len() {
                        gx[i] += grad[i] * two * xd[i];
                    }
                }
                OpKind::ScalarMul { factor } => {
                    let x = node.inputs[0];
                    let gx = &mut adjoint[x.0];
                    for i in 0..grad.len() {
                        gx[i] += grad[i] * *factor;
                    }
                }
                OpKind::Ln => {
                    let x = node.inputs[0];
                    let xd = self.nodes[x.0].value.data();
                    let gx = &mut adjoint[x.0];
                    for i in 0..grad.len() {
                        gx[i] += grad[i] / xd[i];
                    }
                }
                OpKind::Abs => {
                    let x = node.inputs[0];
                    let xd = self.nodes[x.0].value.data();
                    let gx = &mut adjoint[x.0];
                    for i in 0..grad.len() {
                        let sign = if xd[i] > S::zero() {
                            S::one()
                        } else if xd[i] < S::zero() {
                            -S::one()
                        } else {
                            S::zero()
                        };
                        gx[i] += grad[i] * sign;
                    }
                }
                OpKind::Column { index } => {
                    let x = node.inputs[0];
                    let (_, cols) = self.nodes[x.0].value.shape2().unwrap();
                    let gx = &mut adjoint[x.0];
                    for (r, &g) in grad.iter().enumerate() {
                        gx[r * cols + *index] += g;
                    }
                }
            }
        }

        Ok(self
            .params
            .iter()
            .map(|&p| Value {
                data: adjoint[p.0].clone(),
                dims: self.nodes[p.0].value.dims().to_vec(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward() {
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.input(Value::vector(vec![-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.input(Value::vector(vec![0.0, 0.0, 0.0]));
        let y = t.softmax(x).unwrap();
        for &p in t.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_positive_and_normalized() {
        // Strict positivity holds as long as exp(min - max) does not
        // underflow (spreads below ~745); huge offsets are fine thanks to
        // the max subtraction.
        let cases = [
            vec![1.0, 2.0, 3.0],
            vec![70.0, -70.0, 0.0],
            vec![-1e8, -1e8 + 1.0],
            vec![1e300, 1e300 - 10.0],
            vec![5.0],
        ];
        for data in cases {
            let mut t: Tape<f64> = Tape::new(0);
            let x = t.input(Value::vector(data));
            let y = t.softmax(x).unwrap();
            let out = t.value(y).data();
            let sum: f64 = out.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.iter().all(|&p| p > 0.0 && p < 1.0 + 1e-12));
        }
        // Normalization survives even when the small entries underflow.
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.input(Value::vector(vec![800.0, -800.0]));
        let y = t.softmax(x).unwrap();
        let sum: f64 = t.value(y).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rowwise_on_matrices() {
        let mut t: Tape<f64> = Tape::new(0);
        let x = t
            .input(Value::matrix(2, 2, vec![0.0, 2.0_f64.ln(), 1.0, 1.0]).unwrap());
        let y = t.softmax(x).unwrap();
        let out = t.value(y).data();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out[2] - 0.5).abs() < 1e-15);
        assert!((out[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn concat_vectors() {
        let mut t: Tape<f64> = Tape::new(0);
        let a = t.input(Value::vector(vec![1.0, 2.0]));
        let b = t.input(Value::vector(vec![3.0]));
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn concat_columns_with_vector_promotion() {
        let mut t: Tape<f64> = Tape::new(0);
        let m = t.input(Value::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let v = t.input(Value::vector(vec![9.0, 8.0]));
        let c = t.concat(&[m, v]).unwrap();
        assert_eq!(t.value(c).dims(), &[2, 3]);
        assert_eq!(t.value(c).data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
    }

    #[test]
    fn backward_mean_square() {
        // d/dx mean(x^2) at x=[3] is 2*3/1 = 6.
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.param(Value::vector(vec![3.0]));
        let sq = t.square(x);
        let root = t.mean(sq);
        let grads = t.backward(root).unwrap();
        assert_eq!(grads[0].data(), &[6.0]);
    }

    #[test]
    fn backward_constant_root_gives_zero_param_grads() {
        let mut t: Tape<f64> = Tape::new(0);
        let _p = t.param(Value::vector(vec![1.0, -2.0]));
        let c = t.input(Value::vector(vec![5.0, 7.0]));
        let root = t.mean(c);
        let grads = t.backward(root).unwrap();
        assert_eq!(grads[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_relu_flat_region() {
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.param(Value::vector(vec![-1.0]));
        let y = t.relu(x);
        let root = t.mean(y);
        let grads = t.backward(root).unwrap();
        assert_eq!(grads[0].data(), &[0.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.param(Value::vector(vec![1.0, 2.0]));
        let y = t.relu(x);
        assert!(matches!(t.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn scalar_broadcast_mul_add() {
        // g = w*x + b with scalar w, b: hand-checked values and gradients.
        let mut t: Tape<f64> = Tape::new(0);
        let w = t.param(Value::scalar(2.0));
        let b = t.param(Value::scalar(1.0));
        let x = t.input(Value::vector(vec![1.0, 2.0, 3.0]));
        let wx = t.mul(w, x).unwrap();
        let g = t.add(wx, b).unwrap();
        assert_eq!(t.value(g).data(), &[3.0, 5.0, 7.0]);
        let root = t.mean(g);
        let grads = t.backward(root).unwrap();
        // d mean(w*x+b)/dw = mean(x) = 2, /db = 1.
        assert!((grads[0].data()[0] - 2.0).abs() < 1e-15);
        assert!((grads[1].data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn affine_vector_and_batch_agree() {
        let w = Value::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Value::vector(vec![0.5, -0.5]);

        let mut t1: Tape<f64> = Tape::new(0);
        let (wn, bn) = (t1.input(w.clone()), t1.input(b.clone()));
        let x = t1.input(Value::vector(vec![1.0, 1.0, 1.0]));
        let y = t1.affine(wn, x, bn).unwrap();
        assert_eq!(t1.value(y).data(), &[6.5, 14.5]);

        let mut t2: Tape<f64> = Tape::new(0);
        let (wn, bn) = (t2.input(w), t2.input(b));
        let x = t2
            .input(Value::matrix(2, 3, vec![1.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap());
        let y = t2.affine(wn, x, bn).unwrap();
        assert_eq!(t2.value(y).data(), &[6.5, 14.5, 2.5, 4.5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut t: Tape<f64> = Tape::new(0);
        let w = t.input(Value::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = t.input(Value::vector(vec![0.0; 2]));
        let x = t.input(Value::vector(vec![0.0; 4]));
        assert!(matches!(t.affine(w, x, b), Err(Error::Shape(_))));

        let a = t.input(Value::vector(vec![1.0, 2.0]));
        let c = t.input(Value::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(t.mul(a, c), Err(Error::Shape(_))));
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut t: Tape<f64> = Tape::new(123);
        let x = t.input(Value::vector(vec![1.5, -2.5, 0.25]));
        let y = t.dropout(x, 0.5, Mode::Eval).unwrap();
        assert_eq!(x, y);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn dropout_mask_statistics() {
        let mut rng = Rng::new(99);
        let mask: Vec<f64> = dropout_mask(&mut rng, 10_000, 0.1).unwrap();
        let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 10_000.0;
        assert!((zeros - 0.1).abs() < 0.01, "zero fraction {zeros}");
        let keep = 1.0 / 0.9;
        assert!(mask.iter().all(|&m| m == 0.0 || (m - keep).abs() < 1e-15));
    }

    #[test]
    fn dropout_mask_rate_zero_is_all_ones() {
        let mut rng = Rng::new(1);
        let mask: Vec<f64> = dropout_mask(&mut rng, 64, 0.0).unwrap();
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = Rng::new(1);
        assert!(dropout_mask::<f64>(&mut rng, 4, 1.0).is_err());
        let mut t: Tape<f64> = Tape::new(0);
        let x = t.input(Value::vector(vec![1.0]));
        assert!(t.dropout(x, 1.0, Mode::Train).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let build = |seed: u64| {
            let mut t: Tape<f64> = Tape::new(seed);
            let w = t.param(Value::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap());
            let b = t.param(Value::vector(vec![0.05, -0.05]));
            let x = t.input(Value::matrix(4, 3, (0..12).map(|i| i as f64 / 7.0).collect()).unwrap());
            let h = t.affine(w, x, b).unwrap();
            let h = t.relu(h);
            let h = t.dropout(h, 0.25, Mode::Train).unwrap();
            let sq = t.square(h);
            let root = t.mean(sq);
            let grads = t.backward(root).unwrap();
            (t.value(root).as_scalar().unwrap(), grads)
        };
        let (v1, g1) = build(7);
        let (v2, g2) = build(7);
        assert_eq!(v1.to_bits(), v2.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn f32_instantiation_tracks_f64() {
        fn run<S: Scalar>() -> (S, Vec<S>) {
            let mut t: Tape<S> = Tape::new(0);
            let w = t.param(
                Value::matrix(2, 3, [0.2, -0.4, 0.6, 0.1, 0.5, -0.3].map(S::of).to_vec()).unwrap(),
            );
            let b = t.param(Value::vector([0.05, -0.1].map(S::of).to_vec()));
            let x = t.input(Value::vector([1.0, 2.0, 3.0].map(S::of).to_vec()));
            let h = t.affine(w, x, b).unwrap();
            let h = t.relu(h);
            let s = t.softmax(h).unwrap();
            let sq = t.square(s);
            let root = t.mean(sq);
            let grads = t.backward(root).unwrap();
            (
                t.value(root).as_scalar().unwrap(),
                grads.iter().flat_map(|g| g.data().iter().copied()).collect(),
            )
        }
        let (v64, g64) = run::<f64>();
        let (v32, g32) = run::<f32>();
        assert!((v64 - v32 as f64).abs() < 1e-6);
        for (a, b) in g64.iter().zip(&g32) {
            assert!((a - *b as f64).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn column_extracts_and_scatters() {
        let mut t: Tape<f64> = Tape::new(0);
        let m = t.param(Value::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let c1 = t.column(m, 1).unwrap();
        assert_eq!(t.value(c1).data(), &[2.0, 4.0]);
        let root = t.mean(c1);
        let grads = t.backward(root).unwrap();
        assert_eq!(grads[0].data(), &[0.0, 0.5, 0.0, 0.5]);
        assert!(t.column(m, 2).is_err());
    }
}
