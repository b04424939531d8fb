//! Dense f64 tensors recorded on a reverse-mode tape.
//!
//! The tape is an append-only arena: every operation pushes one output
//! tensor and one op node, so node indices are already in topological
//! order and [`Tape::backward`] is a single reverse sweep. Values live
//! in one flat slab (an output region never overlaps its inputs, which
//! always precede it), and a tape can be [`Tape::reset`] and reused so
//! steady-state training does not allocate. Tensors are 1-D or 2-D;
//! there is no broadcasting — callers materialize repeats explicitly.

use crate::error::{Error, Result};

/// Lower/upper clamp applied to the argument of [`Tape::ln_clamped`].
pub const LN_CLAMP_LO: f64 = 1e-12;
pub const LN_CLAMP_HI: f64 = 1.0 - 1e-12;

/// Handle to a tensor stored on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TensorId(usize);

/// Owned snapshot of one tape entry (see [`Tape::tensor`]).
#[derive(Clone, Debug)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
    pub tape_id: Option<TensorId>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Copy)]
struct Node {
    off: usize,
    len: usize,
    ndim: u8,
    dims: [usize; 2],
    requires_grad: bool,
}

impl Node {
    fn shape(&self) -> &[usize] {
        &self.dims[..self.ndim as usize]
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: TensorId, b: TensorId },
    Transpose { a: TensorId },
    Add { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Tanh { a: TensorId },
    Relu { a: TensorId },
    Sigmoid { a: TensorId },
    LnClamped { a: TensorId },
    Affine { a: TensorId, scale: f64 },
    Softmax { a: TensorId },
    Concat { parts: Vec<TensorId> },
    Gather { table: TensorId, indices: Vec<usize> },
    SumAll { a: TensorId },
    MeanAll { a: TensorId },
    SumAxis { a: TensorId, axis: usize },
    MeanAxis { a: TensorId, axis: usize },
    Reshape { a: TensorId },
    /// Multiply every entry of `a` by the single entry of `s` (shape [1]).
    ScaleByScalar { a: TensorId, s: TensorId },
    /// Rotate consecutive value pairs of each row by position-dependent
    /// angles; `positions[r]` is the sequence position of row r.
    Rotary { a: TensorId, positions: Vec<f64> },
    /// out[r] = scale * (M[r,:] . q). One tape node instead of the
    /// reshape/matmul/reshape/affine chain attention would otherwise
    /// record per neighborhood.
    MatVecScaled { m: TensorId, q: TensorId, scale: f64 },
    /// out = sum_r w[r] * M[r,:].
    WeightedRows { m: TensorId, w: TensorId },
    /// out[r,:] = a[rows_a[r],:] + b[rows_b[r],:].
    GatherAddRows {
        a: TensorId,
        rows_a: Vec<usize>,
        b: TensorId,
        rows_b: Vec<usize>,
    },
}

fn fmt_shape(shape: &[usize]) -> String {
    format!("{shape:?}")
}

fn pack_shape(shape: &[usize], len: usize) -> Result<(u8, [usize; 2])> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::Contract(format!(
            "tensors are 1-D or 2-D, got {}",
            fmt_shape(shape)
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Contract(format!(
            "tensor dimensions must be >= 1, got {}",
            fmt_shape(shape)
        )));
    }
    let numel: usize = shape.iter().product();
    if numel != len {
        return Err(Error::Contract(format!(
            "shape {} implies {} values, got {}",
            fmt_shape(shape),
            numel,
            len
        )));
    }
    let mut dims = [1usize; 2];
    dims[..shape.len()].copy_from_slice(shape);
    Ok((shape.len() as u8, dims))
}

/// Raw 2-D matrix product, also used by backward formulas.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

fn transpose_into(a: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
}

fn rotary_angle(position: f64, pair: usize, d: usize) -> f64 {
    position * 10000f64.powf(-2.0 * pair as f64 / d as f64)
}

/// Computation tape: a value slab plus the ops that filled it.
#[derive(Default)]
pub struct Tape {
    slab: Vec<f64>,
    nodes: Vec<Node>,
    ops: Vec<Op>,
    /// Per-leaf gradients, populated by [`Tape::backward`].
    grads: Vec<Option<Vec<f64>>>,
    adj_scratch: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all tensors but keep the allocated capacity for reuse.
    pub fn reset(&mut self) {
        self.slab.clear();
        self.nodes.clear();
        self.ops.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        let n = &self.nodes[id.0];
        &self.slab[n.off..n.off + n.len]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].shape()
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].len
    }

    /// Gradient of a leaf after [`Tape::backward`]; `None` until then.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Owned snapshot of a tape entry.
    pub fn tensor(&self, id: TensorId) -> Tensor {
        Tensor {
            shape: self.shape(id).to_vec(),
            values: self.values(id).to_vec(),
            requires_grad: self.nodes[id.0].requires_grad,
            grad: self.grads[id.0].clone(),
            tape_id: Some(id),
        }
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn region(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.off, n.len)
    }

    /// Append a zero-filled output region; the caller fills it through
    /// the second half of a `split_at_mut(off)`.
    fn alloc(&mut self, shape: &[usize], len: usize, requires_grad: bool, op: Op) -> Result<TensorId> {
        let (ndim, dims) = pack_shape(shape, len)?;
        let off = self.slab.len();
        self.slab.resize(off + len, 0.0);
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { off, len, ndim, dims, requires_grad });
        self.ops.push(op);
        self.grads.push(None);
        Ok(id)
    }

    // ---- leaves ------------------------------------------------------

    pub fn leaf(&mut self, values: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorId> {
        let id = self.alloc(&shape, values.len(), requires_grad, Op::Leaf)?;
        let off = self.nodes[id.0].off;
        self.slab[off..off + values.len()].copy_from_slice(&values);
        Ok(id)
    }

    /// Leaf copied from a slice (no intermediate allocation).
    pub fn leaf_from(&mut self, values: &[f64], shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        let id = self.alloc(shape, values.len(), requires_grad, Op::Leaf)?;
        let off = self.nodes[id.0].off;
        self.slab[off..off + values.len()].copy_from_slice(values);
        Ok(id)
    }

    /// 1-D constant leaf.
    pub fn vector(&mut self, values: Vec<f64>) -> Result<TensorId> {
        let n = values.len();
        self.leaf(values, vec![n], false)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Result<TensorId> {
        let n: usize = shape.iter().product();
        self.alloc(&shape, n, false, Op::Leaf)
    }

    // ---- binary elementwise ------------------------------------------

    fn binary_check(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dim {
                op,
                lhs: fmt_shape(self.shape(a)),
                rhs: fmt_shape(self.shape(b)),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_check("add", a, b)?;
        let (ao, len) = self.region(a);
        let (bo, _) = self.region(b);
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a) || self.requires(b);
        let id = self.alloc(&shape, len, rg, Op::Add { a, b })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        for (i, o) in write.iter_mut().enumerate() {
            *o = read[ao + i] + read[bo + i];
        }
        Ok(id)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_check("mul", a, b)?;
        let (ao, len) = self.region(a);
        let (bo, _) = self.region(b);
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a) || self.requires(b);
        let id = self.alloc(&shape, len, rg, Op::Mul { a, b })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        for (i, o) in write.iter_mut().enumerate() {
            *o = read[ao + i] * read[bo + i];
        }
        Ok(id)
    }

    // ---- unary -------------------------------------------------------

    fn unary(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> TensorId {
        let (ao, len) = self.region(a);
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        let id = self.alloc(&shape, len, rg, op).expect("same shape as input");
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        for (o, &x) in write.iter_mut().zip(&read[ao..ao + len]) {
            *o = f(x);
        }
        id
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::tanh, Op::Tanh { a })
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        self.unary(a, |x| x.max(0.0), Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid { a })
    }

    /// Natural log with the argument clamped to `[LN_CLAMP_LO, LN_CLAMP_HI]`.
    pub fn ln_clamped(&mut self, a: TensorId) -> TensorId {
        self.unary(
            a,
            |x| x.clamp(LN_CLAMP_LO, LN_CLAMP_HI).ln(),
            Op::LnClamped { a },
        )
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, a: TensorId, scale: f64, shift: f64) -> TensorId {
        self.unary(a, |x| scale * x + shift, Op::Affine { a, scale })
    }

    // ---- softmax -----------------------------------------------------

    /// Numerically stable softmax over a 1-D tensor.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        if self.shape(a).len() != 1 {
            return Err(Error::Contract(format!(
                "softmax expects a 1-D tensor, got {}",
                fmt_shape(self.shape(a))
            )));
        }
        let (ao, len) = self.region(a);
        if self.values(a).iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("softmax input contains NaN/Inf".into()));
        }
        let rg = self.requires(a);
        let id = self.alloc(&[len], len, rg, Op::Softmax { a })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        let xs = &read[ao..ao + len];
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..len {
            let e = (xs[i] - max).exp();
            write[i] = e;
            sum += e;
        }
        for w in &mut write[..len] {
            *w /= sum;
        }
        Ok(id)
    }

    // ---- structure ---------------------------------------------------

    /// Concatenate along the last axis. All leading dimensions must match;
    /// 1-D inputs concatenate end to end.
    pub fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let first = self.shape(parts[0]).to_vec();
        let ndim = first.len();
        let lead = &first[..ndim - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != ndim || &s[..ndim - 1] != lead {
                return Err(Error::Dim {
                    op: "concat",
                    lhs: fmt_shape(&first),
                    rhs: fmt_shape(s),
                });
            }
            widths.push(s[ndim - 1]);
        }
        let rows: usize = lead.iter().product();
        let total_w: usize = widths.iter().sum();
        let mut shape = lead.to_vec();
        shape.push(total_w);
        let rg = parts.iter().any(|&p| self.requires(p));
        let offs: Vec<usize> = parts.iter().map(|&p| self.region(p).0).collect();
        let id = self.alloc(&shape, rows * total_w, rg, Op::Concat { parts: parts.to_vec() })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        let mut cursor = 0;
        for r in 0..rows {
            for (&po, &w) in offs.iter().zip(&widths) {
                write[cursor..cursor + w].copy_from_slice(&read[po + r * w..po + (r + 1) * w]);
                cursor += w;
            }
        }
        Ok(id)
    }

    /// Copy rows of a 1-D or 2-D table in index order. Backward
    /// scatter-adds into the table, so duplicate indices accumulate.
    pub fn gather(&mut self, table: TensorId, indices: &[usize]) -> Result<TensorId> {
        if indices.is_empty() {
            return Err(Error::Contract("gather of zero rows".into()));
        }
        let tshape = self.shape(table).to_vec();
        let rows = tshape[0];
        let width = self.numel(table) / rows;
        for &i in indices {
            if i >= rows {
                return Err(Error::Index { index: i, size: rows });
            }
        }
        let shape = if tshape.len() == 1 {
            vec![indices.len()]
        } else {
            vec![indices.len(), width]
        };
        let rg = self.requires(table);
        let (to, _) = self.region(table);
        let id = self.alloc(
            &shape,
            indices.len() * width,
            rg,
            Op::Gather { table, indices: indices.to_vec() },
        )?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        let Op::Gather { indices, .. } = &self.ops[id.0] else { unreachable!() };
        for (k, &i) in indices.iter().enumerate() {
            write[k * width..(k + 1) * width]
                .copy_from_slice(&read[to + i * width..to + (i + 1) * width]);
        }
        Ok(id)
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.values(a).iter().sum();
        let rg = self.requires(a);
        let id = self.alloc(&[1], 1, rg, Op::SumAll { a }).expect("scalar");
        let off = self.nodes[id.0].off;
        self.slab[off] = s;
        id
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.numel(a) as f64;
        let s: f64 = self.values(a).iter().sum::<f64>() / n;
        let rg = self.requires(a);
        let id = self.alloc(&[1], 1, rg, Op::MeanAll { a }).expect("scalar");
        let off = self.nodes[id.0].off;
        self.slab[off] = s;
        id
    }

    fn reduce_axis(&mut self, a: TensorId, axis: usize, mean: bool) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 || axis > 1 {
            return Err(Error::Contract(format!(
                "axis reduction expects a 2-D tensor and axis 0/1, got {} axis {}",
                fmt_shape(&shape),
                axis
            )));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let (ao, _) = self.region(a);
        let (out_len, n) = if axis == 0 { (cols, rows) } else { (rows, cols) };
        let rg = self.requires(a);
        let op = if mean {
            Op::MeanAxis { a, axis }
        } else {
            Op::SumAxis { a, axis }
        };
        let id = self.alloc(&[out_len], out_len, rg, op)?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        for r in 0..rows {
            for c in 0..cols {
                let o = if axis == 0 { c } else { r };
                write[o] += read[ao + r * cols + c];
            }
        }
        if mean {
            for w in &mut write[..out_len] {
                *w /= n as f64;
            }
        }
        Ok(id)
    }

    pub fn sum_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_axis(a, axis, false)
    }

    pub fn mean_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_axis(a, axis, true)
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let (ao, len) = self.region(a);
        let rg = self.requires(a);
        let id = self.alloc(&shape, len, rg, Op::Reshape { a })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        write[..len].copy_from_slice(&read[ao..ao + len]);
        Ok(id)
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(Error::Contract(format!(
                "transpose expects a 2-D tensor, got {}",
                fmt_shape(&shape)
            )));
        }
        let (ao, len) = self.region(a);
        let rg = self.requires(a);
        let id = self.alloc(&[shape[1], shape[0]], len, rg, Op::Transpose { a })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        transpose_into(&read[ao..ao + len], shape[0], shape[1], write);
        Ok(id)
    }

    // ---- linear algebra ----------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dim {
                op: "matmul",
                lhs: fmt_shape(&sa),
                rhs: fmt_shape(&sb),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ao, _) = self.region(a);
        let (bo, _) = self.region(b);
        let rg = self.requires(a) || self.requires(b);
        let id = self.alloc(&[m, n], m * n, rg, Op::MatMul { a, b })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        matmul_raw(
            &read[ao..ao + m * k],
            &read[bo..bo + k * n],
            m,
            k,
            n,
            &mut write[..m * n],
        );
        Ok(id)
    }

    /// `s` must have shape [1]; scales every entry of `a`.
    pub fn scale_by(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.numel(s) != 1 {
            return Err(Error::Contract(format!(
                "scale_by expects a scalar, got {}",
                fmt_shape(self.shape(s))
            )));
        }
        let sv = self.values(s)[0];
        let (ao, len) = self.region(a);
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a) || self.requires(s);
        let id = self.alloc(&shape, len, rg, Op::ScaleByScalar { a, s })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        for i in 0..len {
            write[i] = read[ao + i] * sv;
        }
        Ok(id)
    }

    /// Rotate consecutive pairs of each row of `a` by `position *
    /// 10000^(-2k/d)`; preserves row norms.
    pub fn rotary(&mut self, a: TensorId, positions: &[f64]) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        let (rows, d) = match shape.len() {
            1 => (1, shape[0]),
            _ => (shape[0], shape[1]),
        };
        if d % 2 != 0 {
            return Err(Error::Config(format!(
                "rotary encoding needs an even dimension, got {d}"
            )));
        }
        if positions.len() != rows {
            return Err(Error::Contract(format!(
                "rotary positions: expected {rows}, got {}",
                positions.len()
            )));
        }
        let (ao, len) = self.region(a);
        let rg = self.requires(a);
        let id = self.alloc(
            &shape,
            len,
            rg,
            Op::Rotary { a, positions: positions.to_vec() },
        )?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        let Op::Rotary { positions, .. } = &self.ops[id.0] else { unreachable!() };
        for (r, &pos) in positions.iter().enumerate() {
            for pair in 0..d / 2 {
                let theta = rotary_angle(pos, pair, d);
                let (sin, cos) = theta.sin_cos();
                let i = r * d + 2 * pair;
                write[i] = read[ao + i] * cos - read[ao + i + 1] * sin;
                write[i + 1] = read[ao + i] * sin + read[ao + i + 1] * cos;
            }
        }
        Ok(id)
    }

    /// `scale * (M q)` for a [k, d] matrix and a d-entry vector (any
    /// shape with d values). Output shape [k].
    pub fn mat_vec_scaled(&mut self, m: TensorId, q: TensorId, scale: f64) -> Result<TensorId> {
        let ms = self.shape(m).to_vec();
        if ms.len() != 2 || self.numel(q) != ms[1] {
            return Err(Error::Dim {
                op: "mat_vec_scaled",
                lhs: fmt_shape(&ms),
                rhs: fmt_shape(self.shape(q)),
            });
        }
        let (rows, d) = (ms[0], ms[1]);
        let (mo, _) = self.region(m);
        let (qo, _) = self.region(q);
        let rg = self.requires(m) || self.requires(q);
        let id = self.alloc(&[rows], rows, rg, Op::MatVecScaled { m, q, scale })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        let qv = &read[qo..qo + d];
        for r in 0..rows {
            let row = &read[mo + r * d..mo + (r + 1) * d];
            write[r] = scale * row.iter().zip(qv).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(id)
    }

    /// `sum_r w[r] * M[r,:]` for a [k, d] matrix and k weights. Output
    /// shape [d].
    pub fn weighted_rows(&mut self, m: TensorId, w: TensorId) -> Result<TensorId> {
        let ms = self.shape(m).to_vec();
        if ms.len() != 2 || self.numel(w) != ms[0] {
            return Err(Error::Dim {
                op: "weighted_rows",
                lhs: fmt_shape(&ms),
                rhs: fmt_shape(self.shape(w)),
            });
        }
        let (rows, d) = (ms[0], ms[1]);
        let (mo, _) = self.region(m);
        let (wo, _) = self.region(w);
        let rg = self.requires(m) || self.requires(w);
        let id = self.alloc(&[d], d, rg, Op::WeightedRows { m, w })?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        for (r, &wr) in read[wo..wo + rows].iter().enumerate() {
            let row = &read[mo + r * d..mo + (r + 1) * d];
            for (o, &v) in write.iter_mut().zip(row) {
                *o += wr * v;
            }
        }
        Ok(id)
    }

    /// Row-gather from two equal-width tables added together:
    /// `out[r,:] = a[rows_a[r],:] + b[rows_b[r],:]`. Backward
    /// scatter-adds into both tables.
    pub fn gather_add_rows(
        &mut self,
        a: TensorId,
        rows_a: &[usize],
        b: TensorId,
        rows_b: &[usize],
    ) -> Result<TensorId> {
        if rows_a.is_empty() || rows_a.len() != rows_b.len() {
            return Err(Error::Contract(format!(
                "gather_add_rows: {} vs {} rows",
                rows_a.len(),
                rows_b.len()
            )));
        }
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::Dim {
                op: "gather_add_rows",
                lhs: fmt_shape(&sa),
                rhs: fmt_shape(&sb),
            });
        }
        let width = sa[1];
        for &r in rows_a {
            if r >= sa[0] {
                return Err(Error::Index { index: r, size: sa[0] });
            }
        }
        for &r in rows_b {
            if r >= sb[0] {
                return Err(Error::Index { index: r, size: sb[0] });
            }
        }
        let (aoff, _) = self.region(a);
        let (boff, _) = self.region(b);
        let rg = self.requires(a) || self.requires(b);
        let id = self.alloc(
            &[rows_a.len(), width],
            rows_a.len() * width,
            rg,
            Op::GatherAddRows {
                a,
                rows_a: rows_a.to_vec(),
                b,
                rows_b: rows_b.to_vec(),
            },
        )?;
        let out_off = self.nodes[id.0].off;
        let (read, write) = self.slab.split_at_mut(out_off);
        let Op::GatherAddRows { rows_a, rows_b, .. } = &self.ops[id.0] else { unreachable!() };
        for (k, (&ra, &rb)) in rows_a.iter().zip(rows_b).enumerate() {
            let x = &read[aoff + ra * width..aoff + (ra + 1) * width];
            let y = &read[boff + rb * width..boff + (rb + 1) * width];
            for c in 0..width {
                write[k * width + c] = x[c] + y[c];
            }
        }
        Ok(id)
    }

    // ---- backward ----------------------------------------------------

    /// Clear gradients on every tensor.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// Reverse sweep from a scalar loss. Populates `grad` on every leaf
    /// with `requires_grad`; leaves not reachable from the loss get a
    /// zero gradient. Calling twice without [`Tape::zero_grad`]
    /// accumulates (doubles) leaf gradients.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                fmt_shape(self.shape(loss))
            )));
        }
        let used = {
            let n = &self.nodes[loss.0];
            n.off + n.len
        };
        let mut adj = std::mem::take(&mut self.adj_scratch);
        adj.clear();
        adj.resize(used, 0.0);
        adj[self.nodes[loss.0].off] = 1.0;

        for idx in (0..=loss.0).rev() {
            let node = self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            // Input regions strictly precede the output region, so one
            // split gives the upstream gradient and all input adjoints.
            let (lo, hi) = adj.split_at_mut(node.off);
            let g = &hi[..node.len];
            match &self.ops[idx] {
                Op::Leaf => {}
                &Op::MatMul { a, b } => {
                    let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                    let nn = self.shape(b)[1];
                    let (ao, _) = self.region(a);
                    let (bo, _) = self.region(b);
                    if self.requires(a) {
                        // dA += g . B^T
                        let bv = &self.slab[bo..bo + k * nn];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..nn {
                                    s += g[i * nn + j] * bv[p * nn + j];
                                }
                                lo[ao + i * k + p] += s;
                            }
                        }
                    }
                    if self.requires(b) {
                        // dB += A^T . g, i-outer so both reads stay contiguous.
                        let av = &self.slab[ao..ao + m * k];
                        for i in 0..m {
                            let arow = &av[i * k..(i + 1) * k];
                            let grow = &g[i * nn..(i + 1) * nn];
                            for (p, &apv) in arow.iter().enumerate() {
                                let dst = &mut lo[bo + p * nn..bo + (p + 1) * nn];
                                for (o, &gv) in dst.iter_mut().zip(grow) {
                                    *o += apv * gv;
                                }
                            }
                        }
                    }
                }
                &Op::Transpose { a } => {
                    if self.requires(a) {
                        let (ao, _) = self.region(a);
                        let (rows, cols) = (node.dims[0], node.dims[1]);
                        for r in 0..rows {
                            for c in 0..cols {
                                lo[ao + c * rows + r] += g[r * cols + c];
                            }
                        }
                    }
                }
                &Op::Add { a, b } => {
                    for t in [a, b] {
                        if self.requires(t) {
                            let (to, tlen) = self.region(t);
                            for (o, gi) in lo[to..to + tlen].iter_mut().zip(g) {
                                *o += gi;
                            }
                        }
                    }
                }
                &Op::Mul { a, b } => {
                    let (ao, len) = self.region(a);
                    let (bo, _) = self.region(b);
                    if self.requires(a) {
                        let bv = &self.slab[bo..bo + len];
                        for ((o, gi), &x) in lo[ao..ao + len].iter_mut().zip(g).zip(bv) {
                            *o += gi * x;
                        }
                    }
                    if self.requires(b) {
                        let av = &self.slab[ao..ao + len];
                        for ((o, gi), &x) in lo[bo..bo + len].iter_mut().zip(g).zip(av) {
                            *o += gi * x;
                        }
                    }
                }
                &Op::Tanh { a } => {
                    if self.requires(a) {
                        let (ao, len) = self.region(a);
                        let y = &self.slab[node.off..node.off + len];
                        for ((o, gi), &yv) in lo[ao..ao + len].iter_mut().zip(g).zip(y) {
                            *o += gi * (1.0 - yv * yv);
                        }
                    }
                }
                &Op::Relu { a } => {
                    if self.requires(a) {
                        let (ao, len) = self.region(a);
                        let x = &self.slab[ao..ao + len];
                        for ((o, gi), &xv) in lo[ao..ao + len].iter_mut().zip(g).zip(x) {
                            if xv > 0.0 {
                                *o += gi;
                            }
                        }
                    }
                }
                &Op::Sigmoid { a } => {
                    if self.requires(a) {
                        let (ao, len) = self.region(a);
                        let y = &self.slab[node.off..node.off + len];
                        for ((o, gi), &yv) in lo[ao..ao + len].iter_mut().zip(g).zip(y) {
                            *o += gi * yv * (1.0 - yv);
                        }
                    }
                }
                &Op::LnClamped { a } => {
                    if self.requires(a) {
                        let (ao, len) = self.region(a);
                        let x = &self.slab[ao..ao + len];
                        for ((o, gi), &xv) in lo[ao..ao + len].iter_mut().zip(g).zip(x) {
                            if xv > LN_CLAMP_LO && xv < LN_CLAMP_HI {
                                *o += gi / xv;
                            }
                        }
                    }
                }
                &Op::Affine { a, scale } => {
                    if self.requires(a) {
                        let (ao, len) = self.region(a);
                        for (o, gi) in lo[ao..ao + len].iter_mut().zip(g) {
                            *o += gi * scale;
                        }
                    }
                }
                &Op::Softmax { a } => {
                    if self.requires(a) {
                        let (ao, len) = self.region(a);
                        let y = &self.slab[node.off..node.off + len];
                        let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                        for ((o, gi), &yv) in lo[ao..ao + len].iter_mut().zip(g).zip(y) {
                            *o += yv * (gi - dot);
                        }
                    }
                }
                Op::Concat { parts } => {
                    let ndim = node.ndim as usize;
                    let rows: usize = node.shape()[..ndim - 1].iter().product();
                    let total_w = node.shape()[ndim - 1];
                    let mut off_in_row = 0;
                    for &p in parts {
                        let w = self.shape(p)[ndim - 1];
                        if self.requires(p) {
                            let (po, _) = self.region(p);
                            for r in 0..rows {
                                for c in 0..w {
                                    lo[po + r * w + c] += g[r * total_w + off_in_row + c];
                                }
                            }
                        }
                        off_in_row += w;
                    }
                }
                Op::Gather { table, indices } => {
                    if self.requires(*table) {
                        let width = self.numel(*table) / self.shape(*table)[0];
                        let (to, _) = self.region(*table);
                        for (k, &i) in indices.iter().enumerate() {
                            let dst = &mut lo[to + i * width..to + (i + 1) * width];
                            let src = &g[k * width..(k + 1) * width];
                            for (o, &v) in dst.iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                }
                &Op::SumAll { a } => {
                    if self.requires(a) {
                        let (ao, alen) = self.region(a);
                        for o in &mut lo[ao..ao + alen] {
                            *o += g[0];
                        }
                    }
                }
                &Op::MeanAll { a } => {
                    if self.requires(a) {
                        let (ao, alen) = self.region(a);
                        let gi = g[0] / alen as f64;
                        for o in &mut lo[ao..ao + alen] {
                            *o += gi;
                        }
                    }
                }
                &Op::SumAxis { a, axis } | &Op::MeanAxis { a, axis } => {
                    if self.requires(a) {
                        let mean = matches!(self.ops[idx], Op::MeanAxis { .. });
                        let (rows, cols) = (self.shape(a)[0], self.shape(a)[1]);
                        let count = if axis == 0 { rows } else { cols };
                        let scale = if mean { 1.0 / count as f64 } else { 1.0 };
                        let (ao, _) = self.region(a);
                        for r in 0..rows {
                            for c in 0..cols {
                                let o = if axis == 0 { c } else { r };
                                lo[ao + r * cols + c] += g[o] * scale;
                            }
                        }
                    }
                }
                &Op::Reshape { a } => {
                    if self.requires(a) {
                        let (ao, _) = self.region(a);
                        for (i, gi) in g.iter().enumerate() {
                            lo[ao + i] += gi;
                        }
                    }
                }
                &Op::ScaleByScalar { a, s } => {
                    let (ao, alen) = self.region(a);
                    let (so, _) = self.region(s);
                    if self.requires(a) {
                        let sv = self.slab[so];
                        for (i, gi) in g.iter().enumerate() {
                            lo[ao + i] += gi * sv;
                        }
                    }
                    if self.requires(s) {
                        let av = &self.slab[ao..ao + alen];
                        let dot: f64 = g.iter().zip(av).map(|(gi, ai)| gi * ai).sum();
                        lo[so] += dot;
                    }
                }
                Op::Rotary { a, positions } => {
                    if self.requires(*a) {
                        // Inverse rotation of the upstream gradient.
                        let d = *self.shape(*a).last().unwrap();
                        let (ao, _) = self.region(*a);
                        for (r, &pos) in positions.iter().enumerate() {
                            for pair in 0..d / 2 {
                                let theta = rotary_angle(pos, pair, d);
                                let (sin, cos) = theta.sin_cos();
                                let i = r * d + 2 * pair;
                                lo[ao + i] += g[i] * cos + g[i + 1] * sin;
                                lo[ao + i + 1] += -g[i] * sin + g[i + 1] * cos;
                            }
                        }
                    }
                }
                &Op::MatVecScaled { m, q, scale } => {
                    let (rows, d) = (self.shape(m)[0], self.shape(m)[1]);
                    let (mo, _) = self.region(m);
                    let (qo, _) = self.region(q);
                    if self.requires(m) {
                        let qv = &self.slab[qo..qo + d];
                        for r in 0..rows {
                            let gr = g[r] * scale;
                            let dst = &mut lo[mo + r * d..mo + (r + 1) * d];
                            for (o, &qc) in dst.iter_mut().zip(qv) {
                                *o += gr * qc;
                            }
                        }
                    }
                    if self.requires(q) {
                        for (r, gi) in g.iter().enumerate() {
                            let gr = gi * scale;
                            let row = &self.slab[mo + r * d..mo + (r + 1) * d];
                            let dst = &mut lo[qo..qo + d];
                            for (o, &mv) in dst.iter_mut().zip(row) {
                                *o += gr * mv;
                            }
                        }
                    }
                }
                &Op::WeightedRows { m, w } => {
                    let (rows, d) = (self.shape(m)[0], self.shape(m)[1]);
                    let (mo, _) = self.region(m);
                    let (wo, _) = self.region(w);
                    if self.requires(m) {
                        for r in 0..rows {
                            let wr = self.slab[wo + r];
                            let dst = &mut lo[mo + r * d..mo + (r + 1) * d];
                            for (o, gc) in dst.iter_mut().zip(g) {
                                *o += wr * gc;
                            }
                        }
                    }
                    if self.requires(w) {
                        for r in 0..rows {
                            let row = &self.slab[mo + r * d..mo + (r + 1) * d];
                            lo[wo + r] += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                Op::GatherAddRows { a, rows_a, b, rows_b } => {
                    let width = self.shape(*a)[1];
                    for (t, rows) in [(*a, rows_a), (*b, rows_b)] {
                        if self.requires(t) {
                            let (to, _) = self.region(t);
                            for (k, &r) in rows.iter().enumerate() {
                                let dst = &mut lo[to + r * width..to + (r + 1) * width];
                                let src = &g[k * width..(k + 1) * width];
                                for (o, &v) in dst.iter_mut().zip(src) {
                                    *o += v;
                                }
                            }
                        }
                    }
                }
            }
        }

        // Write gradients out to leaves; accumulate across backward calls.
        for idx in 0..=loss.0 {
            if !matches!(self.ops[idx], Op::Leaf) || !self.nodes[idx].requires_grad {
                continue;
            }
            let (off, len) = (self.nodes[idx].off, self.nodes[idx].len);
            match &mut self.grads[idx] {
                Some(existing) => {
                    for (o, v) in existing.iter_mut().zip(&adj[off..off + len]) {
                        *o += v;
                    }
                }
                slot @ None => *slot = Some(adj[off..off + len].to_vec()),
            }
        }
        self.adj_scratch = adj;
        Ok(())
    }
}
