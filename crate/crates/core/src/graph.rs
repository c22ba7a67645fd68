//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass in
//! creation order, which is also a topological order. [`Graph::backward`]
//! walks the tape once in reverse and deposits parameter gradients into the
//! [`ParamStore`] the parameters were read from.
//!
//! Parameters live outside the graph so that a fresh graph can be built per
//! mini-batch while the optimizer mutates the store in between. A graph is
//! single-threaded; build one per thread if forward passes run concurrently.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{matmul_into, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct ParamEntry<F> {
    name: String,
    tensor: Tensor<F>,
    pad_row: Option<usize>,
}

/// Named parameter tensors, in insertion order.
///
/// A tensor is trainable when its `requires_grad` flag is set. A `pad_row`
/// marks an embedding row that must stay zero: gathers of it never receive
/// gradient.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F = f32> {
    entries: Vec<ParamEntry<F>>,
    by_name: HashMap<String, usize>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> Result<ParamId> {
        self.add_with_pad(name, tensor, None)
    }

    pub fn add_with_pad(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor<F>,
        pad_row: Option<usize>,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry {
            name,
            tensor,
            pad_row,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn pad_row(&self, id: ParamId) -> Option<usize> {
        self.entries[id.0].pad_row
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (ParamId(i), e.name.as_str(), &e.tensor))
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|e| e.tensor.zero_grad());
    }

    /// Number of scalar elements across trainable tensors.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.tensor.requires_grad())
            .map(|e| e.tensor.numel())
            .sum()
    }

    /// Copies all values (not gradients) into another element type.
    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    tensor: e.tensor.cast(),
                    pad_row: e.pad_row,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    /// Overwrites values from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<F>) -> Result<()> {
        if other.entries.len() != self.entries.len() {
            return Err(Error::Integrity("parameter layouts differ".into()));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name || dst.tensor.shape() != src.tensor.shape() {
                return Err(Error::Integrity(format!(
                    "parameter `{}` does not match `{}`",
                    dst.name, src.name
                )));
            }
            dst.tensor.values_mut().copy_from_slice(src.tensor.values());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(ParamId),
    Gather { table: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<F>),
    Sigmoid(Var),
    Tanh(Var),
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { input: Var, start: usize },
    SliceRows { input: Var, start: usize },
    TakeRows { input: Var, rows: Vec<usize> },
    SelectRows { on: Var, off: Var, mask: Vec<bool> },
    Reshape(Var),
    Transpose(Var),
    Conv1d { input: Var, kernel: Var, bias: Var, segment: usize },
    SegmentMax { input: Var, argmax: Vec<usize> },
    MaskedSoftmax { input: Var },
    ScaleRows { input: Var, scale: Var },
    Sum(Var),
    Bce { probs: Var, labels: Vec<F>, mask: Vec<bool>, count: usize },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Recorded computation.
pub struct Graph<F: Scalar = f32> {
    nodes: Vec<Node<F>>,
    params: HashMap<ParamId, Var>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, var: Var) -> Option<&[F]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

/// Clamp applied to probabilities inside the cross-entropy loss.
pub const BCE_EPS: f64 = 1e-7;

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf value. When `requires_grad` is set, [`Gradients::get`] reports its gradient.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        let needs = value.requires_grad();
        self.push(value, Op::Input, needs)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Reads a parameter. Repeated reads share one node.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.get(id);
        let mut value = t.clone();
        value.zero_grad();
        let needs = t.requires_grad();
        let var = self.push(value, Op::Param(id), needs);
        self.params.insert(id, var);
        var
    }

    /// Row gather from an embedding table: `ids.len() × D`.
    pub fn gather(&mut self, store: &ParamStore<F>, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = store.get(table);
        let (rows, dim) = match t.shape() {
            [r, d] => (*r, *d),
            s => return Err(Error::Rank(format!("embedding table must be rank 2, got {s:?}"))),
        };
        if ids.is_empty() {
            return Err(Error::DegenerateInput("empty id list".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= rows {
                return Err(Error::OutOfRange { index: id, size: rows });
            }
            out.extend_from_slice(t.row(id));
        }
        let value = Tensor::new([ids.len(), dim], out)?;
        let needs = t.requires_grad();
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (n, k, m) = match (sa, sb) {
            ([n, k], [k2, m]) if k == k2 => (*n, *k, *m),
            _ => return Err(Error::shape("matmul", sa, sb)),
        };
        let mut out = vec![F::zero(); n * m];
        matmul_into(self.value(a).values(), self.value(b).values(), &mut out, n, k, m);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new([n, m], out)?, Op::MatMul(a, b), needs))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        let out = va.values().iter().zip(vb.values()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    /// `a[n×m] + bias[m]`, bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        let (n, m) = va.dims2()?;
        if vb.numel() != m || vb.rank() != 1 {
            return Err(Error::shape("add_bias", va.shape(), vb.shape()));
        }
        let b = vb.values();
        let mut out = va.values().to_vec();
        for r in 0..n {
            for (o, &bv) in out[r * m..(r + 1) * m].iter_mut().zip(b) {
                *o = *o + bv;
            }
        }
        let shape = va.shape().to_vec();
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(a, bias), needs))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Vec<F>) -> Result<Var> {
        let va = self.value(a);
        if c.len() != va.numel() {
            return Err(Error::shape("mul_const", va.shape(), &[c.len()]));
        }
        let out = va.values().iter().zip(&c).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), out)?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::MulConst(a, c), needs))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.values().iter().map(|&x| sigmoid(x)).collect();
        let value = Tensor::new(va.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(a);
        self.push(value, Op::Sigmoid(a), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.values().iter().map(|&x| x.tanh()).collect();
        let value = Tensor::new(va.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    pub fn activate(&mut self, a: Var, activation: Activation) -> Var {
        match activation {
            Activation::Sigmoid => self.sigmoid(a),
            Activation::Tanh => self.tanh(a),
            Activation::Identity => a,
        }
    }

    /// Concatenates along `axis`. Rank-1 and rank-2 inputs are supported.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::DegenerateInput("concat of zero tensors".into()))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let rank = self.value(first).rank();
        if axis >= rank || rank > 2 {
            return Err(Error::Rank(format!("concat axis {axis} on rank {rank}")));
        }
        let base = self.shape(first).to_vec();
        for &p in &parts[1..] {
            let s = self.shape(p);
            let compatible = s.len() == rank && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
        }
        let value = if rank == 1 || axis == 0 {
            let mut out = Vec::new();
            let mut rows = 0;
            for &p in parts {
                out.extend_from_slice(self.value(p).values());
                rows += self.shape(p)[0];
            }
            let mut shape = base.clone();
            shape[0] = rows;
            Tensor::new(shape, out)?
        } else {
            let n = base[0];
            let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p)[1]).collect();
            let total: usize = widths.iter().sum();
            let mut out = Vec::with_capacity(n * total);
            for r in 0..n {
                for &p in parts {
                    out.extend_from_slice(self.value(p).row(r));
                }
            }
            Tensor::new([n, total], out)?
        };
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        let (n, m) = match va.shape() {
            [n, m] => (*n, *m),
            s => return Err(Error::Rank(format!("slice_cols expects rank 2, got {s:?}"))),
        };
        if len == 0 || start + len > m {
            return Err(Error::shape("slice_cols", va.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&va.row(r)[start..start + len]);
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new([n, len], out)?, Op::SliceCols { input: a, start }, needs))
    }

    /// Rows `start..start+len` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        let (n, m) = match va.shape() {
            [n, m] => (*n, *m),
            s => return Err(Error::Rank(format!("slice_rows expects rank 2, got {s:?}"))),
        };
        if len == 0 || start + len > n {
            return Err(Error::shape("slice_rows", va.shape(), &[start, len]));
        }
        let out = va.values()[start * m..(start + len) * m].to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new([len, m], out)?, Op::SliceRows { input: a, start }, needs))
    }

    /// Gathers rows of a matrix by index.
    pub fn take_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let va = self.value(a);
        let (n, m) = match va.shape() {
            [n, m] => (*n, *m),
            s => return Err(Error::Rank(format!("take_rows expects rank 2, got {s:?}"))),
        };
        if rows.is_empty() {
            return Err(Error::DegenerateInput("take_rows with no rows".into()));
        }
        let mut out = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            if r >= n {
                return Err(Error::OutOfRange { index: r, size: n });
            }
            out.extend_from_slice(va.row(r));
        }
        let needs = self.needs(a);
        let value = Tensor::new([rows.len(), m], out)?;
        Ok(self.push(
            value,
            Op::TakeRows {
                input: a,
                rows: rows.to_vec(),
            },
            needs,
        ))
    }

    /// Row-wise choice: row `r` comes from `on` where `mask[r]`, else from `off`.
    pub fn select_rows(&mut self, on: Var, off: Var, mask: &[bool]) -> Result<Var> {
        let (va, vb) = (self.value(on), self.value(off));
        if va.shape() != vb.shape() {
            return Err(Error::shape("select_rows", va.shape(), vb.shape()));
        }
        let (n, m) = va.dims2()?;
        if mask.len() != n {
            return Err(Error::shape("select_rows", va.shape(), &[mask.len()]));
        }
        let mut out = Vec::with_capacity(n * m);
        for (r, &keep) in mask.iter().enumerate() {
            out.extend_from_slice(if keep { va.row(r) } else { vb.row(r) });
        }
        let value = Tensor::new(va.shape().to_vec(), out)?;
        let needs = self.needs(on) || self.needs(off);
        Ok(self.push(
            value,
            Op::SelectRows {
                on,
                off,
                mask: mask.to_vec(),
            },
            needs,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::Reshape(a), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let (n, m) = match va.shape() {
            [n, m] => (*n, *m),
            s => return Err(Error::Rank(format!("transpose expects rank 2, got {s:?}"))),
        };
        let src = va.values();
        let mut out = vec![F::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = src[i * m + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new([m, n], out)?, Op::Transpose(a), needs))
    }

    /// 1-D convolution with "same" zero padding.
    ///
    /// `input` is `[N×C_in]` holding `N / segment` independent sequences of
    /// length `segment` stacked row-wise; `kernel` is `[K×C_in×C_out]` with odd
    /// `K`; `bias` is `[C_out]`. Padding never crosses a segment boundary.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var, segment: usize) -> Result<Var> {
        let (vi, vk, vb) = (self.value(input), self.value(kernel), self.value(bias));
        let (k, c_in, c_out) = match vk.shape() {
            [k, ci, co] => (*k, *ci, *co),
            s => return Err(Error::Rank(format!("conv kernel must be [K×C_in×C_out], got {s:?}"))),
        };
        if k % 2 == 0 {
            return Err(Error::Config(format!("convolution width must be odd, got {k}")));
        }
        let (n, ci) = match vi.shape() {
            [n, ci] => (*n, *ci),
            s => return Err(Error::Rank(format!("conv input must be [T×C_in], got {s:?}"))),
        };
        if ci != c_in {
            return Err(Error::shape("conv1d", vi.shape(), vk.shape()));
        }
        if vb.shape() != [c_out] {
            return Err(Error::shape("conv1d bias", vb.shape(), &[c_out]));
        }
        if segment == 0 || n % segment != 0 {
            return Err(Error::Config(format!("segment {segment} does not divide {n} rows")));
        }
        let half = k / 2;
        let (x, w, b) = (vi.values(), vk.values(), vb.values());
        let mut out = vec![F::zero(); n * c_out];
        for s0 in (0..n).step_by(segment) {
            for t in 0..segment {
                let o = &mut out[(s0 + t) * c_out..(s0 + t + 1) * c_out];
                o.copy_from_slice(b);
                for j in 0..k {
                    let pos = t as isize + j as isize - half as isize;
                    if pos < 0 || pos >= segment as isize {
                        continue;
                    }
                    let xr = &x[(s0 + pos as usize) * c_in..(s0 + pos as usize + 1) * c_in];
                    for (c, &xv) in xr.iter().enumerate() {
                        if xv == F::zero() {
                            continue;
                        }
                        let wr = &w[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                        for (ov, &wv) in o.iter_mut().zip(wr) {
                            *ov = *ov + xv * wv;
                        }
                    }
                }
            }
        }
        let needs = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            Tensor::new([n, c_out], out)?,
            Op::Conv1d {
                input,
                kernel,
                bias,
                segment,
            },
            needs,
        ))
    }

    /// Column-wise maximum over each block of `segment` rows: `[N×C] -> [N/segment × C]`.
    /// Ties resolve to the earliest row.
    pub fn segment_max(&mut self, a: Var, segment: usize) -> Result<Var> {
        let va = self.value(a);
        let (n, c) = va.dims2()?;
        if segment == 0 || n % segment != 0 {
            return Err(Error::Config(format!("segment {segment} does not divide {n} rows")));
        }
        let groups = n / segment;
        let x = va.values();
        let mut out = vec![F::zero(); groups * c];
        let mut argmax = vec![0usize; groups * c];
        for g in 0..groups {
            for ch in 0..c {
                let mut best = g * segment;
                for r in g * segment + 1..(g + 1) * segment {
                    if x[r * c + ch] > x[best * c + ch] {
                        best = r;
                    }
                }
                out[g * c + ch] = x[best * c + ch];
                argmax[g * c + ch] = best;
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new([groups, c], out)?, Op::SegmentMax { input: a, argmax }, needs))
    }

    /// Softmax along the last axis restricted to positions where `mask` is true.
    ///
    /// Accepts `[T]` (one sequence) or `[B×T]` with a row-major `B×T` mask.
    /// Masked positions are exactly zero.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let va = self.value(a);
        let (rows, t) = va.dims2()?;
        if mask.len() != rows * t {
            return Err(Error::shape("masked_softmax", va.shape(), &[mask.len()]));
        }
        let x = va.values();
        let mut out = vec![F::zero(); rows * t];
        for r in 0..rows {
            let (xs, ms) = (&x[r * t..(r + 1) * t], &mask[r * t..(r + 1) * t]);
            let max = xs
                .iter()
                .zip(ms)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(None, |acc: Option<F>, v| Some(acc.map_or(v, |a| a.max(v))))
                .ok_or(Error::DegenerateMask)?;
            let o = &mut out[r * t..(r + 1) * t];
            let mut sum = F::zero();
            for i in 0..t {
                if ms[i] {
                    o[i] = (xs[i] - max).exp();
                    sum = sum + o[i];
                }
            }
            o.iter_mut().for_each(|v| *v = *v / sum);
        }
        let value = Tensor::new(va.shape().to_vec(), out)?;
        let needs = self.needs(a);
        Ok(self.push(
            value,
            Op::MaskedSoftmax { input: a },
            needs,
        ))
    }

    /// `out[r, :] = a[r, :] * scale[r]`.
    pub fn scale_rows(&mut self, a: Var, scale: Var) -> Result<Var> {
        let (va, vs) = (self.value(a), self.value(scale));
        let (n, m) = va.dims2()?;
        if vs.numel() != n {
            return Err(Error::shape("scale_rows", va.shape(), vs.shape()));
        }
        let mut out = va.values().to_vec();
        for (r, &s) in vs.values().iter().enumerate() {
            out[r * m..(r + 1) * m].iter_mut().for_each(|v| *v = *v * s);
        }
        let value = Tensor::new(va.shape().to_vec(), out)?;
        let needs = self.needs(a) || self.needs(scale);
        Ok(self.push(value, Op::ScaleRows { input: a, scale }, needs))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).values().iter().fold(F::zero(), |acc, &v| acc + v);
        let needs = self.needs(a);
        self.push(Tensor::scalar(total), Op::Sum(a), needs)
    }

    /// Mean binary cross-entropy over positions where `mask` is true.
    /// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, probs: Var, labels: &[F], mask: &[bool]) -> Result<Var> {
        let vp = self.value(probs);
        if labels.len() != vp.numel() || mask.len() != vp.numel() {
            return Err(Error::shape("bce", vp.shape(), &[labels.len(), mask.len()]));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::DegenerateMask);
        }
        let (lo, hi) = (F::of(BCE_EPS), F::one() - F::of(BCE_EPS));
        let mut total = F::zero();
        for ((&p, &y), &m) in vp.values().iter().zip(labels).zip(mask) {
            if m {
                let p = p.max(lo).min(hi);
                total = total - (y * p.ln() + (F::one() - y) * (F::one() - p).ln());
            }
        }
        let loss = total / F::of(count as f64);
        let needs = self.needs(probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                probs,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
                count,
            },
            needs,
        ))
    }

    /// Back-propagates from a scalar `loss`.
    ///
    /// Gradients of trainable parameters are added to their accumulators in
    /// `store` (existing contents are kept, never cleared here). The returned
    /// [`Gradients`] also hold the gradient of every graph node.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<F>) -> Result<Gradients<F>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Rank(format!("backward needs a scalar loss, got shape {:?}", lv.shape())));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads, store)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<F>>], var: Var, f: impl FnOnce(&mut [F])) {
        if !self.needs(var) {
            return;
        }
        let n = self.nodes[var.0].value.numel();
        let slot = grads[var.0].get_or_insert_with(|| vec![F::zero(); n]);
        f(slot);
    }

    fn propagate(
        &self,
        node: &Node<F>,
        g: &[F],
        grads: &mut [Option<Vec<F>>],
        store: &mut ParamStore<F>,
    ) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Input => {}
            Op::Param(id) => {
                let t = store.get_mut(*id);
                if t.requires_grad() {
                    t.accumulate_grad(g);
                }
            }
            Op::Gather { table, ids } => {
                let pad = store.pad_row(*table);
                let t = store.get_mut(*table);
                if t.requires_grad() {
                    let dim = t.shape()[1];
                    let acc = t.grad_mut();
                    for (i, &id) in ids.iter().enumerate() {
                        if Some(id) == pad {
                            continue;
                        }
                        for (a, &b) in acc[id * dim..(id + 1) * dim].iter_mut().zip(&g[i * dim..(i + 1) * dim]) {
                            *a = *a + b;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (n, k) = (va.shape()[0], va.shape()[1]);
                let m = vb.shape()[1];
                // dA = dC · Bᵀ
                self.acc(grads, *a, |ga| {
                    let bv = vb.values();
                    for i in 0..n {
                        let gr = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let br = &bv[p * m..(p + 1) * m];
                            let mut s = F::zero();
                            for (x, y) in gr.iter().zip(br) {
                                s = s + *x * *y;
                            }
                            ga[i * k + p] = ga[i * k + p] + s;
                        }
                    }
                });
                // dB = Aᵀ · dC
                self.acc(grads, *b, |gb| {
                    let av = va.values();
                    for i in 0..n {
                        let gr = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == F::zero() {
                                continue;
                            }
                            for (o, &y) in gb[p * m..(p + 1) * m].iter_mut().zip(gr) {
                                *o = *o + x * y;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.acc(grads, v, |ga| add_into(ga, g));
                }
            }
            Op::AddBias(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                let m = val(*b).numel();
                self.acc(grads, *b, |gb| {
                    for row in g.chunks(m) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                self.acc(grads, *a, |ga| {
                    for ((o, &gv), &y) in ga.iter_mut().zip(g).zip(vb.values()) {
                        *o = *o + gv * y;
                    }
                });
                self.acc(grads, *b, |gb| {
                    for ((o, &gv), &x) in gb.iter_mut().zip(g).zip(va.values()) {
                        *o = *o + gv * x;
                    }
                });
            }
            Op::MulConst(a, c) => {
                self.acc(grads, *a, |ga| {
                    for ((o, &gv), &y) in ga.iter_mut().zip(g).zip(c) {
                        *o = *o + gv * y;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.values();
                self.acc(grads, *a, |ga| {
                    for ((o, &gv), &s) in ga.iter_mut().zip(g).zip(y) {
                        *o = *o + gv * s * (F::one() - s);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.values();
                self.acc(grads, *a, |ga| {
                    for ((o, &gv), &t) in ga.iter_mut().zip(g).zip(y) {
                        *o = *o + gv * (F::one() - t * t);
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let rank = node.value.rank();
                if rank == 1 || *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = val(p).numel();
                        self.acc(grads, p, |gp| add_into(gp, &g[offset..offset + n]));
                        offset += n;
                    }
                } else {
                    let (rows, total) = (node.value.shape()[0], node.value.shape()[1]);
                    let mut col = 0;
                    for &p in parts {
                        let w = val(p).shape()[1];
                        self.acc(grads, p, |gp| {
                            for r in 0..rows {
                                add_into(&mut gp[r * w..(r + 1) * w], &g[r * total + col..r * total + col + w]);
                            }
                        });
                        col += w;
                    }
                }
            }
            Op::SliceCols { input, start } => {
                let m = val(*input).shape()[1];
                let (rows, len) = (node.value.shape()[0], node.value.shape()[1]);
                self.acc(grads, *input, |gi| {
                    for r in 0..rows {
                        add_into(&mut gi[r * m + start..r * m + start + len], &g[r * len..(r + 1) * len]);
                    }
                });
            }
            Op::SliceRows { input, start } => {
                let m = val(*input).shape()[1];
                let len = node.value.numel();
                self.acc(grads, *input, |gi| add_into(&mut gi[start * m..start * m + len], g));
            }
            Op::TakeRows { input, rows } => {
                let m = val(*input).shape()[1];
                self.acc(grads, *input, |gi| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut gi[r * m..(r + 1) * m], &g[i * m..(i + 1) * m]);
                    }
                });
            }
            Op::SelectRows { on, off, mask } => {
                let m = node.value.shape().last().copied().unwrap_or(1);
                for (v, want) in [(*on, true), (*off, false)] {
                    self.acc(grads, v, |gv| {
                        for (r, &keep) in mask.iter().enumerate() {
                            if keep == want {
                                add_into(&mut gv[r * m..(r + 1) * m], &g[r * m..(r + 1) * m]);
                            }
                        }
                    });
                }
            }
            Op::Reshape(a) => self.acc(grads, *a, |ga| add_into(ga, g)),
            Op::Transpose(a) => {
                let (n, m) = (val(*a).shape()[0], val(*a).shape()[1]);
                self.acc(grads, *a, |ga| {
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] = ga[i * m + j] + g[j * n + i];
                        }
                    }
                });
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
                segment,
            } => {
                let (vi, vk) = (val(*input), val(*kernel));
                let (k, c_in, c_out) = (vk.shape()[0], vk.shape()[1], vk.shape()[2]);
                let n = vi.shape()[0];
                let half = k / 2;
                let seg = *segment;
                let taps = |t: usize| {
                    (0..k).filter_map(move |j| {
                        let pos = t as isize + j as isize - half as isize;
                        (pos >= 0 && pos < seg as isize).then_some((j, pos as usize))
                    })
                };
                self.acc(grads, *bias, |gb| {
                    for row in g.chunks(c_out) {
                        add_into(gb, row);
                    }
                });
                let x = vi.values();
                self.acc(grads, *kernel, |gk| {
                    for s0 in (0..n).step_by(seg) {
                        for t in 0..seg {
                            let gr = &g[(s0 + t) * c_out..(s0 + t + 1) * c_out];
                            for (j, pos) in taps(t) {
                                let xr = &x[(s0 + pos) * c_in..(s0 + pos + 1) * c_in];
                                for (c, &xv) in xr.iter().enumerate() {
                                    if xv == F::zero() {
                                        continue;
                                    }
                                    let o = &mut gk[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                                    for (ov, &gv) in o.iter_mut().zip(gr) {
                                        *ov = *ov + xv * gv;
                                    }
                                }
                            }
                        }
                    }
                });
                let w = vk.values();
                self.acc(grads, *input, |gi| {
                    for s0 in (0..n).step_by(seg) {
                        for t in 0..seg {
                            let gr = &g[(s0 + t) * c_out..(s0 + t + 1) * c_out];
                            for (j, pos) in taps(t) {
                                for c in 0..c_in {
                                    let wr = &w[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                                    let mut s = F::zero();
                                    for (a, b) in wr.iter().zip(gr) {
                                        s = s + *a * *b;
                                    }
                                    let idx = (s0 + pos) * c_in + c;
                                    gi[idx] = gi[idx] + s;
                                }
                            }
                        }
                    }
                });
            }
            Op::SegmentMax { input, argmax } => {
                let c = node.value.shape()[1];
                self.acc(grads, *input, |gi| {
                    for (i, &src) in argmax.iter().enumerate() {
                        let ch = i % c;
                        gi[src * c + ch] = gi[src * c + ch] + g[i];
                    }
                });
            }
            Op::MaskedSoftmax { input } => {
                // Masked outputs are exactly zero, so their rows of the
                // Jacobian vanish without consulting the mask.
                let y = node.value.values();
                let t = *node.value.shape().last().unwrap_or(&1);
                self.acc(grads, *input, |gi| {
                    for r in 0..y.len() / t {
                        let (yr, gr) = (&y[r * t..(r + 1) * t], &g[r * t..(r + 1) * t]);
                        let dot = yr.iter().zip(gr).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
                        for i in 0..t {
                            gi[r * t + i] = gi[r * t + i] + yr[i] * (gr[i] - dot);
                        }
                    }
                });
            }
            Op::ScaleRows { input, scale } => {
                let (vi, vs) = (val(*input), val(*scale));
                let m = *vi.shape().last().unwrap_or(&1);
                self.acc(grads, *input, |gi| {
                    for (r, &s) in vs.values().iter().enumerate() {
                        for c in 0..m {
                            gi[r * m + c] = gi[r * m + c] + g[r * m + c] * s;
                        }
                    }
                });
                self.acc(grads, *scale, |gs| {
                    for (r, o) in gs.iter_mut().enumerate() {
                        let row = &vi.values()[r * m..(r + 1) * m];
                        let dot = row.iter().zip(&g[r * m..(r + 1) * m]).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
                        *o = *o + dot;
                    }
                });
            }
            Op::Sum(a) => {
                let g0 = g[0];
                self.acc(grads, *a, |ga| ga.iter_mut().for_each(|v| *v = *v + g0));
            }
            Op::Bce {
                probs,
                labels,
                mask,
                count,
            } => {
                let p = val(*probs).values();
                let (lo, hi) = (F::of(BCE_EPS), F::one() - F::of(BCE_EPS));
                let scale = g[0] / F::of(*count as f64);
                self.acc(grads, *probs, |gp| {
                    for i in 0..p.len() {
                        // The clamp has zero slope outside its range.
                        if mask[i] && p[i] > lo && p[i] < hi {
                            let (pi, y) = (p[i], labels[i]);
                            gp[i] = gp[i] + scale * ((pi - y) / (pi * (F::one() - pi)));
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a = *a + b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn matmul_identity_and_annihilator() {
        let mut g = Graph::<f64>::new();
        let i2 = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p).values(), &[3.0, 4.0, 5.0, 6.0]);

        let z = g.constant(Tensor::zeros([2, 3]));
        let any = g.constant(Tensor::from_fn([3, 4], |i| i as f64 - 5.5));
        let p = g.matmul(z, any).unwrap();
        assert_eq!(g.value(p).shape(), &[2, 4]);
        assert!(g.value(p).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([2, 3]));
        match g.matmul(a, b) {
            Err(Error::Shape { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}", other = other.map(|_| ())),
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", t(&[3], &[0.3, -2.0, 7.0]).with_grad()).unwrap();
        let mut g = Graph::new();
        let wv = g.param(&store, w);
        let loss = g.sum(wv);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad().unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_square_and_accumulation() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", t(&[2], &[1.0, 2.0]).with_grad()).unwrap();
        let mut g = Graph::new();
        let a = g.param(&store, w);
        let sq = g.mul(a, a).unwrap();
        let loss = g.sum(sq);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad().unwrap(), &[2.0, 4.0]);
        // A second backward adds on top until explicitly zeroed.
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad().unwrap(), &[4.0, 8.0]);
        store.zero_grad();
        assert!(store.get(w).grad().is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::<f64>::new();
        let mut g = Graph::new();
        let x = g.input(t(&[2], &[1.0, 2.0]).with_grad());
        assert!(matches!(g.backward(x, &mut store), Err(Error::Rank(_))));
    }

    #[test]
    fn masked_softmax_cases() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(t(&[4], &[0.7; 4]));
        let z = g.masked_softmax(s, &[true; 4]).unwrap();
        for &v in g.value(z).values() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let s = g.constant(t(&[3], &[5.0, -1.0, 2.0]));
        let z = g.masked_softmax(s, &[false, true, false]).unwrap();
        assert_eq!(g.value(z).values(), &[0.0, 1.0, 0.0]);
        assert!(matches!(g.masked_softmax(s, &[false; 3]), Err(Error::DegenerateMask)));
    }

    #[test]
    fn masked_softmax_matches_direct_formula() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let z = g.masked_softmax(s, &[true; 3]).unwrap();
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, &v) in g.value(z).values().iter().enumerate() {
            assert!((v - ((i + 1) as f64).exp() / denom).abs() < 1e-6);
        }
    }

    #[test]
    fn activations_at_zero_and_saturation() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_f64([3], &[0.0, 40.0, -40.0]).unwrap());
        let s = g.sigmoid(x);
        let th = g.tanh(x);
        let sv = g.value(s).values();
        assert_eq!(sv[0], 0.5);
        assert!((sv[1] - 1.0).abs() < 1e-6 && sv[2].abs() < 1e-6);
        assert!(sv.iter().all(|v| v.is_finite()));
        assert_eq!(g.value(th).values()[0], 0.0);
    }

    #[test]
    fn concat_round_trip_and_empty_others() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::from_fn([4, 2], |i| i as f64));
        let b = g.constant(Tensor::from_fn([4, 3], |i| -(i as f64)));
        assert_eq!(g.concat(&[a], 1).unwrap(), a);
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[4, 5]);
        let a2 = g.slice_cols(c, 0, 2).unwrap();
        let b2 = g.slice_cols(c, 2, 3).unwrap();
        assert_eq!(g.value(a2).values(), g.value(a).values());
        assert_eq!(g.value(b2).values(), g.value(b).values());
        let bad = g.constant(Tensor::zeros([3, 3]));
        assert!(matches!(g.concat(&[a, bad], 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn conv1d_identity_and_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn([5, 3], |i| (i as f64).sin()));
        let eye = g.constant(Tensor::from_fn([1, 3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 }));
        let b0 = g.constant(Tensor::zeros([3]));
        let y = g.conv1d(x, eye, b0, 5).unwrap();
        assert_eq!(g.value(y).values(), g.value(x).values());

        let zk = g.constant(Tensor::zeros([3, 3, 2]));
        let zb = g.constant(Tensor::zeros([2]));
        let y = g.conv1d(x, zk, zb, 5).unwrap();
        assert!(g.value(y).values().iter().all(|&v| v == 0.0));

        let even = g.constant(Tensor::zeros([2, 3, 2]));
        assert!(matches!(g.conv1d(x, even, zb, 5), Err(Error::Config(_))));
    }

    #[test]
    fn bce_half_is_ln2() {
        let mut g = Graph::<f64>::new();
        let p = g.constant(t(&[4], &[0.5; 4]));
        let l = g.bce(p, &[1.0, 0.0, 1.0, 0.0], &[true; 4]).unwrap();
        assert!((g.value(l).values()[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(g.bce(p, &[0.0; 4], &[false; 4]), Err(Error::DegenerateMask)));
    }

    #[test]
    fn gather_skips_pad_and_frozen_tables() {
        let mut store = ParamStore::<f64>::new();
        let table = Tensor::from_fn([3, 2], |i| if i < 2 { 0.0 } else { i as f64 }).with_grad();
        let id = store.add_with_pad("emb", table, Some(0)).unwrap();
        let mut g = Graph::new();
        let e = g.gather(&store, id, &[0, 2, 2]).unwrap();
        assert_eq!(g.value(e).row(0), &[0.0, 0.0]);
        let loss = g.sum(e);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(id).grad().unwrap(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(matches!(g.gather(&store, id, &[3]), Err(Error::OutOfRange { .. })));
    }
}
