//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive applied during one forward pass
//! together with the values needed by its backward rule. [`Graph::backward`]
//! walks the record once in reverse and accumulates parameter gradients into
//! the [`ParamStore`] the parameters came from.

use std::sync::Arc;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Index of a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv1d {
        seq: Var,
        kernels: Var,
        bias: Var,
    },
    Relu(Var),
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Concat(Vec<Var>),
    Reshape(Var),
    Embedding {
        table: ParamId,
        ids: Vec<usize>,
        padding: Option<usize>,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    MatMulNt {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    MaskedSoftmaxRows(Var),
    SliceCols {
        input: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    MaxPool {
        input: Var,
        argmax: Vec<Option<usize>>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
}

/// Record of one forward computation.
#[derive(Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.push_shared(Arc::new(value), op)
    }

    fn push_shared(&mut self, value: Arc<Tensor<T>>, op: Op<T>) -> Var {
        debug_assert!(value.is_finite() || !matches!(op, Op::Param(_)));
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        let id = store.require(name)?;
        Ok(self.param_id(store, id))
    }

    pub fn param_id(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push_shared(store.shared_value(id), Op::Param(id))
    }

    /// `y[i] = Σ_j w[i][j]·x[j] + b[i]` with `w` of shape `[out, in]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let Some((out, inp)) = wv.dims2() else {
            return Err(Error::dim(
                "dense",
                format!("weight must be rank 2, got {:?}", wv.shape()),
            ));
        };
        if xv.rank() != 1 || xv.len() != inp {
            return Err(Error::dim(
                "dense",
                format!("input x has shape {:?}, weight expects [{inp}]", xv.shape()),
            ));
        }
        if bv.rank() != 1 || bv.len() != out {
            return Err(Error::dim(
                "dense",
                format!("bias b has shape {:?}, weight expects [{out}]", bv.shape()),
            ));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let y = (0..out)
            .map(|i| dot(&wd[i * inp..(i + 1) * inp], xd) + bd[i])
            .collect();
        Ok(self.push(Tensor::vector(y), Op::Dense { x, w, b }))
    }

    /// Valid 1-d convolution over positions: `seq [L, d]`, `kernels [F, w, d]`,
    /// `bias [F]` → `[L - w + 1, F]`.
    pub fn conv1d(&mut self, seq: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (sv, kv, bv) = (self.value(seq), self.value(kernels), self.value(bias));
        let Some((len, d)) = sv.dims2() else {
            return Err(Error::dim(
                "conv1d",
                format!("sequence must be rank 2, got {:?}", sv.shape()),
            ));
        };
        let [filters, width, kd] = kv.shape()[..] else {
            return Err(Error::dim(
                "conv1d",
                format!("kernels must be rank 3, got {:?}", kv.shape()),
            ));
        };
        if kd != d {
            return Err(Error::dim(
                "conv1d",
                format!("kernels have depth {kd}, sequence has {d} channels"),
            ));
        }
        if bv.rank() != 1 || bv.len() != filters {
            return Err(Error::dim(
                "conv1d",
                format!("bias has shape {:?}, expected [{filters}]", bv.shape()),
            ));
        }
        if len < width {
            return Err(Error::InputTooShort {
                op: "conv1d",
                len,
                window: width,
            });
        }
        let positions = len - width + 1;
        let span = width * d;
        let (sd, kd, bd) = (sv.data(), kv.data(), bv.data());
        let mut out = Vec::with_capacity(positions * filters);
        for p in 0..positions {
            let window = &sd[p * d..p * d + span];
            for f in 0..filters {
                out.push(dot(&kd[f * span..(f + 1) * span], window) + bd[f]);
            }
        }
        let value = Tensor::matrix(positions, filters, out)?;
        Ok(self.push(value, Op::Conv1d { seq, kernels, bias }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(T::zero())).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu(x))
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let v = self.value(x);
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..v.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        Ok(self.push(value, Op::Dropout { input: x, mask }))
    }

    /// Flattening concatenation into a vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat"));
        }
        let data: Vec<T> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Row lookup `table[ids[p]]` → `[L, d]`. The `padding` row, if any, never
    /// receives gradient.
    pub fn embedding(
        &mut self,
        store: &ParamStore<T>,
        table: ParamId,
        ids: &[usize],
        padding: Option<usize>,
    ) -> Result<Var> {
        let tv = store.value(table);
        let Some((rows, d)) = tv.dims2() else {
            return Err(Error::dim(
                "embedding",
                format!("table must be rank 2, got {:?}", tv.shape()),
            ));
        };
        if ids.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Vocabulary { id, size: rows });
            }
            data.extend_from_slice(tv.row(id));
        }
        let value = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                padding,
            },
        ))
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (Some((m, k)), Some((k2, n))) = (av.dims2(), bv.dims2()) else {
            return Err(Error::dim("matmul", "operands must be rank 2"));
        };
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("left is [{m}, {k}], right is [{k2}, {n}]"),
            ));
        }
        let data = matmul_raw(av.data(), bv.data(), m, k, n);
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::MatMul { a, b }))
    }

    /// `[m, k] × [n, k]ᵀ → [m, n]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (Some((m, k)), Some((n, k2))) = (av.dims2(), bv.dims2()) else {
            return Err(Error::dim("matmul_nt", "operands must be rank 2"));
        };
        if k != k2 {
            return Err(Error::dim(
                "matmul_nt",
                format!("left is [{m}, {k}], right is [{n}, {k2}]"),
            ));
        }
        let (ad, bd) = (av.data(), bv.data());
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(dot(&ad[i * k..(i + 1) * k], &bd[j * k..(j + 1) * k]));
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::MatMulNt { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a * factor).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale { input: x, factor })
    }

    /// Row-wise softmax of `[m, n]` over the columns whose `key_mask` entry is
    /// true. Masked columns get weight exactly zero; a row with no unmasked
    /// column is all zeros.
    pub fn masked_softmax_rows(&mut self, x: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        let v = self.value(x);
        let Some((m, n)) = v.dims2() else {
            return Err(Error::dim("softmax_rows", "input must be rank 2"));
        };
        if let Some(mask) = key_mask {
            if mask.len() != n {
                return Err(Error::dim(
                    "softmax_rows",
                    format!("mask has {} entries for {n} columns", mask.len()),
                ));
            }
        }
        let keep = |j: usize| key_mask.is_none_or(|mask| mask[j]);
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let row = v.row(i);
            let out = &mut data[i * n..(i + 1) * n];
            let Some(max) = (0..n).filter(|&j| keep(j)).map(|j| row[j]).reduce(T::max) else {
                continue;
            };
            let mut sum = T::zero();
            for j in (0..n).filter(|&j| keep(j)) {
                let e = (row[j] - max).exp();
                out[j] = e;
                sum = sum + e;
            }
            for j in (0..n).filter(|&j| keep(j)) {
                out[j] = out[j] / sum;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::MaskedSoftmaxRows(x)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let v = self.value(x);
        let Some((m, n)) = v.dims2() else {
            return Err(Error::dim("slice_cols", "input must be rank 2"));
        };
        if width == 0 || start + width > n {
            return Err(Error::dim(
                "slice_cols",
                format!("columns {start}..{} of a {n}-column input", start + width),
            ));
        }
        let data = (0..m)
            .flat_map(|i| v.row(i)[start..start + width].iter().copied())
            .collect();
        let value = Tensor::matrix(m, width, data)?;
        Ok(self.push(value, Op::SliceCols { input: x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::EmptyInput("concat_cols"));
        };
        let m = self.value(first).dims2().map(|(r, _)| r);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.value(p).dims2() {
                Some((r, c)) if Some(r) == m => widths.push(c),
                _ => {
                    return Err(Error::dim(
                        "concat_cols",
                        format!(
                            "operand shape {:?} does not match row count {m:?}",
                            self.value(p).shape()
                        ),
                    ))
                }
            }
        }
        let m = m.unwrap_or(0);
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Column-wise maximum over the rows of `[L, d]` whose `row_mask` entry is
    /// true. Ties resolve to the first maximal row. With every row masked the
    /// result is the zero vector.
    pub fn global_max_pool(&mut self, x: Var, row_mask: Option<&[bool]>) -> Result<Var> {
        let v = self.value(x);
        let (len, d) = match v.dims2() {
            Some(dims) => dims,
            None => return Err(Error::dim("global_max_pool", "input must be rank 2")),
        };
        if len == 0 {
            return Err(Error::EmptyInput("global_max_pool"));
        }
        if let Some(mask) = row_mask {
            if mask.len() != len {
                return Err(Error::dim(
                    "global_max_pool",
                    format!("mask has {} entries for {len} rows", mask.len()),
                ));
            }
        }
        let keep = |p: usize| row_mask.is_none_or(|mask| mask[p]);
        let mut argmax = vec![None; d];
        let mut out = vec![T::zero(); d];
        for (j, (slot, best)) in argmax.iter_mut().zip(out.iter_mut()).enumerate() {
            for p in (0..len).filter(|&p| keep(p)) {
                let x = v.data()[p * d + j];
                if slot.is_none() || x > *best {
                    *slot = Some(p);
                    *best = x;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MaxPool { input: x, argmax }))
    }

    /// `-log softmax(logits)[label]`, stabilised by max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let v = self.value(logits);
        if v.rank() != 1 || v.is_empty() {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("logits shape {:?}", v.shape()),
            ));
        }
        if label >= v.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: v.len(),
            });
        }
        let probs = softmax(v.data());
        let max = v.data().iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum: T = v.data().iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
        let loss = log_sum - v.data()[label];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
        ))
    }

    /// Accumulates `∂loss/∂p` into the gradient of every parameter `p` used in
    /// the record. Calling twice without zeroing doubles the gradients.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::State(
                "backward called without a recorded forward pass".into(),
            ));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(format!(
                "loss node {} is not in this record",
                loss.0
            )));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::State(format!(
                "loss must be a single value, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.check_store(store)?;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut acc = Accumulator {
            nodes: &self.nodes,
            grads: &mut grads[..],
            store,
        };

        for i in (0..=loss.0).rev() {
            let Some(g) = acc.grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Dense { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let inp = xv.len();
                    if let Some(dx) = acc.slot(*x) {
                        for (i, &gi) in g.iter().enumerate() {
                            axpy(dx, gi, &wv.data()[i * inp..(i + 1) * inp]);
                        }
                    }
                    if let Some(dw) = acc.slot(*w) {
                        for (i, &gi) in g.iter().enumerate() {
                            axpy(&mut dw[i * inp..(i + 1) * inp], gi, xv.data());
                        }
                    }
                    if let Some(db) = acc.slot(*b) {
                        axpy(db, T::one(), &g);
                    }
                }
                Op::Conv1d { seq, kernels, bias } => {
                    let (sv, kv) = (self.value(*seq), self.value(*kernels));
                    let (_, d) = sv.dims2().expect("checked in forward");
                    let (filters, width) = (kv.shape()[0], kv.shape()[1]);
                    let span = width * d;
                    let positions = g.len() / filters;
                    if let Some(ds) = acc.slot(*seq) {
                        for p in 0..positions {
                            let window = &mut ds[p * d..p * d + span];
                            for f in 0..filters {
                                axpy(
                                    window,
                                    g[p * filters + f],
                                    &kv.data()[f * span..(f + 1) * span],
                                );
                            }
                        }
                    }
                    if let Some(dk) = acc.slot(*kernels) {
                        for p in 0..positions {
                            let window = &sv.data()[p * d..p * d + span];
                            for f in 0..filters {
                                axpy(
                                    &mut dk[f * span..(f + 1) * span],
                                    g[p * filters + f],
                                    window,
                                );
                            }
                        }
                    }
                    if let Some(db) = acc.slot(*bias) {
                        for p in 0..positions {
                            axpy(db, T::one(), &g[p * filters..(p + 1) * filters]);
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    if let Some(dx) = acc.slot(*x) {
                        for ((d, &gi), &a) in dx.iter_mut().zip(&g).zip(xv.data()) {
                            if a > T::zero() {
                                *d = *d + gi;
                            }
                        }
                    }
                }
                Op::Dropout { input, mask } => {
                    if let Some(dx) = acc.slot(*input) {
                        for ((d, &gi), &m) in dx.iter_mut().zip(&g).zip(mask) {
                            *d = *d + gi * m;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        if let Some(dp) = acc.slot(p) {
                            axpy(dp, T::one(), &g[offset..offset + n]);
                        }
                        offset += n;
                    }
                }
                Op::Reshape(x) => {
                    if let Some(dx) = acc.slot(*x) {
                        axpy(dx, T::one(), &g);
                    }
                }
                Op::Embedding {
                    table,
                    ids,
                    padding,
                } => {
                    let d = node.value.shape()[1];
                    let dt = acc.store.grad_mut(*table).data_mut();
                    for (p, &id) in ids.iter().enumerate() {
                        if Some(id) == *padding {
                            continue;
                        }
                        axpy(
                            &mut dt[id * d..(id + 1) * d],
                            T::one(),
                            &g[p * d..(p + 1) * d],
                        );
                    }
                }
                Op::MatMul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ((m, k), (_, n)) = (av.dims2().unwrap(), bv.dims2().unwrap());
                    if let Some(da) = acc.slot(*a) {
                        // da[i][t] += Σ_j g[i][j] b[t][j]
                        for i in 0..m {
                            for t in 0..k {
                                da[i * k + t] = da[i * k + t]
                                    + dot(&g[i * n..(i + 1) * n], &bv.data()[t * n..(t + 1) * n]);
                            }
                        }
                    }
                    if let Some(db) = acc.slot(*b) {
                        // db[t][j] += Σ_i a[i][t] g[i][j]
                        for i in 0..m {
                            for t in 0..k {
                                axpy(
                                    &mut db[t * n..(t + 1) * n],
                                    av.data()[i * k + t],
                                    &g[i * n..(i + 1) * n],
                                );
                            }
                        }
                    }
                }
                Op::MatMulNt { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ((m, k), (n, _)) = (av.dims2().unwrap(), bv.dims2().unwrap());
                    if let Some(da) = acc.slot(*a) {
                        for i in 0..m {
                            for j in 0..n {
                                axpy(
                                    &mut da[i * k..(i + 1) * k],
                                    g[i * n + j],
                                    &bv.data()[j * k..(j + 1) * k],
                                );
                            }
                        }
                    }
                    if let Some(db) = acc.slot(*b) {
                        for i in 0..m {
                            for j in 0..n {
                                axpy(
                                    &mut db[j * k..(j + 1) * k],
                                    g[i * n + j],
                                    &av.data()[i * k..(i + 1) * k],
                                );
                            }
                        }
                    }
                }
                Op::Scale { input, factor } => {
                    if let Some(dx) = acc.slot(*input) {
                        axpy(dx, *factor, &g);
                    }
                }
                Op::MaskedSoftmaxRows(x) => {
                    let (m, n) = node.value.dims2().unwrap();
                    if let Some(dx) = acc.slot(*x) {
                        for i in 0..m {
                            let a = node.value.row(i);
                            let gi = &g[i * n..(i + 1) * n];
                            let inner = dot(a, gi);
                            for j in 0..n {
                                dx[i * n + j] = dx[i * n + j] + a[j] * (gi[j] - inner);
                            }
                        }
                    }
                }
                Op::SliceCols { input, start } => {
                    let (m, width) = node.value.dims2().unwrap();
                    let n = self.value(*input).dims2().unwrap().1;
                    if let Some(dx) = acc.slot(*input) {
                        for i in 0..m {
                            axpy(
                                &mut dx[i * n + start..i * n + start + width],
                                T::one(),
                                &g[i * width..(i + 1) * width],
                            );
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let (m, total) = node.value.dims2().unwrap();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).dims2().unwrap().1;
                        if let Some(dp) = acc.slot(p) {
                            for i in 0..m {
                                axpy(
                                    &mut dp[i * w..(i + 1) * w],
                                    T::one(),
                                    &g[i * total + offset..i * total + offset + w],
                                );
                            }
                        }
                        offset += w;
                    }
                }
                Op::MaxPool { input, argmax } => {
                    let d = argmax.len();
                    if let Some(dx) = acc.slot(*input) {
                        for (j, row) in argmax.iter().enumerate() {
                            if let Some(p) = row {
                                dx[p * d + j] = dx[p * d + j] + g[j];
                            }
                        }
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    label,
                    probs,
                } => {
                    if let Some(dz) = acc.slot(*logits) {
                        for (k, (d, &p)) in dz.iter_mut().zip(probs).enumerate() {
                            let target = if k == *label { T::one() } else { T::zero() };
                            *d = *d + g[0] * (p - target);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_store(&self, store: &ParamStore<T>) -> Result<()> {
        for node in &self.nodes {
            let id = match &node.op {
                Op::Param(id) | Op::Embedding { table: id, .. } => *id,
                _ => continue,
            };
            if id.0 >= store.len() {
                return Err(Error::State(
                    "record references a parameter missing from the store".into(),
                ));
            }
            let expected = match node.op {
                Op::Param(_) => node.value.shape(),
                _ => continue,
            };
            if store.value(id).shape() != expected {
                return Err(Error::State(format!(
                    "parameter `{}` changed shape since the forward pass",
                    store.name(id)
                )));
            }
        }
        Ok(())
    }
}

struct Accumulator<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    store: &'a mut ParamStore<T>,
}

impl<T: Scalar> Accumulator<'_, T> {
    /// Gradient buffer for `v`: the store's gradient for parameters, a lazily
    /// zeroed node buffer for intermediates, nothing for constants.
    fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Input => None,
            Op::Param(id) => Some(self.store.grad_mut(id).data_mut()),
            _ => Some(
                self.grads[v.0]
                    .get_or_insert_with(|| vec![T::zero(); node.value.len()])
                    .as_mut_slice(),
            ),
        }
    }
}

/// Probability vector of `logits`, computed with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn axpy<T: Scalar>(dst: &mut [T], alpha: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + alpha * s;
    }
}

fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for t in 0..k {
            axpy(row, a[i * k + t], &b[t * n..(t + 1) * n]);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(entries: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (n, t) in entries {
            s.insert(*n, t.clone()).unwrap();
        }
        s
    }

    #[test]
    fn dense_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let w = g.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.input(Tensor::vector(vec![0.0, 0.0]));
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);

        let w2 = g.input(Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap());
        let b2 = g.input(Tensor::vector(vec![1.0, 0.0]));
        let y2 = g.dense(x, w2, b2).unwrap();
        assert_eq!(g.value(y2).data(), &[4.0, 2.0]);

        let zero = g.input(Tensor::vector(vec![0.0, 0.0]));
        let b3 = g.input(Tensor::vector(vec![3.0, -1.0]));
        let y3 = g.dense(zero, w2, b3).unwrap();
        assert_eq!(g.value(y3).data(), &[3.0, -1.0]);
    }

    #[test]
    fn dense_names_offending_operand() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let w = g.input(Tensor::zeros(&[2, 2]));
        let b = g.input(Tensor::zeros(&[2]));
        let err = g.dense(x, w, b).unwrap_err().to_string();
        assert!(err.contains("input x"), "{err}");
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let b = g.input(Tensor::zeros(&[3]));
        let err = g.dense(x, w, b).unwrap_err().to_string();
        assert!(err.contains("bias b"), "{err}");
    }

    #[test]
    fn conv1d_examples() {
        let mut g = Graph::<f64>::new();
        // identity kernels (w = 1, F = d)
        let seq_data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let seq = g.input(Tensor::matrix(3, 2, seq_data.clone()).unwrap());
        let k = g.input(Tensor::new(vec![2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.input(Tensor::zeros(&[2]));
        let y = g.conv1d(seq, k, b).unwrap();
        assert_eq!(g.value(y).data(), &seq_data[..]);

        let ones = g.input(Tensor::matrix(4, 2, vec![1.0; 8]).unwrap());
        let k = g.input(Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap());
        let b = g.input(Tensor::zeros(&[1]));
        let y = g.conv1d(ones, k, b).unwrap();
        assert_eq!(g.value(y).shape(), &[3, 1]);
        assert_eq!(g.value(y).data(), &[4.0, 4.0, 4.0]);

        let k = g.input(Tensor::zeros(&[1, 3, 2]));
        let b = g.input(Tensor::vector(vec![2.5]));
        let y = g.conv1d(ones, k, b).unwrap();
        assert_eq!(g.value(y).data(), &[2.5, 2.5]);

        let short = g.input(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        assert!(matches!(
            g.conv1d(short, k, b),
            Err(Error::InputTooShort {
                len: 2,
                window: 3,
                ..
            })
        ));
    }

    #[test]
    fn max_pool_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::matrix(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap());
        let y = g.global_max_pool(x, None).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);
        let swapped = g.input(Tensor::matrix(2, 2, vec![3.0, 2.0, 1.0, 5.0]).unwrap());
        let y2 = g.global_max_pool(swapped, None).unwrap();
        assert_eq!(g.value(y2).data(), &[3.0, 5.0]);
        let single = g.input(Tensor::matrix(1, 3, vec![-1.0, 0.5, 2.0]).unwrap());
        let y3 = g.global_max_pool(single, None).unwrap();
        assert_eq!(g.value(y3).data(), &[-1.0, 0.5, 2.0]);
        let masked = g.global_max_pool(x, Some(&[false, false])).unwrap();
        assert_eq!(g.value(masked).data(), &[0.0, 0.0]);
    }

    #[test]
    fn max_pool_ties_route_to_first_row() {
        let mut s = store_with(&[("x", Tensor::matrix(3, 1, vec![2.0, 2.0, 1.0]).unwrap())]);
        let mut g = Graph::new();
        let x = g.param(&s, "x").unwrap();
        let p = g.global_max_pool(x, None).unwrap();
        let loss = g.reshape(p, vec![1]).unwrap();
        g.backward(loss, &mut s).unwrap();
        assert_eq!(s.grad(s.id("x").unwrap()).data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::<f64>::new();
        let z = g.input(Tensor::vector(vec![0.0; 4]));
        for label in 0..4 {
            let l = g.softmax_cross_entropy(z, label).unwrap();
            assert!((g.value(l).data()[0] - 4f64.ln()).abs() < 1e-12);
        }
        let z = g.input(Tensor::vector(vec![10.0, 0.0]));
        let l = g.softmax_cross_entropy(z, 0).unwrap();
        let expected = (1.0 + (-10f64).exp()).ln();
        assert!((g.value(l).data()[0] - expected).abs() < 1e-15);
        assert!((expected - 4.54e-5).abs() < 1e-7);
        let z = g.input(Tensor::vector(vec![123.0; 7]));
        let l = g.softmax_cross_entropy(z, 3).unwrap();
        assert!((g.value(l).data()[0] - 7f64.ln()).abs() < 1e-12);
        assert!(matches!(
            g.softmax_cross_entropy(z, 7),
            Err(Error::LabelOutOfRange {
                label: 7,
                classes: 7
            })
        ));
    }

    #[test]
    fn linear_gradient_and_accumulation() {
        let mut s = store_with(&[
            ("w", Tensor::matrix(1, 1, vec![0.7]).unwrap()),
            ("b", Tensor::vector(vec![0.0])),
        ]);
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![3.0]));
        let w = g.param(&s, "w").unwrap();
        let b = g.param(&s, "b").unwrap();
        let y = g.dense(x, w, b).unwrap();
        g.backward(y, &mut s).unwrap();
        let wid = s.id("w").unwrap();
        assert_eq!(s.grad(wid).data(), &[3.0]);
        g.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(wid).data(), &[6.0]);
        assert_eq!(s.grad(s.id("b").unwrap()).data(), &[2.0]);
    }

    #[test]
    fn backward_requires_forward() {
        let mut s = ParamStore::<f32>::new();
        let g = Graph::<f32>::new();
        let mut other = Graph::<f32>::new();
        let v = other.input(Tensor::scalar(1.0));
        assert!(matches!(g.backward(v, &mut s), Err(Error::State(_))));
    }

    #[test]
    fn backward_rejects_reshaped_store() {
        let mut s = store_with(&[("w", Tensor::vector(vec![1.0, 2.0]))]);
        let mut g = Graph::new();
        let w = g.param(&s, "w").unwrap();
        let x = g.input(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let b = g.input(Tensor::vector(vec![0.0]));
        let y = g.dense(w, x, b).unwrap();
        s.replace("w", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(g.backward(y, &mut s), Err(Error::State(_))));
    }

    #[test]
    fn masked_softmax_zeroes_masked_columns() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 9.0]).unwrap());
        let a = g
            .masked_softmax_rows(x, Some(&[true, true, false]))
            .unwrap();
        let v = g.value(a);
        assert_eq!(v.row(0)[2], 0.0);
        assert_eq!(v.row(1), &[0.5, 0.5, 0.0]);
        assert!((v.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let none = g.masked_softmax_rows(x, Some(&[false; 3])).unwrap();
        assert!(g.value(none).data().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn embedding_checks_ids_and_skips_padding() {
        let mut s = store_with(&[(
            "e",
            Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
        )]);
        let table = s.id("e").unwrap();
        let mut g = Graph::new();
        assert!(matches!(
            g.embedding(&s, table, &[0, 3], Some(0)),
            Err(Error::Vocabulary { id: 3, size: 3 })
        ));
        let e = g.embedding(&s, table, &[2, 0, 2], Some(0)).unwrap();
        assert_eq!(g.value(e).data(), &[3.0, 4.0, 0.0, 0.0, 3.0, 4.0]);
        let flat = g.reshape(e, vec![6]).unwrap();
        let w = g.input(Tensor::matrix(1, 6, vec![1.0; 6]).unwrap());
        let b = g.input(Tensor::vector(vec![0.0]));
        let y = g.dense(flat, w, b).unwrap();
        g.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(table).data(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
    }
}
