//! Parameterized layers built on [`Graph`] plus the Adam optimizer.
//!
//! Sequence tensors use a time-major row layout: a batch of `B` sequences
//! padded to `T` steps is a `[T·B × D]` matrix whose row `t·B + b` holds step
//! `t` of sequence `b`. Masks use the batch-major layout of
//! [`crate::corpus::Batch`]: entry `b·T + t`.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Activation, Graph, ParamId, ParamStore, Var};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Embedding matrix with a reserved all-zero padding row.
#[derive(Clone, Debug)]
pub struct EmbeddingTable<F = f32> {
    pub table: Tensor<F>,
    pub trainable: bool,
    pub pad_id: usize,
}

impl<F: Scalar> EmbeddingTable<F> {
    /// Uniform(−limit, limit) rows with a zero padding row.
    pub fn uniform(rows: usize, dim: usize, limit: f64, pad_id: usize, trainable: bool, rng: &mut Rng) -> Self {
        let mut table = uniform_tensor([rows, dim], limit, rng);
        table.values_mut()[pad_id * dim..(pad_id + 1) * dim]
            .iter_mut()
            .for_each(|v| *v = F::zero());
        EmbeddingTable {
            table,
            trainable,
            pad_id,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    /// Moves the table into `store`.
    pub fn register(self, store: &mut ParamStore<F>, name: &str) -> Result<ParamId> {
        let mut table = self.table;
        table.set_requires_grad(self.trainable);
        store.add_with_pad(name, table, Some(self.pad_id))
    }
}

pub fn uniform_tensor<F: Scalar>(shape: impl Into<Vec<usize>>, limit: f64, rng: &mut Rng) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::of(rng.gen_range(-limit..=limit)))
}

pub fn glorot_uniform<F: Scalar>(shape: impl Into<Vec<usize>>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_tensor(shape, limit, rng)
}

/// Row lookup; unknown words must already be mapped to `<UNK>`.
pub fn embed<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, table: ParamId, ids: &[usize]) -> Result<Var> {
    g.gather(store, table, ids)
}

/// Inverted dropout. Identity when not training or when `rate == 0`.
pub fn dropout<F: Scalar>(g: &mut Graph<F>, x: Var, rate: f64, training: bool, rng: &mut Rng) -> Result<Var> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let mask = dropout_mask(g.value(x).numel(), rate, rng);
    g.mul_const(x, mask)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Keep-mask already scaled by `1 / (1 − rate)`.
pub fn dropout_mask<F: Scalar>(n: usize, rate: f64, rng: &mut Rng) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
        .collect()
}

/// Fused-gate LSTM weights. Gate column blocks are ordered
/// (input, forget, cell, output).
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub input_kernel: ParamId,
    pub recurrent_kernel: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let wx = glorot_uniform([input_dim, 4 * hidden], input_dim, 4 * hidden, rng).with_grad();
        let wh = glorot_uniform([hidden, 4 * hidden], hidden, 4 * hidden, rng).with_grad();
        let mut bias = Tensor::<F>::zeros([4 * hidden]);
        bias.values_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = F::one());
        Ok(LstmParams {
            input_kernel: store.add(format!("{prefix}.input_kernel"), wx)?,
            recurrent_kernel: store.add(format!("{prefix}.recurrent_kernel"), wh)?,
            bias: store.add(format!("{prefix}.bias"), bias.with_grad())?,
            hidden,
        })
    }

    pub fn from_store<F: Scalar>(store: &ParamStore<F>, prefix: &str) -> Result<Self> {
        let find = |suffix: &str| {
            store
                .find(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| Error::Integrity(format!("missing parameter {prefix}.{suffix}")))
        };
        let recurrent_kernel = find("recurrent_kernel")?;
        let hidden = store.get(recurrent_kernel).shape()[0];
        Ok(LstmParams {
            input_kernel: find("input_kernel")?,
            recurrent_kernel,
            bias: find("bias")?,
            hidden,
        })
    }
}

/// Batch-major mask slice for one time step.
fn step_mask(mask: &[bool], batch: usize, steps: usize, t: usize) -> Vec<bool> {
    (0..batch).map(|b| mask[b * steps + t]).collect()
}

/// Runs one LSTM direction over a time-major batch.
///
/// Returns one `[B×H]` output per time step in natural order. On masked
/// steps a sequence keeps its previous state and emits zeros.
/// `recurrent_mask` (`B×H`, pre-scaled) is applied to the hidden state fed
/// back at every step.
#[allow(clippy::too_many_arguments)]
pub fn lstm_sequence<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    inputs: Var,
    batch: usize,
    mask: &[bool],
    params: &LstmParams,
    reverse: bool,
    recurrent_mask: Option<&[F]>,
) -> Result<Vec<Var>> {
    let rows = g.shape(inputs)[0];
    if batch == 0 || !rows.is_multiple_of(batch) {
        return Err(Error::shape("lstm", g.shape(inputs), &[batch]));
    }
    let steps = rows / batch;
    if mask.len() != batch * steps {
        return Err(Error::shape("lstm mask", &[batch, steps], &[mask.len()]));
    }
    let h_dim = params.hidden;
    let wx = g.param(store, params.input_kernel);
    let wh = g.param(store, params.recurrent_kernel);
    let bias = g.param(store, params.bias);
    let xw = g.matmul(inputs, wx)?;
    let xw = g.add_bias(xw, bias)?;

    let zeros = g.constant(Tensor::zeros([batch, h_dim]));
    let (mut h, mut c) = (zeros, zeros);
    let mut outputs = vec![zeros; steps];
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let active = step_mask(mask, batch, steps, t);
        if !active.iter().any(|&a| a) {
            continue;
        }
        let x_t = g.slice_rows(xw, t * batch, batch)?;
        let h_in = match recurrent_mask {
            Some(m) => g.mul_const(h, m.to_vec())?,
            None => h,
        };
        let hu = g.matmul(h_in, wh)?;
        let z = g.add(x_t, hu)?;
        let zi = g.slice_cols(z, 0, h_dim)?;
        let zf = g.slice_cols(z, h_dim, h_dim)?;
        let zc = g.slice_cols(z, 2 * h_dim, h_dim)?;
        let zo = g.slice_cols(z, 3 * h_dim, h_dim)?;
        let (i, f, cand, o) = (g.sigmoid(zi), g.sigmoid(zf), g.tanh(zc), g.sigmoid(zo));
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let c_act = g.tanh(c_new);
        let h_new = g.mul(o, c_act)?;
        if active.iter().all(|&a| a) {
            c = c_new;
            h = h_new;
            outputs[t] = h_new;
        } else {
            c = g.select_rows(c_new, c, &active)?;
            h = g.select_rows(h_new, h, &active)?;
            outputs[t] = g.select_rows(h_new, zeros, &active)?;
        }
    }
    Ok(outputs)
}

/// Final hidden state of a forward LSTM pass (the state after each
/// sequence's last unmasked step).
pub fn lstm_final_state<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    inputs: Var,
    batch: usize,
    mask: &[bool],
    params: &LstmParams,
) -> Result<Var> {
    let outputs = lstm_sequence(g, store, inputs, batch, mask, params, false, None)?;
    let steps = outputs.len();
    let stacked = g.concat(&outputs, 0)?; // [T·B × H], time-major
    // Row holding each sequence's last real step.
    let rows: Vec<usize> = (0..batch)
        .map(|b| {
            let last = (0..steps).rev().find(|&t| mask[b * steps + t]).unwrap_or(0);
            last * batch + b
        })
        .collect();
    g.take_rows(stacked, &rows)
}

/// Bidirectional LSTM: `[T·B × D] -> [T·B × 2H]`, forward half first.
#[allow(clippy::too_many_arguments)]
pub fn bilstm<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    inputs: Var,
    batch: usize,
    mask: &[bool],
    fwd: &LstmParams,
    bwd: &LstmParams,
    recurrent_masks: Option<(&[F], &[F])>,
) -> Result<Var> {
    let f_out = lstm_sequence(g, store, inputs, batch, mask, fwd, false, recurrent_masks.map(|m| m.0))?;
    let b_out = lstm_sequence(g, store, inputs, batch, mask, bwd, true, recurrent_masks.map(|m| m.1))?;
    let f_all = g.concat(&f_out, 0)?;
    let b_all = g.concat(&b_out, 0)?;
    g.concat(&[f_all, b_all], 1)
}

/// 1-D character convolution followed by a max over positions.
///
/// `char_embs` holds one `word_len`-row block per word; the result is
/// `[words × filters]`.
pub fn char_cnn_encode<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    char_embs: Var,
    word_len: usize,
    conv: &ConvParams,
) -> Result<Var> {
    let rows = g.shape(char_embs)[0];
    if rows == 0 || word_len == 0 {
        return Err(Error::DegenerateInput("empty character sequence".into()));
    }
    let kernel = g.param(store, conv.kernel);
    let bias = g.param(store, conv.bias);
    let y = g.conv1d(char_embs, kernel, bias, word_len)?;
    g.segment_max(y, word_len)
}

#[derive(Clone, Copy, Debug)]
pub struct ConvParams {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
}

impl ConvParams {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        width: usize,
        in_channels: usize,
        filters: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if width.is_multiple_of(2) {
            return Err(Error::Config(format!("convolution width must be odd, got {width}")));
        }
        let kernel = glorot_uniform([width, in_channels, filters], width * in_channels, width * filters, rng);
        Ok(ConvParams {
            kernel: store.add(format!("{name}.kernel"), kernel.with_grad())?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros([filters]).with_grad())?,
            width,
        })
    }

    pub fn from_store<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        let kernel = store
            .find(&format!("{name}.kernel"))
            .ok_or_else(|| Error::Integrity(format!("missing parameter {name}.kernel")))?;
        let bias = store
            .find(&format!("{name}.bias"))
            .ok_or_else(|| Error::Integrity(format!("missing parameter {name}.bias")))?;
        Ok(ConvParams {
            kernel,
            bias,
            width: store.get(kernel).shape()[0],
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenseParams {
    pub weights: ParamId,
    pub bias: ParamId,
}

impl DenseParams {
    pub fn init<F: Scalar>(store: &mut ParamStore<F>, name: &str, inputs: usize, units: usize, rng: &mut Rng) -> Result<Self> {
        let w = glorot_uniform([inputs, units], inputs, units, rng);
        Ok(DenseParams {
            weights: store.add(format!("{name}.weights"), w.with_grad())?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros([units]).with_grad())?,
        })
    }

    pub fn from_store<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .find(&format!("{name}.{s}"))
                .ok_or_else(|| Error::Integrity(format!("missing parameter {name}.{s}")))
        };
        Ok(DenseParams {
            weights: get("weights")?,
            bias: get("bias")?,
        })
    }
}

/// The same affine map and activation applied to every row.
pub fn time_distributed_dense<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    h: Var,
    dense: &DenseParams,
    activation: Activation,
) -> Result<Var> {
    let w = g.param(store, dense.weights);
    let b = g.param(store, dense.bias);
    let z = g.matmul(h, w)?;
    let z = g.add_bias(z, b)?;
    Ok(g.activate(z, activation))
}

/// How attention weights are recombined with the sequence they score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AttentionMode {
    /// `h_t · Z_t` at every step.
    #[default]
    Scale,
    /// `h_t ⊕ Σ_s Z_s h_s`: each step keeps its own features and sees the
    /// sentence context vector.
    ConcatContext,
}

impl AttentionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttentionMode::Scale => "scale",
            AttentionMode::ConcatContext => "concat_context",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "scale" => Ok(AttentionMode::Scale),
            "concat_context" => Ok(AttentionMode::ConcatContext),
            _ => Err(Error::Config(format!("unknown attention mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub w: ParamId,
}

impl AttentionParams {
    pub fn init<F: Scalar>(store: &mut ParamStore<F>, name: &str, dim: usize, rng: &mut Rng) -> Result<Self> {
        let w = glorot_uniform([dim], dim, 1, rng);
        Ok(AttentionParams {
            w: store.add(name, w.with_grad())?,
        })
    }
}

/// Additive attention over time.
///
/// `score_t = w · tanh(h_t)`, `Z = masked_softmax(score)` per sequence.
/// Returns the recombined sequence and `Z` as `[B×T]` (batch-major).
pub fn attention<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    h: Var,
    batch: usize,
    mask: &[bool],
    params: &AttentionParams,
    mode: AttentionMode,
) -> Result<(Var, Var)> {
    let (rows, dim) = match g.shape(h) {
        [r, d] => (*r, *d),
        s => return Err(Error::Rank(format!("attention input must be rank 2, got {s:?}"))),
    };
    let w_len = store.get(params.w).numel();
    if w_len != dim {
        return Err(Error::shape("attention", &[rows, dim], &[w_len]));
    }
    if batch == 0 || rows % batch != 0 {
        return Err(Error::shape("attention", &[rows, dim], &[batch]));
    }
    let steps = rows / batch;
    let w = g.param(store, params.w);
    let w_col = g.reshape(w, &[dim, 1])?;
    let th = g.tanh(h);
    let scores = g.matmul(th, w_col)?;
    let scores = g.reshape(scores, &[steps, batch])?;
    let scores = g.transpose(scores)?;
    let z = g.masked_softmax(scores, mask)?;
    let z_tb = g.transpose(z)?;
    let z_flat = g.reshape(z_tb, &[rows])?;
    let weighted = g.scale_rows(h, z_flat)?;
    let out = match mode {
        AttentionMode::Scale => weighted,
        AttentionMode::ConcatContext => {
            let mut pick = vec![F::zero(); batch * rows];
            for t in 0..steps {
                for b in 0..batch {
                    pick[b * rows + t * batch + b] = F::one();
                }
            }
            let pick = g.constant(Tensor::new([batch, rows], pick)?);
            let context = g.matmul(pick, weighted)?;
            let spread: Vec<usize> = (0..rows).map(|r| r % batch).collect();
            let context = g.take_rows(context, &spread)?;
            g.concat(&[h, context], 1)?
        }
    };
    Ok((out, z))
}

/// Mean binary cross-entropy over unmasked positions.
pub fn masked_bce_loss<F: Scalar>(g: &mut Graph<F>, probs: Var, labels: &[F], mask: &[bool]) -> Result<Var> {
    g.bce(probs, labels, mask)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam<F = f32> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(store: &ParamStore<F>, config: AdamConfig) -> Self {
        let zeros = |t: &Tensor<F>| {
            if t.requires_grad() {
                vec![F::zero(); t.numel()]
            } else {
                Vec::new()
            }
        };
        Adam {
            config,
            step: 0,
            m: store.iter().map(|(_, _, t)| zeros(t)).collect(),
            v: store.iter().map(|(_, _, t)| zeros(t)).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable tensor, then zeroes all gradients.
    pub fn step(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::TrainingIntegrity("optimizer built for a different parameter set".into()));
        }
        for id in store.ids() {
            let t = store.get(id);
            if t.requires_grad() && t.grad().is_none() {
                return Err(Error::TrainingIntegrity(format!(
                    "trainable parameter `{}` has no gradient",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let bc1 = F::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = F::of(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (F::of(c.lr), F::of(c.eps));
        let one = F::one();
        for id in store.ids().collect::<Vec<_>>() {
            let t = store.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let grad = t.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (i, p) in t.values_mut().iter_mut().enumerate() {
                let gi = grad[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> Rng {
        Rng::seed_from_u64(11)
    }

    #[test]
    fn pad_row_and_one_hot_equivalence() {
        let mut r = rng();
        let table = EmbeddingTable::<f64>::uniform(5, 3, 0.5, 0, true, &mut r);
        let mut store = ParamStore::new();
        let id = table.register(&mut store, "emb").unwrap();
        let mut g = Graph::new();
        let e = embed(&mut g, &store, id, &[0]).unwrap();
        assert_eq!(g.value(e).values(), &[0.0; 3]);

        let e = embed(&mut g, &store, id, &[3]).unwrap();
        let onehot = g.constant(Tensor::from_fn([1, 5], |i| if i == 3 { 1.0 } else { 0.0 }));
        let tv = g.param(&store, id);
        let prod = g.matmul(onehot, tv).unwrap();
        assert_eq!(g.value(e).values(), g.value(prod).values());
    }

    #[test]
    fn frozen_table_survives_adam() {
        let mut r = rng();
        let mut store = ParamStore::<f32>::new();
        let frozen = EmbeddingTable::uniform(4, 3, 0.5, 0, false, &mut r).register(&mut store, "frozen").unwrap();
        let w = store.add("w", Tensor::full([3], 0.5f32).with_grad()).unwrap();
        let before = store.get(frozen).clone();
        let mut adam = Adam::new(&store, AdamConfig::default());
        for _ in 0..3 {
            let mut g = Graph::new();
            let e = embed(&mut g, &store, frozen, &[1, 2]).unwrap();
            let wv = g.param(&store, w);
            let wr = g.reshape(wv, &[3, 1]).unwrap();
            let y = g.matmul(e, wr).unwrap();
            let loss = g.sum(y);
            g.backward(loss, &mut store).unwrap();
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.get(frozen).values(), before.values());
        assert_ne!(store.get(w).values(), &[0.5f32; 3]);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", Tensor::from_f64([3], &[1.0, 1.0, 1.0]).unwrap().with_grad()).unwrap();
        store.get_mut(p).set_grad(vec![3.0, -0.02, 0.0]).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.step(&mut store).unwrap();
        let v = store.get(p).values();
        assert!((v[0] - (1.0 - 0.001)).abs() < 1e-8);
        assert!((v[1] - (1.0 + 0.001)).abs() < 1e-6);
        assert_eq!(v[2], 1.0);
        assert!(store.get(p).grad().is_none());
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn adam_requires_gradients() {
        let mut store = ParamStore::<f32>::new();
        store.add("p", Tensor::zeros([2]).with_grad()).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        assert!(matches!(adam.step(&mut store), Err(Error::TrainingIntegrity(_))));
    }

    #[test]
    fn adam_descends_scalar_quadratic() {
        // x² from x₀ = 1: plain simulation of the update rule as the oracle.
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::from_f64([1], &[1.0]).unwrap().with_grad()).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        let (mut ox, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut prev = 1.0;
        for step in 1..=3 {
            let mut g = Graph::new();
            let xv = g.param(&store, x);
            let sq = g.mul(xv, xv).unwrap();
            let loss = g.sum(sq);
            g.backward(loss, &mut store).unwrap();
            adam.step(&mut store).unwrap();

            let grad = 2.0 * ox;
            m = 0.9 * m + 0.1 * grad;
            v = 0.999 * v + 0.001 * grad * grad;
            let mh = m / (1.0 - 0.9f64.powi(step));
            let vh = v / (1.0 - 0.999f64.powi(step));
            ox -= 0.001 * mh / (vh.sqrt() + 1e-7);

            let now = store.get(x).values()[0];
            assert!(now < prev);
            assert!((now - ox).abs() < 1e-12);
            prev = now;
        }
    }

    #[test]
    fn dropout_modes() {
        let mut r = rng();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn([100], |i| i as f64 + 1.0));
        assert_eq!(dropout(&mut g, x, 0.2, false, &mut r).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.0, true, &mut r).unwrap(), x);
        assert!(matches!(dropout(&mut g, x, 1.0, true, &mut r), Err(Error::Config(_))));

        let big = g.constant(Tensor::full([100_000], 1.0));
        let y = dropout(&mut g, big, 0.2, true, &mut r).unwrap();
        let zeros = g.value(y).values().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeros - 0.2).abs() < 0.01, "zero fraction {zeros}");
        let survivor = g.value(y).values().iter().find(|&&v| v != 0.0).copied().unwrap();
        assert!((survivor - 1.25).abs() < 1e-12);
    }

    #[test]
    fn dense_zero_weights_sigmoid_half() {
        let mut store = ParamStore::<f64>::new();
        let d = DenseParams {
            weights: store.add("d.w", Tensor::zeros([4, 2]).with_grad()).unwrap(),
            bias: store.add("d.b", Tensor::zeros([2]).with_grad()).unwrap(),
        };
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_fn([3, 4], |i| i as f64));
        let y = time_distributed_dense(&mut g, &store, h, &d, Activation::Sigmoid).unwrap();
        assert!(g.value(y).values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn attention_single_step_and_zero_w() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::from_f64([2], &[0.3, -0.7]).unwrap().with_grad()).unwrap();
        let params = AttentionParams { w };
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_f64([1, 2], &[0.4, 2.0]).unwrap());
        let (out, z) = attention(&mut g, &store, h, 1, &[true], &params, AttentionMode::Scale).unwrap();
        assert_eq!(g.value(z).values(), &[1.0]);
        assert_eq!(g.value(out).values(), g.value(h).values());

        store.get_mut(w).values_mut().iter_mut().for_each(|v| *v = 0.0);
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_fn([4, 2], |i| i as f64 * 0.3));
        let (_, z) = attention(&mut g, &store, h, 1, &[true, true, true, false], &params, AttentionMode::Scale).unwrap();
        let zv = g.value(z).values();
        for &v in &zv[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(zv[3], 0.0);
        assert!(matches!(
            attention(&mut g, &store, h, 1, &[false; 4], &params, AttentionMode::Scale),
            Err(Error::DegenerateMask)
        ));
    }
}
