//! Central finite-difference checks in f64, shared by the gradient tests and
//! the acceptance target.
#![allow(dead_code)]

use emplite::corpus::{Batch, Vocabulary};
use emplite::model::{Model, ModelConfig, Variant};
use emplite::nn::{
    attention, bilstm, char_cnn_encode, embed, lstm_sequence, time_distributed_dense, AttentionMode,
    AttentionParams, ConvParams, DenseParams, LstmParams,
};
use emplite::postag::PosTag;
use emplite::rng::{rng_for, Rng};
use emplite::{Activation, Graph, ParamStore, Tensor, Var};
use rand::Rng as _;

pub const STEP: f64 = 1e-5;
/// Denominator floor for relative error, so tiny gradients are judged on
/// absolute error instead.
pub const FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn rand_tensor(shape: &[usize], limit: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-limit..limit))
}

/// Random-weighted sum of `out`, so every output element gets a distinct
/// upstream gradient.
fn project(g: &mut Graph<f64>, out: Var, weights: &[f64]) -> Var {
    let n = g.value(out).numel();
    let w = weights[..n].to_vec();
    let y = g.mul_const(out, w).expect("projection weights");
    g.sum(y)
}

/// Max relative error over every element of every trainable tensor in
/// `store` (skipping `skip_rows` rows of named tables).
pub fn check_store(
    store: &mut ParamStore<f64>,
    skip_rows: &[(&str, usize)],
    loss: &dyn Fn(&ParamStore<f64>, &mut Graph<f64>) -> Var,
) -> f64 {
    check_owner(store, |s| s, skip_rows, loss)
}

/// [`check_store`] for a value that owns its parameter store.
pub fn check_owner<T>(
    owner: &mut T,
    store_of: fn(&mut T) -> &mut ParamStore<f64>,
    skip_rows: &[(&str, usize)],
    loss: &dyn Fn(&T, &mut Graph<f64>) -> Var,
) -> f64 {
    store_of(owner).zero_grad();
    let mut g = Graph::new();
    let l = loss(owner, &mut g);
    g.backward(l, store_of(owner)).expect("backward");
    let store = store_of(owner);
    let ids: Vec<_> = store.ids().filter(|&id| store.get(id).requires_grad()).collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        let store = store_of(owner);
        let analytic = store.get(id).grad().map(<[f64]>::to_vec).unwrap_or_default();
        let shape = store.get(id).shape().to_vec();
        let row_len: usize = shape[1..].iter().product::<usize>().max(1);
        let skipped: Vec<usize> = skip_rows
            .iter()
            .filter(|(n, _)| *n == store.name(id))
            .map(|&(_, r)| r)
            .collect();
        for i in 0..store.get(id).numel() {
            if shape.len() > 1 && skipped.contains(&(i / row_len)) {
                continue;
            }
            let orig = store_of(owner).get(id).values()[i];
            let eval = |v: f64, owner: &mut T| {
                store_of(owner).get_mut(id).values_mut()[i] = v;
                let mut g = Graph::new();
                let l = loss(owner, &mut g);
                g.value(l).values()[0]
            };
            let up = eval(orig + STEP, owner);
            let down = eval(orig - STEP, owner);
            store_of(owner).get_mut(id).values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.get(i).copied().unwrap_or(0.0);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

fn random_mask(batch: usize, steps: usize, rng: &mut Rng) -> Vec<bool> {
    let mut mask = vec![false; batch * steps];
    for b in 0..batch {
        let len = rng.gen_range(1..=steps);
        for t in 0..len {
            mask[b * steps + t] = true;
        }
    }
    mask
}

fn weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn embedding_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/embedding");
    let (rows, dim, n) = (rng.gen_range(2..8), rng.gen_range(1..6), rng.gen_range(1..10));
    let mut store = ParamStore::new();
    let table = store.add("table", rand_tensor(&[rows, dim], 1.0, &mut rng).with_grad()).unwrap();
    let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..rows)).collect();
    let w = weights(n * dim, &mut rng);
    check_store(&mut store, &[], &|s, g| {
        let e = embed(g, s, table, &ids).unwrap();
        let e = g.tanh(e);
        project(g, e, &w)
    })
}

pub fn conv1d_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/conv1d");
    let width = [1, 3, 5][rng.gen_range(0..3)];
    let (words, len, ch, filters) = (rng.gen_range(1..4), rng.gen_range(2..7), rng.gen_range(1..4), rng.gen_range(1..4));
    let mut store = ParamStore::new();
    let input = store.add("input", rand_tensor(&[words * len, ch], 1.0, &mut rng).with_grad()).unwrap();
    let conv = ConvParams::init(&mut store, "conv", width, ch, filters, &mut rng).unwrap();
    for v in store.get_mut(conv.bias).values_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    let w = weights(words * filters, &mut rng);
    check_store(&mut store, &[], &|s, g| {
        let x = g.param(s, input);
        let y = char_cnn_encode(g, s, x, len, &conv).unwrap();
        project(g, y, &w)
    })
}

fn lstm_store(rng: &mut Rng, rows: usize, dim: usize) -> (ParamStore<f64>, emplite::ParamId) {
    let mut store = ParamStore::new();
    let input = store.add("input", rand_tensor(&[rows, dim], 1.0, rng).with_grad()).unwrap();
    (store, input)
}

fn jitter_bias(store: &mut ParamStore<f64>, p: &LstmParams, rng: &mut Rng) {
    for v in store.get_mut(p.bias).values_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
}

/// One or two steps of a single LSTM, optionally with a recurrent dropout mask.
pub fn lstm_cell_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/lstm");
    let (batch, steps, dim, hidden) = (rng.gen_range(1..4), rng.gen_range(1..3), rng.gen_range(1..5), rng.gen_range(1..5));
    let (mut store, input) = lstm_store(&mut rng, batch * steps, dim);
    let p = LstmParams::init(&mut store, "lstm", dim, hidden, &mut rng).unwrap();
    jitter_bias(&mut store, &p, &mut rng);
    let mask = random_mask(batch, steps, &mut rng);
    let rec: Option<Vec<f64>> = rng
        .gen_bool(0.5)
        .then(|| (0..batch * hidden).map(|_| if rng.gen_bool(0.8) { 1.25 } else { 0.0 }).collect());
    let reverse = rng.gen_bool(0.5);
    let w = weights(batch * steps * hidden, &mut rng);
    check_store(&mut store, &[], &|s, g| {
        let x = g.param(s, input);
        let outs = lstm_sequence(g, s, x, batch, &mask, &p, reverse, rec.as_deref()).unwrap();
        let all = g.concat(&outs, 0).unwrap();
        project(g, all, &w)
    })
}

pub fn bilstm_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/bilstm");
    let (batch, steps, dim, hidden) = (rng.gen_range(1..4), rng.gen_range(2..5), rng.gen_range(1..4), rng.gen_range(1..4));
    let (mut store, input) = lstm_store(&mut rng, batch * steps, dim);
    let f = LstmParams::init(&mut store, "fwd", dim, hidden, &mut rng).unwrap();
    let b = LstmParams::init(&mut store, "bwd", dim, hidden, &mut rng).unwrap();
    jitter_bias(&mut store, &f, &mut rng);
    jitter_bias(&mut store, &b, &mut rng);
    let mask = random_mask(batch, steps, &mut rng);
    let w = weights(batch * steps * 2 * hidden, &mut rng);
    check_store(&mut store, &[], &|s, g| {
        let x = g.param(s, input);
        let y = bilstm(g, s, x, batch, &mask, &f, &b, None).unwrap();
        project(g, y, &w)
    })
}

pub fn attention_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/attention");
    let (batch, steps, dim) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
    let mode = if seed.is_multiple_of(2) {
        AttentionMode::Scale
    } else {
        AttentionMode::ConcatContext
    };
    let mut store = ParamStore::new();
    let h = store.add("h", rand_tensor(&[steps * batch, dim], 1.5, &mut rng).with_grad()).unwrap();
    let p = AttentionParams::init(&mut store, "attn", dim, &mut rng).unwrap();
    let mask = random_mask(batch, steps, &mut rng);
    let out_dim = if mode == AttentionMode::Scale { dim } else { 2 * dim };
    let w = weights(steps * batch * out_dim, &mut rng);
    let wz = weights(batch * steps, &mut rng);
    check_store(&mut store, &[], &|s, g| {
        let x = g.param(s, h);
        let (y, z) = attention(g, s, x, batch, &mask, &p, mode).unwrap();
        let a = project(g, y, &w);
        let b = project(g, z, &wz);
        g.add(a, b).unwrap()
    })
}

pub fn dense_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/dense");
    let (rows, inputs, units) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
    let act = [Activation::Sigmoid, Activation::Tanh, Activation::Identity][(seed % 3) as usize];
    let mut store = ParamStore::new();
    let x = store.add("x", rand_tensor(&[rows, inputs], 1.0, &mut rng).with_grad()).unwrap();
    let d = DenseParams::init(&mut store, "dense", inputs, units, &mut rng).unwrap();
    for v in store.get_mut(d.bias).values_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    let w = weights(rows * units, &mut rng);
    check_store(&mut store, &[], &|s, g| {
        let xv = g.param(s, x);
        let y = time_distributed_dense(g, s, xv, &d, act).unwrap();
        project(g, y, &w)
    })
}

pub fn bce_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad/bce");
    let n = rng.gen_range(1..12);
    let mut store = ParamStore::new();
    let logits = store.add("logits", rand_tensor(&[n], 3.0, &mut rng).with_grad()).unwrap();
    let labels: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    mask[0] = true;
    check_store(&mut store, &[], &|s, g| {
        let z = g.param(s, logits);
        let p = g.sigmoid(z);
        g.bce(p, &labels, &mask).unwrap()
    })
}

pub type Case = fn(u64) -> f64;

pub const LAYERS: [(&str, Case); 7] = [
    ("embedding", embedding_case),
    ("conv1d", conv1d_case),
    ("lstm_cell", lstm_cell_case),
    ("bilstm", bilstm_case),
    ("attention", attention_case),
    ("dense", dense_case),
    ("bce", bce_case),
];

/// Worst relative error of `case` over seeds `0..configs`.
pub fn worst_over(case: Case, configs: u64) -> f64 {
    (0..configs).map(case).fold(0.0, f64::max)
}

fn tiny_vocab() -> Vocabulary {
    let words = ["<PAD>", "<UNK>", "dream", "big", "never", "stop"];
    let chars = ["<PAD>", "<UNK>", "d", "r", "e", "a", "m", "b", "i", "g"];
    let pos: Vec<String> = ["<PAD>", "<UNK>"]
        .into_iter()
        .map(String::from)
        .chain(PosTag::ALL.iter().map(|t| t.as_str().to_string()))
        .collect();
    Vocabulary::from_symbols(
        words.map(String::from).to_vec(),
        chars.map(String::from).to_vec(),
        pos,
    )
    .unwrap()
}

/// Whole-model check with tiny dimensions. Pad rows of the embedding tables
/// stay zero by construction and are excluded.
pub fn model_case(variant: Variant, mode: AttentionMode) -> f64 {
    let vocab = tiny_vocab();
    let config = ModelConfig {
        word_dim: 3,
        char_dim: 3,
        char_filters: 2,
        lstm_units: 2,
        pos_dim: 2,
        dense_units: 3,
        attention_mode: mode,
        seed: 11,
        ..ModelConfig::for_variant(variant)
    };
    let mut rng = rng_for(5, "grad/model-table");
    let table = rand_tensor(&[vocab.words().len(), 3], 0.5, &mut rng);
    let mut model = Model::<f64>::init(config, vocab.clone(), Some(table)).unwrap();
    let toks: Vec<Vec<String>> = vec![
        ["dream", "big"].map(String::from).to_vec(),
        ["never", "stop", "dreaming", "big"].map(String::from).to_vec(),
        ["stop"].map(String::from).to_vec(),
    ];
    let refs: Vec<&[String]> = toks.iter().map(|t| t.as_slice()).collect();
    let labels = vec![vec![1, 0], vec![0, 1, 1, 0], vec![1]];
    let batch = Batch::encode(&vocab, &refs, &[None, None, None], Some(&labels), vec![0, 1, 2]).unwrap();
    let skip = [("word_table", 0), ("char_table", 0), ("pos_table", 0)];
    check_owner(&mut model, |m| &mut m.store, &skip, &|m, g| {
        let mut r = rng_for(0, "unused");
        m.loss(g, &batch, false, &mut r).unwrap()
    })
}
