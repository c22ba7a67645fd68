//! The emphasis network, its ablation variants, training, and inference.
//!
//! Pipeline: word encoding (word embedding joined with a character encoder)
//! → dropout → BiLSTM → optional POS embedding → optional attention →
//! dense(12, sigmoid) → dense(1, sigmoid). Padded positions output 0.

use std::collections::HashMap;
use std::fmt;

use crate::corpus::{
    check_threshold, make_batches, AnnotatedSentence, Batch, GloveSubset, Vocabulary, MAX_WORD_LEN, PAD_ID,
};
use crate::error::{Error, Result};
use crate::graph::{Activation, Graph, ParamId, ParamStore, Var};
use crate::metrics::{evaluate, EvalInstance, Scores};
use crate::nn::{
    attention, bilstm, char_cnn_encode, dropout, dropout_mask, lstm_final_state, time_distributed_dense,
    uniform_tensor, Adam, AdamConfig, AttentionMode, AttentionParams, ConvParams, DenseParams, EmbeddingTable,
    LstmParams,
};
use crate::rng::{rng_for, Rng};
use crate::tensor::{Scalar, Tensor};

/// Architecture ladder, from the plain word-embedding model to the full one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Base,
    CharLstm,
    GloveFrozenCharLstm,
    GloveFrozenCharCnn,
    GloveTrainableCharCnn,
    DualCnn,
    DualCnnAttn,
    EmpliteFull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CharEncoder {
    None,
    Lstm,
    /// Parallel convolutions, one per configured kernel width in use.
    Cnn { kernels: usize },
}

/// Which sub-layers a variant contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub glove: bool,
    pub word_trainable: bool,
    pub chars: CharEncoder,
    pub attention: bool,
    pub pos: bool,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Base,
        Variant::CharLstm,
        Variant::GloveFrozenCharLstm,
        Variant::GloveFrozenCharCnn,
        Variant::GloveTrainableCharCnn,
        Variant::DualCnn,
        Variant::DualCnnAttn,
        Variant::EmpliteFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::CharLstm => "char_lstm",
            Variant::GloveFrozenCharLstm => "glove_frozen_char_lstm",
            Variant::GloveFrozenCharCnn => "glove_frozen_char_cnn",
            Variant::GloveTrainableCharCnn => "glove_trainable_char_cnn",
            Variant::DualCnn => "dual_cnn",
            Variant::DualCnnAttn => "dual_cnn_attn",
            Variant::EmpliteFull => "emplite_full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.as_str()).collect();
                Error::Config(format!("unknown variant `{s}` (expected one of {})", names.join(", ")))
            })
    }

    pub fn layout(self) -> Layout {
        use CharEncoder::*;
        let l = |glove, word_trainable, chars, attention, pos| Layout {
            glove,
            word_trainable,
            chars,
            attention,
            pos,
        };
        match self {
            Variant::Base => l(false, true, None, false, false),
            Variant::CharLstm => l(false, true, Lstm, false, false),
            Variant::GloveFrozenCharLstm => l(true, false, Lstm, false, false),
            Variant::GloveFrozenCharCnn => l(true, false, Cnn { kernels: 1 }, false, false),
            Variant::GloveTrainableCharCnn => l(true, true, Cnn { kernels: 1 }, false, false),
            Variant::DualCnn => l(true, true, Cnn { kernels: 2 }, false, false),
            Variant::DualCnnAttn => l(true, true, Cnn { kernels: 2 }, true, false),
            Variant::EmpliteFull => l(true, true, Cnn { kernels: 2 }, true, true),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub kernel_sizes: Vec<usize>,
    pub lstm_units: usize,
    pub pos_dim: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub recurrent_dropout: f64,
    pub batch_size: usize,
    pub threshold: f64,
    pub seed: u64,
    pub attention_mode: AttentionMode,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Half-width of the uniform init for randomly initialized embeddings.
    pub embed_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::EmpliteFull,
            word_dim: 50,
            char_dim: 50,
            char_filters: 16,
            kernel_sizes: vec![3, 5],
            lstm_units: 16,
            pos_dim: 16,
            dense_units: 12,
            dropout: 0.2,
            recurrent_dropout: 0.2,
            batch_size: 32,
            threshold: 0.4,
            seed: 0,
            attention_mode: AttentionMode::Scale,
            max_epochs: 100,
            patience: 10,
            learning_rate: 0.001,
            embed_init: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn for_variant(variant: Variant) -> Self {
        ModelConfig {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        let dims = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_filters", self.char_filters),
            ("lstm_units", self.lstm_units),
            ("pos_dim", self.pos_dim),
            ("dense_units", self.dense_units),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for rate in [self.dropout, self.recurrent_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("dropout {rate} outside [0, 1)")));
            }
        }
        if let CharEncoder::Cnn { kernels } = self.variant.layout().chars {
            if self.kernel_sizes.len() < kernels {
                return Err(Error::Config(format!(
                    "variant {} needs {kernels} kernel sizes",
                    self.variant
                )));
            }
            if let Some(k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0) {
                return Err(Error::Config(format!("kernel size {k} must be odd")));
            }
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Key=value lines, one per field.
    pub fn to_kv(&self) -> String {
        let ks: Vec<String> = self.kernel_sizes.iter().map(|k| k.to_string()).collect();
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        put("variant", self.variant.to_string());
        put("word_dim", self.word_dim.to_string());
        put("char_dim", self.char_dim.to_string());
        put("char_filters", self.char_filters.to_string());
        put("kernel_sizes", ks.join(","));
        put("lstm_units", self.lstm_units.to_string());
        put("pos_dim", self.pos_dim.to_string());
        put("dense_units", self.dense_units.to_string());
        put("dropout", self.dropout.to_string());
        put("recurrent_dropout", self.recurrent_dropout.to_string());
        put("batch_size", self.batch_size.to_string());
        put("threshold", self.threshold.to_string());
        put("max_word_len", MAX_WORD_LEN.to_string());
        put("seed", self.seed.to_string());
        put("attention_mode", self.attention_mode.as_str().to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("patience", self.patience.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("embed_init", self.embed_init.to_string());
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad config line `{line}`")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Config(format!("config lacks `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{k}`")))
        }
        let n = |k: &str| -> Result<usize> { num(k, get(k)?) };
        let x = |k: &str| -> Result<f64> { num(k, get(k)?) };
        if n("max_word_len")? != MAX_WORD_LEN {
            return Err(Error::Config(format!("max_word_len must be {MAX_WORD_LEN}")));
        }
        let kernel_sizes = get("kernel_sizes")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| num("kernel_sizes", s))
            .collect::<Result<Vec<usize>>>()?;
        let cfg = ModelConfig {
            variant: Variant::parse(get("variant")?)?,
            word_dim: n("word_dim")?,
            char_dim: n("char_dim")?,
            char_filters: n("char_filters")?,
            kernel_sizes,
            lstm_units: n("lstm_units")?,
            pos_dim: n("pos_dim")?,
            dense_units: n("dense_units")?,
            dropout: x("dropout")?,
            recurrent_dropout: x("recurrent_dropout")?,
            batch_size: n("batch_size")?,
            threshold: x("threshold")?,
            seed: num("seed", get("seed")?)?,
            attention_mode: AttentionMode::parse(get("attention_mode")?)?,
            max_epochs: n("max_epochs")?,
            patience: n("patience")?,
            learning_rate: x("learning_rate")?,
            embed_init: x("embed_init")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
enum CharLayer {
    None,
    Lstm(LstmParams),
    Cnn(Vec<ConvParams>),
}

/// Parameter handles of one assembled network.
#[derive(Clone, Debug)]
struct Network {
    word_table: ParamId,
    char_table: Option<ParamId>,
    chars: CharLayer,
    fwd: LstmParams,
    bwd: LstmParams,
    pos_table: Option<ParamId>,
    attention: Option<AttentionParams>,
    dense1: DenseParams,
    dense2: DenseParams,
}

fn require(store_find: Option<ParamId>, name: &str) -> Result<ParamId> {
    store_find.ok_or_else(|| Error::Integrity(format!("missing parameter {name}")))
}

impl Network {
    fn from_store<F: Scalar>(config: &ModelConfig, store: &ParamStore<F>) -> Result<Self> {
        let layout = config.variant.layout();
        let chars = match layout.chars {
            CharEncoder::None => CharLayer::None,
            CharEncoder::Lstm => CharLayer::Lstm(LstmParams::from_store(store, "char_lstm")?),
            CharEncoder::Cnn { kernels } => CharLayer::Cnn(
                config.kernel_sizes[..kernels]
                    .iter()
                    .map(|k| ConvParams::from_store(store, &format!("char_cnn{k}")))
                    .collect::<Result<_>>()?,
            ),
        };
        let char_table = match layout.chars {
            CharEncoder::None => None,
            _ => Some(require(store.find("char_table"), "char_table")?),
        };
        let attention = if layout.attention {
            Some(AttentionParams {
                w: require(store.find("attention.w"), "attention.w")?,
            })
        } else {
            None
        };
        let pos_table = if layout.pos {
            Some(require(store.find("pos_table"), "pos_table")?)
        } else {
            None
        };
        Ok(Network {
            word_table: require(store.find("word_table"), "word_table")?,
            char_table,
            chars,
            fwd: LstmParams::from_store(store, "bilstm_fwd")?,
            bwd: LstmParams::from_store(store, "bilstm_bwd")?,
            pos_table,
            attention,
            dense1: DenseParams::from_store(store, "dense1")?,
            dense2: DenseParams::from_store(store, "dense2")?,
        })
    }
}

/// A configured network with its vocabulary and parameters.
#[derive(Clone, Debug)]
pub struct Model<F: Scalar = f32> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore<F>,
    net: Network,
}

/// Output of [`Model::forward`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardPass {
    /// `[B×T]`, batch-major, zero on padding.
    pub probs: Var,
    /// Attention weights `[B×T]` when the variant has attention.
    pub attention: Option<Var>,
}

impl<F: Scalar> Model<F> {
    /// Fresh parameters. `word_table` overrides the random word embedding
    /// (GloVe variants); its trainability follows the variant.
    pub fn init(config: ModelConfig, vocab: Vocabulary, word_table: Option<Tensor<F>>) -> Result<Self> {
        config.validate()?;
        let layout = config.variant.layout();
        let mut rng = rng_for(config.seed, "init");
        let mut store = ParamStore::new();
        let words = vocab.words().len();
        let table = match word_table {
            Some(t) => {
                if t.shape() != [words, config.word_dim] {
                    return Err(Error::shape("word_table", t.shape(), &[words, config.word_dim]));
                }
                t
            }
            None => EmbeddingTable::uniform(words, config.word_dim, config.embed_init, PAD_ID, true, &mut rng).table,
        };
        EmbeddingTable {
            table,
            trainable: layout.word_trainable,
            pad_id: PAD_ID,
        }
        .register(&mut store, "word_table")?;

        let mut enc_dim = config.word_dim;
        if layout.chars != CharEncoder::None {
            EmbeddingTable::uniform(vocab.chars().len(), config.char_dim, config.embed_init, PAD_ID, true, &mut rng)
                .register(&mut store, "char_table")?;
        }
        match layout.chars {
            CharEncoder::None => {}
            CharEncoder::Lstm => {
                LstmParams::init(&mut store, "char_lstm", config.char_dim, config.char_filters, &mut rng)?;
                enc_dim += config.char_filters;
            }
            CharEncoder::Cnn { kernels } => {
                for &k in &config.kernel_sizes[..kernels] {
                    ConvParams::init(
                        &mut store,
                        &format!("char_cnn{k}"),
                        k,
                        config.char_dim,
                        config.char_filters,
                        &mut rng,
                    )?;
                    enc_dim += config.char_filters;
                }
            }
        }
        let h = config.lstm_units;
        LstmParams::init(&mut store, "bilstm_fwd", enc_dim, h, &mut rng)?;
        LstmParams::init(&mut store, "bilstm_bwd", enc_dim, h, &mut rng)?;
        let mut feat = 2 * h;
        if layout.pos {
            EmbeddingTable::uniform(vocab.pos_tags().len(), config.pos_dim, config.embed_init, PAD_ID, true, &mut rng)
                .register(&mut store, "pos_table")?;
            feat += config.pos_dim;
        }
        if layout.attention {
            AttentionParams::init(&mut store, "attention.w", feat, &mut rng)?;
            if config.attention_mode == AttentionMode::ConcatContext {
                feat *= 2;
            }
        }
        DenseParams::init(&mut store, "dense1", feat, config.dense_units, &mut rng)?;
        DenseParams::init(&mut store, "dense2", config.dense_units, 1, &mut rng)?;
        let net = Network::from_store(&config, &store)?;
        Ok(Model {
            config,
            vocab,
            store,
            net,
        })
    }

    /// Reassembles a model around existing parameters.
    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, mut store: ParamStore<F>) -> Result<Self> {
        config.validate()?;
        let layout = config.variant.layout();
        for id in store.ids().collect::<Vec<_>>() {
            let trainable = store.name(id) != "word_table" || layout.word_trainable;
            store.get_mut(id).set_requires_grad(trainable);
        }
        let net = Network::from_store(&config, &store)?;
        let rows = |id: ParamId| store.get(id).shape()[0];
        let checks = [
            ("word", Some(net.word_table), vocab.words().len()),
            ("char", net.char_table, vocab.chars().len()),
            ("pos", net.pos_table, vocab.pos_tags().len()),
        ];
        for (name, id, expected) in checks {
            if let Some(id) = id {
                if rows(id) != expected {
                    return Err(Error::Integrity(format!(
                        "{name} table has {} rows, vocabulary has {expected}",
                        rows(id)
                    )));
                }
            }
        }
        Ok(Model {
            config,
            vocab,
            store,
            net,
        })
    }

    pub fn trainable_params(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            store: self.store.cast(),
            net: self.net.clone(),
        }
    }

    fn check_ids(&self, batch: &Batch) -> Result<()> {
        let limits = [
            ("word", &batch.word_ids, self.vocab.words().len()),
            ("char", &batch.char_ids, self.vocab.chars().len()),
            ("pos", &batch.pos_ids, self.vocab.pos_tags().len()),
        ];
        for (name, ids, size) in limits {
            if let Some(&bad) = ids.iter().find(|&&i| i >= size) {
                return Err(Error::Integrity(format!(
                    "{name} id {bad} outside vocabulary of {size}; batch built for another model"
                )));
            }
        }
        Ok(())
    }

    /// Records the network on `g`. Dropout is active only when `training`.
    pub fn forward(&self, g: &mut Graph<F>, batch: &Batch, training: bool, rng: &mut Rng) -> Result<ForwardPass> {
        self.check_ids(batch)?;
        let (b, t) = (batch.batch, batch.t_max);
        let rows = b * t;
        let cfg = &self.config;
        // time-major row r = step·B + b  ↔  batch-major cell b·T + step
        let cell = |r: usize| (r % b) * t + r / b;
        let word_ids: Vec<usize> = (0..rows).map(|r| batch.word_ids[cell(r)]).collect();
        let mut parts = vec![g.gather(&self.store, self.net.word_table, &word_ids)?];

        if let Some(char_table) = self.net.char_table {
            let l = MAX_WORD_LEN;
            match &self.net.chars {
                CharLayer::None => {}
                CharLayer::Cnn(convs) => {
                    let ids: Vec<usize> = (0..rows)
                        .flat_map(|r| batch.char_ids[cell(r) * l..(cell(r) + 1) * l].iter().copied())
                        .collect();
                    let embs = g.gather(&self.store, char_table, &ids)?;
                    for conv in convs {
                        parts.push(char_cnn_encode(g, &self.store, embs, l, conv)?);
                    }
                }
                CharLayer::Lstm(params) => {
                    let ids: Vec<usize> = (0..l)
                        .flat_map(|c| (0..rows).map(move |r| (r, c)))
                        .map(|(r, c)| batch.char_ids[cell(r) * l + c])
                        .collect();
                    let mask: Vec<bool> = (0..rows)
                        .flat_map(|r| (0..l).map(move |c| (r, c)))
                        .map(|(r, c)| batch.char_ids[cell(r) * l + c] != PAD_ID)
                        .collect();
                    let embs = g.gather(&self.store, char_table, &ids)?;
                    parts.push(lstm_final_state(g, &self.store, embs, rows, &mask, params)?);
                }
            }
        }
        let enc = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 1)? };
        let enc = dropout(g, enc, cfg.dropout, training, rng)?;

        let h = cfg.lstm_units;
        let rec = if training && cfg.recurrent_dropout > 0.0 {
            Some((
                dropout_mask::<F>(b * h, cfg.recurrent_dropout, rng),
                dropout_mask::<F>(b * h, cfg.recurrent_dropout, rng),
            ))
        } else {
            None
        };
        let mut seq = bilstm(
            g,
            &self.store,
            enc,
            b,
            &batch.mask,
            &self.net.fwd,
            &self.net.bwd,
            rec.as_ref().map(|(f, r)| (f.as_slice(), r.as_slice())),
        )?;

        if let Some(pos_table) = self.net.pos_table {
            let pos_ids: Vec<usize> = (0..rows).map(|r| batch.pos_ids[cell(r)]).collect();
            let e = g.gather(&self.store, pos_table, &pos_ids)?;
            seq = g.concat(&[seq, e], 1)?;
        }
        let mut attn = None;
        if let Some(params) = &self.net.attention {
            let (out, z) = attention(g, &self.store, seq, b, &batch.mask, params, cfg.attention_mode)?;
            seq = out;
            attn = Some(z);
        }
        let d1 = time_distributed_dense(g, &self.store, seq, &self.net.dense1, Activation::Sigmoid)?;
        let d2 = time_distributed_dense(g, &self.store, d1, &self.net.dense2, Activation::Sigmoid)?;
        let d2 = g.reshape(d2, &[t, b])?;
        let probs = g.transpose(d2)?;
        let keep: Vec<F> = batch.mask.iter().map(|&m| if m { F::one() } else { F::zero() }).collect();
        let probs = g.mul_const(probs, keep)?;
        Ok(ForwardPass { probs, attention: attn })
    }

    /// Masked mean BCE for `batch`, recorded on `g`.
    pub fn loss(&self, g: &mut Graph<F>, batch: &Batch, training: bool, rng: &mut Rng) -> Result<Var> {
        let out = self.forward(g, batch, training, rng)?;
        let labels: Vec<F> = batch.labels.iter().map(|&y| F::of(y as f64)).collect();
        g.bce(out.probs, &labels, &batch.mask)
    }

    /// Inference on an encoded batch; one probability vector per row.
    pub fn predict_batch(&self, batch: &Batch) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let mut rng = rng_for(0, "unused");
        let out = self.forward(&mut g, batch, false, &mut rng)?;
        let p = g.value(out.probs).values();
        Ok((0..batch.batch)
            .map(|b| {
                (0..batch.lengths[b])
                    .map(|t| p[b * batch.t_max + t].as_f64())
                    .collect()
            })
            .collect())
    }

    /// Emphasis probabilities for one tokenized sentence. POS tags come from
    /// `pos` when given, otherwise from the builtin tagger.
    pub fn predict(&self, tokens: &[String], pos: Option<&[String]>) -> Result<Prediction> {
        if tokens.is_empty() {
            return Err(Error::DegenerateInput("cannot score an empty sentence".into()));
        }
        let batch = Batch::encode(&self.vocab, &[tokens], &[pos], None, vec![0])?;
        let probs = self.predict_batch(&batch)?.remove(0);
        Ok(Prediction {
            tokens: tokens.to_vec(),
            probs,
        })
    }

    /// Probabilities for many sentences, batched by `batch_size`.
    pub fn predict_sentences(&self, data: &[AnnotatedSentence]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(data.len());
        for batch in make_batches(data, &self.vocab, self.config.batch_size, self.config.threshold, None)? {
            out.extend(self.predict_batch(&batch)?);
        }
        Ok(out)
    }

    /// Match_1..4 and average against the annotated probabilities.
    pub fn score(&self, data: &[AnnotatedSentence]) -> Result<Scores> {
        let preds = self.predict_sentences(data)?;
        let inst = data
            .iter()
            .zip(preds)
            .map(|(s, p)| EvalInstance::new(s.probability_values(), p))
            .collect::<Result<Vec<_>>>()?;
        evaluate(&inst)
    }
}

/// Per-token probabilities for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
}

/// Trainable parameter count of `config` over `vocab`.
pub fn count_params(config: &ModelConfig, vocab: &Vocabulary) -> Result<usize> {
    let table = Tensor::<f32>::zeros([vocab.words().len(), config.word_dim]);
    Ok(Model::init(config.clone(), vocab.clone(), Some(table))?.trainable_params())
}

/// One epoch of [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_score: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_score: f64,
    /// Words found in the embedding file, when one was used.
    pub glove_hits: Option<usize>,
}

/// Word vectors keyed by lowercased word.
pub type WordVectors = HashMap<String, Vec<f32>>;

/// Builds the vocabulary and initial model for `train_data`.
pub fn init_model(config: &ModelConfig, train_data: &[AnnotatedSentence], glove: Option<&WordVectors>) -> Result<(Model<f32>, Option<usize>)> {
    if train_data.is_empty() {
        return Err(Error::Config("training data is empty".into()));
    }
    config.validate()?;
    let vocab = Vocabulary::build(train_data)?;
    let (table, hits) = if config.variant.layout().glove {
        let vectors = glove.ok_or_else(|| {
            Error::Config(format!("variant {} needs pretrained word vectors", config.variant))
        })?;
        let sub = GloveSubset::from_vectors(vectors, &vocab, config.word_dim, config.seed)?;
        (Some(sub.table.table), Some(sub.hits.len()))
    } else {
        (None, None)
    };
    Ok((Model::init(config.clone(), vocab, table)?, hits))
}

/// Mini-batch Adam on masked BCE with best-dev selection and early stopping.
///
/// After every epoch the average score on `dev_data` (or on `train_data`
/// when `dev_data` is empty) is computed; the best epoch's parameters are
/// returned. Training stops after `patience` epochs without improvement or
/// at `max_epochs`.
pub fn train(
    config: &ModelConfig,
    train_data: &[AnnotatedSentence],
    dev_data: &[AnnotatedSentence],
    glove: Option<&WordVectors>,
) -> Result<TrainOutcome> {
    let (mut model, glove_hits) = init_model(config, train_data, glove)?;
    let mut adam = Adam::new(
        &model.store,
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle = rng_for(config.seed, "shuffle");
    let mut drop = rng_for(config.seed, "dropout");
    let select_on = if dev_data.is_empty() { train_data } else { dev_data };

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ParamStore<f32>)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs.max(1) {
        let batches = make_batches(train_data, &model.vocab, config.batch_size, config.threshold, Some(&mut shuffle))?;
        let mut total = 0.0;
        for batch in &batches {
            let mut g = Graph::new();
            let loss = model.loss(&mut g, batch, true, &mut drop)?;
            let lv = g.value(loss).values()[0];
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            total += lv as f64;
            g.backward(loss, &mut model.store)?;
            adam.step(&mut model.store)?;
        }
        let dev_score = model.score(select_on)?.average;
        history.push(EpochRecord {
            epoch,
            loss: total / batches.len() as f64,
            dev_score,
        });
        if best.as_ref().is_none_or(|(_, s, _)| dev_score > *s) {
            best = Some((epoch, dev_score, model.store.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (best_epoch, best_score, store) = best.expect("at least one epoch");
    model.store.copy_values_from(&store)?;
    model.store.zero_grad();
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_score,
        glove_hits,
    })
}

/// One row of an ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub scores: Scores,
    pub params: usize,
    pub file_bytes: usize,
    pub best_epoch: usize,
}

/// Trains each variant with the same base configuration and seed, then
/// scores it on `test_data`.
pub fn run_ablation(
    base: &ModelConfig,
    variants: &[Variant],
    train_data: &[AnnotatedSentence],
    dev_data: &[AnnotatedSentence],
    test_data: &[AnnotatedSentence],
    glove: Option<&WordVectors>,
) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|&variant| {
            let cfg = ModelConfig {
                variant,
                ..base.clone()
            };
            let out = train(&cfg, train_data, dev_data, glove)?;
            Ok(AblationRow {
                variant,
                scores: out.model.score(test_data)?,
                params: out.model.trainable_params(),
                file_bytes: crate::bundle::to_bytes(&out.model)?.len(),
                best_epoch: out.best_epoch,
            })
        })
        .collect()
}

/// Seeded uniform `[rows × dim]` table.
pub fn random_table<F: Scalar>(rows: usize, dim: usize, limit: f64, seed: u64) -> Tensor<F> {
    uniform_tensor([rows, dim], limit, &mut rng_for(seed, "table"))
}
