//! Annotated datasets, vocabularies, GloVe subsetting, and padded batches.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::EmbeddingTable;
use crate::postag::{tag_builtin, PosTag};
use crate::rng::{rng_for, Rng};
use crate::tensor::Tensor;

pub const PAD: &str = "<PAD>";
pub const UNK: &str = "<UNK>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const MAX_WORD_LEN: usize = 16;
pub const DEFAULT_THRESHOLD: f64 = 0.4;

/// One annotator's tag for one token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bio {
    B,
    I,
    O,
}

impl Bio {
    pub fn parse(s: &str) -> Option<Bio> {
        match s {
            "B" => Some(Bio::B),
            "I" => Some(Bio::I),
            "O" => Some(Bio::O),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Bio::B => 'B',
            Bio::I => 'I',
            Bio::O => 'O',
        }
    }

    pub fn is_emphasis(self) -> bool {
        self != Bio::O
    }
}

/// Exact fraction of annotators who marked a token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.value())
    }
}

/// Tokens with per-annotator BIO tags and an optional POS column.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    /// `annotations[i][k]` is annotator `k`'s tag for token `i`.
    pub annotations: Vec<Vec<Bio>>,
    pub pos: Option<Vec<String>>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<String>, annotations: Vec<Vec<Bio>>, pos: Option<Vec<String>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::DegenerateInput("empty sentence".into()));
        }
        if annotations.len() != tokens.len() {
            return Err(Error::Alignment(format!(
                "{} annotation rows for {} tokens",
                annotations.len(),
                tokens.len()
            )));
        }
        let k = annotations[0].len();
        if annotations.iter().any(|a| a.len() != k) {
            return Err(Error::Alignment("inconsistent annotator counts".into()));
        }
        if let Some(p) = &pos {
            if p.len() != tokens.len() {
                return Err(Error::Alignment(format!("{} POS tags for {} tokens", p.len(), tokens.len())));
            }
        }
        Ok(AnnotatedSentence { tokens, annotations, pos })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn annotators(&self) -> usize {
        self.annotations.first().map_or(0, Vec::len)
    }

    /// Per-token (B+I)/(B+I+O); panics only on malformed sentences built by
    /// hand, use [`aggregate_probabilities`] for a checked variant.
    pub fn probabilities(&self) -> Vec<Ratio> {
        aggregate_probabilities(self).expect("sentence without annotators")
    }

    pub fn probability_values(&self) -> Vec<f64> {
        self.probabilities().into_iter().map(Ratio::value).collect()
    }

    pub fn labels(&self, threshold: f64) -> Vec<u8> {
        threshold_labels(&self.probability_values(), threshold)
    }

    /// Keeps only the tokens whose index passes `keep`.
    pub fn retain_tokens(&self, keep: impl Fn(usize) -> bool) -> AnnotatedSentence {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        AnnotatedSentence {
            tokens: idx.iter().map(|&i| self.tokens[i].clone()).collect(),
            annotations: idx.iter().map(|&i| self.annotations[i].clone()).collect(),
            pos: self.pos.as_ref().map(|p| idx.iter().map(|&i| p[i].clone()).collect()),
        }
    }
}

/// Exact emphasis probability per token.
pub fn aggregate_probabilities(s: &AnnotatedSentence) -> Result<Vec<Ratio>> {
    let k = s.annotators();
    if k == 0 {
        return Err(Error::DegenerateInput("sentence has zero annotators".into()));
    }
    Ok(s.annotations
        .iter()
        .map(|a| Ratio {
            num: a.iter().filter(|b| b.is_emphasis()).count() as u32,
            den: k as u32,
        })
        .collect())
}

/// 1 where `prob >= threshold`.
pub fn threshold_labels(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold {threshold} outside [0, 1]")))
    }
}

/// Input layouts accepted by [`parse_dataset`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    EmpliteTsv,
    Semeval(SemevalColumns),
}

/// Column mapping for tab-separated SemEval-style releases. Sentences are
/// separated by blank lines; annotations are `|`-separated BIO tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemevalColumns {
    pub token: usize,
    pub annotations: usize,
    pub pos: Option<usize>,
    pub header: bool,
}

impl Default for SemevalColumns {
    fn default() -> Self {
        SemevalColumns {
            token: 1,
            annotations: 2,
            pos: Some(5),
            header: true,
        }
    }
}

const PROB_TOLERANCE: f64 = 1e-3 + 1e-9;

struct Pending {
    start_line: usize,
    tokens: Vec<String>,
    annotations: Vec<Vec<Bio>>,
    pos: Vec<String>,
}

impl Pending {
    fn new() -> Self {
        Pending {
            start_line: 0,
            tokens: Vec::new(),
            annotations: Vec::new(),
            pos: Vec::new(),
        }
    }

    fn flush(&mut self, out: &mut Vec<AnnotatedSentence>) -> Result<()> {
        if self.tokens.is_empty() {
            return Ok(());
        }
        let pos = if self.pos.is_empty() {
            None
        } else if self.pos.len() == self.tokens.len() {
            Some(std::mem::take(&mut self.pos))
        } else {
            return Err(Error::parse(self.start_line, "POS column present on only some tokens"));
        };
        let s = AnnotatedSentence {
            tokens: std::mem::take(&mut self.tokens),
            annotations: std::mem::take(&mut self.annotations),
            pos,
        };
        out.push(s);
        Ok(())
    }

    fn push(&mut self, line_no: usize, token: &str, ann: &str, pos: Option<&str>) -> Result<Vec<Bio>> {
        if token.is_empty() {
            return Err(Error::parse(line_no, "empty token"));
        }
        let tags = ann
            .split('|')
            .map(|a| {
                Bio::parse(a.trim()).ok_or_else(|| Error::parse(line_no, format!("malformed BIO symbol `{a}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = self.annotations.first() {
            if first.len() != tags.len() {
                return Err(Error::parse(
                    line_no,
                    format!("{} annotations, sentence started with {}", tags.len(), first.len()),
                ));
            }
        } else {
            self.start_line = line_no;
        }
        self.tokens.push(token.to_string());
        self.annotations.push(tags.clone());
        if let Some(p) = pos {
            self.pos.push(p.to_string());
        }
        Ok(tags)
    }
}

fn cross_check(line_no: usize, given: &str, tags: &[Bio]) -> Result<()> {
    let given: f64 = given
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad probability `{given}`")))?;
    let exact = tags.iter().filter(|b| b.is_emphasis()).count() as f64 / tags.len() as f64;
    if (given - exact).abs() > PROB_TOLERANCE {
        return Err(Error::parse(
            line_no,
            format!("probability column {given} disagrees with annotations ({exact:.4})"),
        ));
    }
    Ok(())
}

/// Parses the native format: `token TAB ann|ann|... [TAB prob [TAB pos]]`,
/// sentences separated by blank lines.
pub fn parse_tsv(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    let mut cur = Pending::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            cur.flush(&mut out)?;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 4 {
            return Err(Error::parse(line_no, format!("expected 2-4 tab-separated columns, got {}", cols.len())));
        }
        let pos = cols.get(3).map(|p| p.trim()).filter(|p| !p.is_empty());
        if pos.is_none() && !cur.pos.is_empty() {
            return Err(Error::parse(line_no, "POS column missing on this token"));
        }
        let tags = cur.push(line_no, cols[0], cols[1], pos)?;
        if let Some(p) = cols.get(2).filter(|p| !p.trim().is_empty()) {
            cross_check(line_no, p, &tags)?;
        }
    }
    cur.flush(&mut out)?;
    Ok(out)
}

/// Parses a SemEval-style release according to `cols`.
pub fn parse_semeval(text: &str, cols: &SemevalColumns) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    let mut cur = Pending::new();
    let need = cols.token.max(cols.annotations).max(cols.pos.unwrap_or(0)) + 1;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if i == 0 && cols.header {
            continue;
        }
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            cur.flush(&mut out)?;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < need {
            return Err(Error::parse(line_no, format!("expected at least {need} columns, got {}", fields.len())));
        }
        let pos = cols.pos.map(|c| fields[c].trim());
        cur.push(line_no, fields[cols.token].trim(), fields[cols.annotations], pos)?;
    }
    cur.flush(&mut out)?;
    Ok(out)
}

pub fn parse_dataset(path: impl AsRef<Path>, format: &DatasetFormat) -> Result<Vec<AnnotatedSentence>> {
    let text = fs::read_to_string(path)?;
    match format {
        DatasetFormat::EmpliteTsv => parse_tsv(&text),
        DatasetFormat::Semeval(cols) => parse_semeval(&text, cols),
    }
}

/// Serializes to the native format with the probability column (4 decimals)
/// and, when present, the POS column.
pub fn write_tsv(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for (si, s) in sentences.iter().enumerate() {
        if si > 0 {
            out.push('\n');
        }
        let probs = s.probabilities();
        for (i, tok) in s.tokens.iter().enumerate() {
            let ann: Vec<String> = s.annotations[i].iter().map(|b| b.as_char().to_string()).collect();
            out.push_str(&format!("{tok}\t{}\t{:.4}", ann.join("|"), probs[i].value()));
            if let Some(p) = &s.pos {
                out.push('\t');
                out.push_str(&p[i]);
            }
            out.push('\n');
        }
    }
    out
}

/// Splits free text on whitespace, then peels leading and trailing
/// punctuation into separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let Some(first) = chars.iter().position(|c| c.is_alphanumeric()) else {
            out.push(chunk.to_string());
            continue;
        };
        let last = chars.iter().rposition(|c| c.is_alphanumeric()).unwrap();
        if first > 0 {
            out.push(chars[..first].iter().collect());
        }
        out.push(chars[first..=last].iter().collect());
        if last + 1 < chars.len() {
            out.push(chars[last + 1..].iter().collect());
        }
    }
    out
}

/// Word, character, and POS symbol tables. Id 0 is `<PAD>`, id 1 `<UNK>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<String>,
    pos: Vec<String>,
    word_ids: HashMap<String, usize>,
    char_ids: HashMap<char, usize>,
    pos_ids: HashMap<String, usize>,
}

fn ranked<K: Ord + Clone + std::hash::Hash + Eq>(counts: HashMap<K, usize>) -> Vec<K> {
    let mut items: Vec<(K, usize)> = counts.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.into_iter().map(|(k, _)| k).collect()
}

fn with_reserved(symbols: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = vec![PAD.to_string(), UNK.to_string()];
    out.extend(symbols);
    out
}

/// Word-table key for a token.
pub fn word_key(token: &str) -> String {
    token.to_lowercase()
}

impl Vocabulary {
    /// Builds the tables from training data. Words are lowercased; characters
    /// keep their casing. The POS table is the fixed tag set.
    pub fn build(train: &[AnnotatedSentence]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("cannot build a vocabulary from no sentences".into()));
        }
        let mut wc: HashMap<String, usize> = HashMap::new();
        let mut cc: HashMap<char, usize> = HashMap::new();
        for s in train {
            for t in &s.tokens {
                *wc.entry(word_key(t)).or_default() += 1;
                for c in t.chars().take(MAX_WORD_LEN) {
                    *cc.entry(c).or_default() += 1;
                }
            }
        }
        let words = with_reserved(ranked(wc));
        let chars = with_reserved(ranked(cc).into_iter().map(String::from));
        let pos = with_reserved(PosTag::ALL.iter().map(|t| t.as_str().to_string()));
        Self::from_symbols(words, chars, pos)
    }

    /// Rebuilds lookups from id-ordered symbol lists (each starting with the
    /// two reserved symbols).
    pub fn from_symbols(words: Vec<String>, chars: Vec<String>, pos: Vec<String>) -> Result<Self> {
        for (name, list) in [("word", &words), ("char", &chars), ("pos", &pos)] {
            if list.len() < 2 || list[0] != PAD || list[1] != UNK {
                return Err(Error::Integrity(format!("{name} table lacks reserved symbols")));
            }
        }
        let index = |list: &[String]| -> Result<HashMap<String, usize>> {
            let mut m = HashMap::with_capacity(list.len());
            for (i, s) in list.iter().enumerate().skip(2) {
                if m.insert(s.clone(), i).is_some() {
                    return Err(Error::Integrity(format!("duplicate symbol `{s}`")));
                }
            }
            Ok(m)
        };
        let word_ids = index(&words)?;
        let pos_ids = index(&pos)?;
        let mut char_ids = HashMap::with_capacity(chars.len());
        for (i, s) in chars.iter().enumerate().skip(2) {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => {
                    if char_ids.insert(c, i).is_some() {
                        return Err(Error::Integrity(format!("duplicate char `{c}`")));
                    }
                }
                _ => return Err(Error::Integrity(format!("char symbol `{s}` is not one character"))),
            }
        }
        Ok(Vocabulary {
            words,
            chars,
            pos,
            word_ids,
            char_ids,
            pos_ids,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[String] {
        &self.chars
    }

    pub fn pos_tags(&self) -> &[String] {
        &self.pos
    }

    /// Number of real words, excluding the reserved symbols.
    pub fn word_count(&self) -> usize {
        self.words.len() - 2
    }

    pub fn word_id(&self, token: &str) -> usize {
        self.word_ids.get(&word_key(token)).copied().unwrap_or(UNK_ID)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_ids.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn pos_id(&self, tag: &str) -> usize {
        self.pos_ids.get(tag).copied().unwrap_or(UNK_ID)
    }
}

/// Reads GloVe text, keeping vectors for `wanted` words (all when `None`).
/// Every line's dimension is validated.
pub fn read_glove(reader: impl Read, dim: usize, wanted: Option<&HashSet<String>>) -> Result<HashMap<String, Vec<f32>>> {
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.trim_end().split(' ');
        let word = parts.next().unwrap_or_default();
        let keep = wanted.is_none_or(|w| w.contains(word));
        if !keep {
            let n = parts.count();
            if n != dim {
                return Err(Error::parse(line_no, format!("GloVe vector has {n} values, expected {dim}")));
            }
            continue;
        }
        let values = parts
            .map(|v| v.parse::<f32>().map_err(|_| Error::parse(line_no, format!("bad GloVe value `{v}`"))))
            .collect::<Result<Vec<f32>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                line_no,
                format!("GloVe vector has {} values, expected {dim}", values.len()),
            ));
        }
        out.entry(word.to_string()).or_insert(values);
    }
    Ok(out)
}

pub const GLOVE_OOV_LIMIT: f64 = 0.25;

/// Word table aligned with `vocab`: GloVe rows where available, seeded
/// uniform(−0.25, 0.25) rows otherwise, zero `<PAD>`.
#[derive(Clone, Debug)]
pub struct GloveSubset {
    pub table: EmbeddingTable<f32>,
    /// Vocabulary words found in GloVe, in vocabulary id order.
    pub hits: Vec<(String, Vec<f32>)>,
}

impl GloveSubset {
    pub fn from_vectors(vectors: &HashMap<String, Vec<f32>>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, "glove-oov");
        let mut table = EmbeddingTable::uniform(vocab.words().len(), dim, GLOVE_OOV_LIMIT, PAD_ID, true, &mut rng);
        let mut hits = Vec::new();
        for (id, w) in vocab.words().iter().enumerate().skip(2) {
            if let Some(v) = vectors.get(w) {
                if v.len() != dim {
                    return Err(Error::Config(format!("GloVe vector for `{w}` has dim {}", v.len())));
                }
                table.table.values_mut()[id * dim..(id + 1) * dim].copy_from_slice(v);
                hits.push((w.clone(), v.clone()));
            }
        }
        Ok(GloveSubset { table, hits })
    }

    /// Streams a GloVe file, keeping only vocabulary words.
    pub fn from_file(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        let wanted: HashSet<String> = vocab.words().iter().skip(2).cloned().collect();
        let vectors = read_glove(fs::File::open(path)?, dim, Some(&wanted))?;
        Self::from_vectors(&vectors, vocab, dim, seed)
    }

    /// GloVe-format text of the hits, values in shortest round-trip form.
    pub fn to_glove_text(&self) -> String {
        let mut out = String::new();
        for (w, v) in &self.hits {
            out.push_str(w);
            for x in v {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn hit_rate(&self, vocab: &Vocabulary) -> f64 {
        self.hits.len() as f64 / vocab.word_count().max(1) as f64
    }
}

/// Padded, id-encoded mini-batch. All `[B×T]` arrays are batch-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub batch: usize,
    pub t_max: usize,
    pub word_ids: Vec<usize>,
    /// `[B×T×MAX_WORD_LEN]`
    pub char_ids: Vec<usize>,
    pub pos_ids: Vec<usize>,
    pub labels: Vec<f32>,
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
    /// Index of each row's sentence in the source list.
    pub source: Vec<usize>,
}

impl Batch {
    pub fn real_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Encodes token sequences with optional labels. POS tags come from
    /// `pos[b]` when given, otherwise from the builtin tagger.
    pub fn encode(
        vocab: &Vocabulary,
        tokens: &[&[String]],
        pos: &[Option<&[String]>],
        labels: Option<&[Vec<u8>]>,
        source: Vec<usize>,
    ) -> Result<Batch> {
        let b = tokens.len();
        if b == 0 {
            return Err(Error::DegenerateInput("empty batch".into()));
        }
        let lengths: Vec<usize> = tokens.iter().map(|t| t.len()).collect();
        if lengths.contains(&0) {
            return Err(Error::DegenerateInput("empty sentence in batch".into()));
        }
        let t_max = *lengths.iter().max().unwrap();
        let mut out = Batch {
            batch: b,
            t_max,
            word_ids: vec![PAD_ID; b * t_max],
            char_ids: vec![PAD_ID; b * t_max * MAX_WORD_LEN],
            pos_ids: vec![PAD_ID; b * t_max],
            labels: vec![0.0; b * t_max],
            mask: vec![false; b * t_max],
            lengths,
            source,
        };
        for (bi, toks) in tokens.iter().enumerate() {
            let tags: Vec<String> = match pos.get(bi).copied().flatten() {
                Some(p) => p.to_vec(),
                None => tag_builtin(toks).iter().map(|t| t.as_str().to_string()).collect(),
            };
            for (t, tok) in toks.iter().enumerate() {
                let cell = bi * t_max + t;
                out.word_ids[cell] = vocab.word_id(tok);
                out.pos_ids[cell] = vocab.pos_id(&tags[t]);
                out.mask[cell] = true;
                for (ci, c) in tok.chars().take(MAX_WORD_LEN).enumerate() {
                    out.char_ids[cell * MAX_WORD_LEN + ci] = vocab.char_id(c);
                }
                if let Some(l) = labels {
                    out.labels[cell] = f32::from(l[bi][t]);
                }
            }
        }
        Ok(out)
    }

    /// Encodes annotated sentences with labels at `threshold`.
    pub fn from_sentences(
        vocab: &Vocabulary,
        sentences: &[&AnnotatedSentence],
        threshold: f64,
        source: Vec<usize>,
    ) -> Result<Batch> {
        let toks: Vec<&[String]> = sentences.iter().map(|s| s.tokens.as_slice()).collect();
        let pos: Vec<Option<&[String]>> = sentences.iter().map(|s| s.pos.as_deref()).collect();
        let labels: Vec<Vec<u8>> = sentences.iter().map(|s| s.labels(threshold)).collect();
        Self::encode(vocab, &toks, &pos, Some(&labels), source)
    }
}

/// Chunks `data` into batches of `batch_size`, shuffled by `rng` when given.
pub fn make_batches(
    data: &[AnnotatedSentence],
    vocab: &Vocabulary,
    batch_size: usize,
    threshold: f64,
    rng: Option<&mut Rng>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    check_threshold(threshold)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    order
        .chunks(batch_size)
        .map(|idx| {
            let sents: Vec<&AnnotatedSentence> = idx.iter().map(|&i| &data[i]).collect();
            Batch::from_sentences(vocab, &sents, threshold, idx.to_vec())
        })
        .collect()
}

/// Sentence-level helper for tests and the demo: builds a sentence with
/// `k` annotators where token `i` receives `counts[i]` emphasis marks.
pub fn sentence_from_counts(tokens: &[&str], counts: &[u32], k: u32) -> Result<AnnotatedSentence> {
    if counts.iter().any(|&c| c > k) {
        return Err(Error::Config("count exceeds annotator total".into()));
    }
    let annotations = counts
        .iter()
        .map(|&c| (0..k).map(|j| if j < c { Bio::B } else { Bio::O }).collect())
        .collect();
    AnnotatedSentence::new(tokens.iter().map(|t| t.to_string()).collect(), annotations, None)
}

/// Word-table tensor for a vocabulary when no GloVe file is used.
pub fn random_word_table(vocab: &Vocabulary, dim: usize, limit: f64, rng: &mut Rng) -> Tensor<f32> {
    EmbeddingTable::<f32>::uniform(vocab.words().len(), dim, limit, PAD_ID, true, rng).table
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDNESS: &str = "\
Kindness\tB|B|B|O|O|O|B|B|B\t0.666
is\tO|O|O|O|O|O|I|I|O\t0.222
like\tO|O|O|O|O|O|I|I|O\t0.222
snow\tO|O|B|O|O|O|I|I|O\t0.333
";

    #[test]
    fn kindness_example_probabilities_and_labels() {
        let data = parse_tsv(KINDNESS).unwrap();
        assert_eq!(data.len(), 1);
        let s = &data[0];
        assert_eq!(s.annotators(), 9);
        let p = s.probabilities();
        assert_eq!(p[0], Ratio { num: 6, den: 9 });
        assert_eq!(p[1], Ratio { num: 2, den: 9 });
        assert_eq!(p[3], Ratio { num: 3, den: 9 });
        assert_eq!(s.labels(0.4), vec![1, 0, 0, 0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "a\tB|O\nb\tX|O\n";
        assert!(matches!(parse_tsv(bad), Err(Error::Parse { line: 2, .. })));
        let uneven = "a\tB|O\nb\tO\n";
        assert!(matches!(parse_tsv(uneven), Err(Error::Parse { line: 2, .. })));
        let wrong_prob = "a\tB|O\t0.9\n";
        assert!(matches!(parse_tsv(wrong_prob), Err(Error::Parse { line: 1, .. })));
        assert!(parse_tsv("").unwrap().is_empty());
    }

    #[test]
    fn round_trip_preserves_sentences() {
        let text = format!("{KINDNESS}\nHello\tB|O\t\tUH\nworld\tO|O\t\tNN\n");
        let data = parse_tsv(&text).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(parse_tsv(&write_tsv(&data)).unwrap(), data);
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        assert_eq!(threshold_labels(&[0.4, 0.39999], 0.4), vec![1, 0]);
        assert_eq!(threshold_labels(&[0.0, 0.1], 0.0), vec![1, 1]);
    }

    #[test]
    fn semeval_adapter_maps_columns() {
        let text = "Word_ID\tWord\tBio\tFreq\tProb\tPOS\nS1_1\tKindness\tB|B|O\t2|0|1\t0.667\tNN\nS1_2\tis\tO|O|O\t0|0|3\t0.0\tVBZ\n\nS2_1\tHi\tB|I|B\t2|1|0\t1.0\tUH\n";
        let data = parse_semeval(text, &SemevalColumns::default()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].tokens, vec!["Kindness", "is"]);
        assert_eq!(data[0].pos.as_ref().unwrap()[1], "VBZ");
        assert_eq!(data[1].probability_values(), vec![1.0]);
    }

    #[test]
    fn vocabulary_order_and_oov() {
        let data = parse_tsv("the\tO\ncat\tB\nthe\tO\n\nThe\tO\nsnow\tB\n").unwrap();
        let v = Vocabulary::build(&data).unwrap();
        assert_eq!(&v.words()[..5], &["<PAD>", "<UNK>", "the", "cat", "snow"]);
        assert_eq!(v.word_id("SNOW"), 4);
        assert_eq!(v.word_id("zyzzyva"), UNK_ID);
        assert_eq!(v.char_id('T'), v.chars().iter().position(|c| c == "T").unwrap());
        assert_eq!(v.pos_tags().len(), 28);
    }

    #[test]
    fn batches_pad_and_mask() {
        let mut text = String::new();
        for i in 0..33 {
            text.push_str(&format!("w{i}\tB\n"));
            if i % 2 == 0 {
                text.push_str("and\tO\n");
            }
            text.push('\n');
        }
        let data = parse_tsv(&text).unwrap();
        let v = Vocabulary::build(&data).unwrap();
        let batches = make_batches(&data, &v, 32, 0.4, None).unwrap();
        assert_eq!(batches.iter().map(|b| b.batch).collect::<Vec<_>>(), vec![32, 1]);
        let b = &batches[0];
        assert_eq!(b.mask.iter().filter(|&&m| m).count(), b.real_tokens());
        for (i, &m) in b.mask.iter().enumerate() {
            if !m {
                assert_eq!(b.word_ids[i], PAD_ID);
                assert_eq!(b.labels[i], 0.0);
            }
        }
    }

    #[test]
    fn long_words_truncate_chars() {
        let data = parse_tsv("abcdefghijklmnopqrstuvwxyz\tB\n").unwrap();
        let v = Vocabulary::build(&data).unwrap();
        assert_eq!(v.chars().len(), 2 + 16);
        let b = make_batches(&data, &v, 4, 0.4, None).unwrap();
        assert!(b[0].char_ids.iter().all(|&c| c != PAD_ID));
    }

    #[test]
    fn tokenizer_peels_punctuation() {
        assert_eq!(
            tokenize("Traveling – It leaves you speechless..."),
            vec!["Traveling", "–", "It", "leaves", "you", "speechless", "..."]
        );
        assert_eq!(tokenize("\"Hi!\""), vec!["\"", "Hi", "!\""]);
    }

    #[test]
    fn glove_subset_copies_and_seeds() {
        let data = parse_tsv("snow\tB\nzyzzyva\tO\n").unwrap();
        let v = Vocabulary::build(&data).unwrap();
        let glove = "snow 0.5 -0.25 1\nrain 1 2 3\n";
        let vecs = read_glove(glove.as_bytes(), 3, None).unwrap();
        let a = GloveSubset::from_vectors(&vecs, &v, 3, 7).unwrap();
        let b = GloveSubset::from_vectors(&vecs, &v, 3, 7).unwrap();
        let sid = v.word_id("snow");
        assert_eq!(&a.table.table.values()[sid * 3..sid * 3 + 3], &[0.5, -0.25, 1.0]);
        assert_eq!(a.table.table.values(), b.table.table.values());
        assert!(a.table.table.values()[..3].iter().all(|&x| x == 0.0));
        assert_eq!(a.to_glove_text(), "snow 0.5 -0.25 1\n");
        assert!(matches!(read_glove("x 1 2\n".as_bytes(), 3, None), Err(Error::Parse { line: 1, .. })));
    }
}
