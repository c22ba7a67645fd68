//! Synthetic emphasis corpus and matching word vectors.
//!
//! Stands in for a real annotated corpus when none is available. A lexicon
//! of pseudo-words is drawn per word class (function words, nouns, verbs,
//! adjectives, adverbs, names, numbers, punctuation); every word gets a
//! latent salience. Sentences are sampled from class templates and labelled
//! by simulated annotators who mark the tokens they find most salient.
//! The word vectors place each word near its class centroid, shifted along
//! one direction by its salience, plus noise, and are printed with five
//! decimals like common pretrained vector files.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{word_key, AnnotatedSentence, Bio};
use crate::error::{Error, Result};
use crate::model::WordVectors;
use crate::rng::{rng_for, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Function,
    Noun,
    Verb,
    Adj,
    Adv,
    Name,
    Number,
    Punct,
}

const CONTENT: [Kind; 5] = [Kind::Noun, Kind::Verb, Kind::Adj, Kind::Adv, Kind::Name];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthWord {
    /// Surface form (names capitalized, everything else lowercase).
    pub form: String,
    pub kind: Kind,
    pub salience: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Distinct lowercased words in the training split.
    pub vocab_size: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub annotators: usize,
    /// Share of content words that receive a vector.
    pub vector_coverage: f64,
    /// Extra vector-file words outside the lexicon.
    pub distractors: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 4331,
            train: 2742,
            dev: 392,
            test: 784,
            annotators: 9,
            vector_coverage: 0.97,
            distractors: 5000,
            dim: 50,
            seed: 2020,
        }
    }
}

impl SynthConfig {
    /// A small corpus for quick tests and demos.
    pub fn small(seed: u64) -> Self {
        SynthConfig {
            vocab_size: 400,
            train: 240,
            dev: 60,
            test: 80,
            distractors: 200,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub train: Vec<AnnotatedSentence>,
    pub dev: Vec<AnnotatedSentence>,
    pub test: Vec<AnnotatedSentence>,
    pub lexicon: Vec<SynthWord>,
    /// Vector file contents, one `word v1 ... vD` line per word.
    pub vectors_text: String,
    pub dim: usize,
}

impl SynthCorpus {
    pub fn vectors(&self) -> Result<WordVectors> {
        crate::corpus::read_glove(self.vectors_text.as_bytes(), self.dim, None)
    }
}

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "of", "in", "on", "at", "to", "for", "with", "and", "or", "but", "is", "are", "was",
    "were", "be", "it", "you", "i", "we", "they", "he", "she", "this", "that", "my", "your", "our", "their",
    "not", "so", "as", "if", "by", "from", "up", "out", "all", "just", "very", "can", "will", "do", "have",
    "has", "me", "us", "them", "its", "what", "when", "who", "how", "than", "then", "there", "here", "no",
    "into", "about", "over", "after", "before", "because", "every", "some", "more", "most", "only", "never",
    "always", "don’t", "can’t", "it’s", "i’m", "you’re", "let’s", "would", "could", "should", "must", "may",
    "him", "her", "his", "too", "also", "yet", "nor", "both", "each", "own", "same", "such", "through",
    "until", "while", "where", "why", "which", "whom", "these", "those", "am", "been", "being", "did", "does",
];

const NUMBERS: &[&str] = &[
    "1", "2", "3", "5", "7", "10", "24/7", "100", "1000", "2020", "50%", "$100", "#1", "365", "99", "4th",
    "30", "12", "8", "6", "9", "0",
];

const PUNCT: &[&str] = &[
    "!", ".", "...", ",", "?", "–", ":", ";", "&", "(", ")", "“", "”", "-", "@", "'", "\"", "*", "…",
];

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "qu", "r", "s", "t", "v", "w", "x", "y", "z",
    "br", "cl", "dr", "fl", "gr", "pl", "st", "tr", "sh", "ch", "th", "sp", "bl", "cr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "oo", "ou", "y"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "m", "st", "nd", "x", "k", "t", "z"];

fn suffixes(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Noun => &["", "", "ness", "tion", "ment", "er", "ity", "s"],
        Kind::Verb => &["", "ing", "ed", "es", "ize"],
        Kind::Adj => &["ous", "ful", "ive", "less", "al", "ic", "able"],
        Kind::Adv => &["ly"],
        _ => &[""],
    }
}

fn base_salience(kind: Kind) -> f64 {
    match kind {
        Kind::Adj => 0.9,
        Kind::Name => 0.7,
        Kind::Noun => 0.6,
        Kind::Verb => 0.35,
        Kind::Adv => 0.05,
        Kind::Number => 0.2,
        Kind::Function => -1.3,
        Kind::Punct => -2.5,
    }
}

fn pick<'a>(rng: &mut Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn pseudo_word(kind: Kind, rng: &mut Rng) -> String {
    let syllables = rng.gen_range(1..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(pick(rng, ONSETS));
        w.push_str(pick(rng, VOWELS));
    }
    w.push_str(pick(rng, CODAS));
    w.push_str(pick(rng, suffixes(kind)));
    if kind == Kind::Name {
        let mut c = w.chars();
        let first = c.next().unwrap().to_uppercase().collect::<String>();
        w = first + c.as_str();
    }
    w
}

fn normal(rng: &mut Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Lexicon {
    words: Vec<SynthWord>,
    by_kind: HashMap<Kind, Vec<usize>>,
    /// Per-kind Zipf cumulative weights aligned with `by_kind`.
    cdf: HashMap<Kind, Vec<f64>>,
}

impl Lexicon {
    fn build(cfg: &SynthConfig, rng: &mut Rng, taken: &mut HashSet<String>) -> Result<Self> {
        let fixed = FUNCTION_WORDS.len() + NUMBERS.len() + PUNCT.len();
        if cfg.vocab_size < fixed + 50 {
            return Err(Error::Config(format!("vocabulary must hold at least {} words", fixed + 50)));
        }
        let mut words = Vec::new();
        let mut push_fixed = |list: &[&str], kind: Kind, rng: &mut Rng, words: &mut Vec<SynthWord>| {
            for w in list {
                taken.insert(word_key(w));
                words.push(SynthWord {
                    form: w.to_string(),
                    kind,
                    salience: base_salience(kind) + 0.3 * normal(rng),
                });
            }
        };
        push_fixed(FUNCTION_WORDS, Kind::Function, rng, &mut words);
        push_fixed(NUMBERS, Kind::Number, rng, &mut words);
        push_fixed(PUNCT, Kind::Punct, rng, &mut words);
        let content = cfg.vocab_size - fixed;
        let shares = [0.38, 0.22, 0.2, 0.08, 0.12];
        for (i, &kind) in CONTENT.iter().enumerate() {
            let n = if i + 1 == CONTENT.len() {
                cfg.vocab_size - words.len()
            } else {
                (content as f64 * shares[i]).round() as usize
            };
            let mut made = 0;
            while made < n {
                let form = pseudo_word(kind, rng);
                if taken.insert(word_key(&form)) {
                    words.push(SynthWord {
                        form,
                        kind,
                        salience: base_salience(kind) + 0.6 * normal(rng),
                    });
                    made += 1;
                }
            }
        }
        let mut by_kind: HashMap<Kind, Vec<usize>> = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            by_kind.entry(w.kind).or_default().push(i);
        }
        let cdf = by_kind
            .iter()
            .map(|(&k, ids)| {
                let mut acc = 0.0;
                let c = (0..ids.len())
                    .map(|r| {
                        acc += 1.0 / (r as f64 + 2.0).powf(0.9);
                        acc
                    })
                    .collect();
                (k, c)
            })
            .collect();
        Ok(Lexicon { words, by_kind, cdf })
    }

    fn sample(&self, kind: Kind, rng: &mut Rng) -> usize {
        let cdf = &self.cdf[&kind];
        let x = rng.gen::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&c| c < x).min(cdf.len() - 1);
        self.by_kind[&kind][i]
    }
}

fn sample_kind(rng: &mut Rng) -> Kind {
    let x: f64 = rng.gen();
    match x {
        x if x < 0.44 => Kind::Function,
        x if x < 0.64 => Kind::Noun,
        x if x < 0.75 => Kind::Verb,
        x if x < 0.86 => Kind::Adj,
        x if x < 0.91 => Kind::Adv,
        x if x < 0.96 => Kind::Name,
        _ => Kind::Number,
    }
}

/// Word indices of one sentence (before casing and annotation).
fn sample_sentence(lex: &Lexicon, rng: &mut Rng) -> Vec<usize> {
    let len = [3, 4, 5, 5, 6, 6, 7, 7, 7, 8, 8, 9, 9, 10, 11, 12][rng.gen_range(0..16)];
    let mut out: Vec<usize> = (0..len).map(|_| lex.sample(sample_kind(rng), rng)).collect();
    if rng.gen_bool(0.12) {
        let at = rng.gen_range(1..out.len());
        out.insert(at, lex.sample(Kind::Punct, rng));
    }
    if rng.gen_bool(0.35) {
        out.push(lex.sample(Kind::Punct, rng));
    }
    out
}

fn surface(lex: &Lexicon, ids: &[usize], rng: &mut Rng) -> Vec<String> {
    ids.iter()
        .enumerate()
        .map(|(i, &id)| {
            let w = &lex.words[id];
            if CONTENT.contains(&w.kind) && rng.gen_bool(0.03) {
                return w.form.to_uppercase();
            }
            if i == 0 {
                let mut c = w.form.chars();
                let first = c.next().unwrap();
                return first.to_uppercase().collect::<String>() + c.as_str();
            }
            w.form.clone()
        })
        .collect()
}

/// Simulated annotators: each marks its highest-scoring token, sometimes
/// extends it into the next content token, sometimes adds a second span.
#[allow(clippy::needless_range_loop)]
fn annotate(saliences: &[f64], contentish: &[bool], annotators: usize, rng: &mut Rng) -> Vec<Vec<Bio>> {
    let n = saliences.len();
    let ctx: Vec<f64> = (0..n).map(|_| 0.35 * normal(rng)).collect();
    let mut ann = vec![vec![Bio::O; annotators]; n];
    for k in 0..annotators {
        let mut scored: Vec<(f64, usize)> = (0..n)
            .map(|i| (saliences[i] + ctx[i] + 0.55 * normal(rng), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let spans = if n > 3 && rng.gen_bool(0.4) { 2 } else { 1 };
        for &(_, j) in scored.iter().take(spans) {
            ann[j][k] = Bio::B;
            if j + 1 < n && contentish[j + 1] && rng.gen_bool(0.3) {
                ann[j + 1][k] = Bio::I;
            }
        }
    }
    ann
}

fn finish_sentence(lex: &Lexicon, ids: &[usize], extra: &[(usize, String, f64)], annotators: usize, rng: &mut Rng) -> AnnotatedSentence {
    let mut tokens = surface(lex, ids, rng);
    let mut sal: Vec<f64> = ids.iter().map(|&i| lex.words[i].salience).collect();
    let mut contentish: Vec<bool> = ids.iter().map(|&i| CONTENT.contains(&lex.words[i].kind)).collect();
    for (pos, form, s) in extra {
        tokens[*pos] = form.clone();
        sal[*pos] = *s;
        contentish[*pos] = true;
    }
    let annotations = annotate(&sal, &contentish, annotators, rng);
    AnnotatedSentence {
        tokens,
        annotations,
        pos: None,
    }
}

fn vector_line(form: &str, v: &[f64]) -> String {
    let mut line = word_key(form);
    for x in v {
        let s = format!("{x:.5}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        line.push(' ');
        line.push_str(if s == "-0" || s.is_empty() { "0" } else { s });
    }
    line.push('\n');
    line
}

/// Generates the corpus. The training split contains every lexicon word,
/// so its vocabulary has exactly `vocab_size` entries.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.train == 0 || cfg.annotators == 0 || cfg.dim == 0 {
        return Err(Error::Config("synthetic corpus needs training sentences, annotators, and a dimension".into()));
    }
    let mut rng = rng_for(cfg.seed, "synth/lexicon");
    let mut taken = HashSet::new();
    let lex = Lexicon::build(cfg, &mut rng, &mut taken)?;

    let mut rng = rng_for(cfg.seed, "synth/sentences");
    let mut train_ids: Vec<Vec<usize>> = (0..cfg.train).map(|_| sample_sentence(&lex, &mut rng)).collect();
    let mut counts = vec![0usize; lex.words.len()];
    train_ids.iter().flatten().for_each(|&i| counts[i] += 1);
    let missing: Vec<usize> = (0..lex.words.len()).filter(|&i| counts[i] == 0).collect();
    let total_tokens: usize = train_ids.iter().map(Vec::len).sum();
    if missing.len() * 3 > total_tokens {
        return Err(Error::Config("too few training sentences for the requested vocabulary".into()));
    }
    for w in missing {
        loop {
            let s = rng.gen_range(0..train_ids.len());
            let t = rng.gen_range(0..train_ids[s].len());
            let old = train_ids[s][t];
            let same_group = lex.words[old].kind == lex.words[w].kind
                || (CONTENT.contains(&lex.words[old].kind) && CONTENT.contains(&lex.words[w].kind));
            if counts[old] > 1 && same_group {
                counts[old] -= 1;
                counts[w] += 1;
                train_ids[s][t] = w;
                break;
            }
        }
    }

    let mut rng = rng_for(cfg.seed, "synth/annotate");
    let train = train_ids
        .iter()
        .map(|ids| finish_sentence(&lex, ids, &[], cfg.annotators, &mut rng))
        .collect();
    // Held-out splits occasionally use words never seen in training.
    let held_out = |n: usize, rng: &mut Rng| -> Vec<AnnotatedSentence> {
        (0..n)
            .map(|_| {
                let ids = sample_sentence(&lex, rng);
                let mut extra = Vec::new();
                for (i, &id) in ids.iter().enumerate() {
                    let kind = lex.words[id].kind;
                    if i > 0 && CONTENT.contains(&kind) && rng.gen_bool(0.04) {
                        let form = loop {
                            let f = pseudo_word(kind, rng);
                            if !taken.contains(&word_key(&f)) {
                                break f;
                            }
                        };
                        extra.push((i, form, base_salience(kind) + 0.6 * normal(rng)));
                    }
                }
                finish_sentence(&lex, &ids, &extra, cfg.annotators, rng)
            })
            .collect()
    };
    let dev = held_out(cfg.dev, &mut rng);
    let test = held_out(cfg.test, &mut rng);

    let mut rng = rng_for(cfg.seed, "synth/vectors");
    let centroids: HashMap<Kind, Vec<f64>> = [
        Kind::Function,
        Kind::Noun,
        Kind::Verb,
        Kind::Adj,
        Kind::Adv,
        Kind::Name,
        Kind::Number,
        Kind::Punct,
    ]
    .into_iter()
    .map(|k| (k, (0..cfg.dim).map(|_| 0.3 * normal(&mut rng)).collect()))
    .collect();
    let axis: Vec<f64> = {
        let v: Vec<f64> = (0..cfg.dim).map(|_| normal(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    };
    let vector = |kind: Kind, salience: f64, rng: &mut Rng| -> Vec<f64> {
        (0..cfg.dim)
            .map(|d| centroids[&kind][d] + 0.9 * salience * axis[d] + 0.35 * normal(rng))
            .collect()
    };
    let mut lines = Vec::new();
    for w in &lex.words {
        let covered = !CONTENT.contains(&w.kind) || rng.gen_bool(cfg.vector_coverage);
        if covered {
            let v = vector(w.kind, w.salience, &mut rng);
            lines.push(vector_line(&w.form, &v));
        }
    }
    let mut made = 0;
    while made < cfg.distractors {
        let kind = *CONTENT.choose(&mut rng).unwrap();
        let form = pseudo_word(kind, &mut rng);
        if taken.insert(word_key(&form)) {
            let v = vector(kind, base_salience(kind) + 0.6 * normal(&mut rng), &mut rng);
            lines.push(vector_line(&form, &v));
            made += 1;
        }
    }
    lines.shuffle(&mut rng);

    Ok(SynthCorpus {
        train,
        dev,
        test,
        lexicon: lex.words,
        vectors_text: lines.concat(),
        dim: cfg.dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    #[test]
    fn small_corpus_hits_vocab_size_exactly() {
        let c = generate(&SynthConfig::small(1)).unwrap();
        let v = Vocabulary::build(&c.train).unwrap();
        assert_eq!(v.word_count(), 400);
        assert_eq!(c.train.len(), 240);
        assert!(c.train.iter().all(|s| s.annotators() == 9));
        let vecs = c.vectors().unwrap();
        assert!(vecs.values().all(|x| x.len() == 50));
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&SynthConfig::small(3)).unwrap();
        let b = generate(&SynthConfig::small(3)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.vectors_text, b.vectors_text);
    }
}
