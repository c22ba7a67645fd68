//! Training-set augmentation: sentence copies with a word dropped, words
//! dropped at random, one word uppercased, or the order reversed. Copies are
//! appended after the original data.

use rand::seq::index::sample;
use rand::Rng as _;

use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Drop exactly one uniformly chosen token.
    RemoveLe1,
    /// Drop each token with probability [`REMOVE_RATE`], at least one
    /// dropped and one kept.
    RemoveGe1,
    /// Uppercase one token whose casing actually changes.
    UppercaseWord,
    Reverse,
}

pub const REMOVE_RATE: f64 = 0.15;

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RemoveLe1,
        Strategy::RemoveGe1,
        Strategy::UppercaseWord,
        Strategy::Reverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::RemoveLe1 => "remove_le1",
            Strategy::RemoveGe1 => "remove_ge1",
            Strategy::UppercaseWord => "uppercase_word",
            Strategy::Reverse => "reverse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "remove_le1" => Ok(Strategy::RemoveLe1),
            "remove_ge1" => Ok(Strategy::RemoveGe1),
            "uppercase_word" | "uppercase" => Ok(Strategy::UppercaseWord),
            "reverse" => Ok(Strategy::Reverse),
            _ => Err(Error::Config(format!(
                "unknown augmentation `{s}` (expected remove_le1|remove_ge1|uppercase_word|reverse)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    pub strategy: Strategy,
    pub fraction: f64,
    pub seed: u64,
}

fn uppercase(s: &AnnotatedSentence, rng: &mut Rng) -> Option<AnnotatedSentence> {
    let candidates: Vec<usize> = (0..s.len())
        .filter(|&i| s.tokens[i].to_uppercase() != s.tokens[i])
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let i = candidates[rng.gen_range(0..candidates.len())];
    let mut out = s.clone();
    out.tokens[i] = out.tokens[i].to_uppercase();
    Some(out)
}

fn remove_random(s: &AnnotatedSentence, rng: &mut Rng) -> Option<AnnotatedSentence> {
    if s.len() < 2 {
        return None;
    }
    loop {
        let keep: Vec<bool> = (0..s.len()).map(|_| !rng.gen_bool(REMOVE_RATE)).collect();
        let kept = keep.iter().filter(|&&k| k).count();
        if kept >= 1 && kept < s.len() {
            return Some(s.retain_tokens(|i| keep[i]));
        }
    }
}

/// Applies `strategy` to one sentence; `None` when the copy is discarded.
pub fn augment_sentence(s: &AnnotatedSentence, strategy: Strategy, rng: &mut Rng) -> Option<AnnotatedSentence> {
    match strategy {
        Strategy::RemoveLe1 => {
            if s.len() < 2 {
                return None;
            }
            let drop = rng.gen_range(0..s.len());
            Some(s.retain_tokens(|i| i != drop))
        }
        Strategy::RemoveGe1 => remove_random(s, rng),
        Strategy::UppercaseWord => uppercase(s, rng),
        Strategy::Reverse => {
            let mut out = s.clone();
            out.tokens.reverse();
            out.annotations.reverse();
            if let Some(p) = out.pos.as_mut() {
                p.reverse();
            }
            Some(out)
        }
    }
}

/// Original data followed by one augmented copy of each of
/// ⌈fraction·N⌉ seeded-sampled sentences, in corpus order.
pub fn augment(train: &[AnnotatedSentence], spec: &AugmentSpec) -> Result<Vec<AnnotatedSentence>> {
    if !(0.0..=1.0).contains(&spec.fraction) {
        return Err(Error::Config(format!("augmentation fraction {} outside [0, 1]", spec.fraction)));
    }
    if train.is_empty() {
        return Err(Error::Config("nothing to augment".into()));
    }
    let n = train.len();
    let k = ((spec.fraction * n as f64).ceil() as usize).min(n);
    let mut rng = rng_for(spec.seed, &format!("augment/{}", spec.strategy.as_str()));
    let mut picked = sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    let mut out = train.to_vec();
    for i in picked {
        if let Some(a) = augment_sentence(&train[i], spec.strategy, &mut rng) {
            out.push(a);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sentence_from_counts;

    fn kindness() -> AnnotatedSentence {
        sentence_from_counts(&["Kindness", "is", "like", "snow"], &[6, 2, 2, 3], 9).unwrap()
    }

    #[test]
    fn reverse_pairs_labels() {
        let out = augment(
            &[kindness()],
            &AugmentSpec {
                strategy: Strategy::Reverse,
                fraction: 1.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(out[1].tokens, vec!["snow", "like", "is", "Kindness"]);
        assert_eq!(out[1].labels(0.4), vec![0, 0, 0, 1]);
    }

    #[test]
    fn fraction_zero_is_identity_and_bounds_checked() {
        let d = vec![kindness(); 3];
        let spec = |f| AugmentSpec {
            strategy: Strategy::RemoveLe1,
            fraction: f,
            seed: 3,
        };
        assert_eq!(augment(&d, &spec(0.0)).unwrap(), d);
        assert!(matches!(augment(&d, &spec(1.5)), Err(Error::Config(_))));
    }

    #[test]
    fn uppercase_skips_caseless_sentences() {
        let s = sentence_from_counts(&["HELLO", "123"], &[1, 0], 2).unwrap();
        let mut rng = rng_for(0, "t");
        assert!(augment_sentence(&s, Strategy::UppercaseWord, &mut rng).is_none());
    }
}
