//! Top-m overlap scoring.
//!
//! Both sides rank tokens by descending probability with ties going to the
//! lower index. When a sentence has fewer than `m` tokens, every token is
//! selected and the overlap is divided by the sentence length instead of
//! `m`, so a perfect prediction always scores 1.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ground truth and prediction for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalInstance {
    pub truth: Vec<f64>,
    pub pred: Vec<f64>,
}

impl EvalInstance {
    pub fn new(truth: Vec<f64>, pred: Vec<f64>) -> Result<Self> {
        if truth.is_empty() || truth.len() != pred.len() {
            return Err(Error::Alignment(format!(
                "{} truth values vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        Ok(EvalInstance { truth, pred })
    }
}

/// Indices of the `m` largest entries, in rank order.
pub fn top_m(probs: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// `top_m` as a membership mask over token positions.
pub fn top_m_set(probs: &[f64], m: usize) -> Vec<bool> {
    let mut set = vec![false; probs.len()];
    for i in top_m(probs, m) {
        set[i] = true;
    }
    set
}

fn instance_score(inst: &EvalInstance, m: usize) -> f64 {
    let s = top_m_set(&inst.truth, m);
    let p = top_m_set(&inst.pred, m);
    let hits = s.iter().zip(&p).filter(|(a, b)| **a && **b).count();
    hits as f64 / m.min(inst.truth.len()) as f64
}

/// Mean top-m overlap across instances.
pub fn match_m(instances: &[EvalInstance], m: usize) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::DegenerateInput("no instances to score".into()));
    }
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let total: f64 = instances.iter().map(|i| instance_score(i, m)).sum();
    Ok(total / instances.len() as f64)
}

/// Match_1..Match_4 and their mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub matches: [f64; 4],
    pub average: f64,
}

impl Scores {
    pub fn from_matches(matches: [f64; 4]) -> Self {
        Scores {
            matches,
            average: matches.iter().sum::<f64>() / 4.0,
        }
    }
}

pub fn evaluate(instances: &[EvalInstance]) -> Result<Scores> {
    let mut matches = [0.0; 4];
    for (m, slot) in matches.iter_mut().enumerate() {
        *slot = match_m(instances, m + 1)?;
    }
    Ok(Scores::from_matches(matches))
}

pub fn average_score(instances: &[EvalInstance]) -> Result<f64> {
    Ok(evaluate(instances)?.average)
}

/// A sentence of a prediction file.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedSentence {
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
}

/// Parses `token TAB prob` lines, blank-line separated.
pub fn parse_predictions(text: &str) -> Result<Vec<PredictedSentence>> {
    let mut out = Vec::new();
    let mut cur = PredictedSentence {
        tokens: Vec::new(),
        probs: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !cur.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut cur,
                    PredictedSentence {
                        tokens: Vec::new(),
                        probs: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let (tok, p) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected `token<TAB>prob`"))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad probability `{p}`")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parse(i + 1, format!("probability {p} outside [0, 1]")));
        }
        cur.tokens.push(tok.to_string());
        cur.probs.push(p);
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictedSentence>> {
    parse_predictions(&fs::read_to_string(path)?)
}

pub fn write_predictions(sentences: &[PredictedSentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (t, p) in s.tokens.iter().zip(&s.probs) {
            out.push_str(&format!("{t}\t{p}\n"));
        }
    }
    out
}

/// Pairs ground-truth probabilities with predictions sentence by sentence,
/// requiring identical token counts.
pub fn align(truth: &[Vec<f64>], preds: &[PredictedSentence]) -> Result<Vec<EvalInstance>> {
    if truth.len() != preds.len() {
        return Err(Error::Alignment(format!(
            "{} reference sentences vs {} predicted",
            truth.len(),
            preds.len()
        )));
    }
    truth
        .iter()
        .zip(preds)
        .enumerate()
        .map(|(i, (t, p))| {
            EvalInstance::new(t.clone(), p.probs.clone())
                .map_err(|_| Error::Alignment(format!("sentence {}: {} vs {} tokens", i + 1, t.len(), p.probs.len())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(t: &[f64], p: &[f64]) -> EvalInstance {
        EvalInstance::new(t.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn top_m_ordering_ties_and_saturation() {
        assert_eq!(top_m_set(&[0.9, 0.1, 0.5], 2), vec![true, false, true]);
        assert_eq!(top_m_set(&[0.3, 0.3, 0.3], 2), vec![true, true, false]);
        assert_eq!(top_m_set(&[0.3, 0.7], 4), vec![true, true]);
    }

    #[test]
    fn hand_enumerated_overlap() {
        let i = inst(&[0.9, 0.1, 0.5, 0.3], &[0.2, 0.8, 0.6, 0.1]);
        assert_eq!(match_m(&[i], 2).unwrap(), 0.5);
        let d = inst(&[0.9, 0.1], &[0.1, 0.9]);
        assert_eq!(match_m(&[d], 1).unwrap(), 0.0);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let i = inst(&[0.2, 0.9], &[0.2, 0.9]);
        assert_eq!(evaluate(&[i]).unwrap().average, 1.0);
        assert!(match_m(&[], 1).is_err());
    }

    #[test]
    fn prediction_file_round_trip() {
        let s = vec![
            PredictedSentence {
                tokens: vec!["a b".into(), "c".into()],
                probs: vec![0.25, 1.0],
            },
            PredictedSentence {
                tokens: vec!["d".into()],
                probs: vec![0.0],
            },
        ];
        assert_eq!(parse_predictions(&write_predictions(&s)).unwrap(), s);
        assert!(align(&[vec![0.1]], &s).is_err());
        assert!(matches!(
            align(&[vec![0.1], vec![0.2, 0.3]], &s),
            Err(Error::Alignment(_))
        ));
    }
}
