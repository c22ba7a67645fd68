//! Browser bindings: annotation aggregation, top-m scoring, and a small
//! model trained in the page that renders emphasis heatmaps.

use wasm_bindgen::prelude::*;

use emplite::corpus::{check_threshold, parse_tsv, tokenize, AnnotatedSentence};
use emplite::heatmap::render_html_fragment;
use emplite::metrics::{evaluate, EvalInstance, Scores};
use emplite::model::{train, Model, ModelConfig, Variant};

const QUOTES: &str = include_str!("../../core/tests/fixtures/overfit32.tsv");

/// `token<TAB>ann|ann|...` lines (blank line between sentences) to
/// `token<TAB>probability<TAB>label` lines.
pub fn aggregate_text(input: &str, threshold: f64) -> Result<String, String> {
    check_threshold(threshold).map_err(|e| e.to_string())?;
    let sentences = parse_tsv(input).map_err(|e| e.to_string())?;
    if sentences.is_empty() {
        return Err("no annotated tokens".into());
    }
    let mut out = String::new();
    for s in &sentences {
        for ((tok, p), label) in s.tokens.iter().zip(s.probabilities()).zip(s.labels(threshold)) {
            out.push_str(&format!("{tok}\t{p}\t{label}\n"));
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_rows(text: &str, what: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|v| !v.is_empty())
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| format!("{what} line {}: `{v}` is not a number", i + 1))
                })
                .collect()
        })
        .collect()
}

/// One sentence per line, probabilities separated by spaces or commas.
pub fn score_text(truth: &str, pred: &str) -> Result<Scores, String> {
    let t = parse_rows(truth, "truth")?;
    let p = parse_rows(pred, "prediction")?;
    if t.len() != p.len() {
        return Err(format!("{} truth sentences vs {} predicted", t.len(), p.len()));
    }
    let inst = t
        .into_iter()
        .zip(p)
        .map(|(a, b)| EvalInstance::new(a, b))
        .collect::<emplite::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    evaluate(&inst).map_err(|e| e.to_string())
}

fn scores_line(s: &Scores) -> String {
    format!(
        "match_1={:.4} match_2={:.4} match_3={:.4} match_4={:.4} average={:.4}",
        s.matches[0], s.matches[1], s.matches[2], s.matches[3], s.average
    )
}

pub fn quotes() -> Vec<AnnotatedSentence> {
    parse_tsv(QUOTES).expect("bundled quotes parse")
}

/// A character-aware model trained on the bundled quotes.
pub struct Demo {
    model: Model,
    score: f64,
}

impl Demo {
    pub fn train(epochs: usize, seed: u64) -> Result<Demo, String> {
        let cfg = ModelConfig {
            max_epochs: epochs.max(1),
            patience: epochs.max(1),
            seed,
            ..ModelConfig::for_variant(Variant::CharLstm)
        };
        let out = train(&cfg, &quotes(), &[], None).map_err(|e| e.to_string())?;
        Ok(Demo {
            model: out.model,
            score: out.best_score,
        })
    }

    pub fn heatmap(&self, text: &str) -> Result<String, String> {
        let mut html = String::new();
        for line in text.lines() {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                continue;
            }
            let p = self.model.predict(&tokens, None).map_err(|e| e.to_string())?;
            html.push_str(&render_html_fragment(&p.tokens, &p.probs).map_err(|e| e.to_string())?);
        }
        if html.is_empty() {
            return Err("type a sentence first".into());
        }
        Ok(html)
    }
}

#[wasm_bindgen]
pub fn aggregate(input: &str, threshold: f64) -> Result<String, JsError> {
    aggregate_text(input, threshold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn match_scores(truth: &str, pred: &str) -> Result<String, JsError> {
    score_text(truth, pred).map(|s| scores_line(&s)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct EmphasisDemo(Demo);

#[wasm_bindgen]
impl EmphasisDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(epochs: usize, seed: u64) -> Result<EmphasisDemo, JsError> {
        Demo::train(epochs, seed).map(EmphasisDemo).map_err(|e| JsError::new(&e))
    }

    /// Average top-m score on the training quotes at the kept epoch.
    #[wasm_bindgen(getter)]
    pub fn score(&self) -> f64 {
        self.0.score
    }

    pub fn heatmap(&self, text: &str) -> Result<String, JsError> {
        self.0.heatmap(text).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_annotations() {
        let out = aggregate_text("Dream\tB|B|O\nbig\tO|I|O\n", 0.4).unwrap();
        assert_eq!(out, "Dream\t0.667\t1\nbig\t0.333\t0\n\n");
        assert!(aggregate_text("Dream\tB|X\n", 0.4).unwrap_err().contains("line 1"));
        assert!(aggregate_text("Dream\tB\n", 1.5).is_err());
    }

    #[test]
    fn scores_text_rows() {
        let s = score_text("0.9 0.1 0.5\n0.2, 0.8\n", "0.8 0.0 0.6\n0.9 0.1\n").unwrap();
        assert_eq!(s.matches[0], 0.5);
        assert_eq!(s.matches[1], 1.0);
        assert!(score_text("0.1\n", "").is_err());
        assert!(score_text("0.1 x\n", "0.1 0.2\n").unwrap_err().contains("truth line 1"));
        assert!(score_text("0.1 0.2\n", "0.1\n").is_err());
    }

    #[test]
    fn demo_trains_and_renders() {
        let demo = Demo::train(2, 0).unwrap();
        assert!((0.0..=1.0).contains(&demo.score));
        let html = demo.heatmap("Never stop dreaming\n\nBe kind").unwrap();
        assert_eq!(html.matches("class=\"sentence\"").count(), 2);
        assert!(demo.heatmap("   ").is_err());
    }
}
