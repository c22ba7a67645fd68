//! Text heatmaps: each token on a red background whose intensity is linear
//! in its probability, with the probability printed beneath it.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Ansi,
    Html,
}

impl Style {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ansi" => Ok(Style::Ansi),
            "html" => Ok(Style::Html),
            _ => Err(Error::Config(format!("unknown heatmap style `{s}` (expected ansi|html)"))),
        }
    }
}

/// Background intensity 0..=255 for a probability (clamped to [0, 1]).
pub fn intensity(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check(tokens: &[String], probs: &[f64]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::DegenerateInput("nothing to render".into()));
    }
    if tokens.len() != probs.len() {
        return Err(Error::Alignment(format!("{} tokens, {} probabilities", tokens.len(), probs.len())));
    }
    Ok(())
}

fn cell_width(token: &str) -> usize {
    token.chars().count().max(5)
}

/// Two terminal lines: tokens on 24-bit red backgrounds, then probabilities.
pub fn render_ansi(tokens: &[String], probs: &[f64]) -> Result<String> {
    check(tokens, probs)?;
    let mut top = String::new();
    let mut bottom = String::new();
    for (tok, &p) in tokens.iter().zip(probs) {
        let w = cell_width(tok);
        let i = intensity(p);
        top.push_str(&format!("\x1b[48;2;{i};0;0m\x1b[97m{tok:^w$}\x1b[0m "));
        bottom.push_str(&format!("{:^w$} ", format!("{p:.3}")));
    }
    Ok(format!("{}\n{}\n", top.trim_end(), bottom.trim_end()))
}

fn escape(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '<' => "&lt;".to_string(),
            '>' => "&gt;".to_string(),
            '&' => "&amp;".to_string(),
            '"' => "&quot;".to_string(),
            '\'' => "&#39;".to_string(),
            c => c.to_string(),
        })
        .collect()
}

/// One sentence as an HTML fragment.
pub fn render_html_fragment(tokens: &[String], probs: &[f64]) -> Result<String> {
    check(tokens, probs)?;
    let mut out = String::from("<div class=\"sentence\">");
    for (tok, &p) in tokens.iter().zip(probs) {
        let a = intensity(p) as f64 / 255.0;
        out.push_str(&format!(
            "<span class=\"tok\" style=\"background:rgba(255,0,0,{a:.3})\"><span class=\"w\">{}</span><span class=\"p\">{p:.3}</span></span>",
            escape(tok)
        ));
    }
    out.push_str("</div>");
    Ok(out)
}

pub const HTML_STYLE: &str = ".sentence{margin:1em 0;font-family:sans-serif}\
.tok{display:inline-flex;flex-direction:column;align-items:center;padding:.2em .4em;margin:0 .1em;border-radius:3px}\
.tok .w{font-size:1.2em}.tok .p{font-size:.75em;color:#333}";

/// Standalone page with one block per sentence.
pub fn render_html_page(sentences: &[(Vec<String>, Vec<f64>)]) -> Result<String> {
    let mut body = String::new();
    for (t, p) in sentences {
        body.push_str(&render_html_fragment(t, p)?);
        body.push('\n');
    }
    Ok(format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Emphasis heatmap</title><style>{HTML_STYLE}</style></head>\n<body>\n{body}</body></html>\n"
    ))
}

pub fn render(style: Style, sentences: &[(Vec<String>, Vec<f64>)]) -> Result<String> {
    if sentences.is_empty() {
        return Err(Error::DegenerateInput("nothing to render".into()));
    }
    match style {
        Style::Html => render_html_page(sentences),
        Style::Ansi => sentences
            .iter()
            .map(|(t, p)| render_ansi(t, p))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join("\n")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn intensity_endpoints() {
        assert_eq!(intensity(0.0), 0);
        assert_eq!(intensity(1.0), 255);
        assert_eq!(intensity(0.5), 128);
    }

    #[test]
    fn ansi_cells_and_labels() {
        let s = render_ansi(&toks(&["calm", "storm"]), &[0.0, 1.0]).unwrap();
        assert!(s.contains("\x1b[48;2;0;0;0m"));
        assert!(s.contains("\x1b[48;2;255;0;0m"));
        assert!(s.contains("0.000") && s.contains("1.000"));
        assert!(render_ansi(&[], &[]).is_err());
    }

    #[test]
    fn html_escapes_tokens() {
        let s = render_html_page(&[(toks(&["<b>"]), vec![0.25])]).unwrap();
        assert!(s.contains("&lt;b&gt;") && s.contains("0.250") && s.starts_with("<!DOCTYPE html>"));
    }
}
