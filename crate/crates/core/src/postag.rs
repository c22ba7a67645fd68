//! Penn Treebank part-of-speech tags and a small rule-based tagger.
//!
//! The builtin tagger is a closed-class lexicon backed by suffix and shape
//! rules. It is coarse on purpose: tags only feed a 16-d embedding. When a
//! corpus already carries tags (fourth column of the TSV format) they are
//! passed through unchanged.

use std::collections::BTreeMap;
use std::fmt;

use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};

macro_rules! pos_tags {
    ($($variant:ident => $sym:literal),+ $(,)?) => {
        /// Penn Treebank tag subset; anything else is [`PosTag::Other`].
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum PosTag {
            $($variant),+
        }

        impl PosTag {
            pub const ALL: &'static [PosTag] = &[$(PosTag::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(PosTag::$variant => $sym),+
                }
            }

            /// Maps a tag symbol to its variant; unknown symbols become `Other`.
            pub fn parse(symbol: &str) -> PosTag {
                match symbol {
                    $($sym => PosTag::$variant,)+
                    _ => PosTag::Other,
                }
            }
        }
    };
}

pos_tags! {
    Nn => "NN", Nns => "NNS", Nnp => "NNP", Nnps => "NNPS",
    Jj => "JJ", Jjr => "JJR", Jjs => "JJS",
    Vb => "VB", Vbd => "VBD", Vbg => "VBG", Vbn => "VBN", Vbp => "VBP", Vbz => "VBZ",
    Prp => "PRP", PrpS => "PRP$", In => "IN", Dt => "DT",
    Rb => "RB", Rbr => "RBR", Rbs => "RBS",
    Cc => "CC", Cd => "CD", To => "TO", Md => "MD", Uh => "UH",
    Other => "OTHER",
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where tags come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosSource {
    /// Tags supplied alongside the tokens.
    Sidecar,
    /// The rule-based tagger in this module.
    Builtin,
}

impl PosSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sidecar" => Ok(PosSource::Sidecar),
            "builtin" => Ok(PosSource::Builtin),
            _ => Err(Error::Config(format!("unknown POS source `{s}` (expected sidecar|builtin)"))),
        }
    }
}

// Closed-class words. Lookup is on the lowercased token.
const LEXICON: &[(&str, PosTag)] = {
    use PosTag::*;
    &[
        // determiners
        ("the", Dt), ("a", Dt), ("an", Dt), ("this", Dt), ("that", Dt), ("these", Dt), ("those", Dt),
        ("every", Dt), ("each", Dt), ("some", Dt), ("any", Dt), ("no", Dt), ("all", Dt), ("both", Dt),
        ("another", Dt), ("either", Dt), ("neither", Dt), ("such", Dt), ("half", Dt),
        // prepositions and subordinators
        ("of", In), ("in", In), ("on", In), ("at", In), ("by", In), ("for", In), ("with", In),
        ("from", In), ("about", In), ("into", In), ("onto", In), ("upon", In), ("over", In),
        ("under", In), ("after", In), ("before", In), ("between", In), ("through", In),
        ("during", In), ("without", In), ("within", In), ("against", In), ("among", In),
        ("across", In), ("behind", In), ("beyond", In), ("toward", In), ("towards", In),
        ("around", In), ("like", In), ("than", In), ("because", In), ("if", In), ("unless", In),
        ("while", In), ("whether", In), ("though", In), ("although", In), ("since", In),
        ("until", In), ("till", In), ("as", In), ("despite", In), ("via", In), ("per", In),
        ("beneath", In), ("above", In), ("below", In), ("inside", In), ("outside", In), ("near", In),
        // personal pronouns
        ("i", Prp), ("you", Prp), ("he", Prp), ("she", Prp), ("it", Prp), ("we", Prp), ("they", Prp),
        ("me", Prp), ("him", Prp), ("her", Prp), ("us", Prp), ("them", Prp),
        ("myself", Prp), ("yourself", Prp), ("himself", Prp), ("herself", Prp), ("itself", Prp),
        ("ourselves", Prp), ("themselves", Prp), ("yourselves", Prp),
        ("someone", Nn), ("something", Nn), ("everyone", Nn), ("everything", Nn), ("nothing", Nn),
        ("anyone", Nn), ("anything", Nn), ("nobody", Nn), ("everybody", Nn), ("somebody", Nn),
        // possessive pronouns
        ("my", PrpS), ("your", PrpS), ("his", PrpS), ("its", PrpS), ("our", PrpS), ("their", PrpS),
        ("mine", PrpS), ("yours", PrpS), ("ours", PrpS), ("theirs", PrpS), ("hers", PrpS),
        // coordinators
        ("and", Cc), ("or", Cc), ("but", Cc), ("nor", Cc), ("yet", Cc), ("so", Cc), ("&", Cc),
        ("plus", Cc),
        ("to", To),
        // modals
        ("can", Md), ("could", Md), ("will", Md), ("would", Md), ("shall", Md), ("should", Md),
        ("may", Md), ("might", Md), ("must", Md), ("'ll", Md), ("ca", Md), ("wo", Md),
        // auxiliaries and frequent irregular verbs
        ("be", Vb), ("do", Vbp), ("have", Vbp), ("am", Vbp), ("are", Vbp), ("'re", Vbp), ("'m", Vbp),
        ("is", Vbz), ("'s", Vbz), ("has", Vbz), ("does", Vbz), ("was", Vbd), ("were", Vbd),
        ("had", Vbd), ("did", Vbd), ("been", Vbn), ("being", Vbg), ("done", Vbn), ("gone", Vbn),
        ("made", Vbd), ("said", Vbd), ("went", Vbd), ("came", Vbd), ("took", Vbd), ("got", Vbd),
        ("make", Vb), ("get", Vb), ("go", Vb), ("know", Vbp), ("think", Vbp), ("let", Vb),
        ("keep", Vb), ("take", Vb), ("see", Vb), ("come", Vb), ("give", Vb), ("find", Vb),
        ("believe", Vbp), ("love", Vbp), ("need", Vbp), ("want", Vbp), ("live", Vb), ("feel", Vbp),
        ("become", Vb), ("begin", Vb), ("never", Rb),
        // adverbs
        ("not", Rb), ("n't", Rb), ("very", Rb), ("too", Rb), ("also", Rb), ("just", Rb),
        ("only", Rb), ("always", Rb), ("often", Rb), ("sometimes", Rb), ("ever", Rb),
        ("here", Rb), ("there", Rb), ("now", Rb), ("then", Rb), ("again", Rb), ("still", Rb),
        ("already", Rb), ("soon", Rb), ("even", Rb), ("well", Rb), ("back", Rb), ("away", Rb),
        ("together", Rb), ("almost", Rb), ("perhaps", Rb), ("maybe", Rb), ("once", Rb),
        ("today", Nn), ("tomorrow", Nn), ("yesterday", Nn), ("tonight", Nn),
        ("more", Rbr), ("less", Rbr), ("better", Rbr), ("most", Rbs), ("least", Rbs), ("best", Jjs),
        // wh-words, folded into nearest listed categories
        ("what", Other), ("who", Other), ("whom", Other), ("which", Other), ("whose", Other),
        ("when", Other), ("where", Other), ("why", Other), ("how", Other),
        // interjections
        ("oh", Uh), ("wow", Uh), ("yes", Uh), ("hey", Uh), ("hello", Uh), ("please", Uh),
        ("ok", Uh), ("okay", Uh), ("hi", Uh), ("thanks", Uh), ("alas", Uh), ("yay", Uh),
        // numbers spelled out
        ("one", Cd), ("two", Cd), ("three", Cd), ("four", Cd), ("five", Cd), ("six", Cd),
        ("seven", Cd), ("eight", Cd), ("nine", Cd), ("ten", Cd), ("hundred", Cd), ("thousand", Cd),
        ("million", Cd), ("first", Jj), ("last", Jj), ("other", Jj), ("many", Jj), ("much", Jj),
        ("few", Jj), ("own", Jj), ("same", Jj), ("new", Jj), ("good", Jj), ("great", Jj),
        ("happy", Jj), ("little", Jj), ("big", Jj), ("old", Jj), ("true", Jj), ("real", Jj),
    ]
};

fn lexicon_lookup(lower: &str) -> Option<PosTag> {
    LEXICON.iter().find(|(w, _)| *w == lower).map(|&(_, t)| t)
}

fn is_numeric(token: &str) -> bool {
    let mut digits = 0;
    for c in token.chars() {
        if c.is_ascii_digit() {
            digits += 1;
        } else if !matches!(c, '.' | ',' | ':' | '/' | '-' | '%' | '$' | '+') {
            return false;
        }
    }
    digits > 0
}

/// Tags one token given its position in the sentence.
pub fn tag_token(token: &str, position: usize) -> PosTag {
    if is_numeric(token) {
        return PosTag::Cd;
    }
    if !token.chars().any(char::is_alphanumeric) {
        return PosTag::Other;
    }
    let lower = token.to_lowercase();
    if let Some(t) = lexicon_lookup(&lower) {
        return t;
    }
    let capitalized = token.chars().next().is_some_and(char::is_uppercase);
    let all_caps = token.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase);
    if capitalized && position > 0 && !all_caps {
        return PosTag::Nnp;
    }
    let n = lower.chars().count();
    if n > 4 && lower.ends_with("ing") {
        PosTag::Vbg
    } else if n > 3 && lower.ends_with("ed") {
        PosTag::Vbd
    } else if n > 3 && lower.ends_with("ly") {
        PosTag::Rb
    } else if n > 4
        && ["ful", "ous", "able", "ible", "ive", "less", "ish"]
            .iter()
            .any(|s| lower.ends_with(s))
    {
        PosTag::Jj
    } else if n > 3 && lower.ends_with("est") {
        PosTag::Jjs
    } else if n > 2 && lower.ends_with('s') && !lower.ends_with("ss") && !lower.ends_with("us") {
        PosTag::Nns
    } else {
        PosTag::Nn
    }
}

/// Rule-based tagging: pure and deterministic.
pub fn tag_builtin<S: AsRef<str>>(tokens: &[S]) -> Vec<PosTag> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| tag_token(t.as_ref(), i))
        .collect()
}

/// One tag per token, either passed through from `sidecar` or computed.
pub fn tag_sentence<S: AsRef<str>>(tokens: &[S], source: PosSource, sidecar: Option<&[String]>) -> Result<Vec<PosTag>> {
    if tokens.is_empty() {
        return Err(Error::DegenerateInput("cannot tag an empty sentence".into()));
    }
    match source {
        PosSource::Builtin => Ok(tag_builtin(tokens)),
        PosSource::Sidecar => {
            let tags = sidecar.ok_or_else(|| Error::Config("sidecar POS tags requested but the POS column is absent".into()))?;
            if tags.len() != tokens.len() {
                return Err(Error::Alignment(format!(
                    "{} POS tags for {} tokens",
                    tags.len(),
                    tokens.len()
                )));
            }
            Ok(tags.iter().map(|t| PosTag::parse(t)).collect())
        }
    }
}

/// Fills the POS column of every sentence from `source`.
pub fn tag_corpus(sentences: &mut [AnnotatedSentence], source: PosSource) -> Result<()> {
    for s in sentences.iter_mut() {
        let tags = tag_sentence(&s.tokens, source, s.pos.as_deref())?;
        s.pos = Some(tags.iter().map(|t| t.as_str().to_string()).collect());
    }
    Ok(())
}

/// Tag shares over all tokens and over emphasized tokens, in percent,
/// sorted by descending share.
#[derive(Clone, Debug, PartialEq)]
pub struct PosDistribution {
    pub all: Vec<(PosTag, f64)>,
    pub emphasized: Vec<(PosTag, f64)>,
}

fn shares(counts: BTreeMap<PosTag, usize>) -> Vec<(PosTag, f64)> {
    let total: usize = counts.values().sum();
    let mut out: Vec<(PosTag, f64)> = counts
        .into_iter()
        .map(|(t, c)| (t, 100.0 * c as f64 / total as f64))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// POS share among all tokens and among tokens with emphasis probability
/// at or above `threshold`. Sentences must carry POS tags.
pub fn pos_distribution(data: &[AnnotatedSentence], threshold: f64) -> Result<PosDistribution> {
    let mut all = BTreeMap::new();
    let mut emph = BTreeMap::new();
    for s in data {
        let pos = s
            .pos
            .as_ref()
            .ok_or_else(|| Error::Config("pos_distribution needs tagged sentences".into()))?;
        for (tag, p) in pos.iter().zip(s.probabilities()) {
            let tag = PosTag::parse(tag);
            *all.entry(tag).or_insert(0usize) += 1;
            if p.value() >= threshold {
                *emph.entry(tag).or_insert(0usize) += 1;
            }
        }
    }
    if all.is_empty() {
        return Err(Error::DegenerateInput("empty corpus".into()));
    }
    Ok(PosDistribution {
        all: shares(all),
        emphasized: if emph.is_empty() { Vec::new() } else { shares(emph) },
    })
}

impl PosDistribution {
    pub fn share(list: &[(PosTag, f64)], tag: PosTag) -> f64 {
        list.iter().find(|(t, _)| *t == tag).map_or(0.0, |(_, s)| *s)
    }
}
