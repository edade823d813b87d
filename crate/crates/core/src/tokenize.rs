//! Unicode-aware tokenization for English and Malayalam.
//!
//! Text is NFC-normalized, split on whitespace, and punctuation codepoints are
//! split off as standalone tokens. English words are lowercased. Malayalam
//! words are never segmented below the whitespace/punctuation level, except
//! that a run of Malayalam-block codepoints is kept apart from adjacent
//! non-Malayalam characters.

use std::collections::HashMap;

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Lang;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Word,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    text: String,
    kind: TokenKind,
}

impl Token {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }

    pub fn is_punct(&self) -> bool {
        self.kind == TokenKind::Punct
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("n-gram order must be at least 1")]
pub struct ZeroOrder;

/// A token together with whether whitespace preceded it in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SpacedToken {
    pub token: Token,
    pub space_before: bool,
}

pub fn is_punct(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

pub fn is_malayalam(c: char) -> bool {
    ('\u{0D00}'..='\u{0D7F}').contains(&c)
}

// ZWNJ/ZWJ appear inside Malayalam words (legacy chillu encoding).
fn is_joiner(c: char) -> bool {
    c == '\u{200C}' || c == '\u{200D}'
}

pub fn tokenize(text: &str, lang: Lang) -> Vec<Token> {
    tokenize_spaced(text, lang)
        .into_iter()
        .map(|t| t.token)
        .collect()
}

pub(crate) fn tokenize_spaced(text: &str, lang: Lang) -> Vec<SpacedToken> {
    let normalized: String = text.nfc().collect();
    let mut out = Vec::new();
    for chunk in normalized.split_whitespace() {
        let mut space_before = !out.is_empty();
        let mut word = String::new();
        // script class of the current word: Some(true) = Malayalam run
        let mut word_is_ml: Option<bool> = None;

        let flush = |word: &mut String, out: &mut Vec<SpacedToken>, space_before: &mut bool| {
            if word.is_empty() {
                return;
            }
            let text = match lang {
                Lang::En => word.to_lowercase().nfc().collect(),
                Lang::Ml => word.clone(),
            };
            out.push(SpacedToken {
                token: Token {
                    text,
                    kind: TokenKind::Word,
                },
                space_before: *space_before,
            });
            *space_before = false;
            word.clear();
        };

        for c in chunk.chars() {
            if is_punct(c) {
                flush(&mut word, &mut out, &mut space_before);
                word_is_ml = None;
                out.push(SpacedToken {
                    token: Token {
                        text: c.to_string(),
                        kind: TokenKind::Punct,
                    },
                    space_before,
                });
                space_before = false;
                continue;
            }
            if lang == Lang::Ml && !is_joiner(c) {
                let ml = is_malayalam(c);
                if word_is_ml.is_some_and(|prev| prev != ml) {
                    flush(&mut word, &mut out, &mut space_before);
                }
                word_is_ml = Some(ml);
            }
            word.push(c);
        }
        flush(&mut word, &mut out, &mut space_before);
    }
    out
}

/// Joins tokens with single spaces wherever the original had whitespace.
pub(crate) fn detokenize<'a>(tokens: impl IntoIterator<Item = (&'a str, bool)>) -> String {
    let mut out = String::new();
    for (text, space_before) in tokens {
        if space_before && !out.is_empty() {
            out.push(' ');
        }
        out.push_str(text);
    }
    out
}

/// Contiguous n-grams of `tokens` with their multiplicities.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Result<HashMap<Vec<&str>, usize>, ZeroOrder> {
    if n == 0 {
        return Err(ZeroOrder);
    }
    let mut counts = HashMap::new();
    if tokens.len() < n {
        return Ok(counts);
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Number of extended grapheme clusters.
pub fn grapheme_count(text: &str) -> usize {
    text.graphemes(true).count()
}
