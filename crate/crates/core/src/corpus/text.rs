use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

/// Token granularity of a corpus: one token per grapheme (Chinese-style
/// text) or whitespace words with detached punctuation (English-style text).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageMode {
    Character,
    Word,
}

impl LanguageMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LanguageMode::Character => "character",
            LanguageMode::Word => "word",
        }
    }
}

impl std::str::FromStr for LanguageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "character" | "char" => Ok(LanguageMode::Character),
            "word" => Ok(LanguageMode::Word),
            other => Err(Error::Config(format!("unknown language mode {other:?}"))),
        }
    }
}

/// A token together with its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits `text` into tokens, keeping each token's byte offsets.
pub fn tokenize_with_offsets(text: &str, mode: LanguageMode) -> Result<Vec<TokenSpan>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyAbstract);
    }
    let mut out = Vec::new();
    match mode {
        LanguageMode::Character => {
            for (start, g) in text.grapheme_indices(true) {
                // a combining mark may cluster onto a space; drop the space
                let trimmed = g.trim_start();
                if trimmed.is_empty() {
                    continue;
                }
                let start = start + (g.len() - trimmed.len());
                let trimmed = trimmed.trim_end();
                out.push(TokenSpan {
                    text: trimmed.to_string(),
                    start,
                    end: start + trimmed.len(),
                });
            }
        }
        LanguageMode::Word => {
            let mut offset = 0;
            for chunk in text.split_whitespace() {
                let chunk_start = offset + text[offset..].find(chunk).expect("chunk from split");
                offset = chunk_start + chunk.len();
                push_word_chunk(chunk, chunk_start, &mut out);
            }
        }
    }
    Ok(out)
}

fn push_word_chunk(chunk: &str, base: usize, out: &mut Vec<TokenSpan>) {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut lo = 0;
    let mut hi = chars.len();
    while lo < hi && is_punct(chars[lo].1) {
        lo += 1;
    }
    while hi > lo && is_punct(chars[hi - 1].1) {
        hi -= 1;
    }
    let byte_at = |idx: usize| {
        if idx == chars.len() {
            chunk.len()
        } else {
            chars[idx].0
        }
    };
    let single = |idx: usize| TokenSpan {
        text: chars[idx].1.to_string(),
        start: base + chars[idx].0,
        end: base + byte_at(idx + 1),
    };
    for idx in 0..lo {
        out.push(single(idx));
    }
    if lo < hi {
        out.push(TokenSpan {
            text: chunk[byte_at(lo)..byte_at(hi)].to_string(),
            start: base + byte_at(lo),
            end: base + byte_at(hi),
        });
    }
    for idx in hi.max(lo)..chars.len() {
        out.push(single(idx));
    }
}

pub fn tokenize(text: &str, mode: LanguageMode) -> Result<Vec<String>> {
    Ok(tokenize_with_offsets(text, mode)?
        .into_iter()
        .map(|t| t.text)
        .collect())
}

/// Joins tokens back into a surface string: single spaces in word mode, no
/// separator in character mode.
pub fn detokenize<S: AsRef<str>>(tokens: &[S], mode: LanguageMode) -> String {
    let sep = match mode {
        LanguageMode::Word => " ",
        LanguageMode::Character => "",
    };
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(sep)
}

/// Comparison key of a single token.
pub fn token_key(token: &str, mode: LanguageMode) -> String {
    match mode {
        LanguageMode::Word => token.to_lowercase(),
        LanguageMode::Character => token.to_string(),
    }
}

/// Trims and collapses internal whitespace runs to single spaces.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical surface used whenever two concept strings are compared:
/// tokenize, detokenize, and lowercase in word mode. Empty input maps to "".
pub fn concept_key(s: &str, mode: LanguageMode) -> String {
    match tokenize(s, mode) {
        Ok(tokens) => {
            let keyed: Vec<String> = tokens.iter().map(|t| token_key(t, mode)).collect();
            detokenize(&keyed, mode)
        }
        Err(_) => String::new(),
    }
}

/// Byte offset to UTF-16 code-unit offset, for browser-side highlighting.
pub fn utf16_offset(text: &str, byte_offset: usize) -> usize {
    text[..byte_offset].encode_utf16().count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn word_mode_detaches_trailing_period() {
        let toks = tokenize("Google is a company.", LanguageMode::Word).unwrap();
        assert_eq!(toks, ["Google", "is", "a", "company", "."]);
    }

    #[test]
    fn character_mode_one_token_per_grapheme() {
        let toks = tokenize("谷歌公司", LanguageMode::Character).unwrap();
        assert_eq!(toks, ["谷", "歌", "公", "司"]);
        // combining sequence stays a single grapheme
        let toks = tokenize("e\u{301}a b", LanguageMode::Character).unwrap();
        assert_eq!(toks, ["e\u{301}", "a", "b"]);
    }

    #[test]
    fn vice_president_round_trips() {
        let toks = tokenize("vice president", LanguageMode::Word).unwrap();
        assert_eq!(toks, ["vice", "president"]);
        assert_eq!(detokenize(&toks, LanguageMode::Word), "vice president");
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(
            tokenize("   \t", LanguageMode::Word),
            Err(Error::EmptyAbstract)
        ));
        assert!(matches!(
            tokenize("", LanguageMode::Character),
            Err(Error::EmptyAbstract)
        ));
    }

    #[test]
    fn offsets_point_back_into_text() {
        let text = "  (Tokyo)  station, JR.";
        for t in tokenize_with_offsets(text, LanguageMode::Word).unwrap() {
            assert_eq!(&text[t.start..t.end], t.text);
        }
        let text = "东京 站。";
        for t in tokenize_with_offsets(text, LanguageMode::Character).unwrap() {
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }

    #[test]
    fn internal_punctuation_is_kept() {
        let toks = tokenize("an e-mail from U.S.", LanguageMode::Word).unwrap();
        assert_eq!(toks, ["an", "e-mail", "from", "U.S", "."]);
    }

    #[test]
    fn concept_key_lowercases_only_words() {
        assert_eq!(concept_key("  Technology   Company ", LanguageMode::Word), "technology company");
        assert_eq!(concept_key("科技 公司", LanguageMode::Character), "科技公司");
    }

    proptest! {
        #[test]
        fn word_mode_rejoin_is_idempotent(text in "[a-zA-Z.,;()!? -]{1,40}") {
            prop_assume!(!text.trim().is_empty());
            let first = tokenize(&text, LanguageMode::Word).unwrap();
            let rejoined = detokenize(&first, LanguageMode::Word);
            let second = tokenize(&rejoined, LanguageMode::Word).unwrap();
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(detokenize(&second, LanguageMode::Word), rejoined);
        }

        #[test]
        fn tokens_are_non_empty_and_whitespace_free(text in "\\PC{1,30}", word in any::<bool>()) {
            let mode = if word { LanguageMode::Word } else { LanguageMode::Character };
            if let Ok(toks) = tokenize(&text, mode) {
                for t in toks {
                    prop_assert!(!t.is_empty());
                    prop_assert!(!t.chars().any(char::is_whitespace));
                }
            }
        }
    }
}
