//! Built-in function-word lists shared by the pruner and the Hearst matcher.

use crate::corpus::LanguageMode;

const WORD_FUNCTION_WORDS: &[&str] = &[
    "is", "was", "are", "were", "be", "been", "being", "am", "in", "on", "at", "of", "to",
    "for", "from", "by", "with", "as", "into", "onto", "about", "a", "an", "the", "and", "or",
    "that", "which", "who", "whom", "whose", "this", "these", "those", "its", "his", "her",
    "their", "it", "he", "she", "they", "also", "has", "have", "had",
];

const CHARACTER_FUNCTION_WORDS: &[&str] = &[
    "是", "为", "在", "于", "的", "了", "和", "与", "及", "之", "一个", "一种", "一座", "一家",
    "一所", "一位", "位于", "属于", "也",
];

pub fn default_function_words(mode: LanguageMode) -> Vec<String> {
    let words = match mode {
        LanguageMode::Word => WORD_FUNCTION_WORDS,
        LanguageMode::Character => CHARACTER_FUNCTION_WORDS,
    };
    words.iter().map(|w| w.to_string()).collect()
}

/// Single-token function words, keyed for comparison in `mode`.
///
/// Multi-token entries (possible in character mode) are skipped; callers that
/// need sequence matching tokenize the full list themselves.
pub fn function_token_set(words: &[String], mode: LanguageMode) -> std::collections::HashSet<String> {
    words
        .iter()
        .filter_map(|w| {
            let toks = crate::corpus::tokenize(w, mode).ok()?;
            if toks.len() == 1 {
                Some(crate::corpus::token_key(&toks[0], mode))
            } else {
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_examples_are_function_words() {
        let words = default_function_words(LanguageMode::Word);
        assert!(words.iter().any(|w| w == "is"));
        assert!(words.iter().any(|w| w == "in"));
    }

    #[test]
    fn character_set_keeps_single_chars_only() {
        let words = default_function_words(LanguageMode::Character);
        let set = function_token_set(&words, LanguageMode::Character);
        assert!(set.contains("是"));
        assert!(!set.contains("一个"));
    }
}
