//! Lowercased word-level tokenization shared by the encoder, the sparse
//! baselines and the entity matcher.

/// A token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on anything that is not alphanumeric and lowercases each run.
pub fn tokenize_spans(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push(Token {
                text: text[s..i].to_lowercase(),
                start: s,
                end: i,
            });
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: text[s..].to_lowercase(),
            start: s,
            end: text.len(),
        });
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text).collect()
}

/// Canonical key for a phrase: lowercased tokens joined by single spaces.
pub fn normalize_phrase(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Lowercase and collapse runs of whitespace.
pub fn normalize_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Collapse whitespace runs left behind by span deletion.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        let toks = tokenize("Effects of Electroacupuncture, 2Hz (MDD)!");
        assert_eq!(toks, ["effects", "of", "electroacupuncture", "2hz", "mdd"]);
    }

    #[test]
    fn spans_point_into_source() {
        let src = "  Olaparib-based  therapy";
        for t in tokenize_spans(src) {
            assert_eq!(src[t.start..t.end].to_lowercase(), t.text);
        }
    }

    #[test]
    fn normalize_key_collapses() {
        assert_eq!(
            normalize_key("  Major   Depressive\tDisorder "),
            "major depressive disorder"
        );
    }
}
