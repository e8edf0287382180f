use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::{Attribute, Corpus};
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const CLS: u32 = 3;
pub const N_SPECIAL: u32 = 4;
const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[MASK]", "[CLS]"];

/// Word-level vocabulary with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub min_freq: usize,
}

impl Vocab {
    /// Keep tokens seen at least `min_freq` times; ids by descending count,
    /// ties by token.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for tok in tokenize(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens, min_freq)
    }

    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            index,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == N_SPECIAL as usize
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn is_special(id: u32) -> bool {
        id < N_SPECIAL
    }

    /// `[CLS]` followed by word ids, truncated to `max_len`. Empty when the
    /// text has no word tokens.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        let words = tokenize(text);
        if words.is_empty() {
            return Vec::new();
        }
        std::iter::once(CLS)
            .chain(words.iter().map(|w| self.id(w)))
            .take(max_len.max(1))
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn parse_tsv(reader: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected token<TAB>id".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad id {id:?}"),
            })?;
            if id != tokens.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("ids must be dense, expected {}", tokens.len()),
                });
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::invalid("vocab file does not start with the special tokens"));
        }
        Ok(Self::from_tokens(tokens, 0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_tsv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(BufReader::new(f))
    }
}

/// Every text the encoder will see for this corpus.
pub fn corpus_texts(corpus: &Corpus) -> impl Iterator<Item = &str> {
    corpus.trials().iter().flat_map(|t| {
        Attribute::ALL
            .iter()
            .map(move |a| t.attribute(*a))
            .chain(std::iter::once(t.context.as_str()))
    })
}

pub fn fit_vocab(corpus: &Corpus, min_freq: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot fit a vocabulary on an empty corpus"));
    }
    Ok(Vocab::fit(corpus_texts(corpus), min_freq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_freq_filters() {
        let v = Vocab::fit(["depression depression depression", "depression depression rare"], 2);
        assert_ne!(v.id("depression"), UNK);
        assert_eq!(v.id("rare"), UNK);
        let v = Vocab::fit(["a b c"], 10);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn deterministic_ids() {
        let texts = ["b a c a", "c c d"];
        assert_eq!(Vocab::fit(texts, 1), Vocab::fit(texts, 1));
        let v = Vocab::fit(texts, 1);
        assert_eq!(v.token(4), "c");
        assert_eq!(v.token(5), "a");
    }

    #[test]
    fn encode_prepends_cls_and_truncates() {
        let v = Vocab::fit(["x y z"], 1);
        assert_eq!(v.encode("x y z", 3), vec![CLS, v.id("x"), v.id("y")]);
        assert!(v.encode(" ,, ", 8).is_empty());
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocab::fit(["alpha beta beta"], 1);
        let back = Vocab::parse_tsv(v.to_tsv().as_bytes()).unwrap();
        assert_eq!(back.tokens, v.tokens);
        assert!(Vocab::parse_tsv("x\t0\n".as_bytes()).is_err());
    }
}
