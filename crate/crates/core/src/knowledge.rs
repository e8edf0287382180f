//! Concept dictionary with parent concepts, and dictionary-based entity
//! extraction.
//!
//! Matching is greedy longest-match over lowercased word tokens. Surface forms
//! are normalized the same way, so "Major Depressive Disorder" and
//! "major depressive disorder" are one key.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{normalize_phrase, tokenize_spans};

/// Default cap on mentions per text.
pub const DEFAULT_MAX_ENTITIES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub canonical: String,
    #[serde(default)]
    pub surface_forms: Vec<String>,
    #[serde(default)]
    pub parent: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub surface: String,
    pub span: (usize, usize),
    pub entry: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeMap {
    entries: Vec<ConceptEntry>,
    surface_index: HashMap<String, usize>,
    parent_index: BTreeMap<String, Vec<usize>>,
    max_form_tokens: usize,
}

impl KnowledgeMap {
    /// Build from entries; the canonical name is added to its own surface
    /// forms when missing.
    pub fn new(entries: Vec<ConceptEntry>) -> Result<Self> {
        let mut map = KnowledgeMap::default();
        for mut e in entries {
            if e.canonical.trim().is_empty() {
                return Err(Error::invalid("concept with empty canonical name"));
            }
            if e.parent.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "concept {:?} is missing a parent",
                    e.canonical
                )));
            }
            if !e
                .surface_forms
                .iter()
                .any(|s| normalize_phrase(s) == normalize_phrase(&e.canonical))
            {
                e.surface_forms.insert(0, e.canonical.clone());
            }
            let idx = map.entries.len();
            let mut own = Vec::new();
            for form in &e.surface_forms {
                let key = normalize_phrase(form);
                if key.is_empty() {
                    return Err(Error::invalid(format!(
                        "concept {:?} has an empty surface form",
                        e.canonical
                    )));
                }
                if own.contains(&key) {
                    continue;
                }
                if map.surface_index.contains_key(&key) {
                    return Err(Error::DuplicateSurface(key));
                }
                map.max_form_tokens = map.max_form_tokens.max(key.split(' ').count());
                map.surface_index.insert(key.clone(), idx);
                own.push(key);
            }
            map.parent_index.entry(e.parent.clone()).or_default().push(idx);
            map.entries.push(e);
        }
        Ok(map)
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parents(&self) -> impl Iterator<Item = &str> {
        self.parent_index.keys().map(String::as_str)
    }

    pub fn siblings(&self, entry: usize) -> &[usize] {
        &self.parent_index[&self.entries[entry].parent]
    }

    /// Entry index for a surface form, case- and punctuation-insensitive.
    pub fn lookup(&self, surface: &str) -> Option<usize> {
        self.surface_index.get(&normalize_phrase(surface)).copied()
    }

    /// Greedy longest-match, left to right, at most `max_entities` mentions.
    pub fn extract_entities(&self, text: &str, max_entities: usize) -> Vec<EntityMention> {
        let toks = tokenize_spans(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() && out.len() < max_entities {
            let longest = self.max_form_tokens.min(toks.len() - i);
            let hit = (1..=longest).rev().find_map(|len| {
                let key = toks[i..i + len]
                    .iter()
                    .map(|t| t.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                self.surface_index.get(&key).map(|&e| (len, e))
            });
            match hit {
                Some((len, entry)) => {
                    let (start, end) = (toks[i].start, toks[i + len - 1].end);
                    out.push(EntityMention {
                        surface: text[start..end].to_string(),
                        span: (start, end),
                        entry,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    /// The mention's canonical name or a same-parent sibling's canonical,
    /// uniformly, skipping options identical to the mention's own surface
    /// unless nothing else is available.
    pub fn sample_similar<R: Rng + ?Sized>(&self, mention: &EntityMention, rng: &mut R) -> String {
        let own = normalize_phrase(&mention.surface);
        let options: Vec<&str> = self
            .siblings(mention.entry)
            .iter()
            .map(|&i| self.entries[i].canonical.as_str())
            .filter(|c| normalize_phrase(c) != own)
            .collect();
        if options.is_empty() {
            return self.entries[mention.entry].canonical.clone();
        }
        options[rng.random_range(0..options.len())].to_string()
    }

    /// Canonical of a uniformly drawn entry under a different parent.
    pub fn sample_dissimilar<R: Rng + ?Sized>(&self, entry: usize, rng: &mut R) -> Result<String> {
        let parent = &self.entries[entry].parent;
        let pool: Vec<usize> = (0..self.entries.len())
            .filter(|&i| &self.entries[i].parent != parent)
            .collect();
        if pool.is_empty() {
            return Err(Error::NoDissimilarConcept);
        }
        Ok(self.entries[pool[rng.random_range(0..pool.len())]]
            .canonical
            .clone())
    }
}

pub fn parse_map(reader: impl BufRead) -> Result<KnowledgeMap> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ConceptEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(e);
    }
    KnowledgeMap::new(entries)
}

pub fn load_map(path: &Path) -> Result<KnowledgeMap> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_map(BufReader::new(f))
}

pub fn map_to_jsonl(map: &KnowledgeMap) -> String {
    map.entries()
        .iter()
        .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(c: &str, forms: &[&str], parent: &str) -> ConceptEntry {
        ConceptEntry {
            canonical: c.into(),
            surface_forms: forms.iter().map(|s| s.to_string()).collect(),
            parent: parent.into(),
        }
    }

    fn map() -> KnowledgeMap {
        KnowledgeMap::new(vec![
            entry(
                "Major Depressive Disorder",
                &["MDD", "major depressive disorder"],
                "mood disorder",
            ),
            entry("Depressive Disorder", &[], "mood disorder"),
            entry("Bipolar Disorder", &[], "mood disorder"),
            entry("Dysthymia", &[], "mood disorder"),
            entry("Electroacupuncture", &[], "acupuncture therapy"),
            entry("Warfarin", &[], "anticoagulant"),
            entry("Heparin", &[], "anticoagulant"),
        ])
        .unwrap()
    }

    #[test]
    fn resolves_abbreviation() {
        let m = map();
        assert_eq!(m.lookup("mdd"), Some(0));
        assert_eq!(m.entries()[0].canonical, "Major Depressive Disorder");
    }

    #[test]
    fn empty_input_is_empty_map() {
        assert!(parse_map("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_surface_rejected() {
        let err = KnowledgeMap::new(vec![
            entry("A", &["mdd"], "p"),
            entry("B", &["MDD"], "q"),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateSurface(ref s) if s == "mdd"));
    }

    #[test]
    fn missing_parent_rejected() {
        let text = r#"{"canonical":"A","surface_forms":["a"]}"#;
        assert!(parse_map(text.as_bytes()).is_err());
    }

    #[test]
    fn extracts_longest_forms_in_order() {
        let m = map();
        let text = "electroacupuncture for Major Depressive Disorder";
        let got = m.extract_entities(text, 4);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].surface, "electroacupuncture");
        assert_eq!(got[1].surface, "Major Depressive Disorder");
        assert_eq!(got[1].entry, 0);
        assert_eq!(&text[got[1].span.0..got[1].span.1], "Major Depressive Disorder");
    }

    #[test]
    fn no_match_is_empty() {
        assert!(map().extract_entities("a study of sleep", 4).is_empty());
    }

    #[test]
    fn cap_keeps_leftmost() {
        // Brute-force oracle: all single-token matches in order, then truncate.
        let text = "MDD and MDD";
        let all: Vec<usize> = crate::text::tokenize_spans(text)
            .iter()
            .filter(|t| t.text == "mdd")
            .map(|t| t.start)
            .collect();
        assert_eq!(all, [0, 8]);
        let got = map().extract_entities(text, 1);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].span.0, all[0]);
    }

    #[test]
    fn no_partial_token_matches() {
        assert!(map().extract_entities("warfarinlike agents", 4).is_empty());
    }

    #[test]
    fn similar_for_abbreviation_without_siblings() {
        let m = KnowledgeMap::new(vec![
            entry("Major Depressive Disorder", &["MDD"], "mood disorder"),
            entry("Warfarin", &[], "anticoagulant"),
        ])
        .unwrap();
        let mention = &m.extract_entities("MDD", 4)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(m.sample_similar(mention, &mut rng), "Major Depressive Disorder");
    }

    #[test]
    fn similar_forced_canonical() {
        let m = KnowledgeMap::new(vec![
            entry("Dysthymia", &[], "mood disorder"),
            entry("Warfarin", &[], "anticoagulant"),
        ])
        .unwrap();
        let mention = &m.extract_entities("Dysthymia", 4)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(m.sample_similar(mention, &mut rng), "Dysthymia");
    }

    #[test]
    fn similar_is_uniform_over_siblings() {
        // "Dysthymia" has three other siblings under "mood disorder".
        let m = map();
        let mention = &m.extract_entities("Dysthymia", 4)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts: HashMap<String, usize> = HashMap::new();
        let n = 10_000;
        for _ in 0..n {
            *counts.entry(m.sample_similar(mention, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        assert!(!counts.contains_key("Dysthymia"));
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for c in counts.values() {
            let dev = *c as f64 - n as f64 * p;
            assert!(dev.abs() < 3.0 * sigma, "{counts:?}");
            chi2 += dev * dev / (n as f64 * p);
        }
        // 2 dof, p = 0.001 critical value.
        assert!(chi2 < 13.82, "chi2 {chi2}");

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(m.sample_similar(mention, &mut a), m.sample_similar(mention, &mut b));
    }

    #[test]
    fn similar_shares_parent_dissimilar_does_not() {
        let m = map();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (i, e) in m.entries().iter().enumerate() {
            let mention = &m.extract_entities(&e.canonical, 1)[0];
            for _ in 0..20 {
                let s = m.sample_similar(mention, &mut rng);
                assert_eq!(m.entries()[m.lookup(&s).unwrap()].parent, e.parent);
                let d = m.sample_dissimilar(i, &mut rng).unwrap();
                assert_ne!(m.entries()[m.lookup(&d).unwrap()].parent, e.parent);
            }
        }
    }

    #[test]
    fn dissimilar_picks_other_parent_deterministically() {
        let m = map();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let x = m.sample_dissimilar(0, &mut a).unwrap();
        assert_eq!(x, m.sample_dissimilar(0, &mut b).unwrap());
        assert!(["Electroacupuncture", "Warfarin", "Heparin"].contains(&x.as_str()));
    }

    #[test]
    fn single_parent_has_no_dissimilar() {
        let m = KnowledgeMap::new(vec![entry("A", &[], "p"), entry("B", &[], "p")]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            m.sample_dissimilar(0, &mut rng),
            Err(Error::NoDissimilarConcept)
        ));
    }

    proptest::proptest! {
        #[test]
        fn mentions_sorted_and_disjoint(words in proptest::collection::vec(
            proptest::sample::select(vec!["mdd", "major", "depressive", "disorder", "warfarin", "and", "x"]), 0..20)) {
            let text = words.join(" ");
            let got = map().extract_entities(&text, 100);
            for w in got.windows(2) {
                proptest::prop_assert!(w[0].span.1 <= w[1].span.0);
            }
            for m in &got {
                proptest::prop_assert_eq!(normalize_phrase(&text[m.span.0..m.span.1]), normalize_phrase(&m.surface));
            }
        }
    }
}
