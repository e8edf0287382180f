//! Synthetic trial corpus with a known relevance structure.
//!
//! Every trial belongs to one disease family. Diseases are knowledge-map
//! concepts whose parent is the family, and trials mention them through varied
//! surface forms. Descriptions carry boilerplate shared across families (site
//! and sponsor text) so lexical overlap is a noisy relevance signal.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Trial};
use crate::error::{Error, Result};
use crate::eval::{Judged, QueryJudgments};
use crate::retrieval::{candidate_pool, fit_sparse, SparseKind};
use crate::knowledge::{ConceptEntry, KnowledgeMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_families: usize,
    pub concepts_per_family: usize,
    pub trials_per_family: usize,
    pub drugs_per_family: usize,
    /// Probability that a trial uses a drug from the cross-family pool.
    pub common_drug_prob: f64,
    /// Probability that a trial's outcome comes from its family's list.
    pub family_outcome_prob: f64,
    /// Times the site block appears in each description.
    pub site_repeats: usize,
    /// Number of shared site/sponsor boilerplate blocks.
    pub n_sites: usize,
    /// Queries are drawn only from trials whose TF-IDF pool of this size
    /// holds at least one family member.
    pub queries_per_family: usize,
    pub pool_size: usize,
    /// Families whose trials are labelled terminated.
    pub terminated_families: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_families: 10,
            concepts_per_family: 5,
            trials_per_family: 20,
            drugs_per_family: 6,
            common_drug_prob: 0.3,
            family_outcome_prob: 0.5,
            site_repeats: 1,
            n_sites: 40,
            queries_per_family: 15,
            pool_size: 10,
            terminated_families: vec![1, 3, 5, 7, 9],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub map: KnowledgeMap,
    /// Trial id → family index.
    pub family: BTreeMap<String, usize>,
    /// Trial id → disease concept index within the map.
    pub concept: BTreeMap<String, usize>,
    pub queries: Vec<String>,
}

impl SynthData {
    pub fn relevant(&self, a: &str, b: &str) -> bool {
        self.family.get(a).is_some() && self.family.get(a) == self.family.get(b)
    }
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 5] = ["", "n", "r", "l", "x"];

struct Words {
    used: HashSet<String>,
}

impl Words {
    fn word<R: Rng>(&mut self, syllables: usize, rng: &mut R) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
                w.push_str(CODAS.choose(rng).unwrap());
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

const GENERIC: [&str; 24] = [
    "patients", "will", "be", "randomized", "to", "receive", "treatment", "or", "placebo", "for", "the", "study",
    "period", "and", "followed", "up", "with", "regular", "visits", "assessments", "of", "safety", "primary",
    "endpoint",
];

const TITLE_TEMPLATES: [&str; 5] = [
    "a study of {drug} in {disease}",
    "{drug} versus placebo for {disease}",
    "effect of {drug} on {disease} outcomes",
    "trial of {drug} in patients with {disease}",
    "{disease} treated with {drug}",
];

fn sentence<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n).map(|_| *GENERIC.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut words = Words {
        used: GENERIC.iter().map(|s| s.to_string()).collect(),
    };

    let mut entries = Vec::new();
    let mut family_concepts: Vec<Vec<usize>> = Vec::new();
    let mut family_drugs: Vec<Vec<String>> = Vec::new();
    let mut family_outcomes: Vec<Vec<String>> = Vec::new();
    for _ in 0..cfg.n_families {
        let parent = format!("{} disorders", words.word(2, &mut rng));
        let mut idx = Vec::new();
        for _ in 0..cfg.concepts_per_family {
            let stem = words.word(2, &mut rng);
            let canonical = format!("{stem}itis");
            let abbrev = words.word(1, &mut rng);
            let alt = format!("{} syndrome", words.word(2, &mut rng));
            idx.push(entries.len());
            entries.push(ConceptEntry {
                canonical,
                surface_forms: vec![abbrev, alt],
                parent: parent.clone(),
            });
        }
        family_concepts.push(idx);
        family_drugs.push((0..cfg.drugs_per_family).map(|_| format!("{}mab", words.word(2, &mut rng))).collect());
        family_outcomes.push(
            (0..3)
                .map(|_| format!("{} response rate", words.word(2, &mut rng)))
                .collect::<Vec<_>>(),
        );
    }
    let common_drugs: Vec<String> = (0..8).map(|_| format!("{}ol", words.word(2, &mut rng))).collect();
    let outcomes: Vec<String> = (0..10)
        .map(|_| format!("change in {} score", words.word(2, &mut rng)))
        .collect();
    let sites: Vec<String> = (0..cfg.n_sites)
        .map(|_| {
            let w: Vec<String> = (0..4).map(|_| words.word(3, &mut rng)).collect();
            format!("conducted at {} {} with support from {} {}", w[0], w[1], w[2], w[3])
        })
        .collect();
    let map = KnowledgeMap::new(entries.clone())?;

    let mut trials = Vec::new();
    let mut family = BTreeMap::new();
    let mut concept = BTreeMap::new();
    let mut n = 0;
    for f in 0..cfg.n_families {
        for _ in 0..cfg.trials_per_family {
            n += 1;
            let id = format!("NCT{n:08}");
            let c = *family_concepts[f].choose(&mut rng).unwrap();
            let forms: Vec<&String> = std::iter::once(&entries[c].canonical)
                .chain(&entries[c].surface_forms)
                .collect();
            let disease = forms.choose(&mut rng).unwrap().to_string();
            let title_disease = forms.choose(&mut rng).unwrap().to_string();
            let drug = if rng.random_bool(cfg.common_drug_prob) {
                common_drugs.choose(&mut rng).unwrap().clone()
            } else {
                family_drugs[f].choose(&mut rng).unwrap().clone()
            };
            let title = TITLE_TEMPLATES
                .choose(&mut rng)
                .unwrap()
                .replace("{drug}", &drug)
                .replace("{disease}", &title_disease);
            let intervention = if rng.random_bool(0.5) {
                drug.clone()
            } else {
                format!("{drug} and placebo")
            };
            let outcome = if rng.random_bool(cfg.family_outcome_prob) {
                family_outcomes[f].choose(&mut rng).unwrap().clone()
            } else {
                outcomes.choose(&mut rng).unwrap().clone()
            };
            let site = sites.choose(&mut rng).unwrap();
            let mut description = format!("{}. {}.", sentence(&mut rng, 10), sentence(&mut rng, 8));
            for _ in 0..cfg.site_repeats {
                description.push(' ');
                description.push_str(site);
                description.push('.');
            }
            let criteria = format!("inclusion: adults aged 18 to 65. {}", sentence(&mut rng, 6));
            let status = if cfg.terminated_families.contains(&f) {
                "Terminated"
            } else {
                "Completed"
            };
            family.insert(id.clone(), f);
            concept.insert(id.clone(), c);
            trials.push(
                Trial {
                    id,
                    title,
                    intervention,
                    disease,
                    outcome,
                    keywords: None,
                    description: Some(description),
                    criteria: Some(criteria),
                    status: Some(status.into()),
                    context: String::new(),
                }
                .with_derived_context(),
            );
        }
    }
    let corpus = Corpus::new(trials)?;
    let tfidf = fit_sparse(&corpus, SparseKind::Tfidf)?;
    let mut queries = Vec::new();
    for f in 0..cfg.n_families {
        let mut ids: Vec<&String> = family.iter().filter(|(_, &g)| g == f).map(|(id, _)| id).collect();
        ids.shuffle(&mut rng);
        let mut taken = 0;
        for id in ids {
            if taken == cfg.queries_per_family {
                break;
            }
            let pool = candidate_pool(&tfidf, corpus.get(id).unwrap(), cfg.pool_size)?;
            if pool.iter().any(|c| family[c] == f) {
                queries.push(id.clone());
                taken += 1;
            }
        }
    }
    queries.sort();
    Ok(SynthData {
        corpus,
        map,
        family,
        concept,
        queries,
    })
}

/// TF-IDF candidate pools for every query, labelled by family.
pub fn judgments(data: &SynthData, pool_size: usize) -> Result<Vec<QueryJudgments>> {
    let model = fit_sparse(&data.corpus, SparseKind::Tfidf)?;
    data.queries
        .iter()
        .map(|q| {
            let trial = data.corpus.get(q).ok_or_else(|| Error::UnknownId(q.clone()))?;
            let pool = candidate_pool(&model, trial, pool_size)?;
            Ok(QueryJudgments {
                query: q.clone(),
                candidates: pool
                    .into_iter()
                    .map(|id| Judged {
                        label: u8::from(data.relevant(q, &id)),
                        id,
                    })
                    .collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape() {
        let d = generate(&SynthConfig::default()).unwrap();
        assert_eq!(d.corpus.len(), 200);
        assert_eq!(d.map.len(), 50);
        assert_eq!(d.map.parents().count(), 10);
        assert_eq!(d.queries.len(), 150);
        for t in d.corpus.trials() {
            let ents = d.map.extract_entities(&t.disease, 4);
            assert_eq!(ents.len(), 1, "{}", t.disease);
            assert_eq!(ents[0].entry, d.concept[&t.id]);
            assert!(!d.map.extract_entities(&t.title, 4).is_empty(), "{}", t.title);
        }
    }

    #[test]
    fn pools_have_ten_labelled_candidates() {
        let d = generate(&SynthConfig::default()).unwrap();
        let js = judgments(&d, 10).unwrap();
        assert_eq!(js.len(), 150);
        for j in &js {
            assert_eq!(j.candidates.len(), 10);
            assert!(j.candidates.iter().all(|c| c.id != j.query));
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        let c = generate(&SynthConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a.corpus.to_jsonl(), c.corpus.to_jsonl());
    }
}
