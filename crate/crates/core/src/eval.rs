//! Ranking metrics over judged candidate pools, with bootstrap intervals.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BOOTSTRAP: usize = 1000;

fn check(labels: &[u8], k: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invalid("empty ranked list"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

fn hits(labels: &[u8], k: usize) -> usize {
    labels.iter().take(k).filter(|&&l| l == 1).count()
}

/// Relevant in the top `k`, divided by `k` even when the list is shorter.
pub fn precision_at_k(labels: &[u8], k: usize) -> Result<f64> {
    check(labels, k)?;
    Ok(hits(labels, k) as f64 / k as f64)
}

pub fn recall_at_k(labels: &[u8], k: usize, total_relevant: usize) -> Result<f64> {
    check(labels, k)?;
    if total_relevant == 0 {
        return Err(Error::invalid("recall undefined without relevant candidates"));
    }
    Ok(hits(labels, k) as f64 / total_relevant as f64)
}

/// Binary-gain nDCG with a log2(rank+1) discount; the ideal ordering is
/// taken over the whole list.
pub fn ndcg_at_k(labels: &[u8], k: usize) -> Result<f64> {
    check(labels, k)?;
    let total = labels.iter().filter(|&&l| l == 1).count();
    if total == 0 {
        return Err(Error::invalid("nDCG undefined without relevant candidates"));
    }
    let disc = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = labels
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| l == 1)
        .map(|(i, _)| disc(i))
        .sum();
    let idcg: f64 = (0..total.min(k)).map(disc).sum();
    Ok(dcg / idcg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judged {
    pub id: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryJudgments {
    pub query: String,
    pub candidates: Vec<Judged>,
}

impl QueryJudgments {
    pub fn label(&self, id: &str) -> Option<u8> {
        self.candidates.iter().find(|c| c.id == id).map(|c| c.label)
    }

    pub fn total_relevant(&self) -> usize {
        self.candidates.iter().filter(|c| c.label == 1).count()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if c.label > 1 {
                return Err(format!("label {} for {:?} is not 0 or 1", c.label, c.id));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(format!("duplicate candidate {:?}", c.id));
            }
        }
        Ok(())
    }
}

pub fn parse_judgments(reader: impl BufRead) -> Result<Vec<QueryJudgments>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryJudgments = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        q.validate().map_err(|message| Error::Parse { line: i + 1, message })?;
        if !seen.insert(q.query.clone()) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate query {:?}", q.query),
            });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_judgments(path: &Path) -> Result<Vec<QueryJudgments>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(std::io::BufReader::new(f))
}

pub fn judgments_to_jsonl(judgments: &[QueryJudgments]) -> String {
    judgments
        .iter()
        .map(|q| serde_json::to_string(q).expect("judgments serialize") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Queries contributing to this metric.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub ranking: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ranker: String,
    pub ks: Vec<usize>,
    pub bootstrap_n: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub per_query: Vec<QueryResult>,
    /// Queries the ranker failed on, with the reason.
    pub failed: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|m| m.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "ranker: {}  queries: {}  failed: {}\n",
            self.ranker,
            self.per_query.len(),
            self.failed.len()
        );
        s.push_str(&format!("{:<10} {:>7}  {:>17}  {:>4}\n", "metric", "mean", "95% CI", "n"));
        for (name, m) in &self.metrics {
            s.push_str(&format!(
                "{:<10} {:>7.4}  [{:.4}, {:.4}]  {:>4}\n",
                name, m.mean, m.ci_low, m.ci_high, m.n
            ));
        }
        s
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap of the mean. The interval is widened, if needed, to
/// contain the sample mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(values: &[f64], n: usize, rng: &mut R) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if n == 0 {
        return (mean, mean);
    }
    let mut means: Vec<f64> = (0..n)
        .map(|_| (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).sum::<f64>() / values.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = percentile(&means, 0.025);
    let hi = percentile(&means, 0.975);
    (lo.min(mean), hi.max(mean))
}

/// Re-ranks each query's pool with `ranker` and scores the result.
///
/// The ranker receives the query id and the pool's candidate ids and must
/// return a permutation of them.
pub fn evaluate_run(
    ranker_name: &str,
    mut ranker: impl FnMut(&str, &[String]) -> Result<Vec<String>>,
    judgments: &[QueryJudgments],
    ks: &[usize],
    bootstrap_n: usize,
    seed: u64,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("ks must be non-empty and positive"));
    }
    let mut report = EvalReport {
        ranker: ranker_name.to_string(),
        ks: ks.to_vec(),
        bootstrap_n,
        seed,
        metrics: BTreeMap::new(),
        per_query: Vec::new(),
        failed: BTreeMap::new(),
    };
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for q in judgments {
        if q.candidates.is_empty() {
            report.failed.insert(q.query.clone(), "empty candidate pool".into());
            continue;
        }
        let pool: Vec<String> = q.candidates.iter().map(|c| c.id.clone()).collect();
        let ranking = match ranker(&q.query, &pool) {
            Ok(r) => r,
            Err(e) => {
                warn!("ranker failed on {:?}: {e}", q.query);
                report.failed.insert(q.query.clone(), e.to_string());
                continue;
            }
        };
        let mut sorted_r = ranking.clone();
        sorted_r.sort();
        let mut sorted_p = pool.clone();
        sorted_p.sort();
        if sorted_r != sorted_p {
            report
                .failed
                .insert(q.query.clone(), "ranking is not a permutation of the pool".into());
            continue;
        }
        let labels: Vec<u8> = ranking.iter().map(|id| q.label(id).unwrap_or(0)).collect();
        let total = q.total_relevant();
        if total == 0 {
            warn!("query {:?} has no relevant candidates; excluded from recall and nDCG", q.query);
        }
        let mut m = BTreeMap::new();
        for &k in ks {
            m.insert(format!("prec@{k}"), precision_at_k(&labels, k)?);
            if total > 0 {
                m.insert(format!("rec@{k}"), recall_at_k(&labels, k, total)?);
                m.insert(format!("ndcg@{k}"), ndcg_at_k(&labels, k)?);
            }
        }
        for (name, v) in &m {
            values.entry(name.clone()).or_default().push(*v);
        }
        report.per_query.push(QueryResult {
            query: q.query.clone(),
            ranking,
            metrics: m,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, v) in values {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let (ci_low, ci_high) = bootstrap_ci(&v, bootstrap_n, &mut rng);
        report.metrics.insert(
            name,
            MetricSummary {
                mean,
                ci_low,
                ci_high,
                n: v.len(),
            },
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_examples() {
        assert!((precision_at_k(&[1, 1, 0, 1, 0], 5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(precision_at_k(&[0, 0, 0], 3).unwrap(), 0.0);
        assert_eq!(precision_at_k(&[1], 1).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[1, 1], 4).unwrap(), 0.5);
        assert!(precision_at_k(&[], 1).is_err());
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[1, 0, 1, 0, 0], 2, 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(&[1, 1], 2, 2).unwrap(), 1.0);
        assert!(recall_at_k(&[0, 0], 2, 0).is_err());
        assert!(recall_at_k(&[1, 0, 1], 3, 2).unwrap() <= 1.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[1, 1, 0, 0], 5).unwrap(), 1.0);
        let v = ndcg_at_k(&[1, 0, 1, 0, 0], 5).unwrap();
        assert!((v - 1.5 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-12);
        assert!((v - 0.91972).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&[1, 1, 1], 2).unwrap(), 1.0);
        assert!(ndcg_at_k(&[0, 0], 2).is_err());
    }

    fn j(query: &str, labels: &[u8]) -> QueryJudgments {
        QueryJudgments {
            query: query.into(),
            candidates: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| Judged {
                    id: format!("{query}-{i}"),
                    label,
                })
                .collect(),
        }
    }

    #[test]
    fn oracle_ranker_is_perfect() {
        let js = vec![j("a", &[0, 1, 0, 1]), j("b", &[0, 0, 0, 1]), j("c", &[1, 0])];
        let by_label = js.clone();
        let report = evaluate_run(
            "oracle",
            |q, pool| {
                let qj = by_label.iter().find(|x| x.query == q).unwrap();
                let mut p = pool.to_vec();
                p.sort_by_key(|id| std::cmp::Reverse(qj.label(id)));
                Ok(p)
            },
            &js,
            &[1, 5],
            100,
            0,
        )
        .unwrap();
        assert_eq!(report.mean("prec@1"), Some(1.0));
        assert_eq!(report.mean("ndcg@5"), Some(1.0));
    }

    #[test]
    fn identity_ranker_hand_means() {
        let js = vec![j("a", &[1, 0, 1, 0, 0]), j("b", &[0, 1, 0, 0, 0]), j("c", &[1, 1, 0, 0, 0])];
        let report = evaluate_run("identity", |_, p| Ok(p.to_vec()), &js, &[1, 5], 200, 7).unwrap();
        assert!((report.mean("prec@1").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let ndcg_b = (1.0 / 3f64.log2()) / 1.0;
        let want = (1.5 / (1.0 + 1.0 / 3f64.log2()) + ndcg_b + 1.0) / 3.0;
        assert!((report.mean("ndcg@5").unwrap() - want).abs() < 1e-12);
        assert!((report.mean("rec@1").unwrap() - (0.5 + 0.0 + 0.5) / 3.0).abs() < 1e-12);
        for m in report.metrics.values() {
            assert!(m.ci_low <= m.mean && m.mean <= m.ci_high);
        }
        let again = evaluate_run("identity", |_, p| Ok(p.to_vec()), &js, &[1, 5], 200, 7).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn failures_and_zero_relevant() {
        let js = vec![j("a", &[1, 0]), j("b", &[0, 0]), j("c", &[0, 1])];
        let report = evaluate_run(
            "partial",
            |q, p| {
                if q == "c" {
                    Err(Error::invalid("boom"))
                } else {
                    Ok(p.to_vec())
                }
            },
            &js,
            &[1],
            10,
            0,
        )
        .unwrap();
        assert_eq!(report.failed.len(), 1);
        assert_eq!(report.metrics["prec@1"].n, 2);
        assert_eq!(report.metrics["ndcg@1"].n, 1);
    }

    #[test]
    fn single_resample_ci() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (lo, hi) = bootstrap_ci(&[0.5], 1, &mut rng);
        assert_eq!((lo, hi), (0.5, 0.5));
    }

    #[test]
    fn judgments_round_trip() {
        let js = vec![j("a", &[1, 0]), j("b", &[0, 1])];
        let text = judgments_to_jsonl(&js);
        assert!(text.starts_with(r#"{"query":"a","candidates":[{"id":"a-0","label":1}"#));
        assert_eq!(parse_judgments(text.as_bytes()).unwrap(), js);
        assert!(parse_judgments(r#"{"query":"a","candidates":[{"id":"x","label":2}]}"#.as_bytes()).is_err());
        assert!(parse_judgments(r#"{"query":"a","candidates":[{"id":"x","label":1},{"id":"x","label":0}]}"#.as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn metric_invariants(labels in proptest::collection::vec(0u8..2, 1..12), k in 1usize..12) {
            let total = labels.iter().filter(|&&l| l == 1).count();
            let p = precision_at_k(&labels, k).unwrap();
            proptest::prop_assert!(((p * k as f64).round() - p * k as f64).abs() < 1e-9);
            if total > 0 {
                let r = recall_at_k(&labels, k, total).unwrap();
                proptest::prop_assert!(((r * total as f64).round() - r * total as f64).abs() < 1e-9);
                let n = ndcg_at_k(&labels, k).unwrap();
                proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
                if let Some(pos) = labels.iter().take(k).position(|&l| l == 0) {
                    let mut better = labels.clone();
                    better[pos] = 1;
                    proptest::prop_assert!(ndcg_at_k(&better, k).unwrap() >= n - 1e-12);
                    proptest::prop_assert!(precision_at_k(&better, k).unwrap() >= p);
                }
            }
        }
    }
}
