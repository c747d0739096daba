//! Summary evaluation: ROUGE-1/2, summary-level ROUGE-Lsum, category
//! entropy, inter-annotator agreement, and word-count statistics.
//!
//! The ROUGE implementation mirrors the reference Python scorer: lowercase
//! ASCII-alphanumeric tokenization, clipped n-gram counts, and for Lsum the
//! union-LCS over newline-separated sentences with per-token count clipping.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ReferenceSummary, UnitId, UNCATEGORIZED};

/// Lowercases and splits into ASCII-alphanumeric runs; everything else is a
/// separator and non-ASCII characters are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in lower.chars() {
        if ch.is_ascii_alphanumeric() {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap F1 between a candidate and one reference.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    assert!(n >= 1, "n-gram order must be at least 1");
    let cand_tokens = tokenize(candidate);
    let ref_tokens = tokenize(reference);
    let cand = ngram_counts(&cand_tokens, n);
    let reference = ngram_counts(&ref_tokens, n);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = reference.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return RougeScore::default();
    }
    let matched: usize = cand
        .iter()
        .map(|(gram, count)| count.min(reference.get(gram).unwrap_or(&0)))
        .sum();
    RougeScore::new(
        matched as f64 / cand_total as f64,
        matched as f64 / ref_total as f64,
    )
}

fn sentence_tokens(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(tokenize)
        .collect()
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i][j - 1].max(t[i - 1][j])
            };
        }
    }
    t
}

/// Indices into `a` of one LCS of (a, b), using the same backtrack
/// tie-breaking as the reference scorer.
fn lcs_indices(a: &[String], b: &[String]) -> Vec<usize> {
    let t = lcs_table(a, b);
    let mut i = a.len();
    let mut j = b.len();
    let mut indices = Vec::new();
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            indices.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    indices.reverse();
    indices
}

/// Summary-level ROUGE-Lsum: for every reference sentence, take the union of
/// its LCS positions against all candidate sentences, then count hits with
/// per-token clipping against both sides' token counts.
pub fn rouge_lsum(candidate: &str, reference: &str) -> RougeScore {
    let cand_sents = sentence_tokens(candidate);
    let ref_sents = sentence_tokens(reference);
    let n: usize = cand_sents.iter().map(Vec::len).sum();
    let m: usize = ref_sents.iter().map(Vec::len).sum();
    if n == 0 || m == 0 {
        return RougeScore::default();
    }
    let mut cand_counts: HashMap<&String, usize> = HashMap::new();
    for token in cand_sents.iter().flatten() {
        *cand_counts.entry(token).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&String, usize> = HashMap::new();
    for token in ref_sents.iter().flatten() {
        *ref_counts.entry(token).or_insert(0) += 1;
    }
    let mut hits = 0usize;
    for ref_sent in &ref_sents {
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for cand_sent in &cand_sents {
            union.extend(lcs_indices(ref_sent, cand_sent));
        }
        for &idx in &union {
            let token = &ref_sent[idx];
            let c = cand_counts.get_mut(token);
            if let Some(c) = c {
                if *c > 0 {
                    let r = ref_counts.get_mut(token).expect("token came from the reference");
                    if *r > 0 {
                        hits += 1;
                        *c -= 1;
                        *r -= 1;
                    }
                }
            }
        }
    }
    RougeScore::new(hits as f64 / n as f64, hits as f64 / m as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerReference {
    pub annotator_id: String,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_lsum: RougeScore,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub mean: f64,
    pub median: f64,
    pub max: usize,
}

/// Token counts per selected unit.
pub fn word_stats(corpus: &Corpus, ids: &[UnitId]) -> WordStats {
    if ids.is_empty() {
        return WordStats::default();
    }
    let mut counts: Vec<usize> = ids
        .iter()
        .map(|&id| tokenize(corpus.text(id)).len())
        .collect();
    counts.sort_unstable();
    let n = counts.len();
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    WordStats {
        mean,
        median,
        max: *counts.last().unwrap(),
    }
}

/// Shannon entropy (bits) of the category distribution over the selected
/// units. Units with several categories contribute one count to each; units
/// with none count under the uncategorized bucket.
pub fn category_entropy(corpus: &Corpus, ids: &[UnitId]) -> (f64, BTreeMap<String, usize>) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for &id in ids {
        let unit = corpus.unit(id);
        if unit.categories.is_empty() {
            *counts.entry(UNCATEGORIZED.to_string()).or_insert(0) += 1;
        } else {
            for category in &unit.categories {
                *counts.entry(category.clone()).or_insert(0) += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        log::warn!("category entropy of an empty selection is 0");
        return (0.0, counts);
    }
    let entropy = counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    (entropy, counts)
}

/// Fleiss' kappa from an items-by-categories count matrix. Every row must sum
/// to the same number of raters (at least 2).
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> f64 {
    assert!(!counts.is_empty(), "kappa needs at least one item");
    let n_raters: usize = counts[0].iter().sum();
    assert!(n_raters >= 2, "kappa needs at least two raters");
    assert!(
        counts.iter().all(|row| row.iter().sum::<usize>() == n_raters),
        "every item must be rated by the same number of raters"
    );
    let n_items = counts.len() as f64;
    let n = n_raters as f64;
    let p_bar: f64 = counts
        .iter()
        .map(|row| {
            let sq: usize = row.iter().map(|&c| c * c).sum();
            (sq as f64 - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / n_items;
    let n_categories = counts[0].len();
    let pe: f64 = (0..n_categories)
        .map(|j| {
            let col: usize = counts.iter().map(|row| row[j]).sum();
            let p = col as f64 / (n_items * n);
            p * p
        })
        .sum();
    if (1.0 - pe).abs() < 1e-12 {
        // Total agreement with zero chance-corrected headroom.
        return 1.0;
    }
    (p_bar - pe) / (1.0 - pe)
}

/// Agreement among annotators, treating every corpus unit as an item rated
/// selected / not-selected by each annotator. None with fewer than two
/// annotators.
pub fn fleiss_kappa_from_references(
    corpus_len: usize,
    references: &[ReferenceSummary],
) -> Option<f64> {
    if references.len() < 2 {
        return None;
    }
    let n_raters = references.len();
    let mut counts = vec![vec![0usize; 2]; corpus_len];
    for reference in references {
        for id in &reference.unit_ids {
            counts[id.index()][0] += 1;
        }
    }
    for row in &mut counts {
        row[1] = n_raters - row[0];
    }
    Some(fleiss_kappa(&counts))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_units: usize,
    /// Averages over references.
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_lsum: RougeScore,
    pub per_reference: Vec<PerReference>,
    pub category_entropy: f64,
    pub category_counts: BTreeMap<String, usize>,
    pub fleiss_kappa: Option<f64>,
    pub word_stats: WordStats,
}

fn average(scores: impl Iterator<Item = RougeScore> + Clone, n: usize) -> RougeScore {
    if n == 0 {
        return RougeScore::default();
    }
    let mut sum = RougeScore::default();
    for s in scores {
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f1 += s.f1;
    }
    RougeScore {
        precision: sum.precision / n as f64,
        recall: sum.recall / n as f64,
        f1: sum.f1 / n as f64,
    }
}

/// Scores a selected summary against every reference and assembles the full
/// report. Texts are joined with newlines so each unit is one sentence for
/// the summary-level LCS.
pub fn score_summary(
    corpus: &Corpus,
    summary_ids: &[UnitId],
    references: &[ReferenceSummary],
) -> EvalReport {
    let candidate = summary_ids
        .iter()
        .map(|&id| corpus.text(id))
        .collect::<Vec<_>>()
        .join("\n");
    let per_reference: Vec<PerReference> = references
        .iter()
        .map(|reference| {
            let text = reference
                .unit_ids
                .iter()
                .map(|&id| corpus.text(id))
                .collect::<Vec<_>>()
                .join("\n");
            PerReference {
                annotator_id: reference.annotator_id.clone(),
                rouge1: rouge_n(&candidate, &text, 1),
                rouge2: rouge_n(&candidate, &text, 2),
                rouge_lsum: rouge_lsum(&candidate, &text),
            }
        })
        .collect();
    let n = per_reference.len();
    let (entropy, category_counts) = category_entropy(corpus, summary_ids);
    EvalReport {
        n_units: summary_ids.len(),
        rouge1: average(per_reference.iter().map(|p| p.rouge1), n),
        rouge2: average(per_reference.iter().map(|p| p.rouge2), n),
        rouge_lsum: average(per_reference.iter().map(|p| p.rouge_lsum), n),
        per_reference,
        category_entropy: entropy,
        category_counts,
        fleiss_kappa: fleiss_kappa_from_references(corpus.len(), references),
        word_stats: word_stats(corpus, summary_ids),
    }
}

impl EvalReport {
    /// Plain-text table for terminal output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("summary units: {}\n", self.n_units));
        out.push_str("metric      precision   recall       f1\n");
        for (name, score) in [
            ("rouge1", self.rouge1),
            ("rouge2", self.rouge2),
            ("rougeLsum", self.rouge_lsum),
        ] {
            out.push_str(&format!(
                "{name:<11} {:>9.4} {:>8.4} {:>8.4}\n",
                score.precision, score.recall, score.f1
            ));
        }
        out.push_str(&format!(
            "references: {}   fleiss_kappa: {}\n",
            self.per_reference.len(),
            self.fleiss_kappa
                .map(|k| format!("{k:.4}"))
                .unwrap_or_else(|| "n/a".to_string())
        ));
        out.push_str(&format!(
            "category entropy: {:.4} bits over {} categories\n",
            self.category_entropy,
            self.category_counts.len()
        ));
        out.push_str(&format!(
            "words per unit: mean {:.1}, median {:.1}, max {}\n",
            self.word_stats.mean, self.word_stats.median, self.word_stats.max
        ));
        out
    }
}
