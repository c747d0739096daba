//! Output calibration: snap every LLM-emitted line onto a real corpus unit.
//!
//! Per line, in order: exact text match within the chunk slice; else nearest
//! unit by normalized edit distance when it beats the epsilon threshold; else
//! the unit with the largest keyword overlap. A line matching nothing at all
//! still snaps to the minimum-distance unit (with a warning), so calibration
//! is total and the pipeline's subset guarantee holds for arbitrary backend
//! output.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, Corpus, UnitId};
use crate::error::Error;

/// Embedded default stopword list (lowercase). Loadable replacement via
/// [`load_stopwords`].
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "isn", "it", "its",
    "itself", "just", "let", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "ought", "our", "ours", "ourselves", "out", "over",
    "own", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

/// Optional drop-in replacement for the default keyword filter (e.g. a POS
/// tagger); receives the raw line, returns its keyword set.
pub type KeywordFn = fn(&str) -> BTreeSet<String>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Normalized edit-distance threshold: a match requires
    /// `distance / max(len_line, len_unit) < epsilon`.
    pub epsilon: f64,
    /// Minimum keyword length in characters.
    pub keyword_min_length: usize,
    pub stopwords: BTreeSet<String>,
    #[serde(skip)]
    pub keyword_hook: Option<KeywordFn>,
}

/// Equality over the data fields; the hook is a runtime-only injection with
/// no meaningful address identity.
impl PartialEq for CalibrationConfig {
    fn eq(&self, other: &Self) -> bool {
        self.epsilon == other.epsilon
            && self.keyword_min_length == other.keyword_min_length
            && self.stopwords == other.stopwords
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            epsilon: 0.5,
            keyword_min_length: 3,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            keyword_hook: None,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "calibration epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Reads a stopword list: one word per line, blank lines ignored.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>, Error> {
    let contents = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(contents
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Levenshtein distance (unit insert/delete/substitute costs) over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Banded Levenshtein: returns the exact distance if it is <= `limit`, else
/// None. Used by the nearest-unit search so that candidates which cannot beat
/// the current best are abandoned early.
fn edit_distance_bounded(a: &[char], b: &[char], limit: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > limit {
        return None;
    }
    let (n, m) = (a.len(), b.len());
    const INF: usize = usize::MAX / 2;
    let mut prev: Vec<usize> = (0..=m).map(|j| if j <= limit { j } else { INF }).collect();
    let mut cur: Vec<usize> = vec![INF; m + 1];
    for i in 1..=n {
        let lo = i.saturating_sub(limit);
        let hi = (i + limit).min(m);
        let mut row_min = INF;
        if lo == 0 {
            cur[0] = i;
            row_min = i;
        } else {
            cur[lo - 1] = INF;
        }
        for j in lo.max(1)..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = prev[j].saturating_add(1);
            let ins = cur[j - 1].saturating_add(1);
            let best = sub.min(del).min(ins);
            cur[j] = best;
            row_min = row_min.min(best);
        }
        if hi < m {
            cur[hi + 1] = INF;
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (prev[m] <= limit).then_some(prev[m])
}

/// Lowercased content words: tokens of alphanumeric runs with length >=
/// `keyword_min_length` that are not stopwords. A configured hook replaces
/// this filter entirely.
pub fn extract_keywords(text: &str, config: &CalibrationConfig) -> BTreeSet<String> {
    if let Some(hook) = config.keyword_hook {
        return hook(text);
    }
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= config.keyword_min_length)
        .filter(|t| !config.stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Exact,
    EditDistance,
    Keyword,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub matched_id: UnitId,
    pub method: CalibrationMethod,
    /// The deciding normalized distance (exact = 0.0) or keyword count.
    pub score: f64,
}

/// Calibrates lines against the corpus slice `[si, ei)`.
pub fn check(
    lines: &[String],
    corpus: &Corpus,
    si: usize,
    ei: usize,
    config: &CalibrationConfig,
) -> Vec<CalibrationResult> {
    assert!(si < ei && ei <= corpus.len(), "slice [{si}, {ei}) out of range");
    let candidates: Vec<(UnitId, &str)> = corpus.units()[si..ei]
        .iter()
        .map(|u| (u.id, u.text.as_str()))
        .collect();
    check_against(lines, &candidates, config)
}

/// Calibrates lines against an explicit candidate list (id, text). Candidates
/// are the chunk's units in their current level order; ties anywhere break
/// toward the lower unit id.
pub fn check_against(
    lines: &[String],
    candidates: &[(UnitId, &str)],
    config: &CalibrationConfig,
) -> Vec<CalibrationResult> {
    assert!(!candidates.is_empty(), "calibration needs at least one candidate");

    let mut exact: HashMap<&str, UnitId> = HashMap::with_capacity(candidates.len());
    for &(id, text) in candidates {
        exact
            .entry(text)
            .and_modify(|e| {
                if id < *e {
                    *e = id;
                }
            })
            .or_insert(id);
    }

    let mut cand_chars: Option<Vec<Vec<char>>> = None;
    let mut cand_keywords: Option<Vec<BTreeSet<String>>> = None;

    lines
        .iter()
        .map(|raw| {
            let line = normalize_text(raw);
            if let Some(&id) = exact.get(line.as_str()) {
                return CalibrationResult {
                    matched_id: id,
                    method: CalibrationMethod::Exact,
                    score: 0.0,
                };
            }

            let chars = cand_chars.get_or_insert_with(|| {
                candidates.iter().map(|(_, t)| t.chars().collect()).collect()
            });
            let line_chars: Vec<char> = line.chars().collect();
            let (pos, dist, denom) = nearest_candidate(&line_chars, chars, candidates);
            let norm = dist as f64 / denom as f64;
            if norm < config.epsilon {
                return CalibrationResult {
                    matched_id: candidates[pos].0,
                    method: CalibrationMethod::EditDistance,
                    score: norm,
                };
            }

            let keywords = cand_keywords.get_or_insert_with(|| {
                candidates
                    .iter()
                    .map(|(_, t)| extract_keywords(t, config))
                    .collect()
            });
            let line_keywords = extract_keywords(&line, config);
            if !line_keywords.is_empty() {
                let mut best: Option<(usize, UnitId)> = None;
                for (p, (id, _)) in candidates.iter().enumerate() {
                    let count = keywords[p].intersection(&line_keywords).count();
                    if count == 0 {
                        continue;
                    }
                    let replace = match best {
                        None => true,
                        Some((bc, bid)) => count > bc || (count == bc && *id < bid),
                    };
                    if replace {
                        best = Some((count, *id));
                    }
                }
                if let Some((count, id)) = best {
                    return CalibrationResult {
                        matched_id: id,
                        method: CalibrationMethod::Keyword,
                        score: count as f64,
                    };
                }
            }

            log::warn!(
                "calibration: line snapped to nearest unit {} with distance {:.3} >= epsilon {} \
                 and no keyword overlap",
                candidates[pos].0,
                norm,
                config.epsilon
            );
            CalibrationResult {
                matched_id: candidates[pos].0,
                method: CalibrationMethod::EditDistance,
                score: norm,
            }
        })
        .collect()
}

/// Finds the candidate minimizing normalized edit distance
/// `d / max(len_line, len_cand)`; returns (position, distance, denominator).
///
/// Comparisons between candidates are done in exact integer arithmetic
/// (cross-multiplication), so the argmin and its id tie-break are platform
/// independent. The banded distance plus a length-difference lower bound
/// prunes candidates that cannot beat or tie the current best.
fn nearest_candidate(
    line: &[char],
    cand_chars: &[Vec<char>],
    candidates: &[(UnitId, &str)],
) -> (usize, usize, usize) {
    let la = line.len();
    let mut best: Option<(usize, usize, usize)> = None; // (pos, dist, denom)
    for (pos, chars) in cand_chars.iter().enumerate() {
        let lc = chars.len();
        let denom = la.max(lc).max(1);
        let lower = la.abs_diff(lc);
        let limit = match best {
            None => denom,
            Some((_, bd, bm)) => {
                // largest d that can still beat or tie best: d/denom <= bd/bm
                let t = (bd * denom) / bm;
                if lower > t {
                    continue;
                }
                t.min(denom)
            }
        };
        let Some(d) = edit_distance_bounded(line, chars, limit) else {
            continue;
        };
        let replace = match best {
            None => true,
            Some((bpos, bd, bm)) => {
                let lhs = d as u128 * bm as u128;
                let rhs = bd as u128 * denom as u128;
                lhs < rhs || (lhs == rhs && candidates[pos].0 < candidates[bpos].0)
            }
        };
        if replace {
            best = Some((pos, d, denom));
        }
    }
    best.expect("candidates are non-empty")
}
