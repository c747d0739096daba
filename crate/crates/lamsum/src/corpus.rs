//! Corpus loading, validation, and addressing.
//!
//! A corpus is an ordered list of textual units (posts). Ids are assigned
//! densely in file order; any ids present in the input are ignored. Text is
//! trimmed and NFC-normalized, never lowercased.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::Error;

/// Bucket name used by evaluation for units with no category tags.
pub const UNCATEGORIZED: &str = "uncategorized";

/// Dense 0-based unit identifier; equals the unit's position in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub u32);

impl UnitId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One post: the atomic candidate for summary inclusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualUnit {
    pub id: UnitId,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub categories: BTreeSet<String>,
}

/// Immutable ordered collection of units with dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    units: Vec<TextualUnit>,
}

impl Corpus {
    /// Builds a corpus from (text, categories) pairs, assigning dense ids in
    /// order. Texts are trimmed and NFC-normalized; empty texts are rejected.
    pub fn from_parts(parts: Vec<(String, BTreeSet<String>)>) -> Result<Self, Error> {
        if parts.is_empty() {
            return Err(Error::InvalidCorpus("corpus is empty".into()));
        }
        let mut units = Vec::with_capacity(parts.len());
        for (i, (text, categories)) in parts.into_iter().enumerate() {
            let text = normalize_text(&text);
            if text.is_empty() {
                return Err(Error::InvalidCorpus(format!(
                    "unit {i} has empty text after trimming"
                )));
            }
            units.push(TextualUnit {
                id: UnitId(i as u32),
                text,
                categories,
            });
        }
        Ok(Corpus { units })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[TextualUnit] {
        &self.units
    }

    pub fn unit(&self, id: UnitId) -> &TextualUnit {
        &self.units[id.index()]
    }

    pub fn contains(&self, id: UnitId) -> bool {
        id.index() < self.units.len()
    }

    pub fn ids(&self) -> Vec<UnitId> {
        (0..self.units.len() as u32).map(UnitId).collect()
    }

    pub fn text(&self, id: UnitId) -> &str {
        &self.units[id.index()].text
    }
}

/// Trim surrounding whitespace and normalize to NFC. No case folding.
pub fn normalize_text(raw: &str) -> String {
    raw.trim().nfc().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess the format from a file extension; defaults to JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
    #[serde(default)]
    categories: Vec<String>,
}

/// Loads a corpus file. Ids found in the input are ignored and reassigned
/// densely in file order (the remapping is logged).
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, Error> {
    let parts = match format {
        CorpusFormat::Jsonl => read_jsonl_parts(path)?,
        CorpusFormat::Csv => read_csv_parts(path)?,
    };
    if parts.is_empty() {
        return Err(Error::InvalidCorpus(format!("{}: no units found", path.display())));
    }
    let mut units = Vec::with_capacity(parts.len());
    for (i, (line, text, categories)) in parts.into_iter().enumerate() {
        let text = normalize_text(&text);
        if text.is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: "text is empty after trimming".into(),
            });
        }
        units.push(TextualUnit {
            id: UnitId(i as u32),
            text,
            categories: categories
                .into_iter()
                .map(|c| normalize_text(&c))
                .filter(|c| !c.is_empty())
                .collect(),
        });
    }
    Ok(Corpus { units })
}

type RawPart = (usize, String, Vec<String>);

fn read_jsonl_parts(path: &Path) -> Result<Vec<RawPart>, Error> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut parts = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                message: e.to_string(),
            })?;
        if let Some(orig) = &record.id {
            let assigned = parts.len();
            if orig.as_u64() != Some(assigned as u64) {
                log::debug!(
                    "{}:{}: input id {} reassigned to {}",
                    path.display(),
                    lineno,
                    orig,
                    assigned
                );
            }
        }
        parts.push((lineno, record.text, record.categories));
    }
    Ok(parts)
}

fn read_csv_parts(path: &Path) -> Result<Vec<RawPart>, Error> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, &e))?
        .clone();
    let text_col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("text"))
        .ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "missing required column `text`".into(),
        })?;
    let cat_col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("categories"));

    let mut parts = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_error(path, &e))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(parts.len() + 2);
        let text = record.get(text_col).unwrap_or("").to_string();
        let categories = cat_col
            .and_then(|c| record.get(c))
            .map(|cell| {
                cell.split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        parts.push((line, text, categories));
    }
    Ok(parts)
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    let line = match e.position() {
        Some(pos) => pos.line() as usize,
        None => 0,
    };
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Writes units as JSONL (one object per unit), the same schema `load_corpus`
/// reads, so summaries round-trip as corpora.
pub fn write_units_jsonl<W: Write>(units: &[TextualUnit], mut writer: W, path: &Path) -> Result<(), Error> {
    for unit in units {
        let line = serde_json::to_string(unit).expect("unit serialization cannot fail");
        writeln!(writer, "{line}").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

/// One annotator's gold summary: the ids they selected, in their order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub annotator_id: String,
    pub unit_ids: Vec<UnitId>,
}

/// Loads reference summaries (JSONL, one record per annotator) and validates
/// them against the corpus: non-empty, ids in range, no duplicates.
pub fn load_references(path: &Path, corpus: &Corpus) -> Result<Vec<ReferenceSummary>, Error> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut references = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let reference: ReferenceSummary =
            serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                message: e.to_string(),
            })?;
        validate_reference(&reference, corpus)
            .map_err(|message| Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                message,
            })?;
        references.push(reference);
    }
    if references.is_empty() {
        return Err(Error::InvalidReferences(format!(
            "{}: no references found",
            path.display()
        )));
    }
    Ok(references)
}

fn validate_reference(reference: &ReferenceSummary, corpus: &Corpus) -> Result<(), String> {
    if reference.unit_ids.is_empty() {
        return Err(format!(
            "reference `{}` must be non-empty",
            reference.annotator_id
        ));
    }
    let mut seen = BTreeSet::new();
    for &id in &reference.unit_ids {
        if !corpus.contains(id) {
            return Err(format!(
                "reference `{}` cites unknown unit id {id} (corpus has {} units)",
                reference.annotator_id,
                corpus.len()
            ));
        }
        if !seen.insert(id) {
            return Err(format!(
                "reference `{}` lists unit id {id} more than once",
                reference.annotator_id
            ));
        }
    }
    Ok(())
}
