//! Run provenance: per-call records and the manifest written next to each
//! summary so a run can be audited and reproduced.
//!
//! Prompt and response bodies are not stored, only their SHA-256 digests and
//! character counts. That is enough to prove two runs made identical calls
//! without persisting corpus text into run artifacts.

use serde::{Deserialize, Serialize};

use crate::backend::PromptKind;
use crate::chunk_summarizer::CalibrationCounts;
use crate::config::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub level: usize,
    pub chunk_index: usize,
    /// 1..=m for shuffle variants, 0 for unshuffled single-pass calls.
    pub shuffle_index: usize,
    pub kind: PromptKind,
    pub prompt_sha256: String,
    pub prompt_chars: usize,
    pub response_sha256: String,
    pub response_chars: usize,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCounters {
    /// Completed LLM calls.
    pub calls: usize,
    /// Attempts across all calls, including retries.
    pub attempts: usize,
    /// Calls that needed more than one attempt.
    pub retried_calls: usize,
}

impl ApiCounters {
    pub fn observe(&mut self, record: &CallRecord) {
        self.calls += 1;
        self.attempts += record.attempts as usize;
        if record.attempts > 1 {
            self.retried_calls += 1;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub path: String,
    pub format: String,
    pub n_units: usize,
}

/// Everything needed to audit one summarization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub corpus: CorpusInfo,
    pub config: PipelineConfig,
    pub backend: String,
    pub levels: usize,
    /// Level sizes from the input length down to the final k.
    pub level_sizes: Vec<usize>,
    pub api: ApiCounters,
    pub calibration: CalibrationCounts,
    pub tie_events: usize,
    pub summary_unit_ids: Vec<u32>,
    /// Wall-clock duration; excluded from reproducibility comparisons.
    pub elapsed_ms: u128,
    pub call_records: Vec<CallRecord>,
}
