//! Pipeline configuration.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationConfig;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Shuffle variants + voting (the full pipeline).
    Lamsum,
    /// Single unshuffled call per chunk, no voting (ablation baseline).
    Vanilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VotingRule {
    Plurality,
    PavSequential,
    PavExact,
    Borda,
}

impl VotingRule {
    /// Whether ballots are rankings (Borda) rather than approval sets.
    pub fn is_ranked(self) -> bool {
        matches!(self, VotingRule::Borda)
    }
}

/// LLM sampling/window parameters attached to every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub context_budget_tokens: u32,
}

impl Default for LlmParams {
    fn default() -> Self {
        LlmParams {
            temperature: 0.0,
            top_p: 1.0,
            max_output_tokens: 8192,
            context_budget_tokens: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Final summary size.
    pub k: usize,
    /// Chunk size in units.
    pub s: usize,
    /// Per-chunk summary size (defaults to k).
    pub q: usize,
    /// Number of shuffle variants per chunk.
    pub m: usize,
    pub mode: Mode,
    pub voting_rule: VotingRule,
    pub seed: u64,
    pub llm: LlmParams,
    pub calibration: CalibrationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 50,
            s: 100,
            q: 50,
            m: 3,
            mode: Mode::Lamsum,
            voting_rule: VotingRule::PavSequential,
            seed: 0,
            llm: LlmParams::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Enforces 1 <= k <= q < s, and m >= 1 in lamsum mode (vanilla ignores
    /// m and the voting rule).
    pub fn validate(&self) -> Result<(), Error> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.q < self.k {
            return Err(Error::Config(format!(
                "q ({}) must be at least k ({})",
                self.q, self.k
            )));
        }
        if self.s <= self.q {
            return Err(Error::Config(format!(
                "chunk size s ({}) must exceed q ({})",
                self.s, self.q
            )));
        }
        if self.mode == Mode::Lamsum && self.m < 1 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        self.calibration.validate()
    }
}
