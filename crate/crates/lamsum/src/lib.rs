//! Extractive summarization of large post collections with LLM voters.
//!
//! A corpus of N textual units is reduced to exactly k of them, verbatim, by a
//! multi-level pipeline: each level slices the current unit list into chunks of
//! s units, asks an LLM to summarize every chunk m times over seeded shuffles
//! (defeating positional bias), snaps every emitted line back onto a real unit
//! (so the output is always a true subset of the input), and aggregates the m
//! per-chunk ballots with a multi-winner voting rule. Levels repeat until k
//! units remain.
//!
//! The crate also ships the evaluation stack used to score summaries
//! (ROUGE-1/2/Lsum, category entropy, Fleiss' kappa, word stats), mock
//! backends for offline runs, and an OpenAI-compatible HTTP backend.

pub mod backend;
pub mod calibration;
pub mod chunk_summarizer;
pub mod chunker;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod orchestrator;
pub mod voting;

pub use backend::{BackendError, CallContext, Completion, LlmBackend, LlmRequest, PromptKind};
pub use calibration::{CalibrationConfig, CalibrationMethod, CalibrationResult};
pub use chunker::{plan_chunks, Chunk, ChunkPlan};
pub use config::{LlmParams, Mode, PipelineConfig, VotingRule};
pub use corpus::{load_corpus, load_references, Corpus, CorpusFormat, ReferenceSummary, TextualUnit, UnitId};
pub use error::{Error, ErrorCategory};
pub use evaluation::EvalReport;
pub use manifest::RunManifest;
pub use orchestrator::{summarize, summarize_vanilla, LevelTrace, SummarySelection};
pub use voting::{ApprovalProfile, ElectionDump, ElectionOutcome, RankedProfile};
