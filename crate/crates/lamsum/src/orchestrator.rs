//! The multi-level loop: chunk the current level, summarize every chunk down
//! to q units, concatenate, and repeat until k units remain.
//!
//! A level is terminal when its input fits in a single chunk of width at most
//! q; that chunk is then reduced straight to k. Because full chunks always
//! shrink (s > q) and undersized chunks pass through untouched, every level
//! with more than q units strictly shrinks, so the loop terminates. Levels
//! keep corpus order throughout: chunks are contiguous and promoted units are
//! emitted in chunk position order.

use rayon::prelude::*;
use serde::Serialize;

use crate::backend::LlmBackend;
use crate::chunk_summarizer::{self, CalibrationCounts, ChunkOutcome};
use crate::chunker::plan_chunks;
use crate::config::{Mode, PipelineConfig};
use crate::corpus::{Corpus, UnitId};
use crate::error::Error;
use crate::manifest::{ApiCounters, CallRecord};

/// Hard ceiling on levels; unreachable for any valid configuration, kept as a
/// guard against non-shrinking loops.
pub const LEVEL_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub input_size: usize,
    pub n_chunks: usize,
    pub output_size: usize,
}

/// A finished run: the selected units plus everything needed to audit how
/// they were chosen.
#[derive(Debug, Clone, Serialize)]
pub struct SummarySelection {
    /// Exactly k unit ids, in corpus order.
    pub unit_ids: Vec<UnitId>,
    pub levels: Vec<LevelTrace>,
    pub config: PipelineConfig,
    pub backend_name: String,
    pub api: ApiCounters,
    pub calibration: CalibrationCounts,
    pub tie_events: usize,
    pub call_records: Vec<CallRecord>,
}

impl SummarySelection {
    /// Output size of every level, first to last.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.output_size).collect()
    }

    pub fn texts<'a>(&self, corpus: &'a Corpus) -> Vec<&'a str> {
        self.unit_ids.iter().map(|&id| corpus.text(id)).collect()
    }
}

/// Runs one level: chunks `units`, reduces every chunk to at most `target`,
/// and concatenates the survivors in position order.
pub fn run_level(
    corpus: &Corpus,
    units: &[UnitId],
    level: usize,
    target: usize,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<(Vec<UnitId>, Vec<ChunkOutcome>), Error> {
    let plan = plan_chunks(units.len(), config.s, level);
    let outcomes: Vec<ChunkOutcome> = plan
        .chunks
        .par_iter()
        .map(|chunk| {
            let chunk_units: Vec<(UnitId, &str)> = units[chunk.start..chunk.end]
                .iter()
                .map(|&id| (id, corpus.text(id)))
                .collect();
            match config.mode {
                Mode::Lamsum => chunk_summarizer::summarize_chunk(
                    &chunk_units,
                    level,
                    chunk.index,
                    target,
                    config,
                    backend,
                ),
                Mode::Vanilla => chunk_summarizer::vanilla_chunk(
                    &chunk_units,
                    level,
                    chunk.index,
                    target,
                    config,
                    backend,
                ),
            }
        })
        .collect::<Result<_, _>>()?;

    let mut promoted = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (chunk, outcome) in plan.chunks.iter().zip(&outcomes) {
        let want = outcome.winners.len();
        let before = promoted.len();
        // Winners re-emitted in chunk position order, not score order.
        for &id in &units[chunk.start..chunk.end] {
            if outcome.winners.contains(&id) && seen.insert(id) {
                promoted.push(id);
            }
        }
        // Unreachable for well-formed outcomes; keeps level sizes exact if a
        // chunk ever returned duplicates.
        if promoted.len() - before < want {
            for &id in &outcome.ranked_pool {
                if promoted.len() - before >= want {
                    break;
                }
                if seen.insert(id) {
                    promoted.push(id);
                }
            }
        }
    }
    Ok((promoted, outcomes))
}

fn summarize_impl(
    corpus: &Corpus,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<SummarySelection, Error> {
    config.validate()?;
    if corpus.len() < config.k {
        return Err(Error::Config(format!(
            "summary length k={} exceeds the corpus size {}",
            config.k,
            corpus.len()
        )));
    }

    let mut current = corpus.ids();
    let mut levels = Vec::new();
    let mut api = ApiCounters::default();
    let mut calibration = CalibrationCounts::default();
    let mut tie_events = 0;
    let mut call_records = Vec::new();
    let mut level = 0;

    while current.len() > config.k {
        if level >= LEVEL_CAP {
            return Err(Error::LevelCapExceeded {
                cap: LEVEL_CAP,
                stuck_at: current.len(),
            });
        }
        // Terminal once the whole input fits in one chunk of width <= q: that
        // single election reduces straight to k.
        let terminal = current.len() <= config.q;
        let target = if terminal { config.k } else { config.q };
        let (next, outcomes) = run_level(corpus, &current, level, target, config, backend)?;
        for outcome in &outcomes {
            for record in &outcome.records {
                api.observe(record);
            }
            calibration.merge(&outcome.calibration);
            tie_events += outcome.tie_events;
            call_records.extend(outcome.records.iter().cloned());
        }
        levels.push(LevelTrace {
            level,
            input_size: current.len(),
            n_chunks: outcomes.len(),
            output_size: next.len(),
        });
        log::info!(
            "level {level}: {} -> {} units across {} chunks",
            current.len(),
            next.len(),
            outcomes.len()
        );
        debug_assert!(next.len() < current.len(), "levels must shrink");
        current = next;
        level += 1;
    }

    Ok(SummarySelection {
        unit_ids: current,
        levels,
        config: config.clone(),
        backend_name: backend.name(),
        api,
        calibration,
        tie_events,
        call_records,
    })
}

/// Summarizes `corpus` down to exactly k units using the configured mode.
pub fn summarize(
    corpus: &Corpus,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<SummarySelection, Error> {
    summarize_impl(corpus, config, backend)
}

/// Single-pass baseline: the same multi-level loop, but one unshuffled call
/// per chunk and no voting.
pub fn summarize_vanilla(
    corpus: &Corpus,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<SummarySelection, Error> {
    let config = PipelineConfig {
        mode: Mode::Vanilla,
        ..config.clone()
    };
    summarize_impl(corpus, &config, backend)
}
