//! Per-chunk summarization: shuffled prompt variants, LLM calls, output
//! calibration, ballot repair, and the per-chunk election.
//!
//! A chunk of width w is presented to the model m times, each time in a fresh
//! seeded shuffle. Approval rules ask for the best `target` sentences; ranked
//! rules ask for all w in decreasing relevance. Model outputs are matched back
//! to unit ids, repaired into well-formed ballots, and aggregated by the
//! configured voting rule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::backend::{CallContext, LlmBackend, LlmRequest, PromptKind};
use crate::calibration::{self, CalibrationMethod, CalibrationResult};
use crate::config::PipelineConfig;
use crate::corpus::UnitId;
use crate::error::Error;
use crate::manifest::CallRecord;
use crate::voting::{self, ApprovalProfile, ElectionOutcome, RankedProfile};

/// Prompt for approval-style selection. `<chunk_size>`, `<summary_length>`,
/// and `<sentences>` are substituted at build time.
pub const APPROVAL_TEMPLATE: &str = "Input consists of <chunk_size> sentences. \
Each sentence is present in a new line. Each sentence contains a sentence number \
followed by text. You are an assistant that selects best <summary_length> \
sentences (subset) which summarizes the input. Think step by step and follow \
the instructions.\n<sentences>";

/// Prompt for full relevance rankings ("consist" kept as published).
pub const RANKED_TEMPLATE: &str = "Input consist of <chunk_size> sentences. \
Each sentence is present in a new line. Each sentence contains a sentence number \
followed by text. You are an assistant that outputs the sentences in the \
decreasing order of their relevance to be included in the summary. Remember \
that output should contain all the sentences in the decreasing order of their \
relevance. Think step by step and follow the instructions.\n<sentences>";

/// Crude token estimate: 1.5 tokens per whitespace word, rounded up.
pub fn estimate_tokens(text: &str) -> u32 {
    let words = text.split_whitespace().count() as u32;
    words + words.div_ceil(2)
}

/// RNG for one shuffle variant, keyed so every (seed, level, chunk, variant)
/// combination is an independent stream.
pub fn variant_rng(seed: u64, level: usize, chunk_index: usize, shuffle_index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(level as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(chunk_index as u64).to_le_bytes());
    key[24..32].copy_from_slice(&(shuffle_index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One shuffled presentation of a chunk. `order[i]` is the chunk-local
/// position shown at line i+1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleVariant {
    pub shuffle_index: usize,
    pub order: Vec<usize>,
}

/// The m shuffle variants for a chunk, with shuffle indices 1..=m
/// (index 0 is reserved for unshuffled single-pass calls).
pub fn make_variants(
    n_units: usize,
    m: usize,
    seed: u64,
    level: usize,
    chunk_index: usize,
) -> Vec<ShuffleVariant> {
    (1..=m)
        .map(|shuffle_index| {
            let mut order: Vec<usize> = (0..n_units).collect();
            let mut rng = variant_rng(seed, level, chunk_index, shuffle_index);
            order.shuffle(&mut rng);
            ShuffleVariant {
                shuffle_index,
                order,
            }
        })
        .collect()
}

/// Renders the numbered prompt for `units` in the given presentation order.
/// Unit texts are flattened to single lines so the numbering stays parseable.
pub fn build_prompt(kind: PromptKind, units: &[(UnitId, &str)], target: usize) -> String {
    let sentences: String = units
        .iter()
        .enumerate()
        .map(|(i, (_, text))| {
            let flat = text.replace(['\n', '\r'], " ");
            format!("{}. {}", i + 1, flat.trim())
        })
        .collect::<Vec<_>>()
        .join("\n");
    let template = match kind {
        PromptKind::Approval => APPROVAL_TEMPLATE,
        PromptKind::Ranked => RANKED_TEMPLATE,
    };
    template
        .replace("<chunk_size>", &units.len().to_string())
        .replace("<summary_length>", &target.to_string())
        .replace("<sentences>", &sentences)
}

/// Splits a completion into candidate sentence lines, stripping "N.", "N)",
/// and "N:" prefixes when present.
pub fn parse_output_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            let stripped = if digits > 0 {
                match line[digits..].chars().next() {
                    Some('.' | ')' | ':') => line[digits + 1..].trim(),
                    _ => line,
                }
            } else {
                line
            };
            if stripped.is_empty() {
                None
            } else {
                Some(stripped.to_string())
            }
        })
        .collect()
}

/// How many output lines were resolved by each matching stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationCounts {
    pub exact: usize,
    pub edit_distance: usize,
    pub keyword: usize,
    pub fallback: usize,
}

impl CalibrationCounts {
    /// An edit-distance result at or above epsilon is the last-resort snap to
    /// the nearest unit, counted as a fallback.
    pub fn tally(&mut self, result: &CalibrationResult, epsilon: f64) {
        match result.method {
            CalibrationMethod::Exact => self.exact += 1,
            CalibrationMethod::EditDistance if result.score < epsilon => self.edit_distance += 1,
            CalibrationMethod::EditDistance => self.fallback += 1,
            CalibrationMethod::Keyword => self.keyword += 1,
        }
    }

    pub fn merge(&mut self, other: &CalibrationCounts) {
        self.exact += other.exact;
        self.edit_distance += other.edit_distance;
        self.keyword += other.keyword;
        self.fallback += other.fallback;
    }

    pub fn total(&self) -> usize {
        self.exact + self.edit_distance + self.keyword + self.fallback
    }
}

/// Dedups an approval ballot, truncates overlong ones, and backfills short
/// ones with the first unseen candidates in chunk order.
pub fn repair_approval_ballot(
    ids: Vec<UnitId>,
    candidates: &[UnitId],
    target: usize,
) -> Vec<UnitId> {
    let mut seen = std::collections::BTreeSet::new();
    let mut ballot: Vec<UnitId> = ids
        .into_iter()
        .filter(|id| seen.insert(*id))
        .take(target)
        .collect();
    for id in candidates {
        if ballot.len() >= target {
            break;
        }
        if seen.insert(*id) {
            ballot.push(*id);
        }
    }
    ballot
}

/// The result of summarizing one chunk.
#[derive(Debug, Clone)]
pub struct ChunkOutcome {
    /// The units this chunk promotes to the next level, in score order.
    pub winners: Vec<UnitId>,
    /// All chunk units ranked by aggregate score, for cross-chunk backfill.
    pub ranked_pool: Vec<UnitId>,
    pub records: Vec<CallRecord>,
    pub calibration: CalibrationCounts,
    pub tie_events: usize,
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct CallResult {
    ids: Vec<UnitId>,
    record: CallRecord,
    calibration: CalibrationCounts,
}

/// Runs one LLM call for a chunk presentation and maps the output back to
/// unit ids, in output order.
fn run_call(
    units: &[(UnitId, &str)],
    presented: &[(UnitId, &str)],
    kind: PromptKind,
    target: usize,
    level: usize,
    chunk_index: usize,
    shuffle_index: usize,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<CallResult, Error> {
    let prompt = build_prompt(kind, presented, target);
    let estimated = estimate_tokens(&prompt);
    if estimated > config.llm.context_budget_tokens {
        return Err(Error::ContextOverflow {
            n_units: presented.len(),
            estimated_tokens: estimated as u64,
            budget_tokens: config.llm.context_budget_tokens as u64,
        });
    }
    let request = LlmRequest::new(prompt.clone(), &config.llm);
    let ctx = CallContext {
        level,
        chunk_index,
        shuffle_index,
        kind,
        n_units: presented.len(),
        target,
        seed: config.seed,
    };
    let completion = backend.complete(&request, &ctx).map_err(|source| Error::Backend {
        level,
        chunk_index,
        shuffle_index,
        source,
    })?;
    let lines = parse_output_lines(&completion.text);
    let mut ids = Vec::with_capacity(lines.len());
    let mut counts = CalibrationCounts::default();
    for result in calibration::check_against(&lines, units, &config.calibration) {
        counts.tally(&result, config.calibration.epsilon);
        ids.push(result.matched_id);
    }
    let record = CallRecord {
        level,
        chunk_index,
        shuffle_index,
        kind,
        prompt_sha256: sha256_hex(&prompt),
        prompt_chars: prompt.chars().count(),
        response_sha256: sha256_hex(&completion.text),
        response_chars: completion.text.chars().count(),
        attempts: completion.attempts,
    };
    Ok(CallResult {
        ids,
        record,
        calibration: counts,
    })
}

fn outcome_from_election(
    election: ElectionOutcome,
    records: Vec<CallRecord>,
    calibration: CalibrationCounts,
) -> ChunkOutcome {
    let ranked_pool = election.scores.iter().map(|(id, _)| *id).collect();
    ChunkOutcome {
        winners: election.winners,
        ranked_pool,
        records,
        calibration,
        tie_events: election.tie_events.len(),
    }
}

/// Summarizes one chunk down to at most `target` units with the configured
/// voting rule over m shuffled presentations. Regular levels pass q; the
/// terminal level passes k. Chunks already at or under the target width pass
/// through without any LLM calls.
pub fn summarize_chunk(
    units: &[(UnitId, &str)],
    level: usize,
    chunk_index: usize,
    target: usize,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<ChunkOutcome, Error> {
    let width = units.len();
    if width <= target {
        let ids: Vec<UnitId> = units.iter().map(|(id, _)| *id).collect();
        return Ok(ChunkOutcome {
            winners: ids.clone(),
            ranked_pool: ids,
            records: Vec::new(),
            calibration: CalibrationCounts::default(),
            tie_events: 0,
        });
    }

    let kind = if config.voting_rule.is_ranked() {
        PromptKind::Ranked
    } else {
        PromptKind::Approval
    };
    let candidates: Vec<UnitId> = units.iter().map(|(id, _)| *id).collect();
    let variants = make_variants(width, config.m, config.seed, level, chunk_index);

    let mut ballots = Vec::with_capacity(config.m);
    let mut records = Vec::with_capacity(config.m);
    let mut calibration = CalibrationCounts::default();
    for variant in &variants {
        let presented: Vec<(UnitId, &str)> =
            variant.order.iter().map(|&pos| units[pos]).collect();
        let result = run_call(
            units,
            &presented,
            kind,
            target,
            level,
            chunk_index,
            variant.shuffle_index,
            config,
            backend,
        )?;
        let ballot = match kind {
            PromptKind::Approval => repair_approval_ballot(result.ids, &candidates, target),
            PromptKind::Ranked => voting::pad_ranking(&result.ids, &candidates),
        };
        ballots.push(ballot);
        records.push(result.record);
        calibration.merge(&result.calibration);
    }

    let election = match kind {
        PromptKind::Approval => {
            let profile = ApprovalProfile::new(candidates, ballots)?;
            match config.voting_rule {
                crate::config::VotingRule::Plurality => voting::plurality(&profile, target)?,
                crate::config::VotingRule::PavExact => voting::pav_exact(&profile, target)?,
                crate::config::VotingRule::PavSequential => {
                    voting::pav_sequential(&profile, target)?
                }
                crate::config::VotingRule::Borda => unreachable!("borda is a ranked rule"),
            }
        }
        PromptKind::Ranked => {
            let profile = RankedProfile::new(candidates, ballots)?;
            voting::borda(&profile, target)?
        }
    };
    Ok(outcome_from_election(election, records, calibration))
}

/// Single-pass baseline: one unshuffled approval call per chunk, the repaired
/// ballot taken directly as the chunk result.
pub fn vanilla_chunk(
    units: &[(UnitId, &str)],
    level: usize,
    chunk_index: usize,
    target: usize,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
) -> Result<ChunkOutcome, Error> {
    let width = units.len();
    if width <= target {
        let ids: Vec<UnitId> = units.iter().map(|(id, _)| *id).collect();
        return Ok(ChunkOutcome {
            winners: ids.clone(),
            ranked_pool: ids,
            records: Vec::new(),
            calibration: CalibrationCounts::default(),
            tie_events: 0,
        });
    }
    let candidates: Vec<UnitId> = units.iter().map(|(id, _)| *id).collect();
    let result = run_call(
        units,
        units,
        PromptKind::Approval,
        target,
        level,
        chunk_index,
        0,
        config,
        backend,
    )?;
    let winners = repair_approval_ballot(result.ids, &candidates, target);
    let mut ranked_pool = winners.clone();
    for id in &candidates {
        if !ranked_pool.contains(id) {
            ranked_pool.push(*id);
        }
    }
    Ok(ChunkOutcome {
        winners,
        ranked_pool,
        records: vec![result.record],
        calibration: result.calibration,
        tie_events: 0,
    })
}
