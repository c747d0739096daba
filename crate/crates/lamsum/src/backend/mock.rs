//! Deterministic mock backends for offline runs, acceptance tests, and
//! positional-bias demonstrations.
//!
//! Mocks recover the presented sentences by parsing the numbered lines out of
//! the prompt text, then answer according to their behavior. All randomized
//! behaviors derive their RNG from (seed, level, chunk, shuffle), so a run is
//! reproducible regardless of call scheduling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, CallContext, Completion, LlmBackend, LlmRequest, PromptKind};

/// Extracts the texts of the numbered sentence lines ("N. text") from a
/// prompt, in presentation order.
pub fn parse_numbered_lines(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = &line[digits..];
            let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
            Some(rest.trim_start().to_string())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    /// Fraction of emitted lines that receive random character edits.
    pub edit_fraction: f64,
    /// Maximum edits as a fraction of line length (the paraphrase strength).
    pub max_edit_rate: f64,
    /// Fraction of emitted lines replaced by a word-salad hallucination.
    pub hallucinate_fraction: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            edit_fraction: 0.3,
            max_edit_rate: 0.1,
            hallucinate_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    /// Approval: the first `target` presented lines. Ranked: identity order.
    FirstQ,
    /// Approval: the last `target` presented lines. Ranked: reversed order.
    LastQ,
    /// Seeded random subset (approval) or permutation (ranked).
    RandomQ,
    /// Ranked: reversed presentation order. Approval: last `target`, reversed.
    ReverseRank,
    /// Ranked: presentation order. Approval: first `target`.
    IdentityRank,
    /// FirstQ/identity selection, then paraphrases some lines and replaces
    /// others with hallucinated word salads (seeded).
    Perturb(PerturbConfig),
    /// Always approves/ranks-first lines whose text is in the marked set.
    PreferMarked(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    behavior: MockBehavior,
}

impl MockBackend {
    pub fn new(behavior: MockBehavior) -> Self {
        MockBackend { behavior }
    }

    /// Parses the CLI-facing names: first-q, last-q, random-q, reverse-rank,
    /// identity-rank, perturb.
    pub fn parse(name: &str) -> Option<MockBackend> {
        let behavior = match name {
            "first-q" => MockBehavior::FirstQ,
            "last-q" => MockBehavior::LastQ,
            "random-q" => MockBehavior::RandomQ,
            "reverse-rank" => MockBehavior::ReverseRank,
            "identity-rank" => MockBehavior::IdentityRank,
            "perturb" => MockBehavior::Perturb(PerturbConfig::default()),
            _ => return None,
        };
        Some(MockBackend::new(behavior))
    }

    fn rng(ctx: &CallContext) -> ChaCha8Rng {
        // Distinct from the shuffle RNG keying via the salt word.
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&ctx.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(ctx.level as u64).to_le_bytes());
        key[16..24].copy_from_slice(&(ctx.chunk_index as u64).to_le_bytes());
        key[24..32].copy_from_slice(&(0x6d6f636b_u64 ^ ctx.shuffle_index as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    fn respond(&self, lines: Vec<String>, ctx: &CallContext) -> Vec<String> {
        let n = lines.len();
        let target = ctx.target.min(n);
        match (&self.behavior, ctx.kind) {
            (MockBehavior::FirstQ, PromptKind::Approval)
            | (MockBehavior::IdentityRank, PromptKind::Approval) => {
                lines.into_iter().take(target).collect()
            }
            (MockBehavior::FirstQ, PromptKind::Ranked)
            | (MockBehavior::IdentityRank, PromptKind::Ranked) => lines,
            (MockBehavior::LastQ, PromptKind::Approval) => {
                lines.into_iter().skip(n - target).collect()
            }
            (MockBehavior::LastQ, PromptKind::Ranked)
            | (MockBehavior::ReverseRank, PromptKind::Ranked) => {
                lines.into_iter().rev().collect()
            }
            (MockBehavior::ReverseRank, PromptKind::Approval) => {
                lines.into_iter().skip(n - target).rev().collect()
            }
            (MockBehavior::RandomQ, kind) => {
                let mut rng = Self::rng(ctx);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let keep = match kind {
                    PromptKind::Approval => target,
                    PromptKind::Ranked => n,
                };
                order
                    .into_iter()
                    .take(keep)
                    .map(|i| lines[i].clone())
                    .collect()
            }
            (MockBehavior::Perturb(cfg), kind) => {
                let mut rng = Self::rng(ctx);
                let base: Vec<String> = match kind {
                    PromptKind::Approval => lines.iter().take(target).cloned().collect(),
                    PromptKind::Ranked => lines.clone(),
                };
                base.into_iter()
                    .map(|line| {
                        let roll: f64 = rng.random();
                        if roll < cfg.hallucinate_fraction {
                            hallucinate(&line, &mut rng)
                        } else if roll < cfg.hallucinate_fraction + cfg.edit_fraction {
                            perturb_chars(&line, cfg.max_edit_rate, &mut rng)
                        } else {
                            line
                        }
                    })
                    .collect()
            }
            (MockBehavior::PreferMarked(marked), kind) => {
                let (hit, miss): (Vec<String>, Vec<String>) =
                    lines.into_iter().partition(|l| marked.contains(l.trim()));
                let keep = match kind {
                    PromptKind::Approval => target,
                    PromptKind::Ranked => n,
                };
                hit.into_iter().chain(miss).take(keep).collect()
            }
        }
    }
}

/// Applies up to `max_rate * len` random character edits.
fn perturb_chars(line: &str, max_rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = line.chars().collect();
    if chars.is_empty() {
        return line.to_string();
    }
    let budget = ((chars.len() as f64 * max_rate) as usize).max(1);
    for _ in 0..rng.random_range(1..=budget) {
        let pos = rng.random_range(0..chars.len());
        match rng.random_range(0..3u8) {
            0 => chars[pos] = rng.random_range(b'a'..=b'z') as char,
            1 => chars.insert(pos, rng.random_range(b'a'..=b'z') as char),
            _ => {
                if chars.len() > 1 {
                    chars.remove(pos);
                }
            }
        }
    }
    chars.into_iter().collect()
}

/// Builds a word salad from the line's own words plus filler, shuffled.
fn hallucinate(line: &str, rng: &mut ChaCha8Rng) -> String {
    const FILLER: &[&str] = &["about", "there", "really", "that", "with", "some"];
    let mut words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
    for _ in 0..rng.random_range(1..=3) {
        words.push(FILLER[rng.random_range(0..FILLER.len())].to_string());
    }
    words.shuffle(rng);
    words.join(" ")
}

impl LlmBackend for MockBackend {
    fn name(&self) -> String {
        let tag = match &self.behavior {
            MockBehavior::FirstQ => "first-q",
            MockBehavior::LastQ => "last-q",
            MockBehavior::RandomQ => "random-q",
            MockBehavior::ReverseRank => "reverse-rank",
            MockBehavior::IdentityRank => "identity-rank",
            MockBehavior::Perturb(_) => "perturb",
            MockBehavior::PreferMarked(_) => "prefer-marked",
        };
        format!("mock:{tag}")
    }

    fn complete(&self, request: &LlmRequest, ctx: &CallContext) -> Result<Completion, BackendError> {
        let lines = parse_numbered_lines(&request.prompt_text);
        let response = self.respond(lines, ctx);
        Ok(Completion {
            text: response.join("\n"),
            attempts: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(kind: PromptKind, n: usize, target: usize) -> CallContext {
        CallContext {
            level: 0,
            chunk_index: 0,
            shuffle_index: 1,
            kind,
            n_units: n,
            target,
            seed: 7,
        }
    }

    fn prompt(texts: &[&str]) -> LlmRequest {
        let body: String = texts
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. {t}\n", i + 1))
            .collect();
        LlmRequest {
            prompt_text: format!("Header prose ending with instructions.\n{body}"),
            max_output_tokens: 8192,
            temperature: 0.0,
            top_p: 1.0,
            context_budget_tokens: 8192,
        }
    }

    #[test]
    fn parses_numbered_lines_and_skips_prose() {
        let req = prompt(&["alpha", "beta", "gamma"]);
        assert_eq!(parse_numbered_lines(&req.prompt_text), ["alpha", "beta", "gamma"]);
        assert_eq!(parse_numbered_lines("12) spaced  text\nplain line\n3.dot"), ["spaced  text", "dot"]);
    }

    #[test]
    fn first_q_takes_the_presented_prefix() {
        let backend = MockBackend::new(MockBehavior::FirstQ);
        let req = prompt(&["a", "b", "c", "d"]);
        let out = backend.complete(&req, &ctx(PromptKind::Approval, 4, 2)).unwrap();
        assert_eq!(out.text, "a\nb");
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn reverse_rank_reverses_presented_order() {
        let backend = MockBackend::new(MockBehavior::ReverseRank);
        let req = prompt(&["a", "b", "c"]);
        let out = backend.complete(&req, &ctx(PromptKind::Ranked, 3, 3)).unwrap();
        assert_eq!(out.text, "c\nb\na");
    }

    #[test]
    fn last_q_takes_the_suffix() {
        let backend = MockBackend::new(MockBehavior::LastQ);
        let req = prompt(&["a", "b", "c", "d"]);
        let out = backend.complete(&req, &ctx(PromptKind::Approval, 4, 2)).unwrap();
        assert_eq!(out.text, "c\nd");
    }

    #[test]
    fn random_q_is_deterministic_per_context() {
        let backend = MockBackend::new(MockBehavior::RandomQ);
        let req = prompt(&["a", "b", "c", "d", "e"]);
        let c = ctx(PromptKind::Approval, 5, 3);
        let first = backend.complete(&req, &c).unwrap().text;
        let second = backend.complete(&req, &c).unwrap().text;
        assert_eq!(first, second);
        let other = CallContext { shuffle_index: 2, ..c };
        let third = backend.complete(&req, &other).unwrap().text;
        assert_eq!(first.lines().count(), 3);
        assert_eq!(third.lines().count(), 3);
    }

    #[test]
    fn prefer_marked_puts_marked_lines_first() {
        let marked: BTreeSet<String> = ["c".to_string(), "e".to_string()].into();
        let backend = MockBackend::new(MockBehavior::PreferMarked(marked));
        let req = prompt(&["a", "b", "c", "d", "e"]);
        let out = backend.complete(&req, &ctx(PromptKind::Approval, 5, 3)).unwrap();
        assert_eq!(out.text, "c\ne\na");
    }

    #[test]
    fn parse_accepts_known_names() {
        for name in ["first-q", "last-q", "random-q", "reverse-rank", "identity-rank", "perturb"] {
            let backend = MockBackend::parse(name).unwrap();
            assert_eq!(backend.name(), format!("mock:{name}"));
        }
        assert!(MockBackend::parse("gpt-4").is_none());
    }
}
