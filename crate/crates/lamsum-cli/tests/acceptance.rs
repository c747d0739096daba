//! Acceptance gate: one test per shipping criterion, each printing a single
//! `ACCEPTANCE <n> (<slug>): PASS|FAIL` line. Run with `--nocapture` to see
//! the lines for passing criteria too.
//!
//! Oracles here are deliberately naive re-implementations (bitmask PAV
//! enumeration, hand score counting) so they share no code with the crate.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use lamsum::backend::{MockBackend, MockBehavior, PerturbConfig};
use lamsum::calibration::{self, CalibrationConfig, CalibrationMethod};
use lamsum::config::VotingRule;
use lamsum::corpus::ReferenceSummary;
use lamsum::evaluation::{
    category_entropy, fleiss_kappa_from_references, rouge_lsum, rouge_n,
};
use lamsum::orchestrator::{summarize, summarize_vanilla};
use lamsum::voting::{borda, pav_exact, pav_sequential, plurality, ApprovalProfile, RankedProfile};
use lamsum::{Corpus, PipelineConfig, UnitId};

/// Prints the verdict line exactly once, FAIL included, even when an assert
/// unwinds mid-test.
struct Criterion {
    number: usize,
    slug: &'static str,
    passed: bool,
}

impl Criterion {
    fn start(number: usize, slug: &'static str) -> Criterion {
        Criterion {
            number,
            slug,
            passed: false,
        }
    }

    fn pass(mut self) {
        self.passed = true;
    }
}

impl Drop for Criterion {
    fn drop(&mut self) {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        println!("ACCEPTANCE {} ({}): {verdict}", self.number, self.slug);
    }
}

/// Distinct multi-word posts; digits of the index pick the content words, so
/// any two units differ in several places.
fn synthetic_corpus(n: usize) -> Corpus {
    let verbs = [
        "reported", "described", "flagged", "disputed", "witnessed", "recorded", "confirmed",
        "denied", "escalated", "reviewed",
    ];
    let places = [
        "station", "market", "bridge", "campus", "harbor", "airport", "library", "stadium",
        "terminal", "plaza",
    ];
    let things = [
        "incident", "outage", "delay", "protest", "closure", "accident", "breach", "failure",
        "dispute", "hazard",
    ];
    let parts = (0..n)
        .map(|i| {
            let text = format!(
                "witness {i:04} {} a {} near the {} after hour {}",
                verbs[i % 10],
                things[(i / 10) % 10],
                places[(i / 100) % 10],
                i % 24,
            );
            (text, BTreeSet::new())
        })
        .collect();
    Corpus::from_parts(parts).unwrap()
}

fn config(k: usize, s: usize, q: usize, m: usize, seed: u64, rule: VotingRule) -> PipelineConfig {
    PipelineConfig {
        k,
        s,
        q,
        m,
        seed,
        voting_rule: rule,
        ..PipelineConfig::default()
    }
}

#[test]
fn acceptance_1_level_counts() {
    let criterion = Criterion::start(1, "level-counts");
    let corpus = synthetic_corpus(625);
    let backend = MockBackend::new(MockBehavior::FirstQ);
    let started = Instant::now();
    for (q, expected_levels) in [(50, 4), (60, 7), (70, 9), (80, 12), (90, 24)] {
        let config = config(50, 100, q, 1, 0, VotingRule::Plurality);
        let selection = summarize(&corpus, &config, &backend).unwrap();
        assert_eq!(
            selection.levels.len(),
            expected_levels,
            "q={q}: got level sizes {:?}",
            selection.level_sizes()
        );
        assert_eq!(selection.unit_ids.len(), 50);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget is 5s");
    criterion.pass();
}

#[test]
fn acceptance_2_extractive_guarantee() {
    let criterion = Criterion::start(2, "extractive-guarantee");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = 50;
    for run in 0..200u64 {
        let n = rng.random_range(60..=1500);
        let corpus = synthetic_corpus(n);
        let behavior = match run % 5 {
            0 => MockBehavior::FirstQ,
            1 => MockBehavior::LastQ,
            2 => MockBehavior::RandomQ,
            3 => MockBehavior::ReverseRank,
            _ => MockBehavior::Perturb(PerturbConfig::default()),
        };
        let rule = match run % 3 {
            0 => VotingRule::Plurality,
            1 => VotingRule::PavSequential,
            _ => VotingRule::Borda,
        };
        let q = rng.random_range(50..=90);
        let m = 1 + (run as usize % 3);
        let config = config(k, 100, q, m, run, rule);
        let backend = MockBackend::new(behavior);
        let selection = summarize(&corpus, &config, &backend)
            .unwrap_or_else(|e| panic!("run {run} (n={n}) failed: {e}"));

        assert_eq!(selection.unit_ids.len(), k, "run {run}: |S| != k");
        let unique: BTreeSet<UnitId> = selection.unit_ids.iter().copied().collect();
        assert_eq!(unique.len(), k, "run {run}: duplicate units");
        for &id in &selection.unit_ids {
            assert!(corpus.contains(id), "run {run}: {id} not in corpus");
            assert!(
                !corpus.text(id).is_empty(),
                "run {run}: {id} resolves to no text"
            );
        }
    }
    criterion.pass();
}

/// H(c) accumulated the obvious way; shared by the naive PAV scorer only.
fn harmonic(c: usize) -> f64 {
    let mut h = 0.0;
    for j in 1..=c {
        h += 1.0 / j as f64;
    }
    h
}

/// PAV objective of a committee given as a candidate-index bitmask.
fn naive_pav(ballots: &[Vec<usize>], mask: u32) -> f64 {
    ballots
        .iter()
        .map(|b| harmonic(b.iter().filter(|&&c| mask & (1 << c) != 0).count()))
        .sum()
}

fn mask_of(winners: &[UnitId]) -> u32 {
    winners.iter().fold(0u32, |m, id| m | 1 << id.0)
}

#[test]
fn acceptance_3_voting_oracles() {
    let criterion = Criterion::start(3, "voting-oracles");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let started = Instant::now();
    for case in 0..1000 {
        let n = rng.random_range(1..=8usize);
        let b = rng.random_range(1..=5usize);
        let target = rng.random_range(1..=3usize.min(n));
        let candidates: Vec<UnitId> = (0..n as u32).map(UnitId).collect();

        // Approval rules against the bitmask enumerator.
        let ballots: Vec<Vec<usize>> = (0..b)
            .map(|_| (0..n).filter(|_| rng.random::<bool>()).collect())
            .collect();
        let id_ballots: Vec<Vec<UnitId>> = ballots
            .iter()
            .map(|b| b.iter().map(|&c| UnitId(c as u32)).collect())
            .collect();
        let profile = ApprovalProfile::new(candidates.clone(), id_ballots).unwrap();

        let best = (0u32..1 << n)
            .filter(|mask| mask.count_ones() as usize == target)
            .map(|mask| naive_pav(&ballots, mask))
            .fold(f64::NEG_INFINITY, f64::max);
        let exact = pav_exact(&profile, target).unwrap();
        let exact_score = naive_pav(&ballots, mask_of(&exact.winners));
        assert_eq!(exact_score, best, "case {case}: pav_exact not optimal");

        let sequential = pav_sequential(&profile, target).unwrap();
        let seq_score = naive_pav(&ballots, mask_of(&sequential.winners));
        assert!(
            seq_score >= 0.75 * best,
            "case {case}: sequential {seq_score} < 0.75 * {best}"
        );

        let mut counts = vec![0usize; n];
        for ballot in &ballots {
            for &c in ballot {
                counts[c] += 1;
            }
        }
        let mut by_count: Vec<usize> = (0..n).collect();
        by_count.sort_by_key(|&c| (std::cmp::Reverse(counts[c]), c));
        let mut expected: Vec<u32> = by_count[..target].iter().map(|&c| c as u32).collect();
        expected.sort_unstable();
        let outcome = plurality(&profile, target).unwrap();
        let mut got: Vec<u32> = outcome.winners.iter().map(|id| id.0).collect();
        got.sort_unstable();
        assert_eq!(got, expected, "case {case}: plurality committee");

        // Borda against hand point counting on full random rankings.
        let rankings: Vec<Vec<usize>> = (0..b)
            .map(|_| {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                order
            })
            .collect();
        let id_rankings: Vec<Vec<UnitId>> = rankings
            .iter()
            .map(|r| r.iter().map(|&c| UnitId(c as u32)).collect())
            .collect();
        let ranked = RankedProfile::new(candidates, id_rankings).unwrap();
        let mut points = vec![0usize; n];
        for ranking in &rankings {
            for (pos, &c) in ranking.iter().enumerate() {
                points[c] += n - 1 - pos;
            }
        }
        let mut by_points: Vec<usize> = (0..n).collect();
        by_points.sort_by_key(|&c| (std::cmp::Reverse(points[c]), c));
        let mut expected: Vec<u32> = by_points[..target].iter().map(|&c| c as u32).collect();
        expected.sort_unstable();
        let outcome = borda(&ranked, target).unwrap();
        let mut got: Vec<u32> = outcome.winners.iter().map(|id| id.0).collect();
        got.sort_unstable();
        assert_eq!(got, expected, "case {case}: borda committee");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget is 30s");
    criterion.pass();
}

/// Up to `budget` random character edits (substitute, delete, insert).
fn perturb_chars(text: &str, budget: usize, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..budget.max(1) {
        match rng.random_range(0..3) {
            0 => {
                let i = rng.random_range(0..chars.len());
                chars[i] = rng.random_range(b'a'..=b'z') as char;
            }
            1 if chars.len() > 2 => {
                let i = rng.random_range(0..chars.len());
                chars.remove(i);
            }
            _ => {
                let i = rng.random_range(0..=chars.len());
                chars.insert(i, rng.random_range(b'a'..=b'z') as char);
            }
        }
    }
    chars.into_iter().collect()
}

#[test]
fn acceptance_4_calibration_recovery() {
    let criterion = Criterion::start(4, "calibration-recovery");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus = synthetic_corpus(500);
    let config = CalibrationConfig::default();

    // Lightly corrupted copies of every unit must snap back to their id.
    let lines: Vec<String> = corpus
        .units()
        .iter()
        .map(|u| {
            let budget = u.text.chars().count() / 10;
            perturb_chars(&u.text, budget, &mut rng)
        })
        .collect();
    let results = calibration::check(&lines, &corpus, 0, corpus.len(), &config);
    let recovered = results
        .iter()
        .enumerate()
        .filter(|(i, r)| r.matched_id == UnitId(*i as u32))
        .count();
    assert!(
        recovered >= 495,
        "edit recovery {recovered}/500 is below 99%"
    );

    // Word-salad lines that only share keywords with one unit: long enough
    // that edit distance can never clear epsilon, so the keyword path decides.
    let mut keyword_hits = 0usize;
    for i in 0..100 {
        let unit = corpus.unit(UnitId(i));
        let keywords: Vec<String> = calibration::extract_keywords(&unit.text, &config)
            .into_iter()
            .collect();
        assert!(!keywords.is_empty());
        let mut salad: Vec<&str> = keywords.iter().rev().map(String::as_str).collect();
        let filler = ["so", "on", "it", "to", "of", "at", "up", "by"];
        for f in filler.iter().cycle().take(40) {
            salad.push(f);
        }
        let line = salad.join(" ");
        let result = &calibration::check(&[line], &corpus, 0, corpus.len(), &config)[0];
        if result.matched_id == unit.id && result.method == CalibrationMethod::Keyword {
            keyword_hits += 1;
        }
    }
    assert!(
        keyword_hits >= 95,
        "keyword recovery {keyword_hits}/100 is below 95%"
    );

    // Reordered paraphrase resolves back to the post it came from.
    let posts = Corpus::from_parts(vec![
        (
            "In a train some people were staring me continuously. It was very uncomfortable."
                .into(),
            BTreeSet::new(),
        ),
        (
            "We were going to metro station, a biker started following us. When we shouted, he rode away."
                .into(),
            BTreeSet::new(),
        ),
        (
            "Some boy do dirty comments on me and my religion.".into(),
            BTreeSet::new(),
        ),
    ])
    .unwrap();
    let line = "Some people were staring me continuously in a train.".to_string();
    let result = &calibration::check(&[line], &posts, 0, posts.len(), &config)[0];
    assert_eq!(result.matched_id, UnitId(0), "reorder fixture missed");
    criterion.pass();
}

#[test]
fn acceptance_5_metric_sanity() {
    let criterion = Criterion::start(5, "metric-sanity");
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-6, "{a} != {b}");

    let text = "alpha beta gamma\ndelta epsilon zeta";
    for score in [
        rouge_n(text, text, 1),
        rouge_n(text, text, 2),
        rouge_lsum(text, text),
    ] {
        assert_eq!((score.precision, score.recall, score.f1), (1.0, 1.0, 1.0));
    }
    let (a, b) = ("alpha beta gamma", "delta epsilon zeta");
    for score in [rouge_n(a, b, 1), rouge_n(a, b, 2), rouge_lsum(a, b)] {
        assert_eq!((score.precision, score.recall, score.f1), (0.0, 0.0, 0.0));
    }

    // Frozen values from an independent reference implementation.
    let cand = "The cat sat on the mat.\nA dog barked at the cat loudly.\nBirds fly south in winter.";
    let reference = "The cat sat quietly on the mat.\nThe dog barked all night.\nIn winter the birds fly south.";
    close(rouge_n(cand, reference, 1).f1, 0.7777777778);
    close(rouge_n(cand, reference, 2).f1, 0.4705882353);
    close(rouge_lsum(cand, reference).f1, 0.6666666667);
    let clipped = rouge_n("the the the cat", "the cat the dog the", 1);
    close(clipped.precision, 1.0);
    close(clipped.recall, 0.8);
    close(clipped.f1, 0.8888888889);

    let parts = (0..14)
        .map(|i| {
            let category: BTreeSet<String> = [format!("category-{i}")].into_iter().collect();
            (format!("unit number {i}"), category)
        })
        .collect();
    let uniform = Corpus::from_parts(parts).unwrap();
    let ids = uniform.ids();
    let (entropy, counts) = category_entropy(&uniform, &ids);
    assert_eq!(counts.len(), 14);
    assert!(
        (entropy - 14f64.log2()).abs() < 1e-9,
        "uniform entropy {entropy} != log2 14"
    );

    let unanimous: Vec<ReferenceSummary> = (0..3)
        .map(|i| ReferenceSummary {
            annotator_id: format!("annotator-{i}"),
            unit_ids: (0..30).map(UnitId).collect(),
        })
        .collect();
    assert_eq!(fleiss_kappa_from_references(100, &unanimous), Some(1.0));

    // Independent random annotators: mean kappa over many trials sits at 0.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 1000;
    let mut total = 0.0;
    for _ in 0..trials {
        let refs: Vec<ReferenceSummary> = (0..3)
            .map(|i| ReferenceSummary {
                annotator_id: format!("annotator-{i}"),
                unit_ids: rand::seq::index::sample(&mut rng, 200, 60)
                    .into_iter()
                    .map(|x| UnitId(x as u32))
                    .collect(),
            })
            .collect();
        total += fleiss_kappa_from_references(200, &refs).unwrap();
    }
    let mean = total / trials as f64;
    assert!(mean.abs() < 0.05, "null-model mean kappa {mean}");
    criterion.pass();
}

#[test]
fn acceptance_6_determinism() {
    let criterion = Criterion::start(6, "determinism");
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    let mut lines = String::new();
    for i in 0..200 {
        lines.push_str(&format!(
            "{{\"text\": \"entry {i:04} describing event number {}\"}}\n",
            i % 13
        ));
    }
    fs::write(&corpus_path, lines).unwrap();

    let run = |out_dir: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_lamsum"))
            .args(["summarize", "--corpus"])
            .arg(&corpus_path)
            .arg("--out-dir")
            .arg(out_dir)
            .args(["--backend", "mock:random-q", "--seed", "11", "--m", "3"])
            .env_remove("LAMSUM_API_KEY")
            .status()
            .unwrap();
        assert!(status.success());
    };
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    run(&first);
    run(&second);

    assert_eq!(
        fs::read(first.join("summary.jsonl")).unwrap(),
        fs::read(second.join("summary.jsonl")).unwrap(),
        "summary.jsonl differs between identical runs"
    );
    let manifest = |path: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        v["elapsed_ms"] = serde_json::Value::Null;
        v
    };
    assert_eq!(
        manifest(&first.join("manifest.json")),
        manifest(&second.join("manifest.json")),
        "manifest differs beyond wall time"
    );
    criterion.pass();
}

#[test]
fn acceptance_7_positional_bias() {
    let criterion = Criterion::start(7, "positional-bias");
    let corpus = synthetic_corpus(200);
    let backend = MockBackend::new(MockBehavior::FirstQ);
    let (k, s, q) = (50, 100, 50);
    let first_k: Vec<UnitId> = (0..k as u32).map(UnitId).collect();

    let mut differing = 0usize;
    let mut runs_with_late_units = 0usize;
    let mut late_unit_total = 0usize;
    for seed in 0..100 {
        let config = config(k, s, q, 3, seed, VotingRule::Plurality);
        let vanilla = summarize_vanilla(&corpus, &config, &backend).unwrap();
        assert_eq!(
            vanilla.unit_ids, first_k,
            "seed {seed}: position-biased baseline should keep the first k"
        );
        let voted = summarize(&corpus, &config, &backend).unwrap();
        assert_eq!(voted.unit_ids.len(), k);
        if voted.unit_ids != vanilla.unit_ids {
            differing += 1;
        }
        // Units at positions >= q of their original chunk, unreachable for
        // the unshuffled first-q reader.
        let late = voted
            .unit_ids
            .iter()
            .filter(|id| (id.0 % s as u32) >= q as u32)
            .count();
        late_unit_total += late;
        if late > 0 {
            runs_with_late_units += 1;
        }
    }
    println!(
        "  positional bias: {differing}/100 seeds differ from the first-k baseline; \
         {runs_with_late_units}/100 runs contain beyond-first-q winners \
         ({late_unit_total} such units total)"
    );
    assert!(differing >= 90, "only {differing}/100 seeds differ");
    assert!(
        late_unit_total > 0,
        "shuffled runs never surfaced a beyond-first-q unit"
    );
    criterion.pass();
}

#[test]
fn acceptance_8_single_chunk_coverage() {
    let criterion = Criterion::start(8, "single-chunk-coverage");
    let corpus = synthetic_corpus(300);
    let k = 50;
    // All k wanted units sit inside the second level-0 chunk [100, 200).
    let marked_ids: Vec<UnitId> = (100..100 + k as u32).map(UnitId).collect();
    let marked: BTreeSet<String> = marked_ids
        .iter()
        .map(|&id| corpus.text(id).to_string())
        .collect();
    let backend = MockBackend::new(MockBehavior::PreferMarked(marked));
    let config = config(k, 100, 50, 3, 0, VotingRule::Plurality);
    let selection = summarize(&corpus, &config, &backend).unwrap();
    assert_eq!(
        selection.unit_ids, marked_ids,
        "summary must carry every marked unit out of its chunk"
    );
    criterion.pass();
}
