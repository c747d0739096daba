//! Multi-winner election rules over the per-chunk ballots.
//!
//! Candidates are the chunk's unit ids in their current level order; the m
//! calibrated LLM outputs act as voters. Rules: block plurality, proportional
//! approval voting (exact for small instances, greedy sequential for
//! production sizes), and Borda over rankings. All rules are deterministic;
//! score ties break by candidate order (the pipeline presents candidates in
//! level order, which at level 0 is ascending corpus id).

use std::collections::HashSet;

use itertools::Itertools;
use serde::Serialize;

use crate::corpus::UnitId;

/// Largest candidate count pav_exact will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VotingError {
    #[error("profile has no candidates")]
    NoCandidates,
    #[error("profile has no ballots")]
    NoBallots,
    #[error("duplicate candidate id {0}")]
    DuplicateCandidate(UnitId),
    #[error("ballot {ballot} references id {id} outside the candidate set")]
    UnknownCandidate { ballot: usize, id: UnitId },
    #[error("ballot {ballot} is not a permutation of the candidates")]
    NotAPermutation { ballot: usize },
    #[error("target {target} exceeds candidate count {n}")]
    TargetTooLarge { target: usize, n: usize },
    #[error("target must be at least 1")]
    ZeroTarget,
    #[error("{n} candidates exceed the exhaustive search limit of {limit}")]
    InstanceTooLarge { n: usize, limit: usize },
}

/// Approval ballots: each voter names a subset of the candidates.
/// Within-ballot duplicates are dropped keeping the first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApprovalProfile {
    candidates: Vec<UnitId>,
    ballots: Vec<Vec<UnitId>>,
}

impl ApprovalProfile {
    pub fn new(candidates: Vec<UnitId>, ballots: Vec<Vec<UnitId>>) -> Result<Self, VotingError> {
        let positions = candidate_positions(&candidates)?;
        if ballots.is_empty() {
            return Err(VotingError::NoBallots);
        }
        let mut cleaned = Vec::with_capacity(ballots.len());
        for (b, ballot) in ballots.into_iter().enumerate() {
            let mut seen = HashSet::with_capacity(ballot.len());
            let mut kept = Vec::with_capacity(ballot.len());
            for id in ballot {
                if !positions.contains_key(&id) {
                    return Err(VotingError::UnknownCandidate { ballot: b, id });
                }
                if seen.insert(id) {
                    kept.push(id);
                }
            }
            cleaned.push(kept);
        }
        Ok(ApprovalProfile {
            candidates,
            ballots: cleaned,
        })
    }

    pub fn candidates(&self) -> &[UnitId] {
        &self.candidates
    }

    pub fn ballots(&self) -> &[Vec<UnitId>] {
        &self.ballots
    }
}

/// Ranked ballots: each voter provides a total order; validated permutations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedProfile {
    candidates: Vec<UnitId>,
    rankings: Vec<Vec<UnitId>>,
}

impl RankedProfile {
    pub fn new(candidates: Vec<UnitId>, rankings: Vec<Vec<UnitId>>) -> Result<Self, VotingError> {
        let positions = candidate_positions(&candidates)?;
        if rankings.is_empty() {
            return Err(VotingError::NoBallots);
        }
        for (b, ranking) in rankings.iter().enumerate() {
            if ranking.len() != candidates.len() {
                return Err(VotingError::NotAPermutation { ballot: b });
            }
            let mut seen = HashSet::with_capacity(ranking.len());
            for id in ranking {
                if !positions.contains_key(id) {
                    return Err(VotingError::UnknownCandidate { ballot: b, id: *id });
                }
                if !seen.insert(*id) {
                    return Err(VotingError::NotAPermutation { ballot: b });
                }
            }
        }
        Ok(RankedProfile {
            candidates,
            rankings,
        })
    }

    pub fn candidates(&self) -> &[UnitId] {
        &self.candidates
    }

    pub fn rankings(&self) -> &[Vec<UnitId>] {
        &self.rankings
    }
}

fn candidate_positions(
    candidates: &[UnitId],
) -> Result<std::collections::HashMap<UnitId, usize>, VotingError> {
    if candidates.is_empty() {
        return Err(VotingError::NoCandidates);
    }
    let mut positions = std::collections::HashMap::with_capacity(candidates.len());
    for (i, &id) in candidates.iter().enumerate() {
        if positions.insert(id, i).is_some() {
            return Err(VotingError::DuplicateCandidate(id));
        }
    }
    Ok(positions)
}

/// A score tie that the deterministic tie-break resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieEvent {
    /// Selection round (greedy rules) or 0 for one-shot rules.
    pub round: usize,
    pub score: f64,
    pub tied: Vec<UnitId>,
    pub chosen: UnitId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionOutcome {
    /// Winning ids, in rule order (score order, or greedy selection order).
    pub winners: Vec<UnitId>,
    /// Every candidate with its final score, descending (ties in candidate
    /// order). Doubles as the backfill ranking for duplicate repair.
    pub scores: Vec<(UnitId, f64)>,
    pub tie_events: Vec<TieEvent>,
}

/// Self-contained record of one election, serializable for offline auditing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionDump {
    pub rule: String,
    pub candidates: Vec<UnitId>,
    pub ballots: Vec<Vec<UnitId>>,
    pub winners: Vec<UnitId>,
    pub scores: Vec<(UnitId, f64)>,
}

impl ElectionDump {
    pub fn from_approval(rule: &str, profile: &ApprovalProfile, outcome: &ElectionOutcome) -> Self {
        ElectionDump {
            rule: rule.to_string(),
            candidates: profile.candidates.clone(),
            ballots: profile.ballots.clone(),
            winners: outcome.winners.clone(),
            scores: outcome.scores.clone(),
        }
    }

    pub fn from_ranked(rule: &str, profile: &RankedProfile, outcome: &ElectionOutcome) -> Self {
        ElectionDump {
            rule: rule.to_string(),
            candidates: profile.candidates.clone(),
            ballots: profile.rankings.clone(),
            winners: outcome.winners.clone(),
            scores: outcome.scores.clone(),
        }
    }
}

fn check_target(target: usize, n: usize) -> Result<(), VotingError> {
    if target == 0 {
        return Err(VotingError::ZeroTarget);
    }
    if target > n {
        return Err(VotingError::TargetTooLarge { target, n });
    }
    Ok(())
}

/// Ranks candidate positions by (score desc, candidate order asc).
fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    order
}

fn outcome_from_scores(
    candidates: &[UnitId],
    scores: Vec<f64>,
    target: usize,
) -> ElectionOutcome {
    let order = rank_by_score(&scores);
    let winners: Vec<UnitId> = order[..target].iter().map(|&p| candidates[p]).collect();
    let mut tie_events = Vec::new();
    // A tie matters when the cut line splits candidates of equal score.
    if target < candidates.len() {
        let cut_score = scores[order[target - 1]];
        if scores[order[target]] == cut_score {
            let tied: Vec<UnitId> = order
                .iter()
                .filter(|&&p| scores[p] == cut_score)
                .map(|&p| candidates[p])
                .collect();
            tie_events.push(TieEvent {
                round: 0,
                score: cut_score,
                tied,
                chosen: candidates[order[target - 1]],
            });
        }
    }
    let scores = order.into_iter().map(|p| (candidates[p], scores[p])).collect();
    ElectionOutcome {
        winners,
        scores,
        tie_events,
    }
}

/// Block plurality: score = approval count; top `target` win.
pub fn plurality(profile: &ApprovalProfile, target: usize) -> Result<ElectionOutcome, VotingError> {
    let n = profile.candidates.len();
    check_target(target, n)?;
    let positions = candidate_positions(&profile.candidates).expect("validated at construction");
    let mut scores = vec![0.0; n];
    for ballot in &profile.ballots {
        for id in ballot {
            scores[positions[id]] += 1.0;
        }
    }
    Ok(outcome_from_scores(&profile.candidates, scores, target))
}

/// Harmonic prefix sums: H[t] = 1 + 1/2 + ... + 1/t, H[0] = 0.
fn harmonic_table(max: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(max + 1);
    h.push(0.0);
    for j in 1..=max {
        h.push(h[j - 1] + 1.0 / j as f64);
    }
    h
}

/// PAV objective: sum over ballots of H(|ballot ∩ committee|).
pub fn pav_score(profile: &ApprovalProfile, committee: &[UnitId]) -> f64 {
    let committee: HashSet<UnitId> = committee.iter().copied().collect();
    let h = harmonic_table(committee.len());
    profile
        .ballots
        .iter()
        .map(|ballot| h[ballot.iter().filter(|id| committee.contains(id)).count()])
        .sum()
}

/// Exact PAV by exhaustive enumeration; only for small candidate counts.
/// Ties prefer the lexicographically smallest subset in candidate order.
pub fn pav_exact(profile: &ApprovalProfile, target: usize) -> Result<ElectionOutcome, VotingError> {
    let n = profile.candidates.len();
    check_target(target, n)?;
    if n > EXHAUSTIVE_LIMIT {
        return Err(VotingError::InstanceTooLarge {
            n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let positions = candidate_positions(&profile.candidates).expect("validated at construction");
    // Ballots as position sets for fast intersection counting.
    let ballots: Vec<Vec<usize>> = profile
        .ballots
        .iter()
        .map(|b| b.iter().map(|id| positions[id]).collect())
        .collect();
    let h = harmonic_table(target);

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut tie_events = Vec::new();
    let mut in_committee = vec![false; n];
    for subset in (0..n).combinations(target) {
        for &p in &subset {
            in_committee[p] = true;
        }
        let score: f64 = ballots
            .iter()
            .map(|ballot| h[ballot.iter().filter(|&&p| in_committee[p]).count()])
            .sum();
        for &p in &subset {
            in_committee[p] = false;
        }
        match &best {
            None => best = Some((subset, score)),
            Some((kept, best_score)) => {
                if score > *best_score {
                    tie_events.clear();
                    best = Some((subset, score));
                } else if score == *best_score {
                    // Lexicographic enumeration order means the earlier subset
                    // is the canonical winner; record the tie.
                    tie_events.push(TieEvent {
                        round: 0,
                        score,
                        tied: subset.iter().map(|&p| profile.candidates[p]).collect(),
                        chosen: profile.candidates[kept[0]],
                    });
                }
            }
        }
    }
    let (subset, _) = best.expect("at least one subset exists");

    // Report per-candidate approval counts as auxiliary scores, with winners
    // first so the score list still ranks winners above losers.
    let mut approvals = vec![0.0; n];
    for ballot in &ballots {
        for &p in ballot {
            approvals[p] += 1.0;
        }
    }
    let winner_set: HashSet<usize> = subset.iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        winner_set
            .contains(&b)
            .cmp(&winner_set.contains(&a))
            .then(
                approvals[b]
                    .partial_cmp(&approvals[a])
                    .expect("finite scores"),
            )
            .then(a.cmp(&b))
    });
    Ok(ElectionOutcome {
        winners: subset.iter().map(|&p| profile.candidates[p]).collect(),
        scores: order
            .into_iter()
            .map(|p| (profile.candidates[p], approvals[p]))
            .collect(),
        tie_events,
    })
}

/// Sequential (greedy) PAV: repeatedly add the candidate with the largest
/// marginal gain sum over approving ballots of 1/(1 + |committee ∩ ballot|).
pub fn pav_sequential(
    profile: &ApprovalProfile,
    target: usize,
) -> Result<ElectionOutcome, VotingError> {
    let n = profile.candidates.len();
    check_target(target, n)?;
    let positions = candidate_positions(&profile.candidates).expect("validated at construction");
    let ballots: Vec<Vec<usize>> = profile
        .ballots
        .iter()
        .map(|b| b.iter().map(|id| positions[id]).collect())
        .collect();

    let mut selected = vec![false; n];
    let mut overlap = vec![0usize; profile.ballots.len()];
    let mut winners = Vec::with_capacity(target);
    let mut winner_gains = vec![0.0; n];
    let mut tie_events = Vec::new();

    let gain_of = |cand: usize, selected: &[bool], overlap: &[usize], ballots: &[Vec<usize>]| {
        debug_assert!(!selected[cand]);
        let mut g = 0.0;
        for (b, ballot) in ballots.iter().enumerate() {
            if ballot.contains(&cand) {
                g += 1.0 / (1.0 + overlap[b] as f64);
            }
        }
        g
    };

    for round in 0..target {
        let mut best: Option<(usize, f64)> = None;
        let mut tied_at_best: Vec<usize> = Vec::new();
        for cand in 0..n {
            if selected[cand] {
                continue;
            }
            let g = gain_of(cand, &selected, &overlap, &ballots);
            match best {
                None => {
                    best = Some((cand, g));
                    tied_at_best = vec![cand];
                }
                Some((_, bg)) => {
                    if g > bg {
                        best = Some((cand, g));
                        tied_at_best = vec![cand];
                    } else if g == bg {
                        tied_at_best.push(cand);
                    }
                }
            }
        }
        let (chosen, gain) = best.expect("target <= n leaves a candidate");
        if tied_at_best.len() > 1 {
            tie_events.push(TieEvent {
                round,
                score: gain,
                tied: tied_at_best
                    .iter()
                    .map(|&p| profile.candidates[p])
                    .collect(),
                chosen: profile.candidates[chosen],
            });
        }
        selected[chosen] = true;
        winner_gains[chosen] = gain;
        winners.push(profile.candidates[chosen]);
        for (b, ballot) in ballots.iter().enumerate() {
            if ballot.contains(&chosen) {
                overlap[b] += 1;
            }
        }
    }

    // Losers ranked by their would-be gain after the final round.
    let mut scores: Vec<(UnitId, f64)> = winners
        .iter()
        .map(|id| (*id, winner_gains[positions[id]]))
        .collect();
    let mut losers: Vec<(usize, f64)> = (0..n)
        .filter(|&p| !selected[p])
        .map(|p| (p, gain_of(p, &selected, &overlap, &ballots)))
        .collect();
    losers.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    scores.extend(losers.into_iter().map(|(p, g)| (profile.candidates[p], g)));

    Ok(ElectionOutcome {
        winners,
        scores,
        tie_events,
    })
}

/// Borda count: in an n-candidate ranking, position p from the top earns
/// n-1-p points; totals over all rankings decide.
pub fn borda(profile: &RankedProfile, target: usize) -> Result<ElectionOutcome, VotingError> {
    let n = profile.candidates.len();
    check_target(target, n)?;
    let positions = candidate_positions(&profile.candidates).expect("validated at construction");
    let mut scores = vec![0.0; n];
    for ranking in &profile.rankings {
        for (p, id) in ranking.iter().enumerate() {
            scores[positions[id]] += (n - 1 - p) as f64;
        }
    }
    Ok(outcome_from_scores(&profile.candidates, scores, target))
}

/// Completes a partial ranking into a permutation of `candidates`: keeps the
/// partial order (first occurrence wins on duplicates, ids outside the
/// candidate set are dropped), then appends missing candidates in candidate
/// order.
pub fn pad_ranking(partial: &[UnitId], candidates: &[UnitId]) -> Vec<UnitId> {
    let candidate_set: HashSet<UnitId> = candidates.iter().copied().collect();
    let mut seen = HashSet::with_capacity(candidates.len());
    let mut full = Vec::with_capacity(candidates.len());
    for &id in partial {
        if candidate_set.contains(&id) && seen.insert(id) {
            full.push(id);
        }
    }
    for &id in candidates {
        if seen.insert(id) {
            full.push(id);
        }
    }
    full
}
