//! Per-context arm selection.
//!
//! ```text
//! s(a)   = ỹ(a) − β / √max(1, n(a))
//! cand   = TopK_{K_top}(s) \ B  \ {a : n(a) < n_min}      (empty → {0})
//! ε      = max(ε_min, ε₀ / √N) / (1 + estC)
//! choice = argmin_{cand} s  with prob. 1 − ε,  Uniform(cand) otherwise
//! ```

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub beta: f64,
    pub k_top: usize,
    /// Minimum sample threshold in the first batch after the first retrain.
    pub n_min_first: u64,
    /// Minimum sample threshold in every later batch.
    pub n_min: u64,
    pub eps0: f64,
    pub eps_min: f64,
    /// An arm is banned once its mean runtime exceeds this multiple of the best arm's.
    pub ban_multiplier: f64,
    /// Both arms need at least this many runs before the ban rule applies.
    pub ban_min_count: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            k_top: 3,
            n_min_first: 1,
            n_min: 0,
            eps0: 0.5,
            eps_min: 0.01,
            ban_multiplier: 3.0,
            ban_min_count: 3,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self, arms: usize) -> Result<(), PolicyError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(PolicyError::Config(format!(
                "beta {} must be ≥ 0",
                self.beta
            )));
        }
        if self.k_top == 0 || self.k_top > arms {
            return Err(PolicyError::Config(format!(
                "k_top {} must lie in [1, {arms}]",
                self.k_top
            )));
        }
        if !unit(self.eps0) || !unit(self.eps_min) || self.eps_min > self.eps0 {
            return Err(PolicyError::Config(format!(
                "need 0 ≤ eps_min ({}) ≤ eps0 ({}) ≤ 1",
                self.eps_min, self.eps0
            )));
        }
        if !(self.ban_multiplier.is_finite() && self.ban_multiplier >= 1.0) {
            return Err(PolicyError::Config(format!(
                "ban_multiplier {} must be ≥ 1",
                self.ban_multiplier
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub n: u64,
    pub runtime_sum: f64,
}

impl ArmStats {
    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.runtime_sum / self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextState {
    pub arms: Vec<ArmStats>,
    /// `N`, the number of executed queries of this context.
    pub total: u64,
    pub banned: BTreeSet<usize>,
    pub est_cost: f64,
}

impl ContextState {
    fn new(arms: usize) -> Self {
        Self {
            arms: vec![ArmStats::default(); arms],
            total: 0,
            banned: BTreeSet::new(),
            est_cost: 0.0,
        }
    }

    pub fn counts(&self) -> Vec<u64> {
        self.arms.iter().map(|a| a.n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextStats {
    arms: usize,
    contexts: BTreeMap<String, ContextState>,
}

impl ContextStats {
    pub fn new(arms: usize) -> Self {
        Self {
            arms,
            contexts: BTreeMap::new(),
        }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    /// State for `context`; a fresh zero state if it was never seen.
    pub fn get(&self, context: &str) -> ContextState {
        self.contexts
            .get(context)
            .cloned()
            .unwrap_or_else(|| ContextState::new(self.arms))
    }

    pub fn contexts(&self) -> impl Iterator<Item = (&String, &ContextState)> {
        self.contexts.iter()
    }

    /// Counts one execution and re-applies the ban rule for `context`.
    /// Returns arms newly banned by this update.
    pub fn record(
        &mut self,
        context: &str,
        arm: usize,
        runtime_ms: f64,
        cfg: &PolicyConfig,
    ) -> Result<Vec<usize>, PolicyError> {
        if arm >= self.arms {
            return Err(PolicyError::ArmOutOfRange {
                arm,
                arms: self.arms,
            });
        }
        let arms = self.arms;
        let st = self
            .contexts
            .entry(context.to_string())
            .or_insert_with(|| ContextState::new(arms));
        st.arms[arm].n += 1;
        st.arms[arm].runtime_sum += runtime_ms;
        st.total += 1;

        let eligible = |s: &ArmStats| s.n >= cfg.ban_min_count;
        let best = st
            .arms
            .iter()
            .filter(|s| eligible(s))
            .filter_map(ArmStats::mean)
            .fold(f64::INFINITY, f64::min);
        let mut newly = Vec::new();
        if best.is_finite() {
            for (a, s) in st.arms.iter().enumerate() {
                if eligible(s)
                    && s.mean().is_some_and(|m| m > cfg.ban_multiplier * best)
                    && st.banned.insert(a)
                {
                    newly.push(a);
                }
            }
        }
        Ok(newly)
    }

    /// Sets `estC` for every context present in a completed batch to the mean
    /// of that batch's scaled costs. Contexts absent from the batch keep their
    /// previous value.
    pub fn finish_batch(&mut self, scaled_costs: &BTreeMap<String, Vec<f64>>) {
        let arms = self.arms;
        for (context, costs) in scaled_costs {
            if costs.is_empty() {
                continue;
            }
            let st = self
                .contexts
                .entry(context.clone())
                .or_insert_with(|| ContextState::new(arms));
            st.est_cost = costs.iter().sum::<f64>() / costs.len() as f64;
        }
    }
}

/// `s(a) = ỹ(a) − β / √max(1, n(a))`.
pub fn score(y_tilde: &[f64], counts: &[u64], beta: f64) -> Vec<f64> {
    y_tilde
        .iter()
        .zip(counts)
        .map(|(&y, &n)| y - beta / (n.max(1) as f64).sqrt())
        .collect()
}

/// Arm ids ordered by ascending score, ties by id.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    ids
}

/// The `k_top` lowest-scoring arms, minus banned arms and arms with fewer
/// than `n_min` runs, in ascending id order. May be empty.
pub fn filter_candidates(
    scores: &[f64],
    counts: &[u64],
    banned: &BTreeSet<usize>,
    k_top: usize,
    n_min: u64,
) -> Vec<usize> {
    let mut cand: Vec<usize> = ranked(scores)
        .into_iter()
        .take(k_top)
        .filter(|a| !banned.contains(a) && counts[*a] >= n_min)
        .collect();
    cand.sort_unstable();
    cand
}

/// [`filter_candidates`], falling back to the default arm `[0]` when empty.
pub fn candidate_set(
    scores: &[f64],
    counts: &[u64],
    banned: &BTreeSet<usize>,
    k_top: usize,
    n_min: u64,
) -> Vec<usize> {
    let cand = filter_candidates(scores, counts, banned, k_top, n_min);
    if cand.is_empty() {
        vec![0]
    } else {
        cand
    }
}

/// `max(ε_min, ε₀/√N) / (1 + estC)`, with `N = 0` read as 1, clamped to [0, 1].
pub fn epsilon(total: u64, est_cost: f64, cfg: &PolicyConfig) -> f64 {
    let n = total.max(1) as f64;
    let e = cfg.eps_min.max(cfg.eps0 / n.sqrt()) / (1.0 + est_cost.max(0.0));
    e.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
    pub epsilon: f64,
    /// Uniform draw in [0, 1); exploration happens when `draw < epsilon`.
    pub draw: f64,
    /// Index into `candidates` used when exploring.
    pub pick: Option<usize>,
    pub explored: bool,
    pub chosen: usize,
}

impl Decision {
    /// The arm the exploit branch picks, whether or not this decision explored.
    pub fn greedy(&self) -> usize {
        argmin(&self.candidates, &self.scores)
    }
}

fn argmin(candidates: &[usize], scores: &[f64]) -> usize {
    let mut best = candidates[0];
    for &a in &candidates[1..] {
        if scores[a] < scores[best] || (scores[a] == scores[best] && a < best) {
            best = a;
        }
    }
    best
}

pub fn select_arm<R: Rng + ?Sized>(
    candidates: &[usize],
    scores: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<Decision, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    if let Some(&a) = candidates.iter().find(|&&a| a >= scores.len()) {
        return Err(PolicyError::ArmOutOfRange {
            arm: a,
            arms: scores.len(),
        });
    }
    let draw: f64 = rng.random();
    let explored = draw < eps;
    let pick = explored.then(|| rng.random_range(0..candidates.len()));
    let chosen = match pick {
        Some(i) => candidates[i],
        None => argmin(candidates, scores),
    };
    Ok(Decision {
        candidates: candidates.to_vec(),
        scores: scores.to_vec(),
        epsilon: eps,
        draw,
        pick,
        explored,
        chosen,
    })
}

/// Recomputes the chosen arm from a logged decision, without any randomness.
pub fn replay(d: &Decision) -> Result<usize, PolicyError> {
    if d.candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    if d.draw < d.epsilon {
        let i = d.pick.ok_or(PolicyError::EmptyCandidates)?;
        d.candidates
            .get(i)
            .copied()
            .ok_or(PolicyError::ArmOutOfRange {
                arm: i,
                arms: d.candidates.len(),
            })
    } else {
        Ok(argmin(&d.candidates, &d.scores))
    }
}
