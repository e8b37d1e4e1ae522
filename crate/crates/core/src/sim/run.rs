use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{ColdStart, RunConfig};
use super::trace::{oracle_runtime, Trace};
use super::SimError;
use crate::embed::{ChannelRegistry, REGISTRY_VERSION};
use crate::kg::{ExecPolicy, ExecutionRecord, KgStore, PlanRecord, QueryRecord, Record};
use crate::model::{train, Architecture, Checkpoint, RewardModel, Sample, TrainConfig};
use crate::policy::{epsilon, filter_candidates, score, select_arm, ContextStats, Decision};
use crate::scaler::LogMinMaxScaler;

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLine {
    pub batch: u32,
    pub query_index: usize,
    pub query_id: String,
    pub template_id: String,
    /// True when the arm came from the cold-start rule rather than the policy.
    pub cold_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_tilde: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    /// The candidate filter came back empty and the default arm was used.
    pub fallback: bool,
    pub newly_banned: Vec<usize>,
    pub chosen: usize,
    pub runtime_ms: f64,
    pub baseline_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub cold_start: u64,
    pub policy_decisions: u64,
    pub explored: u64,
    pub fallbacks: u64,
    pub bans: u64,
    /// Realized rewards whose runtime fell outside the frozen scaler's range.
    pub clamped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub query_index: usize,
    pub query_id: String,
    pub batch: u32,
    pub baseline_ms: f64,
    pub learned_ms: Option<f64>,
    pub learned_arm: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<CurveRow>,
    /// Per retrain, the training loss after each epoch.
    pub batch_losses: Vec<Vec<f64>>,
    pub counters: Counters,
    /// Oracle total over the executed query sequence.
    pub oracle_total: f64,
    pub baseline_only: bool,
}

impl RunReport {
    pub fn baseline_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.baseline_ms).collect()
    }

    pub fn learned_series(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.learned_ms).collect()
    }

    pub fn baseline_total(&self) -> f64 {
        self.baseline_series().iter().sum()
    }

    pub fn learned_total(&self) -> Option<f64> {
        self.learned_series().map(|v| v.iter().sum())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub decisions: Vec<DecisionLine>,
    pub checkpoint: Option<Checkpoint>,
}

/// Writes arms, environment, queries, and every per-arm plan of `trace`.
pub fn populate_store(trace: &Trace, store: &mut KgStore) -> Result<(), SimError> {
    for a in &trace.arms {
        store.put(Record::Arm(a.clone()))?;
    }
    store.put(Record::Env(trace.environment.clone()))?;
    for e in &trace.entries {
        store.put(Record::Query(QueryRecord {
            query_id: e.query_id.clone(),
            sql_text: e.sql_text.clone(),
            template_id: e.template_id.clone(),
            referenced_tables: e.parsed.tables.iter().cloned().collect(),
            referenced_columns: e.parsed.referenced_columns(),
        }))?;
        for (arm, plan) in e.plans.iter().enumerate() {
            store.put(Record::Plan(PlanRecord {
                query_id: e.query_id.clone(),
                arm_id: arm,
                plan: plan.clone(),
            }))?;
        }
    }
    Ok(())
}

struct Noise {
    sd: f64,
    rng: ChaCha8Rng,
}

impl Noise {
    fn apply(&mut self, y: f64) -> f64 {
        if self.sd == 0.0 {
            return y;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        y * (self.sd * z).exp()
    }
}

#[allow(clippy::too_many_arguments)]
fn put_execution(
    store: &mut KgStore,
    policy: ExecPolicy,
    trace: &Trace,
    entry: usize,
    arm: usize,
    batch: u32,
    runtime_ms: f64,
    predicted_reward: Option<f64>,
    realized_reward: Option<f64>,
) -> Result<(), SimError> {
    let e = &trace.entries[entry];
    let rec = ExecutionRecord {
        exec_id: ExecutionRecord::key(policy, &e.query_id, arm, batch),
        policy,
        query_id: e.query_id.clone(),
        arm_id: arm,
        plan_fingerprint: e.plans[arm].fingerprint.clone(),
        env_id: trace.environment.env_id.clone(),
        batch_index: batch,
        runtime_ms,
        predicted_reward,
        realized_reward,
        timestamp: store.next_timestamp(),
    };
    store.put(Record::Execution(rec))?;
    Ok(())
}

/// Runs the batched online loop over `trace`, recording every execution in
/// `store` (which should hold nothing but what [`populate_store`] wrote).
///
/// Batch 0 follows the cold-start rule. After every batch the scaler is
/// refit on all runtimes seen so far, the regressor is retrained from
/// scratch on their rewards, and per-context batch costs are updated. The
/// default-arm baseline is executed alongside and stored under its own policy tag.
pub fn run_online(
    trace: &Trace,
    cfg: &RunConfig,
    store: &mut KgStore,
) -> Result<RunOutput, SimError> {
    let k = trace.arm_count();
    cfg.validate(k)?;
    let len = trace.entries.len();
    if cfg.batch_size > len {
        return Err(SimError::BatchLargerThanTrace {
            batch_size: cfg.batch_size,
            entries: len,
        });
    }
    if cfg.c_max != trace.c_max {
        return Err(SimError::Shape(format!(
            "config c_max {} differs from the trace's {}",
            cfg.c_max, trace.c_max
        )));
    }
    if store.is_empty() {
        populate_store(trace, store)?;
    }

    let registry = ChannelRegistry::v1();
    let arch = Architecture::new(registry.len(), cfg.c_max, k);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    policy_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);
    let mut noise = Noise {
        sd: cfg.noise_sd,
        rng: noise_rng,
    };

    let mut model: Option<(RewardModel, LogMinMaxScaler)> = None;
    let mut first_policy_batch: Option<u32> = None;
    let mut stats = ContextStats::new(k);
    let mut observed: Vec<(usize, usize, f64)> = Vec::new();
    let mut rows = Vec::new();
    let mut decisions = Vec::new();
    let mut counters = Counters::default();
    let mut batch_losses = Vec::new();
    let mut oracle_total = 0.0;

    for b in 0..cfg.batches {
        let batch = b as u32;
        let mut batch_runs: Vec<(String, f64)> = Vec::new();
        for j in 0..cfg.batch_size {
            let index = b * cfg.batch_size + j;
            let ei = index % len;
            let e = &trace.entries[ei];
            oracle_total += oracle_runtime(std::slice::from_ref(e));
            let y0 = noise.apply(e.runtimes_ms[0]);

            let mut learned = None;
            if !cfg.baseline_only {
                let mut line = DecisionLine {
                    batch,
                    query_index: index,
                    query_id: e.query_id.clone(),
                    template_id: e.template_id.clone(),
                    cold_start: true,
                    n_min: None,
                    y_tilde: None,
                    decision: None,
                    fallback: false,
                    newly_banned: Vec::new(),
                    chosen: 0,
                    runtime_ms: 0.0,
                    baseline_ms: y0,
                };
                let mut predicted = None;
                let arm = match &model {
                    None => {
                        counters.cold_start += 1;
                        match cfg.cold_start {
                            ColdStart::EstimatedBest => e.estimated_best_arm,
                            ColdStart::DefaultArm => 0,
                        }
                    }
                    Some((m, s)) => {
                        let st = stats.get(&e.template_id);
                        let counts = st.counts();
                        let mut y_tilde = Vec::with_capacity(k);
                        for a in 0..k {
                            y_tilde.push(m.recover_cost(&e.features, a, s)?.1);
                        }
                        let n_min = if first_policy_batch == Some(batch) {
                            cfg.policy.n_min_first
                        } else {
                            cfg.policy.n_min
                        };
                        let scores = score(&y_tilde, &counts, cfg.policy.beta);
                        let mut cand = filter_candidates(
                            &scores,
                            &counts,
                            &st.banned,
                            cfg.policy.k_top,
                            n_min,
                        );
                        if cand.is_empty() {
                            cand.push(0);
                            line.fallback = true;
                            counters.fallbacks += 1;
                        }
                        let eps = epsilon(st.total, st.est_cost, &cfg.policy);
                        let d = select_arm(&cand, &scores, eps, &mut policy_rng)?;
                        counters.policy_decisions += 1;
                        if d.explored {
                            counters.explored += 1;
                        }
                        predicted = Some(m.predict(&e.features, d.chosen)?);
                        line.cold_start = false;
                        line.n_min = Some(n_min);
                        line.y_tilde = Some(y_tilde);
                        let chosen = d.chosen;
                        line.decision = Some(d);
                        chosen
                    }
                };
                let y = noise.apply(e.runtimes_ms[arm]);
                let realized = match &model {
                    Some((_, s)) => {
                        let r = s.reward_checked(y)?;
                        if r.clamped {
                            counters.clamped += 1;
                        }
                        Some(r.value)
                    }
                    None => None,
                };
                let banned = stats.record(&e.template_id, arm, y, &cfg.policy)?;
                counters.bans += banned.len() as u64;
                put_execution(
                    store,
                    ExecPolicy::Learned,
                    trace,
                    ei,
                    arm,
                    batch,
                    y,
                    predicted,
                    realized,
                )?;
                observed.push((ei, arm, y));
                batch_runs.push((e.template_id.clone(), y));
                line.newly_banned = banned;
                line.chosen = arm;
                line.runtime_ms = y;
                decisions.push(line);
                learned = Some((arm, y));
            }

            put_execution(
                store,
                ExecPolicy::Baseline,
                trace,
                ei,
                0,
                batch,
                y0,
                None,
                None,
            )?;
            rows.push(CurveRow {
                query_index: index,
                query_id: e.query_id.clone(),
                batch,
                baseline_ms: y0,
                learned_ms: learned.map(|l| l.1),
                learned_arm: learned.map(|l| l.0),
            });
        }

        if cfg.baseline_only {
            continue;
        }
        let runtimes: Vec<f64> = observed.iter().map(|o| o.2).collect();
        let scaler = match LogMinMaxScaler::fit(&runtimes) {
            Ok(s) => s,
            // Every runtime so far is identical: nothing to learn yet.
            Err(crate::scaler::ScalerError::Degenerate) => continue,
            Err(e) => return Err(e.into()),
        };
        let mut data = Vec::with_capacity(observed.len());
        for &(ei, arm, y) in &observed {
            data.push(Sample {
                input: trace.entries[ei].features.clone(),
                arm,
                target: scaler.reward_from_runtime(y)?,
            });
        }
        let init = RewardModel::init(arch, cfg.seed)?;
        let tc = TrainConfig {
            seed: cfg.seed.wrapping_add(1 + b as u64),
            ..cfg.train
        };
        let outcome = train(&init, &data, &tc)?;
        batch_losses.push(outcome.losses);

        let mut scaled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (t, y) in batch_runs {
            scaled.entry(t).or_default().push(scaler.phi(y)?);
        }
        stats.finish_batch(&scaled);
        model = Some((outcome.model, scaler));
        if first_policy_batch.is_none() {
            first_policy_batch = Some(batch + 1);
        }
    }

    let checkpoint = model
        .as_ref()
        .map(|(m, s)| Checkpoint::new(m, Some(*s), REGISTRY_VERSION));
    Ok(RunOutput {
        report: RunReport {
            rows,
            batch_losses,
            counters,
            oracle_total,
            baseline_only: cfg.baseline_only,
        },
        decisions,
        checkpoint,
    })
}

/// Which arm of a decision is compared against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgreementBasis {
    /// The arm actually executed, exploration draws included.
    Chosen,
    /// The exploit-branch argmin; cold-start and fallback decisions use the executed arm.
    Greedy,
}

/// Fraction of decisions from `from_batch` on whose arm equals the
/// per-template oracle arm in `best`.
pub fn best_arm_agreement(
    decisions: &[DecisionLine],
    best: &BTreeMap<String, usize>,
    from_batch: u32,
    basis: AgreementBasis,
) -> Option<f64> {
    let relevant: Vec<&DecisionLine> = decisions.iter().filter(|d| d.batch >= from_batch).collect();
    if relevant.is_empty() {
        return None;
    }
    let hits = relevant
        .iter()
        .filter(|d| {
            let arm = match (basis, &d.decision) {
                (AgreementBasis::Greedy, Some(dec)) => dec.greedy(),
                _ => d.chosen,
            };
            best.get(&d.template_id) == Some(&arm)
        })
        .count();
    Some(hits as f64 / relevant.len() as f64)
}

/// A decision whose chosen arm ran at least `factor` times slower than the
/// default arm on the same query.
#[derive(Debug, Clone, PartialEq)]
pub struct Admission {
    pub query_index: usize,
    pub query_id: String,
    pub arm: usize,
    pub explored: bool,
    pub excess_ms: f64,
}

pub fn expensive_admissions(decisions: &[DecisionLine], factor: f64) -> Vec<Admission> {
    decisions
        .iter()
        .filter(|d| d.runtime_ms >= factor * d.baseline_ms)
        .map(|d| Admission {
            query_index: d.query_index,
            query_id: d.query_id.clone(),
            arm: d.chosen,
            explored: d.decision.as_ref().is_some_and(|x| x.explored),
            excess_ms: d.runtime_ms - d.baseline_ms,
        })
        .collect()
}
