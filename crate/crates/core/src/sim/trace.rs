use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{
    assemble_matrix, build_column_universe, pad_to_shape, Catalog, ChannelRegistry, EmbedError,
    FeatureMatrix,
};
use crate::kg::{ArmSpec, EnvironmentSnapshot};
use crate::plan::{ingest_plan, PlanError, PlanTree};
use crate::sql::{extract_template_features, parse_sql_subset, ParseError, ParsedQuery};

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("trace is empty")]
    Empty,
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace declares no arms")]
    NoArms,
    #[error("arm ids must be 0..K-1 in order; found {0}")]
    ArmOrder(usize),
    #[error("query {0} appears twice")]
    DuplicateQuery(String),
    #[error("query {query_id}: no runtime for arm {arm}")]
    MissingRuntime { query_id: String, arm: usize },
    #[error("query {query_id}: no plan for arm {arm}")]
    MissingPlan { query_id: String, arm: usize },
    #[error("query {query_id}: runtime for arm {arm} must be positive, got {value}")]
    BadRuntime {
        query_id: String,
        arm: usize,
        value: f64,
    },
    #[error("query {query_id}: references arm {arm}, trace has {arms}")]
    UnknownArm {
        query_id: String,
        arm: usize,
        arms: usize,
    },
    #[error("query {query_id}: SQL rejected: {source}")]
    Sql {
        query_id: String,
        source: ParseError,
    },
    #[error("query {query_id}: plan for arm {arm} rejected: {source}")]
    Plan {
        query_id: String,
        arm: usize,
        source: PlanError,
    },
    #[error("query {query_id}: {source}")]
    Embed {
        query_id: String,
        source: EmbedError,
    },
}

/// Wire form of one trace line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "lowercase")]
pub enum TraceLine {
    Arm(ArmSpec),
    Catalog(Catalog),
    Env(EnvironmentSnapshot),
    Entry(EntryDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryDoc {
    pub query_id: String,
    pub template_id: String,
    pub sql: String,
    pub runtimes_ms: BTreeMap<usize, f64>,
    pub plans: BTreeMap<usize, serde_json::Value>,
    #[serde(default)]
    pub estimated_best_arm: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub query_id: String,
    pub template_id: String,
    pub sql_text: String,
    pub parsed: ParsedQuery,
    /// Indexed by arm id.
    pub runtimes_ms: Vec<f64>,
    /// Indexed by arm id.
    pub plans: Vec<PlanTree>,
    pub estimated_best_arm: usize,
    /// Feature matrix built from the default arm's plan, padded to `C_max`.
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub arms: Vec<ArmSpec>,
    pub catalog: Catalog,
    pub environment: EnvironmentSnapshot,
    pub entries: Vec<TraceEntry>,
    pub c_max: usize,
}

impl Trace {
    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }
}

/// Fixed knob values used when a trace does not carry its own environment.
pub fn default_environment() -> EnvironmentSnapshot {
    let settings = [
        ("shared_buffers", "2GB"),
        ("work_mem", "4MB"),
        ("maintenance_work_mem", "64MB"),
        ("effective_io_concurrency", "2"),
        ("max_worker_processes", "8"),
        ("max_parallel_workers_per_gather", "1"),
        ("max_parallel_workers", "1"),
        ("effective_cache_size", "2GB"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    EnvironmentSnapshot {
        env_id: "default".into(),
        settings,
        dataset_tag: "synthetic".into(),
        hardware_tag: "desk".into(),
    }
}

pub fn load_trace(path: &Path, c_max: usize) -> Result<Trace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text, c_max)
}

pub fn parse_trace(text: &str, c_max: usize) -> Result<Trace, TraceError> {
    let mut arms = Vec::new();
    let mut catalog = Catalog::default();
    let mut environment = None;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(line).map_err(|e| TraceError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed {
            TraceLine::Arm(a) => {
                if a.arm_id != arms.len() {
                    return Err(TraceError::ArmOrder(a.arm_id));
                }
                arms.push(a);
            }
            TraceLine::Catalog(c) => catalog.columns.extend(c.columns),
            TraceLine::Env(e) => environment = Some(e),
            TraceLine::Entry(d) => docs.push(d),
        }
    }
    if docs.is_empty() {
        return Err(TraceError::Empty);
    }
    if arms.is_empty() {
        return Err(TraceError::NoArms);
    }
    let k = arms.len();
    let registry = ChannelRegistry::v1();
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(docs.len());
    for d in docs {
        if !seen.insert(d.query_id.clone()) {
            return Err(TraceError::DuplicateQuery(d.query_id));
        }
        entries.push(build_entry(d, k, &catalog, &registry, c_max)?);
    }
    Ok(Trace {
        arms,
        catalog,
        environment: environment.unwrap_or_else(default_environment),
        entries,
        c_max,
    })
}

fn build_entry(
    d: EntryDoc,
    k: usize,
    catalog: &Catalog,
    registry: &ChannelRegistry,
    c_max: usize,
) -> Result<TraceEntry, TraceError> {
    let qid = d.query_id.clone();
    let unknown = d
        .runtimes_ms
        .keys()
        .chain(d.plans.keys())
        .copied()
        .chain(std::iter::once(d.estimated_best_arm))
        .find(|&a| a >= k);
    if let Some(arm) = unknown {
        return Err(TraceError::UnknownArm {
            query_id: qid,
            arm,
            arms: k,
        });
    }
    let mut runtimes = Vec::with_capacity(k);
    for arm in 0..k {
        let Some(&y) = d.runtimes_ms.get(&arm) else {
            return Err(TraceError::MissingRuntime { query_id: qid, arm });
        };
        if !(y.is_finite() && y > 0.0) {
            return Err(TraceError::BadRuntime {
                query_id: qid,
                arm,
                value: y,
            });
        }
        runtimes.push(y);
    }
    let parsed = parse_sql_subset(&d.sql).map_err(|source| TraceError::Sql {
        query_id: qid.clone(),
        source,
    })?;
    let referenced = parsed.referenced_columns();
    let mut plans = Vec::with_capacity(k);
    for arm in 0..k {
        let Some(doc) = d.plans.get(&arm) else {
            return Err(TraceError::MissingPlan { query_id: qid, arm });
        };
        let plan = ingest_plan(&format!("{qid}/{arm}"), &doc.to_string(), &referenced).map_err(
            |source| TraceError::Plan {
                query_id: qid.clone(),
                arm,
                source,
            },
        )?;
        plans.push(plan);
    }
    let embed_err = |source| TraceError::Embed {
        query_id: qid.clone(),
        source,
    };
    let universe = build_column_universe(&parsed);
    let tf = extract_template_features(&parsed, Some(&plans[0]));
    let m = assemble_matrix(
        &tf,
        &parsed,
        Some(&plans[0]),
        &universe,
        registry,
        catalog,
        &d.template_id,
    )
    .map_err(embed_err)?;
    let features = pad_to_shape(&m, c_max).map_err(embed_err)?;
    Ok(TraceEntry {
        query_id: d.query_id,
        template_id: d.template_id,
        sql_text: d.sql,
        parsed,
        runtimes_ms: runtimes,
        plans,
        estimated_best_arm: d.estimated_best_arm,
        features,
    })
}

/// `Σ_q min_a runtime(q, a)`.
pub fn oracle_runtime(entries: &[TraceEntry]) -> f64 {
    entries
        .iter()
        .map(|e| e.runtimes_ms.iter().copied().fold(f64::INFINITY, f64::min))
        .sum()
}

/// Per template, the arm with the lowest total runtime over that template's
/// entries (ties to the lowest id).
pub fn template_best_arms(trace: &Trace) -> BTreeMap<String, usize> {
    let k = trace.arm_count();
    let mut totals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in &trace.entries {
        let t = totals
            .entry(e.template_id.clone())
            .or_insert_with(|| vec![0.0; k]);
        for (acc, y) in t.iter_mut().zip(&e.runtimes_ms) {
            *acc += y;
        }
    }
    totals
        .into_iter()
        .map(|(t, v)| {
            let mut best = 0;
            for a in 1..k {
                if v[a] < v[best] {
                    best = a;
                }
            }
            (t, best)
        })
        .collect()
}
