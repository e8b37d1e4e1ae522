//! Append-only knowledge-graph store.
//!
//! One record per line, each a tagged object `{"kind": ..., "body": ...}`
//! with `kind ∈ {query, plan, arm, env, execution}`. The whole log is read
//! into memory at open and indexed by record id. A torn final line (from a
//! crash mid-append) is truncated away; damage anywhere else is an error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::column::ColumnRef;
use crate::plan::PlanTree;

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("conflict: record {0} already exists")]
    Conflict(String),
    #[error("invalid record: {0}")]
    Validation(String),
    #[error("store line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub sql_text: String,
    pub template_id: String,
    pub referenced_tables: Vec<String>,
    pub referenced_columns: Vec<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub query_id: String,
    pub arm_id: usize,
    pub plan: PlanTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub arm_id: usize,
    pub name: String,
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentSnapshot {
    pub env_id: String,
    pub settings: BTreeMap<String, String>,
    pub dataset_tag: String,
    pub hardware_tag: String,
}

/// Which policy produced an execution. Baseline runs are stored alongside
/// learned ones so that reports can be rebuilt from the store alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecPolicy {
    Learned,
    Baseline,
}

impl ExecPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ExecPolicy::Learned => "learned",
            ExecPolicy::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub exec_id: String,
    pub policy: ExecPolicy,
    pub query_id: String,
    pub arm_id: usize,
    pub plan_fingerprint: String,
    pub env_id: String,
    pub batch_index: u32,
    pub runtime_ms: f64,
    pub predicted_reward: Option<f64>,
    pub realized_reward: Option<f64>,
    pub timestamp: u64,
}

impl ExecutionRecord {
    pub fn key(policy: ExecPolicy, query_id: &str, arm_id: usize, batch_index: u32) -> String {
        format!("exec/{}/{query_id}/{arm_id}/{batch_index}", policy.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "lowercase")]
pub enum Record {
    Query(QueryRecord),
    Plan(PlanRecord),
    Arm(ArmSpec),
    Env(EnvironmentSnapshot),
    Execution(ExecutionRecord),
}

impl Record {
    pub fn id(&self) -> String {
        match self {
            Record::Query(q) => query_node(&q.query_id),
            Record::Plan(p) => plan_node(&p.query_id, p.arm_id),
            Record::Arm(a) => arm_node(a.arm_id),
            Record::Env(e) => env_node(&e.env_id),
            Record::Execution(x) => x.exec_id.clone(),
        }
    }
}

fn query_node(q: &str) -> String {
    format!("query/{q}")
}

fn plan_node(q: &str, arm: usize) -> String {
    format!("plan/{q}/{arm}")
}

fn arm_node(arm: usize) -> String {
    format!("arm/{arm}")
}

fn env_node(e: &str) -> String {
    format!("env/{e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Predicate {
    #[serde(rename = "hasPlan")]
    HasPlan,
    #[serde(rename = "hasNode")]
    HasNode,
    #[serde(rename = "useArm")]
    UseArm,
    #[serde(rename = "hasExecution")]
    HasExecution,
    #[serde(rename = "inEnvironment")]
    InEnvironment,
    #[serde(rename = "hasReward")]
    HasReward,
    #[serde(rename = "referencesColumn")]
    ReferencesColumn,
    #[serde(rename = "referencesTable")]
    ReferencesTable,
}

impl Predicate {
    pub fn name(self) -> &'static str {
        match self {
            Predicate::HasPlan => "hasPlan",
            Predicate::HasNode => "hasNode",
            Predicate::UseArm => "useArm",
            Predicate::HasExecution => "hasExecution",
            Predicate::InEnvironment => "inEnvironment",
            Predicate::HasReward => "hasReward",
            Predicate::ReferencesColumn => "referencesColumn",
            Predicate::ReferencesTable => "referencesTable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triple {
    pub subject: String,
    pub predicate: Predicate,
    pub object: String,
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}",
            self.subject,
            self.predicate.name(),
            self.object
        )
    }
}

/// One triple per line, tab separated, trailing newline.
pub fn triples_to_text(triples: &[Triple]) -> String {
    let mut s = String::new();
    for t in triples {
        s.push_str(&t.to_string());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecFilter {
    pub query_id: Option<String>,
    pub template_id: Option<String>,
    pub arm_id: Option<usize>,
    pub batches: Option<RangeInclusive<u32>>,
    pub policy: Option<ExecPolicy>,
}

#[derive(Debug, Default)]
pub struct KgStore {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<Record>,
    index: BTreeMap<String, usize>,
    arm_count: usize,
    last_timestamp: Option<u64>,
}

fn check_ident(what: &str, s: &str) -> Result<(), KgError> {
    let ok = !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'));
    if ok {
        Ok(())
    } else {
        Err(KgError::Validation(format!(
            "{what} `{s}` must be nonempty and use only [A-Za-z0-9_.:-]"
        )))
    }
}

fn check_unit(what: &str, v: Option<f64>) -> Result<(), KgError> {
    match v {
        Some(x) if !(0.0..=1.0).contains(&x) => {
            Err(KgError::Validation(format!("{what} {x} outside [0, 1]")))
        }
        _ => Ok(()),
    }
}

impl KgStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if absent) the log at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self, KgError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut store = Self::default();
        let mut offset = 0usize;
        let mut line_no = 0;
        while offset < bytes.len() {
            line_no += 1;
            let (end, complete) = match bytes[offset..].iter().position(|&b| b == b'\n') {
                Some(p) => (offset + p, true),
                None => (bytes.len(), false),
            };
            let parsed = std::str::from_utf8(&bytes[offset..end])
                .map_err(|e| e.to_string())
                .and_then(|l| serde_json::from_str::<Record>(l).map_err(|e| e.to_string()))
                .and_then(|r| store.insert(r).map_err(|e| e.to_string()));
            match parsed {
                Ok(()) if complete => offset = end + 1,
                Ok(()) => {
                    file.write_all(b"\n")?;
                    offset = end;
                }
                Err(_) if !complete => {
                    file.set_len(offset as u64)?;
                    break;
                }
                Err(message) => {
                    return Err(KgError::Corrupt {
                        line: line_no,
                        message,
                    })
                }
            }
        }
        store.path = Some(path.to_path_buf());
        store.file = Some(file);
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn validate(&self, record: &Record) -> Result<(), KgError> {
        match record {
            Record::Query(q) => {
                check_ident("query id", &q.query_id)?;
                check_ident("template id", &q.template_id)?;
                let tables: BTreeSet<_> = q.referenced_tables.iter().collect();
                if tables.len() != q.referenced_tables.len() {
                    return Err(KgError::Validation(format!(
                        "query {} lists a table twice",
                        q.query_id
                    )));
                }
                let cols: BTreeSet<_> = q.referenced_columns.iter().collect();
                if cols.len() != q.referenced_columns.len() {
                    return Err(KgError::Validation(format!(
                        "query {} lists a column twice",
                        q.query_id
                    )));
                }
            }
            Record::Plan(p) => {
                let Some(Record::Query(q)) = self.get(&query_node(&p.query_id)) else {
                    return Err(KgError::Validation(format!(
                        "plan references unknown query {}",
                        p.query_id
                    )));
                };
                if q.referenced_columns.is_empty() {
                    return Err(KgError::Validation(format!(
                        "query {} has a plan but no referenced columns",
                        q.query_id
                    )));
                }
                if p.arm_id >= self.arm_count {
                    return Err(KgError::Validation(format!(
                        "plan references unknown arm {}",
                        p.arm_id
                    )));
                }
                p.plan
                    .validate()
                    .map_err(|e| KgError::Validation(format!("plan {}: {e}", record.id())))?;
            }
            Record::Arm(a) => {
                if a.arm_id != self.arm_count {
                    return Err(KgError::Validation(format!(
                        "arm ids must be dense: expected {}, got {}",
                        self.arm_count, a.arm_id
                    )));
                }
                if a.arm_id == 0 && !a.settings.is_empty() {
                    return Err(KgError::Validation(
                        "arm 0 is the all-defaults arm and takes no settings".into(),
                    ));
                }
            }
            Record::Env(e) => check_ident("environment id", &e.env_id)?,
            Record::Execution(x) => {
                let key = ExecutionRecord::key(x.policy, &x.query_id, x.arm_id, x.batch_index);
                if x.exec_id != key {
                    return Err(KgError::Validation(format!(
                        "execution id {} does not match its key {key}",
                        x.exec_id
                    )));
                }
                if !(x.runtime_ms.is_finite() && x.runtime_ms > 0.0) {
                    return Err(KgError::Validation(format!(
                        "runtime_ms must be positive, got {}",
                        x.runtime_ms
                    )));
                }
                check_unit("predicted_reward", x.predicted_reward)?;
                check_unit("realized_reward", x.realized_reward)?;
                if let Some(last) = self.last_timestamp {
                    if x.timestamp <= last {
                        return Err(KgError::Validation(format!(
                            "timestamp {} is not after {last}",
                            x.timestamp
                        )));
                    }
                }
                if self.get(&query_node(&x.query_id)).is_none() {
                    return Err(KgError::Validation(format!(
                        "execution references unknown query {}",
                        x.query_id
                    )));
                }
                if x.arm_id >= self.arm_count {
                    return Err(KgError::Validation(format!(
                        "execution references unknown arm {}",
                        x.arm_id
                    )));
                }
                if self.get(&env_node(&x.env_id)).is_none() {
                    return Err(KgError::Validation(format!(
                        "execution references unknown environment {}",
                        x.env_id
                    )));
                }
            }
        }
        Ok(())
    }

    fn insert(&mut self, record: Record) -> Result<(), KgError> {
        let id = record.id();
        if self.index.contains_key(&id) {
            return Err(KgError::Conflict(id));
        }
        self.validate(&record)?;
        match &record {
            Record::Arm(_) => self.arm_count += 1,
            Record::Execution(x) => self.last_timestamp = Some(x.timestamp),
            _ => {}
        }
        self.index.insert(id, self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Validates and appends `record`, returning its id.
    pub fn put(&mut self, record: Record) -> Result<String, KgError> {
        let id = record.id();
        let line = serde_json::to_string(&record).expect("records serialize");
        self.insert(record)?;
        if let Some(f) = self.file.as_mut() {
            f.write_all(line.as_bytes())?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arm_count(&self) -> usize {
        self.arm_count
    }

    /// Timestamp to give the next execution record.
    pub fn next_timestamp(&self) -> u64 {
        self.last_timestamp.map_or(0, |t| t + 1)
    }

    pub fn query(&self, query_id: &str) -> Option<&QueryRecord> {
        match self.get(&query_node(query_id)) {
            Some(Record::Query(q)) => Some(q),
            _ => None,
        }
    }

    pub fn plan(&self, query_id: &str, arm_id: usize) -> Option<&PlanRecord> {
        match self.get(&plan_node(query_id, arm_id)) {
            Some(Record::Plan(p)) => Some(p),
            _ => None,
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Query(q) => Some(q),
            _ => None,
        })
    }

    pub fn arms(&self) -> impl Iterator<Item = &ArmSpec> {
        self.records.iter().filter_map(|r| match r {
            Record::Arm(a) => Some(a),
            _ => None,
        })
    }

    pub fn environments(&self) -> impl Iterator<Item = &EnvironmentSnapshot> {
        self.records.iter().filter_map(|r| match r {
            Record::Env(e) => Some(e),
            _ => None,
        })
    }

    pub fn executions(&self) -> impl Iterator<Item = &ExecutionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Execution(x) => Some(x),
            _ => None,
        })
    }

    /// All executions matching `filter`, in timestamp order.
    pub fn query_executions(&self, filter: &ExecFilter) -> Vec<ExecutionRecord> {
        let mut out: Vec<ExecutionRecord> = self
            .executions()
            .filter(|x| {
                filter.query_id.as_ref().is_none_or(|q| *q == x.query_id)
                    && filter.arm_id.is_none_or(|a| a == x.arm_id)
                    && filter.policy.is_none_or(|p| p == x.policy)
                    && filter
                        .batches
                        .as_ref()
                        .is_none_or(|b| b.contains(&x.batch_index))
                    && filter.template_id.as_ref().is_none_or(|t| {
                        self.query(&x.query_id).is_some_and(|q| q.template_id == *t)
                    })
            })
            .cloned()
            .collect();
        out.sort_by_key(|x| x.timestamp);
        out
    }

    /// Triples in log order; within a record, in a fixed per-kind order.
    pub fn export_triples(&self) -> Vec<Triple> {
        let mut out = Vec::new();
        let mut push = |s: String, p: Predicate, o: String| {
            out.push(Triple {
                subject: s,
                predicate: p,
                object: o,
            })
        };
        for r in &self.records {
            match r {
                Record::Query(q) => {
                    let s = query_node(&q.query_id);
                    for t in &q.referenced_tables {
                        push(s.clone(), Predicate::ReferencesTable, format!("table/{t}"));
                    }
                    for c in &q.referenced_columns {
                        push(
                            s.clone(),
                            Predicate::ReferencesColumn,
                            format!("column/{c}"),
                        );
                    }
                }
                Record::Plan(p) => {
                    let pid = plan_node(&p.query_id, p.arm_id);
                    push(query_node(&p.query_id), Predicate::HasPlan, pid.clone());
                    for n in &p.plan.nodes {
                        push(
                            pid.clone(),
                            Predicate::HasNode,
                            format!("{pid}/node/{}", n.node_id),
                        );
                    }
                }
                Record::Arm(_) | Record::Env(_) => {}
                Record::Execution(x) => {
                    push(
                        query_node(&x.query_id),
                        Predicate::HasExecution,
                        x.exec_id.clone(),
                    );
                    push(x.exec_id.clone(), Predicate::UseArm, arm_node(x.arm_id));
                    push(
                        x.exec_id.clone(),
                        Predicate::InEnvironment,
                        env_node(&x.env_id),
                    );
                    if let Some(r) = x.realized_reward {
                        push(x.exec_id.clone(), Predicate::HasReward, format!("{r:?}"));
                    }
                }
            }
        }
        out
    }

    /// Checks that every entity a triple mentions resolves to a stored record.
    /// Returns one message per dangling reference.
    pub fn check_integrity(&self, triples: &[Triple]) -> Vec<String> {
        let mut problems = Vec::new();
        let resolves = |id: &str| -> bool {
            if self.index.contains_key(id) {
                return true;
            }
            if let Some((plan, node)) = id.rsplit_once("/node/") {
                if let (Some(Record::Plan(p)), Ok(n)) = (self.get(plan), node.parse::<u32>()) {
                    return p.plan.nodes.iter().any(|x| x.node_id == n);
                }
            }
            false
        };
        for t in triples {
            let (s_ok, o_ok) = match t.predicate {
                Predicate::ReferencesTable | Predicate::ReferencesColumn => {
                    (resolves(&t.subject), true)
                }
                Predicate::HasReward => (resolves(&t.subject), t.object.parse::<f64>().is_ok()),
                _ => (resolves(&t.subject), resolves(&t.object)),
            };
            if !s_ok || !o_ok {
                problems.push(format!("dangling reference in `{t}`"));
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{from_document, PlanDocument};

    fn query(id: &str, template: &str) -> Record {
        Record::Query(QueryRecord {
            query_id: id.into(),
            sql_text: "SELECT t.x FROM t".into(),
            template_id: template.into(),
            referenced_tables: vec!["t".into()],
            referenced_columns: vec![ColumnRef::new("t", "x")],
        })
    }

    fn arm(id: usize) -> Record {
        let mut settings = BTreeMap::new();
        if id > 0 {
            settings.insert("enable_hashjoin".into(), "off".into());
        }
        Record::Arm(ArmSpec {
            arm_id: id,
            name: if id == 0 {
                "default".into()
            } else {
                format!("arm{id}")
            },
            settings,
        })
    }

    fn env() -> Record {
        Record::Env(EnvironmentSnapshot {
            env_id: "e0".into(),
            settings: BTreeMap::new(),
            dataset_tag: "synthetic".into(),
            hardware_tag: "desk".into(),
        })
    }

    fn exec(store: &KgStore, q: &str, arm: usize, batch: u32, runtime: f64) -> Record {
        Record::Execution(ExecutionRecord {
            exec_id: ExecutionRecord::key(ExecPolicy::Learned, q, arm, batch),
            policy: ExecPolicy::Learned,
            query_id: q.into(),
            arm_id: arm,
            plan_fingerprint: "00".into(),
            env_id: "e0".into(),
            batch_index: batch,
            runtime_ms: runtime,
            predicted_reward: None,
            realized_reward: Some(0.5),
            timestamp: store.next_timestamp(),
        })
    }

    fn seeded() -> KgStore {
        let mut s = KgStore::in_memory();
        for a in 0..5 {
            s.put(arm(a)).unwrap();
        }
        s.put(env()).unwrap();
        s
    }

    #[test]
    fn default_arm_id() {
        let mut s = KgStore::in_memory();
        assert_eq!(s.put(arm(0)).unwrap(), "arm/0");
    }

    #[test]
    fn negative_runtime_rejected() {
        let mut s = seeded();
        s.put(query("q1", "t1")).unwrap();
        let r = exec(&s, "q1", 0, 0, -1.0);
        assert!(matches!(s.put(r), Err(KgError::Validation(_))));
    }

    #[test]
    fn duplicate_execution_key_conflicts() {
        let mut s = seeded();
        s.put(query("q1", "t1")).unwrap();
        let r = exec(&s, "q1", 2, 0, 5.0);
        s.put(r).unwrap();
        let r = exec(&s, "q1", 2, 0, 7.0);
        assert!(matches!(s.put(r), Err(KgError::Conflict(_))));
    }

    #[test]
    fn empty_store_queries() {
        let s = KgStore::in_memory();
        let f = ExecFilter {
            arm_id: Some(3),
            ..Default::default()
        };
        assert!(s.query_executions(&f).is_empty());
        assert!(s.export_triples().is_empty());
    }

    #[test]
    fn filters_by_template_and_batch() {
        let mut s = seeded();
        for i in 0..12 {
            let t = if i < 5 { "t1" } else { "t2" };
            s.put(query(&format!("q{i}"), t)).unwrap();
        }
        let mut expected_t1 = Vec::new();
        for i in 0..12 {
            let r = exec(&s, &format!("q{i}"), i % 5, (i / 4) as u32, 1.0 + i as f64);
            if i < 5 {
                expected_t1.push(r.id());
            }
            s.put(r).unwrap();
        }
        let t1 = s.query_executions(&ExecFilter {
            template_id: Some("t1".into()),
            ..Default::default()
        });
        assert_eq!(
            t1.iter().map(|x| x.exec_id.clone()).collect::<Vec<_>>(),
            expected_t1
        );
        let b2 = s.query_executions(&ExecFilter {
            batches: Some(2..=2),
            ..Default::default()
        });
        assert_eq!(b2.len(), 4);
        assert!(b2.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn triple_counts_for_single_query() {
        let mut s = seeded();
        s.put(query("q1", "t1")).unwrap();
        let doc =
            PlanDocument::leaf("Aggregate", None, 1.0, 1.0).with_children(vec![
                PlanDocument::leaf("Sort", None, 2.0, 10.0)
                    .with_children(vec![PlanDocument::leaf("Seq Scan", Some("t"), 5.0, 10.0)]),
            ]);
        let plan = from_document("p", &doc, &[ColumnRef::new("t", "x")]).unwrap();
        s.put(Record::Plan(PlanRecord {
            query_id: "q1".into(),
            arm_id: 0,
            plan,
        }))
        .unwrap();
        let r = exec(&s, "q1", 0, 0, 3.0);
        s.put(r).unwrap();
        let triples = s.export_triples();
        let count = |p: Predicate| triples.iter().filter(|t| t.predicate == p).count();
        assert_eq!(count(Predicate::HasPlan), 1);
        assert_eq!(count(Predicate::HasNode), 3);
        assert_eq!(count(Predicate::UseArm), 1);
        assert_eq!(count(Predicate::ReferencesColumn), 1);
        assert_eq!(count(Predicate::InEnvironment), 1);
        assert!(s.check_integrity(&triples).is_empty());
        assert_eq!(
            triples_to_text(&triples),
            triples_to_text(&s.export_triples())
        );
    }

    #[test]
    fn integrity_scan_reports_dangling_arm() {
        let s = seeded();
        let bogus = vec![Triple {
            subject: "exec/learned/q/9/0".into(),
            predicate: Predicate::UseArm,
            object: "arm/9".into(),
        }];
        assert_eq!(s.check_integrity(&bogus).len(), 1);
    }

    #[test]
    fn arms_must_be_dense_and_arm0_default() {
        let mut s = KgStore::in_memory();
        assert!(matches!(s.put(arm(1)), Err(KgError::Validation(_))));
        let mut bad = ArmSpec {
            arm_id: 0,
            name: "default".into(),
            settings: BTreeMap::new(),
        };
        bad.settings.insert("work_mem".into(), "1GB".into());
        assert!(s.put(Record::Arm(bad)).is_err());
    }

    #[test]
    fn reopen_round_trips_and_truncates_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        let originals: Vec<Record>;
        {
            let mut s = KgStore::open(&path).unwrap();
            for a in 0..2 {
                s.put(arm(a)).unwrap();
            }
            s.put(env()).unwrap();
            s.put(query("q1", "t1")).unwrap();
            let r = exec(&s, "q1", 1, 0, 0.1 + 0.2);
            s.put(r).unwrap();
            originals = s.records().to_vec();
        }
        {
            let mut f = OpenOptions::new().append(true).open(&path).unwrap();
            f.write_all(b"{\"kind\":\"query\",\"bo").unwrap();
        }
        let mut s = KgStore::open(&path).unwrap();
        assert_eq!(s.records(), &originals[..]);
        s.put(query("q2", "t1")).unwrap();
        drop(s);
        let s = KgStore::open(&path).unwrap();
        assert_eq!(s.records().len(), originals.len() + 1);
        assert_eq!(s.next_timestamp(), 1);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        std::fs::write(
            &path,
            "{\"kind\":\"arm\",\"body\":{\"arm_id\":0,\"name\":\"d\",\"settings\":{}}}\nnot json\n{}\n",
        )
        .unwrap();
        assert!(matches!(
            KgStore::open(&path),
            Err(KgError::Corrupt { line: 2, .. })
        ));
    }
}
