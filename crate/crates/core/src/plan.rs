//! Plan trees ingested from EXPLAIN-style documents.
//!
//! A plan document is a nested object:
//!
//! ```text
//! { "node_type": "Hash Join", "relation": "posts", "cost": 12.5, "rows": 300,
//!   "columns": ["posts.owner_id", "users.id"], "children": [ ... ] }
//! ```
//!
//! `cost` is the node-exclusive cost, not PostgreSQL's cumulative total, so that
//! summing over all nodes never double counts. `relation` and `columns` are
//! optional. A node that names a relation but lists no columns is attributed to
//! every referenced column of that relation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::column::ColumnRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    SeqScan,
    IndexScan,
    HashJoin,
    MergeJoin,
    NestLoop,
    Sort,
    Aggregate,
    Other,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 8] = [
        OperatorKind::SeqScan,
        OperatorKind::IndexScan,
        OperatorKind::HashJoin,
        OperatorKind::MergeJoin,
        OperatorKind::NestLoop,
        OperatorKind::Sort,
        OperatorKind::Aggregate,
        OperatorKind::Other,
    ];

    /// Maps an EXPLAIN node type onto the enum. Matching ignores case, spaces
    /// and underscores; anything unrecognised is `Other`.
    pub fn from_node_type(node_type: &str) -> Self {
        let key: String = node_type
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "seqscan" | "sequentialscan" => OperatorKind::SeqScan,
            "indexscan" | "indexonlyscan" => OperatorKind::IndexScan,
            "hashjoin" => OperatorKind::HashJoin,
            "mergejoin" => OperatorKind::MergeJoin,
            "nestloop" | "nestedloop" => OperatorKind::NestLoop,
            "sort" | "incrementalsort" => OperatorKind::Sort,
            "aggregate" | "hashaggregate" | "groupaggregate" => OperatorKind::Aggregate,
            _ => OperatorKind::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::SeqScan => "SeqScan",
            OperatorKind::IndexScan => "IndexScan",
            OperatorKind::HashJoin => "HashJoin",
            OperatorKind::MergeJoin => "MergeJoin",
            OperatorKind::NestLoop => "NestLoop",
            OperatorKind::Sort => "Sort",
            OperatorKind::Aggregate => "Aggregate",
            OperatorKind::Other => "Other",
        }
    }

    pub fn is_scan(self) -> bool {
        matches!(self, OperatorKind::SeqScan | OperatorKind::IndexScan)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("plan node at {path} is missing required field `{field}`")]
    MissingField { path: String, field: &'static str },
    #[error("plan node at {path} has invalid {field}: {value}")]
    InvalidValue {
        path: String,
        field: &'static str,
        value: f64,
    },
    #[error("plan document has {0} roots; exactly one is required")]
    MultipleRoots(usize),
    #[error(
        "plan node at {path}: column `{column}` is unqualified and the node names no relation"
    )]
    UnqualifiedColumn { path: String, column: String },
    #[error("malformed plan document: {0}")]
    Malformed(String),
    #[error("plan tree is not a tree: {0}")]
    NotATree(String),
}

/// Wire form of a plan node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<PlanDocument>,
}

impl PlanDocument {
    pub fn leaf(node_type: &str, relation: Option<&str>, cost: f64, rows: f64) -> Self {
        Self {
            node_type: node_type.to_string(),
            relation: relation.map(str::to_string),
            cost: Some(cost),
            rows: Some(rows),
            columns: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_columns<I, S>(mut self, columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.columns = columns.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_children(mut self, children: Vec<PlanDocument>) -> Self {
        self.children = children;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub node_id: u32,
    pub operator: OperatorKind,
    /// Node type exactly as it appeared in the source document.
    pub node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    pub est_cost: f64,
    pub est_rows: f64,
    pub children: Vec<u32>,
    /// Columns this node's cost and rows are broadcast to.
    pub column_set: BTreeSet<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub plan_id: String,
    pub root: u32,
    pub nodes: Vec<PlanNode>,
    pub fingerprint: String,
}

/// Parses a plan document (an object, or an array holding exactly one object).
pub fn ingest_plan(
    plan_id: &str,
    document: &str,
    referenced: &[ColumnRef],
) -> Result<PlanTree, PlanError> {
    let value: serde_json::Value =
        serde_json::from_str(document).map_err(|e| PlanError::Malformed(e.to_string()))?;
    let root = match value {
        serde_json::Value::Array(mut items) => {
            if items.len() != 1 {
                return Err(PlanError::MultipleRoots(items.len()));
            }
            items.remove(0)
        }
        other => other,
    };
    let doc: PlanDocument =
        serde_json::from_value(root).map_err(|e| PlanError::Malformed(e.to_string()))?;
    from_document(plan_id, &doc, referenced)
}

pub fn from_document(
    plan_id: &str,
    doc: &PlanDocument,
    referenced: &[ColumnRef],
) -> Result<PlanTree, PlanError> {
    let mut nodes = Vec::new();
    push_node(doc, referenced, "0", &mut nodes)?;
    let fingerprint = fingerprint(&nodes, 0);
    Ok(PlanTree {
        plan_id: plan_id.to_string(),
        root: 0,
        nodes,
        fingerprint,
    })
}

fn push_node(
    doc: &PlanDocument,
    referenced: &[ColumnRef],
    path: &str,
    nodes: &mut Vec<PlanNode>,
) -> Result<u32, PlanError> {
    let cost = doc.cost.ok_or_else(|| PlanError::MissingField {
        path: path.to_string(),
        field: "cost",
    })?;
    let rows = doc.rows.ok_or_else(|| PlanError::MissingField {
        path: path.to_string(),
        field: "rows",
    })?;
    for (field, value) in [("cost", cost), ("rows", rows)] {
        if !value.is_finite() || value < 0.0 {
            return Err(PlanError::InvalidValue {
                path: path.to_string(),
                field,
                value,
            });
        }
    }

    let relation = doc.relation.as_ref().map(|r| r.to_lowercase());
    let mut column_set = BTreeSet::new();
    for raw in &doc.columns {
        let raw = raw.to_lowercase();
        let col = match raw.parse::<ColumnRef>() {
            Ok(c) => c,
            Err(_) => match &relation {
                Some(rel) if !raw.contains('.') => ColumnRef::new(rel.clone(), raw),
                _ => {
                    return Err(PlanError::UnqualifiedColumn {
                        path: path.to_string(),
                        column: raw,
                    })
                }
            },
        };
        column_set.insert(col);
    }
    if doc.columns.is_empty() {
        if let Some(rel) = &relation {
            column_set.extend(referenced.iter().filter(|c| &c.table == rel).cloned());
        }
    }

    let id = nodes.len() as u32;
    nodes.push(PlanNode {
        node_id: id,
        operator: OperatorKind::from_node_type(&doc.node_type),
        node_type: doc.node_type.clone(),
        relation,
        est_cost: cost,
        est_rows: rows,
        children: Vec::new(),
        column_set,
    });
    let mut children = Vec::with_capacity(doc.children.len());
    for (i, child) in doc.children.iter().enumerate() {
        children.push(push_node(child, referenced, &format!("{path}.{i}"), nodes)?);
    }
    nodes[id as usize].children = children;
    Ok(id)
}

/// Structure-only hash: pre-order `(operator, child-count)` pairs, costs excluded.
fn fingerprint(nodes: &[PlanNode], root: u32) -> String {
    let mut hasher = Sha256::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let node = &nodes[id as usize];
        hasher.update(format!("{}:{};", node.operator.name(), node.children.len()).as_bytes());
        stack.extend(node.children.iter().rev());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl PlanTree {
    pub fn node(&self, id: u32) -> &PlanNode {
        &self.nodes[id as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `est_cost` over every node.
    pub fn total_cost(&self) -> f64 {
        self.nodes.iter().map(|n| n.est_cost).sum()
    }

    /// Sum of `est_rows` over every node.
    pub fn total_rows(&self) -> f64 {
        self.nodes.iter().map(|n| n.est_rows).sum()
    }

    pub fn root_rows(&self) -> f64 {
        self.node(self.root).est_rows
    }

    pub fn contains(&self, op: OperatorKind) -> bool {
        self.nodes.iter().any(|n| n.operator == op)
    }

    /// Node ids of the subtree rooted at `id`, pre-order.
    pub fn subtree(&self, id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.node(n).children.iter().rev());
        }
        out
    }

    /// Checks single-rootedness, acyclicity and id density.
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.nodes.is_empty() {
            return Err(PlanError::NotATree("no nodes".into()));
        }
        let n = self.nodes.len();
        let mut parents = vec![0usize; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id as usize != i {
                return Err(PlanError::NotATree(format!(
                    "node at position {i} has id {}",
                    node.node_id
                )));
            }
            if !(node.est_cost.is_finite() && node.est_cost >= 0.0) {
                return Err(PlanError::InvalidValue {
                    path: i.to_string(),
                    field: "cost",
                    value: node.est_cost,
                });
            }
            if !(node.est_rows.is_finite() && node.est_rows >= 0.0) {
                return Err(PlanError::InvalidValue {
                    path: i.to_string(),
                    field: "rows",
                    value: node.est_rows,
                });
            }
            for &c in &node.children {
                if c as usize >= n {
                    return Err(PlanError::NotATree(format!("dangling child {c}")));
                }
                parents[c as usize] += 1;
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i] == 0).collect();
        if roots != [self.root as usize] {
            return Err(PlanError::MultipleRoots(roots.len()));
        }
        if parents.iter().any(|&p| p > 1) {
            return Err(PlanError::NotATree("node with several parents".into()));
        }
        if self.subtree(self.root).len() != n {
            return Err(PlanError::NotATree("cycle or unreachable node".into()));
        }
        if fingerprint(&self.nodes, self.root) != self.fingerprint {
            return Err(PlanError::NotATree("fingerprint mismatch".into()));
        }
        Ok(())
    }

    /// Canonical document: explicit qualified columns on every node.
    pub fn to_document(&self) -> PlanDocument {
        self.document_at(self.root)
    }

    fn document_at(&self, id: u32) -> PlanDocument {
        let node = self.node(id);
        PlanDocument {
            node_type: node.node_type.clone(),
            relation: node.relation.clone(),
            cost: Some(node.est_cost),
            rows: Some(node.est_rows),
            columns: node.column_set.iter().map(ToString::to_string).collect(),
            children: node.children.iter().map(|&c| self.document_at(c)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("plan documents always serialize")
    }
}
