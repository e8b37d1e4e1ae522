//! Feature-matrix embedding over the referenced-column universe.
//!
//! Rows are channels from a fixed, versioned registry; columns are the
//! query's referenced `(table, column)` pairs in lexicographic order.
//! Template-level scalars are broadcast across every column. Plan shares
//! broadcast node cost (rows) onto the columns each node is attributed to:
//!
//! ```text
//! plan_cost_share(u) = Σ_{p : u ∈ S(p)} cost(p) / Σ_q cost(q)
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::column::ColumnRef;
use crate::plan::{OperatorKind, PlanTree};
use crate::sql::{ParsedQuery, TemplateFeatures};

pub const DEFAULT_C_MAX: usize = 32;
pub const REGISTRY_VERSION: u32 = 1;

/// Shares may overshoot 1 by at most this much from rounding before it is an error.
const SHARE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("column universe has {have} columns, capacity is {capacity}")]
    Capacity { have: usize, capacity: usize },
    #[error("share for column {column} is {value}, exceeds 1")]
    ShareOverflow { column: String, value: f64 },
    #[error("registry version {0} is not supported")]
    UnsupportedRegistry(u32),
    #[error("column {0} is in the universe but not referenced by the query")]
    UniverseMismatch(String),
    #[error("matrix invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ColumnUniverse {
    pub columns: Vec<ColumnRef>,
}

impl ColumnUniverse {
    pub const ORDERING: &'static str = "lexicographic(table,column)";

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, c: &ColumnRef) -> Option<usize> {
        self.columns.binary_search(c).ok()
    }
}

pub fn build_column_universe(pq: &ParsedQuery) -> ColumnUniverse {
    // BTreeSet iteration is already sorted and duplicate-free
    ColumnUniverse {
        columns: pq.columns.iter().cloned().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    TemplateBroadcast,
    PlanShare,
    OperatorShare,
    ColumnTrait,
    Mask,
}

impl ChannelKind {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            ChannelKind::TemplateBroadcast | ChannelKind::ColumnTrait | ChannelKind::Mask
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub name: String,
    pub kind: ChannelKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelRegistry {
    pub version: u32,
    pub channels: Vec<Channel>,
}

/// Operator kinds that get their own share row. `Other` is left out: it is
/// one minus the sum of these.
pub const SHARE_OPERATORS: [OperatorKind; 7] = [
    OperatorKind::SeqScan,
    OperatorKind::IndexScan,
    OperatorKind::HashJoin,
    OperatorKind::MergeJoin,
    OperatorKind::NestLoop,
    OperatorKind::Sort,
    OperatorKind::Aggregate,
];

impl ChannelRegistry {
    pub fn v1() -> Self {
        use ChannelKind::*;
        let mut ch: Vec<(String, ChannelKind)> = vec![
            ("tpl_has_distinct".into(), TemplateBroadcast),
            ("tpl_need_sort_for_merge".into(), TemplateBroadcast),
        ];
        ch.extend((0..4).map(|i| (format!("tpl_group_by_cols_bucket_{i}"), TemplateBroadcast)));
        ch.extend((0..3).map(|i| (format!("tpl_rows_bucket_{i}"), TemplateBroadcast)));
        ch.push(("sql_has_window".into(), TemplateBroadcast));
        ch.push(("sql_has_like".into(), TemplateBroadcast));
        ch.extend((0..3).map(|i| (format!("sql_num_join_bucket_{i}"), TemplateBroadcast)));
        ch.extend((0..2).map(|i| (format!("sql_num_subquery_bucket_{i}"), TemplateBroadcast)));
        ch.push(("plan_cost_share".into(), PlanShare));
        ch.push(("plan_rows_share".into(), PlanShare));
        ch.push(("col_cost_from_scan_share".into(), PlanShare));
        ch.push(("col_cost_from_agg_share".into(), PlanShare));
        ch.extend(
            SHARE_OPERATORS
                .iter()
                .map(|op| (format!("plan_cost_op_{}_share", op.name()), OperatorShare)),
        );
        for t in ["numeric", "indexed", "in_where", "in_join", "in_orderby"] {
            ch.push((format!("col_{t}"), ColumnTrait));
        }
        ch.push(("is_real_column".into(), Mask));
        Self {
            version: REGISTRY_VERSION,
            channels: ch
                .into_iter()
                .map(|(name, kind)| Channel { name, kind })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn mask_row(&self) -> usize {
        self.len() - 1
    }
}

/// Per-column traits that cannot be read from SQL text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnTraits {
    #[serde(default)]
    pub numeric: bool,
    #[serde(default)]
    pub indexed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub columns: BTreeMap<ColumnRef, ColumnTraits>,
}

impl Catalog {
    pub fn traits(&self, c: &ColumnRef) -> ColumnTraits {
        self.columns.get(c).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanShares {
    pub cost: Vec<f64>,
    pub rows: Vec<f64>,
    /// Total cost was zero; `cost` is all zeros.
    pub cost_degenerate: bool,
    pub rows_degenerate: bool,
}

/// Sums `weight(p) / total` over every node whose column set holds each
/// universe column. Nodes rejected by `keep` contribute nothing but still count
/// in `total`.
fn broadcast(
    plan: &PlanTree,
    universe: &ColumnUniverse,
    total: f64,
    weight: impl Fn(&crate::plan::PlanNode) -> f64,
    keep: impl Fn(&crate::plan::PlanNode) -> bool,
) -> Result<Vec<f64>, EmbedError> {
    let mut out = vec![0.0; universe.len()];
    if total <= 0.0 {
        return Ok(out);
    }
    for node in plan.nodes.iter().filter(|n| keep(n)) {
        let frac = weight(node) / total;
        for c in &node.column_set {
            if let Some(i) = universe.index_of(c) {
                out[i] += frac;
            }
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        if *v > 1.0 {
            if *v - 1.0 <= SHARE_SLACK {
                *v = 1.0;
            } else {
                return Err(EmbedError::ShareOverflow {
                    column: universe.columns[i].to_string(),
                    value: *v,
                });
            }
        }
    }
    Ok(out)
}

pub fn compute_plan_shares(
    plan: &PlanTree,
    universe: &ColumnUniverse,
) -> Result<PlanShares, EmbedError> {
    let total_cost = plan.total_cost();
    let total_rows = plan.total_rows();
    Ok(PlanShares {
        cost: broadcast(plan, universe, total_cost, |n| n.est_cost, |_| true)?,
        rows: broadcast(plan, universe, total_rows, |n| n.est_rows, |_| true)?,
        cost_degenerate: total_cost <= 0.0,
        rows_degenerate: total_rows <= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorShares {
    /// Every operator kind, including `Other`.
    pub by_operator: BTreeMap<OperatorKind, f64>,
    pub scan: Vec<f64>,
    pub aggregate: Vec<f64>,
    pub degenerate: bool,
}

impl OperatorShares {
    pub fn share(&self, op: OperatorKind) -> f64 {
        self.by_operator.get(&op).copied().unwrap_or(0.0)
    }
}

pub fn compute_operator_shares(
    plan: &PlanTree,
    universe: &ColumnUniverse,
) -> Result<OperatorShares, EmbedError> {
    let total = plan.total_cost();
    let mut by_operator: BTreeMap<OperatorKind, f64> =
        OperatorKind::ALL.iter().map(|&op| (op, 0.0)).collect();
    if total > 0.0 {
        for n in &plan.nodes {
            *by_operator.get_mut(&n.operator).expect("all kinds present") += n.est_cost / total;
        }
        for v in by_operator.values_mut() {
            *v = v.min(1.0);
        }
    }
    Ok(OperatorShares {
        by_operator,
        scan: broadcast(
            plan,
            universe,
            total,
            |n| n.est_cost,
            |n| n.operator.is_scan(),
        )?,
        aggregate: broadcast(
            plan,
            universe,
            total,
            |n| n.est_cost,
            |n| n.operator == OperatorKind::Aggregate,
        )?,
        degenerate: total <= 0.0,
    })
}

/// Dense `R × C` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub universe: ColumnUniverse,
    pub registry_version: u32,
    pub context_id: String,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            universe: ColumnUniverse::default(),
            registry_version: REGISTRY_VERSION,
            context_id: String::new(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    fn fill_row(&mut self, r: usize, v: f64) {
        let cols = self.cols;
        self.values[r * cols..(r + 1) * cols].fill(v);
    }

    /// Checks value ranges against the registry's channel kinds.
    pub fn validate(&self, registry: &ChannelRegistry) -> Result<(), EmbedError> {
        if self.rows != registry.len() {
            return Err(EmbedError::Invariant(format!(
                "{} rows, registry has {}",
                self.rows,
                registry.len()
            )));
        }
        for (r, ch) in registry.channels.iter().enumerate() {
            for (c, &v) in self.row(r).iter().enumerate() {
                let ok = if ch.kind.is_binary() {
                    v == 0.0 || v == 1.0
                } else {
                    v.is_finite() && (0.0..=1.0).contains(&v)
                };
                if !ok {
                    return Err(EmbedError::Invariant(format!("{}[{c}] = {v}", ch.name)));
                }
            }
        }
        Ok(())
    }

    /// Row-major text, one row per line, values with 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|&v| format_sig9(v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// `%.9g`-style formatting.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn assemble_matrix(
    tf: &TemplateFeatures,
    pq: &ParsedQuery,
    plan: Option<&PlanTree>,
    universe: &ColumnUniverse,
    registry: &ChannelRegistry,
    catalog: &Catalog,
    context_id: &str,
) -> Result<FeatureMatrix, EmbedError> {
    if registry != &ChannelRegistry::v1() {
        return Err(EmbedError::UnsupportedRegistry(registry.version));
    }
    if let Some(c) = universe.columns.iter().find(|c| !pq.columns.contains(c)) {
        return Err(EmbedError::UniverseMismatch(c.to_string()));
    }
    let mut m = FeatureMatrix::zeros(registry.len(), universe.len());
    m.universe = universe.clone();
    m.registry_version = registry.version;
    m.context_id = context_id.to_string();

    let mut row = 0;
    let mut put = |m: &mut FeatureMatrix, v: f64| {
        m.fill_row(row, v);
        row += 1;
    };
    put(&mut m, tf.has_distinct);
    put(&mut m, tf.need_sort_for_merge);
    for &v in tf.group_by_bucket.iter().chain(&tf.rows_bucket) {
        put(&mut m, v);
    }
    put(&mut m, tf.has_window);
    put(&mut m, tf.has_like);
    for &v in tf.num_join_bucket.iter().chain(&tf.num_subquery_bucket) {
        put(&mut m, v);
    }
    debug_assert_eq!(row, 16);

    if let Some(plan) = plan {
        let shares = compute_plan_shares(plan, universe)?;
        let ops = compute_operator_shares(plan, universe)?;
        let per_column = [&shares.cost, &shares.rows, &ops.scan, &ops.aggregate];
        for (i, vec) in per_column.into_iter().enumerate() {
            for (c, &v) in vec.iter().enumerate() {
                m.set(16 + i, c, v);
            }
        }
        for (i, op) in SHARE_OPERATORS.iter().enumerate() {
            m.fill_row(20 + i, ops.share(*op));
        }
    }

    for (c, col) in universe.columns.iter().enumerate() {
        let traits = catalog.traits(col);
        let flags = [
            traits.numeric,
            traits.indexed,
            pq.in_where.contains(col),
            pq.in_join.contains(col),
            pq.in_orderby.contains(col),
        ];
        for (i, f) in flags.into_iter().enumerate() {
            m.set(27 + i, c, if f { 1.0 } else { 0.0 });
        }
        m.set(registry.mask_row(), c, 1.0);
    }
    m.validate(registry)?;
    Ok(m)
}

/// Zero-pads on the right to `c_max` columns; padded columns have mask 0.
pub fn pad_to_shape(m: &FeatureMatrix, c_max: usize) -> Result<FeatureMatrix, EmbedError> {
    if m.cols > c_max {
        return Err(EmbedError::Capacity {
            have: m.cols,
            capacity: c_max,
        });
    }
    let mut out = FeatureMatrix::zeros(m.rows, c_max);
    out.universe = m.universe.clone();
    out.registry_version = m.registry_version;
    out.context_id = m.context_id.clone();
    for r in 0..m.rows {
        out.values[r * c_max..r * c_max + m.cols].copy_from_slice(m.row(r));
    }
    Ok(out)
}
