use super::ParsedQuery;
use crate::plan::{OperatorKind, PlanTree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BucketSpecError {
    #[error("bucket spec is empty")]
    Empty,
    #[error("first bucket must start at 0, starts at {0}")]
    DoesNotStartAtZero(u64),
    #[error("bucket {index} starts at {start}, expected {expected}")]
    GapOrOverlap {
        index: usize,
        start: u64,
        expected: u64,
    },
    #[error("bucket {0} is empty or inverted")]
    Inverted(usize),
    #[error("only the last bucket may be open-ended")]
    OpenBeforeEnd,
    #[error("last bucket must be open-ended")]
    ClosedEnd,
}

/// Contiguous, disjoint inclusive ranges covering every nonnegative integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketSpec {
    ranges: Vec<(u64, Option<u64>)>,
}

impl BucketSpec {
    pub fn new(ranges: Vec<(u64, Option<u64>)>) -> Result<Self, BucketSpecError> {
        let first = ranges.first().ok_or(BucketSpecError::Empty)?;
        if first.0 != 0 {
            return Err(BucketSpecError::DoesNotStartAtZero(first.0));
        }
        let mut expected = 0u64;
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            if lo != expected {
                return Err(BucketSpecError::GapOrOverlap {
                    index: i,
                    start: lo,
                    expected,
                });
            }
            match hi {
                Some(hi) if hi < lo => return Err(BucketSpecError::Inverted(i)),
                Some(hi) => expected = hi + 1,
                None if i + 1 != ranges.len() => return Err(BucketSpecError::OpenBeforeEnd),
                None => {}
            }
        }
        if ranges.last().is_some_and(|r| r.1.is_some()) {
            return Err(BucketSpecError::ClosedEnd);
        }
        Ok(Self { ranges })
    }

    /// Builds a spec from the lower edges of each bucket, e.g. `[0, 1, 3]` is {0; 1–2; ≥3}.
    pub fn from_lower_edges(edges: &[u64]) -> Result<Self, BucketSpecError> {
        let ranges = edges
            .iter()
            .enumerate()
            .map(|(i, &lo)| {
                let hi = edges.get(i + 1).map(|&next| next.saturating_sub(1));
                (lo, hi)
            })
            .collect();
        Self::new(ranges)
    }

    pub fn width(&self) -> usize {
        self.ranges.len()
    }

    pub fn index_of(&self, value: u64) -> usize {
        self.ranges
            .iter()
            .position(|&(lo, hi)| value >= lo && hi.is_none_or(|hi| value <= hi))
            .expect("validated spec covers every value")
    }

    pub fn joins() -> Self {
        Self::from_lower_edges(&[0, 1, 3]).expect("static spec")
    }

    pub fn subqueries() -> Self {
        Self::from_lower_edges(&[0, 1]).expect("static spec")
    }

    pub fn group_by() -> Self {
        Self::from_lower_edges(&[0, 1, 2, 4]).expect("static spec")
    }

    pub fn result_rows() -> Self {
        Self::from_lower_edges(&[0, 1_000, 1_000_000]).expect("static spec")
    }
}

pub fn bucketize(value: u64, spec: &BucketSpec) -> Vec<f64> {
    let mut v = vec![0.0; spec.width()];
    v[spec.index_of(value)] = 1.0;
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateFeatures {
    pub has_distinct: f64,
    pub need_sort_for_merge: f64,
    pub has_window: f64,
    pub has_like: f64,
    pub group_by_bucket: [f64; 4],
    pub rows_bucket: [f64; 3],
    pub num_join_bucket: [f64; 3],
    pub num_subquery_bucket: [f64; 2],
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn onehot<const N: usize>(value: u64, spec: &BucketSpec) -> [f64; N] {
    let v = bucketize(value, spec);
    let mut out = [0.0; N];
    out.copy_from_slice(&v);
    out
}

/// True when the plan has a MergeJoin with at least one input subtree that
/// neither contains a Sort nor starts at an IndexScan.
pub fn need_sort_for_merge(plan: &PlanTree) -> bool {
    plan.nodes
        .iter()
        .filter(|n| n.operator == OperatorKind::MergeJoin)
        .any(|mj| {
            mj.children.iter().any(|&child| {
                plan.node(child).operator != OperatorKind::IndexScan
                    && !plan
                        .subtree(child)
                        .iter()
                        .any(|&id| plan.node(id).operator == OperatorKind::Sort)
            })
        })
}

pub fn extract_template_features(pq: &ParsedQuery, plan: Option<&PlanTree>) -> TemplateFeatures {
    let rows = plan.map_or(0, |p| p.root_rows().floor() as u64);
    TemplateFeatures {
        has_distinct: flag(pq.has_distinct),
        need_sort_for_merge: flag(plan.is_some_and(need_sort_for_merge)),
        has_window: flag(pq.has_window),
        has_like: flag(pq.has_like),
        group_by_bucket: onehot(pq.group_by_count as u64, &BucketSpec::group_by()),
        rows_bucket: onehot(rows, &BucketSpec::result_rows()),
        num_join_bucket: onehot(pq.join_count as u64, &BucketSpec::joins()),
        num_subquery_bucket: onehot(pq.subquery_count as u64, &BucketSpec::subqueries()),
    }
}
