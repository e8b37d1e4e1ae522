use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{Counters, RunReport};
use crate::kg::{ExecFilter, ExecPolicy, KgStore};

pub const CURVE_FILE: &str = "curve.tsv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("store holds no execution records")]
    NoRecords,
    #[error("store holds {baseline} baseline and {learned} learned executions; counts must match")]
    Mismatch { baseline: usize, learned: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Per-query runtimes in execution order; `learned` is absent for baseline-only runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub baseline: Vec<f64>,
    pub learned: Option<Vec<f64>>,
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

impl Curve {
    pub fn from_report(r: &RunReport) -> Self {
        Self {
            baseline: r.baseline_series(),
            learned: if r.baseline_only {
                None
            } else {
                r.learned_series()
            },
        }
    }

    /// Rebuilds the curve from execution records alone.
    pub fn from_store(store: &KgStore) -> Result<Self, ReportError> {
        let pick = |p| {
            store
                .query_executions(&ExecFilter {
                    policy: Some(p),
                    ..ExecFilter::default()
                })
                .into_iter()
                .map(|x| x.runtime_ms)
                .collect::<Vec<f64>>()
        };
        let baseline = pick(ExecPolicy::Baseline);
        let learned = pick(ExecPolicy::Learned);
        if baseline.is_empty() && learned.is_empty() {
            return Err(ReportError::NoRecords);
        }
        if !learned.is_empty() && learned.len() != baseline.len() {
            return Err(ReportError::Mismatch {
                baseline: baseline.len(),
                learned: learned.len(),
            });
        }
        Ok(Self {
            baseline,
            learned: (!learned.is_empty()).then_some(learned),
        })
    }

    pub fn baseline_total(&self) -> f64 {
        self.baseline.iter().sum()
    }

    pub fn learned_total(&self) -> Option<f64> {
        self.learned.as_ref().map(|v| v.iter().sum())
    }

    /// Tab-separated cumulative times with a header row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let base = cumulative(&self.baseline);
        match &self.learned {
            Some(l) => {
                s.push_str("query_index\tbaseline_ms\tlearned_ms\n");
                for (i, (b, l)) in base.iter().zip(cumulative(l)).enumerate() {
                    let _ = writeln!(s, "{}\t{b}\t{l}", i + 1);
                }
            }
            None => {
                s.push_str("query_index\tbaseline_ms\n");
                for (i, b) in base.iter().enumerate() {
                    let _ = writeln!(s, "{}\t{b}", i + 1);
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub queries: usize,
    pub baseline_total_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned_total_ms: Option<f64>,
    pub oracle_total_ms: f64,
    /// Learned total minus oracle total (baseline total for baseline-only runs).
    pub regret_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned_over_baseline: Option<f64>,
    pub counters: Counters,
    /// Final-epoch training loss of each retrain.
    pub final_losses: Vec<f64>,
    pub arm_counts: BTreeMap<usize, u64>,
}

impl RunSummary {
    pub fn from_report(r: &RunReport) -> Self {
        let curve = Curve::from_report(r);
        let base = curve.baseline_total();
        let learned = curve.learned_total();
        let mut arm_counts = BTreeMap::new();
        for row in &r.rows {
            if let Some(a) = row.learned_arm {
                *arm_counts.entry(a).or_insert(0) += 1;
            }
        }
        Self {
            queries: r.rows.len(),
            baseline_total_ms: base,
            learned_total_ms: learned,
            oracle_total_ms: r.oracle_total,
            regret_ms: learned.unwrap_or(base) - r.oracle_total,
            learned_over_baseline: learned.map(|l| l / base),
            counters: r.counters.clone(),
            final_losses: r
                .batch_losses
                .iter()
                .filter_map(|l| l.last().copied())
                .collect(),
            arm_counts,
        }
    }
}

/// Totals that can be recomputed from the store alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSummary {
    pub queries: usize,
    pub executions: usize,
    pub baseline_total_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned_total_ms: Option<f64>,
    pub arm_counts: BTreeMap<usize, u64>,
}

impl StoreSummary {
    pub fn from_store(store: &KgStore) -> Result<Self, ReportError> {
        let curve = Curve::from_store(store)?;
        let mut arm_counts = BTreeMap::new();
        for x in store.executions() {
            if x.policy == ExecPolicy::Learned {
                *arm_counts.entry(x.arm_id).or_insert(0) += 1;
            }
        }
        Ok(Self {
            queries: curve.baseline.len(),
            executions: store.executions().count(),
            baseline_total_ms: curve.baseline_total(),
            learned_total_ms: curve.learned_total(),
            arm_counts,
        })
    }
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `curve.tsv` and `summary.json` for a completed run into `dir`.
pub fn write_report(r: &RunReport, dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join(CURVE_FILE), &Curve::from_report(r).to_tsv())?;
    write_file(
        &dir.join(SUMMARY_FILE),
        &to_json_pretty(&RunSummary::from_report(r)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_shapes() {
        let c = Curve {
            baseline: vec![1.0, 2.5],
            learned: Some(vec![0.5, 0.25]),
        };
        assert_eq!(
            c.to_tsv(),
            "query_index\tbaseline_ms\tlearned_ms\n1\t1\t0.5\n2\t3.5\t0.75\n"
        );
        let c = Curve {
            baseline: vec![1.0],
            learned: None,
        };
        assert_eq!(c.to_tsv(), "query_index\tbaseline_ms\n1\t1\n");
    }

    #[test]
    fn empty_store_has_no_curve() {
        assert!(matches!(
            Curve::from_store(&KgStore::in_memory()),
            Err(ReportError::NoRecords)
        ));
    }
}
