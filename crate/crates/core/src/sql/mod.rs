//! SQL subset parsing and template-level features.
//!
//! Supported: a single `SELECT [DISTINCT]` with a FROM list and explicit
//! `[INNER|LEFT|RIGHT|FULL|CROSS] JOIN ... ON`, `WHERE` with AND/OR/NOT,
//! comparisons, LIKE/ILIKE, IN, BETWEEN and IS NULL, `GROUP BY`, `HAVING`,
//! `ORDER BY`, `LIMIT`/`OFFSET`, scalar/EXISTS/IN subqueries, CASE, and window
//! functions via `OVER (...)`. See `docs/sql-subset.md` for the grammar.

mod analyze;
pub mod ast;
mod features;
mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use crate::column::ColumnRef;

pub use features::{
    bucketize, extract_template_features, need_sort_for_merge, BucketSpec, BucketSpecError,
    TemplateFeatures,
};
pub use parser::parse_select;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnsupportedStatement,
    AmbiguousColumn,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub token: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at line {}, column {} (near `{}`)",
            self.message, self.line, self.column, self.token
        )
    }
}

impl ParseError {
    pub(crate) fn at(message: &str, token: &str, line: usize, column: usize) -> Self {
        Self {
            kind: ParseErrorKind::Syntax,
            message: message.to_string(),
            token: token.to_string(),
            line,
            column,
        }
    }

    pub(crate) fn unsupported(token: &str, line: usize, column: usize) -> Self {
        Self {
            kind: ParseErrorKind::UnsupportedStatement,
            message: "unsupported statement: only SELECT is accepted".to_string(),
            token: token.to_string(),
            line,
            column,
        }
    }

    pub(crate) fn ambiguous(token: &str, line: usize, column: usize) -> Self {
        Self {
            kind: ParseErrorKind::AmbiguousColumn,
            message: "unqualified column with several tables in scope".to_string(),
            token: token.to_string(),
            line,
            column,
        }
    }
}

/// Structural summary of one statement. Identifiers are lower-cased and
/// aliases resolved to base table names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedQuery {
    pub tables: BTreeSet<String>,
    pub columns: BTreeSet<ColumnRef>,
    /// JOIN keywords plus implicit joins from multi-table FROM lists, over all blocks.
    pub join_count: u32,
    pub subquery_count: u32,
    /// GROUP BY expressions of the outermost block.
    pub group_by_count: u32,
    pub has_distinct: bool,
    pub has_window: bool,
    pub has_like: bool,
    pub has_order_by: bool,
    pub in_where: BTreeSet<ColumnRef>,
    pub in_join: BTreeSet<ColumnRef>,
    pub in_orderby: BTreeSet<ColumnRef>,
}

impl ParsedQuery {
    pub fn referenced_columns(&self) -> Vec<ColumnRef> {
        self.columns.iter().cloned().collect()
    }
}

pub fn parse_sql_subset(sql_text: &str) -> Result<ParsedQuery, ParseError> {
    let select = parse_select(sql_text)?;
    let pq = analyze::analyze(&select)?;
    debug_assert!(analyze::all_flagged_are_referenced(&pq));
    Ok(pq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(t: &str, c: &str) -> ColumnRef {
        ColumnRef::new(t, c)
    }

    #[test]
    fn distinct_with_alias() {
        let pq = parse_sql_subset("SELECT DISTINCT a.x FROM t a").unwrap();
        assert!(pq.has_distinct);
        assert_eq!(pq.join_count, 0);
        assert_eq!(pq.subquery_count, 0);
        assert_eq!(pq.tables, BTreeSet::from(["t".to_string()]));
        assert_eq!(pq.columns, BTreeSet::from([col("t", "x")]));
    }

    #[test]
    fn select_one_is_empty() {
        let pq = parse_sql_subset("SELECT 1").unwrap();
        assert_eq!(pq, ParsedQuery::default());
    }

    #[test]
    fn like_where_and_order_by() {
        let pq = parse_sql_subset("SELECT x FROM t WHERE y LIKE 'a%' ORDER BY x").unwrap();
        assert!(pq.has_like);
        assert!(pq.in_where.contains(&col("t", "y")));
        assert!(pq.in_orderby.contains(&col("t", "x")));
        assert!(!pq.in_where.contains(&col("t", "x")));
    }

    #[test]
    fn join_counting_includes_implicit_joins() {
        let pq = parse_sql_subset(
            "SELECT p.id FROM posts p JOIN users u ON p.owner_id = u.id, votes v, tags \
             WHERE v.post_id = p.id",
        )
        .unwrap();
        // one JOIN keyword + three FROM entries
        assert_eq!(pq.join_count, 3);
        assert!(pq.in_join.contains(&col("posts", "owner_id")));
        assert!(pq.in_join.contains(&col("votes", "post_id")));
        assert!(pq.in_join.contains(&col("posts", "id")));
    }

    #[test]
    fn subqueries_and_windows_are_counted() {
        let pq = parse_sql_subset(
            "SELECT u.id, rank() OVER (ORDER BY u.reputation) FROM users u \
             WHERE EXISTS (SELECT 1 FROM posts p WHERE p.owner_id = u.id) \
             AND u.id IN (SELECT c.user_id FROM comments c)",
        )
        .unwrap();
        assert_eq!(pq.subquery_count, 2);
        assert!(pq.has_window);
        assert!(pq.in_orderby.contains(&col("users", "reputation")));
        assert!(pq.in_join.contains(&col("posts", "owner_id")));
    }

    #[test]
    fn unqualified_column_with_two_tables_is_ambiguous() {
        let err = parse_sql_subset("SELECT x FROM t, s").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::AmbiguousColumn);
        assert_eq!((err.line, err.column), (1, 8));
    }

    #[test]
    fn unknown_alias_is_an_error() {
        let err = parse_sql_subset("SELECT q.x FROM t a").unwrap_err();
        assert_eq!(err.token, "q");
    }

    #[test]
    fn order_by_select_alias_maps_to_source_column() {
        let pq = parse_sql_subset("SELECT a.x AS k FROM t a ORDER BY k").unwrap();
        assert!(pq.in_orderby.contains(&col("t", "x")));
    }

    #[test]
    fn group_by_counts_outer_block() {
        let pq = parse_sql_subset(
            "SELECT t.a, t.b, count(*) FROM t GROUP BY t.a, t.b HAVING count(*) > 1",
        )
        .unwrap();
        assert_eq!(pq.group_by_count, 2);
    }
}
