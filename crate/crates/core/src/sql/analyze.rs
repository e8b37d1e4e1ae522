//! Resolves aliases and collects column usage from a parsed SELECT.

use std::collections::BTreeSet;

use super::ast::*;
use super::{ParseError, ParsedQuery};
use crate::column::ColumnRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Usage {
    Other,
    Where,
    Join,
    OrderBy,
}

#[derive(Debug, Default)]
struct Scope {
    /// (visible name, base table)
    names: Vec<(String, String)>,
    tables: Vec<String>,
}

impl Scope {
    fn lookup(&self, qualifier: &str) -> Option<&str> {
        self.names
            .iter()
            .find(|(n, _)| n == qualifier)
            .map(|(_, t)| t.as_str())
    }
}

pub(super) fn analyze(select: &Select) -> Result<ParsedQuery, ParseError> {
    let mut out = ParsedQuery::default();
    let mut scopes = Vec::new();
    let mut a = Analyzer { out: &mut out };
    a.group_by_count_top(select);
    a.select(select, &mut scopes)?;
    Ok(out)
}

struct Analyzer<'a> {
    out: &'a mut ParsedQuery,
}

impl Analyzer<'_> {
    fn group_by_count_top(&mut self, select: &Select) {
        self.out.group_by_count = select.group_by.len() as u32;
    }

    fn select(&mut self, s: &Select, scopes: &mut Vec<Scope>) -> Result<(), ParseError> {
        if s.distinct {
            self.out.has_distinct = true;
        }
        let mut scope = Scope::default();
        let mut joins = 0u32;
        for item in &s.from {
            self.add_table(&mut scope, &item.base);
            for j in &item.joins {
                self.add_table(&mut scope, &j.table);
                joins += 1;
            }
        }
        if s.from.len() > 1 {
            joins += s.from.len() as u32 - 1;
        }
        self.out.join_count += joins;
        scopes.push(scope);

        let result = self.select_body(s, scopes);
        scopes.pop();
        result
    }

    fn add_table(&mut self, scope: &mut Scope, t: &TableRef) {
        self.out.tables.insert(t.name.clone());
        scope.tables.push(t.name.clone());
        scope.names.push((
            t.alias.clone().unwrap_or_else(|| t.name.clone()),
            t.name.clone(),
        ));
        if t.alias.is_some() {
            scope.names.push((t.name.clone(), t.name.clone()));
        }
    }

    fn select_body(&mut self, s: &Select, scopes: &mut Vec<Scope>) -> Result<(), ParseError> {
        let aliases: Vec<(&str, &Expr)> = s
            .items
            .iter()
            .filter_map(|i| match i {
                SelectItem::Expr {
                    expr,
                    alias: Some(a),
                } => Some((a.as_str(), expr)),
                _ => None,
            })
            .collect();

        for item in &s.items {
            match item {
                SelectItem::Wildcard => {}
                SelectItem::QualifiedWildcard(q) => {
                    if !scopes.iter().rev().any(|sc| sc.lookup(q).is_some()) {
                        return Err(ParseError::at("unknown table or alias", q, 1, 1));
                    }
                }
                SelectItem::Expr { expr, .. } => self.expr(expr, Usage::Other, scopes, &[])?,
            }
        }
        for item in &s.from {
            for j in &item.joins {
                if let Some(on) = &j.on {
                    self.expr(on, Usage::Join, scopes, &[])?;
                }
            }
        }
        if let Some(w) = &s.where_clause {
            self.expr(w, Usage::Where, scopes, &[])?;
        }
        for g in &s.group_by {
            self.expr(g, Usage::Other, scopes, &aliases)?;
        }
        if let Some(h) = &s.having {
            self.expr(h, Usage::Other, scopes, &aliases)?;
        }
        if !s.order_by.is_empty() {
            self.out.has_order_by = true;
        }
        for o in &s.order_by {
            self.expr(o, Usage::OrderBy, scopes, &aliases)?;
        }
        Ok(())
    }

    fn subquery(&mut self, q: &Select, scopes: &mut Vec<Scope>) -> Result<(), ParseError> {
        self.out.subquery_count += 1;
        self.select(q, scopes)
    }

    fn resolve(
        &self,
        qualifier: Option<&str>,
        name: &str,
        line: usize,
        column: usize,
        scopes: &[Scope],
    ) -> Result<ColumnRef, ParseError> {
        match qualifier {
            Some(q) => scopes
                .iter()
                .rev()
                .find_map(|sc| sc.lookup(q))
                .map(|t| ColumnRef::new(t, name))
                .ok_or_else(|| ParseError::at("unknown table or alias", q, line, column)),
            None => {
                for sc in scopes.iter().rev() {
                    let mut distinct: Vec<&String> = sc.tables.iter().collect();
                    distinct.sort();
                    distinct.dedup();
                    match distinct.len() {
                        0 => continue,
                        1 => return Ok(ColumnRef::new(distinct[0].clone(), name)),
                        _ => {
                            return Err(ParseError::ambiguous(name, line, column));
                        }
                    }
                }
                Err(ParseError::at(
                    "column reference without any table in scope",
                    name,
                    line,
                    column,
                ))
            }
        }
    }

    fn mark(&mut self, col: ColumnRef, usage: Usage) {
        match usage {
            Usage::Where => {
                self.out.in_where.insert(col.clone());
            }
            Usage::Join => {
                self.out.in_join.insert(col.clone());
            }
            Usage::OrderBy => {
                self.out.in_orderby.insert(col.clone());
            }
            Usage::Other => {}
        }
        self.out.columns.insert(col);
    }

    fn expr(
        &mut self,
        e: &Expr,
        usage: Usage,
        scopes: &mut Vec<Scope>,
        aliases: &[(&str, &Expr)],
    ) -> Result<(), ParseError> {
        match e {
            Expr::Column {
                qualifier,
                name,
                line,
                column,
            } => {
                if qualifier.is_none() {
                    if let Some((_, target)) = aliases.iter().find(|(a, _)| a == name) {
                        // select-list alias: attribute usage to the aliased expression
                        return self.expr(target, usage, scopes, &[]);
                    }
                }
                let col = self.resolve(qualifier.as_deref(), name, *line, *column, scopes)?;
                self.mark(col, usage);
            }
            Expr::Literal => {}
            Expr::Unary(inner) | Expr::IsNull(inner) => self.expr(inner, usage, scopes, aliases)?,
            Expr::Binary { op, lhs, rhs } => {
                if *op == BinOp::Eq && usage == Usage::Where {
                    self.implicit_join(lhs, rhs, scopes)?;
                }
                self.expr(lhs, usage, scopes, aliases)?;
                self.expr(rhs, usage, scopes, aliases)?;
            }
            Expr::Like { expr, pattern } => {
                self.out.has_like = true;
                self.expr(expr, usage, scopes, aliases)?;
                self.expr(pattern, usage, scopes, aliases)?;
            }
            Expr::InList { expr, list } => {
                self.expr(expr, usage, scopes, aliases)?;
                for x in list {
                    self.expr(x, usage, scopes, aliases)?;
                }
            }
            Expr::InSubquery { expr, query } => {
                self.expr(expr, usage, scopes, aliases)?;
                self.subquery(query, scopes)?;
            }
            Expr::Exists(q) | Expr::Subquery(q) => self.subquery(q, scopes)?,
            Expr::Between { expr, low, high } => {
                self.expr(expr, usage, scopes, aliases)?;
                self.expr(low, usage, scopes, aliases)?;
                self.expr(high, usage, scopes, aliases)?;
            }
            Expr::Function {
                distinct,
                args,
                over,
                ..
            } => {
                if *distinct {
                    self.out.has_distinct = true;
                }
                for a in args {
                    self.expr(a, usage, scopes, aliases)?;
                }
                if let Some(w) = over {
                    self.out.has_window = true;
                    for p in &w.partition_by {
                        self.expr(p, Usage::Other, scopes, aliases)?;
                    }
                    for o in &w.order_by {
                        self.expr(o, Usage::OrderBy, scopes, aliases)?;
                    }
                }
            }
            Expr::Case {
                operand,
                branches,
                otherwise,
            } => {
                if let Some(o) = operand {
                    self.expr(o, usage, scopes, aliases)?;
                }
                for (c, v) in branches {
                    self.expr(c, usage, scopes, aliases)?;
                    self.expr(v, usage, scopes, aliases)?;
                }
                if let Some(o) = otherwise {
                    self.expr(o, usage, scopes, aliases)?;
                }
            }
        }
        Ok(())
    }

    /// `a.x = b.y` in WHERE between columns of different tables is a join predicate.
    fn implicit_join(
        &mut self,
        lhs: &Expr,
        rhs: &Expr,
        scopes: &[Scope],
    ) -> Result<(), ParseError> {
        let (
            Expr::Column {
                qualifier: ql,
                name: nl,
                line: ll,
                column: cl,
            },
            Expr::Column {
                qualifier: qr,
                name: nr,
                line: lr,
                column: cr,
            },
        ) = (lhs, rhs)
        else {
            return Ok(());
        };
        let l = self.resolve(ql.as_deref(), nl, *ll, *cl, scopes)?;
        let r = self.resolve(qr.as_deref(), nr, *lr, *cr, scopes)?;
        if l.table != r.table {
            self.mark(l, Usage::Join);
            self.mark(r, Usage::Join);
        }
        Ok(())
    }
}

pub(super) fn all_flagged_are_referenced(pq: &ParsedQuery) -> bool {
    let flagged: BTreeSet<&ColumnRef> = pq
        .in_where
        .iter()
        .chain(&pq.in_join)
        .chain(&pq.in_orderby)
        .collect();
    flagged.iter().all(|c| pq.columns.contains(*c))
}
