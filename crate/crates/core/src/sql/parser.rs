use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

const RESERVED: &[&str] = &[
    "select",
    "from",
    "where",
    "group",
    "by",
    "having",
    "order",
    "limit",
    "offset",
    "join",
    "inner",
    "left",
    "right",
    "full",
    "outer",
    "cross",
    "on",
    "using",
    "and",
    "or",
    "not",
    "as",
    "distinct",
    "like",
    "ilike",
    "in",
    "exists",
    "is",
    "null",
    "between",
    "over",
    "partition",
    "asc",
    "desc",
    "case",
    "when",
    "then",
    "else",
    "end",
    "union",
    "intersect",
    "except",
    "nulls",
    "true",
    "false",
    "all",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

/// Parses a single SELECT statement of the supported subset.
pub fn parse_select(sql: &str) -> Result<Select, ParseError> {
    let tokens = tokenize(sql)?;
    let (end_line, end_column) = end_position(sql);
    let mut p = Parser {
        tokens,
        pos: 0,
        end_line,
        end_column,
    };
    match p.peek() {
        None => return Err(ParseError::unsupported("", 1, 1)),
        Some(t) if !p.is_keyword_token(t, "select") => {
            return Err(ParseError::unsupported(&t.text(), t.line, t.column))
        }
        _ => {}
    }
    let select = p.select()?;
    p.eat_symbol(";");
    if let Some(t) = p.peek() {
        return Err(ParseError::at(
            "unexpected token",
            &t.text(),
            t.line,
            t.column,
        ));
    }
    Ok(select)
}

fn end_position(sql: &str) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for c in sql.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end_line: usize,
    end_column: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::at(message, &t.text(), t.line, t.column),
            None => ParseError::at(message, "<end of input>", self.end_line, self.end_column),
        }
    }

    fn is_keyword_token(&self, t: &Token, kw: &str) -> bool {
        !t.quoted && matches!(&t.kind, TokenKind::Ident(s) if s == kw)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| self.is_keyword_token(t, kw))
    }

    fn at_keyword_n(&self, offset: usize, kw: &str) -> bool {
        self.peek_at(offset)
            .is_some_and(|t| self.is_keyword_token(t, kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error_here(&format!("expected `{}`", kw.to_uppercase())))
        }
    }

    fn at_symbol(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Symbol(s), .. }) if *s == sym)
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        if self.at_symbol(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_symbol(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_symbol(sym) {
            Ok(())
        } else {
            Err(self.error_here(&format!("expected `{sym}`")))
        }
    }

    /// A non-reserved identifier (or any quoted identifier).
    fn at_name(&self) -> bool {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Ident(s),
                quoted,
                ..
            }) => *quoted || !is_reserved(s),
            _ => false,
        }
    }

    fn name(&mut self) -> Result<(String, usize, usize), ParseError> {
        if self.at_name() {
            let t = self.bump().expect("checked by at_name");
            match t.kind {
                TokenKind::Ident(s) => Ok((s, t.line, t.column)),
                _ => unreachable!(),
            }
        } else {
            Err(self.error_here("expected identifier"))
        }
    }

    fn select(&mut self) -> Result<Select, ParseError> {
        self.expect_keyword("select")?;
        let distinct = self.eat_keyword("distinct");
        if !distinct {
            self.eat_keyword("all");
        }
        let mut items = vec![self.select_item()?];
        while self.eat_symbol(",") {
            items.push(self.select_item()?);
        }

        let mut from = Vec::new();
        if self.eat_keyword("from") {
            from.push(self.source()?);
            while self.eat_symbol(",") {
                from.push(self.source()?);
            }
        }
        let where_clause = if self.eat_keyword("where") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_keyword("group") {
            self.expect_keyword("by")?;
            group_by = self.expr_list()?;
        }
        let having = if self.eat_keyword("having") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut order_by = Vec::new();
        if self.eat_keyword("order") {
            self.expect_keyword("by")?;
            order_by = self.order_items()?;
        }
        let mut limit = None;
        if self.eat_keyword("limit") {
            limit = Some(self.unsigned()?);
        }
        if self.eat_keyword("offset") {
            self.unsigned()?;
        }
        Ok(Select {
            distinct,
            items,
            from,
            where_clause,
            group_by,
            having,
            order_by,
            limit,
        })
    }

    fn unsigned(&mut self) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Number(n),
                ..
            }) => match n.parse::<u64>() {
                Ok(v) => {
                    self.pos += 1;
                    Ok(v)
                }
                Err(_) => Err(self.error_here("expected an integer")),
            },
            _ => Err(self.error_here("expected an integer")),
        }
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        if self.eat_symbol("*") {
            return Ok(SelectItem::Wildcard);
        }
        if self.at_name()
            && matches!(
                self.peek_at(1),
                Some(Token {
                    kind: TokenKind::Symbol("."),
                    ..
                })
            )
            && matches!(
                self.peek_at(2),
                Some(Token {
                    kind: TokenKind::Symbol("*"),
                    ..
                })
            )
        {
            let (q, _, _) = self.name()?;
            self.pos += 2;
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> Result<Option<String>, ParseError> {
        if self.eat_keyword("as") {
            return Ok(Some(self.name()?.0));
        }
        if self.at_name() {
            return Ok(Some(self.name()?.0));
        }
        Ok(None)
    }

    fn table_ref(&mut self) -> Result<TableRef, ParseError> {
        if self.at_symbol("(") {
            return Err(self.error_here("derived tables are not supported"));
        }
        let (mut name, line, column) = self.name()?;
        // schema-qualified: keep the relation name
        if self.eat_symbol(".") {
            name = self.name()?.0;
        }
        let alias = self.alias()?;
        Ok(TableRef {
            name,
            alias,
            line,
            column,
        })
    }

    fn source(&mut self) -> Result<FromItem, ParseError> {
        let base = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            let cross = if self.at_keyword("join") {
                self.pos += 1;
                false
            } else if self.at_keyword("inner") && self.at_keyword_n(1, "join") {
                self.pos += 2;
                false
            } else if (self.at_keyword("left")
                || self.at_keyword("right")
                || self.at_keyword("full"))
                && (self.at_keyword_n(1, "join")
                    || (self.at_keyword_n(1, "outer") && self.at_keyword_n(2, "join")))
            {
                self.pos += if self.at_keyword_n(1, "outer") { 3 } else { 2 };
                false
            } else if self.at_keyword("cross") && self.at_keyword_n(1, "join") {
                self.pos += 2;
                true
            } else {
                break;
            };
            let table = self.table_ref()?;
            let on = if !cross && self.eat_keyword("on") {
                Some(self.expr()?)
            } else {
                if self.at_keyword("using") {
                    return Err(self.error_here("JOIN ... USING is not supported"));
                }
                None
            };
            joins.push(Join { table, on });
        }
        Ok(FromItem { base, joins })
    }

    fn expr_list(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = vec![self.expr()?];
        while self.eat_symbol(",") {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn order_items(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        loop {
            out.push(self.expr()?);
            if !self.eat_keyword("asc") {
                self.eat_keyword("desc");
            }
            if self.eat_keyword("nulls") && !self.eat_keyword("first") && !self.eat_keyword("last")
            {
                return Err(self.error_here("expected FIRST or LAST"));
            }
            if !self.eat_symbol(",") {
                return Ok(out);
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_keyword("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::Binary {
                op: BinOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_keyword("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::Binary {
                op: BinOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_keyword("not") {
            return Ok(Expr::Unary(Box::new(self.not_expr()?)));
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Token {
                kind: TokenKind::Symbol(s),
                ..
            }) => match *s {
                "=" => Some(BinOp::Eq),
                "<>" | "!=" => Some(BinOp::NotEq),
                "<" => Some(BinOp::Lt),
                "<=" => Some(BinOp::Le),
                ">" => Some(BinOp::Gt),
                ">=" => Some(BinOp::Ge),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let rhs = self.additive()?;
            return Ok(Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
        if self.eat_keyword("is") {
            self.eat_keyword("not");
            self.expect_keyword("null")?;
            return Ok(Expr::IsNull(Box::new(lhs)));
        }
        let negated = self.at_keyword("not")
            && (self.at_keyword_n(1, "like")
                || self.at_keyword_n(1, "ilike")
                || self.at_keyword_n(1, "in")
                || self.at_keyword_n(1, "between"));
        if negated {
            self.pos += 1;
        }
        if self.eat_keyword("like") || self.eat_keyword("ilike") {
            let pattern = self.additive()?;
            return Ok(Expr::Like {
                expr: Box::new(lhs),
                pattern: Box::new(pattern),
            });
        }
        if self.eat_keyword("between") {
            let low = self.additive()?;
            self.expect_keyword("and")?;
            let high = self.additive()?;
            return Ok(Expr::Between {
                expr: Box::new(lhs),
                low: Box::new(low),
                high: Box::new(high),
            });
        }
        if self.eat_keyword("in") {
            self.expect_symbol("(")?;
            let e = if self.at_keyword("select") {
                let q = self.select()?;
                Expr::InSubquery {
                    expr: Box::new(lhs),
                    query: Box::new(q),
                }
            } else {
                Expr::InList {
                    expr: Box::new(lhs),
                    list: self.expr_list()?,
                }
            };
            self.expect_symbol(")")?;
            return Ok(e);
        }
        if negated {
            return Err(self.error_here("expected LIKE, IN or BETWEEN after NOT"));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.eat_symbol("+") {
                BinOp::Plus
            } else if self.eat_symbol("-") {
                BinOp::Minus
            } else if self.eat_symbol("||") {
                BinOp::Concat
            } else {
                return Ok(lhs);
            };
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_symbol("*") {
                BinOp::Mul
            } else if self.eat_symbol("/") {
                BinOp::Div
            } else if self.eat_symbol("%") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_symbol("-") || self.eat_symbol("+") {
            return Ok(Expr::Unary(Box::new(self.unary()?)));
        }
        let e = self.primary()?;
        if self.eat_symbol("::") {
            self.name()?;
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("expected expression"));
        };
        match &tok.kind {
            TokenKind::Number(_) | TokenKind::Str(_) => {
                self.pos += 1;
                Ok(Expr::Literal)
            }
            TokenKind::Symbol("(") => {
                self.pos += 1;
                let e = if self.at_keyword("select") {
                    Expr::Subquery(Box::new(self.select()?))
                } else {
                    self.expr()?
                };
                self.expect_symbol(")")?;
                Ok(e)
            }
            TokenKind::Ident(word) if !tok.quoted && is_reserved(word) => match word.as_str() {
                "null" | "true" | "false" => {
                    self.pos += 1;
                    Ok(Expr::Literal)
                }
                "exists" => {
                    self.pos += 1;
                    self.expect_symbol("(")?;
                    let q = self.select()?;
                    self.expect_symbol(")")?;
                    Ok(Expr::Exists(Box::new(q)))
                }
                "case" => {
                    self.pos += 1;
                    self.case_expr()
                }
                _ => Err(self.error_here("unexpected token")),
            },
            TokenKind::Ident(_) => {
                let (name, line, column) = self.name()?;
                if self.at_symbol("(") {
                    return self.function(name);
                }
                // typed literal, e.g. DATE '2020-01-01'
                if matches!(
                    self.peek(),
                    Some(Token {
                        kind: TokenKind::Str(_),
                        ..
                    })
                ) {
                    self.pos += 1;
                    return Ok(Expr::Literal);
                }
                if self.eat_symbol(".") {
                    let (col, _, _) = self.name()?;
                    return Ok(Expr::Column {
                        qualifier: Some(name),
                        name: col,
                        line,
                        column,
                    });
                }
                Ok(Expr::Column {
                    qualifier: None,
                    name,
                    line,
                    column,
                })
            }
            TokenKind::Symbol(_) => Err(self.error_here("unexpected token")),
        }
    }

    fn case_expr(&mut self) -> Result<Expr, ParseError> {
        let operand = if self.at_keyword("when") {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        let mut branches = Vec::new();
        while self.eat_keyword("when") {
            let cond = self.expr()?;
            self.expect_keyword("then")?;
            branches.push((cond, self.expr()?));
        }
        if branches.is_empty() {
            return Err(self.error_here("expected WHEN"));
        }
        let otherwise = if self.eat_keyword("else") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_keyword("end")?;
        Ok(Expr::Case {
            operand,
            branches,
            otherwise,
        })
    }

    fn function(&mut self, name: String) -> Result<Expr, ParseError> {
        self.expect_symbol("(")?;
        let distinct = self.eat_keyword("distinct");
        let mut args = Vec::new();
        if self.eat_symbol("*") {
            // count(*)
        } else if !self.at_symbol(")") {
            args = self.expr_list()?;
        }
        self.expect_symbol(")")?;
        let over = if self.eat_keyword("over") {
            self.expect_symbol("(")?;
            let mut partition_by = Vec::new();
            let mut order_by = Vec::new();
            if self.eat_keyword("partition") {
                self.expect_keyword("by")?;
                partition_by = self.expr_list()?;
            }
            if self.eat_keyword("order") {
                self.expect_keyword("by")?;
                order_by = self.order_items()?;
            }
            self.expect_symbol(")")?;
            Some(Window {
                partition_by,
                order_by,
            })
        } else {
            None
        };
        Ok(Expr::Function {
            name,
            distinct,
            args,
            over,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_joins_and_clauses() {
        let s = parse_select(
            "SELECT p.id, count(*) FROM posts p JOIN users u ON p.owner = u.id \
             LEFT OUTER JOIN votes v ON v.post = p.id, tags \
             WHERE p.score > 3 AND u.name LIKE 'a%' GROUP BY p.id ORDER BY 2 DESC LIMIT 10;",
        )
        .unwrap();
        assert_eq!(s.from.len(), 2);
        assert_eq!(s.from[0].joins.len(), 2);
        assert_eq!(s.from[0].base.alias.as_deref(), Some("p"));
        assert_eq!(s.group_by.len(), 1);
        assert_eq!(s.limit, Some(10));
    }

    #[test]
    fn non_select_is_unsupported() {
        let err = parse_select("DELETE FROM t").unwrap_err();
        assert_eq!(err.kind, super::super::ParseErrorKind::UnsupportedStatement);
        assert_eq!(err.token, "delete");
    }

    #[test]
    fn trailing_garbage_names_token_and_position() {
        let err = parse_select("SELECT a FROM t\nUNION SELECT b FROM s").unwrap_err();
        assert_eq!(err.token, "union");
        assert_eq!((err.line, err.column), (2, 1));
    }

    #[test]
    fn derived_tables_rejected() {
        let err = parse_select("SELECT x FROM (SELECT 1) q").unwrap_err();
        assert!(err.message.contains("derived"));
        assert_eq!(err.column, 15);
    }

    #[test]
    fn window_and_subqueries() {
        let s = parse_select(
            "SELECT rank() OVER (PARTITION BY a ORDER BY b) FROM t \
             WHERE EXISTS (SELECT 1 FROM s WHERE s.k = t.k) AND a IN (SELECT k FROM s) \
             AND b = (SELECT max(b) FROM t)",
        )
        .unwrap();
        assert!(matches!(
            &s.items[0],
            SelectItem::Expr {
                expr: Expr::Function { over: Some(_), .. },
                ..
            }
        ));
    }
}
