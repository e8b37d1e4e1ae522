use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare or double-quoted identifier, lower-cased. Keywords are identifiers too.
    Ident(String),
    Number(String),
    Str(String),
    Symbol(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
    /// Whether the identifier was double-quoted (quoted identifiers are never keywords).
    pub quoted: bool,
}

impl Token {
    pub fn text(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) if self.quoted => format!("\"{s}\""),
            TokenKind::Ident(s) | TokenKind::Number(s) => s.clone(),
            TokenKind::Str(s) => format!("'{s}'"),
            TokenKind::Symbol(s) => (*s).to_string(),
        }
    }
}

const SYMBOLS: [&str; 17] = [
    "<>", "!=", "<=", ">=", "||", "::", "(", ")", ",", ".", "*", ";", "=", "<", ">", "+", "-",
];
const SINGLE: [&str; 2] = ["/", "%"];

pub fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = input.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        // -- line comment
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i].to_ascii_lowercase());
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            tokens.push(Token {
                kind: TokenKind::Ident(s),
                line: tl,
                column: tc,
                quoted: false,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || (chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())))
            {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            tokens.push(Token {
                kind: TokenKind::Number(s),
                line: tl,
                column: tc,
                quoted: false,
            });
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => {
                        return Err(ParseError::at(
                            "unterminated quoted literal",
                            &quote.to_string(),
                            tl,
                            tc,
                        ))
                    }
                    Some(&q) if q == quote => {
                        advance(&mut i, &mut line, &mut col, q);
                        // doubled quote escapes itself
                        if chars.get(i) == Some(&quote) {
                            s.push(quote);
                            advance(&mut i, &mut line, &mut col, quote);
                        } else {
                            break;
                        }
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            let kind = if quote == '\'' {
                TokenKind::Str(s)
            } else {
                TokenKind::Ident(s.to_lowercase())
            };
            tokens.push(Token {
                kind,
                line: tl,
                column: tc,
                quoted: quote == '"',
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let sym = SYMBOLS
            .iter()
            .chain(SINGLE.iter())
            .find(|s| rest.starts_with(**s))
            .copied();
        match sym {
            Some(s) => {
                for ch in s.chars() {
                    advance(&mut i, &mut line, &mut col, ch);
                }
                tokens.push(Token {
                    kind: TokenKind::Symbol(s),
                    line: tl,
                    column: tc,
                    quoted: false,
                });
            }
            None => {
                return Err(ParseError::at(
                    "unexpected character",
                    &c.to_string(),
                    tl,
                    tc,
                ))
            }
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("SELECT a\n  FROM t").unwrap();
        assert_eq!((toks[0].line, toks[0].column), (1, 1));
        assert_eq!((toks[1].line, toks[1].column), (1, 8));
        assert_eq!((toks[2].line, toks[2].column), (2, 3));
        assert_eq!(toks[2].kind, TokenKind::Ident("from".into()));
    }

    #[test]
    fn strings_numbers_and_operators() {
        let toks = tokenize("x <> 'it''s' AND y >= 1.5 -- tail").unwrap();
        let kinds: Vec<_> = toks.into_iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::Ident("x".into()),
                TokenKind::Symbol("<>"),
                TokenKind::Str("it's".into()),
                TokenKind::Ident("and".into()),
                TokenKind::Ident("y".into()),
                TokenKind::Symbol(">="),
                TokenKind::Number("1.5".into()),
            ]
        );
    }

    #[test]
    fn bad_character_reports_position() {
        let err = tokenize("SELECT a\nFROM t WHERE x = @p").unwrap_err();
        assert_eq!((err.line, err.column), (2, 18));
        assert_eq!(err.token, "@");
    }
}
