use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A `(table, column)` pair. Ordering is lexicographic by table, then column.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected a qualified column `table.column`, got `{0}`")]
pub struct ColumnRefParseError(pub String);

impl FromStr for ColumnRef {
    type Err = ColumnRefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() && !c.contains('.') => {
                Ok(ColumnRef::new(t, c))
            }
            _ => Err(ColumnRefParseError(s.to_string())),
        }
    }
}

impl Serialize for ColumnRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColumnRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let c: ColumnRef = "posts.score".parse().unwrap();
        assert_eq!(c, ColumnRef::new("posts", "score"));
        assert_eq!(c.to_string(), "posts.score");
        assert!("score".parse::<ColumnRef>().is_err());
        assert!("a.b.c".parse::<ColumnRef>().is_err());
    }

    #[test]
    fn ordering_is_table_then_column() {
        let mut v = vec![
            ColumnRef::new("t", "b"),
            ColumnRef::new("t", "a"),
            ColumnRef::new("s", "z"),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                ColumnRef::new("s", "z"),
                ColumnRef::new("t", "a"),
                ColumnRef::new("t", "b")
            ]
        );
    }
}
