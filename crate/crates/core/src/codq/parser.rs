//! Hand-written lexer and recursive-descent parser for the object query dialect:
//!
//! ```text
//! query      := SELECT projection ("," projection)* FROM ident ident join*
//! join       := JOIN ident ident ON colref "=" colref
//! projection := colref AS ident ":" role
//! colref     := ident "." ident
//! ```

use std::collections::HashSet;

use super::{CodqError, CodqSpec, ColumnRef, Join, Projection, Role, TableRef};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Dot,
    Comma,
    Eq,
    Colon,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Dot => "`.`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Colon => "`:`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

const KEYWORDS: [&str; 5] = ["SELECT", "FROM", "JOIN", "ON", "AS"];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, CodqError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            b'.' => Tok::Dot,
            b',' => Tok::Comma,
            b'=' => Tok::Eq,
            b':' => Tok::Colon,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let found = text[i..].chars().next().unwrap_or('?');
                return Err(CodqError::Syntax {
                    offset: i,
                    expected: vec!["identifier or punctuation".into()],
                    found: format!("`{found}`"),
                });
            }
        };
        out.push((tok, i));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn offset(&self) -> usize {
        self.peek().1
    }

    fn error(&self, expected: &[&str]) -> CodqError {
        let (tok, offset) = self.peek();
        CodqError::Syntax {
            offset: *offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: tok.describe(),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().0, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), CodqError> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[kw]))
        }
    }

    fn punct(&mut self, want: Tok, label: &str) -> Result<(), CodqError> {
        if self.peek().0 == want {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[label]))
        }
    }

    fn ident(&mut self) -> Result<(String, usize), CodqError> {
        match &self.peek().0 {
            Tok::Ident(s) if !KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                let out = (s.clone(), self.offset());
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn column_ref(&mut self) -> Result<(ColumnRef, usize), CodqError> {
        let (alias, at) = self.ident()?;
        self.punct(Tok::Dot, "`.`")?;
        let (column, _) = self.ident()?;
        Ok((ColumnRef { alias, column }, at))
    }

    fn role(&mut self) -> Result<Role, CodqError> {
        let expected = ["coordinate", "feature", "target", "carry"];
        match &self.peek().0 {
            Tok::Ident(s) => match Role::parse(s) {
                Some(r) => {
                    self.pos += 1;
                    Ok(r)
                }
                None => Err(self.error(&expected)),
            },
            _ => Err(self.error(&expected)),
        }
    }
}

/// Parses one query into a structurally checked [`CodqSpec`].
///
/// Aliases are checked for consistency (unique, each join connected to an
/// earlier alias, projections over known aliases), but table and column
/// names are not resolved against any schema here.
pub fn parse_codq(text: &str) -> Result<CodqSpec, CodqError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };

    p.keyword("SELECT")?;
    let mut projections = Vec::new();
    loop {
        let (source, at) = p.column_ref()?;
        p.keyword("AS")?;
        let (name, _) = p.ident()?;
        p.punct(Tok::Colon, "`:`")?;
        let role = p.role()?;
        projections.push((Projection { source, name, role }, at));
        if p.peek().0 == Tok::Comma {
            p.pos += 1;
        } else {
            break;
        }
    }
    if !p.at_keyword("FROM") {
        return Err(p.error(&["`,`", "FROM"]));
    }
    p.pos += 1;
    let (fact_table, _) = p.ident()?;
    let (fact_alias, _) = p.ident()?;

    let mut aliases: Vec<String> = vec![fact_alias.clone()];
    let mut joins = Vec::new();
    while p.at_keyword("JOIN") {
        p.pos += 1;
        let (table, _) = p.ident()?;
        let (alias, alias_at) = p.ident()?;
        if aliases.contains(&alias) {
            return Err(CodqError::Structure {
                offset: alias_at,
                message: format!("alias `{alias}` is already defined"),
            });
        }
        p.keyword("ON")?;
        let (left, left_at) = p.column_ref()?;
        p.punct(Tok::Eq, "`=`")?;
        let (right, _) = p.column_ref()?;
        let connects = (left.alias == alias && aliases.contains(&right.alias))
            || (right.alias == alias && aliases.contains(&left.alias));
        if !connects {
            return Err(CodqError::Structure {
                offset: left_at,
                message: format!(
                    "join condition must relate `{alias}` to an earlier alias, found `{}` = `{}`",
                    left, right
                ),
            });
        }
        aliases.push(alias.clone());
        joins.push(Join {
            table,
            alias,
            left,
            right,
        });
    }
    if p.peek().0 != Tok::End {
        return Err(p.error(&["JOIN", "end of input"]));
    }

    let mut names = HashSet::new();
    for (proj, at) in &projections {
        if !aliases.contains(&proj.source.alias) {
            return Err(CodqError::Structure {
                offset: *at,
                message: format!("unknown alias `{}`", proj.source.alias),
            });
        }
        if !names.insert(proj.name.as_str()) {
            return Err(CodqError::DuplicateAttribute(proj.name.clone()));
        }
    }

    Ok(CodqSpec {
        fact: TableRef {
            table: fact_table,
            alias: fact_alias,
        },
        joins,
        projections: projections.into_iter().map(|(p, _)| p).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_join_single_feature() {
        let q =
            parse_codq("SELECT t.age AS age:feature FROM Reservation r JOIN Tourist t ON r.tourist_id = t.id").unwrap();
        assert_eq!(q.fact.table, "Reservation");
        assert_eq!(q.joins.len(), 1);
        assert_eq!(q.projections.len(), 1);
        assert_eq!(q.projections[0].role, Role::Feature);
        assert_eq!(q.projections[0].source.column, "age");
    }

    #[test]
    fn misspelled_select() {
        match parse_codq("SELEC x FROM y") {
            Err(CodqError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 0);
                assert_eq!(expected, vec!["SELECT".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn three_joins_in_source_order() {
        let q = parse_codq(
            "select r.price as price:feature, g.city as city:coordinate \
             from Reservation r \
             join Tourist t on r.tourist_id = t.id \
             join GeographicalArea g on g.id = r.geo_id \
             join Ferry f on r.ferry_id = f.id",
        )
        .unwrap();
        let tables: Vec<_> = q.joins.iter().map(|j| j.table.as_str()).collect();
        assert_eq!(tables, ["Tourist", "GeographicalArea", "Ferry"]);
    }

    #[test]
    fn join_must_connect() {
        let err = parse_codq("SELECT r.a AS a:carry FROM R r JOIN T t ON x.id = y.id").unwrap_err();
        assert!(matches!(err, CodqError::Structure { .. }));
    }

    #[test]
    fn unknown_role() {
        let err = parse_codq("SELECT r.a AS a:label FROM R r").unwrap_err();
        match err {
            CodqError::Syntax { expected, .. } => assert!(expected.contains(&"target".to_string())),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keyword_is_not_an_identifier() {
        assert!(parse_codq("SELECT r.a AS from:carry FROM R r").is_err());
    }

    #[test]
    fn trailing_garbage() {
        let err = parse_codq("SELECT r.a AS a:carry FROM R r extra").unwrap_err();
        assert!(matches!(err, CodqError::Syntax { offset: 31, .. }));
    }

    #[test]
    fn bad_character_offset() {
        let err = parse_codq("SELECT r.a AS a:carry FROM R r;").unwrap_err();
        assert!(matches!(err, CodqError::Syntax { offset: 30, .. }));
    }
}
