//! Recursive-descent parser for state-sequence queries.
//!
//! ```text
//! query := node (edge node)*
//! node  := "S" INT [ "{" attr ("," attr)* "}" ]
//! attr  := "initial" | "final" | "min_age=" NUM | "max_age=" NUM | "min_visits=" INT
//! edge  := "->" | "~>"
//! ```
//!
//! Whitespace between tokens is ignored. Offsets in errors are byte offsets
//! into the input.

use super::{EdgeKind, NodeAttrs, QueryError, QueryNode, StateQuery};

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    State,
    Int(&'a str),
    Num(&'a str),
    Ident(&'a str),
    LBrace,
    RBrace,
    Comma,
    Equals,
    Direct,
    Eventual,
    Unknown(char),
    End,
}

impl Token<'_> {
    fn describe(&self) -> String {
        match self {
            Token::State => "\"S\"".into(),
            Token::Int(s) | Token::Num(s) => format!("number {s:?}"),
            Token::Ident(s) => format!("{s:?}"),
            Token::LBrace => "\"{\"".into(),
            Token::RBrace => "\"}\"".into(),
            Token::Comma => "\",\"".into(),
            Token::Equals => "\"=\"".into(),
            Token::Direct => "\"->\"".into(),
            Token::Eventual => "\"~>\"".into(),
            Token::Unknown(c) => format!("{c:?}"),
            Token::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Next token and its start offset.
    fn next(&mut self) -> (usize, Token<'a>) {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return (start, Token::End);
        };
        let (len, tok) = match c {
            '{' => (1, Token::LBrace),
            '}' => (1, Token::RBrace),
            ',' => (1, Token::Comma),
            '=' => (1, Token::Equals),
            '-' if rest.starts_with("->") => (2, Token::Direct),
            '~' if rest.starts_with("~>") => (2, Token::Eventual),
            '0'..='9' => {
                let int_len = rest.bytes().take_while(u8::is_ascii_digit).count();
                let after = &rest[int_len..];
                let frac_len = if after.starts_with('.') {
                    after[1..].bytes().take_while(u8::is_ascii_digit).count()
                } else {
                    0
                };
                if frac_len > 0 {
                    let n = int_len + 1 + frac_len;
                    (n, Token::Num(&rest[..n]))
                } else {
                    (int_len, Token::Int(&rest[..int_len]))
                }
            }
            'S' if !rest[1..].starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') => (1, Token::State),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let n = rest.bytes().take_while(|b| b.is_ascii_alphanumeric() || *b == b'_').count();
                (n, Token::Ident(&rest[..n]))
            }
            other => (other.len_utf8(), Token::Unknown(other)),
        };
        self.pos += len;
        (start, tok)
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(usize, Token<'a>)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> &(usize, Token<'a>) {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next());
        }
        self.peeked.as_ref().expect("just filled")
    }

    fn bump(&mut self) -> (usize, Token<'a>) {
        self.peek();
        self.peeked.take().expect("peeked")
    }

    fn unexpected(offset: usize, found: &Token<'_>, expected: &[&str]) -> QueryError {
        QueryError::Syntax {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.describe(),
        }
    }

    fn query(&mut self) -> Result<StateQuery, QueryError> {
        let mut nodes = vec![self.node()?];
        let mut edges = Vec::new();
        loop {
            let (offset, tok) = self.bump();
            let kind = match tok {
                Token::Direct => EdgeKind::Direct,
                Token::Eventual => EdgeKind::Eventual,
                Token::End => break,
                other => return Err(Self::unexpected(offset, &other, &["->", "~>", "end of input"])),
            };
            edges.push(kind);
            nodes.push(self.node()?);
        }
        Ok(StateQuery { nodes, edges })
    }

    fn node(&mut self) -> Result<QueryNode, QueryError> {
        let (offset, tok) = self.bump();
        if tok != Token::State {
            return Err(Self::unexpected(offset, &tok, &["S"]));
        }
        let (offset, tok) = self.bump();
        let state = match tok {
            Token::Int(text) => text
                .parse::<usize>()
                .map_err(|_| QueryError::BadStateIndex { offset, text: text.to_owned() })?,
            other => return Err(Self::unexpected(offset, &other, &["state index"])),
        };
        let mut attrs = NodeAttrs::default();
        if self.peek().1 == Token::LBrace {
            self.bump();
            loop {
                self.attr(&mut attrs)?;
                let (offset, tok) = self.bump();
                match tok {
                    Token::Comma => continue,
                    Token::RBrace => break,
                    other => return Err(Self::unexpected(offset, &other, &[",", "}"])),
                }
            }
            if let (Some(lo), Some(hi)) = (attrs.min_age, attrs.max_age) {
                if lo > hi {
                    return Err(QueryError::BadAttrValue {
                        offset,
                        attr: "max_age".into(),
                        value: format!("{hi} is below min_age {lo}"),
                    });
                }
            }
        }
        Ok(QueryNode { state, attrs })
    }

    fn attr(&mut self, attrs: &mut NodeAttrs) -> Result<(), QueryError> {
        const ATTRS: &[&str] = &["initial", "final", "min_age", "max_age", "min_visits"];
        let (offset, tok) = self.bump();
        let name = match tok {
            Token::Ident(name) if ATTRS.contains(&name) => name,
            other => return Err(Self::unexpected(offset, &other, ATTRS)),
        };
        let duplicate = || QueryError::DuplicateAttr { offset, attr: name.to_owned() };
        match name {
            "initial" => {
                if attrs.initial {
                    return Err(duplicate());
                }
                attrs.initial = true;
            }
            "final" => {
                if attrs.is_final {
                    return Err(duplicate());
                }
                attrs.is_final = true;
            }
            _ => {
                let (eq_offset, eq) = self.bump();
                if eq != Token::Equals {
                    return Err(Self::unexpected(eq_offset, &eq, &["="]));
                }
                let (value_offset, value) = self.bump();
                let text = match value {
                    Token::Int(t) | Token::Num(t) => t,
                    other => return Err(Self::unexpected(value_offset, &other, &["number"])),
                };
                let bad = || QueryError::BadAttrValue {
                    offset: value_offset,
                    attr: name.to_owned(),
                    value: text.to_owned(),
                };
                if name == "min_visits" {
                    if attrs.min_visits.is_some() {
                        return Err(duplicate());
                    }
                    if matches!(value, Token::Num(_)) {
                        return Err(bad());
                    }
                    attrs.min_visits = Some(text.parse::<u32>().map_err(|_| bad())?);
                } else {
                    let age: f64 = text.parse().map_err(|_| bad())?;
                    if !age.is_finite() {
                        return Err(bad());
                    }
                    let slot = if name == "min_age" { &mut attrs.min_age } else { &mut attrs.max_age };
                    if slot.is_some() {
                        return Err(duplicate());
                    }
                    *slot = Some(age);
                }
            }
        }
        Ok(())
    }
}

pub fn parse_query(text: &str) -> Result<StateQuery, QueryError> {
    let mut parser = Parser { lexer: Lexer { src: text, pos: 0 }, peeked: None };
    parser.query()
}

/// Canonical text form; `parse_query(&render(q)) == Ok(q)`.
pub fn render(query: &StateQuery) -> String {
    let mut out = String::new();
    for (i, node) in query.nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(match query.edges[i - 1] {
                EdgeKind::Direct => " -> ",
                EdgeKind::Eventual => " ~> ",
            });
        }
        out.push_str(&format!("S{}", node.state));
        let a = &node.attrs;
        let mut parts = Vec::new();
        if a.initial {
            parts.push("initial".to_string());
        }
        if a.is_final {
            parts.push("final".to_string());
        }
        if let Some(x) = a.min_age {
            parts.push(format!("min_age={}", render_num(x)));
        }
        if let Some(x) = a.max_age {
            parts.push(format!("max_age={}", render_num(x)));
        }
        if let Some(n) = a.min_visits {
            parts.push(format!("min_visits={n}"));
        }
        if !parts.is_empty() {
            out.push('{');
            out.push_str(&parts.join(","));
            out.push('}');
        }
    }
    out
}

/// `f64` Display never uses exponents, so it always fits the NUM grammar.
fn render_num(x: f64) -> String {
    x.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chained_eventual_example() {
        let q = parse_query("S4{initial} ~> S5 ~> S6 ~> S7{final}").unwrap();
        assert_eq!(q.nodes.iter().map(|n| n.state).collect::<Vec<_>>(), vec![4, 5, 6, 7]);
        assert_eq!(q.edges, vec![EdgeKind::Eventual; 3]);
        assert!(q.nodes[0].attrs.initial && !q.nodes[0].attrs.is_final);
        assert!(q.nodes[3].attrs.is_final && !q.nodes[3].attrs.initial);
        assert_eq!(q.nodes[1].attrs, NodeAttrs::default());
        assert_eq!(render(&q), "S4{initial} ~> S5 ~> S6 ~> S7{final}");
    }

    #[test]
    fn single_node() {
        let q = parse_query("S0").unwrap();
        assert_eq!(q.nodes.len(), 1);
        assert!(q.edges.is_empty());
    }

    #[test]
    fn doubled_edge_is_a_syntax_error() {
        match parse_query("S1 -> -> S2") {
            Err(QueryError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 6);
                assert_eq!(expected, vec!["S".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn whitespace_and_attrs() {
        let q = parse_query("  S 3 { min_age = 12.5 , max_age=60, min_visits=2 }->S4{final}\n").unwrap();
        assert_eq!(q.nodes[0].attrs.min_age, Some(12.5));
        assert_eq!(q.nodes[0].attrs.max_age, Some(60.0));
        assert_eq!(q.nodes[0].attrs.min_visits, Some(2));
        assert_eq!(q.edges, vec![EdgeKind::Direct]);
        assert_eq!(render(&q), "S3{min_age=12.5,max_age=60,min_visits=2} -> S4{final}");
    }

    #[test]
    fn error_classes() {
        assert!(matches!(parse_query("S1{initial,initial}"), Err(QueryError::DuplicateAttr { offset: 11, .. })));
        assert!(matches!(parse_query("S1{min_visits=2.5}"), Err(QueryError::BadAttrValue { .. })));
        assert!(matches!(parse_query("S1{min_age=5,max_age=4}"), Err(QueryError::BadAttrValue { .. })));
        assert!(matches!(parse_query("S1{min_visits=99999999999}"), Err(QueryError::BadAttrValue { .. })));
        assert!(matches!(parse_query("S99999999999999999999999"), Err(QueryError::BadStateIndex { .. })));
        assert!(matches!(parse_query(""), Err(QueryError::Syntax { offset: 0, .. })));
        assert!(matches!(parse_query("S1 S2"), Err(QueryError::Syntax { offset: 3, .. })));
        assert!(matches!(parse_query("S1{}"), Err(QueryError::Syntax { offset: 3, .. })));
        assert!(matches!(parse_query("S1{color}"), Err(QueryError::Syntax { offset: 3, .. })));
        assert!(matches!(parse_query("s1"), Err(QueryError::Syntax { offset: 0, .. })));
        assert!(matches!(parse_query("S1 → S2"), Err(QueryError::Syntax { offset: 3, .. })));
        assert!(matches!(parse_query("S1{min_age=-3}"), Err(QueryError::Syntax { offset: 11, .. })));
    }
}
