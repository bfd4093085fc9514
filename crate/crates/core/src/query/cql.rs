//! CQL: the small catalog query language.
//!
//! ```text
//! query     = "FIND" target "WITH" predicate { "AND" predicate } ;
//! target    = "sites" | "objects" | "functions" | "tools"
//!           | "documents" | "collections" | "responsible" ;
//! predicate = "TYPE" string
//!           | "SUBTYPES" ("ON" | "OFF")
//!           | "FAVORITE" "OF" string
//!           | "DERIVED" "FROM" "TYPE" string
//!           | "AT" "SITE" string
//!           | "FOR" string ;
//! string    = '"' characters-except-quote '"' ;
//! ```
//!
//! Keywords are case-insensitive, strings case-sensitive. `print` emits the
//! canonical form (upper-case keywords, lower-case target), and
//! `parse(print(ast)) == ast`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Sites,
    Objects,
    Functions,
    Tools,
    Documents,
    Collections,
    Responsible,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Sites => "sites",
            Target::Objects => "objects",
            Target::Functions => "functions",
            Target::Tools => "tools",
            Target::Documents => "documents",
            Target::Collections => "collections",
            Target::Responsible => "responsible",
        }
    }

    fn parse(word: &str) -> Option<Target> {
        match word.to_ascii_lowercase().as_str() {
            "sites" => Some(Target::Sites),
            "objects" => Some(Target::Objects),
            "functions" => Some(Target::Functions),
            "tools" => Some(Target::Tools),
            "documents" => Some(Target::Documents),
            "collections" => Some(Target::Collections),
            "responsible" => Some(Target::Responsible),
            _ => None,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Type(String),
    Subtypes(bool),
    FavoriteOf(String),
    DerivedFromType(String),
    AtSite(String),
    For(String),
}

impl Predicate {
    fn keyword(&self) -> &'static str {
        match self {
            Predicate::Type(_) => "TYPE",
            Predicate::Subtypes(_) => "SUBTYPES",
            Predicate::FavoriteOf(_) => "FAVORITE OF",
            Predicate::DerivedFromType(_) => "DERIVED FROM TYPE",
            Predicate::AtSite(_) => "AT SITE",
            Predicate::For(_) => "FOR",
        }
    }

    fn valid_for(&self, target: Target) -> bool {
        match self {
            Predicate::Type(_) | Predicate::Subtypes(_) => target != Target::Responsible,
            Predicate::FavoriteOf(_) => target == Target::Tools,
            Predicate::DerivedFromType(_) => {
                matches!(target, Target::Objects | Target::Functions)
            }
            Predicate::AtSite(_) => target == Target::Objects,
            Predicate::For(_) => target == Target::Responsible,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Type(s) => write!(f, "TYPE \"{s}\""),
            Predicate::Subtypes(true) => write!(f, "SUBTYPES ON"),
            Predicate::Subtypes(false) => write!(f, "SUBTYPES OFF"),
            Predicate::FavoriteOf(s) => write!(f, "FAVORITE OF \"{s}\""),
            Predicate::DerivedFromType(s) => write!(f, "DERIVED FROM TYPE \"{s}\""),
            Predicate::AtSite(s) => write!(f, "AT SITE \"{s}\""),
            Predicate::For(s) => write!(f, "FOR \"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub target: Target,
    pub predicates: Vec<Predicate>,
}

impl QueryAst {
    /// Subtype closure defaults on; the last SUBTYPES predicate wins.
    pub fn subtype_closure(&self) -> bool {
        self.predicates
            .iter()
            .rev()
            .find_map(|p| match p {
                Predicate::Subtypes(v) => Some(*v),
                _ => None,
            })
            .unwrap_or(true)
    }
}

/// Canonical text form.
pub fn print_cql(ast: &QueryAst) -> String {
    let mut out = format!("FIND {} WITH ", ast.target.as_str());
    for (i, p) in ast.predicates.iter().enumerate() {
        if i > 0 {
            out.push_str(" AND ");
        }
        out.push_str(&p.to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Str(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            chars.next();
            col += 1;
        } else if c == '"' {
            let (start_line, start_col) = (line, col);
            chars.next();
            col += 1;
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => {
                        col += 1;
                        break;
                    }
                    Some('\n') => {
                        return Err(Error::SyntaxError {
                            line: start_line,
                            col: start_col,
                            message: "unterminated string".to_string(),
                        })
                    }
                    Some(ch) => {
                        col += 1;
                        s.push(ch);
                    }
                    None => {
                        return Err(Error::SyntaxError {
                            line: start_line,
                            col: start_col,
                            message: "unterminated string".to_string(),
                        })
                    }
                }
            }
            tokens.push(Spanned {
                token: Token::Str(s),
                line: start_line,
                col: start_col,
            });
        } else {
            let (start_line, start_col) = (line, col);
            let mut word = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' {
                    break;
                }
                word.push(ch);
                chars.next();
                col += 1;
            }
            tokens.push(Spanned {
                token: Token::Word(word),
                line: start_line,
                col: start_col,
            });
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.peek()
            .map(|t| (t.line, t.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn syntax(&self, message: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::SyntaxError {
            line,
            col,
            message: message.into(),
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<()> {
        match self.next() {
            Some(Spanned {
                token: Token::Word(w),
                ..
            }) if w.eq_ignore_ascii_case(keyword) => Ok(()),
            Some(t) => Err(Error::SyntaxError {
                line: t.line,
                col: t.col,
                message: format!("expected {keyword}"),
            }),
            None => Err(Error::SyntaxError {
                line: self.end_line,
                col: self.end_col,
                message: format!("expected {keyword}"),
            }),
        }
    }

    fn expect_string(&mut self, what: &str) -> Result<String> {
        match self.next() {
            Some(Spanned {
                token: Token::Str(s),
                ..
            }) => Ok(s),
            Some(t) => Err(Error::SyntaxError {
                line: t.line,
                col: t.col,
                message: format!("expected quoted {what}"),
            }),
            None => Err(Error::SyntaxError {
                line: self.end_line,
                col: self.end_col,
                message: format!("expected quoted {what}"),
            }),
        }
    }

    fn parse_predicate(&mut self, target: Target) -> Result<Predicate> {
        let Some(t) = self.next() else {
            return Err(self.syntax("expected predicate"));
        };
        let (line, col) = (t.line, t.col);
        let word = match t.token {
            Token::Word(w) => w,
            Token::Str(_) => {
                return Err(Error::SyntaxError {
                    line,
                    col,
                    message: "expected predicate keyword, found string".to_string(),
                })
            }
        };
        let predicate = match word.to_ascii_uppercase().as_str() {
            "TYPE" => Predicate::Type(self.expect_string("type name")?),
            "SUBTYPES" => match self.next() {
                Some(Spanned {
                    token: Token::Word(w),
                    ..
                }) if w.eq_ignore_ascii_case("ON") => Predicate::Subtypes(true),
                Some(Spanned {
                    token: Token::Word(w),
                    ..
                }) if w.eq_ignore_ascii_case("OFF") => Predicate::Subtypes(false),
                _ => {
                    return Err(Error::SyntaxError {
                        line,
                        col,
                        message: "SUBTYPES expects ON or OFF".to_string(),
                    })
                }
            },
            "FAVORITE" => {
                self.expect_keyword("OF")?;
                Predicate::FavoriteOf(self.expect_string("researcher")?)
            }
            "DERIVED" => {
                self.expect_keyword("FROM")?;
                self.expect_keyword("TYPE")?;
                Predicate::DerivedFromType(self.expect_string("type name")?)
            }
            "AT" => {
                self.expect_keyword("SITE")?;
                Predicate::AtSite(self.expect_string("site")?)
            }
            "FOR" => Predicate::For(self.expect_string("entity")?),
            other => {
                return Err(Error::UnknownPredicate {
                    line,
                    col,
                    message: format!("unknown predicate `{other}`"),
                })
            }
        };
        if !predicate.valid_for(target) {
            return Err(Error::UnknownPredicate {
                line,
                col,
                message: format!(
                    "predicate {} is not valid for target {}",
                    predicate.keyword(),
                    target
                ),
            });
        }
        Ok(predicate)
    }
}

pub fn parse_cql(text: &str) -> Result<QueryAst> {
    let tokens = lex(text)?;
    let (end_line, end_col) = tokens
        .last()
        .map(|t| match &t.token {
            Token::Word(w) => (t.line, t.col + w.chars().count()),
            Token::Str(s) => (t.line, t.col + s.chars().count() + 2),
        })
        .unwrap_or((1, 1));
    let mut parser = Parser {
        tokens,
        pos: 0,
        end_line,
        end_col,
    };
    parser.expect_keyword("FIND")?;
    let target = match parser.next() {
        Some(Spanned {
            token: Token::Word(w),
            line,
            col,
        }) => Target::parse(&w).ok_or(Error::SyntaxError {
            line,
            col,
            message: format!("unknown target `{w}`"),
        })?,
        Some(t) => {
            return Err(Error::SyntaxError {
                line: t.line,
                col: t.col,
                message: "expected target".to_string(),
            })
        }
        None => return Err(parser.syntax("expected target")),
    };
    parser.expect_keyword("WITH")?;
    let mut predicates = vec![parser.parse_predicate(target)?];
    while let Some(t) = parser.peek() {
        match &t.token {
            Token::Word(w) if w.eq_ignore_ascii_case("AND") => {
                parser.next();
                predicates.push(parser.parse_predicate(target)?);
            }
            _ => {
                return Err(parser.syntax("expected AND or end of query"));
            }
        }
    }
    Ok(QueryAst { target, predicates })
}
