//! Predicate diagrams and term utilities for the Herbrand interpretation.
//!
//! A diagram is a finite, consistent set of signed ground atoms
//! `p(t1, …, tn) = true|false`. Herbrand execution answers predicate calls
//! by looking atoms up here; an absent atom ends the run without result
//! unless the diagram carries a default answer.

use std::collections::BTreeMap;

use crate::text::lex::{tokenize, Tok, Token};
use crate::text::{ParseError, SourceSpan};

use super::{CellId, Interpretation, Memory, Term, Value};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagram {
    pub entries: BTreeMap<(String, Vec<Term>), bool>,
    /// Answer for atoms not in the diagram; `None` means undefined.
    pub default: Option<bool>,
}

impl Diagram {
    pub fn new() -> Self {
        Diagram::default()
    }

    /// A diagram answering every unlisted atom with `answer`. Useful for
    /// driving a loop a fixed number of passes (all-false runs each
    /// do-while body exactly once).
    pub fn with_default(answer: bool) -> Self {
        Diagram {
            entries: BTreeMap::new(),
            default: Some(answer),
        }
    }

    pub fn insert(&mut self, psym: impl Into<String>, args: Vec<Term>, truth: bool) {
        self.entries.insert((psym.into(), args), truth);
    }

    pub fn lookup(&self, psym: &str, args: &[Term]) -> Option<bool> {
        self.entries
            .get(&(psym.to_string(), args.to_vec()))
            .copied()
            .or(self.default)
    }
}

/// Parse the diagram file format: one `p(t1, …, tn) = true|false` entry
/// per line, `//` comments, terms in prefix syntax with `a[...]` cell
/// expressions.
pub fn parse_diagram(text: &str) -> Result<Diagram, ParseError> {
    let mut diagram = Diagram::new();
    for (lineno, line) in text.lines().enumerate() {
        let stripped = match line.find("//") {
            Some(i) => &line[..i],
            None => line,
        };
        if stripped.trim().is_empty() {
            continue;
        }
        let tokens = retag(tokenize(stripped)?, lineno + 1);
        let mut p = TermParser { tokens, pos: 0 };
        let (psym, args) = p.parse_atom()?;
        p.expect(Tok::Assign)?;
        let truth = p.parse_bool()?;
        p.expect(Tok::Eof)?;
        if let Some(prev) = diagram.entries.get(&(psym.clone(), args.clone())) {
            if *prev != truth {
                return Err(ParseError::new(
                    SourceSpan::new(lineno + 1, 1, stripped.len()),
                    format!("conflicting entries for {psym}(…)"),
                ));
            }
        }
        diagram.insert(psym, args, truth);
    }
    Ok(diagram)
}

/// Canonical text for a diagram, entries sorted.
pub fn print_diagram(diagram: &Diagram) -> String {
    let mut out = String::new();
    for ((psym, args), truth) in &diagram.entries {
        let rendered: Vec<String> = args.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("{psym}({}) = {truth}\n", rendered.join(", ")));
    }
    out
}

fn retag(mut tokens: Vec<Token>, line: usize) -> Vec<Token> {
    for t in &mut tokens {
        t.span.line = line;
    }
    tokens
}

struct TermParser {
    tokens: Vec<Token>,
    pos: usize,
}

impl TermParser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        let t = self.bump();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(ParseError::new(
                t.span,
                format!("expected {}, found {}", tok.describe(), t.tok.describe()),
            ))
        }
    }

    fn parse_atom(&mut self) -> Result<(String, Vec<Term>), ParseError> {
        let t = self.bump();
        let name = match t.tok {
            Tok::Ident(s) => s,
            other => {
                return Err(ParseError::new(
                    t.span,
                    format!("expected a predicate symbol, found {}", other.describe()),
                ))
            }
        };
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.parse_term()?);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok((name, args))
    }

    fn parse_term(&mut self) -> Result<Term, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Int(n) => Ok(Term::int(n)),
            Tok::Minus => {
                let t2 = self.bump();
                match t2.tok {
                    Tok::Int(n) => Ok(Term::int(-n)),
                    other => Err(ParseError::new(
                        t2.span,
                        format!("expected an integer after '-', found {}", other.describe()),
                    )),
                }
            }
            Tok::LabelLit(name) => Ok(Term::App(format!("'{name}"), Vec::new())),
            Tok::Ident(name) => match self.peek().tok {
                Tok::LParen => {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek().tok != Tok::RParen {
                        loop {
                            args.push(self.parse_term()?);
                            if self.peek().tok == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Term::App(name, args))
                }
                Tok::LBracket => {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek().tok != Tok::RBracket {
                        loop {
                            args.push(self.parse_term()?);
                            if self.peek().tok == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RBracket)?;
                    Ok(Term::Cell(name, args))
                }
                _ => Ok(Term::Var(name)),
            },
            other => Err(ParseError::new(
                t.span,
                format!("expected a term, found {}", other.describe()),
            )),
        }
    }

    fn parse_bool(&mut self) -> Result<bool, ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Ident(s) if s == "true" => Ok(true),
            Tok::Ident(s) if s == "false" => Ok(false),
            other => Err(ParseError::new(
                t.span,
                format!("expected 'true' or 'false', found {}", other.describe()),
            )),
        }
    }
}

/// Evaluate a term under a concrete interpretation and start memory. The
/// inverse check for Herbrand soundness: evaluating the symbolic history of
/// a straight-line run must reproduce the concrete result.
pub fn eval_term(term: &Term, interp: &Interpretation, memory: &Memory) -> Option<Value> {
    match term {
        Term::Var(name) => memory.read(&CellId::Simple(name.clone())),
        Term::App(name, args) => {
            if args.is_empty() {
                if let Ok(n) = name.parse::<i64>() {
                    return Some(Value::Int(n));
                }
                if let Some(l) = name.strip_prefix('\'') {
                    return Some(Value::Label(crate::schema::Label::new(l)));
                }
            }
            let vals: Option<Vec<Value>> =
                args.iter().map(|t| eval_term(t, interp, memory)).collect();
            interp.function(name)?.apply(name, &vals?)
        }
        Term::Cell(name, args) => {
            let vals: Option<Vec<Value>> =
                args.iter().map(|t| eval_term(t, interp, memory)).collect();
            memory.read(&CellId::Arr(name.clone(), vals?))
        }
    }
}
