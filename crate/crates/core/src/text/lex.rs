//! Tokenizer for the schema DSL.

use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Then,
    Else,
    If,
    Do,
    While,
    For,
    Proc,
    Final,
    Start,
}

impl Keyword {
    fn from_str(s: &str) -> Option<Keyword> {
        Some(match s {
            "then" => Keyword::Then,
            "else" => Keyword::Else,
            "if" => Keyword::If,
            "do" => Keyword::Do,
            "while" => Keyword::While,
            "for" => Keyword::For,
            "proc" => Keyword::Proc,
            "final" => Keyword::Final,
            "start" => Keyword::Start,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Then => "then",
            Keyword::Else => "else",
            Keyword::If => "if",
            Keyword::Do => "do",
            Keyword::While => "while",
            Keyword::For => "for",
            Keyword::Proc => "proc",
            Keyword::Final => "final",
            Keyword::Start => "start",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `$name`, an interpreted builtin symbol.
    Builtin(String),
    /// `'name`, a label literal.
    LabelLit(String),
    Int(i64),
    Kw(Keyword),
    Colon,
    Semi,
    Comma,
    Assign,
    Plus,
    PlusPlus,
    Minus,
    Star,
    Less,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Builtin(s) => format!("builtin '{s}'"),
            Tok::LabelLit(s) => format!("label literal \"'{s}\""),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Kw(k) => format!("keyword '{}'", k.as_str()),
            Tok::Colon => "':'".into(),
            Tok::Semi => "';'".into(),
            Tok::Comma => "','".into(),
            Tok::Assign => "'='".into(),
            Tok::Plus => "'+'".into(),
            Tok::PlusPlus => "'++'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Less => "'<'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr, $len:expr) => {
            tokens.push(Token {
                tok: $tok,
                span: SourceSpan::new($l, $c, $len),
            })
        };
    }

    while let Some(&ch) = chars.peek() {
        let (tl, tc) = (line, col);
        match ch {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '/' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        chars.next();
                        col += 1;
                    }
                } else {
                    return Err(ParseError::new(
                        SourceSpan::new(tl, tc, 1),
                        "unexpected '/': comments start with //".to_string(),
                    ));
                }
            }
            c if c.is_ascii_alphabetic() => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let len = word.len();
                match Keyword::from_str(&word) {
                    Some(kw) => push!(Tok::Kw(kw), tl, tc, len),
                    None => push!(Tok::Ident(word), tl, tc, len),
                }
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        digits.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let len = digits.len();
                let value: i64 = digits.parse().map_err(|_| {
                    ParseError::new(SourceSpan::new(tl, tc, len), "integer literal out of range")
                })?;
                push!(Tok::Int(value), tl, tc, len);
            }
            '$' | '\'' => {
                let marker = ch;
                chars.next();
                col += 1;
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                if word.is_empty() || !word.chars().next().unwrap().is_ascii_alphabetic() {
                    return Err(ParseError::new(
                        SourceSpan::new(tl, tc, 1),
                        format!("'{marker}' must be followed by an identifier"),
                    ));
                }
                let len = word.len() + 1;
                if marker == '$' {
                    push!(Tok::Builtin(format!("${word}")), tl, tc, len);
                } else {
                    push!(Tok::LabelLit(word), tl, tc, len);
                }
            }
            _ => {
                chars.next();
                col += 1;
                let tok = match ch {
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    '=' => Tok::Assign,
                    '+' => {
                        if chars.peek() == Some(&'+') {
                            chars.next();
                            col += 1;
                            Tok::PlusPlus
                        } else {
                            Tok::Plus
                        }
                    }
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '<' => Tok::Less,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    other => {
                        return Err(ParseError::new(
                            SourceSpan::new(tl, tc, 1),
                            format!("unexpected character '{other}'"),
                        ))
                    }
                };
                let len = if tok == Tok::PlusPlus { 2 } else { 1 };
                push!(tok, tl, tc, len);
            }
        }
    }
    tokens.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::new(line, col, 0),
    });
    Ok(tokens)
}
