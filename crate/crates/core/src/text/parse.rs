//! Recursive-descent parser for the schema DSL.

use std::collections::{BTreeMap, BTreeSet};

use super::lex::{tokenize, Keyword, Tok, Token};
use super::{ParseError, SourceSpan};
use crate::schema::{
    AffineExpr, Arg, AssignRhs, GeneralExpr, IndexExpr, InstrKind, Instruction, Label, LoopCond,
    Schema, Variable,
};

/// Parse DSL text into a schema. On success the result round-trips through
/// [`super::pretty_print`] up to structural equality.
pub fn parse_schema(text: &str) -> Result<Schema, ParseError> {
    let tokens = tokenize(text)?;
    let mut used: BTreeSet<String> = BTreeSet::new();
    for t in &tokens {
        match &t.tok {
            Tok::Ident(s) | Tok::LabelLit(s) => {
                used.insert(s.clone());
            }
            _ => {}
        }
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        used,
        counters: BTreeMap::new(),
    };
    let block = parser.parse_block(SourceSpan::new(1, 1, 0), true)?;
    Ok(block)
}

struct RawFor {
    label: Label,
    proc_name: String,
    var: String,
    lo: AffineExpr,
    hi: AffineExpr,
    body: Schema,
}

enum RawItem {
    Instr(Instruction, SourceSpan),
    For(RawFor, SourceSpan),
}

impl RawItem {
    fn label(&self) -> &Label {
        match self {
            RawItem::Instr(i, _) => &i.label,
            RawItem::For(f, _) => &f.label,
        }
    }

    fn span(&self) -> SourceSpan {
        match self {
            RawItem::Instr(_, s) | RawItem::For(_, s) => *s,
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    used: BTreeSet<String>,
    counters: BTreeMap<&'static str, u32>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek2(&self) -> &Token {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
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

    fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.span)),
            other => Err(ParseError::new(
                t.span,
                format!("expected {what}, found {}", other.describe()),
            )),
        }
    }

    fn gen_name(&mut self, prefix: &'static str) -> String {
        loop {
            let n = self.counters.entry(prefix).or_insert(1);
            let candidate = format!("{prefix}{n}");
            *n += 1;
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
        }
    }

    fn derive_name(&mut self, base: String) -> String {
        if self.used.insert(base.clone()) {
            return base;
        }
        let mut k = 2u32;
        loop {
            let candidate = format!("{base}_{k}");
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
            k += 1;
        }
    }

    /// Parse statements until `}` (or end of input at the top level) and
    /// assemble them into a schema block.
    fn parse_block(&mut self, open_span: SourceSpan, top: bool) -> Result<Schema, ParseError> {
        let mut items: Vec<RawItem> = Vec::new();
        let mut procs: BTreeMap<String, Schema> = BTreeMap::new();
        let mut final_decl: Option<(Label, SourceSpan)> = None;
        let mut start_decl: Option<Label> = None;

        loop {
            match &self.peek().tok {
                Tok::Eof => {
                    if !top {
                        return Err(ParseError::new(self.peek().span, "unclosed block"));
                    }
                    break;
                }
                Tok::RBrace => {
                    if top {
                        return Err(ParseError::new(self.peek().span, "unmatched '}'"));
                    }
                    self.bump();
                    break;
                }
                Tok::Kw(Keyword::Final) => {
                    let t = self.bump();
                    let (name, _) = self.expect_ident("final label")?;
                    self.expect(Tok::Semi)?;
                    if final_decl.is_some() {
                        return Err(ParseError::new(t.span, "final label declared twice"));
                    }
                    final_decl = Some((Label::new(name), t.span));
                }
                Tok::Kw(Keyword::Start) => {
                    let t = self.bump();
                    let (name, _) = self.expect_ident("start label")?;
                    self.expect(Tok::Semi)?;
                    if start_decl.is_some() {
                        return Err(ParseError::new(t.span, "start label declared twice"));
                    }
                    start_decl = Some(Label::new(name));
                }
                Tok::Kw(Keyword::Proc) => {
                    self.bump();
                    let (name, name_span) = self.expect_ident("procedure name")?;
                    let brace = self.expect(Tok::LBrace)?;
                    let body = self.parse_block(brace.span, false)?;
                    if procs.insert(name.clone(), body).is_some() {
                        return Err(ParseError::new(
                            name_span,
                            format!("procedure {name} declared twice"),
                        ));
                    }
                }
                Tok::Kw(Keyword::For) => {
                    let span = self.peek().span;
                    let raw = self.parse_for(None)?;
                    items.push(RawItem::For(raw, span));
                }
                Tok::Ident(_) => {
                    let span = self.peek().span;
                    let (label_name, _) = self.expect_ident("label")?;
                    self.expect(Tok::Colon)?;
                    if matches!(self.peek().tok, Tok::Kw(Keyword::For)) {
                        let raw = self.parse_for(Some(Label::new(label_name)))?;
                        items.push(RawItem::For(raw, span));
                    } else {
                        let instr = self.parse_instruction(Label::new(label_name))?;
                        items.push(RawItem::Instr(instr, span));
                    }
                }
                _ => {
                    let t = self.peek();
                    return Err(ParseError::new(
                        t.span,
                        format!("expected a statement, found {}", t.tok.describe()),
                    ));
                }
            }
        }

        self.assemble_block(items, procs, final_decl, start_decl, open_span)
    }

    fn parse_for(&mut self, label: Option<Label>) -> Result<RawFor, ParseError> {
        self.expect(Tok::Kw(Keyword::For))?;
        self.expect(Tok::LParen)?;
        let (var, var_span) = self.expect_ident("loop counter")?;
        self.expect(Tok::Assign)?;
        let lo_expr = self.parse_expr(false)?;
        let lo = fold_affine(&lo_expr).ok_or_else(|| {
            ParseError::new(
                var_span,
                "loop bounds must be affine expressions".to_string(),
            )
        })?;
        self.expect(Tok::Semi)?;
        let (var2, var2_span) = self.expect_ident("loop counter")?;
        if var2 != var {
            return Err(ParseError::new(
                var2_span,
                format!("loop condition tests '{var2}' but the counter is '{var}'"),
            ));
        }
        self.expect(Tok::Less)?;
        let hi_expr = self.parse_expr(false)?;
        let hi = fold_affine(&hi_expr).ok_or_else(|| {
            ParseError::new(
                var2_span,
                "loop bounds must be affine expressions".to_string(),
            )
        })?;
        self.expect(Tok::Semi)?;
        let (var3, var3_span) = self.expect_ident("loop counter")?;
        if var3 != var {
            return Err(ParseError::new(
                var3_span,
                format!("loop increments '{var3}' but the counter is '{var}'"),
            ));
        }
        self.expect(Tok::PlusPlus)?;
        self.expect(Tok::RParen)?;
        let brace = self.expect(Tok::LBrace)?;
        let body = self.parse_block(brace.span, false)?;

        let label = match label {
            Some(l) => l,
            None => Label::new(self.gen_name("floop")),
        };
        let proc_name = self.derive_name(format!("for_{}", label.0));
        Ok(RawFor {
            label,
            proc_name,
            var,
            lo,
            hi,
            body,
        })
    }

    fn parse_instruction(&mut self, label: Label) -> Result<Instruction, ParseError> {
        let kind = match self.peek().tok.clone() {
            Tok::Kw(Keyword::If) => {
                self.bump();
                let psym = self.parse_symbol("predicate symbol")?;
                self.expect(Tok::LParen)?;
                let args = self.parse_args()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Kw(Keyword::Then))?;
                let (then_label, _) = self.expect_ident("label")?;
                self.expect(Tok::Kw(Keyword::Else))?;
                let (else_label, _) = self.expect_ident("label")?;
                InstrKind::Cond {
                    psym,
                    args,
                    then_label: Label::new(then_label),
                    else_label: Label::new(else_label),
                }
            }
            Tok::Kw(Keyword::Do) => {
                self.bump();
                let (body, _) = self.expect_ident("procedure name")?;
                match self.peek().tok.clone() {
                    Tok::Kw(Keyword::While) => {
                        self.bump();
                        let psym = self.parse_symbol("predicate symbol")?;
                        self.expect(Tok::LParen)?;
                        let args = self.parse_args()?;
                        self.expect(Tok::RParen)?;
                        self.expect(Tok::Kw(Keyword::Then))?;
                        let (next, _) = self.expect_ident("label")?;
                        InstrKind::Loop {
                            body,
                            cond: LoopCond::While { psym, args },
                            next: Label::new(next),
                        }
                    }
                    Tok::Kw(Keyword::Then) => {
                        self.bump();
                        let (next, _) = self.expect_ident("label")?;
                        InstrKind::Call {
                            body,
                            next: Label::new(next),
                        }
                    }
                    other => {
                        return Err(ParseError::new(
                            self.peek().span,
                            format!("expected 'while' or 'then', found {}", other.describe()),
                        ))
                    }
                }
            }
            _ => {
                let target = self.parse_variable()?;
                self.expect(Tok::Assign)?;
                let rhs = self.parse_rhs()?;
                self.expect(Tok::Kw(Keyword::Then))?;
                let (next, _) = self.expect_ident("label")?;
                InstrKind::Assign {
                    target,
                    rhs,
                    next: Label::new(next),
                }
            }
        };
        self.expect(Tok::Semi)?;
        Ok(Instruction { label, kind })
    }

    fn parse_symbol(&mut self, what: &str) -> Result<String, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Ident(s) => Ok(s),
            Tok::Builtin(s) => Ok(s),
            other => Err(ParseError::new(
                t.span,
                format!("expected {what}, found {}", other.describe()),
            )),
        }
    }

    fn parse_rhs(&mut self) -> Result<AssignRhs, ParseError> {
        if let Tok::LabelLit(name) = self.peek().tok.clone() {
            self.bump();
            return Ok(AssignRhs::LabelLit(Label::new(name)));
        }
        if matches!(self.peek().tok, Tok::Ident(_)) && self.peek2().tok == Tok::LParen {
            let (fsym, _) = self.expect_ident("function symbol")?;
            self.expect(Tok::LParen)?;
            let args = self.parse_args()?;
            self.expect(Tok::RParen)?;
            return Ok(AssignRhs::Apply { fsym, args });
        }
        let span = self.peek().span;
        let expr = self.parse_expr(false)?;
        match fold_affine(&expr) {
            Some(a) => Ok(AssignRhs::Affine(a)),
            None => Err(ParseError::new(
                span,
                "assignment right side must be a function application, an affine expression, \
                 or a label literal"
                    .to_string(),
            )),
        }
    }

    fn parse_args(&mut self) -> Result<Vec<Arg>, ParseError> {
        let mut args = Vec::new();
        if self.peek().tok == Tok::RParen {
            return Ok(args);
        }
        loop {
            args.push(self.parse_arg()?);
            if self.peek().tok == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok(args)
    }

    fn parse_arg(&mut self) -> Result<Arg, ParseError> {
        match self.peek().tok.clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Arg::Int(n))
            }
            Tok::Minus => {
                self.bump();
                let t = self.bump();
                match t.tok {
                    Tok::Int(n) => Ok(Arg::Int(-n)),
                    other => Err(ParseError::new(
                        t.span,
                        format!("expected an integer after '-', found {}", other.describe()),
                    )),
                }
            }
            Tok::LabelLit(name) => {
                self.bump();
                Ok(Arg::LabelLit(Label::new(name)))
            }
            Tok::Ident(_) => Ok(Arg::Var(self.parse_variable()?)),
            other => Err(ParseError::new(
                self.peek().span,
                format!("expected an argument, found {}", other.describe()),
            )),
        }
    }

    fn parse_variable(&mut self) -> Result<Variable, ParseError> {
        let (name, _) = self.expect_ident("variable")?;
        if self.peek().tok == Tok::LBracket {
            self.bump();
            let mut indexes = Vec::new();
            loop {
                let expr = self.parse_expr(true)?;
                indexes.push(match fold_affine(&expr) {
                    Some(a) => IndexExpr::Affine(a),
                    None => IndexExpr::General(expr),
                });
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RBracket)?;
            Ok(Variable::Indexed {
                array: name,
                indexes,
            })
        } else {
            Ok(Variable::Simple(name))
        }
    }

    fn parse_expr(&mut self, in_index: bool) -> Result<GeneralExpr, ParseError> {
        let mut acc = self.parse_term(in_index)?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.parse_term(in_index)?;
                    acc = GeneralExpr::Add(Box::new(acc), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.parse_term(in_index)?;
                    acc = GeneralExpr::Sub(Box::new(acc), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn parse_term(&mut self, in_index: bool) -> Result<GeneralExpr, ParseError> {
        let mut acc = self.parse_factor(in_index)?;
        while self.peek().tok == Tok::Star {
            self.bump();
            let rhs = self.parse_factor(in_index)?;
            acc = GeneralExpr::Mul(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn parse_factor(&mut self, in_index: bool) -> Result<GeneralExpr, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Int(n) => Ok(GeneralExpr::Const(n)),
            Tok::Minus => {
                let f = self.parse_factor(in_index)?;
                Ok(match f {
                    GeneralExpr::Const(n) => GeneralExpr::Const(-n),
                    other => GeneralExpr::Sub(Box::new(GeneralExpr::Const(0)), Box::new(other)),
                })
            }
            Tok::LParen => {
                let e = self.parse_expr(in_index)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LBracket {
                    let msg = if in_index {
                        "array index must be a simple variable"
                    } else {
                        "array access is not allowed in an arithmetic expression"
                    };
                    return Err(ParseError::new(self.peek().span, msg.to_string()));
                }
                if self.peek().tok == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek().tok != Tok::RParen {
                        loop {
                            let a = self.bump();
                            match a.tok {
                                Tok::Ident(v) => args.push(v),
                                other => {
                                    return Err(ParseError::new(
                                        a.span,
                                        format!(
                                            "index function arguments must be simple variables, \
                                             found {}",
                                            other.describe()
                                        ),
                                    ))
                                }
                            }
                            if self.peek().tok == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    Ok(GeneralExpr::Apply(name, args))
                } else {
                    Ok(GeneralExpr::Var(name))
                }
            }
            other => Err(ParseError::new(
                t.span,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn assemble_block(
        &mut self,
        items: Vec<RawItem>,
        mut procs: BTreeMap<String, Schema>,
        final_decl: Option<(Label, SourceSpan)>,
        start_decl: Option<Label>,
        open_span: SourceSpan,
    ) -> Result<Schema, ParseError> {
        // Duplicate input labels are a parse error; validate re-checks.
        let mut seen: BTreeSet<&Label> = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.label()) {
                return Err(ParseError::new(
                    item.span(),
                    format!("duplicate input label {}", item.label()),
                ));
            }
        }

        let inputs: BTreeSet<Label> = items.iter().map(|i| i.label().clone()).collect();
        let fin = match final_decl {
            Some((l, _)) => l,
            None => {
                let mut candidates: BTreeSet<Label> = BTreeSet::new();
                for item in &items {
                    if let RawItem::Instr(instr, _) = item {
                        for out in instr.out_labels() {
                            if !inputs.contains(out) {
                                candidates.insert(out.clone());
                            }
                        }
                    }
                }
                match candidates.len() {
                    1 => candidates.into_iter().next().unwrap(),
                    0 => {
                        let last_is_for = matches!(items.last(), Some(RawItem::For(..)));
                        if last_is_for {
                            Label::new(self.gen_name("fend"))
                        } else {
                            return Err(ParseError::new(
                                open_span,
                                "missing final label: declare one with 'final <label>;'"
                                    .to_string(),
                            ));
                        }
                    }
                    _ => {
                        let names: Vec<String> = candidates.iter().map(|l| l.0.clone()).collect();
                        return Err(ParseError::new(
                            open_span,
                            format!(
                                "ambiguous final label (candidates: {}); declare one with \
                                 'final <label>;'",
                                names.join(", ")
                            ),
                        ));
                    }
                }
            }
        };

        // Successor of each for block: next statement in the block, or the
        // final label.
        let next_labels: Vec<Label> = (0..items.len())
            .map(|i| {
                items
                    .get(i + 1)
                    .map(|it| it.label().clone())
                    .unwrap_or_else(|| fin.clone())
            })
            .collect();

        let mut opers = Vec::new();
        for (i, item) in items.into_iter().enumerate() {
            match item {
                RawItem::Instr(instr, _) => opers.push(instr),
                RawItem::For(raw, _) => {
                    let RawFor {
                        label,
                        proc_name,
                        var,
                        lo,
                        hi,
                        body,
                    } = raw;
                    procs.insert(proc_name.clone(), body);
                    opers.push(Instruction {
                        label,
                        kind: InstrKind::Loop {
                            body: proc_name,
                            cond: LoopCond::Counter { var, lo, hi },
                            next: next_labels[i].clone(),
                        },
                    });
                }
            }
        }

        let start = match start_decl {
            Some(l) => l,
            None => opers
                .first()
                .map(|i| i.label.clone())
                .unwrap_or_else(|| fin.clone()),
        };

        Ok(Schema {
            opers,
            start,
            fin,
            procs,
        })
    }
}

/// Fold an expression tree into affine normal form when possible.
pub(crate) fn fold_affine(expr: &GeneralExpr) -> Option<AffineExpr> {
    match expr {
        GeneralExpr::Const(c) => Some(AffineExpr::constant(*c)),
        GeneralExpr::Var(v) => Some(AffineExpr::var(v.clone())),
        GeneralExpr::Apply(..) => None,
        GeneralExpr::Add(a, b) => combine(fold_affine(a)?, fold_affine(b)?, 1),
        GeneralExpr::Sub(a, b) => combine(fold_affine(a)?, fold_affine(b)?, -1),
        GeneralExpr::Mul(a, b) => {
            let fa = fold_affine(a)?;
            let fb = fold_affine(b)?;
            if fa.is_constant() {
                scale(fb, fa.constant)
            } else if fb.is_constant() {
                scale(fa, fb.constant)
            } else {
                None
            }
        }
    }
}

fn combine(mut a: AffineExpr, b: AffineExpr, sign: i64) -> Option<AffineExpr> {
    for (v, c) in b.coeffs {
        let entry = a.coeffs.entry(v).or_insert(0);
        *entry = entry.checked_add(c.checked_mul(sign)?)?;
    }
    a.coeffs.retain(|_, c| *c != 0);
    a.constant = a.constant.checked_add(b.constant.checked_mul(sign)?)?;
    Some(a)
}

fn scale(mut a: AffineExpr, k: i64) -> Option<AffineExpr> {
    if k == 0 {
        return Some(AffineExpr::constant(0));
    }
    for c in a.coeffs.values_mut() {
        *c = c.checked_mul(k)?;
    }
    a.constant = a.constant.checked_mul(k)?;
    Some(a)
}
