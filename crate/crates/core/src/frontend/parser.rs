//! Lexer and recursive-descent parser for the kernel language.
//!
//! ```text
//! NAME
//! in:  ident : type (, ident : type)*
//! out: ident : type (, ident : type)*
//! { ident = expr ... }
//! ```
//!
//! `'` (transpose) binds tighter than `*`, which binds tighter than `+` and
//! `-`. Statements may be separated by newlines or `;`. `#` starts a comment.

use std::collections::HashSet;

use super::ast::{Decl, DeclaredType, Expr, KernelSpec, Orientation, Statement};
use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Colon,
    Comma,
    Semi,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Eq,
    Plus,
    Minus,
    Star,
    Quote,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, FrontendError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(s), pos));
            continue;
        }
        let tok = match c {
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '\'' => Tok::Quote,
            other => {
                return Err(FrontendError::Syntax {
                    line,
                    col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        chars.next();
        col += 1;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    known: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        let i = (self.at + 1).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, FrontendError> {
        let p = self.pos();
        Err(FrontendError::Syntax { line: p.line, col: p.col, message: message.into() })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), FrontendError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected {what}, found {}", describe(&other))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), FrontendError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                self.expect(Tok::Colon, "`:`")
            }
            other => {
                let d = describe(other);
                self.error(format!("expected `{kw}:`, found {d}"))
            }
        }
    }

    fn decl_type(&mut self) -> Result<DeclaredType, FrontendError> {
        let kind = self.ident("a type")?;
        match kind.as_str() {
            "scalar" => Ok(DeclaredType::Scalar),
            "vector" | "matrix" => {
                self.expect(Tok::LParen, "`(`")?;
                let o = match self.ident("`row` or `column`")?.as_str() {
                    "row" => Orientation::Row,
                    "column" => Orientation::Column,
                    other => return self.error(format!("unknown orientation `{other}`")),
                };
                self.expect(Tok::RParen, "`)`")?;
                Ok(if kind == "vector" { DeclaredType::Vector(o) } else { DeclaredType::Matrix(o) })
            }
            other => self.error(format!("unknown type `{other}`")),
        }
    }

    fn decls(&mut self, seen: &mut HashSet<String>) -> Result<Vec<Decl>, FrontendError> {
        let mut out = Vec::new();
        // An empty list is allowed; the list ends at the next keyword or `{`.
        loop {
            match (self.peek(), self.peek2()) {
                (Tok::Ident(_), Tok::Colon) => {}
                _ => {
                    if out.is_empty() {
                        return Ok(out);
                    }
                    return self.error(format!("expected a declaration, found {}", describe(self.peek())));
                }
            }
            if matches!(self.peek(), Tok::Ident(s) if s == "out") && out.is_empty() {
                return Ok(out);
            }
            let name = self.ident("an identifier")?;
            if !seen.insert(name.clone()) {
                return self.error(format!("`{name}` declared twice"));
            }
            self.expect(Tok::Colon, "`:`")?;
            let ty = self.decl_type()?;
            out.push(Decl { name, ty });
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                return Ok(out);
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::add(lhs, rhs);
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.postfix()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.postfix()?;
            lhs = Expr::mul(lhs, rhs);
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::Quote {
            self.bump();
            e = Expr::transpose(e);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                if !self.known.contains(&name) {
                    return Err(FrontendError::Undeclared { name, line: pos.line, col: pos.col });
                }
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            other => self.error(format!("expected an operand, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Colon => "`:`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Semi => "`;`".into(),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Quote => "`'`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses kernel-language source into a [`KernelSpec`].
pub fn parse_kernel(text: &str) -> Result<KernelSpec, FrontendError> {
    let mut p = Parser { toks: lex(text)?, at: 0, known: HashSet::new() };
    let name = p.ident("a kernel name")?;
    let mut seen = HashSet::new();
    p.keyword("in")?;
    let inputs = p.decls(&mut seen)?;
    p.keyword("out")?;
    let outputs = p.decls(&mut seen)?;
    p.expect(Tok::LBrace, "`{`")?;

    p.known.extend(inputs.iter().map(|d| d.name.clone()));
    let mut assigned: HashSet<String> = HashSet::new();
    let mut statements = Vec::new();
    loop {
        match p.peek().clone() {
            Tok::RBrace => {
                p.bump();
                break;
            }
            Tok::Semi => {
                p.bump();
            }
            Tok::Ident(target) => {
                let pos = p.pos();
                p.bump();
                p.expect(Tok::Eq, "`=`")?;
                if inputs.iter().any(|d| d.name == target) {
                    return Err(FrontendError::Syntax {
                        line: pos.line,
                        col: pos.col,
                        message: format!("cannot assign to input `{target}`"),
                    });
                }
                if assigned.contains(&target) {
                    return Err(FrontendError::Syntax {
                        line: pos.line,
                        col: pos.col,
                        message: format!("`{target}` is assigned more than once"),
                    });
                }
                let expr = p.expr()?;
                assigned.insert(target.clone());
                p.known.insert(target.clone());
                statements.push(Statement { target, expr });
            }
            other => return p.error(format!("expected a statement or `}}`, found {}", describe(&other))),
        }
    }
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after kernel body", describe(p.peek())));
    }
    for o in &outputs {
        if !assigned.contains(&o.name) {
            return Err(FrontendError::OutputNotAssigned(o.name.clone()));
        }
    }
    Ok(KernelSpec { name, inputs, outputs, statements })
}
