//! Lexer and recursive-descent parser for surface files.
//!
//! ```text
//! surface NAME { n = INT; m = INT; params = [id, ...]; chart = [[lo, hi], ...]; }
//! x[β] = EXPR;   y[β] = EXPR;   t = EXPR;
//! ```
//! `#` starts a comment that runs to the end of the line.

use std::collections::HashMap;

use super::{Expr, Func, Immersion};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Syntax { line, col, msg: msg.into() }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - s;
            out.push(Token { tok: Tok::Ident(chars[s..i].iter().collect()), line, col: start_col });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[s..i].iter().collect();
            col += i - s;
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(line, start_col, format!("malformed number `{text}`")))?;
            out.push(Token { tok: Tok::Num(v), line, col: start_col });
            continue;
        }
        if "{}[]();,=+-*/^".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line, col });
            i += 1;
            col += 1;
            continue;
        }
        return Err(syntax(line, col, format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    params: HashMap<String, usize>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(v) => format!("number {v}"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<Token> {
        let t = self.next();
        if t.tok != Tok::Sym(c) {
            return Err(syntax(t.line, t.col, format!("expected `{c}`, found {}", Self::describe(&t.tok))));
        }
        Ok(t)
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn expect_ident(&mut self) -> Result<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => Err(syntax(t.line, t.col, format!("expected identifier, found {}", Self::describe(other)))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Token> {
        let (s, t) = self.expect_ident()?;
        if s != kw {
            return Err(syntax(t.line, t.col, format!("expected `{kw}`, found `{s}`")));
        }
        Ok(t)
    }

    fn expect_uint(&mut self) -> Result<(usize, Token)> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e6 => Ok((v as usize, t)),
            ref other => Err(syntax(t.line, t.col, format!("expected integer, found {}", Self::describe(other)))),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.is_sym('+') {
                self.next();
                lhs = lhs.add(self.term()?);
            } else if self.is_sym('-') {
                self.next();
                lhs = lhs.sub(self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.is_sym('*') {
                self.next();
                lhs = lhs.mul(self.unary()?);
            } else if self.is_sym('/') {
                self.next();
                lhs = lhs.div(self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if self.is_sym('-') {
            self.next();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    // power := atom ('^' exponent)*
    fn power(&mut self) -> Result<Expr> {
        let mut base = self.atom()?;
        while self.is_sym('^') {
            self.next();
            base = base.pow(self.exponent()?);
        }
        Ok(base)
    }

    // exponent := ['-'] INT | '(' ['-'] INT ')'
    fn exponent(&mut self) -> Result<i32> {
        let paren = self.is_sym('(');
        if paren {
            self.next();
        }
        let neg = self.is_sym('-');
        if neg {
            self.next();
        }
        let t = self.next();
        let k = match t.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= 1024.0 => v as i32,
            ref other => {
                return Err(syntax(t.line, t.col, format!("exponent must be an integer, found {}", Self::describe(other))))
            }
        };
        if paren {
            self.expect_sym(')')?;
        }
        Ok(if neg { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(ref name) => {
                if self.is_sym('(') {
                    let f = Func::from_name(name)
                        .ok_or_else(|| syntax(t.line, t.col, format!("unknown function `{name}`")))?;
                    self.next();
                    let arg = self.expr()?;
                    self.expect_sym(')')?;
                    return Ok(Expr::call(f, arg));
                }
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                match self.params.get(name) {
                    Some(&i) => Ok(Expr::Param(i)),
                    None if Func::from_name(name).is_some() => {
                        Err(syntax(t.line, t.col, format!("function `{name}` needs an argument")))
                    }
                    None => Err(Error::UndeclaredParameter { name: name.clone(), line: t.line, col: t.col }),
                }
            }
            ref other => Err(syntax(t.line, t.col, format!("expected expression, found {}", Self::describe(other)))),
        }
    }

    /// A parameter-free expression evaluated immediately (chart bounds).
    fn constant(&mut self) -> Result<f64> {
        let t = self.peek().clone();
        let saved = std::mem::take(&mut self.params);
        let e = self.expr();
        self.params = saved;
        let e = e.map_err(|err| match err {
            Error::UndeclaredParameter { name, line, col } => {
                syntax(line, col, format!("chart bounds must be constants, found `{name}`"))
            }
            other => other,
        })?;
        let v = e.eval::<f64>(&[]).map_err(|err| syntax(t.line, t.col, err.to_string()))?;
        if !v.is_finite() {
            return Err(syntax(t.line, t.col, "chart bound is not finite"));
        }
        Ok(v)
    }
}

pub fn parse(src: &str) -> Result<Immersion> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, params: HashMap::new() };
    p.expect_keyword("surface")?;
    let (label, _) = p.expect_ident()?;
    p.expect_sym('{')?;

    let mut n: Option<(usize, Token)> = None;
    let mut m: Option<(usize, Token)> = None;
    let mut params: Option<(Vec<String>, Token)> = None;
    let mut chart: Option<(Vec<(f64, f64)>, Token)> = None;
    while !p.is_sym('}') {
        let (key, kt) = p.expect_ident()?;
        let dup = match key.as_str() {
            "n" => n.is_some(),
            "m" => m.is_some(),
            "params" => params.is_some(),
            "chart" => chart.is_some(),
            _ => return Err(syntax(kt.line, kt.col, format!("unknown header field `{key}`"))),
        };
        if dup {
            return Err(syntax(kt.line, kt.col, format!("header field `{key}` given twice")));
        }
        p.expect_sym('=')?;
        match key.as_str() {
            "n" | "m" => {
                let (v, vt) = p.expect_uint()?;
                if v == 0 {
                    return Err(syntax(vt.line, vt.col, format!("`{key}` must be positive")));
                }
                if key == "n" {
                    n = Some((v, vt));
                } else {
                    m = Some((v, vt));
                }
            }
            "params" => {
                let open = p.expect_sym('[')?;
                let mut names: Vec<String> = Vec::new();
                while !p.is_sym(']') {
                    let (name, nt) = p.expect_ident()?;
                    if name == "pi" || Func::from_name(&name).is_some() {
                        return Err(syntax(nt.line, nt.col, format!("`{name}` is reserved")));
                    }
                    if names.contains(&name) {
                        return Err(syntax(nt.line, nt.col, format!("parameter `{name}` declared twice")));
                    }
                    names.push(name);
                    if !p.is_sym(']') {
                        p.expect_sym(',')?;
                    }
                }
                p.expect_sym(']')?;
                params = Some((names, open));
            }
            _ => {
                let open = p.expect_sym('[')?;
                let mut boxes = Vec::new();
                while !p.is_sym(']') {
                    let bt = p.expect_sym('[')?;
                    let lo = p.constant()?;
                    p.expect_sym(',')?;
                    let hi = p.constant()?;
                    p.expect_sym(']')?;
                    if lo >= hi {
                        return Err(syntax(bt.line, bt.col, "chart interval must have lo < hi"));
                    }
                    boxes.push((lo, hi));
                    if !p.is_sym(']') {
                        p.expect_sym(',')?;
                    }
                }
                p.expect_sym(']')?;
                chart = Some((boxes, open));
            }
        }
        p.expect_sym(';')?;
    }
    let close = p.expect_sym('}')?;
    let missing = |f: &str| syntax(close.line, close.col, format!("header is missing `{f}`"));
    let (n, _) = n.ok_or_else(|| missing("n"))?;
    let (m, mt) = m.ok_or_else(|| missing("m"))?;
    let (names, pt) = params.ok_or_else(|| missing("params"))?;
    let (boxes, ct) = chart.ok_or_else(|| missing("chart"))?;
    if m > n {
        return Err(Error::DimensionMismatch { line: mt.line, col: mt.col, msg: format!("m = {m} exceeds n = {n}") });
    }
    if names.len() != 2 * m + 1 {
        return Err(Error::DimensionMismatch {
            line: pt.line,
            col: pt.col,
            msg: format!("{} parameters declared, 2m+1 = {} required", names.len(), 2 * m + 1),
        });
    }
    if boxes.len() != names.len() {
        return Err(Error::DimensionMismatch {
            line: ct.line,
            col: ct.col,
            msg: format!("{} chart intervals for {} parameters", boxes.len(), names.len()),
        });
    }
    p.params = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();

    let mut coords: Vec<Option<Expr>> = vec![None; 2 * n + 1];
    while p.peek().tok != Tok::Eof {
        let (name, nt) = p.expect_ident()?;
        let slot = match name.as_str() {
            "x" | "y" => {
                p.expect_sym('[')?;
                let (b, bt) = p.expect_uint()?;
                p.expect_sym(']')?;
                if b == 0 || b > n {
                    return Err(Error::DimensionMismatch {
                        line: bt.line,
                        col: bt.col,
                        msg: format!("index {b} outside 1..={n}"),
                    });
                }
                if name == "x" {
                    b - 1
                } else {
                    n + b - 1
                }
            }
            "t" => 2 * n,
            _ => return Err(syntax(nt.line, nt.col, format!("expected `x[..]`, `y[..]` or `t`, found `{name}`"))),
        };
        if coords[slot].is_some() {
            return Err(Error::DimensionMismatch {
                line: nt.line,
                col: nt.col,
                msg: format!("coordinate `{name}` assigned twice"),
            });
        }
        p.expect_sym('=')?;
        let e = p.expr()?;
        p.expect_sym(';')?;
        coords[slot] = Some(e);
    }
    let eof = p.peek().clone();
    let mut out = Vec::with_capacity(2 * n + 1);
    for (i, c) in coords.into_iter().enumerate() {
        match c {
            Some(e) => out.push(e),
            None => {
                let name = if i < n {
                    format!("x[{}]", i + 1)
                } else if i < 2 * n {
                    format!("y[{}]", i - n + 1)
                } else {
                    "t".into()
                };
                return Err(Error::DimensionMismatch {
                    line: eof.line,
                    col: eof.col,
                    msg: format!("coordinate `{name}` is never assigned"),
                });
            }
        }
    }
    Ok(Immersion { label, n, m, params: names, chart: boxes, coords: out })
}
