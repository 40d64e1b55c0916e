//! Closed-form polynomial expressions such as `"zbar1*X + 0.5*zbar1^2*Y"`.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' integer)?
//! primary := number | identifier | '(' expr ')'
//! ```
//!
//! Identifiers are basis names of the algebra, the coordinates `z1, zbar1, z2, zbar2`
//! (`z`, `zbar` in one variable) and the imaginary unit `i`.

use num_complex::Complex64 as C64;

use crate::lie::LieAlgebra;
use crate::poly::{z_slot, zbar_slot, LiePoly, ScalarPoly};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(s: &str) -> Result<Vec<Tok>, String> {
    let cs: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.') {
                i += 1;
            }
            if i < cs.len() && (cs[i] == 'e' || cs[i] == 'E') {
                let mut j = i + 1;
                if j < cs.len() && (cs[j] == '+' || cs[j] == '-') {
                    j += 1;
                }
                if j < cs.len() && cs[j].is_ascii_digit() {
                    i = j;
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = cs[start..i].iter().collect();
            out.push(Tok::Num(text.parse().map_err(|_| format!("bad number '{text}'"))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(cs[start..i].iter().collect()));
        } else if "+-*^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(format!("unexpected character '{c}'"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Val {
    Scalar(ScalarPoly),
    Lie(LiePoly),
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    g: &'a LieAlgebra,
    n: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Val, String> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = add(acc, self.term()?)?;
            } else if self.eat('-') {
                acc = add(acc, neg(self.term()?))?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Val, String> {
        let mut acc = self.unary()?;
        while self.eat('*') {
            acc = mul(acc, self.unary()?)?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Val, String> {
        if self.eat('-') {
            return Ok(neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Val, String> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let k = match self.toks.get(self.pos) {
            Some(Tok::Num(x)) if x.fract() == 0.0 && *x >= 0.0 && *x <= 64.0 => *x as u32,
            _ => return Err("exponent must be a small non-negative integer".into()),
        };
        self.pos += 1;
        match base {
            Val::Scalar(p) => Ok(Val::Scalar(p.pow(k))),
            Val::Lie(_) => Err("powers of algebra elements are not defined".into()),
        }
    }

    fn primary(&mut self) -> Result<Val, String> {
        let tok = self.toks.get(self.pos).cloned().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Tok::Num(x) => Ok(Val::Scalar(ScalarPoly::constant(C64::new(x, 0.0)))),
            Tok::Op('(') => {
                let v = self.expr()?;
                if !self.eat(')') {
                    return Err("missing ')'".into());
                }
                Ok(v)
            }
            Tok::Op(c) => Err(format!("unexpected '{c}'")),
            Tok::Ident(name) => self.ident(&name),
        }
    }

    fn ident(&self, name: &str) -> Result<Val, String> {
        if let Some(k) = self.g.index_of(name) {
            let mut v = vec![C64::new(0.0, 0.0); self.g.dim()];
            v[k] = C64::new(1.0, 0.0);
            return Ok(Val::Lie(LiePoly::constant(v)));
        }
        let one = C64::new(1.0, 0.0);
        let coord = |slot: usize| {
            let mut e = [0u8; 4];
            e[slot] = 1;
            Ok(Val::Scalar(ScalarPoly::monomial(e, one)))
        };
        let plane = |s: &str| -> Result<usize, String> {
            let p: usize = s.parse().map_err(|_| format!("unknown identifier '{name}'"))?;
            if p == 0 || p > self.n {
                return Err(format!("coordinate '{name}' needs n >= {p}, domain has n = {}", self.n));
            }
            Ok(p)
        };
        match name {
            "i" => Ok(Val::Scalar(ScalarPoly::constant(C64::i()))),
            "z" if self.n == 1 => coord(z_slot(1)),
            "zbar" if self.n == 1 => coord(zbar_slot(1)),
            _ => {
                if let Some(rest) = name.strip_prefix("zbar") {
                    coord(zbar_slot(plane(rest)?))
                } else if let Some(rest) = name.strip_prefix('z') {
                    coord(z_slot(plane(rest)?))
                } else {
                    Err(format!("unknown identifier '{name}'"))
                }
            }
        }
    }
}

fn neg(v: Val) -> Val {
    let m = C64::new(-1.0, 0.0);
    match v {
        Val::Scalar(p) => Val::Scalar(p.scale(m)),
        Val::Lie(p) => Val::Lie(p.scale(m)),
    }
}

fn add(a: Val, b: Val) -> Result<Val, String> {
    match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(x.add(&y))),
        (Val::Lie(x), Val::Lie(y)) => Ok(Val::Lie(x.add(&y))),
        (Val::Scalar(s), Val::Lie(l)) | (Val::Lie(l), Val::Scalar(s)) if s.is_zero() => Ok(Val::Lie(l)),
        _ => Err("cannot add a scalar to an algebra-valued term".into()),
    }
}

fn mul(a: Val, b: Val) -> Result<Val, String> {
    match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(x.mul(&y))),
        (Val::Scalar(s), Val::Lie(l)) | (Val::Lie(l), Val::Scalar(s)) => Ok(Val::Lie(l.mul_scalar(&s))),
        (Val::Lie(_), Val::Lie(_)) => Err("product of two algebra elements; write the bracket out explicitly".into()),
    }
}

/// Parses an algebra-valued polynomial in `n` complex variables.
pub fn parse_poly(src: &str, g: &LieAlgebra, n: usize) -> Result<LiePoly, String> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err("empty expression".into());
    }
    let mut p = Parser { toks, pos: 0, g, n };
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(format!("trailing input after token {}", p.pos));
    }
    match v {
        Val::Lie(l) => Ok(l),
        Val::Scalar(s) if s.is_zero() => Ok(LiePoly::zero(g.dim())),
        Val::Scalar(_) => Err("expression has no algebra-valued factor".into()),
    }
}
