//! Canonical text form of variables and properties.
//!
//! ```text
//! var    := "tx." field | "fn." name | "ev." Event "[" n "]." name
//!         | loc "@" point | "Δ" loc "@[" point "," point "]"
//! loc    := "state." label seg* | "token[" key "][" key "]"
//!         | "SUM(state." label ")" | "SUM(token[" key "])"
//! seg    := "[" key "]" | "[#" n "]" | "." name
//! key    := hex | var
//! prop   := var " == " var | var " <= " var | var " >= " var
//!         | var " == -" var | var " == " int
//!         | var " ∈ " var ("[*]." name)?
//!         | term (" + " | " - ") term ... " == " int
//!         | var " * " var " == " int
//! term   := (n "*")? var
//! int    := "-"? (decimal | hex)
//! ```
//!
//! Concrete keys render as shortest hex; integer constants render in decimal
//! below 2^64 and in hex above.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};

use crate::error::PropertyParseError;
use crate::property::var::{Key, Loc, Seg, TxField, VarRef};
use crate::property::{CmpOp, Property};
use crate::trace::RecordPoint;
use crate::word::Word;

pub fn render_int(v: &BigInt) -> String {
    if v.abs().to_u64().is_some() {
        v.to_string()
    } else {
        let sign = if v.is_negative() { "-" } else { "" };
        format!("{sign}0x{}", v.abs().to_str_radix(16))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Concrete(w) => f.write_str(&w.to_compact_hex()),
            Key::Symbolic(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::State { label, path } => {
                write!(f, "state.{label}")?;
                for seg in path {
                    match seg {
                        Seg::Key(k) => write!(f, "[{k}]")?,
                        Seg::Index(i) => write!(f, "[#{i}]")?,
                        Seg::Field(n) => write!(f, ".{n}")?,
                    }
                }
                Ok(())
            }
            Loc::Token { token, holder } => write!(f, "token[{token}][{holder}]"),
            Loc::Sum { label } => write!(f, "SUM(state.{label})"),
            Loc::TokenSum { token } => write!(f, "SUM(token[{token}])"),
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRef::Tx(field) => write!(f, "tx.{}", field.name()),
            VarRef::Param(n) => write!(f, "fn.{n}"),
            VarRef::Event {
                event,
                occurrence,
                param,
            } => write!(f, "ev.{event}[{occurrence}].{param}"),
            VarRef::At { loc, point } => write!(f, "{loc}@{point}"),
            VarRef::Delta { loc, from, to } => write!(f, "Δ{loc}@[{from},{to}]"),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Compare { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Property::Negation { lhs, rhs } => write!(f, "{lhs} == -{rhs}"),
            Property::ConstEq { var, value } => write!(f, "{var} == {}", render_int(value)),
            Property::Membership { elem, array, field } => match field {
                Some(m) => write!(f, "{elem} ∈ {array}[*].{m}"),
                None => write!(f, "{elem} ∈ {array}"),
            },
            Property::Linear { terms, constant } => {
                for (i, (c, v)) in terms.iter().enumerate() {
                    let mag = c.abs();
                    if i == 0 {
                        if c.is_negative() {
                            f.write_str("-")?;
                        }
                    } else if c.is_negative() {
                        f.write_str(" - ")?;
                    } else {
                        f.write_str(" + ")?;
                    }
                    if mag.is_one() {
                        write!(f, "{v}")?;
                    } else {
                        write!(f, "{}*{v}", render_int(&mag))?;
                    }
                }
                write!(f, " == {}", render_int(constant))
            }
            Property::Quadratic { x, y, product } => {
                write!(f, "{x} * {y} == {}", render_int(product))
            }
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

type PResult<T> = Result<T, String>;

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> PResult<()> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(format!("expected {lit:?} at {:?}", self.rest()))
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let rest = self.rest();
        let end = rest.find(|c: char| !pred(c)).unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn ident(&mut self, dotted: bool) -> PResult<String> {
        let s = self.take_while(|c| {
            c.is_ascii_alphanumeric() || c == '_' || c == '$' || (dotted && c == '.')
        });
        if s.is_empty() {
            Err(format!("expected a name at {:?}", self.rest()))
        } else {
            Ok(s.to_string())
        }
    }

    fn number(&mut self) -> PResult<u64> {
        let s = self.take_while(|c| c.is_ascii_digit());
        s.parse()
            .map_err(|_| format!("expected a number at {:?}", self.rest()))
    }

    fn point(&mut self) -> PResult<RecordPoint> {
        let s = self.take_while(|c| c.is_ascii_alphanumeric() || c == '#');
        s.parse()
    }

    fn key(&mut self) -> PResult<Key> {
        if self.rest().starts_with("0x") {
            let s = self.take_while(|c| c.is_ascii_alphanumeric());
            let w: Word = s.parse().map_err(|e| format!("{e}"))?;
            Ok(Key::Concrete(w))
        } else {
            let v = self.var()?;
            if !v.is_entry() {
                return Err(format!("symbolic key {v} must name an entry or log scalar"));
            }
            Ok(Key::Symbolic(Box::new(v)))
        }
    }

    fn loc(&mut self) -> PResult<Loc> {
        if self.eat("state.") {
            let label = self.ident(false)?;
            let mut path = Vec::new();
            loop {
                if self.eat("[#") {
                    path.push(Seg::Index(self.number()?));
                    self.expect("]")?;
                } else if self.rest().starts_with("[*]") {
                    break;
                } else if self.eat("[") {
                    path.push(Seg::Key(self.key()?));
                    self.expect("]")?;
                } else if self.eat(".") {
                    path.push(Seg::Field(self.ident(false)?));
                } else {
                    break;
                }
            }
            Ok(Loc::State { label, path })
        } else if self.eat("token[") {
            let token = self.key()?;
            self.expect("][")?;
            let holder = self.key()?;
            self.expect("]")?;
            Ok(Loc::Token { token, holder })
        } else if self.eat("SUM(state.") {
            let label = self.ident(false)?;
            self.expect(")")?;
            Ok(Loc::Sum { label })
        } else if self.eat("SUM(token[") {
            let token = self.key()?;
            self.expect("])")?;
            Ok(Loc::TokenSum { token })
        } else {
            Err(format!("expected a storage location at {:?}", self.rest()))
        }
    }

    fn var(&mut self) -> PResult<VarRef> {
        if self.eat("tx.") {
            let name = self.ident(false)?;
            TxField::ALL
                .into_iter()
                .find(|f| f.name() == name)
                .map(VarRef::Tx)
                .ok_or_else(|| format!("unknown transaction field {name:?}"))
        } else if self.eat("fn.") {
            Ok(VarRef::Param(self.ident(true)?))
        } else if self.eat("ev.") {
            let event = self.ident(false)?;
            self.expect("[")?;
            let occurrence = u32::try_from(self.number()?).map_err(|e| e.to_string())?;
            self.expect("].")?;
            let param = self.ident(true)?;
            Ok(VarRef::Event {
                event,
                occurrence,
                param,
            })
        } else if self.eat("Δ") {
            let loc = self.loc()?;
            self.expect("@[")?;
            let from = self.point()?;
            self.expect(",")?;
            let to = self.point()?;
            self.expect("]")?;
            Ok(VarRef::Delta { loc, from, to })
        } else {
            let loc = self.loc()?;
            self.expect("@")?;
            let point = self.point()?;
            Ok(VarRef::At { loc, point })
        }
    }
}

impl FromStr for VarRef {
    type Err = PropertyParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: String| PropertyParseError {
            text: s.to_string(),
            reason,
        };
        let mut c = Cursor::new(s);
        let v = c.var().map_err(fail)?;
        if !c.rest().is_empty() {
            return Err(fail(format!("trailing input {:?}", c.rest())));
        }
        Ok(v)
    }
}

fn parse_var_token(tok: &str) -> PResult<VarRef> {
    let mut c = Cursor::new(tok);
    let v = c.var()?;
    if !c.rest().is_empty() {
        return Err(format!("trailing input {:?}", c.rest()));
    }
    Ok(v)
}

fn parse_int(tok: &str) -> PResult<BigInt> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, tok),
    };
    let mag = if let Some(h) = body.strip_prefix("0x") {
        BigInt::parse_bytes(h.as_bytes(), 16)
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        BigInt::parse_bytes(body.as_bytes(), 10)
    } else {
        None
    };
    let mag = mag.ok_or_else(|| format!("expected an integer, found {tok:?}"))?;
    Ok(if neg { -mag } else { mag })
}

fn looks_numeric(tok: &str) -> bool {
    let body = tok.strip_prefix('-').unwrap_or(tok);
    body.starts_with(|c: char| c.is_ascii_digit())
}

fn parse_term(tok: &str) -> PResult<(BigInt, VarRef)> {
    match tok.split_once('*') {
        Some((c, v)) if looks_numeric(c) => Ok((parse_int(c)?, parse_var_token(v)?)),
        _ => match tok.strip_prefix('-') {
            Some(v) => Ok((BigInt::from(-1), parse_var_token(v)?)),
            None => Ok((BigInt::from(1), parse_var_token(tok)?)),
        },
    }
}

fn parse_property(s: &str) -> PResult<Property> {
    let toks: Vec<&str> = s.split(' ').collect();
    let non_canonical = || "operands are not in canonical order".to_string();
    match toks.as_slice() {
        [a, "∈", b] => {
            let elem = parse_var_token(a)?;
            let (array_txt, field) = match b.split_once("[*].") {
                Some((arr, m)) => (arr, Some(m.to_string())),
                None => (*b, None),
            };
            Ok(Property::membership(
                elem,
                parse_var_token(array_txt)?,
                field,
            ))
        }
        [a, op @ ("==" | "<=" | ">="), b] => {
            let lhs = parse_var_token(a)?;
            if *op == "==" && looks_numeric(b) {
                return Ok(Property::const_eq(lhs, parse_int(b)?));
            }
            if *op == "==" {
                if let Some(neg) = b.strip_prefix('-') {
                    return Property::negation(lhs, parse_var_token(neg)?)
                        .ok_or_else(non_canonical);
                }
            }
            let op = match *op {
                "==" => CmpOp::Eq,
                "<=" => CmpOp::Le,
                _ => CmpOp::Ge,
            };
            Property::compare(lhs, op, parse_var_token(b)?).ok_or_else(non_canonical)
        }
        [x, "*", y, "==", a] => {
            Property::quadratic(parse_var_token(x)?, parse_var_token(y)?, parse_int(a)?)
                .ok_or_else(non_canonical)
        }
        [first, rest @ ..] if rest.len() >= 4 && rest.len() % 2 == 0 => {
            let (eq, tail) = rest.split_at(rest.len() - 2);
            if tail[0] != "==" {
                return Err("expected \"==\" before the constant".into());
            }
            let mut terms = vec![parse_term(first)?];
            for pair in eq.chunks(2) {
                let (c, v) = parse_term(pair[1])?;
                match pair[0] {
                    "+" => terms.push((c, v)),
                    "-" => terms.push((-c, v)),
                    other => return Err(format!("expected + or -, found {other:?}")),
                }
            }
            Property::linear(terms, parse_int(tail[1])?)
                .ok_or_else(|| "degenerate linear relation".into())
        }
        _ => Err("unrecognised property shape".into()),
    }
}

impl FromStr for Property {
    type Err = PropertyParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p = parse_property(s).map_err(|reason| PropertyParseError {
            text: s.to_string(),
            reason,
        })?;
        if p.to_string() != s {
            return Err(PropertyParseError {
                text: s.to_string(),
                reason: format!("not in canonical form; canonical text is {p}"),
            });
        }
        Ok(p)
    }
}
