//! Text format for models.
//!
//! ```text
//! # comments run to the end of the line
//! nonterminal M controlled {
//!   a -> M A;
//!   b -> R2;
//! }
//! nonterminal A probabilistic {
//!   1/2 -> R1;
//!   1/2 -> ;
//! }
//! ```
//!
//! A controlled action may carry its own distribution as a sub-block:
//! `a { 1/2 -> X; 1/2 -> ; }`.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::One;

use crate::error::Error;
use crate::model::{ActionDef, Branch, Definition, Obmdp, SnfObmdp};
use crate::prob::Probability;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(BigInt, BigInt),
    Arrow,
    LBrace,
    RBrace,
    Semi,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<Spanned>, Error> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = content.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let single = match c {
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                ';' => Some(Tok::Semi),
                _ => None,
            };
            if let Some(tok) = single {
                out.push(Spanned { tok, line, column });
                i += 1;
            } else if c == '-' {
                if chars.get(i + 1) == Some(&'>') {
                    out.push(Spanned { tok: Tok::Arrow, line, column });
                    i += 2;
                } else {
                    return Err(err(line, column, "expected `->`"));
                }
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Spanned { tok: Tok::Ident(chars[start..i].iter().collect()), line, column });
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let num: BigInt = chars[start..i].iter().collect::<String>().parse().expect("digits");
                let mut den = BigInt::one();
                if chars.get(i) == Some(&'/') {
                    i += 1;
                    let ds = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    if ds == i {
                        return Err(err(line, i + 1, "expected a denominator after `/`"));
                    }
                    den = chars[ds..i].iter().collect::<String>().parse().expect("digits");
                    if den == BigInt::from(0) {
                        return Err(err(line, ds + 1, "zero denominator"));
                    }
                }
                out.push(Spanned { tok: Tok::Number(num, den), line, column });
            } else {
                return Err(err(line, column, format!("unexpected character `{c}`")));
            }
        }
    }
    Ok(out)
}

struct RawBranch {
    prob: (BigInt, BigInt),
    rhs: Vec<(String, usize, usize)>,
}

enum RawItem {
    Prob(RawBranch),
    Action { name: String, line: usize, column: usize, branches: Vec<RawBranch> },
}

struct RawDecl {
    name: String,
    line: usize,
    column: usize,
    controlled: bool,
    items: Vec<RawItem>,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, Error> {
        let (l, c) = self.here();
        Err(err(l, c, message))
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), Error> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), Error> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let t = self.next().expect("peeked");
                match t.tok {
                    Tok::Ident(s) => Ok((s, t.line, t.column)),
                    _ => unreachable!(),
                }
            }
            _ => self.fail(format!("expected {what}")),
        }
    }

    fn rhs(&mut self) -> Result<Vec<(String, usize, usize)>, Error> {
        let mut rhs = Vec::new();
        while let Some(Tok::Ident(_)) = self.peek() {
            rhs.push(self.ident("a symbol")?);
        }
        self.expect(Tok::Semi, "`;` after rule")?;
        Ok(rhs)
    }

    fn prob_branch(&mut self) -> Result<RawBranch, Error> {
        let prob = match self.next() {
            Some(Spanned { tok: Tok::Number(n, d), .. }) => (n, d),
            _ => {
                self.pos -= 1;
                return self.fail("expected a probability");
            }
        };
        self.expect(Tok::Arrow, "`->`")?;
        Ok(RawBranch { prob, rhs: self.rhs()? })
    }

    fn decl(&mut self) -> Result<RawDecl, Error> {
        match self.ident("`nonterminal`")? {
            (kw, _, _) if kw == "nonterminal" => {}
            (_, l, c) => return Err(err(l, c, "expected `nonterminal`")),
        }
        let (name, line, column) = self.ident("a non-terminal name")?;
        let controlled = match self.ident("`controlled` or `probabilistic`")? {
            (k, _, _) if k == "controlled" => true,
            (k, _, _) if k == "probabilistic" => false,
            (_, l, c) => return Err(err(l, c, "expected `controlled` or `probabilistic`")),
        };
        self.expect(Tok::LBrace, "`{`")?;
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    break;
                }
                None => return self.fail("unterminated block"),
                _ => {}
            }
            if controlled {
                let (action, l, c) = self.ident("an action name")?;
                match self.peek() {
                    Some(Tok::Arrow) => {
                        self.pos += 1;
                        let rhs = self.rhs()?;
                        let one = (BigInt::one(), BigInt::one());
                        items.push(RawItem::Action {
                            name: action,
                            line: l,
                            column: c,
                            branches: vec![RawBranch { prob: one, rhs }],
                        });
                    }
                    Some(Tok::LBrace) => {
                        self.pos += 1;
                        let mut branches = Vec::new();
                        while self.peek() != Some(&Tok::RBrace) {
                            if self.peek().is_none() {
                                return self.fail("unterminated action block");
                            }
                            branches.push(self.prob_branch()?);
                        }
                        self.pos += 1;
                        items.push(RawItem::Action { name: action, line: l, column: c, branches });
                    }
                    _ => return self.fail("expected `->` or `{` after action name"),
                }
            } else {
                items.push(RawItem::Prob(self.prob_branch()?));
            }
        }
        Ok(RawDecl { name, line, column, controlled, items })
    }
}

/// Parses and validates a model.
pub fn parse_obmdp<P: Probability>(text: &str) -> Result<Obmdp<P>, Error> {
    let m = parse_unchecked(text)?;
    let diags = m.validate();
    if diags.is_empty() {
        Ok(m)
    } else {
        Err(Error::Invalid(diags))
    }
}

/// Parses an SNF-shaped model.
pub fn parse_snf<P: Probability>(text: &str) -> Result<SnfObmdp<P>, Error> {
    SnfObmdp::from_obmdp(&parse_obmdp(text)?)
}

/// Parses a model, resolving names but skipping probability validation.
pub fn parse_unchecked<P: Probability>(text: &str) -> Result<Obmdp<P>, Error> {
    let toks = lex(text)?;
    let end = (text.lines().count().max(1), 1);
    let mut p = Parser { toks, pos: 0, end };
    let mut decls = Vec::new();
    while p.peek().is_some() {
        decls.push(p.decl()?);
    }
    let mut names: Vec<String> = Vec::new();
    for d in &decls {
        if names.contains(&d.name) {
            return Err(err(d.line, d.column, format!("non-terminal `{}` declared twice", d.name)));
        }
        names.push(d.name.clone());
    }
    let lookup = |(s, l, c): &(String, usize, usize)| {
        names
            .iter()
            .position(|n| n == s)
            .map(crate::model::NtId::new)
            .ok_or_else(|| err(*l, *c, format!("undeclared symbol `{s}`")))
    };
    let branch = |b: &RawBranch| -> Result<Branch<P>, Error> {
        Ok(Branch {
            prob: P::from_ratio(&b.prob.0, &b.prob.1),
            rhs: b.rhs.iter().map(lookup).collect::<Result<_, _>>()?,
        })
    };
    let mut defs = Vec::with_capacity(decls.len());
    for d in &decls {
        if d.controlled {
            let mut acts: Vec<ActionDef<P>> = Vec::new();
            for item in &d.items {
                if let RawItem::Action { name, line, column, branches } = item {
                    if acts.iter().any(|a| &a.name == name) {
                        return Err(err(*line, *column, format!("action `{name}` declared twice")));
                    }
                    let branches = branches.iter().map(branch).collect::<Result<_, _>>()?;
                    acts.push(ActionDef { name: name.clone(), branches });
                }
            }
            defs.push(Definition::Controlled(acts));
        } else {
            let mut bs = Vec::new();
            for item in &d.items {
                if let RawItem::Prob(b) = item {
                    bs.push(branch(b)?);
                }
            }
            defs.push(Definition::Probabilistic(bs));
        }
    }
    Obmdp::new_unchecked(names, defs)
}

fn write_branch<P: Probability>(out: &mut String, m: &Obmdp<P>, b: &Branch<P>) {
    let _ = write!(out, "{} ->", b.prob.to_rational());
    for s in &b.rhs {
        let _ = write!(out, " {}", m.name(*s));
    }
    out.push(';');
}

/// Writes a model in the text format; parsing the output gives the same model.
pub fn serialize_obmdp<P: Probability>(m: &Obmdp<P>) -> String {
    let mut out = String::new();
    for id in m.ids() {
        let def = m.definition(id);
        let kind = if def.is_controlled() { "controlled" } else { "probabilistic" };
        let _ = writeln!(out, "nonterminal {} {} {{", m.name(id), kind);
        match def {
            Definition::Probabilistic(bs) => {
                for b in bs {
                    out.push_str("  ");
                    write_branch(&mut out, m, b);
                    out.push('\n');
                }
            }
            Definition::Controlled(acts) => {
                for a in acts {
                    if a.branches.len() == 1 && a.branches[0].prob.is_unit() {
                        let _ = write!(out, "  {} ->", a.name);
                        for s in &a.branches[0].rhs {
                            let _ = write!(out, " {}", m.name(*s));
                        }
                        out.push_str(";\n");
                    } else {
                        let _ = write!(out, "  {} {{", a.name);
                        for b in &a.branches {
                            out.push(' ');
                            write_branch(&mut out, m, b);
                        }
                        out.push_str(" }\n");
                    }
                }
            }
        }
        out.push_str("}\n");
    }
    out
}

pub fn serialize_snf<P: Probability>(m: &SnfObmdp<P>) -> String {
    serialize_obmdp(&m.to_obmdp())
}

#[cfg(test)]
mod tests {
    use num_rational::BigRational;

    use super::*;
    use crate::model::FormKind;

    const EX1: &str = "
# the running example
nonterminal M controlled { a -> M A; b -> R2; }
nonterminal A probabilistic { 1/2 -> R1; 1/2 -> ; }
nonterminal R1 probabilistic { 1 -> ; }
nonterminal R2 probabilistic { 1 -> ; }
";

    #[test]
    fn parses_example() {
        let m: Obmdp = parse_obmdp(EX1).unwrap();
        assert_eq!(m.names(), ["M", "A", "R1", "R2"]);
        let a = m.id("A").unwrap();
        match m.definition(a) {
            Definition::Probabilistic(bs) => {
                assert_eq!(bs.len(), 2);
                assert!(bs[1].rhs.is_empty());
            }
            _ => panic!("A is probabilistic"),
        }
    }

    #[test]
    fn round_trips() {
        let m: Obmdp = parse_obmdp(EX1).unwrap();
        let text = serialize_obmdp(&m);
        let again: Obmdp = parse_obmdp(&text).unwrap();
        assert_eq!(m, again);
        assert_eq!(text, serialize_obmdp(&again));
    }

    #[test]
    fn action_sub_blocks() {
        let text = "nonterminal M controlled { a { 1/2 -> M; 1/2 -> ; } b -> ; }";
        let m: Obmdp = parse_obmdp(text).unwrap();
        match m.definition(m.id("M").unwrap()) {
            Definition::Controlled(acts) => {
                assert_eq!(acts[0].branches.len(), 2);
                assert_eq!(acts[1].branches[0].rhs.len(), 0);
            }
            _ => panic!(),
        }
        let again: Obmdp = parse_obmdp(&serialize_obmdp(&m)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn undeclared_symbol_reports_position() {
        let e = parse_obmdp::<BigRational>("nonterminal A probabilistic {\n  1 -> B;\n}").unwrap_err();
        match e {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 8)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_sum_is_a_diagnostic() {
        let e = parse_obmdp::<BigRational>("nonterminal A probabilistic { 1/2 -> ; 1/3 -> ; }").unwrap_err();
        match e {
            Error::Invalid(d) => assert_eq!(d.len(), 1),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_rule_set_is_a_diagnostic() {
        let e = parse_obmdp::<BigRational>("nonterminal A probabilistic { }").unwrap_err();
        assert!(matches!(e, Error::Invalid(d) if d.len() == 1));
    }

    #[test]
    fn duplicate_action_is_a_parse_error() {
        let e = parse_obmdp::<BigRational>("nonterminal M controlled { a -> ; a -> ; }").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn float_scalar_parses_too() {
        let m: Obmdp<f64> = parse_obmdp(EX1).unwrap();
        let a = m.id("A").unwrap();
        match m.definition(a) {
            Definition::Probabilistic(bs) => assert_eq!(bs[0].prob, 0.5),
            _ => panic!(),
        }
    }

    #[test]
    fn snf_reading_of_snf_shaped_text() {
        let text = "
nonterminal M controlled { a -> T; b -> R; }
nonterminal T probabilistic { 1 -> M R; }
nonterminal R probabilistic { 1 -> ; }
";
        let m: SnfObmdp = parse_snf(text).unwrap();
        assert_eq!(m.kind(m.id("M").unwrap()), FormKind::Controlled);
        assert_eq!(m.kind(m.id("T").unwrap()), FormKind::Branching);
        assert_eq!(m.kind(m.id("R").unwrap()), FormKind::Linear);
        assert!(parse_snf::<BigRational>(EX1).is_err());
    }
}
