//! Boolean combinations of qualitative reachability and non-reachability
//! objectives, for the fragments that reduce to single-objective questions.
//!
//! Queries are written in a small expression language:
//!
//! ```text
//! formula := conj ('|' conj)*
//! conj    := unit ('&' unit)*
//! unit    := '(' formula ')' | ['lim'] (P '[' event ']' | atom) cmp
//! event   := boolean expression over atoms with '&', '|' and parentheses
//! atom    := 'R(' name ')' | 'NR(' name ')'
//! cmp     := ('=' | '<' | '>') ('0' | '1')
//! ```
//!
//! `P` may also be written `Pr`, and `&&`, `||` are accepted for `&`, `|`.
//! Inside `P[...]` the connectives combine events; outside they combine
//! statements about one and the same strategy.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::DependencyGraph;
use crate::model::{NtId, SnfForm, SnfObmdp, TargetSet};
use crate::multi::{almost_sure_sets, limit_sure_sets, zero_bounds, zero_sets, Mode};
use crate::prob::Probability;
use crate::sets::{NodeSet, Subset};
use crate::single::{avoid_set, positive_reach_set, sub_one_reach_set, sub_one_reach_set_of, ChoiceSet};
use crate::strategy::{Controller, StrategySpec, Trigger};
use crate::synth::{almost_sure_witness, positive_witness};

/// `R(T)` is the event that the play contains `T`; `NR(T)` its complement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    Reach(String),
    NonReach(String),
}

impl Atom {
    pub fn name(&self) -> &str {
        match self {
            Atom::Reach(n) | Atom::NonReach(n) => n,
        }
    }

    pub fn negated(&self) -> Atom {
        match self {
            Atom::Reach(n) => Atom::NonReach(n.clone()),
            Atom::NonReach(n) => Atom::Reach(n.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rel {
    Lt,
    Eq,
    Gt,
}

impl Rel {
    fn flipped(self) -> Rel {
        match self {
            Rel::Lt => Rel::Gt,
            Rel::Eq => Rel::Eq,
            Rel::Gt => Rel::Lt,
        }
    }
}

/// A comparison of a probability with 0 or 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cmp {
    pub rel: Rel,
    pub one: bool,
}

impl Cmp {
    pub const EQ0: Cmp = Cmp { rel: Rel::Eq, one: false };
    pub const EQ1: Cmp = Cmp { rel: Rel::Eq, one: true };
    pub const LT1: Cmp = Cmp { rel: Rel::Lt, one: true };
    pub const GT0: Cmp = Cmp { rel: Rel::Gt, one: false };

    /// The comparison that holds for the complementary event.
    pub fn complement(self) -> Cmp {
        Cmp { rel: self.rel.flipped(), one: !self.one }
    }

    /// Whether the comparison holds for a probability that is exactly 1 (or 0).
    pub fn holds_for(self, prob_is_one: bool) -> bool {
        match (self.rel, self.one) {
            (Rel::Eq, one) => one == prob_is_one,
            (Rel::Gt, false) => prob_is_one,
            (Rel::Lt, true) => !prob_is_one,
            _ => false,
        }
    }

    /// `< 0` and `> 1` never hold.
    pub fn unsatisfiable(self) -> bool {
        matches!((self.rel, self.one), (Rel::Lt, false) | (Rel::Gt, true))
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.rel {
            Rel::Lt => '<',
            Rel::Eq => '=',
            Rel::Gt => '>',
        };
        write!(f, "{r}{}", u8::from(self.one))
    }
}

/// `P[event] cmp`, with the event in conjunctive normal form. A limit
/// objective asks for probabilities arbitrarily close to one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Objective {
    pub limit: bool,
    pub clauses: Vec<Vec<Atom>>,
    pub cmp: Cmp,
}

impl Objective {
    pub fn new(clauses: Vec<Vec<Atom>>, cmp: Cmp) -> Self {
        Objective { limit: false, clauses, cmp }.normalized()
    }

    /// `P[R(t1) & ... & R(tk)] cmp`.
    pub fn all_reach(names: &[&str], cmp: Cmp) -> Self {
        Self::new(names.iter().map(|n| vec![Atom::Reach(n.to_string())]).collect(), cmp)
    }

    /// `P[NR(t1) & ... & NR(tk)] cmp`.
    pub fn all_nonreach(names: &[&str], cmp: Cmp) -> Self {
        Self::new(names.iter().map(|n| vec![Atom::NonReach(n.to_string())]).collect(), cmp)
    }

    /// Sorted, duplicate-free clauses; clauses subsumed by a smaller one and
    /// tautologies are dropped.
    fn normalized(mut self) -> Self {
        for c in &mut self.clauses {
            c.sort();
            c.dedup();
        }
        self.clauses.retain(|c| !c.iter().any(|a| c.contains(&a.negated())));
        self.clauses.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        self.clauses.dedup();
        let mut kept: Vec<Vec<Atom>> = Vec::with_capacity(self.clauses.len());
        for c in std::mem::take(&mut self.clauses) {
            if !kept.iter().any(|k| k.iter().all(|a| c.contains(a))) {
                kept.push(c);
            }
        }
        self.clauses = kept;
        self
    }

    /// Atoms of an event made of unit clauses only.
    fn units(&self) -> Option<Vec<&Atom>> {
        self.clauses.iter().map(|c| if c.len() == 1 { Some(&c[0]) } else { None }).collect()
    }

    fn single_atom(&self) -> Option<&Atom> {
        match self.clauses.as_slice() {
            [c] if c.len() == 1 => Some(&c[0]),
            _ => None,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.limit {
            write!(f, "lim ")?;
        }
        write!(f, "P[")?;
        if self.clauses.is_empty() {
            write!(f, "true")?;
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, " & ")?;
            }
            let wrap = c.len() > 1 && self.clauses.len() > 1;
            if wrap {
                write!(f, "(")?;
            }
            for (j, a) in c.iter().enumerate() {
                if j > 0 {
                    write!(f, " | ")?;
                }
                match a {
                    Atom::Reach(n) => write!(f, "R({n})")?,
                    Atom::NonReach(n) => write!(f, "NR({n})")?,
                }
            }
            if wrap {
                write!(f, ")")?;
            }
        }
        write!(f, "]{}", self.cmp)
    }
}

/// Statements about a single strategy, combined with `&` and `|`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    Obj(Objective),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (parts, sep) = match self {
            Formula::Obj(o) => return write!(f, "{o}"),
            Formula::And(p) => (p, " & "),
            Formula::Or(p) => (p, " | "),
        };
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                write!(f, "{sep}")?;
            }
            match p {
                Formula::Obj(o) => write!(f, "{o}")?,
                _ => write!(f, "({p})")?,
            }
        }
        Ok(())
    }
}

/// "Is there a strategy from `start` satisfying `formula`?"
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneralizedQuery {
    pub start: String,
    pub formula: Formula,
}

impl GeneralizedQuery {
    pub fn new(start: impl Into<String>, formula: Formula) -> Self {
        GeneralizedQuery { start: start.into(), formula }
    }

    /// Parses `expr` in the query language.
    pub fn parse(start: impl Into<String>, expr: &str) -> Result<Self, Error> {
        Ok(GeneralizedQuery { start: start.into(), formula: parse_formula(expr)? })
    }
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    And,
    Or,
    Rel(Rel),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, Error> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let doubled = |i: usize| chars.get(i + 1).map(|x| x.1) == Some(c);
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBrack,
            ']' => Tok::RBrack,
            '&' | '|' | '=' => {
                if doubled(i) {
                    i += 1;
                }
                match c {
                    '&' => Tok::And,
                    '|' => Tok::Or,
                    _ => Tok::Rel(Rel::Eq),
                }
            }
            '<' => Tok::Rel(Rel::Lt),
            '>' => Tok::Rel(Rel::Gt),
            c if c.is_alphanumeric() || c == '_' || c == '\'' => {
                let mut j = i;
                while j < chars.len() && (chars[j].1.is_alphanumeric() || matches!(chars[j].1, '_' | '\'' | '.')) {
                    j += 1;
                }
                out.push((pos, Tok::Ident(chars[i..j].iter().map(|x| x.1).collect())));
                i = j;
                continue;
            }
            other => return Err(Error::Query(format!("unexpected `{other}` at offset {pos}"))),
        };
        out.push((pos, tok));
        i += 1;
    }
    Ok(out)
}

/// Event before conversion to CNF.
enum Ev {
    Atom(Atom),
    And(Vec<Ev>),
    Or(Vec<Ev>),
}

const MAX_CLAUSES: usize = 4096;

fn cnf(e: &Ev) -> Result<Vec<Vec<Atom>>, Error> {
    match e {
        Ev::Atom(a) => Ok(vec![vec![a.clone()]]),
        Ev::And(parts) => {
            let mut out = Vec::new();
            for p in parts {
                out.extend(cnf(p)?);
            }
            Ok(out)
        }
        Ev::Or(parts) => {
            let mut acc: Vec<Vec<Atom>> = vec![Vec::new()];
            for p in parts {
                let rhs = cnf(p)?;
                if acc.len() * rhs.len() > MAX_CLAUSES {
                    return Err(Error::Query("event is too large in conjunctive normal form".into()));
                }
                acc = acc.iter().flat_map(|a| rhs.iter().map(move |b| a.iter().chain(b).cloned().collect())).collect();
            }
            Ok(acc)
        }
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn err(&self, what: &str) -> Error {
        let pos = self.toks.get(self.at).map_or(self.len, |t| t.0);
        Error::Query(format!("expected {what} at offset {pos}"))
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), Error> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn ident(&mut self) -> Option<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Some(s)
            }
            _ => None,
        }
    }

    fn formula(&mut self) -> Result<Formula, Error> {
        let mut parts = vec![self.conj()?];
        while self.eat(&Tok::Or) {
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one part") } else { Formula::Or(parts) })
    }

    fn conj(&mut self) -> Result<Formula, Error> {
        let mut parts = vec![self.unit()?];
        while self.eat(&Tok::And) {
            parts.push(self.unit()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one part") } else { Formula::And(parts) })
    }

    fn unit(&mut self) -> Result<Formula, Error> {
        if self.eat(&Tok::LParen) {
            let f = self.formula()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(f);
        }
        let limit = self.peek() == Some(&Tok::Ident("lim".into()));
        if limit {
            self.at += 1;
        }
        let clauses = match self.peek() {
            Some(Tok::Ident(s)) if s == "P" || s == "Pr" => {
                self.at += 1;
                self.expect(&Tok::LBrack, "`[`")?;
                let e = self.event()?;
                self.expect(&Tok::RBrack, "`]`")?;
                cnf(&e)?
            }
            _ => vec![vec![self.atom()?]],
        };
        let cmp = self.cmp()?;
        if limit && cmp != Cmp::EQ1 {
            return Err(Error::Query("`lim` only applies to `=1`".into()));
        }
        let o = Objective::new(clauses, cmp);
        Ok(Formula::Obj(Objective { limit, ..o }))
    }

    fn cmp(&mut self) -> Result<Cmp, Error> {
        let rel = match self.peek() {
            Some(Tok::Rel(r)) => *r,
            _ => return Err(self.err("a comparison")),
        };
        self.at += 1;
        let one = match self.ident().as_deref() {
            Some("0") => false,
            Some("1") => true,
            _ => {
                self.at -= 1;
                return Err(self.err("0 or 1 after the comparison"));
            }
        };
        Ok(Cmp { rel, one })
    }

    fn event(&mut self) -> Result<Ev, Error> {
        let mut parts = vec![self.event_conj()?];
        while self.eat(&Tok::Or) {
            parts.push(self.event_conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one part") } else { Ev::Or(parts) })
    }

    fn event_conj(&mut self) -> Result<Ev, Error> {
        let mut parts = vec![self.event_unit()?];
        while self.eat(&Tok::And) {
            parts.push(self.event_unit()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one part") } else { Ev::And(parts) })
    }

    fn event_unit(&mut self) -> Result<Ev, Error> {
        if self.eat(&Tok::LParen) {
            let e = self.event()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(e);
        }
        Ok(Ev::Atom(self.atom()?))
    }

    fn atom(&mut self) -> Result<Atom, Error> {
        let save = self.at;
        let kind = self.ident();
        let make: fn(String) -> Atom = match kind.as_deref() {
            Some("R") => Atom::Reach,
            Some("NR") => Atom::NonReach,
            _ => {
                self.at = save;
                return Err(self.err("`R(..)` or `NR(..)`"));
            }
        };
        self.expect(&Tok::LParen, "`(`")?;
        let name = self.ident().ok_or_else(|| self.err("a non-terminal name"))?;
        self.expect(&Tok::RParen, "`)`")?;
        Ok(make(name))
    }
}

/// Parses a formula of the query language.
pub fn parse_formula(text: &str) -> Result<Formula, Error> {
    let mut p = Parser { toks: tokenize(text)?, at: 0, len: text.len() };
    let f = p.formula()?;
    if p.at != p.toks.len() {
        return Err(p.err("end of input"));
    }
    Ok(flatten(f))
}

// ---------------------------------------------------------------------------
// rewriting

fn flatten(f: Formula) -> Formula {
    match f {
        Formula::Obj(o) => Formula::Obj(o),
        Formula::And(parts) => {
            let mut out = Vec::new();
            for p in parts.into_iter().map(flatten) {
                match p {
                    Formula::And(inner) => out.extend(inner),
                    other => out.push(other),
                }
            }
            collapse(out, Formula::And)
        }
        Formula::Or(parts) => {
            let mut out = Vec::new();
            for p in parts.into_iter().map(flatten) {
                match p {
                    Formula::Or(inner) => out.extend(inner),
                    other => out.push(other),
                }
            }
            collapse(out, Formula::Or)
        }
    }
}

fn collapse(mut parts: Vec<Formula>, make: fn(Vec<Formula>) -> Formula) -> Formula {
    parts.dedup();
    if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        make(parts)
    }
}

/// A union of atoms, when the event is a single clause.
fn as_union(o: &Objective) -> Option<&[Atom]> {
    match o.clauses.as_slice() {
        [c] => Some(c),
        _ => None,
    }
}

/// Replaces a union of two or more atoms by the intersection of their negations.
fn complement_union(o: Objective) -> Objective {
    match as_union(&o) {
        Some(c) if c.len() > 1 && !o.limit => {
            let clauses = c.iter().map(|a| vec![a.negated()]).collect();
            Objective::new(clauses, o.cmp.complement())
        }
        _ => o,
    }
}

/// Merges the objectives selected by `pick` into one, combining their events
/// with `join`.
fn merge(parts: &mut Vec<Formula>, pick: impl Fn(&Objective) -> bool, join: impl Fn(Vec<Objective>) -> Objective) {
    let mut picked = Vec::new();
    let mut first = None;
    let mut rest = Vec::with_capacity(parts.len());
    for (i, p) in std::mem::take(parts).into_iter().enumerate() {
        match p {
            Formula::Obj(o) if pick(&o) => {
                first.get_or_insert(i);
                picked.push(o);
            }
            other => rest.push((i, other)),
        }
    }
    if picked.len() >= 2 {
        rest.push((first.expect("picked"), Formula::Obj(join(picked))));
    } else {
        rest.extend(picked.into_iter().map(|o| (first.expect("picked"), Formula::Obj(o))));
    }
    rest.sort_by_key(|(i, _)| *i);
    *parts = rest.into_iter().map(|(_, p)| p).collect();
}

fn intersect(objs: Vec<Objective>, cmp: Cmp, limit: bool) -> Objective {
    let clauses = objs.into_iter().flat_map(|o| o.clauses).collect();
    Objective { limit, ..Objective::new(clauses, cmp) }
}

fn unite(objs: Vec<Objective>, cmp: Cmp) -> Objective {
    let clause = objs.into_iter().flat_map(|o| o.clauses.into_iter().flatten()).collect();
    Objective::new(vec![clause], cmp)
}

fn rewrite_once(f: Formula) -> Formula {
    match f {
        Formula::Obj(o) => Formula::Obj(complement_union(o)),
        Formula::And(parts) => {
            let mut parts: Vec<Formula> = parts.into_iter().map(rewrite_once).collect();
            // Pr[F_i] = 1 for all i iff Pr[F_1 & ... & F_k] = 1, for the same strategy.
            merge(&mut parts, |o| o.cmp == Cmp::EQ1 && !o.limit, |v| intersect(v, Cmp::EQ1, false));
            // All-limit conjunctions collapse the same way, with changed epsilons.
            merge(&mut parts, |o| o.limit, |v| intersect(v, Cmp::EQ1, true));
            // Pr[F_i] = 0 for all i iff Pr[F_1 | ... | F_k] = 0.
            merge(&mut parts, |o| o.cmp == Cmp::EQ0 && as_union(o).is_some(), |v| unite(v, Cmp::EQ0));
            let parts = parts
                .into_iter()
                .map(|p| match p {
                    Formula::Obj(o) => Formula::Obj(complement_union(o)),
                    other => other,
                })
                .collect();
            flatten(Formula::And(parts))
        }
        Formula::Or(parts) => {
            let mut parts: Vec<Formula> = parts.into_iter().map(rewrite_once).collect();
            // Some Pr[F_i] < 1 iff Pr[F_1 & ... & F_k] < 1.
            merge(&mut parts, |o| o.cmp == Cmp::LT1 && !o.limit, |v| intersect(v, Cmp::LT1, false));
            // Some Pr[F_i] > 0 iff Pr[F_1 | ... | F_k] > 0.
            merge(&mut parts, |o| o.cmp == Cmp::GT0 && as_union(o).is_some(), |v| unite(v, Cmp::GT0));
            let parts = parts
                .into_iter()
                .map(|p| match p {
                    Formula::Obj(o) => Formula::Obj(complement_union(o)),
                    other => other,
                })
                .collect();
            flatten(Formula::Or(parts))
        }
    }
}

/// Collapses conjunctions of `=1` (and of limit objectives) into one
/// intersection, conjunctions of `=0` and disjunctions of `>0` into one union,
/// disjunctions of `<1` into one intersection, and writes unions of atoms as
/// intersections of their complements. A witness for the rewritten query is a
/// witness for the original (up to the choice of epsilon for limit objectives).
pub fn rewrite_query(q: &GeneralizedQuery) -> GeneralizedQuery {
    let mut f = flatten(q.formula.clone());
    loop {
        let next = rewrite_once(f.clone());
        if next == f {
            return GeneralizedQuery { start: q.start.clone(), formula: f };
        }
        f = next;
    }
}

// ---------------------------------------------------------------------------
// set computations

/// A set of start symbols with a strategy that serves every member.
#[derive(Clone, Debug)]
pub struct FragmentSet<P> {
    pub set: NodeSet,
    pub witness: Option<StrategySpec>,
    /// Lower bound on the relevant probability under the witness, when known.
    pub bound: Option<P>,
}

fn det_spec<P: Probability>(m: &SnfObmdp<P>, choice: &[Option<usize>]) -> BTreeMap<String, String> {
    m.ids().filter_map(|u| choice[u.index()].map(|a| (m.name(u).to_string(), m.actions(u)[a].0.clone()))).collect()
}

/// Starts with a strategy keeping every `Pr[Reach(q)]` below one.
///
/// The witness draws one target uniformly at the root and plays that target's
/// avoiding strategy in the whole play, so each target is missed with
/// probability at least `1/k` times its own miss probability.
pub fn conj_lt1<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId]) -> FragmentSet<P> {
    let mut set = NodeSet::full(m.len());
    let mut controllers = Vec::with_capacity(targets.len() + 1);
    for &q in targets {
        let w = sub_one_reach_set(m, q);
        set.intersect_with(&w.set);
        controllers.push(Controller::DeterministicMap { map: det_spec(m, &w.choice) });
    }
    let witness = if controllers.is_empty() {
        StrategySpec::free()
    } else {
        let options = (0..controllers.len()).collect();
        controllers.push(Controller::Mixture { options });
        StrategySpec::new(controllers.len() - 1, controllers)
    };
    FragmentSet { set, witness: Some(witness), bound: None }
}

/// The per-target sets `W_q` of [`conj_lt1`] and [`inter_lt1`].
pub fn sub_one_sets<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId]) -> Vec<ChoiceSet> {
    targets.iter().map(|&q| sub_one_reach_set(m, q)).collect()
}

/// Starts with a strategy keeping `Pr[Reach(q) for all q]` below one.
/// Members need different witnesses; see [`inter_lt1_witness`].
pub fn inter_lt1<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId]) -> FragmentSet<P> {
    let mut set = NodeSet::empty(m.len());
    for w in sub_one_sets(m, targets) {
        set.union_with(&w.set);
    }
    FragmentSet { set, witness: None, bound: None }
}

/// Deterministic static witness for [`inter_lt1`]: the strategy of the first
/// target whose avoiding set contains `start`.
pub fn inter_lt1_witness<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId], start: NtId) -> Option<StrategySpec> {
    sub_one_sets(m, targets)
        .into_iter()
        .find(|w| w.set.contains(start))
        .map(|w| StrategySpec::deterministic(det_spec(m, &w.choice)))
}

/// Starts from which every target is reached with positive probability by
/// the strategy playing uniformly among all actions; the bound is `lambda^n`.
pub fn conj_gt0<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId]) -> FragmentSet<P> {
    let g = DependencyGraph::new(m);
    let mut set = NodeSet::full(m.len());
    for &q in targets {
        set.intersect_with(&g.attractor(q));
    }
    let map = m
        .ids()
        .filter(|&u| !m.actions(u).is_empty())
        .map(|u| (m.name(u).to_string(), m.actions(u).iter().map(|(a, _)| a.clone()).collect()))
        .collect();
    let witness = StrategySpec::new(0, vec![Controller::UniformOverListed { map }]);
    FragmentSet { set, witness: Some(witness), bound: Some(m.lambda().powu(m.len() as u64)) }
}

/// A model in which a set of targets is replaced by one fresh target.
#[derive(Clone, Debug)]
pub struct UnionTarget<P> {
    pub model: SnfObmdp<P>,
    pub target: NtId,
    /// Id in `model` of every non-target of the original model.
    pub map: Vec<Option<NtId>>,
}

impl<P> UnionTarget<P> {
    /// Original id of a vertex of the reduced model other than the new target.
    pub fn back(&self, v: NtId) -> Option<NtId> {
        self.map.iter().position(|x| *x == Some(v)).map(NtId::new)
    }
}

/// Removes `targets`, adds a target `T_f` with the single rule `T_f -> ε`,
/// and points every former occurrence of a target at `T_f`. Repeated linear
/// rules are merged by adding their probabilities; actions that now share a
/// child keep the first of them.
pub fn build_union_target<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId]) -> Result<UnionTarget<P>, Error> {
    let n = m.len();
    let removed = NodeSet::from_ids(n, targets.iter().copied());
    if removed.len() == n {
        return Err(Error::Query("every non-terminal is a target, so no start remains".into()));
    }
    let mut map = vec![None; n];
    let mut names = Vec::new();
    let mut origins = Vec::new();
    for u in m.ids().filter(|u| !removed.contains(*u)) {
        map[u.index()] = Some(NtId::new(names.len()));
        names.push(m.name(u).to_string());
        origins.push(m.origin(u));
    }
    let tf = NtId::new(names.len());
    let taken = |s: &str| m.id(s).is_some() || m.source_names().iter().any(|x| x == s);
    let mut tf_name = "T_f".to_string();
    let mut suffix = 1;
    while taken(&tf_name) {
        tf_name = format!("T_f_{suffix}");
        suffix += 1;
    }
    let to = |v: NtId| map[v.index()].unwrap_or(tf);
    let mut forms = Vec::with_capacity(names.len() + 1);
    for u in m.ids().filter(|u| !removed.contains(*u)) {
        forms.push(match m.form(u) {
            SnfForm::Linear(rules) => {
                let mut out: Vec<(Option<NtId>, P)> = Vec::with_capacity(rules.len());
                for (t, p) in rules {
                    let t = t.map(to);
                    match out.iter_mut().find(|(s, _)| *s == t) {
                        Some((_, q)) => *q = q.clone() + p.clone(),
                        None => out.push((t, p.clone())),
                    }
                }
                SnfForm::Linear(out)
            }
            SnfForm::Branching(l, r) => SnfForm::Branching(to(*l), to(*r)),
            SnfForm::Controlled(acts) => {
                let mut out: Vec<(String, NtId)> = Vec::with_capacity(acts.len());
                for (a, t) in acts {
                    let t = to(*t);
                    if !out.iter().any(|(_, s)| *s == t) {
                        out.push((a.clone(), t));
                    }
                }
                SnfForm::Controlled(out)
            }
        });
    }
    forms.push(SnfForm::Linear(vec![(None, P::one())]));
    let mut source_names = m.source_names().to_vec();
    origins.push(crate::model::Origin::Declared(NtId::new(source_names.len())));
    source_names.push(tf_name.clone());
    names.push(tf_name);
    let model = SnfObmdp::new(names, forms, origins, source_names)?;
    Ok(UnionTarget { model, target: tf, map })
}

/// Rewrites a strategy of the reduced model for the original one.
fn transport(spec: &StrategySpec, tf: &str, targets: &[String]) -> StrategySpec {
    let first = targets.first().cloned().unwrap_or_default();
    let rename = |s: &String| if s == tf { first.clone() } else { s.clone() };
    let controllers = spec
        .controllers
        .iter()
        .map(|c| match c {
            Controller::StaticMap { map } => Controller::StaticMap {
                map: map.iter().filter(|(k, _)| *k != tf).map(|(k, v)| (k.clone(), v.clone())).collect(),
            },
            Controller::DeterministicMap { map } => Controller::DeterministicMap {
                map: map.iter().filter(|(k, _)| *k != tf).map(|(k, v)| (k.clone(), v.clone())).collect(),
            },
            Controller::UniformOverListed { map } => Controller::UniformOverListed {
                map: map.iter().filter(|(k, _)| *k != tf).map(|(k, v)| (k.clone(), v.clone())).collect(),
            },
            Controller::DelegateOnEntry { base, triggers } => {
                let mut out = Vec::new();
                for t in triggers {
                    if t.parent.as_deref() == Some(tf) {
                        continue;
                    }
                    if t.child.as_deref() == Some(tf) {
                        out.extend(targets.iter().map(|q| Trigger { child: Some(q.clone()), ..t.clone() }));
                    } else {
                        out.push(t.clone());
                    }
                }
                Controller::DelegateOnEntry { base: *base, triggers: out }
            }
            Controller::CounterSwitch { counters, threshold, switch_at, switch_action, inner, after_switch } => {
                let mut counters = counters.clone();
                for cs in &mut counters {
                    cs.target = rename(&cs.target);
                    cs.nodes.retain(|x| x != tf);
                }
                Controller::CounterSwitch {
                    counters,
                    threshold: *threshold,
                    switch_at: switch_at.clone(),
                    switch_action: switch_action.clone(),
                    inner: *inner,
                    after_switch: *after_switch,
                }
            }
            Controller::QueenWorker { queen, slots } => {
                let mut slots: Vec<_> = slots.iter().filter(|s| s.at != tf).cloned().collect();
                for s in &mut slots {
                    for ch in &mut s.choices {
                        ch.target = rename(&ch.target);
                    }
                }
                Controller::QueenWorker { queen: *queen, slots }
            }
            Controller::Mixture { options } => Controller::Mixture { options: options.clone() },
        })
        .collect();
    StrategySpec::new(spec.entry, controllers)
}

/// `Pr[NR(q) for all q] cmp` for every start, via the union target.
#[derive(Clone, Debug)]
pub struct NonReach<P> {
    pub cmp: Cmp,
    pub set: NodeSet,
    /// A strategy serving all members, for the cases that have one.
    pub witness: Option<StrategySpec>,
    pub reduced: Option<UnionTarget<P>>,
}

/// Starts with a strategy for `Pr[NR(q) for all q in targets] cmp`.
///
/// The complementary event is reaching some target, which becomes reaching
/// `T_f` in the reduced model; `(rel, x)` turns into `(rel flipped, 1 - x)`.
/// Reaching `T_f` with probability zero asks for a strategy avoiding it
/// surely; below one is the sub-one set; positive is the positive-reach set;
/// one is the almost-sure set. Targets themselves reach the union at once.
pub fn nonreach_queries<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId], cmp: Cmp) -> Result<NonReach<P>, Error> {
    let n = m.len();
    let none = |witness| NonReach { cmp, set: NodeSet::empty(n), witness, reduced: None };
    if cmp.unsatisfiable() {
        return Ok(none(None));
    }
    let complement = cmp.complement();
    let kset = NodeSet::from_ids(n, targets.iter().copied());
    // The empty intersection holds surely; with every vertex a target it fails surely.
    if kset.is_empty() || kset.len() == n {
        let set = if cmp.holds_for(kset.is_empty()) { NodeSet::full(n) } else { NodeSet::empty(n) };
        return Ok(NonReach { cmp, set, witness: Some(StrategySpec::free()), reduced: None });
    }
    let u = build_union_target(m, targets)?;
    let r = &u.model;
    let tf = u.target;
    let tset = NodeSet::from_ids(r.len(), [tf]);
    let (reduced_set, choice, with_targets) = match (complement.rel, complement.one) {
        (Rel::Eq, false) => {
            let w = avoid_set(r, &tset);
            (w.set, Some(w.choice), false)
        }
        (Rel::Lt, true) => {
            let w = sub_one_reach_set_of(r, &tset);
            (w.set, Some(w.choice), false)
        }
        (Rel::Gt, false) => {
            let p = positive_reach_set(r, tf);
            (p.set, Some(p.choice), true)
        }
        (Rel::Eq, true) => {
            (almost_sure_sets(r, &TargetSet::new(vec![tf])?).winning(Subset::full(1)).clone(), None, true)
        }
        _ => unreachable!("unsatisfiable comparisons return early"),
    };
    let mut set = NodeSet::empty(n);
    for v in reduced_set.iter().filter(|v| *v != tf) {
        set.insert(u.back(v).expect("non-target vertex"));
    }
    if with_targets {
        set.union_with(&kset);
    }
    let witness = choice.map(|c| {
        let names: Vec<String> = targets.iter().map(|q| m.name(*q).to_string()).collect();
        transport(&StrategySpec::deterministic(det_spec(r, &c)), r.name(tf), &names)
    });
    Ok(NonReach { cmp, set, witness, reduced: Some(u) })
}

/// Witness for a member of [`nonreach_queries`] at `start`, in the original model.
pub fn nonreach_witness<P: Probability>(
    m: &SnfObmdp<P>,
    targets: &[NtId],
    cmp: Cmp,
    start: NtId,
) -> Result<Option<StrategySpec>, Error> {
    let nr = nonreach_queries(m, targets, cmp)?;
    if !nr.set.contains(start) {
        return Ok(None);
    }
    if targets.contains(&start) {
        return Ok(Some(StrategySpec::free()));
    }
    if let Some(w) = nr.witness {
        return Ok(Some(w));
    }
    let u = nr.reduced.expect("cases without a shared witness use the reduction");
    let r = &u.model;
    let reach = almost_sure_sets(r, &TargetSet::new(vec![u.target])?);
    let w = almost_sure_witness(r, &reach, Subset::full(1), u.map[start.index()].expect("non-target start"))?;
    let names: Vec<String> = targets.iter().map(|q| m.name(*q).to_string()).collect();
    Ok(Some(transport(&w.spec, r.name(u.target), &names)))
}

/// Starts with a strategy for which no target is reached with positive
/// probability: the `NR = 1` case of [`nonreach_queries`].
pub fn conj_eq0<P: Probability>(m: &SnfObmdp<P>, targets: &[NtId]) -> Result<NonReach<P>, Error> {
    nonreach_queries(m, targets, Cmp::EQ1)
}

// ---------------------------------------------------------------------------
// evaluation

/// Answer of a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    False,
    /// Outside every fragment the crate decides.
    Unsupported,
}

/// The decision procedure used for a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fragment {
    /// `Pr[F] < 0` or `Pr[F] > 1`.
    Trivial,
    /// Every `Pr[R(q)] < 1`.
    ConjLt1,
    /// `Pr[R(q) for all q] < 1`.
    InterLt1,
    /// Every `Pr[R(q)] > 0`.
    ConjGt0,
    /// `Pr[R(q) for all q] > 0`.
    InterGt0,
    /// `Pr[NR(q) for all q]` compared with 0 or 1.
    NonReach,
    /// `Pr[R(q) for all q] = 1`.
    AlmostSure,
    /// `Pr[R(q) for all q]` arbitrarily close to 1.
    LimitSure,
}

#[derive(Clone, Debug)]
pub struct QueryAnswer<P> {
    pub verdict: Verdict,
    pub fragment: Option<Fragment>,
    pub rewritten: GeneralizedQuery,
    /// Start symbols satisfying the query, projected to source names.
    pub members: Vec<String>,
    /// A witness for the start when the verdict is true; limit-sure queries
    /// need an epsilon and get none here.
    pub witness: Option<StrategySpec>,
    pub bound: Option<P>,
}

enum Plan {
    Trivial,
    Unsupported,
    Run(Fragment, Vec<String>, Cmp),
}

fn all_reach(atoms: &[&Atom]) -> Option<Vec<String>> {
    atoms.iter().map(|a| if let Atom::Reach(n) = a { Some(n.clone()) } else { None }).collect()
}

fn all_nonreach(atoms: &[&Atom]) -> Option<Vec<String>> {
    atoms.iter().map(|a| if let Atom::NonReach(n) = a { Some(n.clone()) } else { None }).collect()
}

fn plan_objective(o: &Objective) -> Plan {
    if o.cmp.unsatisfiable() {
        return Plan::Trivial;
    }
    let Some(atoms) = o.units() else { return Plan::Unsupported };
    if atoms.is_empty() {
        return Plan::Unsupported;
    }
    if let Some(names) = all_reach(&atoms) {
        if o.limit {
            return Plan::Run(Fragment::LimitSure, names, o.cmp);
        }
        return match (o.cmp.rel, o.cmp.one) {
            (Rel::Eq, true) => Plan::Run(Fragment::AlmostSure, names, o.cmp),
            (Rel::Lt, true) => Plan::Run(Fragment::InterLt1, names, o.cmp),
            (Rel::Gt, false) => Plan::Run(Fragment::InterGt0, names, o.cmp),
            (Rel::Eq, false) if names.len() == 1 => Plan::Run(Fragment::NonReach, names, Cmp::EQ1),
            _ => Plan::Unsupported,
        };
    }
    if o.limit {
        return Plan::Unsupported;
    }
    match all_nonreach(&atoms) {
        Some(names) => Plan::Run(Fragment::NonReach, names, o.cmp),
        None => Plan::Unsupported,
    }
}

fn plan(f: &Formula) -> Plan {
    match f {
        Formula::Obj(o) => plan_objective(o),
        Formula::And(parts) => {
            let singles: Option<Vec<(&Atom, Cmp)>> = parts
                .iter()
                .map(|p| match p {
                    Formula::Obj(o) if !o.limit => o.single_atom().map(|a| (a, o.cmp)),
                    _ => None,
                })
                .collect();
            let Some(singles) = singles else { return Plan::Unsupported };
            if singles.iter().any(|(_, c)| c.unsatisfiable()) {
                return Plan::Trivial;
            }
            let atoms: Vec<&Atom> = singles.iter().map(|(a, _)| *a).collect();
            let Some(names) = all_reach(&atoms) else { return Plan::Unsupported };
            if singles.iter().all(|(_, c)| *c == Cmp::LT1) {
                Plan::Run(Fragment::ConjLt1, names, Cmp::LT1)
            } else if singles.iter().all(|(_, c)| *c == Cmp::GT0) {
                Plan::Run(Fragment::ConjGt0, names, Cmp::GT0)
            } else {
                Plan::Unsupported
            }
        }
        Formula::Or(_) => Plan::Unsupported,
    }
}

fn resolve<P: Probability>(m: &SnfObmdp<P>, names: &[String]) -> Result<Vec<NtId>, Error> {
    let mut ids = Vec::with_capacity(names.len());
    for n in names {
        let id = m.project_start(n)?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    Ok(ids)
}

/// Rewrites `q`, picks the matching fragment and decides it for `q.start`.
/// Queries outside all fragments get [`Verdict::Unsupported`].
pub fn evaluate_query<P: Probability>(m: &SnfObmdp<P>, q: &GeneralizedQuery) -> Result<QueryAnswer<P>, Error> {
    let start = m.project_start(&q.start)?;
    let rewritten = rewrite_query(q);
    let answer = |verdict, fragment, set: Option<&NodeSet>, witness, bound| QueryAnswer {
        verdict,
        fragment,
        rewritten: rewritten.clone(),
        members: set.map(|s| m.project(s)).unwrap_or_default(),
        witness,
        bound,
    };
    let (fragment, names, cmp) = match plan(&rewritten.formula) {
        Plan::Unsupported => return Ok(answer(Verdict::Unsupported, None, None, None, None)),
        Plan::Trivial => {
            return Ok(answer(Verdict::False, Some(Fragment::Trivial), Some(&NodeSet::empty(m.len())), None, None))
        }
        Plan::Run(f, names, cmp) => (f, names, cmp),
    };
    let ids = resolve(m, &names)?;
    let verdict = |set: &NodeSet| if set.contains(start) { Verdict::True } else { Verdict::False };
    let out = match fragment {
        Fragment::ConjLt1 | Fragment::ConjGt0 => {
            let fs = if fragment == Fragment::ConjLt1 { conj_lt1(m, &ids) } else { conj_gt0(m, &ids) };
            let v = verdict(&fs.set);
            let w = if v == Verdict::True { fs.witness } else { None };
            answer(v, Some(fragment), Some(&fs.set), w, if v == Verdict::True { fs.bound } else { None })
        }
        Fragment::InterLt1 => {
            let fs = inter_lt1(m, &ids);
            let v = verdict(&fs.set);
            answer(v, Some(fragment), Some(&fs.set), inter_lt1_witness(m, &ids, start), None)
        }
        Fragment::InterGt0 => {
            let k = TargetSet::new(ids)?;
            let z = zero_sets(m, &k);
            let set = z.nonzero(k.full()).clone();
            let v = verdict(&set);
            let (w, b) = if v == Verdict::True {
                let w = positive_witness(m, &z, k.full(), start)?;
                (Some(w.spec), w.bound.or_else(|| zero_bounds(m, &z)[k.full().index()][start.index()].clone()))
            } else {
                (None, None)
            };
            answer(v, Some(fragment), Some(&set), w, b)
        }
        Fragment::NonReach => {
            let nr = nonreach_queries(m, &ids, cmp)?;
            let v = verdict(&nr.set);
            let w = if v == Verdict::True { nonreach_witness(m, &ids, cmp, start)? } else { None };
            answer(v, Some(fragment), Some(&nr.set), w, None)
        }
        Fragment::AlmostSure => {
            let k = TargetSet::new(ids)?;
            let r = almost_sure_sets(m, &k);
            let set = r.winning(k.full()).clone();
            let v = verdict(&set);
            let w = if v == Verdict::True { Some(almost_sure_witness(m, &r, k.full(), start)?.spec) } else { None };
            answer(v, Some(fragment), Some(&set), w, None)
        }
        Fragment::LimitSure => {
            let k = TargetSet::new(ids)?;
            let r = limit_sure_sets(m, &k);
            debug_assert_eq!(r.mode, Mode::LimitSure);
            let set = r.winning(k.full()).clone();
            answer(verdict(&set), Some(fragment), Some(&set), None, None)
        }
        Fragment::Trivial => unreachable!("handled above"),
    };
    Ok(out)
}
