//! Models: general-form OBMDPs, their simple normal form, and play histories.

use std::collections::HashMap;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error};
use crate::prob::Probability;
use crate::sets::{NodeSet, Subset};

/// Index of a non-terminal inside one model.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NtId(pub u32);

impl NtId {
    #[inline]
    pub fn new(i: usize) -> Self {
        NtId(i as u32)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One probabilistic alternative: `prob -> rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch<P> {
    pub prob: P,
    pub rhs: Vec<NtId>,
}

/// The probabilistic rule set attached to one action of a controlled non-terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDef<P> {
    pub name: String,
    pub branches: Vec<Branch<P>>,
}

/// Rules of one non-terminal.
#[derive(Clone, Debug, PartialEq)]
pub enum Definition<P> {
    Probabilistic(Vec<Branch<P>>),
    Controlled(Vec<ActionDef<P>>),
}

impl<P> Definition<P> {
    pub fn is_controlled(&self) -> bool {
        matches!(self, Definition::Controlled(_))
    }

    /// Every rhs symbol of every rule.
    pub fn symbols(&self) -> impl Iterator<Item = NtId> + '_ {
        let blocks: Vec<&Vec<Branch<P>>> = match self {
            Definition::Probabilistic(b) => vec![b],
            Definition::Controlled(acts) => acts.iter().map(|a| &a.branches).collect(),
        };
        blocks.into_iter().flat_map(|b| b.iter().flat_map(|br| br.rhs.iter().copied()))
    }
}

/// An ordered branching MDP in general form.
#[derive(Clone, Debug, PartialEq)]
pub struct Obmdp<P = BigRational> {
    names: Vec<String>,
    index: HashMap<String, NtId>,
    defs: Vec<Definition<P>>,
}

impl<P: Probability> Obmdp<P> {
    /// Builds and validates a model.
    pub fn new(names: Vec<String>, defs: Vec<Definition<P>>) -> Result<Self, Error> {
        let m = Self::new_unchecked(names, defs)?;
        let diags = m.validate();
        if diags.is_empty() {
            Ok(m)
        } else {
            Err(Error::Invalid(diags))
        }
    }

    /// Builds a model without checking probabilities; names must still be unique.
    pub fn new_unchecked(names: Vec<String>, defs: Vec<Definition<P>>) -> Result<Self, Error> {
        if names.len() != defs.len() {
            return Err(Error::Structure(format!("{} names but {} definitions", names.len(), defs.len())));
        }
        let index = build_index(&names)?;
        for d in &defs {
            if let Some(bad) = d.symbols().find(|s| s.index() >= names.len()) {
                return Err(Error::Structure(format!("rule refers to unknown index {}", bad.0)));
            }
        }
        Ok(Obmdp { names, index, defs })
    }

    /// Checks probabilities and action sets, one diagnostic per problem.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.names.is_empty() {
            out.push(Diagnostic::new("", "model declares no non-terminals"));
        }
        for (i, def) in self.defs.iter().enumerate() {
            let name = &self.names[i];
            match def {
                Definition::Probabilistic(branches) => {
                    check_block(name, None, branches, &mut out);
                }
                Definition::Controlled(actions) => {
                    if actions.is_empty() {
                        out.push(Diagnostic::new(name, "controlled non-terminal has no actions"));
                    }
                    let mut seen = Vec::new();
                    for a in actions {
                        if seen.contains(&&a.name) {
                            out.push(Diagnostic::new(name, format!("action `{}` declared twice", a.name)));
                        }
                        seen.push(&a.name);
                        check_block(name, Some(&a.name), &a.branches, &mut out);
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NtId> {
        (0..self.names.len()).map(NtId::new)
    }

    pub fn name(&self, id: NtId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<NtId> {
        self.index.get(name).copied()
    }

    pub fn definition(&self, id: NtId) -> &Definition<P> {
        &self.defs[id.index()]
    }

    pub fn definitions(&self) -> &[Definition<P>] {
        &self.defs
    }

    /// Re-expresses the probabilities in another scalar type.
    pub fn map_prob<Q: Probability>(&self, f: impl Fn(&P) -> Q) -> Obmdp<Q> {
        let map_block =
            |b: &Vec<Branch<P>>| b.iter().map(|br| Branch { prob: f(&br.prob), rhs: br.rhs.clone() }).collect();
        let defs = self
            .defs
            .iter()
            .map(|d| match d {
                Definition::Probabilistic(b) => Definition::Probabilistic(map_block(b)),
                Definition::Controlled(acts) => Definition::Controlled(
                    acts.iter().map(|a| ActionDef { name: a.name.clone(), branches: map_block(&a.branches) }).collect(),
                ),
            })
            .collect();
        Obmdp { names: self.names.clone(), index: self.index.clone(), defs }
    }
}

fn check_block<P: Probability>(name: &str, action: Option<&str>, branches: &[Branch<P>], out: &mut Vec<Diagnostic>) {
    let place = match action {
        Some(a) => format!("action `{a}`"),
        None => "rule set".to_string(),
    };
    if branches.is_empty() {
        out.push(Diagnostic::new(name, format!("{place} has no rules")));
        return;
    }
    let mut total = P::zero();
    for b in branches {
        if !(b.prob > P::zero() && b.prob <= P::one()) {
            out.push(Diagnostic::new(name, format!("{place} has probability {} outside (0,1]", b.prob)));
        }
        total = total + b.prob.clone();
    }
    if !total.is_unit() {
        out.push(Diagnostic::new(name, format!("{place} probabilities sum to {total}, not 1")));
    }
}

fn build_index(names: &[String]) -> Result<HashMap<String, NtId>, Error> {
    let mut index = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if index.insert(n.clone(), NtId::new(i)).is_some() {
            return Err(Error::Structure(format!("non-terminal `{n}` declared twice")));
        }
    }
    Ok(index)
}

/// Shape of a non-terminal in simple normal form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormKind {
    /// Probabilistic, every rhs of length at most one.
    Linear,
    /// A single rule to exactly two children.
    Branching,
    /// Controlled, one single-symbol rule per action.
    Controlled,
}

/// Rules of a non-terminal in simple normal form.
#[derive(Clone, Debug, PartialEq)]
pub enum SnfForm<P> {
    /// `(target, prob)` pairs; `None` is the empty string.
    Linear(Vec<(Option<NtId>, P)>),
    Branching(NtId, NtId),
    /// `(action, target)` pairs with distinct targets.
    Controlled(Vec<(String, NtId)>),
}

impl<P> SnfForm<P> {
    pub fn kind(&self) -> FormKind {
        match self {
            SnfForm::Linear(_) => FormKind::Linear,
            SnfForm::Branching(..) => FormKind::Branching,
            SnfForm::Controlled(_) => FormKind::Controlled,
        }
    }
}

/// Where an SNF non-terminal came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    /// A non-terminal of the source model (index in the source).
    Declared(NtId),
    /// An auxiliary introduced while normalizing the given source non-terminal.
    Auxiliary(NtId),
}

/// An OBMDP in simple normal form.
#[derive(Clone, Debug, PartialEq)]
pub struct SnfObmdp<P = BigRational> {
    names: Vec<String>,
    index: HashMap<String, NtId>,
    forms: Vec<SnfForm<P>>,
    origin: Vec<Origin>,
    source_names: Vec<String>,
    succ: Vec<Vec<NtId>>,
    empty_rule: Vec<bool>,
}

impl<P: Probability> SnfObmdp<P> {
    /// Builds an SNF model, checking the form constraints.
    pub fn new(
        names: Vec<String>,
        forms: Vec<SnfForm<P>>,
        origin: Vec<Origin>,
        source_names: Vec<String>,
    ) -> Result<Self, Error> {
        if names.len() != forms.len() || names.len() != origin.len() {
            return Err(Error::Structure("names, forms and origins differ in length".into()));
        }
        let index = build_index(&names)?;
        let n = names.len();
        let mut diags = Vec::new();
        for (i, f) in forms.iter().enumerate() {
            let name = &names[i];
            let in_range = |t: &NtId| t.index() < n;
            match f {
                SnfForm::Linear(rules) => {
                    let block: Vec<Branch<P>> = rules
                        .iter()
                        .map(|(t, p)| Branch { prob: p.clone(), rhs: t.iter().copied().collect() })
                        .collect();
                    check_block(name, None, &block, &mut diags);
                    if !rules.iter().filter_map(|(t, _)| t.as_ref()).all(in_range) {
                        return Err(Error::Structure(format!("`{name}` refers to an unknown index")));
                    }
                    let mut targets: Vec<_> = rules.iter().map(|(t, _)| *t).collect();
                    targets.sort();
                    targets.dedup();
                    if targets.len() != rules.len() {
                        diags.push(Diagnostic::new(name, "linear form repeats a target"));
                    }
                }
                SnfForm::Branching(l, r) => {
                    if !in_range(l) || !in_range(r) {
                        return Err(Error::Structure(format!("`{name}` refers to an unknown index")));
                    }
                }
                SnfForm::Controlled(acts) => {
                    if acts.is_empty() {
                        diags.push(Diagnostic::new(name, "controlled non-terminal has no actions"));
                    }
                    if !acts.iter().all(|(_, t)| in_range(t)) {
                        return Err(Error::Structure(format!("`{name}` refers to an unknown index")));
                    }
                    for (j, (a, t)) in acts.iter().enumerate() {
                        if acts[..j].iter().any(|(b, _)| b == a) {
                            diags.push(Diagnostic::new(name, format!("action `{a}` declared twice")));
                        }
                        if acts[..j].iter().any(|(_, u)| u == t) {
                            diags.push(Diagnostic::new(name, "two actions share a target"));
                        }
                    }
                }
            }
        }
        if !diags.is_empty() {
            return Err(Error::Invalid(diags));
        }
        let succ = forms.iter().map(successors_of).collect();
        let empty_rule =
            forms.iter().map(|f| matches!(f, SnfForm::Linear(r) if r.iter().any(|(t, _)| t.is_none()))).collect();
        Ok(SnfObmdp { names, index, forms, origin, source_names, succ, empty_rule })
    }

    /// Reads an SNF-shaped general model as SNF, without adding auxiliaries.
    pub fn from_obmdp(m: &Obmdp<P>) -> Result<Self, Error> {
        let mut forms = Vec::with_capacity(m.len());
        for id in m.ids() {
            match snf_shape(m.definition(id)) {
                Some(f) => forms.push(f),
                None => {
                    return Err(Error::NotSnf(m.name(id).to_string()));
                }
            }
        }
        Self::new(m.names().to_vec(), forms, m.ids().map(Origin::Declared).collect(), m.names().to_vec())
    }

    /// The same rules written as a general-form model.
    pub fn to_obmdp(&self) -> Obmdp<P> {
        let defs = self
            .forms
            .iter()
            .map(|f| match f {
                SnfForm::Linear(rules) => Definition::Probabilistic(
                    rules.iter().map(|(t, p)| Branch { prob: p.clone(), rhs: t.iter().copied().collect() }).collect(),
                ),
                SnfForm::Branching(l, r) => {
                    Definition::Probabilistic(vec![Branch { prob: P::one(), rhs: vec![*l, *r] }])
                }
                SnfForm::Controlled(acts) => Definition::Controlled(
                    acts.iter()
                        .map(|(a, t)| ActionDef {
                            name: a.clone(),
                            branches: vec![Branch { prob: P::one(), rhs: vec![*t] }],
                        })
                        .collect(),
                ),
            })
            .collect();
        Obmdp { names: self.names.clone(), index: self.index.clone(), defs }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NtId> {
        (0..self.names.len()).map(NtId::new)
    }

    pub fn name(&self, id: NtId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<NtId> {
        self.index.get(name).copied()
    }

    /// Looks up a non-terminal by name, as an error if absent.
    pub fn require(&self, name: &str) -> Result<NtId, Error> {
        self.id(name).ok_or_else(|| Error::UnknownNonTerminal(name.to_string()))
    }

    pub fn form(&self, id: NtId) -> &SnfForm<P> {
        &self.forms[id.index()]
    }

    pub fn kind(&self, id: NtId) -> FormKind {
        self.forms[id.index()].kind()
    }

    /// Distinct successors with positive probability or reachable by an action.
    #[inline]
    pub fn successors(&self, id: NtId) -> &[NtId] {
        &self.succ[id.index()]
    }

    /// Whether a linear form has a rule to the empty string.
    #[inline]
    pub fn has_empty_rule(&self, id: NtId) -> bool {
        self.empty_rule[id.index()]
    }

    pub fn origin(&self, id: NtId) -> Origin {
        self.origin[id.index()]
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origin
    }

    /// Names of the source model's non-terminals.
    pub fn source_names(&self) -> &[String] {
        &self.source_names
    }

    pub fn is_auxiliary(&self, id: NtId) -> bool {
        matches!(self.origin[id.index()], Origin::Auxiliary(_))
    }

    /// Action names of a controlled non-terminal (empty for other forms).
    pub fn actions(&self, id: NtId) -> &[(String, NtId)] {
        match &self.forms[id.index()] {
            SnfForm::Controlled(a) => a,
            _ => &[],
        }
    }

    /// Index of the action called `name` at `id`.
    pub fn action_index(&self, id: NtId, name: &str) -> Option<usize> {
        self.actions(id).iter().position(|(a, _)| a == name)
    }

    /// Largest number of actions of any non-terminal (at least one).
    pub fn max_actions(&self) -> usize {
        self.ids().map(|i| self.actions(i).len()).max().unwrap_or(0).max(1)
    }

    /// `min(1/max_actions, smallest rule probability)`.
    pub fn lambda(&self) -> P {
        let mut lam = P::one() / P::from_u64(self.max_actions() as u64);
        for f in &self.forms {
            if let SnfForm::Linear(rules) = f {
                for (_, p) in rules {
                    lam = P::min_of(lam, p.clone());
                }
            }
        }
        lam
    }

    /// Restricts a set to the non-terminals of the source model, by source name.
    pub fn project(&self, set: &NodeSet) -> Vec<String> {
        set.iter()
            .filter_map(|i| match self.origin[i.index()] {
                Origin::Declared(src) => Some(self.source_names[src.index()].clone()),
                Origin::Auxiliary(_) => None,
            })
            .collect()
    }

    /// Maps a source non-terminal name to its SNF id.
    pub fn project_start(&self, source_name: &str) -> Result<NtId, Error> {
        let id = self.require(source_name)?;
        match self.origin[id.index()] {
            Origin::Declared(_) => Ok(id),
            Origin::Auxiliary(_) => Err(Error::Auxiliary(source_name.to_string())),
        }
    }

    /// Resolves target names into an ordered target list.
    pub fn targets(&self, names: &[&str]) -> Result<TargetSet, Error> {
        let ids = names.iter().map(|n| self.require(n)).collect::<Result<Vec<_>, _>>()?;
        TargetSet::new(ids)
    }

    pub fn map_prob<Q: Probability>(&self, f: impl Fn(&P) -> Q) -> SnfObmdp<Q> {
        let forms = self
            .forms
            .iter()
            .map(|form| match form {
                SnfForm::Linear(r) => SnfForm::Linear(r.iter().map(|(t, p)| (*t, f(p))).collect()),
                SnfForm::Branching(l, r) => SnfForm::Branching(*l, *r),
                SnfForm::Controlled(a) => SnfForm::Controlled(a.clone()),
            })
            .collect();
        SnfObmdp {
            names: self.names.clone(),
            index: self.index.clone(),
            forms,
            origin: self.origin.clone(),
            source_names: self.source_names.clone(),
            succ: self.succ.clone(),
            empty_rule: self.empty_rule.clone(),
        }
    }
}

fn successors_of<P>(f: &SnfForm<P>) -> Vec<NtId> {
    let mut v: Vec<NtId> = match f {
        SnfForm::Linear(r) => r.iter().filter_map(|(t, _)| *t).collect(),
        SnfForm::Branching(l, r) => vec![*l, *r],
        SnfForm::Controlled(a) => a.iter().map(|(_, t)| *t).collect(),
    };
    v.sort();
    v.dedup();
    v
}

/// The SNF reading of one definition, if it already has SNF shape.
pub(crate) fn snf_shape<P: Probability>(def: &Definition<P>) -> Option<SnfForm<P>> {
    match def {
        Definition::Probabilistic(branches) => {
            if branches.len() == 1 && branches[0].prob.is_unit() && branches[0].rhs.len() == 2 {
                return Some(SnfForm::Branching(branches[0].rhs[0], branches[0].rhs[1]));
            }
            if branches.iter().all(|b| b.rhs.len() <= 1) {
                let mut rules: Vec<(Option<NtId>, P)> = Vec::new();
                for b in branches {
                    let t = b.rhs.first().copied();
                    match rules.iter_mut().find(|(u, _)| *u == t) {
                        Some((_, p)) => *p = p.clone() + b.prob.clone(),
                        None => rules.push((t, b.prob.clone())),
                    }
                }
                return Some(SnfForm::Linear(rules));
            }
            None
        }
        Definition::Controlled(actions) => {
            let mut out: Vec<(String, NtId)> = Vec::new();
            for a in actions {
                if a.branches.len() != 1 || !a.branches[0].prob.is_unit() || a.branches[0].rhs.len() != 1 {
                    return None;
                }
                let t = a.branches[0].rhs[0];
                if out.iter().any(|(_, u)| *u == t) {
                    return None;
                }
                out.push((a.name.clone(), t));
            }
            Some(SnfForm::Controlled(out))
        }
    }
}

/// An ordered list of distinct target non-terminals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetSet {
    ids: Vec<NtId>,
}

impl TargetSet {
    pub fn new(ids: Vec<NtId>) -> Result<Self, Error> {
        for (i, a) in ids.iter().enumerate() {
            if ids[..i].contains(a) {
                return Err(Error::Structure("target listed twice".into()));
            }
        }
        if ids.len() > 24 {
            return Err(Error::Structure(format!("{} targets exceed the supported 24", ids.len())));
        }
        Ok(TargetSet { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NtId] {
        &self.ids
    }

    pub fn get(&self, i: usize) -> NtId {
        self.ids[i]
    }

    pub fn full(&self) -> Subset {
        Subset::full(self.ids.len())
    }

    /// Position of `id` in the list.
    pub fn position(&self, id: NtId) -> Option<usize> {
        self.ids.iter().position(|t| *t == id)
    }

    /// Per-node target bit, `None` for non-targets.
    pub fn bit_table(&self, n: usize) -> Vec<Option<usize>> {
        let mut t = vec![None; n];
        for (i, id) in self.ids.iter().enumerate() {
            t[id.index()] = Some(i);
        }
        t
    }

    /// The targets selected by a subset.
    pub fn select(&self, s: Subset) -> Vec<NtId> {
        s.members().map(|i| self.ids[i]).collect()
    }
}

/// Position of a child relative to its parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    #[serde(rename = "l")]
    Left,
    #[serde(rename = "r")]
    Right,
    #[serde(rename = "u")]
    Unique,
}

impl Dir {
    pub fn letter(self) -> char {
        match self {
            Dir::Left => 'l',
            Dir::Right => 'r',
            Dir::Unique => 'u',
        }
    }

    pub fn other(self) -> Dir {
        match self {
            Dir::Left => Dir::Right,
            Dir::Right => Dir::Left,
            Dir::Unique => Dir::Unique,
        }
    }
}

/// The labels on the path from the root to a node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AncestorHistory {
    pub root: NtId,
    pub steps: Vec<(Dir, NtId)>,
}

impl AncestorHistory {
    pub fn last(&self) -> NtId {
        self.steps.last().map(|s| s.1).unwrap_or(self.root)
    }

    /// Checks that every step is realizable under the model's rules.
    pub fn validate<P: Probability>(&self, m: &SnfObmdp<P>) -> Result<(), Error> {
        let mut cur = self.root;
        for (k, &(dir, next)) in self.steps.iter().enumerate() {
            let ok = match (m.form(cur), dir) {
                (SnfForm::Branching(l, _), Dir::Left) => *l == next,
                (SnfForm::Branching(_, r), Dir::Right) => *r == next,
                (SnfForm::Linear(rules), Dir::Unique) => rules.iter().any(|(t, p)| *t == Some(next) && *p > P::zero()),
                (SnfForm::Controlled(acts), Dir::Unique) => acts.iter().any(|(_, t)| *t == next),
                _ => false,
            };
            if !ok {
                return Err(Error::Structure(format!(
                    "history step {k} ({}, {}) is not realizable from {}",
                    dir.letter(),
                    m.name(next),
                    m.name(cur)
                )));
            }
            cur = next;
        }
        Ok(())
    }
}
