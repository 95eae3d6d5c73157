//! Conversion of general-form models into simple normal form.
//!
//! Definitions that already have SNF shape are kept untouched. The rest go
//! through four rewrites, in order: repeated rhs symbols are replaced by
//! doubling auxiliaries `<T>__pow<t>`, each action of a controlled definition
//! gets a probabilistic auxiliary `<T>__act_<a>`, and every rhs longer than one
//! symbol becomes a right-nested chain of branching auxiliaries `<T>__seq<j>`.

use std::collections::{HashMap, HashSet};

use crate::model::{snf_shape, Branch, Definition, NtId, Obmdp, Origin, SnfForm, SnfObmdp};
use crate::prob::Probability;

struct Builder<P> {
    names: Vec<String>,
    taken: HashSet<String>,
    forms: Vec<Option<SnfForm<P>>>,
    origin: Vec<Origin>,
    seq_counter: Vec<usize>,
    seq_memo: HashMap<Vec<NtId>, NtId>,
}

impl<P: Probability> Builder<P> {
    fn fresh(&mut self, base: String, owner: NtId) -> NtId {
        let mut name = base;
        while self.taken.contains(&name) {
            name.push('_');
        }
        self.taken.insert(name.clone());
        self.names.push(name);
        self.forms.push(None);
        self.origin.push(Origin::Auxiliary(owner));
        NtId::new(self.names.len() - 1)
    }

    fn owner_name(&self, owner: NtId) -> String {
        self.names[owner.index()].clone()
    }

    fn set(&mut self, id: NtId, form: SnfForm<P>) {
        self.forms[id.index()] = Some(form);
    }

    /// A branching chain for `seq` (length at least two), rooted at `head`.
    fn chain(&mut self, owner: NtId, head: NtId, seq: &[NtId]) {
        debug_assert!(seq.len() >= 2);
        if seq.len() == 2 {
            self.set(head, SnfForm::Branching(seq[0], seq[1]));
        } else {
            let link = self.seq_node(owner);
            self.set(head, SnfForm::Branching(seq[0], link));
            self.chain(owner, link, &seq[1..]);
        }
    }

    fn seq_node(&mut self, owner: NtId) -> NtId {
        self.seq_counter[owner.index()] += 1;
        let base = format!("{}__seq{}", self.owner_name(owner), self.seq_counter[owner.index()]);
        self.fresh(base, owner)
    }

    /// The auxiliary standing for the string `seq`.
    fn string_node(&mut self, owner: NtId, seq: &[NtId]) -> NtId {
        if let Some(&id) = self.seq_memo.get(seq) {
            return id;
        }
        let head = self.seq_node(owner);
        self.chain(owner, head, seq);
        self.seq_memo.insert(seq.to_vec(), head);
        head
    }

    /// The SNF form of a probabilistic rule set whose rhs symbols are distinct.
    fn probabilistic(&mut self, owner: NtId, head: NtId, branches: &[Branch<P>]) {
        if branches.len() == 1 && branches[0].prob.is_unit() && branches[0].rhs.len() >= 2 {
            let rhs = branches[0].rhs.clone();
            self.chain(owner, head, &rhs);
            return;
        }
        let mut rules: Vec<(Option<NtId>, P)> = Vec::new();
        for b in branches {
            let target = match b.rhs.len() {
                0 => None,
                1 => Some(b.rhs[0]),
                _ => Some(self.string_node(owner, &b.rhs)),
            };
            match rules.iter_mut().find(|(t, _)| *t == target) {
                Some((_, p)) => *p = p.clone() + b.prob.clone(),
                None => rules.push((target, b.prob.clone())),
            }
        }
        self.set(head, SnfForm::Linear(rules));
    }
}

/// Replaces repeated symbols in `rhs` by binary doubling auxiliaries.
fn collapse_repeats(rhs: &[NtId], pow: &HashMap<NtId, Vec<NtId>>) -> Vec<NtId> {
    let mut out = Vec::with_capacity(rhs.len());
    let mut seen = HashSet::new();
    for &s in rhs {
        if !seen.insert(s) {
            continue;
        }
        let count = rhs.iter().filter(|&&x| x == s).count();
        if count == 1 {
            out.push(s);
            continue;
        }
        for t in 0..usize::BITS as usize {
            if count >> t == 0 {
                break;
            }
            if count >> t & 1 == 1 {
                out.push(if t == 0 { s } else { pow[&s][t - 1] });
            }
        }
    }
    out
}

fn max_multiplicity(rhs: &[NtId], s: NtId) -> usize {
    rhs.iter().filter(|&&x| x == s).count()
}

/// Normalizes a model; the result maps every non-terminal back to its source.
pub fn to_snf<P: Probability>(m: &Obmdp<P>) -> SnfObmdp<P> {
    let n = m.len();
    let shaped: Vec<Option<SnfForm<P>>> = m.ids().map(|i| snf_shape(m.definition(i))).collect();
    let mut b = Builder {
        names: m.names().to_vec(),
        taken: m.names().iter().cloned().collect(),
        forms: vec![None; n],
        origin: m.ids().map(Origin::Declared).collect(),
        seq_counter: vec![0; n],
        seq_memo: HashMap::new(),
    };

    // Rules that need rewriting, with their rhs symbols.
    let mut pending_rhs: Vec<&[NtId]> = Vec::new();
    for i in m.ids() {
        if shaped[i.index()].is_some() {
            continue;
        }
        match m.definition(i) {
            Definition::Probabilistic(bs) => pending_rhs.extend(bs.iter().map(|b| b.rhs.as_slice())),
            Definition::Controlled(acts) => {
                pending_rhs.extend(acts.iter().flat_map(|a| a.branches.iter().map(|b| b.rhs.as_slice())))
            }
        }
    }

    let mut pow: HashMap<NtId, Vec<NtId>> = HashMap::new();
    for s in m.ids() {
        let max = pending_rhs.iter().map(|r| max_multiplicity(r, s)).max().unwrap_or(0);
        if max < 2 {
            continue;
        }
        let z = (usize::BITS - 1 - max.leading_zeros()) as usize;
        let mut chain = Vec::with_capacity(z);
        let mut prev = s;
        for t in 1..=z {
            let id = b.fresh(format!("{}__pow{}", m.name(s), t), s);
            b.set(id, SnfForm::Branching(prev, prev));
            chain.push(id);
            prev = id;
        }
        pow.insert(s, chain);
    }

    let collapse = |bs: &[Branch<P>]| -> Vec<Branch<P>> {
        bs.iter().map(|br| Branch { prob: br.prob.clone(), rhs: collapse_repeats(&br.rhs, &pow) }).collect()
    };

    for i in m.ids() {
        if let Some(f) = &shaped[i.index()] {
            b.set(i, f.clone());
            continue;
        }
        match m.definition(i) {
            Definition::Probabilistic(bs) => {
                let bs = collapse(bs);
                b.probabilistic(i, i, &bs);
            }
            Definition::Controlled(acts) => {
                let mut out: Vec<(String, NtId)> = Vec::with_capacity(acts.len());
                for a in acts {
                    let bs = collapse(&a.branches);
                    let direct = bs.len() == 1 && bs[0].prob.is_unit() && bs[0].rhs.len() == 1;
                    let target = if direct && !out.iter().any(|(_, t)| *t == bs[0].rhs[0]) {
                        bs[0].rhs[0]
                    } else {
                        let aux = b.fresh(format!("{}__act_{}", m.name(i), a.name), i);
                        b.probabilistic(i, aux, &bs);
                        aux
                    };
                    out.push((a.name.clone(), target));
                }
                b.set(i, SnfForm::Controlled(out));
            }
        }
    }

    let forms = b.forms.into_iter().map(|f| f.expect("every non-terminal gets a form")).collect();
    SnfObmdp::new(b.names, forms, b.origin, m.names().to_vec())
        .expect("normalization of a valid model yields a valid SNF model")
}
