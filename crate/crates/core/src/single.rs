//! Single-target qualitative sets.

use crate::graph::DependencyGraph;
use crate::model::{NtId, SnfForm, SnfObmdp};
use crate::multi::{self, Mode, ReachRow};
use crate::prob::Probability;
use crate::sets::NodeSet;

/// Start symbols from which some strategy reaches the target with positive probability.
#[derive(Clone, Debug)]
pub struct PositiveReach<P> {
    pub target: NtId,
    pub set: NodeSet,
    /// For controlled members, the action taken by the path-following witness.
    pub choice: Vec<Option<usize>>,
    /// Next vertex on the followed path.
    pub next: Vec<Option<NtId>>,
    /// Lower bound on the witness's reach probability from each member.
    pub bound: Vec<Option<P>>,
}

impl<P: Probability> PositiveReach<P> {
    /// Smallest bound over all members.
    pub fn min_bound(&self) -> P {
        self.bound.iter().flatten().cloned().fold(P::one(), P::min_of)
    }
}

/// Computes the positive-reach set and its deterministic static witness.
///
/// The witness follows a shortest path in the dependency graph; the product
/// of the probabilistic steps on the path bounds the reach probability.
pub fn positive_reach_set<P: Probability>(m: &SnfObmdp<P>, target: NtId) -> PositiveReach<P> {
    let g = DependencyGraph::new(m);
    positive_reach_in(m, &g, target)
}

pub(crate) fn positive_reach_in<P: Probability>(
    m: &SnfObmdp<P>,
    g: &DependencyGraph,
    target: NtId,
) -> PositiveReach<P> {
    let n = m.len();
    let dist = g.distances_to(target);
    let mut order: Vec<NtId> = m.ids().filter(|i| dist[i.index()].is_some()).collect();
    order.sort_by_key(|i| (dist[i.index()], *i));
    let mut choice = vec![None; n];
    let mut next = vec![None; n];
    let mut bound: Vec<Option<P>> = vec![None; n];
    for &u in &order {
        let du = dist[u.index()].expect("member");
        if u == target {
            bound[u.index()] = Some(P::one());
            continue;
        }
        let closer = |v: &NtId| dist[v.index()] == Some(du - 1);
        let (v, factor) = match m.form(u) {
            SnfForm::Linear(rules) => {
                let (t, p) = rules
                    .iter()
                    .find(|(t, _)| t.as_ref().is_some_and(closer))
                    .expect("a member has a successor one step closer");
                (t.expect("non-empty"), p.clone())
            }
            SnfForm::Branching(l, r) => (if closer(l) { *l } else { *r }, P::one()),
            SnfForm::Controlled(acts) => {
                let a = acts.iter().position(|(_, t)| closer(t)).expect("closer action");
                choice[u.index()] = Some(a);
                (acts[a].1, P::one())
            }
        };
        next[u.index()] = Some(v);
        let b = bound[v.index()].clone().expect("closer vertices come first");
        bound[u.index()] = Some(factor * b);
    }
    PositiveReach { target, set: NodeSet::from_ids(n, order), choice, next, bound }
}

/// Greatest subset of `init` closed under `keep`.
pub(crate) fn greatest_fixpoint(init: NodeSet, keep: impl Fn(NtId, &NodeSet) -> bool) -> NodeSet {
    let mut w = init;
    loop {
        let drop: Vec<NtId> = w.iter().filter(|&u| !keep(u, &w)).collect();
        if drop.is_empty() {
            return w;
        }
        for u in drop {
            w.remove(u);
        }
    }
}

/// A set together with one action per controlled member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceSet {
    pub set: NodeSet,
    pub choice: Vec<Option<usize>>,
}

fn with_choices<P: Probability>(m: &SnfObmdp<P>, set: NodeSet) -> ChoiceSet {
    let choice = m
        .ids()
        .map(|u| {
            if !set.contains(u) {
                return None;
            }
            m.actions(u).iter().position(|(_, t)| set.contains(*t))
        })
        .collect();
    ChoiceSet { set, choice }
}

/// Start symbols from which some strategy keeps the probability of reaching
/// any of `targets` below one.
pub fn sub_one_reach_set_of<P: Probability>(m: &SnfObmdp<P>, targets: &NodeSet) -> ChoiceSet {
    // Grow from the surely-avoiding set; a node joins once one of its moves
    // escapes with positive probability into what is already known.
    let ChoiceSet { mut set, mut choice } = avoid_set(m, targets);
    loop {
        let mut grew = false;
        for u in m.ids() {
            if set.contains(u) || targets.contains(u) {
                continue;
            }
            let joins = match m.form(u) {
                SnfForm::Linear(rules) => rules.iter().any(|(t, _)| t.is_none_or(|t| set.contains(t))),
                SnfForm::Branching(l, r) => set.contains(*l) && set.contains(*r),
                SnfForm::Controlled(acts) => match acts.iter().position(|(_, t)| set.contains(*t)) {
                    Some(a) => {
                        choice[u.index()] = Some(a);
                        true
                    }
                    None => false,
                },
            };
            if joins {
                set.insert(u);
                grew = true;
            }
        }
        if !grew {
            return ChoiceSet { set, choice };
        }
    }
}

/// Start symbols with some strategy reaching `target` with probability below one.
pub fn sub_one_reach_set<P: Probability>(m: &SnfObmdp<P>, target: NtId) -> ChoiceSet {
    sub_one_reach_set_of(m, &NodeSet::from_ids(m.len(), [target]))
}

/// Start symbols from which some strategy never reaches any of `targets`.
pub fn avoid_set<P: Probability>(m: &SnfObmdp<P>, targets: &NodeSet) -> ChoiceSet {
    let set = greatest_fixpoint(targets.complement(), |u, w| match m.form(u) {
        SnfForm::Linear(rules) => rules.iter().all(|(t, _)| t.is_none_or(|t| w.contains(t))),
        SnfForm::Controlled(acts) => acts.iter().any(|(_, t)| w.contains(*t)),
        SnfForm::Branching(l, r) => w.contains(*l) && w.contains(*r),
    });
    with_choices(m, set)
}

/// Start symbols from which some strategy reaches `target` almost surely.
pub fn almost_sure_reach_set<P: Probability>(m: &SnfObmdp<P>, target: NtId) -> ReachRow {
    multi::single_target(m, target, Mode::AlmostSure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_obmdp;
    use crate::normalize::to_snf;
    use crate::prob::parse_ratio;
    use crate::ExactSnf;

    fn example1() -> ExactSnf {
        to_snf(
            &parse_obmdp(
                "nonterminal M controlled { a -> M A; b -> R2; }
                 nonterminal A probabilistic { 1/2 -> R1; 1/2 -> ; }
                 nonterminal R1 probabilistic { 1 -> ; }
                 nonterminal R2 probabilistic { 1 -> ; }",
            )
            .unwrap(),
        )
    }

    #[test]
    fn positive_sets_of_the_running_example() {
        let m = example1();
        let r1 = m.id("R1").unwrap();
        let p = positive_reach_set(&m, r1);
        assert_eq!(m.project(&p.set), ["M", "A", "R1"]);
        assert_eq!(p.bound[m.id("M").unwrap().index()], Some(parse_ratio("1/2").unwrap()));
        assert_eq!(p.choice[m.id("M").unwrap().index()], Some(0));
        let r2 = m.id("R2").unwrap();
        let p = positive_reach_set(&m, r2);
        assert_eq!(m.project(&p.set), ["M", "R2"]);
        assert_eq!(p.choice[m.id("M").unwrap().index()], Some(1));
    }

    #[test]
    fn sub_one_and_avoid() {
        let m = example1();
        let r1 = m.id("R1").unwrap();
        let r2 = m.id("R2").unwrap();
        // M can play b and never produce R1; A misses R1 half the time.
        assert_eq!(m.project(&sub_one_reach_set(&m, r1).set), ["M", "A", "R2"]);
        assert_eq!(m.project(&sub_one_reach_set(&m, r2).set), ["M", "A", "R1"]);
        assert_eq!(m.project(&avoid_set(&m, &NodeSet::from_ids(m.len(), [r1])).set), ["M", "R2"]);
    }

    #[test]
    fn sub_one_witness_escapes_the_target() {
        let m = example1();
        let r1 = m.id("R1").unwrap();
        let w = sub_one_reach_set(&m, r1);
        let mm = m.id("M").unwrap();
        assert_eq!(w.choice[mm.index()], m.action_index(mm, "b"));
    }

    #[test]
    fn sub_one_needs_a_finite_escape() {
        // X keeps doubling itself, so some copy hits Q almost surely.
        let m: ExactSnf = to_snf(
            &parse_obmdp(
                "nonterminal X probabilistic { 1/2 -> Q; 1/2 -> X X; }
                 nonterminal Q probabilistic { 1 -> ; }",
            )
            .unwrap(),
        );
        let q = m.id("Q").unwrap();
        assert!(!sub_one_reach_set(&m, q).set.contains(m.id("X").unwrap()));
    }

    #[test]
    fn almost_sure_single_targets() {
        let m = example1();
        let as1 = almost_sure_reach_set(&m, m.id("R1").unwrap());
        assert_eq!(m.project(&as1.f), ["M", "R1"]);
        let as2 = almost_sure_reach_set(&m, m.id("R2").unwrap());
        assert_eq!(m.project(&as2.f), ["M", "R2"]);
    }
}
