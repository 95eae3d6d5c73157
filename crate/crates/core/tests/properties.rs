//! Structural invariants checked on random models.

mod common;

use proptest::prelude::*;

use obmdp::dsl::{parse_obmdp, parse_snf, serialize_obmdp, serialize_snf};
use obmdp::graph::DependencyGraph;
use obmdp::instances::{random_general, random_snf, RandomParams};
use obmdp::multi::{almost_sure_sets, limit_sure_sets, single_target, zero_sets, Mode};
use obmdp::normalize::to_snf;
use obmdp::queries::{conj_lt1, inter_lt1};
use obmdp::simulate::{Budget, SimOptions, Simulator};
use obmdp::single::{avoid_set, positive_reach_set, sub_one_reach_set};
use obmdp::strategy::compile;
use obmdp::{Dir, ExactSnf, NodeSet, NtId, Origin, Rational, SnfForm, SnfObmdp, TargetSet};

use common::*;

fn model(n: usize, density: usize, seed: u64) -> ExactSnf {
    let params = RandomParams { nonterminals: n, density: [0.2, 0.5, 0.8][density], ..RandomParams::default() };
    random_snf(&params, seed)
}

fn targets(m: &ExactSnf, picks: &[usize]) -> TargetSet {
    let mut ids: Vec<NtId> = Vec::new();
    for &p in picks {
        let u = NtId::new(p % m.len());
        if !ids.contains(&u) {
            ids.push(u);
        }
    }
    TargetSet::new(ids).unwrap()
}

/// `m` with its non-terminals listed in the order given by `perm`.
fn permuted(m: &ExactSnf, perm: &[usize]) -> ExactSnf {
    let n = m.len();
    let mut new_id = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        new_id[old] = new;
    }
    let map = |u: NtId| NtId::new(new_id[u.index()]);
    let names: Vec<String> = perm.iter().map(|&o| m.name(NtId::new(o)).to_string()).collect();
    let forms = perm
        .iter()
        .map(|&o| match m.form(NtId::new(o)) {
            SnfForm::Linear(rules) => SnfForm::Linear(rules.iter().map(|(t, p)| (t.map(map), p.clone())).collect()),
            SnfForm::Branching(l, r) => SnfForm::Branching(map(*l), map(*r)),
            SnfForm::Controlled(acts) => SnfForm::Controlled(acts.iter().map(|(a, t)| (a.clone(), map(*t))).collect()),
        })
        .collect();
    let origins = (0..n).map(|i| Origin::Declared(NtId::new(i))).collect();
    SnfObmdp::new(names.clone(), forms, origins, names).unwrap()
}

/// Whether `c` is an end-component: strongly connected, and closed under the
/// successors of its probabilistic vertices.
fn is_end_component(g: &DependencyGraph, c: &NodeSet) -> bool {
    let Some(first) = c.iter().next() else { return false };
    if c.len() == 1 && !g.has_edge(first, first) {
        return false;
    }
    if c.iter().any(|u| g.is_probabilistic(u) && g.successors(u).iter().any(|v| !c.contains(*v))) {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = NodeSet::from_ids(c.universe(), [first]);
        let mut stack = vec![first];
        while let Some(u) = stack.pop() {
            let next = if forward { g.successors(u) } else { g.predecessors(u) };
            for &v in next {
                if c.contains(v) && seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen.len() == c.len()
    };
    reach(true) && reach(false)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn snf_text_round_trip(n in 1usize..12, d in 0usize..3, seed in any::<u64>()) {
        let m = model(n, d, seed);
        let back: ExactSnf = parse_snf(&serialize_snf(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn general_text_round_trip(n in 1usize..8, seed in any::<u64>()) {
        let g = random_general(n, seed);
        let back = parse_obmdp::<Rational>(&serialize_obmdp(&g)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn normalization_is_exact_and_idempotent(n in 1usize..8, seed in any::<u64>()) {
        let g = random_general(n, seed);
        let s = to_snf(&g);
        for u in s.ids() {
            if let SnfForm::Linear(rules) = s.form(u) {
                let total: Rational = rules.iter().map(|(_, p)| p.clone()).sum();
                prop_assert_eq!(total, Rational::from_integer(1.into()), "{}", s.name(u));
            }
        }
        for u in g.ids() {
            let v = s.project_start(g.name(u)).unwrap();
            prop_assert_eq!(s.name(v), g.name(u));
            prop_assert!(!s.is_auxiliary(v));
        }
        let again = to_snf(&s.to_obmdp());
        prop_assert_eq!(serialize_snf(&again), serialize_snf(&s));
    }

    #[test]
    fn relabeling_does_not_change_answers(
        n in 2usize..9,
        d in 0usize..3,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<usize>(), 1..4),
        shuffle in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let m = model(n, d, seed);
        let k = targets(&m, &picks);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let p = permuted(&m, &perm);
        let names: Vec<&str> = k.ids().iter().map(|&u| m.name(u)).collect();
        let kp = p.targets(&names).unwrap();
        let sorted = |mut v: Vec<String>| { v.sort(); v };
        prop_assert_eq!(
            sorted(m.project(&zero_sets(&m, &k).zero(k.full()))),
            sorted(p.project(&zero_sets(&p, &kp).zero(kp.full())))
        );
        for mode in [Mode::AlmostSure, Mode::LimitSure] {
            let a = obmdp::multi::reach_sets(&m, &k, mode);
            let b = obmdp::multi::reach_sets(&p, &kp, mode);
            prop_assert_eq!(sorted(m.project(a.winning(k.full()))), sorted(p.project(b.winning(kp.full()))));
        }
    }

    #[test]
    fn sets_form_a_chain_and_shrink_with_more_targets(
        n in 2usize..10,
        d in 0usize..3,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<usize>(), 1..4),
    ) {
        let m = model(n, d, seed);
        let k = targets(&m, &picks);
        let z = zero_sets(&m, &k);
        let ls = limit_sure_sets(&m, &k);
        let as_ = almost_sure_sets(&m, &k);
        let all = k.full();
        for s in all.subsets() {
            prop_assert!(NodeSet::is_subset(as_.winning(s), ls.winning(s)));
            prop_assert!(NodeSet::is_subset(ls.winning(s), z.nonzero(s)));
            for t in all.subsets() {
                if s.is_subset(t) {
                    prop_assert!(NodeSet::is_subset(as_.winning(t), as_.winning(s)));
                    prop_assert!(NodeSet::is_subset(ls.winning(t), ls.winning(s)));
                    prop_assert!(NodeSet::is_subset(z.nonzero(t), z.nonzero(s)));
                }
            }
        }
    }

    #[test]
    fn single_target_sets_nest(n in 2usize..10, d in 0usize..3, seed in any::<u64>()) {
        let m = model(n, d, seed);
        for q in m.ids() {
            let pos = positive_reach_set(&m, q).set;
            let as_ = single_target(&m, q, Mode::AlmostSure).f;
            let ls = single_target(&m, q, Mode::LimitSure).f;
            prop_assert_eq!(&as_, &ls);
            prop_assert!(NodeSet::is_subset(&as_, &pos));
            prop_assert_eq!(&pos, &graph_reaches(&m, q));
            let only = NodeSet::from_ids(m.len(), [q]);
            let avoid = avoid_set(&m, &only).set;
            let sub = sub_one_reach_set(&m, q).set;
            prop_assert!(NodeSet::is_subset(&avoid, &sub));
            prop_assert!(pos.complement().is_subset(&avoid));
            prop_assert!(!avoid.contains(q) && !sub.contains(q));
        }
    }

    #[test]
    fn conjunction_below_one_implies_intersection_below_one(
        n in 2usize..10,
        d in 0usize..3,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<usize>(), 1..4),
    ) {
        let m = model(n, d, seed);
        let k = targets(&m, &picks);
        prop_assert!(NodeSet::is_subset(&conj_lt1(&m, k.ids()).set, &inter_lt1(&m, k.ids()).set));
    }

    #[test]
    fn attractor_matches_reachability(n in 1usize..12, d in 0usize..3, seed in any::<u64>()) {
        let m = model(n, d, seed);
        let g = DependencyGraph::new(&m);
        for q in m.ids() {
            prop_assert_eq!(g.attractor(q), graph_reaches(&m, q));
        }
    }

    #[test]
    fn mecs_are_the_maximal_end_components(n in 1usize..9, d in 0usize..3, seed in any::<u64>()) {
        let m = model(n, d, seed);
        let g = DependencyGraph::new(&m);
        let mecs: Vec<NodeSet> =
            g.mecs(&g.all()).components.iter().map(|c| NodeSet::from_ids(n, c.iter().copied())).collect();
        for (i, a) in mecs.iter().enumerate() {
            prop_assert!(is_end_component(&g, a));
            for b in &mecs[i + 1..] {
                prop_assert!(a.iter().all(|u| !b.contains(u)));
            }
        }
        for bits in 1u32..1 << n {
            let c = NodeSet::from_ids(n, (0..n).filter(|i| bits >> i & 1 == 1).map(NtId::new));
            if is_end_component(&g, &c) {
                prop_assert!(mecs.iter().any(|mec| NodeSet::is_subset(&c, mec)), "{:?} is in no MEC", m.project(&c));
            }
        }
    }

    #[test]
    fn computations_are_deterministic(
        n in 2usize..9,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<usize>(), 1..4),
    ) {
        let m = model(n, 1, seed);
        let k = targets(&m, &picks);
        let a = format!("{:?}", almost_sure_sets(&m, &k).rows);
        let b = format!("{:?}", almost_sure_sets(&m, &k).rows);
        prop_assert_eq!(a, b);
        let a = format!("{:?}", limit_sure_sets(&m, &k).rows);
        let b = format!("{:?}", limit_sure_sets(&m, &k).rows);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_set_starts_never_reach_everything(
        n in 2usize..10,
        d in 0usize..3,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<usize>(), 1..4),
    ) {
        let m = model(n, d, seed);
        let k = targets(&m, &picks);
        let z = zero_sets(&m, &k).zero(k.full());
        let strategy = compile(&m, &uniform(&m)).unwrap();
        let sim = Simulator::new(&m, &k);
        for u in z.iter() {
            for i in 0..8 {
                let play = sim.run(u, &strategy, SimOptions::new(Budget::new(60, 5_000)), seed, i).unwrap();
                prop_assert!(!play.reached_all, "{} reached every target", m.name(u));
            }
        }
    }

    #[test]
    fn pruning_keeps_the_reached_targets(
        n in 2usize..10,
        d in 0usize..3,
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<usize>(), 1..4),
    ) {
        let m = model(n, d, seed);
        let k = targets(&m, &picks);
        let strategy = compile(&m, &uniform(&m)).unwrap();
        let sim = Simulator::new(&m, &k);
        let budget = Budget::new(40, 20_000);
        let full = SimOptions { budget, record: false, prune: false };
        for u in m.ids() {
            for i in 0..4 {
                let a = sim.run(u, &strategy, SimOptions::new(budget), seed, i).unwrap();
                let b = sim.run(u, &strategy, full, seed, i).unwrap();
                if !a.truncated && !b.truncated {
                    prop_assert_eq!(a.reached_all, b.reached_all);
                }
                if b.reached_all && !a.truncated {
                    prop_assert!(a.reached_all);
                }
            }
        }
    }

    #[test]
    fn recorded_plays_follow_the_rules(n in 2usize..10, d in 0usize..3, seed in any::<u64>()) {
        let m = model(n, d, seed);
        let k = TargetSet::new(vec![NtId::new(0)]).unwrap();
        let strategy = compile(&m, &random_static(&m, seed)).unwrap();
        let sim = Simulator::new(&m, &k);
        let opts = SimOptions::recording(Budget::new(12, 400));
        for u in m.ids() {
            let a = sim.run(u, &strategy, opts, seed, 3).unwrap();
            let b = sim.run(u, &strategy, opts, seed, 3).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            let play = a.play.unwrap();
            prop_assert_eq!(&play[0].label, m.name(u));
            for node in &play[1..] {
                let parent = &play[node.parent.unwrap()];
                let pu = m.id(&parent.label).unwrap();
                let child = m.id(&node.label).unwrap();
                prop_assert_eq!(node.generation, parent.generation + 1);
                let ok = match m.form(pu) {
                    SnfForm::Linear(rules) => rules.iter().any(|(t, _)| *t == Some(child)),
                    SnfForm::Branching(l, r) => match node.dir.unwrap() {
                        Dir::Left => *l == child,
                        Dir::Right => *r == child,
                        Dir::Unique => false,
                    },
                    SnfForm::Controlled(acts) => {
                        let a = node.action.as_deref().unwrap();
                        acts.iter().any(|(name, t)| name == a && *t == child)
                    }
                };
                prop_assert!(ok, "{} cannot produce {}", parent.label, node.label);
            }
        }
    }
}
