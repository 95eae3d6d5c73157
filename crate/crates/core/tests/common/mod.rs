//! Oracles shared by the integration tests. None of them calls the
//! qualitative algorithms they are compared against.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use obmdp::instances::Cnf;
use obmdp::strategy::{Controller, StrategySpec};
use obmdp::{ExactSnf, NodeSet, NtId, Origin, SnfForm, SnfObmdp, TargetSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Target subsets (as bitmasks over `k`) that some finite derivation prefix
/// of depth at most `depth` rooted at each node labels. `None` iterates to
/// the fixpoint, which covers every finite prefix.
pub fn prefix_masks(m: &ExactSnf, k: &TargetSet, depth: Option<usize>) -> Vec<BTreeSet<u32>> {
    let own = |u: NtId| k.position(u).map_or(0u32, |i| 1 << i);
    let mut masks: Vec<BTreeSet<u32>> = m.ids().map(|u| BTreeSet::from([own(u)])).collect();
    let mut round = 0;
    loop {
        if depth.is_some_and(|d| round >= d) {
            return masks;
        }
        round += 1;
        let mut next = masks.clone();
        for u in m.ids() {
            let mine = own(u);
            let mut add = BTreeSet::new();
            match m.form(u) {
                SnfForm::Linear(rules) => {
                    for (t, _) in rules {
                        match t {
                            None => {
                                add.insert(mine);
                            }
                            Some(t) => add.extend(masks[t.index()].iter().map(|x| x | mine)),
                        }
                    }
                }
                SnfForm::Branching(l, r) => {
                    for a in &masks[l.index()] {
                        for b in &masks[r.index()] {
                            add.insert(a | b | mine);
                        }
                    }
                }
                SnfForm::Controlled(acts) => {
                    for (_, t) in acts {
                        add.extend(masks[t.index()].iter().map(|x| x | mine));
                    }
                }
            }
            next[u.index()].extend(add);
        }
        if next == masks {
            return masks;
        }
        masks = next;
    }
}

/// Nodes from which no finite prefix labels every target of `want`.
pub fn enumerated_zero(masks: &[BTreeSet<u32>], want: u32) -> NodeSet {
    let n = masks.len();
    NodeSet::from_ids(n, (0..n).filter(|&i| !masks[i].iter().any(|x| x & want == want)).map(NtId::new))
}

/// Plain reachability in the dependency graph, by repeated expansion.
pub fn graph_reaches(m: &ExactSnf, target: NtId) -> NodeSet {
    let mut set = NodeSet::from_ids(m.len(), [target]);
    loop {
        let before = set.len();
        for u in m.ids() {
            if m.successors(u).iter().any(|v| set.contains(*v)) {
                set.insert(u);
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

pub fn satisfiable(cnf: &Cnf) -> bool {
    assignments(cnf).any(|sat| sat)
}

pub fn valid(cnf: &Cnf) -> bool {
    assignments(cnf).all(|sat| sat)
}

fn assignments(cnf: &Cnf) -> impl Iterator<Item = bool> + '_ {
    (0u32..1 << cnf.num_vars).map(move |bits| {
        cnf.clauses.iter().all(|c| {
            c.iter().any(|&l| {
                let v = (bits >> (l.unsigned_abs() - 1)) & 1 == 1;
                if l > 0 {
                    v
                } else {
                    !v
                }
            })
        })
    })
}

/// Every deterministic static choice vector of `m`.
pub fn static_choices(m: &ExactSnf) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![vec![None; m.len()]];
    for u in m.ids() {
        let a = m.actions(u).len();
        if a == 0 {
            continue;
        }
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..a).map(move |i| {
                    let mut c = c.clone();
                    c[u.index()] = Some(i);
                    c
                })
            })
            .collect();
    }
    out
}

/// `m` with every controlled node restricted to its chosen action.
pub fn restrict(m: &ExactSnf, choice: &[Option<usize>]) -> ExactSnf {
    let forms = m
        .ids()
        .map(|u| match (m.form(u), choice[u.index()]) {
            (SnfForm::Controlled(acts), Some(a)) => SnfForm::Controlled(vec![acts[a].clone()]),
            (f, _) => f.clone(),
        })
        .collect();
    let origins: Vec<Origin> = m.origins().to_vec();
    SnfObmdp::new(m.names().to_vec(), forms, origins, m.source_names().to_vec()).expect("restriction is valid")
}

/// Uniformly random actions at every controlled node.
pub fn uniform(m: &ExactSnf) -> StrategySpec {
    let map: BTreeMap<String, Vec<String>> = m
        .ids()
        .filter(|u| !m.actions(*u).is_empty())
        .map(|u| (m.name(u).to_string(), m.actions(u).iter().map(|(a, _)| a.clone()).collect()))
        .collect();
    StrategySpec::new(0, vec![Controller::UniformOverListed { map }])
}

/// Some deterministic static strategy drawn from `seed`.
pub fn random_static(m: &ExactSnf, seed: u64) -> StrategySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = m
        .ids()
        .filter(|u| !m.actions(*u).is_empty())
        .map(|u| {
            let acts = m.actions(u);
            (m.name(u).to_string(), acts[rng.gen_range(0..acts.len())].0.clone())
        })
        .collect();
    StrategySpec::deterministic(map)
}
