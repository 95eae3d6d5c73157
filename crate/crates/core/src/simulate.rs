//! Sampling plays generation by generation.
//!
//! Every node draws from its own generator, keyed by the seed, the sample
//! index and the node's address in the tree. Results therefore do not depend
//! on traversal order or on the number of threads.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::DependencyGraph;
use crate::model::{Definition, Dir, NtId, Obmdp, SnfForm, SnfObmdp, TargetSet};
use crate::prob::Probability;
use crate::sets::{NodeSet, Subset};
use crate::strategy::{Compiled, State};

/// Limits on one sampled play.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_generations: u64,
    pub max_nodes: u64,
}

impl Budget {
    pub fn new(max_generations: u64, max_nodes: u64) -> Self {
        Budget { max_generations, max_nodes }
    }

    fn check(&self) -> Result<(), Error> {
        if self.max_generations == 0 || self.max_nodes == 0 {
            return Err(Error::Strategy("budget must be positive".into()));
        }
        Ok(())
    }
}

/// Sampling switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimOptions {
    pub budget: Budget,
    /// Keep the sampled tree in the result.
    pub record: bool,
    /// Drop subtrees that cannot produce a target not yet seen, and stop once
    /// all targets have been seen. Does not change which targets are reached.
    pub prune: bool,
}

impl SimOptions {
    pub fn new(budget: Budget) -> Self {
        SimOptions { budget, record: false, prune: true }
    }

    pub fn recording(budget: Budget) -> Self {
        SimOptions { budget, record: true, prune: false }
    }
}

/// A node of a recorded play.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayNode {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<Dir>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub generation: u64,
}

/// Outcome of one sampled play.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaySample {
    pub rng_seed: u64,
    pub sample: u64,
    /// Targets labelling some node of the sampled prefix.
    pub reached: Vec<String>,
    pub reached_all: bool,
    pub generations: u64,
    pub nodes: u64,
    /// A budget ran out while the play was still growing.
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub play: Option<Vec<PlayNode>>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn root_key(seed: u64, sample: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(sample.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Key of the draws made before the root is expanded.
fn mixture_key(seed: u64, sample: u64) -> u64 {
    splitmix(root_key(seed, sample) ^ 0x6D69_7874)
}

fn child_key(parent: u64, dir: Dir) -> u64 {
    let code = match dir {
        Dir::Left => 1,
        Dir::Right => 2,
        Dir::Unique => 3,
    };
    splitmix(parent.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ code)
}

/// A generator created on first use.
struct NodeRng {
    key: u64,
    rng: Option<ChaCha8Rng>,
}

impl NodeRng {
    fn new(key: u64) -> Self {
        NodeRng { key, rng: None }
    }

    fn get(&mut self) -> &mut ChaCha8Rng {
        let key = self.key;
        self.rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(key))
    }
}

impl RngCore for NodeRng {
    fn next_u32(&mut self) -> u32 {
        self.get().next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.get().next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.get().fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.get().try_fill_bytes(dest)
    }
}

/// Precomputed sampling tables for one model and target list.
pub struct Simulator<'a, P> {
    m: &'a SnfObmdp<P>,
    targets: TargetSet,
    bit: Vec<Option<usize>>,
    rules: Vec<Option<WeightedIndex<f64>>>,
    /// Vertices that can produce each target.
    reach: Vec<NodeSet>,
}

struct Live {
    label: NtId,
    state: State,
    key: u64,
    index: usize,
}

impl<'a, P: Probability> Simulator<'a, P> {
    pub fn new(m: &'a SnfObmdp<P>, targets: &TargetSet) -> Self {
        let g = DependencyGraph::new(m);
        let rules = m
            .ids()
            .map(|u| match m.form(u) {
                SnfForm::Linear(rules) if rules.len() > 1 => {
                    Some(WeightedIndex::new(rules.iter().map(|(_, p)| p.to_f64())).expect("positive weights"))
                }
                _ => None,
            })
            .collect();
        Simulator {
            m,
            targets: targets.clone(),
            bit: targets.bit_table(m.len()),
            rules,
            reach: targets.ids().iter().map(|&q| g.attractor(q)).collect(),
        }
    }

    fn useful(&self, reached: Subset) -> NodeSet {
        let mut out = NodeSet::empty(self.m.len());
        for q in self.targets.full().minus(reached).members() {
            out.union_with(&self.reach[q]);
        }
        out
    }

    /// Samples one play.
    pub fn run(
        &self,
        start: NtId,
        strategy: &Compiled,
        opts: SimOptions,
        seed: u64,
        sample: u64,
    ) -> Result<PlaySample, Error> {
        opts.budget.check()?;
        let m = self.m;
        let full = self.targets.full();
        let mut reached = Subset::EMPTY;
        let mut record: Vec<PlayNode> = Vec::new();
        let mark = |u: NtId, reached: &mut Subset| {
            if let Some(i) = self.bit[u.index()] {
                *reached = reached.union(Subset::single(i));
            }
        };
        mark(start, &mut reached);
        if opts.record {
            record.push(PlayNode { label: m.name(start).into(), parent: None, dir: None, action: None, generation: 0 });
        }
        let state = strategy.root(&mut NodeRng::new(mixture_key(seed, sample)));
        let mut frontier = vec![Live { label: start, state, key: root_key(seed, sample), index: 0 }];
        let mut nodes = 1u64;
        let mut generations = 0u64;
        let mut truncated = false;
        let mut useful = self.useful(reached);
        let mut kids: Vec<(Dir, NtId)> = Vec::with_capacity(2);
        'outer: while !frontier.is_empty() {
            if opts.prune && reached == full {
                break;
            }
            if generations >= opts.budget.max_generations {
                truncated = true;
                break;
            }
            generations += 1;
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for node in frontier {
                let u = node.label;
                let mut rng = NodeRng::new(node.key);
                kids.clear();
                let mut action = None;
                match m.form(u) {
                    SnfForm::Linear(rules) => {
                        let i = match &self.rules[u.index()] {
                            Some(w) => w.sample(&mut rng),
                            None => 0,
                        };
                        if let Some(c) = rules[i].0 {
                            kids.push((Dir::Unique, c));
                        }
                    }
                    SnfForm::Branching(l, r) => {
                        kids.push((Dir::Left, *l));
                        kids.push((Dir::Right, *r));
                    }
                    SnfForm::Controlled(acts) => {
                        let a = strategy.act(&node.state, u, &mut rng);
                        let a = if a < acts.len() { a } else { 0 };
                        action = Some(a);
                        kids.push((Dir::Unique, acts[a].1));
                    }
                }
                if kids.is_empty() {
                    continue;
                }
                let step = strategy.branch(&node.state, u, action, &kids, &mut rng);
                for (&(dir, c), state) in kids.iter().zip(step.children) {
                    let before = reached;
                    mark(c, &mut reached);
                    if reached != before {
                        useful = self.useful(reached);
                    }
                    nodes += 1;
                    let index = if opts.record {
                        record.push(PlayNode {
                            label: m.name(c).into(),
                            parent: Some(node.index),
                            dir: Some(dir),
                            action: action.map(|a| m.actions(u)[a].0.clone()),
                            generation: generations,
                        });
                        record.len() - 1
                    } else {
                        0
                    };
                    if !opts.prune || useful.contains(c) {
                        next.push(Live { label: c, state, key: child_key(node.key, dir), index });
                    }
                    if nodes >= opts.budget.max_nodes {
                        if !(opts.prune && reached == full) {
                            truncated = true;
                        }
                        break 'outer;
                    }
                }
            }
            frontier = next;
        }
        Ok(PlaySample {
            rng_seed: seed,
            sample,
            reached: self.targets.select(reached).into_iter().map(|q| m.name(q).to_string()).collect(),
            reached_all: reached == full,
            generations,
            nodes,
            truncated: truncated && reached != full,
            play: opts.record.then_some(record),
        })
    }

    /// Runs `samples` plays and counts those reaching every target.
    pub fn estimate(
        &self,
        start: NtId,
        strategy: &Compiled,
        samples: u64,
        budget: Budget,
        seed: u64,
    ) -> Result<Estimate, Error> {
        budget.check()?;
        if samples == 0 {
            return Err(Error::Strategy("at least one sample is needed".into()));
        }
        let opts = SimOptions::new(budget);
        let outcomes: Vec<(bool, bool)> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let s = self.run(start, strategy, opts, seed, i).expect("budget checked");
                (s.reached_all, s.truncated)
            })
            .collect();
        let hits = outcomes.iter().filter(|o| o.0).count() as u64;
        let truncated = outcomes.iter().filter(|o| o.1).count() as u64;
        Ok(Estimate::new(samples, hits, truncated))
    }
}

/// Fraction of samples reaching all targets; truncated samples count as
/// misses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub samples: u64,
    pub hits: u64,
    pub truncated: u64,
    pub p_hat: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(samples: u64, hits: u64, truncated: u64) -> Self {
        let p = hits as f64 / samples as f64;
        Estimate { samples, hits, truncated, p_hat: p, stderr: (p * (1.0 - p) / samples as f64).sqrt() }
    }
}

/// Samples `samples` plays and estimates the chance of reaching all targets.
pub fn estimate_joint_reach<P: Probability>(
    m: &SnfObmdp<P>,
    start: NtId,
    strategy: &Compiled,
    targets: &TargetSet,
    samples: u64,
    budget: Budget,
    seed: u64,
) -> Result<Estimate, Error> {
    Simulator::new(m, targets).estimate(start, strategy, samples, budget, seed)
}

/// Samples one play of an SNF model.
pub fn simulate<P: Probability>(
    m: &SnfObmdp<P>,
    start: NtId,
    strategy: &Compiled,
    targets: &TargetSet,
    opts: SimOptions,
    seed: u64,
    sample: u64,
) -> Result<PlaySample, Error> {
    Simulator::new(m, targets).run(start, strategy, opts, seed, sample)
}

/// Estimates the chance of reaching all `targets` in a general-form model
/// under a static strategy (action name weights per controlled non-terminal;
/// missing entries play the first action).
pub fn estimate_general<P: Probability>(
    m: &Obmdp<P>,
    start: NtId,
    strategy: &BTreeMap<String, Vec<(String, f64)>>,
    targets: &[NtId],
    samples: u64,
    budget: Budget,
    seed: u64,
) -> Result<Estimate, Error> {
    budget.check()?;
    let n = m.len();
    let block = |branches: &[crate::model::Branch<P>]| {
        WeightedIndex::new(branches.iter().map(|b| b.prob.to_f64())).expect("positive weights")
    };
    // Per non-terminal: a choice over actions, then per action a rule choice.
    let mut acts: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>> = vec![None; n];
    let mut rules: Vec<Vec<WeightedIndex<f64>>> = Vec::with_capacity(n);
    for u in m.ids() {
        match m.definition(u) {
            Definition::Probabilistic(b) => rules.push(vec![block(b)]),
            Definition::Controlled(defs) => {
                rules.push(defs.iter().map(|a| block(&a.branches)).collect());
                if let Some(dist) = strategy.get(m.name(u)) {
                    let idx = dist
                        .iter()
                        .map(|(a, _)| {
                            defs.iter()
                                .position(|d| &d.name == a)
                                .ok_or_else(|| Error::Strategy(format!("`{}` has no action `{a}`", m.name(u))))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let w =
                        WeightedIndex::new(dist.iter().map(|(_, w)| *w)).map_err(|e| Error::Strategy(e.to_string()))?;
                    acts[u.index()] = Some((idx, w));
                }
            }
        }
    }
    let mut bit = vec![None; n];
    for (i, q) in targets.iter().enumerate() {
        bit[q.index()] = Some(i);
    }
    let full = Subset::full(targets.len());
    let run = |sample: u64| -> (bool, bool) {
        let mut reached = Subset::EMPTY;
        let mark = |u: NtId, r: &mut Subset| {
            if let Some(i) = bit[u.index()] {
                *r = r.union(Subset::single(i));
            }
        };
        mark(start, &mut reached);
        let mut frontier = vec![(start, root_key(seed, sample))];
        let mut nodes = 1;
        for _ in 0..budget.max_generations {
            if frontier.is_empty() || reached == full {
                return (reached == full, false);
            }
            let mut next = Vec::new();
            for (u, key) in frontier {
                let mut rng = NodeRng::new(key);
                let (a, branches) = match m.definition(u) {
                    Definition::Probabilistic(b) => (0, b),
                    Definition::Controlled(defs) => {
                        let a = acts[u.index()].as_ref().map_or(0, |(idx, w)| idx[w.sample(&mut rng)]);
                        (a, &defs[a].branches)
                    }
                };
                let rule = &branches[rules[u.index()][a].sample(&mut rng)];
                for (j, &c) in rule.rhs.iter().enumerate() {
                    mark(c, &mut reached);
                    nodes += 1;
                    next.push((c, splitmix(key ^ splitmix(j as u64 + 17))));
                }
                if nodes >= budget.max_nodes {
                    return (reached == full, reached != full);
                }
            }
            frontier = next;
        }
        (reached == full, !frontier.is_empty() && reached != full)
    };
    let outcomes: Vec<(bool, bool)> = (0..samples).into_par_iter().map(run).collect();
    let hits = outcomes.iter().filter(|o| o.0).count() as u64;
    let truncated = outcomes.iter().filter(|o| o.1).count() as u64;
    Ok(Estimate::new(samples, hits, truncated))
}
