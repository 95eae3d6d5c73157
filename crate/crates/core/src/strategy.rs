//! Finite strategy descriptions and their runtime.
//!
//! A [`StrategySpec`] is an arena of controllers. Each play node carries a
//! controller [`State`] that is derived from its parent's state, so every
//! decision depends only on the node's ancestor history (and on independent
//! random draws made along it).

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Dir, NtId, SnfObmdp};
use crate::prob::Probability;
use crate::sets::NodeSet;

pub const FORMAT: &str = "obmdp-strategy";
pub const VERSION: u32 = 1;

/// A serializable strategy: controllers refer to each other by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub format: String,
    pub version: u32,
    pub entry: usize,
    pub controllers: Vec<Controller>,
}

/// Redirects a child to a fresh controller when all given fields match.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<Dir>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<String>,
    pub target: usize,
}

/// Counts visits to `nodes` at which a worker for `target` was assigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSpec {
    pub target: String,
    pub nodes: Vec<String>,
}

/// One way to split a branching node into a queen child and a worker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerChoice {
    pub queen: Dir,
    pub target: String,
    pub worker: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSlot {
    pub at: String,
    pub choices: Vec<WorkerChoice>,
}

/// Controller kinds. Non-terminals missing from a map play their first action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Controller {
    /// The same action distribution at every node of a non-terminal.
    StaticMap {
        map: BTreeMap<String, Vec<(String, f64)>>,
    },
    DeterministicMap {
        map: BTreeMap<String, String>,
    },
    /// Uniform choice among the listed actions.
    UniformOverListed {
        map: BTreeMap<String, Vec<String>>,
    },
    /// Plays `base`; a child matching a trigger restarts with the trigger's
    /// controller as if the play started there. First match wins.
    DelegateOnEntry {
        base: usize,
        triggers: Vec<Trigger>,
    },
    /// Plays `inner` and counts; once every counter reaches `threshold`, plays
    /// `switch_action` at `switch_at` and hands that child to `after_switch`.
    CounterSwitch {
        counters: Vec<CounterSpec>,
        threshold: u64,
        switch_at: String,
        switch_action: String,
        inner: usize,
        after_switch: usize,
    },
    /// Plays `queen`; at a slot node one child continues with the queen and
    /// the other starts a worker, choosing uniformly among the slot's choices.
    QueenWorker {
        queen: usize,
        slots: Vec<WorkerSlot>,
    },
    /// Draws one of `options` uniformly where it starts and plays it for the
    /// whole subtree.
    Mixture {
        options: Vec<usize>,
    },
}

impl StrategySpec {
    pub fn new(entry: usize, controllers: Vec<Controller>) -> Self {
        StrategySpec { format: FORMAT.into(), version: VERSION, entry, controllers }
    }

    /// The strategy that always plays the first action.
    pub fn free() -> Self {
        StrategySpec::new(0, vec![Controller::DeterministicMap { map: BTreeMap::new() }])
    }

    pub fn deterministic(map: BTreeMap<String, String>) -> Self {
        StrategySpec::new(0, vec![Controller::DeterministicMap { map }])
    }

    pub fn static_map(map: BTreeMap<String, Vec<(String, f64)>>) -> Self {
        StrategySpec::new(0, vec![Controller::StaticMap { map }])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategies serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let spec: StrategySpec = serde_json::from_str(text).map_err(|e| Error::Strategy(e.to_string()))?;
        if spec.format != FORMAT {
            return Err(Error::Strategy(format!("unknown format `{}`", spec.format)));
        }
        if spec.version != VERSION {
            return Err(Error::Strategy(format!("unsupported version {}", spec.version)));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug)]
struct CTrigger {
    dir: Option<Dir>,
    child: Option<NtId>,
    target: usize,
}

/// Allowed actions, their weights and a sampler, per node.
type StaticRow = Option<(Vec<usize>, Vec<f64>, WeightedIndex<f64>)>;

#[derive(Clone, Debug)]
enum Ctrl {
    Static(Vec<StaticRow>),
    Det(Vec<usize>),
    Uniform(Vec<Vec<usize>>),
    Delegate {
        base: usize,
        triggers: Vec<Vec<CTrigger>>,
    },
    Counter {
        counters: Vec<(NtId, NodeSet)>,
        threshold: u64,
        switch_at: NtId,
        switch_action: usize,
        inner: usize,
        after: usize,
    },
    Queen {
        queen: usize,
        slots: Vec<Vec<(Dir, NtId, usize)>>,
    },
    Mixture(Vec<usize>),
}

/// A strategy resolved against one model.
#[derive(Clone, Debug)]
pub struct Compiled {
    ctrls: Vec<Ctrl>,
    entry: usize,
}

/// Controller state of one play node.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    ctrl: u32,
    local: Local,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Local {
    Plain,
    Nested(Box<State>),
    Counter(Vec<u64>, Box<State>),
}

/// Result of expanding one node: child states and the worker target, if a
/// worker was started.
#[derive(Clone, Debug)]
pub struct Step {
    pub children: Vec<State>,
    pub worker: Option<NtId>,
    stay: Vec<bool>,
}

impl State {
    pub fn controller(&self) -> usize {
        self.ctrl as usize
    }

    /// Counter values of the innermost counting controller, if any.
    pub fn counters(&self) -> Option<&[u64]> {
        match &self.local {
            Local::Plain => None,
            Local::Counter(c, _) => Some(c),
            Local::Nested(s) => s.counters(),
        }
    }
}

fn lookup<P: Probability>(m: &SnfObmdp<P>, name: &str) -> Result<NtId, Error> {
    m.id(name).ok_or_else(|| Error::Strategy(format!("unknown non-terminal `{name}`")))
}

fn action<P: Probability>(m: &SnfObmdp<P>, u: NtId, name: &str) -> Result<usize, Error> {
    m.action_index(u, name).ok_or_else(|| Error::Strategy(format!("`{}` has no action `{name}`", m.name(u))))
}

impl Compiled {
    /// Resolves names and checks the controller references.
    pub fn new<P: Probability>(m: &SnfObmdp<P>, spec: &StrategySpec) -> Result<Self, Error> {
        let count = spec.controllers.len();
        let check = |i: usize| {
            if i < count {
                Ok(i)
            } else {
                Err(Error::Strategy(format!("controller index {i} out of range")))
            }
        };
        check(spec.entry)?;
        let n = m.len();
        let mut ctrls = Vec::with_capacity(count);
        for c in &spec.controllers {
            let ctrl = match c {
                Controller::StaticMap { map } => {
                    let mut table = vec![None; n];
                    for (name, dist) in map {
                        let u = lookup(m, name)?;
                        let acts = dist.iter().map(|(a, _)| action(m, u, a)).collect::<Result<Vec<_>, _>>()?;
                        let w = WeightedIndex::new(dist.iter().map(|(_, w)| *w))
                            .map_err(|e| Error::Strategy(format!("`{name}`: {e}")))?;
                        let total: f64 = dist.iter().map(|(_, w)| *w).sum();
                        table[u.index()] = Some((acts, dist.iter().map(|(_, w)| w / total).collect(), w));
                    }
                    Ctrl::Static(table)
                }
                Controller::DeterministicMap { map } => {
                    let mut table = vec![0; n];
                    for (name, a) in map {
                        let u = lookup(m, name)?;
                        table[u.index()] = action(m, u, a)?;
                    }
                    Ctrl::Det(table)
                }
                Controller::UniformOverListed { map } => {
                    let mut table = vec![Vec::new(); n];
                    for (name, acts) in map {
                        let u = lookup(m, name)?;
                        table[u.index()] = acts.iter().map(|a| action(m, u, a)).collect::<Result<_, _>>()?;
                    }
                    Ctrl::Uniform(table)
                }
                Controller::DelegateOnEntry { base, triggers } => {
                    let mut table: Vec<Vec<(usize, CTrigger)>> = vec![Vec::new(); n];
                    for (order, t) in triggers.iter().enumerate() {
                        let ct = CTrigger {
                            dir: t.dir,
                            child: t.child.as_deref().map(|c| lookup(m, c)).transpose()?,
                            target: check(t.target)?,
                        };
                        match &t.parent {
                            Some(p) => table[lookup(m, p)?.index()].push((order, ct)),
                            None => {
                                for row in table.iter_mut() {
                                    row.push((order, ct.clone()));
                                }
                            }
                        }
                    }
                    let triggers = table
                        .into_iter()
                        .map(|mut row| {
                            row.sort_by_key(|(o, _)| *o);
                            row.into_iter().map(|(_, t)| t).collect()
                        })
                        .collect();
                    Ctrl::Delegate { base: check(*base)?, triggers }
                }
                Controller::CounterSwitch { counters, threshold, switch_at, switch_action, inner, after_switch } => {
                    let at = lookup(m, switch_at)?;
                    let counters = counters
                        .iter()
                        .map(|cs| {
                            let nodes = cs.nodes.iter().map(|x| lookup(m, x)).collect::<Result<Vec<_>, _>>()?;
                            Ok((lookup(m, &cs.target)?, NodeSet::from_ids(n, nodes)))
                        })
                        .collect::<Result<Vec<_>, Error>>()?;
                    Ctrl::Counter {
                        counters,
                        threshold: *threshold,
                        switch_at: at,
                        switch_action: action(m, at, switch_action)?,
                        inner: check(*inner)?,
                        after: check(*after_switch)?,
                    }
                }
                Controller::QueenWorker { queen, slots } => {
                    let mut table = vec![Vec::new(); n];
                    for slot in slots {
                        let u = lookup(m, &slot.at)?;
                        for ch in &slot.choices {
                            table[u.index()].push((ch.queen, lookup(m, &ch.target)?, check(ch.worker)?));
                        }
                    }
                    Ctrl::Queen { queen: check(*queen)?, slots: table }
                }
                Controller::Mixture { options } => {
                    if options.is_empty() {
                        return Err(Error::Strategy("a mixture needs at least one option".into()));
                    }
                    Ctrl::Mixture(options.iter().map(|o| check(*o)).collect::<Result<_, _>>()?)
                }
            };
            ctrls.push(ctrl);
        }
        // Nested controllers are initialized eagerly, so their chains must end.
        let nested = |c: &Ctrl| -> Vec<usize> {
            match c {
                Ctrl::Delegate { base, .. } => vec![*base],
                Ctrl::Counter { inner, .. } => vec![*inner],
                Ctrl::Queen { queen, .. } => vec![*queen],
                Ctrl::Mixture(options) => options.clone(),
                _ => Vec::new(),
            }
        };
        // 0 unvisited, 1 on the stack, 2 done
        let mut mark = vec![0u8; count];
        for start in 0..count {
            if mark[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            mark[start] = 1;
            while let Some((c, i)) = stack.pop() {
                let next = nested(&ctrls[c]);
                if i < next.len() {
                    stack.push((c, i + 1));
                    let d = next[i];
                    match mark[d] {
                        0 => {
                            mark[d] = 1;
                            stack.push((d, 0));
                        }
                        1 => return Err(Error::Strategy(format!("controller {d} nests itself"))),
                        _ => {}
                    }
                } else {
                    mark[c] = 2;
                }
            }
        }
        Ok(Compiled { ctrls, entry: spec.entry })
    }

    /// State of the root node; `rng` resolves mixtures.
    pub fn root(&self, rng: &mut dyn RngCore) -> State {
        self.init(self.entry, rng)
    }

    /// Fresh state of controller `c`.
    pub fn init(&self, c: usize, rng: &mut dyn RngCore) -> State {
        let local = match &self.ctrls[c] {
            Ctrl::Static(_) | Ctrl::Det(_) | Ctrl::Uniform(_) => Local::Plain,
            Ctrl::Delegate { base, .. } => Local::Nested(Box::new(self.init(*base, rng))),
            Ctrl::Queen { queen, .. } => Local::Nested(Box::new(self.init(*queen, rng))),
            Ctrl::Counter { counters, inner, .. } => {
                Local::Counter(vec![0; counters.len()], Box::new(self.init(*inner, rng)))
            }
            Ctrl::Mixture(options) => {
                let o = if options.len() == 1 { options[0] } else { options[rng.gen_range(0..options.len())] };
                Local::Nested(Box::new(self.init(o, rng)))
            }
        };
        State { ctrl: c as u32, local }
    }

    fn inner<'s>(&self, st: &'s State) -> &'s State {
        match &st.local {
            Local::Nested(s) | Local::Counter(_, s) => s,
            Local::Plain => unreachable!("composite controllers carry nested state"),
        }
    }

    fn switching(&self, st: &State, u: NtId) -> Option<usize> {
        if let (Ctrl::Counter { threshold, switch_at, switch_action, .. }, Local::Counter(counts, _)) =
            (&self.ctrls[st.controller()], &st.local)
        {
            if *switch_at == u && counts.iter().all(|c| c >= threshold) {
                return Some(*switch_action);
            }
        }
        None
    }

    /// Action probabilities at a controlled node with `arity` actions.
    pub fn distribution(&self, st: &State, u: NtId, arity: usize) -> Vec<f64> {
        let mut out = vec![0.0; arity];
        let pick = |a: usize| if a < arity { a } else { 0 };
        match &self.ctrls[st.controller()] {
            Ctrl::Static(t) => match &t[u.index()] {
                Some((acts, probs, _)) => {
                    for (a, p) in acts.iter().zip(probs) {
                        out[pick(*a)] += p;
                    }
                }
                None => out[0] = 1.0,
            },
            Ctrl::Det(t) => out[pick(t[u.index()])] = 1.0,
            Ctrl::Uniform(t) => {
                let acts = &t[u.index()];
                if acts.is_empty() {
                    out[0] = 1.0;
                } else {
                    for a in acts {
                        out[pick(*a)] += 1.0 / acts.len() as f64;
                    }
                }
            }
            Ctrl::Counter { .. } => {
                if let Some(a) = self.switching(st, u) {
                    out[pick(a)] = 1.0;
                } else {
                    return self.distribution(self.inner(st), u, arity);
                }
            }
            Ctrl::Delegate { .. } | Ctrl::Queen { .. } | Ctrl::Mixture(_) => {
                return self.distribution(self.inner(st), u, arity)
            }
        }
        out
    }

    /// Chooses an action at a controlled node.
    pub fn act(&self, st: &State, u: NtId, rng: &mut dyn RngCore) -> usize {
        match &self.ctrls[st.controller()] {
            Ctrl::Static(t) => match &t[u.index()] {
                Some((acts, _, w)) => acts[w.sample(rng)],
                None => 0,
            },
            Ctrl::Det(t) => t[u.index()],
            Ctrl::Uniform(t) => {
                let acts = &t[u.index()];
                match acts.len() {
                    0 => 0,
                    1 => acts[0],
                    len => acts[rng.gen_range(0..len)],
                }
            }
            Ctrl::Counter { .. } => match self.switching(st, u) {
                Some(a) => a,
                None => self.act(self.inner(st), u, rng),
            },
            Ctrl::Delegate { .. } | Ctrl::Queen { .. } | Ctrl::Mixture(_) => self.act(self.inner(st), u, rng),
        }
    }

    /// Child states of a node labelled `u`. `action` is the action played at
    /// a controlled node; `kids` lists the children in order.
    pub fn branch(
        &self,
        st: &State,
        u: NtId,
        action: Option<usize>,
        kids: &[(Dir, NtId)],
        rng: &mut dyn RngCore,
    ) -> Step {
        match &self.ctrls[st.controller()] {
            Ctrl::Static(_) | Ctrl::Det(_) | Ctrl::Uniform(_) => {
                Step { children: vec![st.clone(); kids.len()], worker: None, stay: vec![true; kids.len()] }
            }
            Ctrl::Delegate { triggers, .. } => {
                let inner = self.branch(self.inner(st), u, action, kids, rng);
                let mut children = Vec::with_capacity(kids.len());
                let mut stay = Vec::with_capacity(kids.len());
                for (i, ((dir, child), cs)) in kids.iter().zip(inner.children).enumerate() {
                    let hit = triggers[u.index()]
                        .iter()
                        .find(|t| t.dir.is_none_or(|d| d == *dir) && t.child.is_none_or(|c| c == *child));
                    match hit {
                        Some(t) => {
                            children.push(self.init(t.target, rng));
                            stay.push(false);
                        }
                        None if inner.stay[i] => {
                            children.push(State { ctrl: st.ctrl, local: Local::Nested(Box::new(cs)) });
                            stay.push(true);
                        }
                        None => {
                            children.push(cs);
                            stay.push(false);
                        }
                    }
                }
                Step { children, worker: inner.worker, stay }
            }
            Ctrl::Queen { slots, .. } => {
                let inner = self.branch(self.inner(st), u, action, kids, rng);
                let wrap = |cs: State, stays: bool| {
                    if stays {
                        (State { ctrl: st.ctrl, local: Local::Nested(Box::new(cs)) }, true)
                    } else {
                        (cs, false)
                    }
                };
                let choices = &slots[u.index()];
                if kids.len() == 2 && !choices.is_empty() {
                    let (qdir, target, worker) =
                        choices[if choices.len() == 1 { 0 } else { rng.gen_range(0..choices.len()) }];
                    let qi = if qdir == Dir::Left { 0 } else { 1 };
                    let mut children = inner.children;
                    let mut stay = inner.stay;
                    let (qs, qstay) = wrap(children[qi].clone(), stay[qi]);
                    children[qi] = qs;
                    stay[qi] = qstay;
                    children[1 - qi] = self.init(worker, rng);
                    stay[1 - qi] = false;
                    Step { children, worker: Some(target), stay }
                } else {
                    let (children, stay) = inner.children.into_iter().zip(inner.stay).map(|(c, s)| wrap(c, s)).unzip();
                    Step { children, worker: inner.worker, stay }
                }
            }
            Ctrl::Mixture(_) => {
                let inner = self.branch(self.inner(st), u, action, kids, rng);
                let children = inner
                    .children
                    .into_iter()
                    .zip(&inner.stay)
                    .map(|(c, s)| if *s { State { ctrl: st.ctrl, local: Local::Nested(Box::new(c)) } } else { c })
                    .collect();
                Step { children, worker: inner.worker, stay: inner.stay }
            }
            Ctrl::Counter { counters, threshold, inner: _, after, .. } => {
                let Local::Counter(counts, _) = &st.local else { unreachable!("counter state") };
                if action.is_some() && self.switching(st, u) == action {
                    let fresh = self.init(*after, rng);
                    return Step { children: vec![fresh; kids.len()], worker: None, stay: vec![false; kids.len()] };
                }
                let inner = self.branch(self.inner(st), u, action, kids, rng);
                let mut next = counts.clone();
                if inner.stay.iter().any(|s| *s) {
                    if let Some(w) = inner.worker {
                        for (j, (t, nodes)) in counters.iter().enumerate() {
                            if *t == w && nodes.contains(u) && next[j] < *threshold {
                                next[j] += 1;
                            }
                        }
                    }
                }
                let mut children = Vec::with_capacity(kids.len());
                for (cs, s) in inner.children.into_iter().zip(&inner.stay) {
                    if *s {
                        children.push(State { ctrl: st.ctrl, local: Local::Counter(next.clone(), Box::new(cs)) });
                    } else {
                        children.push(cs);
                    }
                }
                Step { children, worker: inner.worker, stay: inner.stay }
            }
        }
    }
}

/// Compiles a spec against a model, keeping a name index for reports.
pub fn compile<P: Probability>(m: &SnfObmdp<P>, spec: &StrategySpec) -> Result<Compiled, Error> {
    Compiled::new(m, spec)
}
