//! Witness strategies built from the provenance of the qualitative sets.
//!
//! Every membership reason becomes a local rule: a recorded action, or a
//! hand-over of a child to the witness of a smaller target subset. Limit-sure
//! witnesses additionally need an error budget, split as the proofs prescribe:
//! a split of the subset between two children asks each side for
//! `1 - sqrt(1 - eps)`, and so does a switch out of an end-component.

use std::collections::{BTreeMap, HashMap};

use crate::error::Error;
use crate::model::{Dir, NtId, SnfForm, SnfObmdp, TargetSet};
use crate::multi::{zero_bounds, DReason, FReason, Mode, ReachSets, ZeroReason, ZeroSets};
use crate::prob::{ceil_log, Probability};
use crate::sets::{NodeSet, Subset};
use crate::single::{positive_reach_set, PositiveReach};
use crate::strategy::{Controller, CounterSpec, StrategySpec, Trigger, WorkerChoice, WorkerSlot};

/// A synthesized strategy with what is known about its guarantee.
#[derive(Clone, Debug)]
pub struct Witness<P> {
    pub spec: StrategySpec,
    pub start: NtId,
    pub subset: Subset,
    /// Proven lower bound on the joint reach probability, when one is tracked.
    pub bound: Option<P>,
    pub epsilon: Option<P>,
    /// Counter thresholds of the limit-sure switches, in creation order.
    pub thresholds: Vec<u64>,
}

/// A worker slot node with the worker controller started in each direction.
type SlotMeta = (NtId, Vec<(Dir, usize)>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Free,
    Pos(Subset),
    Dtab(Subset, usize),
    Queen(Subset),
    Worker(Subset, usize),
    Closure(Subset, usize),
    Mec(Subset, usize, usize),
}

struct Builder<'a, P> {
    m: &'a SnfObmdp<P>,
    targets: &'a TargetSet,
    zero: &'a ZeroSets,
    reach: Option<&'a ReachSets>,
    pos: Vec<PositiveReach<P>>,
    eps: Vec<P>,
    ctrls: Vec<Option<Controller>>,
    memo: HashMap<Key, usize>,
    thresholds: Vec<u64>,
}

fn trig<P: Probability>(m: &SnfObmdp<P>, u: NtId, dir: Option<Dir>, child: Option<NtId>, target: usize) -> Trigger {
    Trigger { parent: Some(m.name(u).into()), dir, child: child.map(|c| m.name(c).into()), target }
}

fn child_of<P>(form: &SnfForm<P>, dir: Dir) -> NtId {
    match (form, dir) {
        (SnfForm::Branching(l, _), Dir::Left) => *l,
        (SnfForm::Branching(_, r), Dir::Right) => *r,
        _ => unreachable!("directions only on branching forms"),
    }
}

impl<'a, P: Probability> Builder<'a, P> {
    fn new(m: &'a SnfObmdp<P>, targets: &'a TargetSet, zero: &'a ZeroSets, reach: Option<&'a ReachSets>) -> Self {
        Builder {
            m,
            targets,
            zero,
            reach,
            pos: targets.ids().iter().map(|&q| positive_reach_set(m, q)).collect(),
            eps: Vec::new(),
            ctrls: Vec::new(),
            memo: HashMap::new(),
            thresholds: Vec::new(),
        }
    }

    fn limit_sure(&self) -> bool {
        self.reach.is_some_and(|r| r.mode == Mode::LimitSure)
    }

    fn eps(&mut self, lvl: usize) -> P {
        while self.eps.len() <= lvl {
            let prev = self.eps.last().expect("level 0 set").clone();
            let s = (P::one() - prev).sqrt_upper();
            self.eps.push(P::one() - s);
        }
        self.eps[lvl].clone()
    }

    fn name(&self, u: NtId) -> String {
        self.m.name(u).into()
    }

    fn act_name(&self, u: NtId, a: usize) -> String {
        self.m.actions(u)[a].0.clone()
    }

    fn get(&mut self, key: Key) -> usize {
        if let Some(&i) = self.memo.get(&key) {
            return i;
        }
        let me = self.ctrls.len();
        self.ctrls.push(None);
        self.memo.insert(key, me);
        let c = self.build(key, me);
        self.ctrls[me] = Some(c);
        me
    }

    fn push(&mut self, c: Controller) -> usize {
        self.ctrls.push(Some(c));
        self.ctrls.len() - 1
    }

    fn finish(self, entry: usize, start: NtId, subset: Subset, bound: Option<P>) -> Witness<P> {
        let controllers = self.ctrls.into_iter().map(|c| c.expect("built")).collect();
        Witness {
            spec: StrategySpec::new(entry, controllers),
            start,
            subset,
            bound,
            epsilon: self.eps.first().cloned(),
            thresholds: self.thresholds,
        }
    }

    fn delegate(&mut self, map: BTreeMap<String, String>, triggers: Vec<Trigger>) -> Controller {
        let base = self.push(Controller::DeterministicMap { map });
        Controller::DelegateOnEntry { base, triggers }
    }

    fn build(&mut self, key: Key, me: usize) -> Controller {
        match key {
            Key::Free => Controller::DeterministicMap { map: BTreeMap::new() },
            Key::Pos(s) => self.build_pos(s),
            Key::Dtab(s, lvl) => self.build_dtab(s, lvl),
            Key::Queen(s) => self.build_queen(s),
            Key::Worker(s, q) => self.build_worker(s, q),
            Key::Closure(s, lvl) => self.build_closure(s, lvl, me),
            Key::Mec(s, lvl, ci) => self.build_mec(s, lvl, ci),
        }
    }

    fn build_pos(&mut self, s: Subset) -> Controller {
        let m = self.m;
        if s.is_empty() {
            return Controller::DeterministicMap { map: BTreeMap::new() };
        }
        if s.len() == 1 {
            let q = s.members().next().expect("singleton");
            let map = m
                .ids()
                .filter_map(|u| self.pos[q].choice[u.index()].map(|a| (self.name(u), self.act_name(u, a))))
                .collect();
            return Controller::DeterministicMap { map };
        }
        let row = self.zero.row(s);
        let mut map = BTreeMap::new();
        let mut triggers = Vec::new();
        for &u in &row.order {
            match row.reasons[u.index()].expect("member") {
                ZeroReason::Positive => {}
                ZeroReason::TargetLinear { target, child } => {
                    let t = self.get(Key::Pos(s.without(target)));
                    triggers.push(trig(m, u, None, Some(child), t));
                    let free = self.get(Key::Free);
                    triggers.push(trig(m, u, None, None, free));
                }
                ZeroReason::TargetControlled { target, action } => {
                    map.insert(self.name(u), self.act_name(u, action));
                    let t = self.get(Key::Pos(s.without(target)));
                    triggers.push(trig(m, u, None, None, t));
                }
                ZeroReason::TargetSplit { target, left } => {
                    let rest = s.without(target);
                    let l = self.get(Key::Pos(left));
                    let r = self.get(Key::Pos(rest.minus(left)));
                    triggers.push(trig(m, u, Some(Dir::Left), None, l));
                    triggers.push(trig(m, u, Some(Dir::Right), None, r));
                }
                ZeroReason::Split { left } => {
                    let l = self.get(Key::Pos(left));
                    let r = self.get(Key::Pos(s.minus(left)));
                    triggers.push(trig(m, u, Some(Dir::Left), None, l));
                    triggers.push(trig(m, u, Some(Dir::Right), None, r));
                }
                ZeroReason::Linear { child } => {
                    let free = self.get(Key::Free);
                    for &c in m.successors(u) {
                        if c != child {
                            triggers.push(trig(m, u, None, Some(c), free));
                        }
                    }
                }
                ZeroReason::Controlled { action } => {
                    map.insert(self.name(u), self.act_name(u, action));
                }
                ZeroReason::Branch { dir } => {
                    let free = self.get(Key::Free);
                    triggers.push(trig(m, u, Some(dir.other()), None, free));
                }
            }
        }
        self.delegate(map, triggers)
    }

    fn reach(&self) -> &'a ReachSets {
        self.reach.expect("reach sets")
    }

    /// Controller for a play starting at `c` that must reach all of `s`.
    fn entry(&mut self, s: Subset, lvl: usize, c: NtId) -> usize {
        if s.is_empty() {
            return self.get(Key::Free);
        }
        let row = self.reach().row(s);
        let ls = self.limit_sure() && s.len() >= 2;
        if row.d.contains(c) {
            self.get(Key::Dtab(s, if ls { lvl } else { 0 }))
        } else if !row.core.contains(c) {
            self.get(Key::Free)
        } else if !ls {
            self.get(Key::Queen(s))
        } else if let Some(ci) = row.component_of(c) {
            self.get(Key::Mec(s, lvl, ci))
        } else {
            self.get(Key::Closure(s, lvl))
        }
    }

    fn build_dtab(&mut self, s: Subset, lvl: usize) -> Controller {
        let m = self.m;
        let row = self.reach().row(s);
        let split = if self.limit_sure() { lvl + 1 } else { lvl };
        let mut map = BTreeMap::new();
        let mut triggers = Vec::new();
        for &u in &row.d_order {
            let form = m.form(u);
            match row.d_reasons[u.index()].expect("member") {
                DReason::Seed => {
                    let free = self.get(Key::Free);
                    triggers.push(trig(m, u, None, None, free));
                }
                DReason::TargetLinear { target } => {
                    for &c in m.successors(u) {
                        let t = self.entry(s.without(target), lvl, c);
                        triggers.push(trig(m, u, None, Some(c), t));
                    }
                }
                DReason::TargetControlled { target, action } => {
                    map.insert(self.name(u), self.act_name(u, action));
                    let t = self.entry(s.without(target), lvl, m.actions(u)[action].1);
                    triggers.push(trig(m, u, None, None, t));
                }
                DReason::TargetSplit { target, left } => {
                    let rest = s.without(target);
                    let l = self.entry(left, split, child_of(form, Dir::Left));
                    let r = self.entry(rest.minus(left), split, child_of(form, Dir::Right));
                    triggers.push(trig(m, u, Some(Dir::Left), None, l));
                    triggers.push(trig(m, u, Some(Dir::Right), None, r));
                }
                DReason::Split { left } => {
                    let l = self.entry(left, split, child_of(form, Dir::Left));
                    let r = self.entry(s.minus(left), split, child_of(form, Dir::Right));
                    triggers.push(trig(m, u, Some(Dir::Left), None, l));
                    triggers.push(trig(m, u, Some(Dir::Right), None, r));
                }
                DReason::Linear => {}
                DReason::Controlled { action } => {
                    map.insert(self.name(u), self.act_name(u, action));
                }
                DReason::Branch { dir } => {
                    let free = self.get(Key::Free);
                    triggers.push(trig(m, u, Some(dir.other()), None, free));
                }
            }
        }
        self.delegate(map, triggers)
    }

    /// Worker choices at branching members of `region`: the queen child stays
    /// in `region`, the other child is positive for some target of `s`.
    fn slot_choices(&mut self, s: Subset, region: &NodeSet, u: NtId) -> Vec<(Dir, usize)> {
        let SnfForm::Branching(l, r) = *self.m.form(u) else { return vec![] };
        let mut out = Vec::new();
        for (dir, queen, off) in [(Dir::Left, l, r), (Dir::Right, r, l)] {
            if !region.contains(queen) {
                continue;
            }
            for q in s.members() {
                if self.zero.nonzero(Subset::single(q)).contains(off) {
                    out.push((dir, q));
                }
            }
        }
        out
    }

    /// A queen restricted to `region`: uniform over actions into the region,
    /// children outside handed to `outside`, and workers at branching nodes.
    fn queen_worker(
        &mut self,
        s: Subset,
        region: &NodeSet,
        worker_key: impl Fn(usize) -> Key,
        mut outside: impl FnMut(&mut Self, NtId) -> usize,
    ) -> (Controller, Vec<SlotMeta>) {
        let m = self.m;
        let mut uniform = BTreeMap::new();
        let mut triggers = Vec::new();
        let mut slots = Vec::new();
        let mut slot_meta = Vec::new();
        for u in region.iter() {
            match m.form(u) {
                SnfForm::Controlled(acts) => {
                    let inside: Vec<String> = acts
                        .iter()
                        .enumerate()
                        .filter(|(_, (_, t))| region.contains(*t))
                        .map(|(a, _)| self.act_name(u, a))
                        .collect();
                    uniform.insert(self.name(u), inside);
                }
                SnfForm::Linear(_) => {
                    for &c in m.successors(u) {
                        if !region.contains(c) {
                            let t = outside(self, c);
                            triggers.push(trig(m, u, None, Some(c), t));
                        }
                    }
                }
                SnfForm::Branching(l, _) => {
                    let choices = self.slot_choices(s, region, u);
                    if choices.is_empty() {
                        let off = if region.contains(*l) { Dir::Right } else { Dir::Left };
                        let free = self.get(Key::Free);
                        triggers.push(trig(m, u, Some(off), None, free));
                    } else {
                        let mut list = Vec::new();
                        for &(dir, q) in &choices {
                            let worker = self.get(worker_key(q));
                            list.push(WorkerChoice { queen: dir, target: self.name(self.targets.get(q)), worker });
                        }
                        slots.push(WorkerSlot { at: self.name(u), choices: list });
                        slot_meta.push((u, choices));
                    }
                }
            }
        }
        let base = self.push(Controller::UniformOverListed { map: uniform });
        let queen = self.push(Controller::DelegateOnEntry { base, triggers });
        (Controller::QueenWorker { queen, slots }, slot_meta)
    }

    fn build_queen(&mut self, s: Subset) -> Controller {
        let row = self.reach().row(s);
        let core = row.core.clone();
        let d = row.d.clone();
        let dtab = Key::Dtab(s, 0);
        self.queen_worker(
            s,
            &core,
            |q| Key::Worker(s, q),
            |b, c| if d.contains(c) { b.get(dtab) } else { b.get(Key::Free) },
        )
        .0
    }

    /// Almost-sure worker for target `q`: follows the positive path, and a
    /// child that falls off the path into the core becomes a queen for `s`.
    fn build_worker(&mut self, s: Subset, q: usize) -> Controller {
        let m = self.m;
        let path = self.get(Key::Pos(Subset::single(q)));
        let queen = self.get(Key::Queen(s));
        let core = self.reach().row(s).core.clone();
        let target = self.targets.get(q);
        let next = self.pos[q].next.clone();
        let mut triggers = Vec::new();
        for u in m.ids().filter(|&u| u != target) {
            match m.form(u) {
                SnfForm::Linear(_) => {
                    for &c in m.successors(u) {
                        if core.contains(c) && next[u.index()] != Some(c) {
                            triggers.push(trig(m, u, None, Some(c), queen));
                        }
                    }
                }
                SnfForm::Branching(l, r) => {
                    for (dir, c) in [(Dir::Left, *l), (Dir::Right, *r)] {
                        let on_path = next[u.index()] == Some(c) && !(l == r && dir == Dir::Right);
                        if core.contains(c) && !on_path {
                            triggers.push(trig(m, u, Some(dir), None, queen));
                        }
                    }
                }
                SnfForm::Controlled(_) => {}
            }
        }
        Controller::DelegateOnEntry { base: path, triggers }
    }

    fn build_closure(&mut self, s: Subset, lvl: usize, me: usize) -> Controller {
        let m = self.m;
        let row = self.reach().row(s);
        let mut map = BTreeMap::new();
        let mut triggers = Vec::new();
        for &u in &row.f_order {
            let form = m.form(u);
            let hand = |b: &mut Self, dir: Option<Dir>, c: NtId, triggers: &mut Vec<Trigger>| {
                let t = b.entry(s, lvl, c);
                if t != me {
                    triggers.push(trig(m, u, dir, Some(c), t));
                }
            };
            match row.f_reasons[u.index()].expect("member") {
                FReason::Component(_) => {}
                FReason::Linear { .. } => {
                    for &c in m.successors(u) {
                        hand(self, None, c, &mut triggers);
                    }
                }
                FReason::Controlled { action } => {
                    map.insert(self.name(u), self.act_name(u, action));
                    hand(self, None, m.actions(u)[action].1, &mut triggers);
                }
                FReason::Branch { dir } => {
                    hand(self, Some(dir), child_of(form, dir), &mut triggers);
                    let free = self.get(Key::Free);
                    triggers.push(trig(m, u, Some(dir.other()), None, free));
                }
            }
        }
        self.delegate(map, triggers)
    }

    fn build_mec(&mut self, s: Subset, lvl: usize, ci: usize) -> Controller {
        let m = self.m;
        let row = self.reach().row(s);
        let comp = &row.components[ci];
        let region = NodeSet::from_ids(m.len(), comp.nodes.iter().copied());
        let (qw, meta) = self.queen_worker(s, &region, |q| Key::Pos(Subset::single(q)), |b, c| b.entry(s, lvl, c));
        let Some((at, action)) = comp.escape.filter(|_| comp.hit != s) else {
            return qw;
        };
        let hit = comp.hit;
        let k = self.targets.len();
        // Smallest worker bound over the counted targets.
        let mut b: Option<P> = None;
        for (u, choices) in &meta {
            for &(dir, q) in choices {
                if hit.contains(q) {
                    let off = child_of(m.form(*u), dir.other());
                    let v = self.pos[q].bound[off.index()].clone().expect("positive member");
                    b = Some(match b {
                        Some(x) => P::min_of(x, v),
                        None => v,
                    });
                }
            }
        }
        let b = b.unwrap_or_else(|| hit.members().map(|q| self.pos[q].min_bound()).fold(P::one(), P::min_of));
        let next = self.eps(lvl + 1);
        let eps_child = next / P::from_u64(k as u64);
        let base = P::one() - b / P::from_u64(k as u64);
        let d = ceil_log(&base, &eps_child).unwrap_or(0);
        self.thresholds.push(d);
        let counters = hit
            .members()
            .map(|q| CounterSpec {
                target: self.name(self.targets.get(q)),
                nodes: meta
                    .iter()
                    .filter(|(_, ch)| ch.iter().any(|(_, x)| *x == q))
                    .map(|(u, _)| self.name(*u))
                    .collect(),
            })
            .collect();
        let inner = self.push(qw);
        let after_switch = self.entry(s.minus(hit), lvl + 1, m.actions(at)[action].1);
        Controller::CounterSwitch {
            counters,
            threshold: d,
            switch_at: self.name(at),
            switch_action: self.act_name(at, action),
            inner,
            after_switch,
        }
    }
}

/// Deterministic witness reaching all of `s` with positive probability.
pub fn positive_witness<P: Probability>(
    m: &SnfObmdp<P>,
    zero: &ZeroSets,
    s: Subset,
    start: NtId,
) -> Result<Witness<P>, Error> {
    if !zero.nonzero(s).contains(start) {
        return Err(Error::NoWitness(m.name(start).into()));
    }
    let bound = zero_bounds(m, zero)[s.index()][start.index()].clone();
    let mut b = Builder::new(m, &zero.targets, zero, None);
    let entry = b.get(Key::Pos(s));
    Ok(b.finish(entry, start, s, bound))
}

/// Queen/worker witness reaching all of `s` with probability one.
pub fn almost_sure_witness<P: Probability>(
    m: &SnfObmdp<P>,
    reach: &ReachSets,
    s: Subset,
    start: NtId,
) -> Result<Witness<P>, Error> {
    if reach.mode != Mode::AlmostSure {
        return Err(Error::Strategy("almost-sure witnesses need almost-sure sets".into()));
    }
    if !reach.winning(s).contains(start) {
        return Err(Error::NoWitness(m.name(start).into()));
    }
    let mut b = Builder::new(m, &reach.targets, &reach.zero, Some(reach));
    let entry = b.entry(s, 0, start);
    Ok(b.finish(entry, start, s, None))
}

/// Witness reaching all of `s` with probability at least `1 - epsilon`.
pub fn limit_sure_witness<P: Probability>(
    m: &SnfObmdp<P>,
    reach: &ReachSets,
    s: Subset,
    start: NtId,
    epsilon: &P,
) -> Result<Witness<P>, Error> {
    if reach.mode != Mode::LimitSure {
        return Err(Error::Strategy("limit-sure witnesses need limit-sure sets".into()));
    }
    if !(*epsilon > P::zero() && *epsilon < P::one()) {
        return Err(Error::Strategy("epsilon must lie strictly between 0 and 1".into()));
    }
    if !reach.winning(s).contains(start) {
        return Err(Error::NoWitness(m.name(start).into()));
    }
    let mut b = Builder::new(m, &reach.targets, &reach.zero, Some(reach));
    b.eps.push(epsilon.clone());
    let entry = b.entry(s, 0, start);
    let bound = Some(P::one() - epsilon.clone());
    Ok(b.finish(entry, start, s, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::example1;
    use crate::multi::{almost_sure_sets, limit_sure_sets, zero_sets};
    use crate::prob::parse_ratio;
    use crate::strategy::Controller;

    #[test]
    fn positive_witness_of_the_running_example() {
        let m = example1();
        let k = m.targets(&["R1", "R2"]).unwrap();
        let z = zero_sets(&m, &k);
        let w = positive_witness(&m, &z, k.full(), m.id("M").unwrap()).unwrap();
        assert_eq!(w.bound, parse_ratio("1/2"));
        assert!(positive_witness(&m, &z, k.full(), m.id("A").unwrap()).is_err());
    }

    #[test]
    fn limit_sure_switch_of_the_running_example() {
        let m = example1();
        let k = m.targets(&["R1", "R2"]).unwrap();
        let ls = limit_sure_sets(&m, &k);
        let eps = parse_ratio("1/10").unwrap();
        let w = limit_sure_witness(&m, &ls, k.full(), m.id("M").unwrap(), &eps).unwrap();
        assert_eq!(w.thresholds.len(), 1);
        let entry = &w.spec.controllers[w.spec.entry];
        assert!(matches!(entry, Controller::CounterSwitch { switch_action, .. } if switch_action == "b"));
        let as_ = almost_sure_sets(&m, &k);
        assert!(almost_sure_witness(&m, &as_, k.full(), m.id("M").unwrap()).is_err());
    }
}
