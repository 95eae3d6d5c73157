//! Multi-target qualitative sets.
//!
//! For a target list `K` and every subset `K'`, three sets are computed:
//! the zero set `Z` (every strategy reaches all of `K'` with probability 0),
//! the limit-sure set (probability arbitrarily close to 1) and the almost-sure
//! set (probability exactly 1). Subsets are processed in increasing order, so
//! the rows of all proper subsets are available when a row is built.
//!
//! Every membership records the rule that caused it. Strategy synthesis
//! replays these reasons.

use serde::Serialize;

use crate::graph::DependencyGraph;
use crate::model::{Dir, NtId, SnfForm, SnfObmdp, TargetSet};
use crate::prob::Probability;
use crate::sets::{NodeSet, Subset};
use crate::single::positive_reach_in;

/// Which of the two probability-one questions is being answered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    LimitSure,
    AlmostSure,
}

/// Why a vertex has positive probability of reaching a target subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ZeroReason {
    /// Member of the single-target positive-reach set.
    Positive,
    /// A target whose child reaches the remaining targets.
    TargetLinear {
        target: usize,
        child: NtId,
    },
    TargetControlled {
        target: usize,
        action: usize,
    },
    /// A branching target; the left child takes `left`, the right the rest.
    TargetSplit {
        target: usize,
        left: Subset,
    },
    /// The left child takes `left`, the right child the rest.
    Split {
        left: Subset,
    },
    Linear {
        child: NtId,
    },
    Controlled {
        action: usize,
    },
    Branch {
        dir: Dir,
    },
}

impl ZeroReason {
    /// Step label of the rule.
    pub fn step(&self) -> &'static str {
        match self {
            ZeroReason::Positive => "I",
            ZeroReason::TargetLinear { .. }
            | ZeroReason::TargetControlled { .. }
            | ZeroReason::TargetSplit { .. }
            | ZeroReason::Split { .. } => "II.1",
            ZeroReason::Linear { .. } => "II.2(a)",
            ZeroReason::Controlled { .. } => "II.2(b)",
            ZeroReason::Branch { .. } => "II.2(c)",
        }
    }
}

/// Positive-probability vertices for one target subset.
#[derive(Clone, Debug)]
pub struct ZeroRow {
    pub subset: Subset,
    /// Complement of the zero set.
    pub nonzero: NodeSet,
    pub reasons: Vec<Option<ZeroReason>>,
    /// Members in insertion order.
    pub order: Vec<NtId>,
}

/// Zero sets for every subset of a target list.
#[derive(Clone, Debug)]
pub struct ZeroSets {
    pub targets: TargetSet,
    pub rows: Vec<ZeroRow>,
}

impl ZeroSets {
    pub fn row(&self, s: Subset) -> &ZeroRow {
        &self.rows[s.index()]
    }

    pub fn nonzero(&self, s: Subset) -> &NodeSet {
        &self.rows[s.index()].nonzero
    }

    pub fn zero(&self, s: Subset) -> NodeSet {
        self.rows[s.index()].nonzero.complement()
    }

    pub fn full(&self) -> &ZeroRow {
        self.row(self.targets.full())
    }
}

pub(crate) struct Ctx<'a, P> {
    pub m: &'a SnfObmdp<P>,
    pub graph: DependencyGraph,
    pub bit: Vec<Option<usize>>,
    pub n: usize,
}

impl<'a, P: Probability> Ctx<'a, P> {
    pub fn new(m: &'a SnfObmdp<P>, targets: &TargetSet) -> Self {
        Ctx { m, graph: DependencyGraph::new(m), bit: targets.bit_table(m.len()), n: m.len() }
    }

    fn target_in(&self, u: NtId, s: Subset) -> Option<usize> {
        self.bit[u.index()].filter(|&i| s.contains(i))
    }
}

/// First `kl` of `pool` with `left(kl)` and `right(pool - kl)`.
fn find_split(
    pool: Subset,
    proper: bool,
    left: impl Fn(Subset) -> bool,
    right: impl Fn(Subset) -> bool,
) -> Option<Subset> {
    pool.subsets().filter(|kl| !proper || (!kl.is_empty() && *kl != pool)).find(|&kl| left(kl) && right(pool.minus(kl)))
}

/// Computes the zero sets for every subset of `targets`.
pub fn zero_sets<P: Probability>(m: &SnfObmdp<P>, targets: &TargetSet) -> ZeroSets {
    let ctx = Ctx::new(m, targets);
    zero_sets_in(&ctx, targets)
}

pub(crate) fn zero_sets_in<P: Probability>(ctx: &Ctx<'_, P>, targets: &TargetSet) -> ZeroSets {
    let m = ctx.m;
    let n = ctx.n;
    let k = targets.len();
    let mut rows: Vec<ZeroRow> = Vec::with_capacity(1 << k);
    for mask in 0..(1u32 << k) {
        let s = Subset(mask);
        let row = match s.len() {
            0 => ZeroRow { subset: s, nonzero: NodeSet::full(n), reasons: vec![None; n], order: vec![] },
            1 => {
                let q = targets.get(s.members().next().expect("singleton"));
                let attr = ctx.graph.attractor(q);
                let order = attr.to_vec();
                let mut reasons = vec![None; n];
                for u in &order {
                    reasons[u.index()] = Some(ZeroReason::Positive);
                }
                ZeroRow { subset: s, nonzero: attr, reasons, order }
            }
            _ => {
                let nz = |t: Subset, u: NtId| rows[t.index()].nonzero.contains(u);
                let mut set = NodeSet::empty(n);
                let mut reasons = vec![None; n];
                let mut order = Vec::new();
                for u in m.ids() {
                    let mut reason = None;
                    if let Some(i) = ctx.target_in(u, s) {
                        let rest = s.without(i);
                        reason = match m.form(u) {
                            SnfForm::Linear(rules) => rules
                                .iter()
                                .filter_map(|(t, _)| *t)
                                .find(|&c| nz(rest, c))
                                .map(|child| ZeroReason::TargetLinear { target: i, child }),
                            SnfForm::Controlled(acts) => acts
                                .iter()
                                .position(|(_, t)| nz(rest, *t))
                                .map(|action| ZeroReason::TargetControlled { target: i, action }),
                            SnfForm::Branching(l, r) => find_split(rest, false, |a| nz(a, *l), |b| nz(b, *r))
                                .map(|left| ZeroReason::TargetSplit { target: i, left }),
                        };
                    }
                    if reason.is_none() {
                        if let SnfForm::Branching(l, r) = m.form(u) {
                            reason = find_split(s, true, |a| nz(a, *l), |b| nz(b, *r))
                                .map(|left| ZeroReason::Split { left });
                        }
                    }
                    if reason.is_some() {
                        set.insert(u);
                        reasons[u.index()] = reason;
                        order.push(u);
                    }
                }
                // Closure: propagate backwards from new members.
                let mut i = 0;
                while i < order.len() {
                    let v = order[i];
                    i += 1;
                    for &u in ctx.graph.predecessors(v) {
                        if set.contains(u) {
                            continue;
                        }
                        let reason = match m.form(u) {
                            SnfForm::Linear(_) => Some(ZeroReason::Linear { child: v }),
                            SnfForm::Controlled(acts) => {
                                acts.iter().position(|(_, t)| *t == v).map(|action| ZeroReason::Controlled { action })
                            }
                            SnfForm::Branching(l, _) => {
                                Some(ZeroReason::Branch { dir: if *l == v { Dir::Left } else { Dir::Right } })
                            }
                        };
                        set.insert(u);
                        reasons[u.index()] = reason;
                        order.push(u);
                    }
                }
                ZeroRow { subset: s, nonzero: set, reasons, order }
            }
        };
        rows.push(row);
    }
    ZeroSets { targets: targets.clone(), rows }
}

/// Lower bound on the probability that the replayed positive witness reaches
/// every target of `s`, from each member of the positive set.
pub fn zero_bounds<P: Probability>(m: &SnfObmdp<P>, z: &ZeroSets) -> Vec<Vec<Option<P>>> {
    let g = DependencyGraph::new(m);
    let n = m.len();
    let mut out: Vec<Vec<Option<P>>> = Vec::with_capacity(z.rows.len());
    for row in &z.rows {
        let s = row.subset;
        let b = match s.len() {
            0 => vec![Some(P::one()); n],
            1 => {
                let q = z.targets.get(s.members().next().expect("singleton"));
                positive_reach_in(m, &g, q).bound
            }
            _ => {
                let mut b: Vec<Option<P>> = vec![None; n];
                let prob_of = |u: NtId, c: NtId| match m.form(u) {
                    SnfForm::Linear(rules) => {
                        rules.iter().find(|(t, _)| *t == Some(c)).map(|(_, p)| p.clone()).expect("rule")
                    }
                    _ => P::one(),
                };
                for &u in &row.order {
                    let get = |t: Subset, v: NtId, b: &Vec<Option<P>>| -> P {
                        if t == s {
                            b[v.index()].clone().expect("earlier member")
                        } else {
                            out[t.index()][v.index()].clone().expect("member of a smaller row")
                        }
                    };
                    let child = |d: Dir| match m.form(u) {
                        SnfForm::Branching(l, r) => {
                            if d == Dir::Left {
                                *l
                            } else {
                                *r
                            }
                        }
                        _ => unreachable!("branch reason on a branching form"),
                    };
                    let val = match row.reasons[u.index()].expect("member has a reason") {
                        ZeroReason::Positive => unreachable!("only singleton rows"),
                        ZeroReason::TargetLinear { target, child } => {
                            prob_of(u, child) * get(s.without(target), child, &b)
                        }
                        ZeroReason::TargetControlled { target, action } => {
                            get(s.without(target), m.actions(u)[action].1, &b)
                        }
                        ZeroReason::TargetSplit { target, left } => {
                            let rest = s.without(target);
                            get(left, child(Dir::Left), &b) * get(rest.minus(left), child(Dir::Right), &b)
                        }
                        ZeroReason::Split { left } => {
                            get(left, child(Dir::Left), &b) * get(s.minus(left), child(Dir::Right), &b)
                        }
                        ZeroReason::Linear { child } => prob_of(u, child) * get(s, child, &b),
                        ZeroReason::Controlled { action } => get(s, m.actions(u)[action].1, &b),
                        ZeroReason::Branch { dir } => get(s, child(dir), &b),
                    };
                    b[u.index()] = Some(val);
                }
                b
            }
        };
        out.push(b);
    }
    out
}

/// Why a vertex belongs to the set `D` of vertices that win by the
/// decomposition into smaller target subsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DReason {
    /// The single target itself.
    Seed,
    TargetLinear {
        target: usize,
    },
    TargetControlled {
        target: usize,
        action: usize,
    },
    TargetSplit {
        target: usize,
        left: Subset,
    },
    Split {
        left: Subset,
    },
    Linear,
    Controlled {
        action: usize,
    },
    Branch {
        dir: Dir,
    },
}

impl DReason {
    pub fn step(&self) -> &'static str {
        match self {
            DReason::Seed => "I",
            DReason::TargetLinear { .. }
            | DReason::TargetControlled { .. }
            | DReason::TargetSplit { .. }
            | DReason::Split { .. } => "II.1",
            DReason::Linear => "II.2(a)",
            DReason::Controlled { .. } => "II.2(b)",
            DReason::Branch { .. } => "II.2(c)",
        }
    }
}

/// Why a vertex of `X` was added to `F` in the final round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FReason {
    /// Seeded from the component with this index.
    Component(usize),
    Linear {
        child: NtId,
    },
    Controlled {
        action: usize,
    },
    Branch {
        dir: Dir,
    },
}

impl FReason {
    pub fn step(&self) -> &'static str {
        match self {
            FReason::Component(_) => "II.8",
            FReason::Linear { .. } => "II.9(a)",
            FReason::Controlled { .. } => "II.9(b)",
            FReason::Branch { .. } => "II.9(c)",
        }
    }
}

/// Why a vertex of `X` ended up in `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SReason {
    Target,
    Escape,
    Inherited(Subset),
    Linear,
    Controlled,
    Branch,
    Unresolved,
}

impl SReason {
    pub fn step(&self) -> &'static str {
        match self {
            SReason::Target | SReason::Escape | SReason::Inherited(_) => "II.4",
            SReason::Linear => "II.5(a)",
            SReason::Controlled => "II.5(b)",
            SReason::Branch => "II.5(c)",
            SReason::Unresolved => "II.10",
        }
    }
}

/// A component of the final decomposition of `X - S`.
#[derive(Clone, Debug, Serialize)]
pub struct Component {
    pub nodes: Vec<NtId>,
    /// Targets `q` whose set `H_q` meets the component.
    pub hit: Subset,
    /// Whether the component seeded `F`.
    pub accepted: bool,
    /// For limit-sure components hitting only part of the subset: a
    /// controlled vertex and action leading into the row of the missing targets.
    pub escape: Option<(NtId, usize)>,
}

/// All sets computed for one target subset.
#[derive(Clone, Debug)]
pub struct ReachRow {
    pub subset: Subset,
    /// The winning set.
    pub f: NodeSet,
    pub d: NodeSet,
    pub d_reasons: Vec<Option<DReason>>,
    pub d_order: Vec<NtId>,
    pub s: NodeSet,
    pub s_reasons: Vec<Option<SReason>>,
    /// `F - D` of the final round.
    pub core: NodeSet,
    /// The component seed of the final round.
    pub seed: NodeSet,
    pub f_reasons: Vec<Option<FReason>>,
    pub f_order: Vec<NtId>,
    pub components: Vec<Component>,
    /// `H_q` of the final round, indexed by target position.
    pub h: Vec<NodeSet>,
    /// Vertices left unresolved by each round that had to be retried.
    pub retried: Vec<NodeSet>,
}

impl ReachRow {
    fn trivial(s: Subset, n: usize, k: usize) -> Self {
        ReachRow {
            subset: s,
            f: NodeSet::full(n),
            d: NodeSet::empty(n),
            d_reasons: vec![None; n],
            d_order: vec![],
            s: NodeSet::empty(n),
            s_reasons: vec![None; n],
            core: NodeSet::full(n),
            seed: NodeSet::empty(n),
            f_reasons: vec![None; n],
            f_order: vec![],
            components: vec![],
            h: vec![NodeSet::empty(n); k],
            retried: vec![],
        }
    }

    /// Index of the component containing `u`, if it is accepted.
    pub fn component_of(&self, u: NtId) -> Option<usize> {
        self.components.iter().position(|c| c.accepted && c.nodes.contains(&u))
    }
}

/// Limit-sure or almost-sure sets for every subset of a target list.
#[derive(Clone, Debug)]
pub struct ReachSets {
    pub mode: Mode,
    pub targets: TargetSet,
    pub zero: ZeroSets,
    pub rows: Vec<ReachRow>,
}

impl ReachSets {
    pub fn row(&self, s: Subset) -> &ReachRow {
        &self.rows[s.index()]
    }

    pub fn full(&self) -> &ReachRow {
        self.row(self.targets.full())
    }

    pub fn winning(&self, s: Subset) -> &NodeSet {
        &self.rows[s.index()].f
    }
}

pub fn limit_sure_sets<P: Probability>(m: &SnfObmdp<P>, targets: &TargetSet) -> ReachSets {
    reach_sets(m, targets, Mode::LimitSure)
}

pub fn almost_sure_sets<P: Probability>(m: &SnfObmdp<P>, targets: &TargetSet) -> ReachSets {
    reach_sets(m, targets, Mode::AlmostSure)
}

pub fn reach_sets<P: Probability>(m: &SnfObmdp<P>, targets: &TargetSet, mode: Mode) -> ReachSets {
    let ctx = Ctx::new(m, targets);
    let zero = zero_sets_in(&ctx, targets);
    let rows = reach_rows(&ctx, &zero, mode, Mode::AlmostSure);
    ReachSets { mode, targets: targets.clone(), zero, rows }
}

/// The almost-sure set of a single target, computed with the given
/// decomposition (both must agree).
pub fn single_target<P: Probability>(m: &SnfObmdp<P>, target: NtId, mode: Mode) -> ReachRow {
    let targets = TargetSet::new(vec![target]).expect("one target");
    let ctx = Ctx::new(m, &targets);
    let zero = zero_sets_in(&ctx, &targets);
    reach_rows(&ctx, &zero, mode, mode).pop().expect("singleton row")
}

fn reach_rows<P: Probability>(ctx: &Ctx<'_, P>, zero: &ZeroSets, mode: Mode, single_mode: Mode) -> Vec<ReachRow> {
    let k = zero.targets.len();
    let mut rows: Vec<ReachRow> = Vec::with_capacity(1 << k);
    for mask in 0..(1u32 << k) {
        let s = Subset(mask);
        let row = match s.len() {
            0 => ReachRow::trivial(s, ctx.n, k),
            1 => reach_row(ctx, zero, &rows, s, single_mode, true),
            _ => reach_row(ctx, zero, &rows, s, mode, false),
        };
        rows.push(row);
    }
    rows
}

fn reach_row<P: Probability>(
    ctx: &Ctx<'_, P>,
    zero: &ZeroSets,
    rows: &[ReachRow],
    s: Subset,
    mode: Mode,
    single: bool,
) -> ReachRow {
    let m = ctx.m;
    let n = ctx.n;
    let k = zero.targets.len();
    let z = zero.zero(s);
    let f_of = |t: Subset, u: NtId| rows[t.index()].f.contains(u);

    // D: vertices winning by splitting the subset.
    let mut d = NodeSet::empty(n);
    let mut d_reasons: Vec<Option<DReason>> = vec![None; n];
    let mut d_order = Vec::new();
    for u in m.ids() {
        if z.contains(u) {
            continue;
        }
        let mut reason = None;
        if let Some(i) = ctx.target_in(u, s) {
            let rest = s.without(i);
            reason = if single {
                Some(DReason::Seed)
            } else {
                match m.form(u) {
                    SnfForm::Linear(_) => (!m.has_empty_rule(u) && m.successors(u).iter().all(|&c| f_of(rest, c)))
                        .then_some(DReason::TargetLinear { target: i }),
                    SnfForm::Controlled(acts) => acts
                        .iter()
                        .position(|(_, t)| f_of(rest, *t))
                        .map(|action| DReason::TargetControlled { target: i, action }),
                    SnfForm::Branching(l, r) => find_split(rest, false, |a| f_of(a, *l), |b| f_of(b, *r))
                        .map(|left| DReason::TargetSplit { target: i, left }),
                }
            };
        }
        if reason.is_none() {
            if let SnfForm::Branching(l, r) = m.form(u) {
                reason = find_split(s, true, |a| f_of(a, *l), |b| f_of(b, *r)).map(|left| DReason::Split { left });
            }
        }
        if reason.is_some() {
            d.insert(u);
            d_reasons[u.index()] = reason;
            d_order.push(u);
        }
    }
    let mut i = 0;
    while i < d_order.len() {
        let v = d_order[i];
        i += 1;
        for &u in ctx.graph.predecessors(v) {
            if d.contains(u) || z.contains(u) {
                continue;
            }
            let reason = match m.form(u) {
                SnfForm::Linear(_) => {
                    (!m.has_empty_rule(u) && m.successors(u).iter().all(|&c| d.contains(c))).then_some(DReason::Linear)
                }
                SnfForm::Controlled(acts) => {
                    acts.iter().position(|(_, t)| *t == v).map(|action| DReason::Controlled { action })
                }
                SnfForm::Branching(l, _) => Some(DReason::Branch { dir: if *l == v { Dir::Left } else { Dir::Right } }),
            };
            if reason.is_some() {
                d.insert(u);
                d_reasons[u.index()] = reason;
                d_order.push(u);
            }
        }
    }

    let x = d.union(&z).complement();

    // Initial S.
    let mut sset = NodeSet::empty(n);
    let mut s_reasons: Vec<Option<SReason>> = vec![None; n];
    for u in x.iter() {
        let reason = if ctx.target_in(u, s).is_some() {
            Some(SReason::Target)
        } else if matches!(m.form(u), SnfForm::Linear(_))
            && (m.has_empty_rule(u) || m.successors(u).iter().any(|c| z.contains(*c)))
        {
            Some(SReason::Escape)
        } else {
            None
        };
        if reason.is_some() {
            sset.insert(u);
            s_reasons[u.index()] = reason;
        }
    }
    for sub in s.proper_nonempty_subsets() {
        for u in x.intersection(&rows[sub.index()].s).iter() {
            if sset.insert(u) {
                s_reasons[u.index()] = Some(SReason::Inherited(sub));
            }
        }
    }

    let zbar: Vec<&NodeSet> = (0..k).map(|q| zero.nonzero(Subset::single(q))).collect();
    let mut retried = Vec::new();
    loop {
        // Closure of S inside X.
        let mut sz = sset.union(&z);
        loop {
            let mut changed = false;
            for u in x.difference(&sset).iter() {
                let reason = match m.form(u) {
                    SnfForm::Linear(_) => m.successors(u).iter().any(|c| sz.contains(*c)).then_some(SReason::Linear),
                    SnfForm::Controlled(acts) => {
                        acts.iter().all(|(_, t)| sz.contains(*t)).then_some(SReason::Controlled)
                    }
                    SnfForm::Branching(l, r) => (sz.contains(*l) && sz.contains(*r)).then_some(SReason::Branch),
                };
                if reason.is_some() {
                    sset.insert(u);
                    sz.insert(u);
                    s_reasons[u.index()] = reason;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let rest = x.difference(&sset);
        let comps: Vec<Vec<NtId>> = match mode {
            Mode::LimitSure => ctx.graph.mecs(&rest).components,
            Mode::AlmostSure => ctx.graph.sccs(&rest).components,
        };
        let mut h = vec![NodeSet::empty(n); k];
        for q in s.members() {
            for u in rest.iter() {
                if let SnfForm::Branching(l, r) = m.form(u) {
                    let hit =
                        (rest.contains(*l) && zbar[q].contains(*r)) || (zbar[q].contains(*l) && rest.contains(*r));
                    if hit {
                        h[q].insert(u);
                    }
                }
            }
        }

        let mut f = NodeSet::empty(n);
        let mut f_reasons: Vec<Option<FReason>> = vec![None; n];
        let mut f_order = Vec::new();
        let mut components = Vec::with_capacity(comps.len());
        for (ci, nodes) in comps.into_iter().enumerate() {
            let hit =
                Subset(s.members().filter(|&q| nodes.iter().any(|u| h[q].contains(*u))).fold(0, |acc, q| acc | 1 << q));
            let mut escape = None;
            let members: Vec<NtId> = match mode {
                Mode::LimitSure => {
                    let accept = if hit == s {
                        true
                    } else if !hit.is_empty() {
                        escape = find_escape(m, &nodes, rows[s.minus(hit).index()].f.clone());
                        escape.is_some()
                    } else {
                        false
                    };
                    if accept {
                        nodes.clone()
                    } else {
                        vec![]
                    }
                }
                Mode::AlmostSure => {
                    if hit == s {
                        nodes.iter().copied().filter(|u| s.members().any(|q| h[q].contains(*u))).collect()
                    } else {
                        vec![]
                    }
                }
            };
            for &u in &members {
                f.insert(u);
                f_reasons[u.index()] = Some(FReason::Component(ci));
                f_order.push(u);
            }
            components.push(Component { nodes, hit, accepted: !members.is_empty(), escape });
        }
        let seed = f.clone();

        // Closure of F inside X - S.
        let fd = |f: &NodeSet, c: NtId| f.contains(c) || d.contains(c);
        loop {
            let mut changed = false;
            for u in rest.difference(&f).iter() {
                let reason = match m.form(u) {
                    SnfForm::Linear(_) => {
                        m.successors(u).iter().find(|c| fd(&f, **c)).map(|&child| FReason::Linear { child })
                    }
                    SnfForm::Controlled(acts) => {
                        acts.iter().position(|(_, t)| f.contains(*t)).map(|action| FReason::Controlled { action })
                    }
                    SnfForm::Branching(l, r) => {
                        if f.contains(*l) {
                            Some(FReason::Branch { dir: Dir::Left })
                        } else if f.contains(*r) {
                            Some(FReason::Branch { dir: Dir::Right })
                        } else {
                            None
                        }
                    }
                };
                if reason.is_some() {
                    f.insert(u);
                    f_reasons[u.index()] = reason;
                    f_order.push(u);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        if f == rest {
            let core = f.clone();
            let mut winning = f;
            winning.union_with(&d);
            return ReachRow {
                subset: s,
                f: winning,
                d,
                d_reasons,
                d_order,
                s: sset,
                s_reasons,
                core,
                seed,
                f_reasons,
                f_order,
                components,
                h,
                retried,
            };
        }
        let unresolved = rest.difference(&f);
        for u in unresolved.iter() {
            s_reasons[u.index()] = Some(SReason::Unresolved);
        }
        sset.union_with(&unresolved);
        retried.push(unresolved);
    }
}

/// A controlled vertex of the component with an action into `target_row`,
/// preferring actions that leave the component.
fn find_escape<P: Probability>(m: &SnfObmdp<P>, nodes: &[NtId], target_row: NodeSet) -> Option<(NtId, usize)> {
    for leave in [true, false] {
        for &u in nodes {
            for (a, (_, t)) in m.actions(u).iter().enumerate() {
                if target_row.contains(*t) && (!leave || !nodes.contains(t)) {
                    return Some((u, a));
                }
            }
        }
    }
    None
}

/// Checks that a zero-set computation is a fixpoint: no further vertex
/// satisfies a rule, and every recorded reason holds.
pub fn audit_zero<P: Probability>(m: &SnfObmdp<P>, z: &ZeroSets) -> Vec<String> {
    let mut issues = Vec::new();
    let bit = z.targets.bit_table(m.len());
    for row in &z.rows {
        let s = row.subset;
        if s.len() < 2 {
            continue;
        }
        let nz = |t: Subset, u: NtId| z.nonzero(t).contains(u);
        for u in m.ids() {
            let tgt = bit[u.index()].filter(|&i| s.contains(i));
            let mut holds = false;
            if let Some(i) = tgt {
                let rest = s.without(i);
                holds |= match m.form(u) {
                    SnfForm::Branching(l, r) => rest.subsets().any(|a| nz(a, *l) && nz(rest.minus(a), *r)),
                    _ => m.successors(u).iter().any(|&c| nz(rest, c)),
                };
            }
            holds |= match m.form(u) {
                SnfForm::Branching(l, r) => {
                    s.proper_nonempty_subsets().any(|a| nz(a, *l) && nz(s.minus(a), *r)) || nz(s, *l) || nz(s, *r)
                }
                _ => m.successors(u).iter().any(|&c| nz(s, c)),
            };
            if holds != row.nonzero.contains(u) {
                issues.push(format!("subset {s:?}: {} membership is not a fixpoint", m.name(u)));
            }
        }
        for w in z.rows.iter().filter(|w| w.subset.is_subset(s)) {
            if !row.nonzero.is_subset(&w.nonzero) {
                issues.push(format!("subset {s:?}: not monotone against {:?}", w.subset));
            }
        }
    }
    issues
}

/// Checks a limit-sure or almost-sure computation: the partition into
/// winning, `S` and zero vertices, closure of `D`, and closure of `S`.
pub fn audit_reach<P: Probability>(m: &SnfObmdp<P>, r: &ReachSets) -> Vec<String> {
    let mut issues = Vec::new();
    let bit = r.targets.bit_table(m.len());
    for row in &r.rows {
        let s = row.subset;
        if s.is_empty() {
            continue;
        }
        let z = r.zero.zero(s);
        if !row.f.is_disjoint(&row.s) || !row.f.is_disjoint(&z) || !row.s.is_disjoint(&z) {
            issues.push(format!("subset {s:?}: sets overlap"));
        }
        if row.f.union(&row.s).union(&z) != NodeSet::full(m.len()) {
            issues.push(format!("subset {s:?}: sets do not cover every vertex"));
        }
        let f_of = |t: Subset, u: NtId| r.rows[t.index()].f.contains(u);
        for u in m.ids() {
            if z.contains(u) || row.d.contains(u) {
                continue;
            }
            let mut holds = false;
            if s.len() >= 2 {
                if let Some(i) = bit[u.index()].filter(|&i| s.contains(i)) {
                    let rest = s.without(i);
                    holds |= match m.form(u) {
                        SnfForm::Linear(_) => !m.has_empty_rule(u) && m.successors(u).iter().all(|&c| f_of(rest, c)),
                        SnfForm::Controlled(acts) => acts.iter().any(|(_, t)| f_of(rest, *t)),
                        SnfForm::Branching(l, r2) => rest.subsets().any(|a| f_of(a, *l) && f_of(rest.minus(a), *r2)),
                    };
                }
                if let SnfForm::Branching(l, r2) = m.form(u) {
                    holds |= s.proper_nonempty_subsets().any(|a| f_of(a, *l) && f_of(s.minus(a), *r2));
                }
            } else if bit[u.index()].is_some_and(|i| s.contains(i)) {
                holds = true;
            }
            holds |= match m.form(u) {
                SnfForm::Linear(_) => !m.has_empty_rule(u) && m.successors(u).iter().all(|&c| row.d.contains(c)),
                _ => m.successors(u).iter().any(|&c| row.d.contains(c)),
            };
            if holds {
                issues.push(format!("subset {s:?}: {} should be in D", m.name(u)));
            }
        }
        let sz = row.s.union(&z);
        for u in row.core.iter() {
            let closes = match m.form(u) {
                SnfForm::Linear(_) => m.successors(u).iter().any(|c| sz.contains(*c)),
                SnfForm::Controlled(acts) => acts.iter().all(|(_, t)| sz.contains(*t)),
                SnfForm::Branching(l, r2) => sz.contains(*l) && sz.contains(*r2),
            };
            if closes {
                issues.push(format!("subset {s:?}: {} should be in S", m.name(u)));
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_obmdp;
    use crate::normalize::to_snf;
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
    fn running_example_zero_set() {
        let m = example1();
        let k = m.targets(&["R1", "R2"]).unwrap();
        let z = zero_sets(&m, &k);
        assert_eq!(m.project(&z.zero(k.full())), ["A", "R1", "R2"]);
        let q = m.id("M__act_a").unwrap();
        assert_eq!(z.full().reasons[q.index()], Some(ZeroReason::Split { left: Subset(0b10) }));
        assert!(audit_zero(&m, &z).is_empty());
        let b = zero_bounds(&m, &z);
        assert_eq!(b[3][m.id("M").unwrap().index()], Some(crate::prob::parse_ratio("1/2").unwrap()));
    }

    #[test]
    fn running_example_limit_sure_but_not_almost_sure() {
        let m = example1();
        let k = m.targets(&["R1", "R2"]).unwrap();
        let ls = limit_sure_sets(&m, &k);
        let as_ = almost_sure_sets(&m, &k);
        assert_eq!(m.project(ls.winning(k.full())), ["M"]);
        assert!(m.project(as_.winning(k.full())).is_empty());
        let row = ls.full();
        let c = &row.components[0];
        assert!(c.accepted);
        assert_eq!(c.hit, Subset(0b01));
        assert_eq!(c.escape, Some((m.id("M").unwrap(), 1)));
        assert!(audit_reach(&m, &ls).is_empty());
        assert!(audit_reach(&m, &as_).is_empty());
    }

    #[test]
    fn single_target_decompositions_agree() {
        let m = example1();
        for t in ["M", "A", "R1", "R2"] {
            let q = m.id(t).unwrap();
            assert_eq!(single_target(&m, q, Mode::AlmostSure).f, single_target(&m, q, Mode::LimitSure).f);
        }
    }
}
