//! Dependency graphs, strongly connected components, end-components and
//! attractors.
//!
//! The graph has an edge `(u, v)` whenever `v` occurs on the right of a rule
//! of `u` with positive probability or under some action. Linear forms are the
//! probabilistic vertices; controlled and branching forms are player vertices.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use crate::model::{FormKind, NtId, Origin, SnfObmdp};
use crate::prob::Probability;
use crate::sets::NodeSet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    succ: Vec<Vec<NtId>>,
    pred: Vec<Vec<NtId>>,
    probabilistic: NodeSet,
}

/// Strongly connected components inside a vertex subset, sources first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SccDecomposition {
    /// Components in topological order of the condensation; a singleton is
    /// included only if it has a self-loop.
    pub components: Vec<Vec<NtId>>,
    /// `component_of[v]` for vertices inside some component.
    pub component_of: Vec<Option<usize>>,
}

/// Maximal end-components inside a vertex subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MecDecomposition {
    /// Components ordered by their smallest vertex.
    pub components: Vec<Vec<NtId>>,
    pub component_of: Vec<Option<usize>>,
}

impl DependencyGraph {
    pub fn new<P: Probability>(m: &SnfObmdp<P>) -> Self {
        let edges: Vec<(NtId, NtId)> = m.ids().flat_map(|u| m.successors(u).iter().map(move |&v| (u, v))).collect();
        let prob = NodeSet::from_ids(m.len(), m.ids().filter(|&u| m.kind(u) == FormKind::Linear));
        Self::from_edges(m.len(), &edges, prob)
    }

    /// Builds a graph from an edge list; `probabilistic` marks the linear vertices.
    pub fn from_edges(n: usize, edges: &[(NtId, NtId)], probabilistic: NodeSet) -> Self {
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for &(u, v) in edges {
            succ[u.index()].push(v);
            pred[v.index()].push(u);
        }
        for l in succ.iter_mut().chain(pred.iter_mut()) {
            l.sort();
            l.dedup();
        }
        DependencyGraph { succ, pred, probabilistic }
    }

    /// The graph over source non-terminals, with auxiliaries contracted away:
    /// `(u, v)` is an edge when `v` is reachable from `u` through auxiliaries only.
    pub fn contracted<P: Probability>(m: &SnfObmdp<P>) -> Self {
        let n = m.source_names().len();
        let declared = |x: NtId| match m.origin(x) {
            Origin::Declared(s) => Some(s),
            Origin::Auxiliary(_) => None,
        };
        let mut edges = Vec::new();
        let mut prob = NodeSet::empty(n);
        for u in m.ids() {
            let Some(su) = declared(u) else { continue };
            if m.kind(u) == FormKind::Linear {
                prob.insert(su);
            }
            let mut seen = NodeSet::empty(m.len());
            let mut stack: Vec<NtId> = m.successors(u).to_vec();
            while let Some(x) = stack.pop() {
                if !seen.insert(x) {
                    continue;
                }
                match declared(x) {
                    Some(sx) => edges.push((su, sx)),
                    None => stack.extend(m.successors(x).iter().copied()),
                }
            }
        }
        Self::from_edges(n, &edges, prob)
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn successors(&self, u: NtId) -> &[NtId] {
        &self.succ[u.index()]
    }

    pub fn predecessors(&self, u: NtId) -> &[NtId] {
        &self.pred[u.index()]
    }

    pub fn has_edge(&self, u: NtId, v: NtId) -> bool {
        self.succ[u.index()].binary_search(&v).is_ok()
    }

    pub fn edges(&self) -> Vec<(NtId, NtId)> {
        (0..self.len()).flat_map(|u| self.succ[u].iter().map(move |&v| (NtId::new(u), v))).collect()
    }

    pub fn is_probabilistic(&self, u: NtId) -> bool {
        self.probabilistic.contains(u)
    }

    pub fn all(&self) -> NodeSet {
        NodeSet::full(self.len())
    }

    /// Tarjan's algorithm on the subgraph induced by `within`, iteratively.
    fn raw_sccs(&self, within: &NodeSet) -> Vec<Vec<NtId>> {
        let n = self.len();
        const UNSEEN: usize = usize::MAX;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack: Vec<NtId> = Vec::new();
        let mut out = Vec::new();
        let mut counter = 0;
        for root in within.iter() {
            if index[root.index()] != UNSEEN {
                continue;
            }
            let mut work: Vec<(NtId, usize)> = vec![(root, 0)];
            index[root.index()] = counter;
            low[root.index()] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root.index()] = true;
            while let Some(&mut (v, ref mut pos)) = work.last_mut() {
                let succ = &self.succ[v.index()];
                if *pos < succ.len() {
                    let w = succ[*pos];
                    *pos += 1;
                    if !within.contains(w) {
                        continue;
                    }
                    if index[w.index()] == UNSEEN {
                        index[w.index()] = counter;
                        low[w.index()] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w.index()] = true;
                        work.push((w, 0));
                    } else if on_stack[w.index()] {
                        low[v.index()] = low[v.index()].min(index[w.index()]);
                    }
                } else {
                    work.pop();
                    if let Some(&(parent, _)) = work.last() {
                        low[parent.index()] = low[parent.index()].min(low[v.index()]);
                    }
                    if low[v.index()] == index[v.index()] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w.index()] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort();
                        out.push(comp);
                    }
                }
            }
        }
        out
    }

    fn is_proper(&self, comp: &[NtId]) -> bool {
        comp.len() > 1 || self.has_edge(comp[0], comp[0])
    }

    /// SCCs of the subgraph induced by `within`.
    pub fn sccs(&self, within: &NodeSet) -> SccDecomposition {
        let raw = self.raw_sccs(within);
        let n = self.len();
        let mut comp_of = vec![usize::MAX; n];
        for (i, c) in raw.iter().enumerate() {
            for v in c {
                comp_of[v.index()] = i;
            }
        }
        // Kahn's algorithm on the condensation, smallest vertex first on ties.
        let mut indeg = vec![0usize; raw.len()];
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
        for (i, c) in raw.iter().enumerate() {
            for &v in c {
                for &w in &self.succ[v.index()] {
                    if within.contains(w) && comp_of[w.index()] != i {
                        out_edges[i].push(comp_of[w.index()]);
                    }
                }
            }
            out_edges[i].sort();
            out_edges[i].dedup();
        }
        for es in &out_edges {
            for &j in es {
                indeg[j] += 1;
            }
        }
        let mut heap: BinaryHeap<Reverse<(NtId, usize)>> =
            raw.iter().enumerate().filter(|(i, _)| indeg[*i] == 0).map(|(i, c)| Reverse((c[0], i))).collect();
        let mut components = Vec::new();
        let mut component_of = vec![None; n];
        while let Some(Reverse((_, i))) = heap.pop() {
            if self.is_proper(&raw[i]) {
                for v in &raw[i] {
                    component_of[v.index()] = Some(components.len());
                }
                components.push(raw[i].clone());
            }
            for &j in &out_edges[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    heap.push(Reverse((raw[j][0], j)));
                }
            }
        }
        SccDecomposition { components, component_of }
    }

    /// Maximal end-components of the subgraph induced by `within`.
    ///
    /// Repeatedly splits into SCCs and drops probabilistic vertices with an
    /// edge to a vertex of `within` outside their component.
    pub fn mecs(&self, within: &NodeSet) -> MecDecomposition {
        let n = self.len();
        let mut done: Vec<Vec<NtId>> = Vec::new();
        let mut queue: Vec<NodeSet> = vec![within.clone()];
        while let Some(cand) = queue.pop() {
            for comp in self.raw_sccs(&cand) {
                let set = NodeSet::from_ids(n, comp.iter().copied());
                let leaking: Vec<NtId> = comp
                    .iter()
                    .copied()
                    .filter(|&v| {
                        self.probabilistic.contains(v)
                            && self.succ[v.index()].iter().any(|w| within.contains(*w) && !set.contains(*w))
                    })
                    .collect();
                if leaking.is_empty() {
                    if self.is_proper(&comp) {
                        done.push(comp);
                    }
                } else {
                    let mut rest = set;
                    for v in leaking {
                        rest.remove(v);
                    }
                    if !rest.is_empty() {
                        queue.push(rest);
                    }
                }
            }
        }
        done.sort();
        let mut component_of = vec![None; n];
        for (i, c) in done.iter().enumerate() {
            for v in c {
                component_of[v.index()] = Some(i);
            }
        }
        MecDecomposition { components: done, component_of }
    }

    /// Vertices with a path to `target`, `target` included.
    pub fn attractor(&self, target: NtId) -> NodeSet {
        let d = self.distances_to(target);
        NodeSet::from_ids(self.len(), (0..self.len()).filter(|&i| d[i].is_some()).map(NtId::new))
    }

    /// Length of a shortest path to `target` from every vertex.
    pub fn distances_to(&self, target: NtId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[target.index()] = Some(0);
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v.index()].expect("queued vertices have a distance");
            for &u in &self.pred[v.index()] {
                if dist[u.index()].is_none() {
                    dist[u.index()] = Some(dv + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Graphviz rendering; probabilistic vertices are drawn as circles.
    pub fn to_dot(&self, names: &[String]) -> String {
        let mut s = String::from("digraph obmdp {\n");
        for (i, name) in names.iter().enumerate().take(self.len()) {
            let shape = if self.probabilistic.contains(NtId::new(i)) { "circle" } else { "box" };
            let _ = writeln!(s, "  \"{name}\" [shape={shape}];");
        }
        for (u, v) in self.edges() {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", names[u.index()], names[v.index()]);
        }
        s.push_str("}\n");
        s
    }
}
