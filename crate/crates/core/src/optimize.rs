//! Toggleable accelerations: backtrack graphs for batched refinement
//! propagation, and forward-expansion ordering. All of them preserve the
//! final answer; they only change how much work is done.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, BTreeSet};

use crate::graph::VertexId;

/// Per-keyword record of the shortest-path edges used by forward expansions
/// that reached an out-portal. Refinements arriving at a portal are pushed
/// back to the recorded ancestors instead of the whole fragment.
#[derive(Debug, Clone, Default)]
pub struct BacktrackGraph {
    /// keyword slot -> (edge target -> [(edge source, weight)])
    rev: Vec<BTreeMap<VertexId, Vec<(VertexId, f64)>>>,
    seen: Vec<BTreeSet<(VertexId, VertexId)>>,
}

impl BacktrackGraph {
    pub fn new(keywords: usize) -> Self {
        BacktrackGraph { rev: vec![BTreeMap::new(); keywords], seen: vec![BTreeSet::new(); keywords] }
    }

    /// Record the edge `from -> to` on a path serving keyword slot `kw`.
    pub fn record_edge(&mut self, kw: usize, from: VertexId, to: VertexId, w: f64) {
        if self.seen[kw].insert((from, to)) {
            self.rev[kw].entry(to).or_default().push((from, w));
        }
    }

    pub fn edge_count(&self, kw: usize) -> usize {
        self.seen[kw].len()
    }

    pub fn edges(&self, kw: usize) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.seen[kw].iter().copied()
    }

    /// One reverse relaxation pass from all refined portals at once.
    /// `relax(v, cand)` applies `cand` to the vertex slot and reports whether
    /// it improved; improved vertices keep propagating.
    pub fn propagate_batch(
        &self,
        kw: usize,
        seeds: &[(VertexId, f64)],
        mut relax: impl FnMut(VertexId, f64) -> bool,
    ) {
        let mut heap: BinaryHeap<Reverse<(u64, VertexId)>> = BinaryHeap::new();
        let mut best: BTreeMap<VertexId, f64> = BTreeMap::new();
        for &(v, d) in seeds {
            heap.push(Reverse((d.to_bits(), v)));
            best.entry(v).and_modify(|b| *b = b.min(d)).or_insert(d);
        }
        let rev = &self.rev[kw];
        while let Some(Reverse((bits, v))) = heap.pop() {
            let d = f64::from_bits(bits);
            if best.get(&v).is_some_and(|&b| d > b) {
                continue;
            }
            if let Some(parents) = rev.get(&v) {
                for &(p, w) in parents {
                    let cand = d + w;
                    if best.get(&p).map_or(true, |&b| cand < b) && relax(p, cand) {
                        best.insert(p, cand);
                        heap.push(Reverse((cand.to_bits(), p)));
                    }
                }
            }
        }
    }

    /// Reference implementation: one pass per portal, sequentially.
    pub fn propagate_sequential(
        &self,
        kw: usize,
        seeds: &[(VertexId, f64)],
        mut relax: impl FnMut(VertexId, f64) -> bool,
    ) {
        for &seed in seeds {
            self.propagate_batch(kw, &[seed], &mut relax);
        }
    }
}

/// Forward-expansion order: descending partial score, so expansions likely
/// to be pruned run first and later ones can reuse their matches. Ties (and
/// the disabled case) fall back to ascending vertex id.
pub fn order_roots(mut roots: Vec<VertexId>, score_of: impl Fn(VertexId) -> f64, descending: bool) -> Vec<VertexId> {
    if descending {
        roots.sort_by(|&a, &b| score_of(b).total_cmp(&score_of(a)).then(a.cmp(&b)));
    } else {
        roots.sort_unstable();
    }
    roots
}
