//! The per-worker search kernel: score bookkeeping, answer maintenance,
//! backward expansion toward candidate roots and forward expansion toward
//! missing keywords, with bound- and sketch-based pruning.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, BTreeSet};

use crate::graph::{Graph, KeywordId, Query, VertexId};
use crate::optimize::{order_roots, BacktrackGraph};
use crate::partition::Fragment;
use crate::sketch::SketchSet;

/// One slot of a (partial) match: missing slots hold the sentinel distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSlot {
    pub keyword: KeywordId,
    pub leaf: Option<VertexId>,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub root: VertexId,
    pub slots: Vec<MatchSlot>,
}

/// Sum of slot distances; any missing slot pushes the score to the sentinel
/// range and the match out of competition.
pub fn score(m: &Match) -> f64 {
    m.slots.iter().map(|s| s.dist).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerEntry {
    pub root: VertexId,
    pub score: f64,
    pub approx: bool,
    pub slots: Vec<MatchSlot>,
}

/// Fixed-capacity answer set with distinct roots. The bound is the worst
/// retained score once full, infinity before that, and never increases.
#[derive(Debug, Clone)]
pub struct AnswerHeap {
    capacity: usize,
    entries: Vec<AnswerEntry>,
}

impl AnswerHeap {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        AnswerHeap { capacity, entries: Vec::new() }
    }

    pub fn bound(&self) -> f64 {
        if self.entries.len() < self.capacity {
            f64::INFINITY
        } else {
            self.entries.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max)
        }
    }

    pub fn entries(&self) -> &[AnswerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert, evict-if-better, or replace this root's entry with a strictly
    /// smaller score (an exact entry also replaces an approximate one at the
    /// same score). Returns whether the bound changed.
    pub fn offer(&mut self, entry: AnswerEntry) -> bool {
        let before = self.bound();
        if let Some(pos) = self.entries.iter().position(|e| e.root == entry.root) {
            let old = &self.entries[pos];
            if entry.score < old.score || (entry.score == old.score && old.approx && !entry.approx) {
                self.entries[pos] = entry;
            }
        } else if self.entries.len() < self.capacity {
            self.entries.push(entry);
        } else if entry.score < before {
            // evict the worst; among ties the latest-inserted goes
            let worst = self
                .entries
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("heap is full");
            self.entries.remove(worst);
            self.entries.push(entry);
        } else {
            return false;
        }
        self.bound() != before
    }

    /// Remove approximate entries that were never refined to exact scores.
    pub fn drop_approx(&mut self) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !e.approx);
        before - self.entries.len()
    }

    pub fn has_approx(&self) -> bool {
        self.entries.iter().any(|e| e.approx)
    }
}

/// Mid-search bound exchange: the kernel polls for pushed global bounds at
/// settlement boundaries and reports strict refinements of its own bound.
pub trait BoundLink {
    fn poll_push(&mut self) -> Option<f64>;
    fn refined(&mut self, bound: f64);
}

/// No exchange; single worker or disabled notify-push.
pub struct NullLink;

impl BoundLink for NullLink {
    fn poll_push(&mut self) -> Option<f64> {
        None
    }
    fn refined(&mut self, _bound: f64) {}
}

#[derive(Debug, Clone, Copy)]
pub struct KernelOpts {
    /// Prune with the running score bound (off = flood within tau).
    pub use_bounds: bool,
    /// Prune with sketch estimates and insert approximate entries.
    pub use_sketches: bool,
    pub opt_backtrack: bool,
    pub opt_bpads: bool,
    pub opt_order: bool,
}

impl KernelOpts {
    pub fn flood() -> Self {
        KernelOpts { use_bounds: false, use_sketches: false, opt_backtrack: false, opt_bpads: false, opt_order: false }
    }
}

#[derive(Debug, Clone, Copy)]
struct SlotState {
    b: f64,
    f: f64,
    b_leaf: Option<VertexId>,
    f_leaf: Option<VertexId>,
    b_settled: bool,
}

/// Per-query search state over one fragment (owned vertices plus out-portal
/// copies). All hot loops run on dense local indexes.
pub struct Kernel<'a> {
    pub frag: &'a Fragment,
    query: &'a Query,
    sketches: Option<&'a SketchSet>,
    opts: KernelOpts,
    inf: f64,
    tau: f64,
    kw_count: usize,
    ids: Vec<VertexId>,
    index: BTreeMap<VertexId, usize>,
    owned: Vec<bool>,
    out_portal: Vec<bool>,
    /// Query-keyword bitmask per state vertex.
    label_mask: Vec<u64>,
    in_edges: Vec<Vec<(u32, f64)>>,
    out_edges: Vec<Vec<(u32, f64)>>,
    /// Flat [idx * kw_count + kw] slot table.
    slots: Vec<SlotState>,
    pub heap: AnswerHeap,
    prune_bound: f64,
    /// Local roots whose state changed since their last forward pass.
    pub dirty: BTreeSet<VertexId>,
    imported: BTreeMap<(usize, usize), f64>,
    /// Largest radius already searched, per (root idx, kw).
    expanded: Vec<f64>,
    backward_seeds: Vec<(usize, usize, f64)>,
    backtrack: BacktrackGraph,
    pub visited: u64,
    pub audit_violations: u64,
    pub settle_log: Option<Vec<(usize, VertexId, f64)>>,
    scratch_dist: Vec<f64>,
    scratch_parent: Vec<Option<(u32, f64)>>,
    // sketch estimates are static per query; NaN marks an unfilled cell
    lb_cache: Vec<f64>,
    ub_cache: Vec<f64>,
    border_cache: Vec<f64>,
}

impl<'a> Kernel<'a> {
    pub fn new(
        g: &'a Graph,
        frag: &'a Fragment,
        query: &'a Query,
        sketches: Option<&'a SketchSet>,
        opts: KernelOpts,
    ) -> Self {
        let ids = frag.state_vertices();
        let index: BTreeMap<VertexId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let inf = g.inf_sentinel();
        let kw_count = query.keywords.len();
        assert!(kw_count <= 64, "query keyword mask is 64 bits");
        let n = ids.len();
        let owned: Vec<bool> = ids.iter().map(|&v| frag.owns(v)).collect();
        let out_portal: Vec<bool> = ids.iter().map(|&v| frag.is_out_portal(v)).collect();
        let label_mask: Vec<u64> = ids
            .iter()
            .map(|&v| {
                let mut mask = 0u64;
                for (kw, &q) in query.keywords.iter().enumerate() {
                    if g.has_label(v, q) {
                        mask |= 1 << kw;
                    }
                }
                mask
            })
            .collect();
        let mut in_edges: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut out_edges: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (&v, edges) in &frag.in_adj {
            let vi = index[&v];
            in_edges[vi] = edges.iter().map(|&(u, w)| (index[&u] as u32, w)).collect();
        }
        for (&v, edges) in &frag.out_adj {
            let vi = index[&v];
            out_edges[vi] = edges.iter().map(|&(t, w)| (index[&t] as u32, w)).collect();
        }
        let blank = SlotState { b: inf, f: inf, b_leaf: None, f_leaf: None, b_settled: false };
        Kernel {
            frag,
            query,
            sketches,
            opts,
            inf,
            tau: query.tau,
            kw_count,
            ids,
            index,
            owned,
            out_portal,
            label_mask,
            in_edges,
            out_edges,
            slots: vec![blank; n * kw_count],
            heap: AnswerHeap::new(query.k),
            prune_bound: f64::INFINITY,
            dirty: BTreeSet::new(),
            imported: BTreeMap::new(),
            expanded: vec![f64::NEG_INFINITY; n * kw_count],
            backward_seeds: Vec::new(),
            backtrack: BacktrackGraph::new(kw_count),
            visited: 0,
            audit_violations: 0,
            settle_log: None,
            scratch_dist: vec![f64::INFINITY; n],
            scratch_parent: vec![None; n],
            lb_cache: vec![f64::NAN; n * kw_count],
            ub_cache: vec![f64::NAN; n * kw_count],
            border_cache: vec![f64::NAN; n],
        }
    }

    fn est_lower(&mut self, i: usize, kw: usize) -> f64 {
        let cell = i * self.kw_count + kw;
        if self.lb_cache[cell].is_nan() {
            let sk = self.sketches.expect("sketch pruning requires sketches");
            self.lb_cache[cell] = sk.est_lower(self.ids[i], self.query.keywords[kw]);
        }
        self.lb_cache[cell]
    }

    /// Upper estimate; infinity when no common center exists.
    fn est_upper(&mut self, i: usize, kw: usize) -> f64 {
        let cell = i * self.kw_count + kw;
        if self.ub_cache[cell].is_nan() {
            let sk = self.sketches.expect("sketch pruning requires sketches");
            self.ub_cache[cell] = sk
                .est_upper(self.ids[i], self.query.keywords[kw])
                .unwrap_or(f64::INFINITY);
        }
        self.ub_cache[cell]
    }

    fn est_border(&mut self, i: usize) -> f64 {
        if self.border_cache[i].is_nan() {
            let sk = self.sketches.expect("sketch pruning requires sketches");
            self.border_cache[i] = sk.est_lower_to_border(self.ids[i], self.frag);
        }
        self.border_cache[i]
    }

    pub fn bound(&self) -> f64 {
        self.prune_bound
    }

    pub fn inf(&self) -> f64 {
        self.inf
    }

    pub fn keyword_count(&self) -> usize {
        self.kw_count
    }

    pub fn backtrack(&self) -> &BacktrackGraph {
        &self.backtrack
    }

    fn idx(&self, v: VertexId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    #[inline]
    fn slot(&self, i: usize, kw: usize) -> &SlotState {
        &self.slots[i * self.kw_count + kw]
    }

    pub fn backward_value(&self, v: VertexId, kw: usize) -> f64 {
        self.idx(v).map_or(self.inf, |i| self.slot(i, kw).b)
    }

    pub fn forward_value(&self, v: VertexId, kw: usize) -> f64 {
        self.idx(v).map_or(self.inf, |i| self.slot(i, kw).f)
    }

    #[inline]
    fn merged(&self, i: usize, kw: usize) -> f64 {
        let s = self.slot(i, kw);
        s.b.min(s.f)
    }

    #[inline]
    fn certified(&self, i: usize, kw: usize) -> bool {
        let s = self.slot(i, kw);
        s.b_settled || s.f < self.inf
    }

    #[inline]
    fn cert_value(&self, i: usize, kw: usize) -> f64 {
        let s = self.slot(i, kw);
        let b = if s.b_settled { s.b } else { self.inf };
        b.min(s.f)
    }

    fn cert_slot(&self, i: usize, kw: usize) -> MatchSlot {
        let s = self.slot(i, kw);
        let b = if s.b_settled { s.b } else { self.inf };
        let (dist, leaf) = if s.f <= b { (s.f, s.f_leaf) } else { (b, s.b_leaf) };
        MatchSlot { keyword: self.query.keywords[kw], leaf, dist }
    }

    fn scr_cert(&self, i: usize) -> f64 {
        (0..self.kw_count).filter(|&kw| self.certified(i, kw)).map(|kw| self.cert_value(i, kw)).sum()
    }

    fn write_b(&mut self, i: usize, kw: usize, val: f64, leaf: Option<VertexId>) -> bool {
        let s = &mut self.slots[i * self.kw_count + kw];
        if val < s.b {
            s.b = val;
            s.b_leaf = leaf;
            if self.owned[i] {
                self.dirty.insert(self.ids[i]);
            }
            true
        } else {
            false
        }
    }

    fn write_f(&mut self, i: usize, kw: usize, val: f64, leaf: Option<VertexId>) -> bool {
        if val > self.tau {
            return false;
        }
        let s = &mut self.slots[i * self.kw_count + kw];
        if val < s.f {
            s.f = val;
            s.f_leaf = leaf;
            if self.owned[i] {
                self.dirty.insert(self.ids[i]);
            }
            true
        } else {
            false
        }
    }

    fn tighten(&mut self, bound: f64) {
        if !self.opts.use_bounds {
            return;
        }
        if bound < self.prune_bound {
            self.prune_bound = bound;
        } else if bound > self.prune_bound {
            self.audit_violations += 1;
        }
    }

    fn poll(&mut self, link: &mut dyn BoundLink) {
        if let Some(s) = link.poll_push() {
            self.tighten(s);
        }
    }

    /// Apply a pushed global bound: min-refinement of the local one.
    pub fn apply_push(&mut self, s: f64) {
        self.tighten(s);
    }

    fn maybe_offer(&mut self, i: usize, link: &mut dyn BoundLink) {
        if !(0..self.kw_count).all(|kw| self.certified(i, kw)) {
            return;
        }
        let slots: Vec<MatchSlot> = (0..self.kw_count).map(|kw| self.cert_slot(i, kw)).collect();
        let total: f64 = slots.iter().map(|s| s.dist).sum();
        let entry = AnswerEntry { root: self.ids[i], score: total, approx: false, slots };
        if self.heap.offer(entry) {
            let b = self.heap.bound();
            if self.opts.use_bounds && b < self.prune_bound {
                self.prune_bound = b;
                link.refined(b);
            }
        }
    }

    /// Seed the per-keyword queues with this fragment's own search origins.
    pub fn backward_init_origins(&mut self) {
        for kw in 0..self.kw_count {
            for i in 0..self.ids.len() {
                if self.owned[i] && self.label_mask[i] & (1 << kw) != 0 {
                    let v = self.ids[i];
                    if self.write_b(i, kw, 0.0, Some(v)) {
                        self.backward_seeds.push((kw, i, 0.0));
                    }
                }
            }
        }
    }

    /// Merge refreshed backward values for out-portal copies (from incoming
    /// messages) and queue them for re-expansion.
    pub fn backward_seed(&mut self, v: VertexId, kw: usize, val: f64) {
        if let Some(i) = self.idx(v) {
            if self.write_b(i, kw, val, None) {
                self.backward_seeds.push((kw, i, val));
            }
        }
    }

    pub fn has_backward_seeds(&self) -> bool {
        !self.backward_seeds.is_empty()
    }

    /// Multi-queue reverse Dijkstra. Per step the queue with the nearest
    /// frontier expands; the whole pass stops once the frontier distances of
    /// the keywords sum past the current bound. A vertex settled for every
    /// keyword is offered to the answer set.
    pub fn backward_expand(&mut self, link: &mut dyn BoundLink) {
        if self.backward_seeds.is_empty() {
            return;
        }
        let kw_count = self.kw_count;
        let mut queues: Vec<BinaryHeap<Reverse<(u64, u32)>>> = vec![BinaryHeap::new(); kw_count];
        let mut settled: Vec<Vec<bool>> = vec![vec![false; self.ids.len()]; kw_count];
        for (kw, i, d) in std::mem::take(&mut self.backward_seeds) {
            queues[kw].push(Reverse((d.to_bits(), i as u32)));
        }
        loop {
            self.poll(link);
            // clean stale heads, then pick the queue with the smallest one
            let mut frontier_sum = 0.0;
            let mut pick: Option<(usize, f64)> = None;
            for kw in 0..kw_count {
                let head = loop {
                    match queues[kw].peek() {
                        None => break None,
                        Some(&Reverse((bits, i))) => {
                            let d = f64::from_bits(bits);
                            if settled[kw][i as usize] || d > self.slot(i as usize, kw).b {
                                queues[kw].pop();
                            } else {
                                break Some(d);
                            }
                        }
                    }
                };
                if let Some(d) = head {
                    frontier_sum += d;
                    if pick.map_or(true, |(_, best)| d < best) {
                        pick = Some((kw, d));
                    }
                }
            }
            let Some((kw, _)) = pick else { break };
            if frontier_sum >= self.prune_bound {
                break;
            }
            let Reverse((bits, i32v)) = queues[kw].pop().expect("nonempty queue");
            let (d, i) = (f64::from_bits(bits), i32v as usize);
            settled[kw][i] = true;
            self.slots[i * kw_count + kw].b_settled = true;
            self.visited += 1;
            if let Some(log) = &mut self.settle_log {
                log.push((kw, self.ids[i], d));
            }
            if self.owned[i] {
                self.maybe_offer(i, link);
            }
            let leaf = self.slot(i, kw).b_leaf;
            for e in 0..self.in_edges[i].len() {
                let (ui, w) = self.in_edges[i][e];
                let ui = ui as usize;
                let nd = d + w;
                if nd <= self.tau
                    && !settled[kw][ui]
                    && nd < self.slot(ui, kw).b
                    && self.write_b(ui, kw, nd, leaf)
                {
                    queues[kw].push(Reverse((nd.to_bits(), ui as u32)));
                }
            }
        }
    }

    /// Merge an incoming forward-expansion budget for a local in-portal.
    pub fn import_budget(&mut self, v: VertexId, kw: usize, f: f64) {
        if let Some(i) = self.idx(v) {
            let cur = self.imported.entry((i, kw)).or_insert(f64::NEG_INFINITY);
            if f > *cur {
                *cur = f;
                self.dirty.insert(v);
            }
        }
    }

    /// Merge an incoming forward match value for an out-portal copy.
    /// Returns true when it improved (the caller then propagates it).
    pub fn merge_forward_value(&mut self, v: VertexId, kw: usize, val: f64) -> bool {
        match self.idx(v) {
            Some(i) => self.write_f(i, kw, val, None),
            None => false,
        }
    }

    /// Push portal refinements to the ancestors that requested them, either
    /// along the recorded backtrack graph or over the whole local reverse
    /// adjacency.
    pub fn propagate(&mut self, kw: usize, seeds: &[(VertexId, f64)], _link: &mut dyn BoundLink) {
        if seeds.is_empty() {
            return;
        }
        if self.opts.opt_backtrack {
            let bt = std::mem::take(&mut self.backtrack);
            bt.propagate_batch(kw, seeds, |v, cand| match self.idx(v) {
                Some(i) => self.write_f(i, kw, cand, None),
                None => false,
            });
            self.backtrack = bt;
        } else {
            // plain reverse relaxation over every stored edge
            let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
            let mut best: BTreeMap<usize, f64> = BTreeMap::new();
            for &(v, d) in seeds {
                if let Some(i) = self.idx(v) {
                    heap.push(Reverse((d.to_bits(), i as u32)));
                    best.insert(i, d);
                }
            }
            while let Some(Reverse((bits, iv))) = heap.pop() {
                let (d, i) = (f64::from_bits(bits), iv as usize);
                if best.get(&i).is_some_and(|&b| d > b) {
                    continue;
                }
                for e in 0..self.in_edges[i].len() {
                    let (ui, w) = self.in_edges[i][e];
                    let ui = ui as usize;
                    let cand = d + w;
                    if cand <= self.tau
                        && best.get(&ui).map_or(true, |&b| cand < b)
                        && self.write_f(ui, kw, cand, None)
                    {
                        best.insert(ui, cand);
                        heap.push(Reverse((cand.to_bits(), ui as u32)));
                    }
                }
            }
        }
        // completions surface at the next forward pass via the dirty set
    }

    /// Forward-expand every dirty root; returns the budgets to request from
    /// other fragments, `(out-portal, keyword slot, remaining distance)`.
    pub fn forward_pass(&mut self, link: &mut dyn BoundLink) -> Vec<(VertexId, usize, f64)> {
        let roots: Vec<VertexId> = std::mem::take(&mut self.dirty).into_iter().collect();
        let roots = order_roots(
            roots,
            |v| self.idx(v).map_or(0.0, |i| self.scr_cert(i)),
            self.opts.opt_order,
        );
        let mut requests = Vec::new();
        for v in roots {
            self.expand_root(v, link, &mut requests);
        }
        requests
    }

    fn expand_root(
        &mut self,
        u: VertexId,
        link: &mut dyn BoundLink,
        requests: &mut Vec<(VertexId, usize, f64)>,
    ) {
        let Some(ui) = self.idx(u) else { return };
        let kw_count = self.kw_count;
        self.poll(link);
        let scr = self.scr_cert(ui);
        let any_cert = (0..kw_count).any(|kw| self.certified(ui, kw));
        let all_cert = (0..kw_count).all(|kw| self.certified(ui, kw));

        // Local candidacy: a partial root searching its own missing slots.
        let mut local_alive = any_cert && !all_cert;
        let mut local_budget = vec![f64::NEG_INFINITY; kw_count];
        if local_alive {
            for kw in 0..kw_count {
                if self.certified(ui, kw) {
                    continue;
                }
                let slack = if self.opts.use_bounds { self.prune_bound - scr } else { f64::INFINITY };
                let b = self.tau.min(slack);
                if b <= 0.0 {
                    local_alive = false;
                    break;
                }
                local_budget[kw] = b;
            }
        }
        let border = if self.opts.use_sketches && self.opts.opt_bpads {
            Some(self.est_border(ui))
        } else {
            None
        };
        if local_alive && self.opts.use_sketches {
            let mut lb_score = scr;
            for kw in 0..kw_count {
                if self.certified(ui, kw) {
                    continue;
                }
                let lb = self.est_lower(ui, kw);
                if lb > self.tau {
                    local_alive = false;
                    break;
                }
                if let Some(border) = border {
                    if lb > local_budget[kw] && border > local_budget[kw] {
                        local_alive = false;
                        break;
                    }
                }
                lb_score += lb;
            }
            if local_alive && self.opts.use_bounds && lb_score > self.prune_bound {
                local_alive = false;
            }
        }

        // Imported budgets: serve remote roots per keyword.
        let mut imported_budget = vec![f64::NEG_INFINITY; kw_count];
        for kw in 0..kw_count {
            if let Some(&f) = self.imported.get(&(ui, kw)) {
                if self.certified(ui, kw) {
                    continue; // value already known; it flows back in messages
                }
                let mut keep = true;
                if let Some(border) = border {
                    let lb = self.est_lower(ui, kw);
                    if lb > f && border > f {
                        keep = false;
                    }
                }
                if keep {
                    imported_budget[kw] = f.min(self.tau);
                }
            }
        }

        let eff = |local_alive: bool, local: &[f64], imported: &[f64], kw: usize| -> f64 {
            let l = if local_alive { local[kw] } else { f64::NEG_INFINITY };
            l.max(imported[kw])
        };
        // Skip radii this root has already searched: re-running them cannot
        // find anything new, and completions are offered below anyway.
        let mut active: Vec<bool> = (0..kw_count)
            .map(|kw| {
                let wanted = eff(local_alive, &local_budget, &imported_budget, kw);
                wanted > 0.0
                    && !self.certified(ui, kw)
                    && wanted > self.expanded[ui * kw_count + kw]
            })
            .collect();
        // Radius actually covered this pass; bound cuts can end a keyword
        // short of its nominal budget and must not inhibit a later re-run.
        let mut searched = vec![f64::NEG_INFINITY; kw_count];

        if active.iter().any(|&a| a) {
            let radius0 = (0..kw_count)
                .filter(|&kw| active[kw])
                .map(|kw| eff(local_alive, &local_budget, &imported_budget, kw))
                .fold(0.0f64, f64::max);
            let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
            let mut touched = vec![ui];
            self.scratch_dist[ui] = 0.0;
            self.scratch_parent[ui] = None;
            heap.push(Reverse((0.0f64.to_bits(), ui as u32)));
            while let Some(Reverse((bits, vi32))) = heap.pop() {
                let (d, vi) = (f64::from_bits(bits), vi32 as usize);
                if d > self.scratch_dist[vi] || d > radius0 {
                    continue;
                }
                if !active.iter().any(|&a| a) {
                    break;
                }
                self.poll(link);
                self.visited += 1;
                let v = self.ids[vi];
                let vmask = self.label_mask[vi];
                for kw in 0..kw_count {
                    if !active[kw] {
                        continue;
                    }
                    let budget = eff(local_alive, &local_budget, &imported_budget, kw);
                    if d > budget {
                        searched[kw] = searched[kw].max(budget);
                        active[kw] = false;
                        continue;
                    }
                    searched[kw] = searched[kw].max(d);
                    if vmask & (1 << kw) != 0 {
                        self.write_f(ui, kw, d, Some(v));
                        active[kw] = false;
                        continue;
                    }
                    if self.opts.use_bounds && local_alive && scr + d > self.prune_bound {
                        local_budget[kw] = f64::NEG_INFINITY;
                        if imported_budget[kw] < d {
                            active[kw] = false;
                            continue;
                        }
                    }
                    if d > self.merged(ui, kw) {
                        active[kw] = false;
                        continue;
                    }
                    if vi != ui && self.certified(vi, kw) {
                        let val = self.cert_value(vi, kw);
                        let cand = d + val;
                        if cand <= self.tau {
                            let leaf = self.cert_slot(vi, kw).leaf;
                            self.write_f(ui, kw, cand, leaf);
                        }
                    }
                }
                if self.out_portal[vi] {
                    let mut recorded = false;
                    for kw in 0..kw_count {
                        if !active[kw] {
                            continue;
                        }
                        // a remote answer only matters below the value the
                        // root already holds, which caps the true remaining
                        // distance of any competitive path through here
                        let rem = (eff(local_alive, &local_budget, &imported_budget, kw) - d)
                            .min(self.merged(ui, kw) - d);
                        if rem > 0.0 {
                            requests.push((v, kw, rem));
                            if self.opts.opt_backtrack && !recorded {
                                self.record_path(vi, &active);
                                recorded = true;
                            }
                        }
                    }
                    continue; // no stored out-edges beyond a portal
                }
                for e in 0..self.out_edges[vi].len() {
                    let (ti, w) = self.out_edges[vi][e];
                    let ti = ti as usize;
                    let nd = d + w;
                    if nd <= radius0 && nd < self.scratch_dist[ti] {
                        if self.scratch_dist[ti].is_infinite() {
                            touched.push(ti);
                        }
                        self.scratch_dist[ti] = nd;
                        self.scratch_parent[ti] = Some((vi as u32, w));
                        heap.push(Reverse((nd.to_bits(), ti as u32)));
                    }
                }
            }
            for &t in &touched {
                self.scratch_dist[t] = f64::INFINITY;
                self.scratch_parent[t] = None;
            }
            for kw in 0..kw_count {
                if active[kw] {
                    // queue exhausted: the whole budget radius was covered
                    searched[kw] = eff(local_alive, &local_budget, &imported_budget, kw);
                }
                let cell = &mut self.expanded[ui * kw_count + kw];
                *cell = cell.max(searched[kw]);
            }
        }

        self.maybe_offer(ui, link);
        if local_alive && self.opts.use_sketches && !(0..kw_count).all(|kw| self.certified(ui, kw)) {
            self.offer_approximate(ui, link);
        }
    }

    /// Upper-bound insertion: when every missing slot has a sketch upper
    /// bound within tau, the bounded score certifies a real match.
    fn offer_approximate(&mut self, ui: usize, link: &mut dyn BoundLink) {
        let mut slots = Vec::with_capacity(self.kw_count);
        for kw in 0..self.kw_count {
            if self.certified(ui, kw) {
                slots.push(self.cert_slot(ui, kw));
            } else {
                let up = self.est_upper(ui, kw);
                if up <= self.tau {
                    slots.push(MatchSlot { keyword: self.query.keywords[kw], leaf: None, dist: up });
                } else {
                    return;
                }
            }
        }
        let total: f64 = slots.iter().map(|s| s.dist).sum();
        let entry = AnswerEntry { root: self.ids[ui], score: total, approx: true, slots };
        if self.heap.offer(entry) {
            let b = self.heap.bound();
            if self.opts.use_bounds && b < self.prune_bound {
                self.prune_bound = b;
                link.refined(b);
            }
        }
    }

    fn record_path(&mut self, portal_idx: usize, active: &[bool]) {
        let mut cur = portal_idx;
        while let Some((parent, w)) = self.scratch_parent[cur] {
            let from = self.ids[parent as usize];
            let to = self.ids[cur];
            for (kw, &on) in active.iter().enumerate() {
                if on {
                    self.backtrack.record_edge(kw, from, to, w);
                }
            }
            cur = parent as usize;
        }
    }
}

/// A forward expansion from `u` is hopeless when, for some missing keyword,
/// neither a local path nor a cross-fragment path can meet the budget.
pub fn is_candidate(
    u: VertexId,
    missing_budgets: &[(KeywordId, f64)],
    sketches: &SketchSet,
    frag: &Fragment,
) -> bool {
    let border = sketches.est_lower_to_border(u, frag);
    for &(q, f) in missing_budgets {
        let lb = sketches.est_lower(u, q);
        if lb > f && border > f {
            return false;
        }
    }
    true
}
