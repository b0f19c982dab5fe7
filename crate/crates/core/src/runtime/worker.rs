//! Worker context: one fragment, one kernel, two message buffers, and the
//! per-superstep subtask choice.

use std::collections::{BTreeMap, HashMap};

use crate::graph::{Graph, Query, VertexId};
use crate::kernel::{BoundLink, Kernel, KernelOpts};
use crate::partition::{Fragment, FragmentId};
use crate::runtime::frame::{KIND_BACKWARD, KIND_FORWARD_MATCH, KIND_FORWARD_REQUEST};
use crate::runtime::SelectorMode;
use crate::sketch::SketchSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subtask {
    Bkws,
    Fkws,
}

/// One data message: a batch of (vertex, keyword, value) tuples of one kind
/// bound for one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct OutMsg {
    pub dst: FragmentId,
    pub kind: u8,
    pub tuples: Vec<(u64, u32, f64)>,
}

pub struct Worker<'a> {
    pub id: FragmentId,
    pub kernel: Kernel<'a>,
    query: &'a Query,
    /// Buffered backward refinements for out-portal copies.
    pub buf_backward: Vec<(VertexId, Vec<(usize, f64)>)>,
    /// Buffered forward match refinements for out-portal copies.
    pub buf_fmatch: Vec<(VertexId, Vec<(usize, f64)>)>,
    /// Buffered forward expansion budgets for local in-portals.
    pub buf_frequest: Vec<(VertexId, Vec<(usize, f64)>)>,
    sent_b: HashMap<(VertexId, usize), f64>,
    sent_f: HashMap<(VertexId, usize), f64>,
    sent_req: HashMap<(VertexId, usize), f64>,
    pending_req: BTreeMap<(VertexId, usize), f64>,
}

impl<'a> Worker<'a> {
    pub fn new(
        g: &'a Graph,
        frag: &'a Fragment,
        query: &'a Query,
        sketches: Option<&'a SketchSet>,
        opts: KernelOpts,
    ) -> Self {
        Worker {
            id: frag.id,
            kernel: Kernel::new(g, frag, query, sketches, opts),
            query,
            buf_backward: Vec::new(),
            buf_fmatch: Vec::new(),
            buf_frequest: Vec::new(),
            sent_b: HashMap::new(),
            sent_f: HashMap::new(),
            sent_req: HashMap::new(),
            pending_req: BTreeMap::new(),
        }
    }

    pub fn idle(&self) -> bool {
        self.buf_backward.is_empty()
            && self.buf_fmatch.is_empty()
            && self.buf_frequest.is_empty()
            && self.kernel.dirty.is_empty()
    }

    /// First superstep: partial evaluation of both subtasks.
    pub fn peval(&mut self, link: &mut dyn BoundLink) {
        self.kernel.backward_init_origins();
        self.kernel.backward_expand(link);
        let requests = self.kernel.forward_pass(link);
        self.queue_requests(requests);
    }

    pub fn inc_bkws(&mut self, link: &mut dyn BoundLink) {
        for (v, entries) in std::mem::take(&mut self.buf_backward) {
            for (kw, val) in entries {
                self.kernel.backward_seed(v, kw, val);
            }
        }
        self.kernel.backward_expand(link);
    }

    pub fn inc_fkws(&mut self, link: &mut dyn BoundLink) {
        let kw_count = self.query.keywords.len();
        let mut seeds: Vec<Vec<(VertexId, f64)>> = vec![Vec::new(); kw_count];
        for (v, entries) in std::mem::take(&mut self.buf_fmatch) {
            for (kw, val) in entries {
                if self.kernel.merge_forward_value(v, kw, val) {
                    seeds[kw].push((v, val));
                }
            }
        }
        for (kw, kw_seeds) in seeds.iter().enumerate() {
            self.kernel.propagate(kw, kw_seeds, link);
        }
        for (v, entries) in std::mem::take(&mut self.buf_frequest) {
            for (kw, f) in entries {
                self.kernel.import_budget(v, kw, f);
            }
        }
        let requests = self.kernel.forward_pass(link);
        self.queue_requests(requests);
    }

    fn queue_requests(&mut self, requests: Vec<(VertexId, usize, f64)>) {
        for (portal, kw, rem) in requests {
            let cur = self.pending_req.entry((portal, kw)).or_insert(f64::NEG_INFINITY);
            if rem > *cur {
                *cur = rem;
            }
        }
    }

    /// End-of-superstep message segments, deduplicated against everything
    /// already sent: backward and forward values of in-portals go to their
    /// watchers, remaining budgets of out-portals go to their owners.
    pub fn collect_segments(&mut self) -> Vec<OutMsg> {
        let frag = self.kernel.frag;
        let inf = self.kernel.inf();
        let mut grouped: BTreeMap<(FragmentId, u8), Vec<(u64, u32, f64)>> = BTreeMap::new();
        for &p in &frag.in_portals {
            for kw in 0..self.query.keywords.len() {
                let q = self.query.keywords[kw];
                let bval = self.kernel.backward_value(p, kw);
                if bval < inf {
                    let sent = self.sent_b.entry((p, kw)).or_insert(f64::INFINITY);
                    if bval < *sent {
                        *sent = bval;
                        for &dst in &frag.in_portal_watchers[&p] {
                            grouped.entry((dst, KIND_BACKWARD)).or_default().push((p, q, bval));
                        }
                    }
                }
                let fval = self.kernel.forward_value(p, kw);
                if fval < inf {
                    let sent = self.sent_f.entry((p, kw)).or_insert(f64::INFINITY);
                    if fval < *sent {
                        *sent = fval;
                        for &dst in &frag.in_portal_watchers[&p] {
                            grouped.entry((dst, KIND_FORWARD_MATCH)).or_default().push((p, q, fval));
                        }
                    }
                }
            }
        }
        for ((portal, kw), rem) in std::mem::take(&mut self.pending_req) {
            let sent = self.sent_req.entry((portal, kw)).or_insert(f64::NEG_INFINITY);
            if rem > *sent {
                *sent = rem;
                let dst = frag.out_portal_owners[&portal];
                grouped
                    .entry((dst, KIND_FORWARD_REQUEST))
                    .or_default()
                    .push((portal, self.query.keywords[kw], rem));
            }
        }
        grouped
            .into_iter()
            .map(|((dst, kind), tuples)| OutMsg { dst, kind, tuples })
            .collect()
    }

    /// Average remaining expansion distance of the buffered messages;
    /// smaller means more urgent. Empty buffers rate as unbounded, pending
    /// local forward work as tau.
    pub fn staleness(&self) -> (f64, f64) {
        let tau = self.query.tau;
        let s = self.kernel.bound();
        let si_b = if self.buf_backward.is_empty() {
            f64::INFINITY
        } else {
            let num: f64 = self
                .buf_backward
                .iter()
                .flat_map(|(_, es)| es.iter())
                .map(|&(_, val)| (s - val).min(tau).max(0.0))
                .sum();
            num / self.buf_backward.len() as f64
        };
        let forward_msgs = self.buf_fmatch.len() + self.buf_frequest.len();
        let si_f = if forward_msgs > 0 {
            let req: f64 = self
                .buf_frequest
                .iter()
                .flat_map(|(_, es)| es.iter())
                .map(|&(_, f)| f.min(tau).max(0.0))
                .sum();
            // match refinements still have to be propagated backward, the
            // same remaining-distance shape as backward refinements
            let fm: f64 = self
                .buf_fmatch
                .iter()
                .flat_map(|(_, es)| es.iter())
                .map(|&(_, val)| (s - val).min(tau).max(0.0))
                .sum();
            (req + fm) / forward_msgs as f64
        } else if !self.kernel.dirty.is_empty() {
            tau
        } else {
            f64::INFINITY
        };
        (si_b, si_f)
    }

    /// Pick the subtask for this superstep. The free selector follows the
    /// staleness indicators (ties favor the backward search); the forced
    /// mode alternates backward on odd and forward on even supersteps.
    pub fn select(&self, mode: SelectorMode, superstep: u64) -> Option<Subtask> {
        let bwork = !self.buf_backward.is_empty();
        let fwork = !self.buf_fmatch.is_empty()
            || !self.buf_frequest.is_empty()
            || !self.kernel.dirty.is_empty();
        if !bwork && !fwork {
            return None;
        }
        match mode {
            SelectorMode::ForcedAlternation => {
                if superstep % 2 == 0 {
                    fwork.then_some(Subtask::Fkws)
                } else {
                    bwork.then_some(Subtask::Bkws)
                }
            }
            SelectorMode::Free => {
                if !bwork {
                    return Some(Subtask::Fkws);
                }
                if !fwork {
                    return Some(Subtask::Bkws);
                }
                let (si_b, si_f) = self.staleness();
                if si_b <= si_f {
                    Some(Subtask::Bkws)
                } else {
                    Some(Subtask::Fkws)
                }
            }
        }
    }
}
