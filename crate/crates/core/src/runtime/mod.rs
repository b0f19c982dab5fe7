//! The superstep runtime: m workers and one coordinator driven by a
//! deterministic round-robin scheduler. Data messages respect the superstep
//! barrier; bound notifications and pushes bypass it unless deterministic
//! mode defers push application to the barrier.

pub mod coordinator;
pub mod frame;
pub mod worker;

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::graph::{Graph, KeywordId, Query, VertexId};
use crate::kernel::{AnswerEntry, BoundLink, KernelOpts, MatchSlot};
use crate::partition::{FragmentId, Fragmentation};
use crate::sketch::{SketchError, SketchSet};

use coordinator::Coordinator;
use frame::{encoded_len, KIND_BACKWARD, KIND_FORWARD_MATCH, KIND_FORWARD_REQUEST};
use worker::{OutMsg, Subtask, Worker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Bf,
    Pads,
    Np,
    Pine,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Baseline, Variant::Bf, Variant::Pads, Variant::Np, Variant::Pine];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Bf => "bf",
            Variant::Pads => "pads",
            Variant::Np => "np",
            Variant::Pine => "pine",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    fn needs_sketches(self) -> bool {
        matches!(self, Variant::Pads | Variant::Np | Variant::Pine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorMode {
    /// Staleness-indicator driven, per worker per superstep.
    Free,
    /// Backward on odd, forward on even supersteps.
    ForcedAlternation,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub variant: Variant,
    /// Notification-counter gap that triggers a push.
    pub np_threshold: u64,
    /// Apply pushes only at superstep barriers.
    pub deterministic: bool,
    pub selector_override: Option<SelectorMode>,
    pub opt_backtrack: Option<bool>,
    pub opt_bpads: Option<bool>,
    pub opt_order: Option<bool>,
    pub max_supersteps: u64,
}

impl RunConfig {
    pub fn new(variant: Variant) -> Self {
        RunConfig {
            variant,
            np_threshold: 2,
            deterministic: false,
            selector_override: None,
            opt_backtrack: None,
            opt_bpads: None,
            opt_order: None,
            max_supersteps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub elapsed_ms: f64,
    pub supersteps: u64,
    pub msg_count: u64,
    pub msg_bytes: u64,
    pub visited_nodes: u64,
    pub audit_violations: u64,
    pub approx_dropped: u64,
    /// Byte share per frame kind (backward, forward match, forward request,
    /// notify, push).
    pub kind_bytes: [u64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub root: VertexId,
    pub score: f64,
    pub slots: Vec<MatchSlot>,
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("variant {} requires sketch indexes", .0.name())]
    MissingSketches(Variant),
    #[error("query keyword {0} is not in the graph")]
    UnknownKeyword(KeywordId),
    #[error("message for vertex {vertex} does not match worker {worker}'s portal sets")]
    RoutingFault { worker: FragmentId, vertex: VertexId },
    #[error("superstep cap {0} exceeded")]
    SuperstepCap(u64),
    #[error(transparent)]
    SketchMismatch(#[from] SketchError),
}

struct CoordLink<'b> {
    coord: &'b mut Coordinator,
    worker: usize,
    last_notified: &'b mut f64,
}

impl BoundLink for CoordLink<'_> {
    fn poll_push(&mut self) -> Option<f64> {
        self.coord.take_push(self.worker)
    }

    fn refined(&mut self, bound: f64) {
        if bound < *self.last_notified {
            *self.last_notified = bound;
            self.coord.notify(self.worker, bound);
        }
    }
}

/// Global top-k over the workers' local answer sets: ascending score, ties
/// by root id, at most k entries.
pub fn assemble(locals: Vec<Vec<AnswerEntry>>, k: usize) -> Vec<Answer> {
    let mut all: Vec<AnswerEntry> = locals.into_iter().flatten().collect();
    debug_assert!(all.iter().all(|e| !e.approx), "approximate entries must be resolved first");
    all.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.root.cmp(&b.root)));
    all.truncate(k);
    all.into_iter().map(|e| Answer { root: e.root, score: e.score, slots: e.slots }).collect()
}

/// Run one query: partial evaluation on every worker, incremental supersteps
/// until global quiescence, then assembly.
pub fn run_query(
    g: &Graph,
    frags: &Fragmentation,
    sketches: Option<&SketchSet>,
    query: &Query,
    cfg: &RunConfig,
) -> Result<(Vec<Answer>, Metrics), RuntimeError> {
    for &q in &query.keywords {
        if q as usize >= g.keyword_count() {
            return Err(RuntimeError::UnknownKeyword(q));
        }
    }
    let (use_bounds, use_sketches, np, default_selector) = match cfg.variant {
        Variant::Baseline => (false, false, false, SelectorMode::ForcedAlternation),
        Variant::Bf => (true, false, false, SelectorMode::ForcedAlternation),
        Variant::Pads => (true, true, false, SelectorMode::ForcedAlternation),
        Variant::Np => (true, true, true, SelectorMode::ForcedAlternation),
        Variant::Pine => (true, true, true, SelectorMode::Free),
    };
    let sketches = if cfg.variant.needs_sketches() {
        let set = sketches.ok_or(RuntimeError::MissingSketches(cfg.variant))?;
        set.validate_against(g)?;
        Some(set)
    } else {
        None
    };
    let opts = KernelOpts {
        use_bounds,
        use_sketches,
        opt_backtrack: cfg.opt_backtrack.unwrap_or(use_sketches),
        opt_bpads: cfg.opt_bpads.unwrap_or(use_sketches),
        opt_order: cfg.opt_order.unwrap_or(use_sketches),
    };
    let selector = cfg.selector_override.unwrap_or(default_selector);
    // Bound exchange stays inactive on a single worker.
    let np_active = np && frags.m > 1;

    let start = Instant::now();
    let mut metrics = Metrics::default();
    let mut workers: Vec<Worker> = frags
        .fragments
        .iter()
        .map(|f| Worker::new(g, f, query, sketches, opts))
        .collect();
    let mut coord = Coordinator::new(frags.m, np_active, cfg.deterministic, cfg.np_threshold);
    let mut last_notified = vec![f64::INFINITY; frags.m];

    // superstep 1: PEval of both subtasks on every worker
    metrics.supersteps = 1;
    let mut outbox: Vec<OutMsg> = Vec::new();
    for i in 0..frags.m {
        let mut link = CoordLink { coord: &mut coord, worker: i, last_notified: &mut last_notified[i] };
        workers[i].peval(&mut link);
        outbox.extend(workers[i].collect_segments());
    }
    route(&mut workers, query, std::mem::take(&mut outbox), &mut metrics)?;
    coord.apply_barrier();

    loop {
        if workers.iter().all(Worker::idle) {
            break;
        }
        metrics.supersteps += 1;
        if metrics.supersteps > cfg.max_supersteps {
            return Err(RuntimeError::SuperstepCap(cfg.max_supersteps));
        }
        for i in 0..frags.m {
            let Some(task) = workers[i].select(selector, metrics.supersteps) else { continue };
            let mut link =
                CoordLink { coord: &mut coord, worker: i, last_notified: &mut last_notified[i] };
            match task {
                Subtask::Bkws => workers[i].inc_bkws(&mut link),
                Subtask::Fkws => workers[i].inc_fkws(&mut link),
            }
            outbox.extend(workers[i].collect_segments());
        }
        route(&mut workers, query, std::mem::take(&mut outbox), &mut metrics)?;
        coord.apply_barrier();
    }

    // assemble: unresolved approximate entries are dropped, then the k best
    // exact local matches win
    let mut locals = Vec::with_capacity(frags.m);
    for w in &mut workers {
        metrics.approx_dropped += w.kernel.heap.drop_approx() as u64;
        metrics.visited_nodes += w.kernel.visited;
        metrics.audit_violations += w.kernel.audit_violations;
        locals.push(w.kernel.heap.entries().to_vec());
    }
    let answers = assemble(locals, query.k);
    metrics.msg_count += coord.notify_count + coord.push_count;
    metrics.msg_bytes += (coord.notify_count + coord.push_count) * encoded_len(1);
    metrics.kind_bytes[3] += coord.notify_count * encoded_len(1);
    metrics.kind_bytes[4] += coord.push_count * encoded_len(1);
    metrics.audit_violations += coord.audit_violations;
    metrics.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((answers, metrics))
}

/// Deliver data messages at the barrier, enforcing the routing closure:
/// backward and forward-match targets must be out-portals of the receiver,
/// request targets must be its in-portals.
fn route(
    workers: &mut [Worker],
    query: &Query,
    outbox: Vec<OutMsg>,
    metrics: &mut Metrics,
) -> Result<(), RuntimeError> {
    for msg in outbox {
        metrics.msg_count += 1;
        let bytes = encoded_len(msg.tuples.len());
        metrics.msg_bytes += bytes;
        metrics.kind_bytes[(msg.kind - 1) as usize] += bytes;
        let w = &mut workers[msg.dst];
        let mut grouped: BTreeMap<VertexId, Vec<(usize, f64)>> = BTreeMap::new();
        for (v, q, val) in msg.tuples {
            let kw = query
                .keywords
                .iter()
                .position(|&k| k == q)
                .ok_or(RuntimeError::RoutingFault { worker: msg.dst, vertex: v })?;
            let frag = w.kernel.frag;
            let ok = match msg.kind {
                KIND_BACKWARD | KIND_FORWARD_MATCH => frag.is_out_portal(v),
                KIND_FORWARD_REQUEST => frag.is_in_portal(v),
                _ => false,
            };
            if !ok {
                return Err(RuntimeError::RoutingFault { worker: msg.dst, vertex: v });
            }
            grouped.entry(v).or_default().push((kw, val));
        }
        let buf = match msg.kind {
            KIND_BACKWARD => &mut w.buf_backward,
            KIND_FORWARD_MATCH => &mut w.buf_fmatch,
            _ => &mut w.buf_frequest,
        };
        buf.extend(grouped);
    }
    Ok(())
}
