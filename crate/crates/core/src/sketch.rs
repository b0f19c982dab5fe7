//! Distance sketches for pruning: per-vertex sketches admitted by PageRank
//! rank, merged per keyword and per fragment border.
//!
//! A vertex sketch is a small set of `(center, exact distance)` pairs, one
//! set per direction. A center is admitted while fewer than `k_param`
//! already-stored entries lie at a smaller-or-equal distance, with centers
//! processed in descending PageRank order, so important vertices end up in
//! many sketches. Keyword sketches merge the sketches of all carriers of a
//! keyword keeping the minimum distance per center; border sketches do the
//! same over a fragment's out-portals.
//!
//! Upper estimates go through a common center (`d(u,w) + d(w,*)`). Lower
//! estimates use the reverse triangle inequality, which is only sound
//! against the *farthest* carrier of the merged side, so merged entries also
//! record the maximum distance over all carriers and whether every carrier
//! reaches the center.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::graph::{Graph, KeywordId, VertexId};
use crate::partition::{Fragment, Fragmentation};

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOL: f64 = 1e-9;
pub const PAGERANK_MAX_ITERS: usize = 100;
pub const DEFAULT_K_PARAM: usize = 4;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sketch file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("sketch file was built for a different graph: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchEntry {
    pub center: VertexId,
    pub dist: f64,
}

/// Merged entry: `dist` is the minimum over the merged sketches, `dist_max`
/// the maximum exact distance over *all* members of the merged set, and
/// `complete` whether every member reaches the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedEntry {
    pub center: VertexId,
    pub dist: f64,
    pub dist_max: f64,
    pub complete: bool,
}

/// Power iteration with uniform teleport; dangling mass is spread uniformly.
pub fn pagerank(g: &Graph, damping: f64, tol: f64, max_iters: usize) -> Vec<f64> {
    let n = g.vertex_count();
    if n == 0 {
        return Vec::new();
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        let base = (1.0 - damping) / n as f64;
        next.iter_mut().for_each(|v| *v = base);
        let mut dangling = 0.0;
        for v in 0..n {
            let outs = g.out(v as VertexId);
            if outs.is_empty() {
                dangling += x[v];
            } else {
                let share = damping * x[v] / outs.len() as f64;
                for &(t, _) in outs {
                    next[t as usize] += share;
                }
            }
        }
        let spread = damping * dangling / n as f64;
        next.iter_mut().for_each(|v| *v += spread);
        let residual: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < tol {
            break;
        }
    }
    x
}

/// Per-vertex sketches. `out_sketch[u]` holds distances u -> center,
/// `in_sketch[u]` center -> u; both sorted by center id.
#[derive(Debug, Clone, PartialEq)]
pub struct PadsIndex {
    pub k_param: usize,
    pub pagerank: Vec<f64>,
    out_sketch: Vec<Vec<SketchEntry>>,
    in_sketch: Vec<Vec<SketchEntry>>,
}

impl PadsIndex {
    pub fn out_sketch(&self, u: VertexId) -> &[SketchEntry] {
        &self.out_sketch[u as usize]
    }

    pub fn in_sketch(&self, u: VertexId) -> &[SketchEntry] {
        &self.in_sketch[u as usize]
    }

    pub fn from_parts(
        k_param: usize,
        out_sketch: Vec<Vec<SketchEntry>>,
        in_sketch: Vec<Vec<SketchEntry>>,
    ) -> Self {
        let n = out_sketch.len();
        let mut idx = PadsIndex { k_param, pagerank: vec![0.0; n], out_sketch, in_sketch };
        for s in idx.out_sketch.iter_mut().chain(idx.in_sketch.iter_mut()) {
            s.sort_by(|a, b| a.center.cmp(&b.center));
        }
        idx
    }

    pub fn mean_entries(&self) -> f64 {
        let total: usize =
            self.out_sketch.iter().map(Vec::len).sum::<usize>() + self.in_sketch.iter().map(Vec::len).sum::<usize>();
        total as f64 / (2 * self.out_sketch.len().max(1)) as f64
    }
}

struct Dijkstra {
    dist: Vec<f64>,
    heap: BinaryHeap<Reverse<(u64, VertexId)>>,
    touched: Vec<VertexId>,
}

impl Dijkstra {
    fn new(n: usize) -> Self {
        Dijkstra { dist: vec![f64::INFINITY; n], heap: BinaryHeap::new(), touched: Vec::new() }
    }

    /// Visits vertices in settle order; adjacency is selected by `reverse`.
    fn run(&mut self, g: &Graph, source: VertexId, reverse: bool, mut on_settle: impl FnMut(VertexId, f64)) {
        self.dist[source as usize] = 0.0;
        self.touched.push(source);
        self.heap.push(Reverse((0.0f64.to_bits(), source)));
        while let Some(Reverse((bits, v))) = self.heap.pop() {
            let d = f64::from_bits(bits);
            if d > self.dist[v as usize] {
                continue;
            }
            on_settle(v, d);
            let adj = if reverse { g.inn(v) } else { g.out(v) };
            for &(t, w) in adj {
                let nd = d + w;
                if nd < self.dist[t as usize] {
                    if self.dist[t as usize].is_infinite() {
                        self.touched.push(t);
                    }
                    self.dist[t as usize] = nd;
                    self.heap.push(Reverse((nd.to_bits(), t)));
                }
            }
        }
        for &t in &self.touched {
            self.dist[t as usize] = f64::INFINITY;
        }
        self.touched.clear();
        self.heap.clear();
    }
}

// f64 bit-ordering in the heap is valid for non-negative finite distances.

/// Build both sketch directions. Every stored distance is the exact Dijkstra
/// distance; admission only limits which centers are kept.
pub fn build_pads(g: &Graph, k_param: usize) -> PadsIndex {
    assert!(k_param >= 1, "k_param must be >= 1");
    let n = g.vertex_count();
    let pr = pagerank(g, PAGERANK_DAMPING, PAGERANK_TOL, PAGERANK_MAX_ITERS);
    let mut order: Vec<VertexId> = (0..n as VertexId).collect();
    order.sort_by(|&a, &b| pr[b as usize].total_cmp(&pr[a as usize]).then(a.cmp(&b)));

    let mut out_sketch: Vec<Vec<SketchEntry>> = vec![Vec::new(); n];
    let mut in_sketch: Vec<Vec<SketchEntry>> = vec![Vec::new(); n];
    let mut dij = Dijkstra::new(n);
    for &c in &order {
        dij.run(g, c, false, |u, d| {
            admit(&mut in_sketch[u as usize], k_param, c, d);
        });
        dij.run(g, c, true, |u, d| {
            admit(&mut out_sketch[u as usize], k_param, c, d);
        });
    }
    for s in out_sketch.iter_mut().chain(in_sketch.iter_mut()) {
        s.sort_by(|a, b| a.center.cmp(&b.center));
    }
    PadsIndex { k_param, pagerank: pr, out_sketch, in_sketch }
}

fn admit(sketch: &mut Vec<SketchEntry>, k_param: usize, center: VertexId, d: f64) {
    let closer = sketch.iter().filter(|e| e.dist <= d).count();
    if closer < k_param {
        sketch.push(SketchEntry { center, dist: d });
    }
}

/// Keyword sketches: `in_sketch[q]` estimates center -> keyword, the
/// enriched `out_sketch[q]` keyword -> center.
#[derive(Debug, Clone, PartialEq)]
pub struct KpadsIndex {
    in_sketch: Vec<Vec<SketchEntry>>,
    out_sketch: Vec<Vec<MergedEntry>>,
}

impl KpadsIndex {
    pub fn in_sketch(&self, q: KeywordId) -> &[SketchEntry] {
        self.in_sketch.get(q as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn out_sketch(&self, q: KeywordId) -> &[MergedEntry] {
        self.out_sketch.get(q as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn from_parts(in_sketch: Vec<Vec<SketchEntry>>, out_sketch: Vec<Vec<MergedEntry>>) -> Self {
        let mut idx = KpadsIndex { in_sketch, out_sketch };
        for s in idx.in_sketch.iter_mut() {
            s.sort_by(|a, b| a.center.cmp(&b.center));
        }
        for s in idx.out_sketch.iter_mut() {
            s.sort_by(|a, b| a.center.cmp(&b.center));
        }
        idx
    }
}

/// Center-wise minimum merge of the carriers' sketches per keyword. The
/// out-side is enriched with exact max distances over all carriers, computed
/// with one reverse Dijkstra per distinct candidate center.
pub fn build_kpads(pads: &PadsIndex, g: &Graph) -> KpadsIndex {
    let kw_count = g.keyword_count();
    let mut in_sketch: Vec<Vec<SketchEntry>> = Vec::with_capacity(kw_count);
    let mut out_min: Vec<BTreeMap<VertexId, f64>> = vec![BTreeMap::new(); kw_count];
    let mut centers: Vec<VertexId> = Vec::new();
    for q in 0..kw_count as KeywordId {
        let mut merged: BTreeMap<VertexId, f64> = BTreeMap::new();
        for &v in g.search_origins(q) {
            for e in pads.in_sketch(v) {
                merged
                    .entry(e.center)
                    .and_modify(|d| *d = d.min(e.dist))
                    .or_insert(e.dist);
            }
            for e in pads.out_sketch(v) {
                out_min[q as usize]
                    .entry(e.center)
                    .and_modify(|d| *d = d.min(e.dist))
                    .or_insert(e.dist);
            }
        }
        centers.extend(out_min[q as usize].keys().copied());
        in_sketch.push(merged.into_iter().map(|(center, dist)| SketchEntry { center, dist }).collect());
    }
    centers.sort_unstable();
    centers.dedup();

    // dist(v, c) for every carrier v, via one reverse Dijkstra per center.
    let mut reach: BTreeMap<VertexId, Vec<f64>> = BTreeMap::new();
    let mut dij = Dijkstra::new(g.vertex_count());
    for &c in &centers {
        let mut dist = vec![f64::INFINITY; g.vertex_count()];
        dij.run(g, c, true, |u, d| dist[u as usize] = d);
        reach.insert(c, dist);
    }
    let out_sketch = (0..kw_count as KeywordId)
        .map(|q| {
            out_min[q as usize]
                .iter()
                .map(|(&center, &dist)| {
                    let dists = &reach[&center];
                    let mut max = 0.0f64;
                    let mut complete = true;
                    for &v in g.search_origins(q) {
                        let d = dists[v as usize];
                        if d.is_infinite() {
                            complete = false;
                        } else {
                            max = max.max(d);
                        }
                    }
                    MergedEntry { center, dist, dist_max: max, complete }
                })
                .collect()
        })
        .collect();
    KpadsIndex { in_sketch, out_sketch }
}

/// Border sketches, one merged entry list per fragment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BpadsIndex {
    pub per_fragment: Vec<Vec<MergedEntry>>,
}

impl BpadsIndex {
    pub fn fragment(&self, id: usize) -> &[MergedEntry] {
        self.per_fragment.get(id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Merge `out_sketch` over a fragment's out-portals, enriched with exact max
/// distances over all portals (one forward Dijkstra per portal).
pub fn build_bpads(frag: &Fragment, pads: &PadsIndex, g: &Graph) -> Vec<MergedEntry> {
    let mut merged: BTreeMap<VertexId, f64> = BTreeMap::new();
    for &p in &frag.out_portals {
        for e in pads.out_sketch(p) {
            merged.entry(e.center).and_modify(|d| *d = d.min(e.dist)).or_insert(e.dist);
        }
    }
    if merged.is_empty() {
        return Vec::new();
    }
    let mut portal_dists: Vec<Vec<f64>> = Vec::with_capacity(frag.out_portals.len());
    let mut dij = Dijkstra::new(g.vertex_count());
    for &p in &frag.out_portals {
        let mut dist = vec![f64::INFINITY; g.vertex_count()];
        dij.run(g, p, false, |u, d| dist[u as usize] = d);
        portal_dists.push(dist);
    }
    merged
        .into_iter()
        .map(|(center, dist)| {
            let mut max = 0.0f64;
            let mut complete = true;
            for dists in &portal_dists {
                let d = dists[center as usize];
                if d.is_infinite() {
                    complete = false;
                } else {
                    max = max.max(d);
                }
            }
            MergedEntry { center, dist, dist_max: max, complete }
        })
        .collect()
}

pub fn build_bpads_all(frags: &Fragmentation, pads: &PadsIndex, g: &Graph) -> BpadsIndex {
    BpadsIndex {
        per_fragment: frags.fragments.iter().map(|f| build_bpads(f, pads, g)).collect(),
    }
}

/// The full index set a query run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSet {
    pub pads: PadsIndex,
    pub kpads: KpadsIndex,
    pub bpads: Option<BpadsIndex>,
    pub inf_sentinel: f64,
    pub keyword_names: Vec<String>,
}

impl SketchSet {
    pub fn build(g: &Graph, k_param: usize, frags: Option<&Fragmentation>) -> Self {
        let pads = build_pads(g, k_param);
        let kpads = build_kpads(&pads, g);
        let bpads = frags.map(|f| build_bpads_all(f, &pads, g));
        SketchSet {
            pads,
            kpads,
            bpads,
            inf_sentinel: g.inf_sentinel(),
            keyword_names: g.keyword_names().to_vec(),
        }
    }

    pub fn validate_against(&self, g: &Graph) -> Result<(), SketchError> {
        if self.keyword_names != g.keyword_names() {
            return Err(SketchError::Mismatch("keyword table differs".into()));
        }
        if self.pads.out_sketch.len() != g.vertex_count() {
            return Err(SketchError::Mismatch(format!(
                "vertex count {} vs {}",
                self.pads.out_sketch.len(),
                g.vertex_count()
            )));
        }
        Ok(())
    }

    /// Upper bound of dist(u, q) through a common center; `None` without one.
    pub fn est_upper(&self, u: VertexId, q: KeywordId) -> Option<f64> {
        min_sum(self.pads.out_sketch(u), self.kpads.in_sketch(q))
    }

    /// Sound lower bound of dist(u, q); 0 when no usable center exists.
    pub fn est_lower(&self, u: VertexId, q: KeywordId) -> f64 {
        max_diff(self.pads.out_sketch(u), self.kpads.out_sketch(q))
    }

    /// Upper bound of dist(u, v) through a common center.
    pub fn est_dist(&self, u: VertexId, v: VertexId) -> Option<f64> {
        min_sum(self.pads.out_sketch(u), self.pads.in_sketch(v))
    }

    /// Sound lower bound of the distance from `u` to the nearest out-portal
    /// of `frag`; the sentinel when the fragment has no out-portals.
    pub fn est_lower_to_border(&self, u: VertexId, frag: &Fragment) -> f64 {
        if frag.out_portals.is_empty() {
            return self.inf_sentinel;
        }
        match &self.bpads {
            Some(b) => max_diff(self.pads.out_sketch(u), b.fragment(frag.id)),
            None => 0.0,
        }
    }
}

fn min_sum(a: &[SketchEntry], b: &[SketchEntry]) -> Option<f64> {
    let (mut i, mut j) = (0, 0);
    let mut best: Option<f64> = None;
    while i < a.len() && j < b.len() {
        match a[i].center.cmp(&b[j].center) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let s = a[i].dist + b[j].dist;
                best = Some(best.map_or(s, |x: f64| x.min(s)));
                i += 1;
                j += 1;
            }
        }
    }
    best
}

fn max_diff(a: &[SketchEntry], b: &[MergedEntry]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() && j < b.len() {
        match a[i].center.cmp(&b[j].center) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if b[j].complete {
                    best = best.max(a[i].dist - b[j].dist_max);
                }
                i += 1;
                j += 1;
            }
        }
    }
    best
}

const FILE_VERSION: &str = "dkws-sketch 1";

/// Line-based persistence. Floats are printed with Rust's shortest
/// round-trip formatting, so save/load is lossless.
pub fn save_sketches(set: &SketchSet, mut w: impl Write) -> Result<(), SketchError> {
    let n = set.pads.out_sketch.len();
    writeln!(w, "{FILE_VERSION} k={} n={} inf={}", set.pads.k_param, n, set.inf_sentinel)?;
    writeln!(w, "#keywords")?;
    for (i, name) in set.keyword_names.iter().enumerate() {
        writeln!(w, "{i} {name}")?;
    }
    writeln!(w, "#vertex-sketches")?;
    for v in 0..n as VertexId {
        writeln!(w, "{v}|out|{}", fmt_entries(set.pads.out_sketch(v)))?;
        writeln!(w, "{v}|in|{}", fmt_entries(set.pads.in_sketch(v)))?;
    }
    writeln!(w, "#keyword-sketches")?;
    for q in 0..set.keyword_names.len() as KeywordId {
        writeln!(w, "{q}|in|{}", fmt_entries(set.kpads.in_sketch(q)))?;
        writeln!(w, "{q}|out|{}", fmt_merged(set.kpads.out_sketch(q)))?;
    }
    if let Some(b) = &set.bpads {
        writeln!(w, "#fragment-sketches m={}", b.per_fragment.len())?;
        for (i, entries) in b.per_fragment.iter().enumerate() {
            writeln!(w, "{i}|{}", fmt_merged(entries))?;
        }
    }
    Ok(())
}

fn fmt_entries(entries: &[SketchEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}:{}", e.center, e.dist))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_merged(entries: &[MergedEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}:{}:{}:{}", e.center, e.dist, e.dist_max, u8::from(e.complete)))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn load_sketches(r: impl BufRead) -> Result<SketchSet, SketchError> {
    let mut lines = r.lines().enumerate();
    let err = |line: usize, msg: &str| SketchError::Parse { line: line + 1, msg: msg.to_string() };
    let (ln, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
    let header = header?;
    if !header.starts_with(FILE_VERSION) {
        return Err(err(ln, "unsupported header"));
    }
    let mut k_param = DEFAULT_K_PARAM;
    let mut n = 0usize;
    let mut inf = f64::INFINITY;
    for tok in header.split_whitespace().skip(2) {
        if let Some(v) = tok.strip_prefix("k=") {
            k_param = v.parse().map_err(|_| err(ln, "bad k"))?;
        } else if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().map_err(|_| err(ln, "bad n"))?;
        } else if let Some(v) = tok.strip_prefix("inf=") {
            inf = v.parse().map_err(|_| err(ln, "bad inf"))?;
        }
    }
    let mut keyword_names = Vec::new();
    let mut pads_out = vec![Vec::new(); n];
    let mut pads_in = vec![Vec::new(); n];
    let mut kpads_in: Vec<Vec<SketchEntry>> = Vec::new();
    let mut kpads_out: Vec<Vec<MergedEntry>> = Vec::new();
    let mut bpads: Option<Vec<Vec<MergedEntry>>> = None;
    let mut section = "";
    let mut section_owned;
    for (ln, line) in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('#') {
            section_owned = rest.to_string();
            section = "";
            if section_owned.starts_with("fragment-sketches") {
                let m: usize = section_owned
                    .split("m=")
                    .nth(1)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| err(ln, "bad fragment header"))?;
                bpads = Some(vec![Vec::new(); m]);
                section = "frag";
            } else if section_owned == "keywords" {
                section = "kw";
            } else if section_owned == "vertex-sketches" {
                section = "vs";
            } else if section_owned == "keyword-sketches" {
                section = "ks";
            }
            continue;
        }
        match section {
            "kw" => {
                let mut it = text.splitn(2, ' ');
                let _id: usize = it.next().unwrap().parse().map_err(|_| err(ln, "bad keyword id"))?;
                keyword_names.push(it.next().ok_or_else(|| err(ln, "missing name"))?.to_string());
            }
            "vs" => {
                let mut it = text.splitn(3, '|');
                let v: usize = it.next().unwrap().parse().map_err(|_| err(ln, "bad vertex"))?;
                let dir = it.next().ok_or_else(|| err(ln, "missing direction"))?;
                let entries = parse_entries(it.next().unwrap_or(""), ln)?;
                match dir {
                    "out" => pads_out[v] = entries,
                    "in" => pads_in[v] = entries,
                    _ => return Err(err(ln, "bad direction")),
                }
            }
            "ks" => {
                let mut it = text.splitn(3, '|');
                let q: usize = it.next().unwrap().parse().map_err(|_| err(ln, "bad keyword"))?;
                let dir = it.next().ok_or_else(|| err(ln, "missing direction"))?;
                let body = it.next().unwrap_or("");
                match dir {
                    "in" => {
                        if kpads_in.len() <= q {
                            kpads_in.resize(q + 1, Vec::new());
                        }
                        kpads_in[q] = parse_entries(body, ln)?;
                    }
                    "out" => {
                        if kpads_out.len() <= q {
                            kpads_out.resize(q + 1, Vec::new());
                        }
                        kpads_out[q] = parse_merged(body, ln)?;
                    }
                    _ => return Err(err(ln, "bad direction")),
                }
            }
            "frag" => {
                let mut it = text.splitn(2, '|');
                let f: usize = it.next().unwrap().parse().map_err(|_| err(ln, "bad fragment"))?;
                let entries = parse_merged(it.next().unwrap_or(""), ln)?;
                bpads.as_mut().ok_or_else(|| err(ln, "fragment before header"))?[f] = entries;
            }
            _ => return Err(err(ln, "line outside any section")),
        }
    }
    kpads_in.resize(keyword_names.len(), Vec::new());
    kpads_out.resize(keyword_names.len(), Vec::new());
    Ok(SketchSet {
        pads: PadsIndex::from_parts(k_param, pads_out, pads_in),
        kpads: KpadsIndex::from_parts(kpads_in, kpads_out),
        bpads: bpads.map(|per_fragment| BpadsIndex { per_fragment }),
        inf_sentinel: inf,
        keyword_names,
    })
}

fn parse_entries(body: &str, ln: usize) -> Result<Vec<SketchEntry>, SketchError> {
    let err = |msg: &str| SketchError::Parse { line: ln + 1, msg: msg.to_string() };
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|tok| {
            let mut it = tok.split(':');
            let center = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad center"))?;
            let dist = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad dist"))?;
            Ok(SketchEntry { center, dist })
        })
        .collect()
}

fn parse_merged(body: &str, ln: usize) -> Result<Vec<MergedEntry>, SketchError> {
    let err = |msg: &str| SketchError::Parse { line: ln + 1, msg: msg.to_string() };
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|tok| {
            let mut it = tok.split(':');
            let center = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad center"))?;
            let dist = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad dist"))?;
            let dist_max = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad max"))?;
            let complete: u8 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad flag"))?;
            Ok(MergedEntry { center, dist, dist_max, complete: complete != 0 })
        })
        .collect()
}

/// `(2c - 1)` with `c = ceil(ln n / ln k)`: the expected stretch factor of
/// center-based estimates. Undefined for `k < 2`.
pub fn stretch_factor(n: usize, k_param: usize) -> Option<f64> {
    if k_param < 2 || n < 2 {
        return None;
    }
    let c = ((n as f64).ln() / (k_param as f64).ln()).ceil();
    Some(2.0 * c - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::oracle;

    #[test]
    fn pagerank_symmetric_cycle() {
        let mut b = GraphBuilder::new(2);
        b.add_edge(0, 1, 1.0);
        b.add_edge(1, 0, 1.0);
        let g = b.build();
        let pr = pagerank(&g, 0.85, 1e-9, 100);
        assert!((pr[0] - 0.5).abs() < 1e-9);
        assert!((pr[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pagerank_isolated_vertex_keeps_teleport_floor() {
        let mut b = GraphBuilder::new(3);
        b.add_edge(0, 1, 1.0);
        let g = b.build();
        let pr = pagerank(&g, 0.85, 1e-9, 100);
        assert!(pr[2] >= (1.0 - 0.85) / 3.0 - 1e-12);
        let sum: f64 = pr.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pagerank_matches_dense_iteration() {
        let g = crate::gen::erdos_renyi(50, 3.0, 5, 1.0, 13);
        let n = g.vertex_count();
        let pr = pagerank(&g, 0.85, 1e-9, 200);
        // Independent dense power iteration run to 1e-12.
        let mut x = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            let mut next = vec![(1.0 - 0.85) / n as f64; n];
            let mut dangling = 0.0;
            for v in 0..n {
                let outs = g.out(v as VertexId);
                if outs.is_empty() {
                    dangling += x[v];
                } else {
                    for &(t, _) in outs {
                        next[t as usize] += 0.85 * x[v] / outs.len() as f64;
                    }
                }
            }
            for t in next.iter_mut() {
                *t += 0.85 * dangling / n as f64;
            }
            let res: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            x = next;
            if res < 1e-12 {
                break;
            }
        }
        for v in 0..n {
            assert!((pr[v] - x[v]).abs() < 1e-8, "v={v}: {} vs {}", pr[v], x[v]);
        }
    }

    #[test]
    fn single_vertex_has_self_entry() {
        let g = GraphBuilder::new(1).build();
        let pads = build_pads(&g, 1);
        assert_eq!(pads.out_sketch(0), &[SketchEntry { center: 0, dist: 0.0 }]);
        assert_eq!(pads.in_sketch(0), &[SketchEntry { center: 0, dist: 0.0 }]);
    }

    #[test]
    fn out_sketch_contains_downstream_center() {
        // y1 -> w1 at weight 1: (w1, 1) must appear in out_sketch(y1).
        let mut b = GraphBuilder::new(2);
        b.add_edge(0, 1, 1.0);
        let g = b.build();
        let pads = build_pads(&g, 1);
        assert!(pads.out_sketch(0).contains(&SketchEntry { center: 1, dist: 1.0 }));
    }

    #[test]
    fn stored_distances_are_exact() {
        let g = crate::gen::erdos_renyi(200, 4.0, 10, 1.0, 21);
        let pads = build_pads(&g, 4);
        for u in 0..g.vertex_count() as VertexId {
            assert!(pads.out_sketch(u).iter().any(|e| e.center == u && e.dist == 0.0));
            for e in pads.out_sketch(u) {
                assert_eq!(e.dist, oracle::exact_dist(&g, u, e.center).unwrap(), "u={u} c={}", e.center);
            }
            for e in pads.in_sketch(u) {
                assert_eq!(e.dist, oracle::exact_dist(&g, e.center, u).unwrap());
            }
        }
    }

    #[test]
    fn kpads_singleton_is_verbatim() {
        let mut b = GraphBuilder::new(3);
        b.add_edge(0, 1, 1.0);
        b.add_edge(1, 2, 1.0);
        b.add_label_str(2, "a");
        let g = b.build();
        let pads = build_pads(&g, 2);
        let kpads = build_kpads(&pads, &g);
        assert_eq!(
            kpads.in_sketch(0),
            pads.in_sketch(2),
            "keyword carried by one vertex merges to its sketch"
        );
        let outs: Vec<SketchEntry> = kpads
            .out_sketch(0)
            .iter()
            .map(|e| SketchEntry { center: e.center, dist: e.dist })
            .collect();
        assert_eq!(outs.as_slice(), pads.out_sketch(2));
    }

    #[test]
    fn kpads_merge_keeps_min_per_center() {
        // Keyword a carried by three vertices whose sketches share center 13.
        let rows = |d: f64| vec![SketchEntry { center: 13, dist: d }];
        let mut out = vec![Vec::new(); 14];
        out[0] = rows(2.0);
        out[7] = rows(3.0);
        out[9] = rows(4.0);
        let pads = PadsIndex::from_parts(1, out.clone(), out);
        let mut b = GraphBuilder::new(14);
        b.add_edge(0, 13, 2.0);
        b.add_edge(7, 13, 3.0);
        b.add_edge(9, 13, 4.0);
        b.add_label_str(0, "a");
        b.add_label_str(7, "a");
        b.add_label_str(9, "a");
        let g = b.build();
        let kpads = build_kpads(&pads, &g);
        let entry = kpads.out_sketch(0).iter().find(|e| e.center == 13).unwrap();
        assert_eq!(entry.dist, 2.0);
        assert_eq!(entry.dist_max, 4.0);
        assert!(entry.complete);
    }

    #[test]
    fn kpads_in_entries_match_multi_source_dijkstra() {
        let g = crate::gen::erdos_renyi(150, 4.0, 8, 1.0, 31);
        let pads = build_pads(&g, 3);
        let kpads = build_kpads(&pads, &g);
        for q in g.present_keywords() {
            for e in kpads.in_sketch(q) {
                let fd = oracle::forward_dists(&g, e.center);
                let best_entry = g
                    .search_origins(q)
                    .iter()
                    .filter_map(|&v| {
                        pads.in_sketch(v)
                            .iter()
                            .find(|se| se.center == e.center)
                            .map(|se| {
                                assert_eq!(se.dist, fd[v as usize]);
                                se.dist
                            })
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(e.dist, best_entry);
            }
        }
    }

    #[test]
    fn bpads_cases() {
        let g = crate::gen::erdos_renyi(80, 4.0, 6, 1.0, 17);
        let pads = build_pads(&g, 3);
        let single = crate::partition::partition_hash(&g, 1, 0).unwrap();
        assert!(build_bpads(&single.fragments[0], &pads, &g).is_empty());

        let frags = crate::partition::partition_hash(&g, 4, 5).unwrap();
        let bp = build_bpads_all(&frags, &pads, &g);
        for frag in &frags.fragments {
            for e in bp.fragment(frag.id) {
                // min over contributing portals' sketch entries
                let min = frag
                    .out_portals
                    .iter()
                    .filter_map(|&p| {
                        pads.out_sketch(p).iter().find(|se| se.center == e.center).map(|se| se.dist)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(e.dist, min);
                // the enriched fields cover *all* portals exactly
                let exacts: Vec<f64> = frag
                    .out_portals
                    .iter()
                    .map(|&p| oracle::exact_dist(&g, p, e.center).unwrap())
                    .collect();
                let inf = g.inf_sentinel();
                assert_eq!(e.complete, exacts.iter().all(|&d| d < inf));
                if e.complete {
                    let max = exacts.iter().copied().fold(0.0, f64::max);
                    assert_eq!(e.dist_max, max);
                    assert!(e.dist >= exacts.iter().copied().fold(inf, f64::min) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn bpads_singleton_portal_equals_its_sketch() {
        let mut b = GraphBuilder::new(3);
        b.add_edge(0, 1, 1.0);
        b.add_edge(1, 2, 1.0);
        let g = b.build();
        let frags = crate::partition::build_fragmentation(&g, 2, vec![0, 0, 1]);
        let pads = build_pads(&g, 2);
        let bp = build_bpads(&frags.fragments[0], &pads, &g);
        let as_plain: Vec<SketchEntry> =
            bp.iter().map(|e| SketchEntry { center: e.center, dist: e.dist }).collect();
        assert_eq!(as_plain.as_slice(), pads.out_sketch(2));
        for e in &bp {
            assert!(e.complete);
            assert_eq!(e.dist, e.dist_max);
        }
    }

    fn fixture_set(pads: PadsIndex, kpads: KpadsIndex) -> SketchSet {
        SketchSet { pads, kpads, bpads: None, inf_sentinel: 1e9, keyword_names: vec!["a".into()] }
    }

    #[test]
    fn est_upper_through_common_center() {
        // out(y1) = {(w1, 1)}, kpads_in(a) = {(w1, 4)} -> 5.
        let pads = PadsIndex::from_parts(
            1,
            vec![vec![SketchEntry { center: 1, dist: 1.0 }]],
            vec![Vec::new()],
        );
        let kpads = KpadsIndex::from_parts(vec![vec![SketchEntry { center: 1, dist: 4.0 }]], vec![Vec::new()]);
        let set = fixture_set(pads, kpads);
        assert_eq!(set.est_upper(0, 0), Some(5.0));
    }

    #[test]
    fn est_upper_self_match_is_zero() {
        let mut b = GraphBuilder::new(2);
        b.add_edge(0, 1, 2.0);
        b.add_label_str(0, "a");
        let g = b.build();
        let set = SketchSet::build(&g, 2, None);
        assert_eq!(set.est_upper(0, 0), Some(0.0));
    }

    #[test]
    fn est_upper_disjoint_centers_is_none() {
        let pads = PadsIndex::from_parts(1, vec![vec![SketchEntry { center: 1, dist: 1.0 }]], vec![Vec::new()]);
        let kpads = KpadsIndex::from_parts(vec![vec![SketchEntry { center: 2, dist: 4.0 }]], vec![Vec::new()]);
        let set = fixture_set(pads, kpads);
        assert_eq!(set.est_upper(0, 0), None);
    }

    #[test]
    fn est_lower_reverse_triangle() {
        // out(y2) = {(w2, 10)}, kpads_out(a) = {(w2, 2)} -> 8.
        let pads = PadsIndex::from_parts(1, vec![vec![SketchEntry { center: 1, dist: 10.0 }]], vec![Vec::new()]);
        let kpads = KpadsIndex::from_parts(
            vec![Vec::new()],
            vec![vec![MergedEntry { center: 1, dist: 2.0, dist_max: 2.0, complete: true }]],
        );
        let set = fixture_set(pads, kpads);
        assert_eq!(set.est_lower(0, 0), 8.0);
    }

    #[test]
    fn est_lower_without_common_center_is_zero() {
        let pads = PadsIndex::from_parts(1, vec![vec![SketchEntry { center: 1, dist: 10.0 }]], vec![Vec::new()]);
        let kpads = KpadsIndex::from_parts(vec![Vec::new()], vec![Vec::new()]);
        let set = fixture_set(pads, kpads);
        assert_eq!(set.est_lower(0, 0), 0.0);
    }

    #[test]
    fn est_dist_identity_and_fixture() {
        let g = crate::gen::erdos_renyi(40, 3.0, 4, 1.0, 3);
        let set = SketchSet::build(&g, 3, None);
        for u in 0..g.vertex_count() as VertexId {
            assert_eq!(set.est_dist(u, u), Some(0.0));
        }
        // common centers 16 and 13: min(1 + 1, 2 + 3) = 2.
        let mut out = vec![Vec::new(); 17];
        let mut inn = vec![Vec::new(); 17];
        out[9] = vec![SketchEntry { center: 13, dist: 2.0 }, SketchEntry { center: 16, dist: 1.0 }];
        inn[7] = vec![SketchEntry { center: 13, dist: 3.0 }, SketchEntry { center: 16, dist: 1.0 }];
        let pads = PadsIndex::from_parts(1, out, inn);
        let set = SketchSet {
            pads,
            kpads: KpadsIndex::from_parts(Vec::new(), Vec::new()),
            bpads: None,
            inf_sentinel: 1e9,
            keyword_names: Vec::new(),
        };
        assert_eq!(set.est_dist(9, 7), Some(2.0));
    }

    #[test]
    fn soundness_sweep_on_random_graph() {
        let g = crate::gen::erdos_renyi(200, 4.0, 10, 1.0, 91);
        let inf = g.inf_sentinel();
        let set = SketchSet::build(&g, 4, None);
        let kw_dists: Vec<Vec<f64>> = g
            .present_keywords()
            .iter()
            .map(|&q| oracle::exact_keyword_dists(&g, q, f64::MAX).unwrap())
            .collect();
        for u in 0..g.vertex_count() as VertexId {
            let fd = oracle::forward_dists(&g, u);
            for v in 0..g.vertex_count() as VertexId {
                if let Some(est) = set.est_dist(u, v) {
                    assert!(fd[v as usize] < inf, "estimate implies reachability");
                    assert!(est >= fd[v as usize] - 1e-12);
                }
            }
            for (qi, &q) in g.present_keywords().iter().enumerate() {
                let exact = kw_dists[qi][u as usize];
                assert!(set.est_lower(u, q) <= exact + 1e-12, "u={u} q={q}");
                if let Some(up) = set.est_upper(u, q) {
                    assert!(up >= exact - 1e-12, "u={u} q={q}");
                }
            }
        }
    }

    #[test]
    fn border_bound_is_sound() {
        let g = crate::gen::erdos_renyi(120, 4.0, 8, 1.0, 55);
        let frags = crate::partition::partition_hash(&g, 3, 9).unwrap();
        let set = SketchSet::build(&g, 4, Some(&frags));
        for frag in &frags.fragments {
            for &u in &frag.vertices {
                let fd = oracle::forward_dists(&g, u);
                let exact_min = frag
                    .out_portals
                    .iter()
                    .map(|&p| fd[p as usize])
                    .fold(f64::INFINITY, f64::min);
                let bound = set.est_lower_to_border(u, frag);
                if frag.out_portals.is_empty() {
                    assert_eq!(bound, set.inf_sentinel);
                } else if exact_min.is_finite() {
                    assert!(bound <= exact_min + 1e-12, "u={u} frag={}", frag.id);
                }
            }
        }
    }

    #[test]
    fn merge_is_idempotent() {
        let g = crate::gen::erdos_renyi(60, 3.0, 6, 1.0, 8);
        let pads = build_pads(&g, 3);
        let k1 = build_kpads(&pads, &g);
        let k2 = build_kpads(&pads, &g);
        assert_eq!(k1, k2);
        let frags = crate::partition::partition_hash(&g, 2, 1).unwrap();
        assert_eq!(build_bpads_all(&frags, &pads, &g), build_bpads_all(&frags, &pads, &g));
    }

    #[test]
    fn save_load_round_trip() {
        let g = crate::gen::erdos_renyi(40, 3.0, 5, 1.0, 19);
        let frags = crate::partition::partition_hash(&g, 2, 3).unwrap();
        let set = SketchSet::build(&g, 2, Some(&frags));
        let mut buf = Vec::new();
        save_sketches(&set, &mut buf).unwrap();
        let loaded = load_sketches(std::io::Cursor::new(&buf)).unwrap();
        // pagerank is construction-time state and is not persisted
        let mut expect = set.clone();
        expect.pads.pagerank = vec![0.0; g.vertex_count()];
        assert_eq!(expect, loaded);
        let mut buf2 = Vec::new();
        save_sketches(&loaded, &mut buf2).unwrap();
        assert_eq!(buf, buf2, "rebuild is byte-identical");
    }

    #[test]
    fn stretch_factor_guard() {
        assert_eq!(stretch_factor(100, 1), None);
        let f = stretch_factor(100, 4).unwrap();
        assert_eq!(f, 2.0 * ((100f64).ln() / (4f64).ln()).ceil() - 1.0);
    }
}
