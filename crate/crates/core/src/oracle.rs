//! Brute-force reference answers, kept independent of the search kernel.
//!
//! Everything here is a plain binary-heap Dijkstra over the whole graph; no
//! state is shared with the fragment-based engine.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::graph::{Graph, KeywordId, Query, VertexId};

const MAX_ORACLE_VERTICES: usize = 5000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle capped at {MAX_ORACLE_VERTICES} vertices, graph has {0}")]
    TooLarge(usize),
}

#[derive(PartialEq)]
struct HeapItem(f64, VertexId);

impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn check(g: &Graph) -> Result<(), OracleError> {
    if g.vertex_count() > MAX_ORACLE_VERTICES {
        return Err(OracleError::TooLarge(g.vertex_count()));
    }
    Ok(())
}

/// Shortest distance from every vertex to the nearest carrier of `q`,
/// truncated at `tau` (inclusive). Unreached vertices hold the sentinel.
pub fn exact_keyword_dists(g: &Graph, q: KeywordId, tau: f64) -> Result<Vec<f64>, OracleError> {
    check(g)?;
    let inf = g.inf_sentinel();
    let mut dist = vec![inf; g.vertex_count()];
    let mut heap = BinaryHeap::new();
    for &v in g.search_origins(q) {
        dist[v as usize] = 0.0;
        heap.push(Reverse(HeapItem(0.0, v)));
    }
    while let Some(Reverse(HeapItem(d, v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for &(u, w) in g.inn(v) {
            let nd = d + w;
            if nd <= tau && nd < dist[u as usize] {
                dist[u as usize] = nd;
                heap.push(Reverse(HeapItem(nd, u)));
            }
        }
    }
    Ok(dist)
}

/// Ground-truth top-k: k smallest complete-match scores, distinct roots,
/// ascending `(score, root)`.
pub fn brute_top_k(g: &Graph, query: &Query) -> Result<Vec<(VertexId, f64)>, OracleError> {
    check(g)?;
    let inf = g.inf_sentinel();
    let per_kw: Vec<Vec<f64>> = query
        .keywords
        .iter()
        .map(|&q| exact_keyword_dists(g, q, query.tau))
        .collect::<Result<_, _>>()?;
    let mut scored: Vec<(VertexId, f64)> = Vec::new();
    'outer: for v in 0..g.vertex_count() {
        let mut score = 0.0;
        for dists in &per_kw {
            let d = dists[v];
            if d >= inf {
                continue 'outer;
            }
            score += d;
        }
        scored.push((v as VertexId, score));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(query.k);
    Ok(scored)
}

/// Exact point-to-point distance, sentinel when unreachable.
pub fn exact_dist(g: &Graph, u: VertexId, v: VertexId) -> Result<f64, OracleError> {
    check(g)?;
    Ok(forward_dists(g, u)[v as usize])
}

/// Distances from `u` to every vertex over forward edges.
pub fn forward_dists(g: &Graph, u: VertexId) -> Vec<f64> {
    let inf = g.inf_sentinel();
    let mut dist = vec![inf; g.vertex_count()];
    let mut heap = BinaryHeap::new();
    dist[u as usize] = 0.0;
    heap.push(Reverse(HeapItem(0.0, u)));
    while let Some(Reverse(HeapItem(d, v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for &(t, w) in g.out(v) {
            let nd = d + w;
            if nd < dist[t as usize] {
                dist[t as usize] = nd;
                heap.push(Reverse(HeapItem(nd, t)));
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn diamond() -> Graph {
        // 0 -> 1 -> 3, 0 -> 2 -> 3 with asymmetric weights; keyword a on 3.
        let mut b = GraphBuilder::new(4);
        b.add_edge(0, 1, 1.0);
        b.add_edge(1, 3, 1.0);
        b.add_edge(0, 2, 3.0);
        b.add_edge(2, 3, 3.0);
        b.add_label_str(3, "a");
        b.build()
    }

    #[test]
    fn labeled_vertex_at_zero() {
        let g = diamond();
        let d = exact_keyword_dists(&g, 0, 10.0).unwrap();
        assert_eq!(d[3], 0.0);
        assert_eq!(d[0], 2.0);
    }

    #[test]
    fn tau_zero_truncates_to_carriers() {
        let g = diamond();
        let d = exact_keyword_dists(&g, 0, 0.0).unwrap();
        assert_eq!(d[3], 0.0);
        assert_eq!(d[0], g.inf_sentinel());
        assert_eq!(d[1], g.inf_sentinel());
    }

    #[test]
    fn keyword_dists_agree_with_per_vertex_forward_dijkstra() {
        let g = crate::gen::erdos_renyi(100, 4.0, 8, 1.0, 77);
        for q in g.present_keywords() {
            let multi = exact_keyword_dists(&g, q, 50.0).unwrap();
            for u in 0..g.vertex_count() as VertexId {
                let fd = forward_dists(&g, u);
                let best = g
                    .search_origins(q)
                    .iter()
                    .map(|&v| fd[v as usize])
                    .fold(g.inf_sentinel(), f64::min);
                let best = if best <= 50.0 { best } else { g.inf_sentinel() };
                assert_eq!(multi[u as usize], best, "u={u} q={q}");
            }
        }
    }

    #[test]
    fn no_complete_match_is_empty() {
        let mut b = GraphBuilder::new(3);
        b.add_edge(0, 1, 1.0);
        b.add_label_str(1, "a");
        b.add_label_str(2, "b");
        let g = b.build();
        let q = Query::new(vec![0, 1], 5.0, 2).unwrap();
        assert!(brute_top_k(&g, &q).unwrap().is_empty());
    }

    #[test]
    fn oversized_k_returns_all() {
        let g = diamond();
        let q = Query::new(vec![0], 10.0, 50).unwrap();
        let top = brute_top_k(&g, &q).unwrap();
        assert_eq!(top.len(), 4);
        assert_eq!(top[0], (3, 0.0));
    }

    #[test]
    fn exact_dist_basics() {
        let g = diamond();
        assert_eq!(exact_dist(&g, 2, 2).unwrap(), 0.0);
        assert_eq!(exact_dist(&g, 0, 3).unwrap(), 2.0);
        assert_eq!(exact_dist(&g, 3, 0).unwrap(), g.inf_sentinel());
    }

    #[test]
    fn triangle_inequality_sweep() {
        let g = crate::gen::erdos_renyi(60, 3.0, 6, 1.0, 5);
        let inf = g.inf_sentinel();
        let all: Vec<Vec<f64>> =
            (0..g.vertex_count() as VertexId).map(|u| forward_dists(&g, u)).collect();
        for a in 0..g.vertex_count() {
            for b in 0..g.vertex_count() {
                for c in 0..g.vertex_count() {
                    let (ab, bc, ac) = (all[a][b], all[b][c], all[a][c]);
                    if ab < inf && bc < inf {
                        assert!(ac <= ab + bc + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn size_guard() {
        let b = GraphBuilder::new(6000);
        let g = b.build();
        assert!(matches!(exact_dist(&g, 0, 1), Err(OracleError::TooLarge(_))));
    }
}
