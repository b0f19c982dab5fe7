//! Seeded synthetic graphs and query workloads.
//!
//! Edge weights are drawn from small integers so that scores stay exactly
//! representable and summation order cannot perturb comparisons against the
//! brute-force reference.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, GraphBuilder, KeywordId, VertexId};

fn assign_labels(b: &mut GraphBuilder, n: usize, keywords: usize, zipf_s: f64, rng: &mut ChaCha8Rng) {
    // Zipf over keyword ranks: popular keywords carry most vertices.
    let weights: Vec<f64> = (0..keywords).map(|i| 1.0 / ((i + 1) as f64).powf(zipf_s)).collect();
    let total: f64 = weights.iter().sum();
    let pick = |rng: &mut ChaCha8Rng| -> usize {
        let mut x = rng.gen_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        keywords - 1
    };
    for kw in 0..keywords {
        // Intern in rank order so keyword ids are stable across graphs.
        b.intern_keyword(&format!("kw{kw}"));
    }
    // 2..=4 draws per vertex, around the keyword densities of real datasets
    for v in 0..n as VertexId {
        let count = rng.gen_range(2..=4);
        for _ in 0..count {
            let kw = pick(rng);
            b.add_label_str(v, &format!("kw{kw}"));
        }
    }
}

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(1..=3) as f64
}

/// Directed G(n, p) with p chosen for the given average out-degree.
pub fn erdos_renyi(n: usize, avg_out_degree: f64, keywords: usize, zipf_s: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new(n);
    assign_labels(&mut b, n, keywords, zipf_s, &mut rng);
    let edges = (n as f64 * avg_out_degree).round() as usize;
    let mut added = 0;
    while added < edges {
        let u = rng.gen_range(0..n as VertexId);
        let v = rng.gen_range(0..n as VertexId);
        if u == v {
            continue;
        }
        let w = weight(&mut rng);
        b.add_edge(u, v, w);
        added += 1;
    }
    b.build()
}

/// Directed preferential attachment: each new vertex points at `m` targets
/// sampled proportionally to degree-so-far.
pub fn pref_attach(n: usize, edges_per_vertex: usize, keywords: usize, zipf_s: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new(n);
    assign_labels(&mut b, n, keywords, zipf_s, &mut rng);
    // endpoint pool: every edge endpoint appears once, plus one ticket per
    // vertex so isolated vertices stay reachable as targets.
    let mut pool: Vec<VertexId> = vec![0];
    for v in 1..n as VertexId {
        for _ in 0..edges_per_vertex {
            let t = *pool.choose(&mut rng).expect("nonempty pool");
            let t = if t == v { (t + 1) % v.max(1) } else { t };
            if t == v {
                continue;
            }
            b.add_edge(v, t, weight(&mut rng));
            pool.push(t);
        }
        pool.push(v);
    }
    // A sprinkle of forward edges so early vertices are not pure sinks.
    for _ in 0..n / 2 {
        let u = rng.gen_range(0..n as VertexId);
        let v = rng.gen_range(0..n as VertexId);
        if u != v {
            b.add_edge(u, v, weight(&mut rng));
        }
    }
    b.build()
}

/// Sample `count` queries of `size` distinct keywords each, uniform over the
/// keywords present in the graph, without replacement within a query.
pub fn sample_queries(g: &Graph, size: usize, count: usize, seed: u64) -> Vec<Vec<KeywordId>> {
    let present = g.present_keywords();
    assert!(
        present.len() >= size,
        "graph has {} distinct keywords, need {}",
        present.len(),
        size
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut pool = present.clone();
            pool.shuffle(&mut rng);
            pool.truncate(size);
            pool
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_is_deterministic_per_seed() {
        let a = erdos_renyi(100, 4.0, 20, 1.0, 9);
        let b = erdos_renyi(100, 4.0, 20, 1.0, 9);
        assert_eq!(a.edge_count(), b.edge_count());
        assert_eq!(a.total_weight(), b.total_weight());
        let c = erdos_renyi(100, 4.0, 20, 1.0, 10);
        assert!(a.total_weight() != c.total_weight() || a.edge_count() != c.edge_count());
    }

    #[test]
    fn queries_are_distinct_keywords() {
        let g = erdos_renyi(200, 4.0, 20, 1.0, 3);
        for q in sample_queries(&g, 4, 25, 1) {
            let mut s = q.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 4);
            for kw in q {
                assert!(!g.search_origins(kw).is_empty());
            }
        }
    }

    #[test]
    fn pref_attach_builds_connected_ish_graph() {
        let g = pref_attach(300, 2, 20, 1.0, 4);
        assert!(g.edge_count() >= 300);
        assert!(g.present_keywords().len() >= 10);
    }
}
