//! Graph loading and the keyword inverted index.

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

pub type VertexId = u64;
pub type KeywordId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed edge `{text}`")]
    MalformedEdge { line: usize, text: String },
    #[error("line {line}: malformed label line `{text}`")]
    MalformedLabel { line: usize, text: String },
    #[error("line {line}: edge weight must be positive, got {weight}")]
    NonPositiveWeight { line: usize, weight: f64 },
    #[error("line {line}: self-loop on vertex {vertex}")]
    SelfLoop { line: usize, vertex: VertexId },
    #[error("line {line}: vertex {vertex} beyond declared count {declared}")]
    VertexOutOfRange { line: usize, vertex: VertexId, declared: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

/// Immutable labeled weighted digraph with both adjacency directions and a
/// keyword -> vertices inverted index. Vertex ids are dense in `[0, n)`.
#[derive(Debug, Clone)]
pub struct Graph {
    out_adj: Vec<Vec<(VertexId, f64)>>,
    in_adj: Vec<Vec<(VertexId, f64)>>,
    labels: Vec<Vec<KeywordId>>,
    keyword_index: Vec<Vec<VertexId>>,
    keyword_names: Vec<String>,
    keyword_ids: HashMap<String, KeywordId>,
    total_weight: f64,
    edge_count: usize,
}

impl Graph {
    pub fn vertex_count(&self) -> usize {
        self.out_adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn keyword_count(&self) -> usize {
        self.keyword_names.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Finite encoding of "unreached": strictly larger than any single
    /// path length in the graph.
    pub fn inf_sentinel(&self) -> f64 {
        self.total_weight + 1.0
    }

    pub fn out(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.out_adj[v as usize]
    }

    pub fn inn(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.in_adj[v as usize]
    }

    pub fn labels(&self, v: VertexId) -> &[KeywordId] {
        &self.labels[v as usize]
    }

    pub fn has_label(&self, v: VertexId, q: KeywordId) -> bool {
        self.labels[v as usize].binary_search(&q).is_ok()
    }

    /// The search origins `O_q`: sorted, duplicate-free. Empty for unknown
    /// keywords.
    pub fn search_origins(&self, q: KeywordId) -> &[VertexId] {
        self.keyword_index
            .get(q as usize)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn keyword_id(&self, name: &str) -> Option<KeywordId> {
        self.keyword_ids.get(name).copied()
    }

    pub fn keyword_name(&self, q: KeywordId) -> &str {
        &self.keyword_names[q as usize]
    }

    pub fn keyword_names(&self) -> &[String] {
        &self.keyword_names
    }

    /// Keywords with a nonempty origin set, ascending.
    pub fn present_keywords(&self) -> Vec<KeywordId> {
        (0..self.keyword_index.len() as KeywordId)
            .filter(|&q| !self.keyword_index[q as usize].is_empty())
            .collect()
    }
}

/// Incremental construction; used by the file loader, generators and tests.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    n: usize,
    edges: Vec<(VertexId, VertexId, f64)>,
    labels: Vec<(VertexId, KeywordId)>,
    keyword_names: Vec<String>,
    keyword_ids: HashMap<String, KeywordId>,
}

impl GraphBuilder {
    pub fn new(n: usize) -> Self {
        GraphBuilder { n, ..Default::default() }
    }

    pub fn intern_keyword(&mut self, name: &str) -> KeywordId {
        if let Some(&id) = self.keyword_ids.get(name) {
            return id;
        }
        let id = self.keyword_names.len() as KeywordId;
        self.keyword_names.push(name.to_string());
        self.keyword_ids.insert(name.to_string(), id);
        id
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId, w: f64) {
        self.n = self.n.max(u as usize + 1).max(v as usize + 1);
        self.edges.push((u, v, w));
    }

    pub fn add_label(&mut self, v: VertexId, q: KeywordId) {
        self.n = self.n.max(v as usize + 1);
        self.labels.push((v, q));
    }

    pub fn add_label_str(&mut self, v: VertexId, name: &str) {
        let q = self.intern_keyword(name);
        self.add_label(v, q);
    }

    pub fn build(self) -> Graph {
        let n = self.n;
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut total = 0.0;
        for &(u, v, w) in &self.edges {
            out_adj[u as usize].push((v, w));
            in_adj[v as usize].push((u, w));
            total += w;
        }
        let mut labels = vec![Vec::new(); n];
        for &(v, q) in &self.labels {
            labels[v as usize].push(q);
        }
        let mut keyword_index = vec![Vec::new(); self.keyword_names.len()];
        for (v, ls) in labels.iter_mut().enumerate() {
            ls.sort_unstable();
            ls.dedup();
            for &q in ls.iter() {
                keyword_index[q as usize].push(v as VertexId);
            }
        }
        for idx in keyword_index.iter_mut() {
            idx.sort_unstable();
            idx.dedup();
        }
        Graph {
            out_adj,
            in_adj,
            labels,
            keyword_index,
            keyword_names: self.keyword_names,
            keyword_ids: self.keyword_ids,
            total_weight: total,
            edge_count: self.edges.len(),
        }
    }
}

/// Parse `u v w` edge lines and `u kw1 kw2 ...` label lines. `#` starts a
/// comment line in either file. When `declared_n` is absent the vertex count
/// is `max id + 1`.
pub fn load_graph(
    edge_source: impl BufRead,
    label_source: impl BufRead,
    declared_n: Option<usize>,
) -> Result<Graph, GraphError> {
    let mut builder = GraphBuilder::new(declared_n.unwrap_or(0));
    for (i, line) in edge_source.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut it = text.split_whitespace();
        let (u, v, w) = match (it.next(), it.next(), it.next()) {
            (Some(u), Some(v), Some(w)) => {
                let u: VertexId = u.parse().map_err(|_| GraphError::MalformedEdge {
                    line: i + 1,
                    text: text.to_string(),
                })?;
                let v: VertexId = v.parse().map_err(|_| GraphError::MalformedEdge {
                    line: i + 1,
                    text: text.to_string(),
                })?;
                let w: f64 = w.parse().map_err(|_| GraphError::MalformedEdge {
                    line: i + 1,
                    text: text.to_string(),
                })?;
                (u, v, w)
            }
            _ => {
                return Err(GraphError::MalformedEdge { line: i + 1, text: text.to_string() })
            }
        };
        if !(w > 0.0) || !w.is_finite() {
            return Err(GraphError::NonPositiveWeight { line: i + 1, weight: w });
        }
        if u == v {
            return Err(GraphError::SelfLoop { line: i + 1, vertex: u });
        }
        if let Some(n) = declared_n {
            for x in [u, v] {
                if x as usize >= n {
                    return Err(GraphError::VertexOutOfRange { line: i + 1, vertex: x, declared: n });
                }
            }
        }
        builder.add_edge(u, v, w);
    }
    let declared = declared_n.unwrap_or(builder.n);
    for (i, line) in label_source.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut it = text.split_whitespace();
        let v: VertexId = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| GraphError::MalformedLabel { line: i + 1, text: text.to_string() })?;
        if v as usize >= declared {
            return Err(GraphError::VertexOutOfRange { line: i + 1, vertex: v, declared });
        }
        for kw in it {
            builder.add_label_str(v, kw);
        }
    }
    if let Some(n) = declared_n {
        builder.n = builder.n.max(n);
    }
    Ok(builder.build())
}

/// A top-k keyword query `(Q, tau, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub keywords: Vec<KeywordId>,
    pub tau: f64,
    pub k: usize,
}

impl Query {
    pub fn new(keywords: Vec<KeywordId>, tau: f64, k: usize) -> Result<Self, GraphError> {
        if keywords.is_empty() {
            return Err(GraphError::InvalidQuery("no keywords".into()));
        }
        let mut seen = keywords.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != keywords.len() {
            return Err(GraphError::InvalidQuery("duplicate keywords".into()));
        }
        if k == 0 {
            return Err(GraphError::InvalidQuery("k must be >= 1".into()));
        }
        if !(tau >= 0.0) {
            return Err(GraphError::InvalidQuery("tau must be non-negative".into()));
        }
        Ok(Query { keywords, tau, k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn load(edges: &str, labels: &str) -> Result<Graph, GraphError> {
        load_graph(Cursor::new(edges), Cursor::new(labels), None)
    }

    #[test]
    fn transpose_by_construction() {
        let g = load("0 1 9\n1 2 1\n0 2 3\n", "2 a\n").unwrap();
        let mut inn: Vec<_> = g.inn(2).to_vec();
        inn.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(inn, vec![(0, 3.0), (1, 1.0)]);
        let a = g.keyword_id("a").unwrap();
        assert_eq!(g.search_origins(a), &[2]);
        assert_eq!(g.total_weight(), 13.0);
        assert_eq!(g.inf_sentinel(), 14.0);
    }

    #[test]
    fn empty_label_file_gives_empty_index() {
        let g = load("0 1 1\n", "").unwrap();
        assert_eq!(g.keyword_count(), 0);
        assert!(g.search_origins(0).is_empty());
    }

    #[test]
    fn fig2_style_fragment() {
        // v1..v7 with w(v1,v2) = 9 and keyword a on v4 (0-based ids shifted by one).
        let g = load("0 1 9\n1 2 1\n2 3 2\n3 4 1\n4 5 1\n5 6 2\n", "3 a\n4 b\n").unwrap();
        let a = g.keyword_id("a").unwrap();
        assert!(g.search_origins(a).contains(&3));
        assert_eq!(g.out(0)[0], (1, 9.0));
    }

    #[test]
    fn loader_errors() {
        assert!(matches!(load("0 1 0\n", ""), Err(GraphError::NonPositiveWeight { .. })));
        assert!(matches!(load("0 0 1\n", ""), Err(GraphError::SelfLoop { .. })));
        assert!(matches!(load("0 1\n", ""), Err(GraphError::MalformedEdge { line: 1, .. })));
        assert!(matches!(
            load_graph(Cursor::new("0 1 1\n"), Cursor::new("5 a\n"), Some(2)),
            Err(GraphError::VertexOutOfRange { .. })
        ));
    }

    #[test]
    fn parallel_edges_allowed() {
        let g = load("0 1 1\n0 1 2\n", "").unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.inn(1).len(), 2);
    }

    #[test]
    fn query_validation() {
        assert!(Query::new(vec![], 1.0, 1).is_err());
        assert!(Query::new(vec![0, 0], 1.0, 1).is_err());
        assert!(Query::new(vec![0], 1.0, 0).is_err());
        assert!(Query::new(vec![0], -1.0, 1).is_err());
        assert!(Query::new(vec![0, 1], 0.0, 1).is_ok());
    }

    #[test]
    fn origins_match_brute_force_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut b = GraphBuilder::new(10_000);
        for v in 0..10_000u64 {
            if rng.gen_bool(0.3) {
                let q = rng.gen_range(0..20);
                b.add_label_str(v, &format!("kw{q}"));
            }
        }
        b.add_edge(0, 1, 1.0);
        let g = b.build();
        for q in 0..g.keyword_count() as KeywordId {
            let scan: Vec<VertexId> =
                (0..g.vertex_count() as VertexId).filter(|&v| g.has_label(v, q)).collect();
            assert_eq!(g.search_origins(q), scan.as_slice());
        }
    }
}
