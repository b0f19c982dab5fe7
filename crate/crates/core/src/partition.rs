//! Edge-cut fragmentation with portal bookkeeping.
//!
//! Every edge is stored once, at the fragment owning its source. A remote
//! edge target becomes an out-portal of the source fragment and an in-portal
//! of its owner; backward search reaches out-portal copies through the
//! source fragment's reverse adjacency.

use std::collections::BTreeMap;
use std::io::BufRead;

use thiserror::Error;

use crate::graph::{Graph, VertexId};

pub type FragmentId = usize;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("fragment count must be >= 1")]
    ZeroFragments,
    #[error("partition file line {line}: expected one integer, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("partition file line {line}: part {part} out of range [0, {m})")]
    PartOutOfRange { line: usize, part: usize, m: usize },
    #[error("partition file has {got} assignments, graph has {expected} vertices")]
    WrongLineCount { got: usize, expected: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A worker-local subgraph. `out_adj`/`in_adj` cover exactly the edges whose
/// source is owned here; reverse entries exist for out-portal targets too.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub id: FragmentId,
    /// Owned vertices, sorted.
    pub vertices: Vec<VertexId>,
    pub out_adj: BTreeMap<VertexId, Vec<(VertexId, f64)>>,
    pub in_adj: BTreeMap<VertexId, Vec<(VertexId, f64)>>,
    /// Owned vertices with at least one incoming cross edge.
    pub in_portals: Vec<VertexId>,
    /// Remote vertices reachable by one local outgoing edge.
    pub out_portals: Vec<VertexId>,
    /// For each in-portal: the fragments holding it as an out-portal.
    pub in_portal_watchers: BTreeMap<VertexId, Vec<FragmentId>>,
    /// For each out-portal: the fragment that owns it.
    pub out_portal_owners: BTreeMap<VertexId, FragmentId>,
}

impl Fragment {
    pub fn owns(&self, v: VertexId) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn is_out_portal(&self, v: VertexId) -> bool {
        self.out_portals.binary_search(&v).is_ok()
    }

    pub fn is_in_portal(&self, v: VertexId) -> bool {
        self.in_portals.binary_search(&v).is_ok()
    }

    /// Owned vertices plus out-portal copies, sorted. This is the state
    /// domain of a worker.
    pub fn state_vertices(&self) -> Vec<VertexId> {
        let mut all = self.vertices.clone();
        all.extend_from_slice(&self.out_portals);
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn local_edge_count(&self) -> usize {
        self.out_adj.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Fragmentation {
    pub m: usize,
    /// owner[v] is the fragment id of v, in [0, m).
    pub owner: Vec<FragmentId>,
    pub fragments: Vec<Fragment>,
}

impl Fragmentation {
    pub fn owner_of(&self, v: VertexId) -> FragmentId {
        self.owner[v as usize]
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic hash partition: `owner(v) = hash(v, seed) mod m`.
pub fn partition_hash(g: &Graph, m: usize, seed: u64) -> Result<Fragmentation, PartitionError> {
    if m == 0 {
        return Err(PartitionError::ZeroFragments);
    }
    let owner: Vec<FragmentId> = (0..g.vertex_count() as VertexId)
        .map(|v| (splitmix64(v ^ seed) % m as u64) as FragmentId)
        .collect();
    Ok(build_fragmentation(g, m, owner))
}

/// Import a METIS-style assignment: line i holds the owner of vertex i.
pub fn import_partition(
    g: &Graph,
    source: impl BufRead,
    m: usize,
) -> Result<Fragmentation, PartitionError> {
    if m == 0 {
        return Err(PartitionError::ZeroFragments);
    }
    let mut owner = Vec::with_capacity(g.vertex_count());
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let part: usize = text
            .parse()
            .map_err(|_| PartitionError::Malformed { line: i + 1, text: text.to_string() })?;
        if part >= m {
            return Err(PartitionError::PartOutOfRange { line: i + 1, part, m });
        }
        owner.push(part);
    }
    if owner.len() != g.vertex_count() {
        return Err(PartitionError::WrongLineCount { got: owner.len(), expected: g.vertex_count() });
    }
    Ok(build_fragmentation(g, m, owner))
}

pub fn build_fragmentation(g: &Graph, m: usize, owner: Vec<FragmentId>) -> Fragmentation {
    let mut fragments: Vec<Fragment> = (0..m)
        .map(|id| Fragment {
            id,
            vertices: Vec::new(),
            out_adj: BTreeMap::new(),
            in_adj: BTreeMap::new(),
            in_portals: Vec::new(),
            out_portals: Vec::new(),
            in_portal_watchers: BTreeMap::new(),
            out_portal_owners: BTreeMap::new(),
        })
        .collect();
    for v in 0..g.vertex_count() as VertexId {
        fragments[owner[v as usize]].vertices.push(v);
    }
    // Watchers are collected as sets first to dedup parallel cross edges.
    let mut watchers: Vec<BTreeMap<VertexId, Vec<FragmentId>>> = vec![BTreeMap::new(); m];
    for u in 0..g.vertex_count() as VertexId {
        let fu = owner[u as usize];
        for &(v, w) in g.out(u) {
            let frag = &mut fragments[fu];
            frag.out_adj.entry(u).or_default().push((v, w));
            frag.in_adj.entry(v).or_default().push((u, w));
            let fv = owner[v as usize];
            if fv != fu {
                frag.out_portals.push(v);
                watchers[fv].entry(v).or_default().push(fu);
            }
        }
    }
    for (id, frag) in fragments.iter_mut().enumerate() {
        frag.out_portals.sort_unstable();
        frag.out_portals.dedup();
        for &p in &frag.out_portals {
            frag.out_portal_owners.insert(p, owner[p as usize]);
        }
        for (v, mut who) in std::mem::take(&mut watchers[id]) {
            who.sort_unstable();
            who.dedup();
            frag.in_portals.push(v);
            frag.in_portal_watchers.insert(v, who);
        }
        frag.in_portals.sort_unstable();
    }
    Fragmentation { m, owner, fragments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use std::io::Cursor;

    fn path3() -> Graph {
        let mut b = GraphBuilder::new(3);
        b.add_edge(0, 1, 1.0);
        b.add_edge(1, 2, 1.0);
        b.build()
    }

    #[test]
    fn single_fragment_has_no_portals() {
        let g = crate::gen::erdos_renyi(50, 3.0, 5, 1.0, 2);
        let f = partition_hash(&g, 1, 0).unwrap();
        assert!(f.fragments[0].in_portals.is_empty());
        assert!(f.fragments[0].out_portals.is_empty());
        assert_eq!(f.fragments[0].local_edge_count(), g.edge_count());
    }

    #[test]
    fn path_cut_produces_one_portal_pair() {
        let g = path3();
        let f = build_fragmentation(&g, 2, vec![0, 0, 1]);
        assert_eq!(f.fragments[0].out_portals, vec![2]);
        assert_eq!(f.fragments[1].in_portals, vec![2]);
        assert_eq!(f.fragments[1].in_portal_watchers[&2], vec![0]);
        assert!(f.fragments[0].in_portals.is_empty());
    }

    #[test]
    fn edges_conserved_across_fragments() {
        let g = crate::gen::erdos_renyi(100, 4.0, 10, 1.0, 7);
        let f = partition_hash(&g, 4, 42).unwrap();
        let total: usize = f.fragments.iter().map(Fragment::local_edge_count).sum();
        assert_eq!(total, g.edge_count());
        for frag in &f.fragments {
            for &p in &frag.in_portals {
                assert!(frag.owns(p), "in-portals are local");
            }
            for &p in &frag.out_portals {
                assert!(!frag.owns(p), "out-portals are remote");
                assert!(f.fragments[f.owner_of(p)].is_in_portal(p));
            }
        }
    }

    #[test]
    fn import_direct_mapping() {
        let g = path3();
        let f = import_partition(&g, Cursor::new("0\n0\n1\n"), 2).unwrap();
        assert_eq!(f.owner, vec![0, 0, 1]);
    }

    #[test]
    fn import_all_zeros_leaves_other_fragments_empty() {
        let g = path3();
        let f = import_partition(&g, Cursor::new("0\n0\n0\n"), 3).unwrap();
        assert_eq!(f.fragments[0].vertices.len(), 3);
        assert!(f.fragments[1].vertices.is_empty());
        assert!(f.fragments[2].vertices.is_empty());
        assert!(f.fragments[0].out_portals.is_empty());
    }

    #[test]
    fn import_errors() {
        let g = path3();
        assert!(matches!(
            import_partition(&g, Cursor::new("0\n0\n"), 2),
            Err(PartitionError::WrongLineCount { .. })
        ));
        assert!(matches!(
            import_partition(&g, Cursor::new("0\n0\n5\n"), 2),
            Err(PartitionError::PartOutOfRange { .. })
        ));
        assert!(matches!(
            import_partition(&g, Cursor::new("0\nx\n1\n"), 2),
            Err(PartitionError::Malformed { .. })
        ));
        assert!(matches!(partition_hash(&g, 0, 0), Err(PartitionError::ZeroFragments)));
    }
}
