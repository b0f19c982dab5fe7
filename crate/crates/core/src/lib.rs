//! Distributed top-k keyword search on labeled, weighted, directed graphs.
//!
//! A query `(Q, tau, k)` asks for the k best-scoring roots `u` such that for
//! every keyword `q` in `Q` some vertex carrying `q` is reachable from `u`
//! within distance `tau`; the score of a root is the sum of its per-keyword
//! shortest distances (smaller is better). The engine splits the search into
//! a backward phase (reverse Dijkstra from keyword carriers toward candidate
//! roots) and a forward phase (Dijkstra from partial roots toward missing
//! keywords), runs one worker per graph fragment under a superstep runtime,
//! and exchanges score bounds asynchronously between the workers and a
//! coordinator. Sketch indexes provide sound distance bounds for pruning.

pub mod gen;
pub mod graph;
pub mod kernel;
pub mod optimize;
pub mod oracle;
pub mod partition;
pub mod report;
pub mod runtime;
pub mod sketch;

pub use graph::{load_graph, Graph, GraphError, KeywordId, Query, VertexId};
pub use kernel::AnswerHeap;
pub use partition::{import_partition, partition_hash, Fragment, FragmentId, Fragmentation};
pub use runtime::{run_query, Answer, Metrics, RunConfig, RuntimeError, SelectorMode, Variant};
pub use sketch::{build_kpads, build_pads, pagerank, SketchSet};
