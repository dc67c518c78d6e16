//! MILP bipartite-graph laboratory: instance model, color refinement and
//! foldability analysis, canonical ordering, an exact branch-and-bound
//! labeling oracle, dataset generators, and a from-scratch message-passing
//! GNN with hand-written gradients.

pub mod canon;
pub mod experiment;
pub mod gen;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod milp;
pub mod nn;
pub mod oracle;
pub mod samples;
pub mod simplex;
pub mod train;
pub mod wl;

pub use graph::{encode_graph, MilpGraph};
pub use milp::{MilpInstance, Permutation, Sense};
pub use oracle::{solve_milp, OracleLabel};
