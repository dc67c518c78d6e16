//! The MILP-induced weighted bipartite graph: constraint vertices on one side,
//! variable vertices on the other, edge weights taken from the coefficient matrix.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::milp::{Lower, MilpError, MilpInstance, Permutation, Sense, Upper};

/// Feature of a constraint vertex: (b_i, sense_i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintFeature {
    pub b: f64,
    pub sense: Sense,
}

/// Feature of a variable vertex: (c_j, l_j, u_j, tau_j).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableFeature {
    pub c: f64,
    pub lower: Lower,
    pub upper: Upper,
    /// 1 iff the variable is integer-constrained.
    pub integer: bool,
}

/// Per-vertex random feature vectors, each entry in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatures {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("permutation dimensions ({m},{n}) do not match graph ({gm},{gn})")]
    DimensionMismatch { m: usize, n: usize, gm: usize, gn: usize },
    #[error("random feature lengths ({m},{n}) do not match graph ({gm},{gn})")]
    RandomFeatureLength { m: usize, n: usize, gm: usize, gn: usize },
    #[error("random feature entry {value} outside [0,1]")]
    RandomFeatureRange { value: f64 },
}

/// Weighted bipartite graph with vertex features and an optional random feature.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpGraph {
    m: usize,
    n: usize,
    edges: BTreeMap<(usize, usize), f64>,
    v_features: Vec<ConstraintFeature>,
    w_features: Vec<VariableFeature>,
    random_features: Option<RandomFeatures>,
}

impl MilpGraph {
    pub fn num_constraints(&self) -> usize {
        self.m
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    /// Edges in deterministic row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn v_features(&self) -> &[ConstraintFeature] {
        &self.v_features
    }

    pub fn w_features(&self) -> &[VariableFeature] {
        &self.w_features
    }

    pub fn random_features(&self) -> Option<&RandomFeatures> {
        self.random_features.as_ref()
    }

    /// Copy of the graph with per-vertex random features attached.
    pub fn with_random_features(&self, omega: RandomFeatures) -> Result<MilpGraph, GraphError> {
        if omega.v.len() != self.m || omega.w.len() != self.n {
            return Err(GraphError::RandomFeatureLength {
                m: omega.v.len(),
                n: omega.w.len(),
                gm: self.m,
                gn: self.n,
            });
        }
        for &x in omega.v.iter().chain(omega.w.iter()) {
            if !(0.0..=1.0).contains(&x) {
                return Err(GraphError::RandomFeatureRange { value: x });
            }
        }
        let mut g = self.clone();
        g.random_features = Some(omega);
        Ok(g)
    }
}

/// True iff the random vector has a repeated entry on either side, i.e. lies in
/// the measure-zero set where symmetry breaking fails.
pub fn omega_in_fold_set(omega: &RandomFeatures) -> bool {
    let repeated = |xs: &[f64]| {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).any(|p| p[0] == p[1])
    };
    repeated(&omega.v) || repeated(&omega.w)
}

/// Encode an instance as its MILP-graph. Edge weights are the nonzero
/// coefficients; vertex features copy (b, sense) and (c, l, u, tau).
pub fn encode_graph(inst: &MilpInstance) -> MilpGraph {
    let v_features = inst
        .rhs()
        .iter()
        .zip(inst.senses())
        .map(|(&b, &sense)| ConstraintFeature { b, sense })
        .collect();
    let w_features = (0..inst.num_variables())
        .map(|j| VariableFeature {
            c: inst.objective()[j],
            lower: inst.lower_bounds()[j],
            upper: inst.upper_bounds()[j],
            integer: inst.is_integer(j),
        })
        .collect();
    MilpGraph {
        m: inst.num_constraints(),
        n: inst.num_variables(),
        edges: inst.entries().map(|(i, j, v)| ((i, j), v)).collect(),
        v_features,
        w_features,
        random_features: None,
    }
}

/// Decode a graph back to the instance it encodes. Exact inverse of
/// [`encode_graph`] for graphs produced by it.
pub fn decode_instance(g: &MilpGraph) -> Result<MilpInstance, MilpError> {
    MilpInstance::new(
        g.m,
        g.n,
        g.edges(),
        g.v_features.iter().map(|f| f.b).collect(),
        g.v_features.iter().map(|f| f.sense).collect(),
        g.w_features.iter().map(|f| f.c).collect(),
        g.w_features.iter().map(|f| f.lower).collect(),
        g.w_features.iter().map(|f| f.upper).collect(),
        g.w_features.iter().map(|f| f.integer).collect(),
    )
}

/// Relabel vertices: edge (i, j, w) maps to (sigma_v(i), sigma_w(j), w), with
/// features and random features carried along.
pub fn apply_permutation(g: &MilpGraph, p: &Permutation) -> Result<MilpGraph, GraphError> {
    if p.v_len() != g.m || p.w_len() != g.n {
        return Err(GraphError::DimensionMismatch {
            m: p.v_len(),
            n: p.w_len(),
            gm: g.m,
            gn: g.n,
        });
    }
    let edges = g
        .edges()
        .map(|(i, j, w)| ((p.v(i), p.w(j)), w))
        .collect();
    let mut v_features = vec![g.v_features[0]; g.m];
    for (i, f) in g.v_features.iter().enumerate() {
        v_features[p.v(i)] = *f;
    }
    let mut w_features = vec![g.w_features[0]; g.n];
    for (j, f) in g.w_features.iter().enumerate() {
        w_features[p.w(j)] = *f;
    }
    let random_features = g.random_features.as_ref().map(|rf| {
        let mut v = vec![0.0; g.m];
        let mut w = vec![0.0; g.n];
        for (i, &x) in rf.v.iter().enumerate() {
            v[p.v(i)] = x;
        }
        for (j, &x) in rf.w.iter().enumerate() {
            w[p.w(j)] = x;
        }
        RandomFeatures { v, w }
    });
    Ok(MilpGraph {
        m: g.m,
        n: g.n,
        edges,
        v_features,
        w_features,
        random_features,
    })
}
