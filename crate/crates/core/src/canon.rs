//! Canonical variable ordering for unfoldable MILP-graphs.
//!
//! Starting from lexicographic feature keys, vertex orders on both sides are
//! refined by repeatedly re-keying every vertex with (current rank, sorted
//! multiset of (edge weight, neighbor rank)). On an unfoldable graph the
//! refinement reaches a strict total order, yielding a permutation that is
//! equivariant under graph relabeling.

use std::cmp::Ordering;

use thiserror::Error;

use crate::graph::{ConstraintFeature, MilpGraph, VariableFeature};
use crate::milp::{Lower, Upper};

#[derive(Debug, Error)]
pub enum CanonError {
    #[error("graph is foldable: order refinement left ties after {rounds} rounds")]
    FoldableInput { rounds: usize },
}

/// A strict canonical order on both vertex sides of an unfoldable graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalOrder {
    /// `sigma_w[k]` is the variable index occupying canonical position `k`,
    /// so ranks read through it are strictly increasing.
    pub sigma_w: Vec<usize>,
    /// Distinct rank of each constraint vertex.
    pub v_rank: Vec<usize>,
    /// Distinct rank of each variable vertex.
    pub w_rank: Vec<usize>,
}

/// Initial constraint key (b, iota(sense)), compared lexicographically.
pub fn initial_order_key_v(f: &ConstraintFeature) -> (f64, i8) {
    (f.b, f.sense.iota())
}

fn cmp_key_v(a: &(f64, i8), b: &(f64, i8)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Initial variable key (c, l, u, tau), compared lexicographically with
/// -inf below every real and +inf above.
pub fn initial_order_key_w(f: &VariableFeature) -> (f64, Lower, Upper, bool) {
    (f.c, f.lower, f.upper, f.integer)
}

fn cmp_key_w(a: &(f64, Lower, Upper, bool), b: &(f64, Lower, Upper, bool)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| cmp_lower(a.1, b.1))
        .then_with(|| cmp_upper(a.2, b.2))
        .then(a.3.cmp(&b.3))
}

fn cmp_lower(a: Lower, b: Lower) -> Ordering {
    match (a, b) {
        (Lower::NegInf, Lower::NegInf) => Ordering::Equal,
        (Lower::NegInf, _) => Ordering::Less,
        (_, Lower::NegInf) => Ordering::Greater,
        (Lower::Finite(x), Lower::Finite(y)) => x.total_cmp(&y),
    }
}

fn cmp_upper(a: Upper, b: Upper) -> Ordering {
    match (a, b) {
        (Upper::PosInf, Upper::PosInf) => Ordering::Equal,
        (Upper::PosInf, _) => Ordering::Greater,
        (_, Upper::PosInf) => Ordering::Less,
        (Upper::Finite(x), Upper::Finite(y)) => x.total_cmp(&y),
    }
}

/// Assign dense ranks (ties share a rank) from a comparator over indices.
fn dense_ranks<F>(count: usize, cmp: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> Ordering,
{
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| cmp(a, b));
    let mut ranks = vec![0usize; count];
    let mut rank = 0;
    for pos in 0..count {
        if pos > 0 && cmp(order[pos - 1], order[pos]) == Ordering::Less {
            rank += 1;
        }
        ranks[order[pos]] = rank;
    }
    ranks
}

/// Refinement key after the initial round: (own rank, sorted multiset of
/// (weight, neighbor rank) over nonzero edges). Multisets compare by their
/// sorted sequences, shorter prefix first.
type RefineKey = (usize, Vec<(f64, usize)>);

fn cmp_refine(a: &RefineKey, b: &RefineKey) -> Ordering {
    a.0.cmp(&b.0).then_with(|| {
        let mut it_a = a.1.iter();
        let mut it_b = b.1.iter();
        loop {
            match (it_a.next(), it_b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(x), Some(y)) => {
                    let ord = x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
            }
        }
    })
}

/// Compute the canonical order of an unfoldable graph. Runs order refinement
/// to its fixed point (reached within m+n rounds) and returns the strict
/// ranks plus the variable permutation sorted by rank.
pub fn sort_graph(g: &MilpGraph) -> Result<CanonicalOrder, CanonError> {
    let m = g.num_constraints();
    let n = g.num_variables();

    let v_keys: Vec<_> = g.v_features().iter().map(initial_order_key_v).collect();
    let w_keys: Vec<_> = g.w_features().iter().map(initial_order_key_w).collect();
    let mut v_rank = dense_ranks(m, |a, b| cmp_key_v(&v_keys[a], &v_keys[b]));
    let mut w_rank = dense_ranks(n, |a, b| cmp_key_w(&w_keys[a], &w_keys[b]));

    let max_rounds = m + n;
    let mut rounds = 0;
    while rounds < max_rounds {
        let mut v_nbrs: Vec<Vec<(f64, usize)>> = vec![Vec::new(); m];
        let mut w_nbrs: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
        for (i, j, wt) in g.edges() {
            v_nbrs[i].push((wt, w_rank[j]));
            w_nbrs[j].push((wt, v_rank[i]));
        }
        let sort_nbrs = |nbrs: &mut Vec<(f64, usize)>| {
            nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        };
        v_nbrs.iter_mut().for_each(sort_nbrs);
        w_nbrs.iter_mut().for_each(sort_nbrs);
        let v_refine: Vec<RefineKey> = (0..m)
            .map(|i| (v_rank[i], std::mem::take(&mut v_nbrs[i])))
            .collect();
        let w_refine: Vec<RefineKey> = (0..n)
            .map(|j| (w_rank[j], std::mem::take(&mut w_nbrs[j])))
            .collect();
        let next_v = dense_ranks(m, |a, b| cmp_refine(&v_refine[a], &v_refine[b]));
        let next_w = dense_ranks(n, |a, b| cmp_refine(&w_refine[a], &w_refine[b]));
        rounds += 1;
        // New ranks refine the old ones (the old rank leads the key), so
        // equal rank vectors mean the fixed point is reached.
        let stable = next_v == v_rank && next_w == w_rank;
        v_rank = next_v;
        w_rank = next_w;
        if stable {
            break;
        }
    }

    let v_distinct = v_rank.iter().max().map_or(0, |&r| r + 1);
    let w_distinct = w_rank.iter().max().map_or(0, |&r| r + 1);
    if v_distinct != m || w_distinct != n {
        return Err(CanonError::FoldableInput { rounds });
    }
    let mut sigma_w: Vec<usize> = (0..n).collect();
    sigma_w.sort_by_key(|&j| w_rank[j]);
    Ok(CanonicalOrder {
        sigma_w,
        v_rank,
        w_rank,
    })
}
