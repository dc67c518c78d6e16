//! Color refinement on MILP-graphs, the induced equivalence tests, and
//! foldability classification.
//!
//! Hash functions are realized as exact signature interning: every distinct
//! signature gets a fresh dense id, so no collisions can occur. Real values
//! inside signatures compare by exact bit pattern by default; an optional
//! absolute tolerance buckets values first (exploration only, it breaks
//! transitivity).

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::MilpGraph;
use crate::milp::{Lower, MilpInstance, Upper};

#[derive(Debug, Error)]
pub enum WlError {
    #[error("graphs have mismatched shapes ({m1},{n1}) vs ({m2},{n2})")]
    ShapeMismatch { m1: usize, n1: usize, m2: usize, n2: usize },
    #[error("coloring shape ({m},{n}) does not match instance ({im},{in_})")]
    ColoringMismatch { m: usize, n: usize, im: usize, in_: usize },
}

/// Result of running color refinement to its fixed point.
#[derive(Debug, Clone)]
pub struct ColoringResult {
    /// Refinement rounds performed after the initial coloring.
    pub rounds: usize,
    pub v_colors: Vec<u32>,
    pub w_colors: Vec<u32>,
    /// Constraint indices grouped by final color.
    pub v_partition: Vec<Vec<usize>>,
    /// Variable indices grouped by final color.
    pub w_partition: Vec<Vec<usize>>,
    /// True iff every vertex ends up in its own color class.
    pub is_discrete: bool,
    /// Per-round colorings, starting with the initial one.
    pub history: Vec<(Vec<u32>, Vec<u32>)>,
}

/// Encodes an f64 for signature comparison: exact bits, or a bucket index
/// when a positive tolerance is set.
#[derive(Clone, Copy)]
struct ValueEnc {
    tolerance: f64,
}

impl ValueEnc {
    fn enc(&self, v: f64) -> u64 {
        if self.tolerance > 0.0 {
            ((v / self.tolerance).round() as i64) as u64
        } else {
            // normalize -0.0 so numerically equal values share a signature
            (v + 0.0).to_bits()
        }
    }
}

fn lower_tokens(l: Lower, enc: ValueEnc) -> [u64; 2] {
    match l {
        Lower::NegInf => [0, 0],
        Lower::Finite(v) => [1, enc.enc(v)],
    }
}

fn upper_tokens(u: Upper, enc: ValueEnc) -> [u64; 2] {
    match u {
        Upper::PosInf => [0, 0],
        Upper::Finite(v) => [1, enc.enc(v)],
    }
}

#[derive(Default)]
struct Interner {
    map: HashMap<Vec<u64>, u32>,
}

impl Interner {
    fn intern(&mut self, sig: Vec<u64>) -> u32 {
        let next = self.map.len() as u32;
        *self.map.entry(sig).or_insert(next)
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

/// One coloring state per graph during (possibly joint) refinement.
struct RefineState {
    v_colors: Vec<Vec<u32>>,
    w_colors: Vec<Vec<u32>>,
    rounds: usize,
    history: Vec<Vec<(Vec<u32>, Vec<u32>)>>,
}

/// Run refinement on all graphs with shared interners so colors are
/// comparable across them. Stops at the joint fixed point or `max_rounds`.
fn refine_joint(graphs: &[&MilpGraph], max_rounds: usize, tolerance: f64) -> RefineState {
    let enc = ValueEnc { tolerance };
    let mut v_intern = Interner::default();
    let mut w_intern = Interner::default();
    let mut v_colors: Vec<Vec<u32>> = Vec::with_capacity(graphs.len());
    let mut w_colors: Vec<Vec<u32>> = Vec::with_capacity(graphs.len());
    for g in graphs {
        let omega = g.random_features();
        let vc = g
            .v_features()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut sig = vec![enc.enc(f.b), f.sense.iota() as u64];
                if let Some(rf) = omega {
                    sig.push(enc.enc(rf.v[i]));
                }
                v_intern.intern(sig)
            })
            .collect();
        let wc = g
            .w_features()
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let mut sig = vec![enc.enc(f.c)];
                sig.extend(lower_tokens(f.lower, enc));
                sig.extend(upper_tokens(f.upper, enc));
                sig.push(f.integer as u64);
                if let Some(rf) = omega {
                    sig.push(enc.enc(rf.w[j]));
                }
                w_intern.intern(sig)
            })
            .collect();
        v_colors.push(vc);
        w_colors.push(wc);
    }
    let mut history: Vec<Vec<(Vec<u32>, Vec<u32>)>> = graphs
        .iter()
        .enumerate()
        .map(|(k, _)| vec![(v_colors[k].clone(), w_colors[k].clone())])
        .collect();
    let mut num_v = v_intern.len();
    let mut num_w = w_intern.len();
    let mut rounds = 0;

    for _ in 0..max_rounds {
        let mut v_intern = Interner::default();
        let mut w_intern = Interner::default();
        let mut next_v: Vec<Vec<u32>> = Vec::with_capacity(graphs.len());
        let mut next_w: Vec<Vec<u32>> = Vec::with_capacity(graphs.len());
        for (k, g) in graphs.iter().enumerate() {
            // Gather neighbor multisets; both sides update from round l-1 colors.
            let m = g.num_constraints();
            let n = g.num_variables();
            let mut v_nbrs: Vec<Vec<(f64, u32)>> = vec![Vec::new(); m];
            let mut w_nbrs: Vec<Vec<(f64, u32)>> = vec![Vec::new(); n];
            for (i, j, wt) in g.edges() {
                v_nbrs[i].push((wt, w_colors[k][j]));
                w_nbrs[j].push((wt, v_colors[k][i]));
            }
            let signature = |old: u32, mut nbrs: Vec<(f64, u32)>| -> Vec<u64> {
                nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut sig = Vec::with_capacity(1 + 2 * nbrs.len());
                sig.push(old as u64);
                for (wt, color) in nbrs {
                    sig.push(enc.enc(wt));
                    sig.push(color as u64);
                }
                sig
            };
            next_v.push(
                (0..m)
                    .map(|i| v_intern.intern(signature(v_colors[k][i], std::mem::take(&mut v_nbrs[i]))))
                    .collect(),
            );
            next_w.push(
                (0..n)
                    .map(|j| w_intern.intern(signature(w_colors[k][j], std::mem::take(&mut w_nbrs[j]))))
                    .collect(),
            );
        }
        let stable = v_intern.len() == num_v && w_intern.len() == num_w;
        num_v = v_intern.len();
        num_w = w_intern.len();
        v_colors = next_v;
        w_colors = next_w;
        rounds += 1;
        for (k, h) in history.iter_mut().enumerate() {
            h.push((v_colors[k].clone(), w_colors[k].clone()));
        }
        // Each new color refines the old one (the old color is part of the
        // signature), so an unchanged color count means a fixed point.
        if stable {
            break;
        }
    }
    RefineState {
        v_colors,
        w_colors,
        rounds,
        history,
    }
}

/// Color refinement on a single graph, stopping at the fixed point or after
/// `max_rounds` iterations. `m + n` rounds always suffice for the fixed point.
pub fn refine_colors(g: &MilpGraph, max_rounds: usize) -> ColoringResult {
    refine_colors_with_tolerance(g, max_rounds, 0.0)
}

/// Like [`refine_colors`] with values bucketed by an absolute tolerance
/// before comparison. Tolerance zero is the exact default.
pub fn refine_colors_with_tolerance(
    g: &MilpGraph,
    max_rounds: usize,
    tolerance: f64,
) -> ColoringResult {
    let state = refine_joint(&[g], max_rounds, tolerance);
    let v_colors = state.v_colors.into_iter().next().unwrap();
    let w_colors = state.w_colors.into_iter().next().unwrap();
    let v_partition = group_by_color(&v_colors);
    let w_partition = group_by_color(&w_colors);
    let is_discrete =
        v_partition.len() == g.num_constraints() && w_partition.len() == g.num_variables();
    ColoringResult {
        rounds: state.rounds,
        v_colors,
        w_colors,
        v_partition,
        w_partition,
        is_discrete,
        history: state.history.into_iter().next().unwrap(),
    }
}

fn group_by_color(colors: &[u32]) -> Vec<Vec<usize>> {
    let mut blocks: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, &c) in colors.iter().enumerate() {
        blocks.entry(c).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = blocks.into_values().collect();
    out.sort_by_key(|block| block[0]);
    out
}

/// True iff the instance is foldable: refinement never separates some pair of
/// vertices.
pub fn is_foldable(g: &MilpGraph) -> bool {
    let budget = g.num_constraints() + g.num_variables();
    !refine_colors(g, budget).is_discrete
}

/// WL indistinguishability: joint refinement yields equal color multisets on
/// both sides at the fixed point.
pub fn graphs_equivalent(g1: &MilpGraph, g2: &MilpGraph) -> Result<bool, WlError> {
    let state = joint_pair(g1, g2)?;
    Ok(multisets_equal(&state.v_colors[0], &state.v_colors[1])
        && multisets_equal(&state.w_colors[0], &state.w_colors[1]))
}

/// Indistinguishability plus index-wise agreement of the final variable
/// colors.
pub fn graphs_w_equivalent(g1: &MilpGraph, g2: &MilpGraph) -> Result<bool, WlError> {
    let state = joint_pair(g1, g2)?;
    Ok(multisets_equal(&state.v_colors[0], &state.v_colors[1])
        && multisets_equal(&state.w_colors[0], &state.w_colors[1])
        && state.w_colors[0] == state.w_colors[1])
}

fn joint_pair(g1: &MilpGraph, g2: &MilpGraph) -> Result<RefineState, WlError> {
    if g1.num_constraints() != g2.num_constraints() || g1.num_variables() != g2.num_variables() {
        return Err(WlError::ShapeMismatch {
            m1: g1.num_constraints(),
            n1: g1.num_variables(),
            m2: g2.num_constraints(),
            n2: g2.num_variables(),
        });
    }
    // The joint refinement runs on both graphs at once, so the fixed point
    // needs up to the total vertex count of the pair.
    let budget = 2 * (g1.num_constraints() + g1.num_variables());
    Ok(refine_joint(&[g1, g2], budget, 0.0))
}

fn multisets_equal(a: &[u32], b: &[u32]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Verify the partition-based foldability conditions directly on the final
/// coloring: uniform features within each block and uniform row/column sums
/// of every cross-block submatrix.
pub fn check_fold_partition(
    inst: &MilpInstance,
    coloring: &ColoringResult,
) -> Result<bool, WlError> {
    let (m, n) = (inst.num_constraints(), inst.num_variables());
    if coloring.v_colors.len() != m || coloring.w_colors.len() != n {
        return Err(WlError::ColoringMismatch {
            m: coloring.v_colors.len(),
            n: coloring.w_colors.len(),
            im: m,
            in_: n,
        });
    }
    check_partitions(inst, &coloring.v_partition, &coloring.w_partition)
}

/// Same check against explicitly given partitions (used to probe artificial
/// splits in tests).
pub fn check_partitions(
    inst: &MilpInstance,
    v_partition: &[Vec<usize>],
    w_partition: &[Vec<usize>],
) -> Result<bool, WlError> {
    let g = crate::graph::encode_graph(inst);
    for block in v_partition {
        let first = g.v_features()[block[0]];
        if block.iter().any(|&i| g.v_features()[i] != first) {
            return Ok(false);
        }
    }
    for block in w_partition {
        let first = g.w_features()[block[0]];
        if block.iter().any(|&j| g.w_features()[j] != first) {
            return Ok(false);
        }
    }
    for vb in v_partition {
        for wb in w_partition {
            // Row sums over the cross block, summed in sorted value order so
            // equal multisets give bitwise-equal totals.
            let row_sum = |i: usize| {
                let mut vals: Vec<f64> = wb.iter().map(|&j| inst.coefficient(i, j)).collect();
                vals.sort_by(f64::total_cmp);
                vals.iter().sum::<f64>()
            };
            let col_sum = |j: usize| {
                let mut vals: Vec<f64> = vb.iter().map(|&i| inst.coefficient(i, j)).collect();
                vals.sort_by(f64::total_cmp);
                vals.iter().sum::<f64>()
            };
            let r0 = row_sum(vb[0]);
            if vb.iter().any(|&i| row_sum(i) != r0) {
                return Ok(false);
            }
            let c0 = col_sum(wb[0]);
            if wb.iter().any(|&j| col_sum(j) != c0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
