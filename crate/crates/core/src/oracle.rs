//! Exact ground-truth labeling: feasibility, optimal objective, and a
//! canonical optimal solution, via branch-and-bound over the bounded-variable
//! simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::canon::{sort_graph, CanonError};
use crate::graph::encode_graph;
use crate::milp::{Lower, MilpInstance, Sense, Upper};
use crate::simplex::{solve_lp_with_bounds, LpResult, SimplexError};

/// Tolerances and limits for the exact solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Maximum constraint violation accepted in solutions.
    pub tol_feas: f64,
    /// Distance from the nearest integer below which a value counts as
    /// integral.
    pub tol_int: f64,
    /// Relative optimality band: pruning and the optimality cut use
    /// `tol_obj_rel * max(1, |z|)`.
    pub tol_obj_rel: f64,
    /// Half-width of the two-sided bounds used to fix variables during
    /// lexicographic solution extraction.
    pub tol_fix: f64,
    /// Maximum number of branch-and-bound nodes to explore.
    pub node_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_feas: 1e-7,
            tol_int: 1e-6,
            tol_obj_rel: 1e-9,
            tol_fix: 1e-7,
            node_limit: 1_000_000,
        }
    }
}

impl SolverConfig {
    /// Absolute optimality band around an objective value of magnitude `z`.
    pub fn tol_obj(&self, z: f64) -> f64 {
        self.tol_obj_rel * z.abs().max(1.0)
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("variable {var} has an infinite bound; the oracle requires finite boxes")]
    UnboundedDomain { var: usize },
    #[error("branch-and-bound exceeded the node limit of {limit}")]
    NodeLimit { limit: usize },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Foldable(#[from] CanonError),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Ground-truth label of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLabel {
    pub feasible: bool,
    /// Optimal objective; `f64::INFINITY` iff infeasible.
    pub objective: f64,
    /// One optimal solution; absent iff infeasible.
    pub solution: Option<Vec<f64>>,
    /// Branch-and-bound nodes processed.
    pub node_count: usize,
}

/// Solve an MILP exactly with default tolerances.
pub fn solve_milp(inst: &MilpInstance) -> Result<OracleLabel, OracleError> {
    solve_milp_with(inst, &SolverConfig::default())
}

/// Heap entry ordered so the smallest LP bound pops first, ties by insertion
/// order for determinism.
struct Node {
    bound: f64,
    id: usize,
    point: Vec<f64>,
    lower: Vec<Lower>,
    upper: Vec<Upper>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the least bound
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.id.cmp(&self.id))
    }
}

/// Solve an MILP exactly: best-bound branch-and-bound with most-fractional
/// branching over LP relaxations.
pub fn solve_milp_with(
    inst: &MilpInstance,
    cfg: &SolverConfig,
) -> Result<OracleLabel, OracleError> {
    let n = inst.num_variables();
    for j in 0..n {
        let finite = matches!(inst.lower_bounds()[j], Lower::Finite(_))
            && matches!(inst.upper_bounds()[j], Upper::Finite(_));
        if !finite {
            return Err(OracleError::UnboundedDomain { var: j });
        }
    }

    // Integer boxes round inward once up front.
    let mut root_lower = inst.lower_bounds().to_vec();
    let mut root_upper = inst.upper_bounds().to_vec();
    tighten_integer_bounds(inst, cfg, &mut root_lower, &mut root_upper);

    let mut node_count = 0usize;
    let mut next_id = 0usize;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;

    match solve_lp_with_bounds(inst, &root_lower, &root_upper)? {
        LpResult::Optimal { objective, point } => {
            heap.push(Node {
                bound: objective,
                id: next_id,
                point,
                lower: root_lower,
                upper: root_upper,
            });
            next_id += 1;
        }
        LpResult::Infeasible => {
            return Ok(OracleLabel {
                feasible: false,
                objective: f64::INFINITY,
                solution: None,
                node_count: 1,
            });
        }
        LpResult::Unbounded => {
            // Finite boxes exclude unbounded relaxations.
            return Err(OracleError::Internal(
                "LP relaxation unbounded despite finite boxes".into(),
            ));
        }
    }

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= *best - cfg.tol_obj(*best) {
                break; // best-bound order: every remaining node is pruned too
            }
        }
        node_count += 1;
        if node_count > cfg.node_limit {
            return Err(OracleError::NodeLimit {
                limit: cfg.node_limit,
            });
        }

        // Most-fractional integer variable, ties toward the lowest index.
        let mut branch: Option<(usize, f64, f64)> = None; // (j, value, dist)
        for j in 0..n {
            if !inst.is_integer(j) {
                continue;
            }
            let v = node.point[j];
            let dist = (v - v.round()).abs();
            if dist > cfg.tol_int && branch.map_or(true, |(_, _, d)| dist > d) {
                branch = Some((j, v, dist));
            }
        }

        let Some((bj, bv, _)) = branch else {
            // Integral point: polish by fixing the integers and re-solving
            // the continuous remainder, then update the incumbent.
            let (obj, x) = polish_incumbent(inst, cfg, &node)?;
            let improves = incumbent
                .as_ref()
                .map_or(true, |(best, _)| obj < *best - cfg.tol_obj(*best));
            if improves {
                incumbent = Some((obj, x));
            }
            continue;
        };

        // Children split the box at the fractional value.
        let down_upper = {
            let mut u = node.upper.clone();
            u[bj] = Upper::Finite(bv.floor());
            u
        };
        let up_lower = {
            let mut l = node.lower.clone();
            l[bj] = Lower::Finite(bv.ceil());
            l
        };
        for (lower, upper) in [
            (node.lower.clone(), down_upper),
            (up_lower, node.upper.clone()),
        ] {
            if let (Lower::Finite(l), Upper::Finite(u)) = (lower[bj], upper[bj]) {
                if l > u {
                    continue;
                }
            }
            if let LpResult::Optimal { objective, point } =
                solve_lp_with_bounds(inst, &lower, &upper)?
            {
                let bound = objective.max(node.bound);
                let prune = incumbent
                    .as_ref()
                    .is_some_and(|(best, _)| bound >= *best - cfg.tol_obj(*best));
                if !prune {
                    heap.push(Node {
                        bound,
                        id: next_id,
                        point,
                        lower,
                        upper,
                    });
                    next_id += 1;
                }
            }
        }
    }

    match incumbent {
        Some((objective, solution)) => Ok(OracleLabel {
            feasible: true,
            objective,
            solution: Some(solution),
            node_count,
        }),
        None => Ok(OracleLabel {
            feasible: false,
            objective: f64::INFINITY,
            solution: None,
            node_count,
        }),
    }
}

/// Round each integer box inward; a crossed box stays crossed and the LP
/// reports infeasibility.
fn tighten_integer_bounds(
    inst: &MilpInstance,
    cfg: &SolverConfig,
    lower: &mut [Lower],
    upper: &mut [Upper],
) {
    for j in 0..inst.num_variables() {
        if !inst.is_integer(j) {
            continue;
        }
        if let Lower::Finite(l) = lower[j] {
            lower[j] = Lower::Finite((l - cfg.tol_int).ceil());
        }
        if let Upper::Finite(u) = upper[j] {
            upper[j] = Upper::Finite((u + cfg.tol_int).floor());
        }
    }
}

/// Fix integer variables at their rounded node values and re-solve the
/// continuous remainder so the reported point is exactly integral.
fn polish_incumbent(
    inst: &MilpInstance,
    _cfg: &SolverConfig,
    node: &Node,
) -> Result<(f64, Vec<f64>), OracleError> {
    let n = inst.num_variables();
    let mut lower = node.lower.clone();
    let mut upper = node.upper.clone();
    for j in 0..n {
        if inst.is_integer(j) {
            let v = node.point[j].round();
            lower[j] = Lower::Finite(v);
            upper[j] = Upper::Finite(v);
        }
    }
    match solve_lp_with_bounds(inst, &lower, &upper)? {
        LpResult::Optimal { objective, mut point } => {
            for j in 0..n {
                if inst.is_integer(j) {
                    point[j] = point[j].round();
                }
            }
            Ok((objective, point))
        }
        // Tolerance edge: keep the node's own LP point.
        _ => Ok((node.bound, node.point.clone())),
    }
}

/// Canonical optimal solution: the lexicographically minimal optimum along
/// the canonical variable order. Each coordinate is found by minimizing that
/// variable over the optimal face, with earlier coordinates pinned.
pub fn canonical_solution(inst: &MilpInstance) -> Result<Vec<f64>, OracleError> {
    canonical_solution_with(inst, &SolverConfig::default())
}

pub fn canonical_solution_with(
    inst: &MilpInstance,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, OracleError> {
    let order = sort_graph(&encode_graph(inst))?;
    let base = solve_milp_with(inst, cfg)?;
    let z_star = base.objective;
    if !base.feasible {
        return Err(OracleError::Internal(
            "canonical_solution called on an infeasible instance".into(),
        ));
    }

    let n = inst.num_variables();
    let mut lower = inst.lower_bounds().to_vec();
    let mut upper = inst.upper_bounds().to_vec();
    let mut out = vec![f64::NAN; n];
    for &j in &order.sigma_w {
        let sub = with_objective_cut(inst, z_star + cfg.tol_obj(z_star), j, &lower, &upper)?;
        let label = solve_milp_with(&sub, cfg)?;
        let Some(sol) = label.solution else {
            return Err(OracleError::Internal(
                "optimal face unexpectedly empty during lexicographic extraction".into(),
            ));
        };
        let mut v = sol[j];
        if inst.is_integer(j) {
            v = v.round();
        }
        out[j] = v;
        // Pin within a band intersected with the original box.
        let l = match lower[j] {
            Lower::Finite(l) => l.max(v - cfg.tol_fix),
            Lower::NegInf => v - cfg.tol_fix,
        };
        let u = match upper[j] {
            Upper::Finite(u) => u.min(v + cfg.tol_fix),
            Upper::PosInf => v + cfg.tol_fix,
        };
        lower[j] = Lower::Finite(l);
        upper[j] = Upper::Finite(u.max(l));
    }
    Ok(out)
}

/// Copy of the instance with bounds replaced, objective set to minimize
/// variable `target`, and one extra row capping the original objective.
fn with_objective_cut(
    inst: &MilpInstance,
    cap: f64,
    target: usize,
    lower: &[Lower],
    upper: &[Upper],
) -> Result<MilpInstance, OracleError> {
    let m = inst.num_constraints();
    let n = inst.num_variables();
    let mut entries: Vec<(usize, usize, f64)> = inst.entries().collect();
    for (j, &cj) in inst.objective().iter().enumerate() {
        if cj != 0.0 {
            entries.push((m, j, cj));
        }
    }
    let mut b = inst.rhs().to_vec();
    b.push(cap);
    let mut senses = inst.senses().to_vec();
    senses.push(Sense::Le);
    let mut c = vec![0.0; n];
    c[target] = 1.0;
    MilpInstance::new(
        m + 1,
        n,
        entries,
        b,
        senses,
        c,
        lower.to_vec(),
        upper.to_vec(),
        (0..n).map(|j| inst.is_integer(j)).collect(),
    )
    .map_err(|e| OracleError::Internal(format!("objective-cut instance invalid: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::gen_counterexample;
    use crate::milp::{permute_instance, Permutation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn boxed(
        entries: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
        senses: Vec<Sense>,
        c: Vec<f64>,
        bounds: Vec<(f64, f64)>,
        integer: Vec<bool>,
    ) -> MilpInstance {
        let n = c.len();
        let m = b.len();
        MilpInstance::new(
            m,
            n,
            entries,
            b,
            senses,
            c,
            bounds.iter().map(|&(l, _)| Lower::Finite(l)).collect(),
            bounds.iter().map(|&(_, u)| Upper::Finite(u)).collect(),
            integer,
        )
        .unwrap()
    }

    /// Exhaustive oracle for all-integer instances with small boxes.
    fn brute_force(inst: &MilpInstance) -> (bool, f64) {
        let n = inst.num_variables();
        let ranges: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let l = inst.lower_bounds()[j].finite().unwrap();
                let u = inst.upper_bounds()[j].finite().unwrap();
                let lo = l.ceil() as i64;
                let hi = u.floor() as i64;
                (lo..=hi).map(|v| v as f64).collect()
            })
            .collect();
        let mut best = f64::INFINITY;
        let mut feasible = false;
        let mut x = vec![0.0; n];
        fn rec(
            inst: &MilpInstance,
            ranges: &[Vec<f64>],
            j: usize,
            x: &mut Vec<f64>,
            best: &mut f64,
            feasible: &mut bool,
        ) {
            if j == ranges.len() {
                if inst.max_violation(x) <= 1e-9 {
                    *feasible = true;
                    let obj = inst.objective_value(x);
                    if obj < *best {
                        *best = obj;
                    }
                }
                return;
            }
            for &v in &ranges[j] {
                x[j] = v;
                rec(inst, ranges, j + 1, x, best, feasible);
            }
        }
        rec(inst, &ranges, 0, &mut x, &mut best, &mut feasible);
        (feasible, best)
    }

    #[test]
    fn rejects_infinite_bounds() {
        let inst = MilpInstance::new(
            1,
            1,
            vec![(0, 0, 1.0)],
            vec![1.0],
            vec![Sense::Le],
            vec![1.0],
            vec![Lower::NegInf],
            vec![Upper::Finite(2.0)],
            vec![false],
        )
        .unwrap();
        assert!(matches!(
            solve_milp(&inst),
            Err(OracleError::UnboundedDomain { var: 0 })
        ));
    }

    #[test]
    fn counterexample_pair_labels() {
        let (feas, infeas) = gen_counterexample();
        let la = solve_milp(&feas).unwrap();
        assert!(la.feasible);
        assert!((la.objective - 3.0).abs() < 1e-8);
        let x = la.solution.unwrap();
        assert!(feas.max_violation(&x) < 1e-7);
        assert!(x.iter().all(|v| (v - v.round()).abs() < 1e-6));

        let lb = solve_milp(&infeas).unwrap();
        assert!(!lb.feasible);
        assert!(lb.objective.is_infinite());
        assert!(lb.solution.is_none());
    }

    #[test]
    fn matches_brute_force_on_random_integer_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let m = rng.gen_range(1..4usize);
            let n = rng.gen_range(1..5usize);
            let mut entries = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.gen_bool(0.6) {
                        entries.push((i, j, rng.gen_range(-3..4) as f64));
                    }
                }
            }
            let inst = boxed(
                entries,
                (0..m).map(|_| rng.gen_range(-4..5) as f64).collect(),
                (0..m)
                    .map(|_| match rng.gen_range(0..3) {
                        0 => Sense::Le,
                        1 => Sense::Eq,
                        _ => Sense::Ge,
                    })
                    .collect(),
                (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                (0..n)
                    .map(|_| {
                        let l = rng.gen_range(-2..1) as f64;
                        (l, l + rng.gen_range(1..4) as f64)
                    })
                    .collect(),
                vec![true; n],
            );
            let (bf_feas, bf_obj) = brute_force(&inst);
            let label = solve_milp(&inst).unwrap();
            assert_eq!(label.feasible, bf_feas, "instance {inst:?}");
            if bf_feas {
                assert!(
                    (label.objective - bf_obj).abs() < 1e-8,
                    "oracle {} vs brute force {}",
                    label.objective,
                    bf_obj
                );
                let x = label.solution.unwrap();
                assert!(inst.max_violation(&x) < 1e-7);
            }
        }
    }

    #[test]
    fn labels_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (feas, _) = gen_counterexample();
        for _ in 0..20 {
            let mut sv: Vec<usize> = (0..6).collect();
            let mut sw: Vec<usize> = (0..6).collect();
            for k in (1..6).rev() {
                sv.swap(k, rng.gen_range(0..=k));
                sw.swap(k, rng.gen_range(0..=k));
            }
            let p = Permutation::new(sv, sw).unwrap();
            let permuted = permute_instance(&feas, &p).unwrap();
            let label = solve_milp(&permuted).unwrap();
            assert!(label.feasible);
            assert!((label.objective - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn canonical_solution_unique_optimum() {
        // min x1 + 2 x2 s.t. x1 + x2 >= 1, 0 <= x <= 1: unique optimum (1, 0).
        let inst = boxed(
            vec![(0, 0, 1.0), (0, 1, 1.0)],
            vec![1.0],
            vec![Sense::Ge],
            vec![1.0, 2.0],
            vec![(0.0, 1.0), (0.0, 1.0)],
            vec![false, false],
        );
        let x = canonical_solution(&inst).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6);
        assert!(x[1].abs() < 1e-6);
    }

    #[test]
    fn canonical_solution_uncoupled_box() {
        // min 0 with distinct costs only to break foldability: both
        // coordinates settle at their lower bounds.
        let inst = boxed(
            vec![(0, 0, 1.0), (1, 1, 1.0)],
            vec![2.0, 2.0],
            vec![Sense::Le, Sense::Le],
            vec![0.01, 0.02],
            vec![(0.0, 1.0), (0.0, 1.0)],
            vec![false, false],
        );
        let x = canonical_solution(&inst).unwrap();
        assert!(x[0].abs() < 1e-6, "{x:?}");
        assert!(x[1].abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn canonical_solution_is_permutation_equivariant() {
        // Ties in the optimal face are resolved identically across
        // relabelings: reading the permuted solution through the permutation
        // recovers the original.
        let inst = boxed(
            vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)],
            vec![1.0, 2.0],
            vec![Sense::Ge, Sense::Le],
            vec![1.0, 1.0],
            vec![(0.0, 3.0), (0.0, 5.0)],
            vec![false, true],
        );
        let x = canonical_solution(&inst).unwrap();
        let p = Permutation::new(vec![1, 0], vec![1, 0]).unwrap();
        let permuted = permute_instance(&inst, &p).unwrap();
        let px = canonical_solution(&permuted).unwrap();
        for j in 0..2 {
            assert!((px[p.w(j)] - x[j]).abs() < 1e-6, "{x:?} vs {px:?}");
        }
    }

    #[test]
    fn canonical_solution_rejects_foldable() {
        let (feas, _) = gen_counterexample();
        assert!(matches!(
            canonical_solution(&feas),
            Err(OracleError::Foldable(_))
        ));
    }

    #[test]
    fn solution_respects_validity_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let m = rng.gen_range(1..4usize);
            let n = rng.gen_range(2..5usize);
            let mut entries = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.gen_bool(0.5) {
                        entries.push((i, j, rng.gen_range(-2.0..2.0)));
                    }
                }
            }
            let inst = boxed(
                entries,
                (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                (0..m)
                    .map(|_| if rng.gen_bool(0.5) { Sense::Le } else { Sense::Ge })
                    .collect(),
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                vec![(-2.0, 2.0); n],
                (0..n).map(|_| rng.gen_bool(0.5)).collect(),
            );
            let label = solve_milp(&inst).unwrap();
            if let Some(x) = label.solution {
                assert!(inst.max_violation(&x) < 1e-7);
                assert!((inst.objective_value(&x) - label.objective).abs() < 1e-7);
                for j in 0..n {
                    if inst.is_integer(j) {
                        assert!((x[j] - x[j].round()).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
