//! Bounded-variable primal simplex, two-phase, on a dense full tableau.
//!
//! Standard form used internally: each constraint row i gets a slack s_i with
//! Ax + s = b, where s_i ranges over [0, inf) for <=, (-inf, 0] for >=, and is
//! fixed to 0 for =. Phase 1 adds one artificial per row with sign-matched
//! bounds and unit costs so its objective is the total absolute residual.
//! Pricing is Dantzig's rule, switching to Bland's rule after 50*(m+n) pivots
//! to guarantee termination; a hard pivot cap bounds pathological cases.

use thiserror::Error;

use crate::milp::{Lower, MilpInstance, Sense, Upper};

/// Pivot count at which Bland's anti-cycling rule takes over, as a multiple
/// of m + n.
const BLAND_SWITCH_FACTOR: usize = 50;
/// Hard cap on total pivots across both phases.
const PIVOT_CAP: usize = 1_000_000;
/// Numerical tolerance for reduced costs, pivots, and residuals.
const EPS: f64 = 1e-9;
/// Residual threshold for declaring phase 1 infeasible.
const FEAS_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("simplex exceeded the pivot cap of {cap} iterations")]
    IterationLimit { cap: usize },
}

/// Outcome of an LP solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { objective: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Solve the LP relaxation of an instance (integrality ignored).
pub fn solve_lp(inst: &MilpInstance) -> Result<LpResult, SimplexError> {
    solve_lp_with_bounds(inst, inst.lower_bounds(), inst.upper_bounds())
}

/// Solve the relaxation with overriding variable bounds (used for
/// branch-and-bound nodes that tighten boxes without rebuilding the instance).
pub fn solve_lp_with_bounds(
    inst: &MilpInstance,
    lower: &[Lower],
    upper: &[Upper],
) -> Result<LpResult, SimplexError> {
    let m = inst.num_constraints();
    let n = inst.num_variables();
    debug_assert_eq!(lower.len(), n);
    debug_assert_eq!(upper.len(), n);

    // Columns: n structurals, m slacks, m artificials.
    let ncols = n + 2 * m;
    let mut lo = vec![f64::NEG_INFINITY; ncols];
    let mut hi = vec![f64::INFINITY; ncols];
    for j in 0..n {
        lo[j] = match lower[j] {
            Lower::NegInf => f64::NEG_INFINITY,
            Lower::Finite(v) => v,
        };
        hi[j] = match upper[j] {
            Upper::PosInf => f64::INFINITY,
            Upper::Finite(v) => v,
        };
        // Crossed bounds from branching: the box is empty.
        if lo[j] > hi[j] + EPS {
            return Ok(LpResult::Infeasible);
        }
        if lo[j] > hi[j] {
            hi[j] = lo[j];
        }
    }
    for (i, &sense) in inst.senses().iter().enumerate() {
        let (slo, shi) = match sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lo[n + i] = slo;
        hi[n + i] = shi;
    }

    // Dense row-major constraint matrix over structural + slack columns.
    let mut tab = vec![0.0f64; m * ncols];
    for (i, j, v) in inst.entries() {
        tab[i * ncols + j] = v;
    }
    for i in 0..m {
        tab[i * ncols + n + i] = 1.0;
        tab[i * ncols + n + m + i] = 1.0;
    }

    // Nonbasic start: every structural/slack at its finite bound nearest
    // zero, free variables at zero.
    let mut val = vec![0.0f64; ncols];
    for j in 0..n + m {
        val[j] = start_value(lo[j], hi[j]);
    }

    // Artificials absorb the residual; their bounds and phase-1 costs match
    // the residual sign so the phase-1 objective is the total infeasibility.
    let basis: Vec<usize> = (0..m).map(|i| n + m + i).collect();
    let mut in_basis = vec![false; ncols];
    let mut phase1_cost = vec![0.0f64; ncols];
    let mut binv_b = vec![0.0f64; m];
    for i in 0..m {
        let mut r = inst.rhs()[i];
        for j in 0..n + m {
            r -= tab[i * ncols + j] * val[j];
        }
        binv_b[i] = inst.rhs()[i];
        let a = n + m + i;
        in_basis[a] = true;
        if r >= 0.0 {
            lo[a] = 0.0;
            hi[a] = f64::INFINITY;
            phase1_cost[a] = 1.0;
        } else {
            lo[a] = f64::NEG_INFINITY;
            hi[a] = 0.0;
            phase1_cost[a] = -1.0;
        }
    }

    let mut st = Tableau {
        m,
        ncols,
        tab,
        binv_b,
        basis,
        in_basis,
        val,
        lo,
        hi,
        pivots: 0,
        bland_after: BLAND_SWITCH_FACTOR * (m + n),
    };

    // Phase 1: minimize total artificial residual.
    let phase1 = st.optimize(&phase1_cost, n + m)?;
    if phase1 == Outcome::Unbounded {
        // The phase-1 objective is bounded below by zero.
        unreachable!("phase-1 objective cannot be unbounded");
    }
    let xb = st.basic_values();
    let mut residual = 0.0;
    for i in 0..m {
        if st.basis[i] >= n + m {
            residual += xb[i].abs();
        }
    }
    if residual > FEAS_EPS {
        return Ok(LpResult::Infeasible);
    }

    // Drive remaining artificials out of the basis where possible; rows with
    // no eligible pivot are redundant and keep a zero-valued artificial.
    for i in 0..m {
        if st.basis[i] < n + m {
            continue;
        }
        let row = i * st.ncols;
        if let Some(q) = (0..n + m)
            .find(|&j| !st.in_basis[j] && st.tab[row + j].abs() > EPS)
        {
            st.pivot(i, q);
        }
    }
    // Artificials take no further part: fix them to zero.
    for a in n + m..ncols {
        st.lo[a] = 0.0;
        st.hi[a] = 0.0;
        if !st.in_basis[a] {
            st.val[a] = 0.0;
        }
    }

    // Phase 2: minimize the true objective.
    let mut cost = vec![0.0f64; ncols];
    cost[..n].copy_from_slice(inst.objective());
    let outcome = st.optimize(&cost, ncols)?;
    if outcome == Outcome::Unbounded {
        return Ok(LpResult::Unbounded);
    }
    let xb = st.basic_values();
    let mut point = vec![0.0f64; n];
    for j in 0..n {
        point[j] = st.val[j];
    }
    for i in 0..m {
        if st.basis[i] < n {
            point[st.basis[i]] = xb[i];
        }
    }
    let objective = inst.objective_value(&point);
    Ok(LpResult::Optimal { objective, point })
}

fn start_value(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if lo.abs() <= hi.abs() {
                lo
            } else {
                hi
            }
        }
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major B^{-1} A over all columns.
    tab: Vec<f64>,
    /// B^{-1} b.
    binv_b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Current value of each nonbasic column (ignored for basic ones).
    val: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    pivots: usize,
    bland_after: usize,
}

impl Tableau {
    /// Values of the basic variables at the current nonbasic point.
    fn basic_values(&self) -> Vec<f64> {
        let mut xb = self.binv_b.clone();
        for j in 0..self.ncols {
            if self.in_basis[j] || self.val[j] == 0.0 {
                continue;
            }
            let v = self.val[j];
            for i in 0..self.m {
                xb[i] -= self.tab[i * self.ncols + j] * v;
            }
        }
        xb
    }

    /// Reduced costs c_j - c_B^T B^{-1} a_j for all columns.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0f64; self.m];
        for i in 0..self.m {
            y[i] = cost[self.basis[i]];
        }
        let mut z = cost.to_vec();
        for i in 0..self.m {
            if y[i] == 0.0 {
                continue;
            }
            let row = i * self.ncols;
            for j in 0..self.ncols {
                z[j] -= y[i] * self.tab[row + j];
            }
        }
        z
    }

    /// Run the simplex loop for the given costs over columns < `active`
    /// (columns at or past `active` are never chosen to enter).
    fn optimize(&mut self, cost: &[f64], active: usize) -> Result<Outcome, SimplexError> {
        loop {
            if self.pivots >= PIVOT_CAP {
                return Err(SimplexError::IterationLimit { cap: PIVOT_CAP });
            }
            let bland = self.pivots >= self.bland_after;
            let z = self.reduced_costs(cost);
            // Entering column: direction +1 moves up from the lower bound,
            // -1 moves down from the upper bound; free columns go either way.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = EPS;
            for j in 0..active {
                if self.in_basis[j] || self.lo[j] == self.hi[j] {
                    continue;
                }
                let at_lo = self.lo[j].is_finite() && self.val[j] <= self.lo[j] + EPS;
                let at_hi = self.hi[j].is_finite() && self.val[j] >= self.hi[j] - EPS;
                let free = !at_lo && !at_hi;
                let dir = if (at_lo || free) && z[j] < -best {
                    1.0
                } else if (at_hi || free) && z[j] > best {
                    -1.0
                } else {
                    continue;
                };
                entering = Some((j, dir));
                if bland {
                    break;
                }
                best = z[j].abs();
            }
            let Some((q, dir)) = entering else {
                return Ok(Outcome::Optimal);
            };

            // Ratio test: largest step t >= 0 in direction dir keeping every
            // basic variable and the entering variable inside their bounds.
            let xb = self.basic_values();
            let own_span = self.hi[q] - self.lo[q];
            let mut t = if own_span.is_finite() { own_span } else { f64::INFINITY };
            let mut leaving: Option<(usize, bool)> = None; // (row, hits_lower)
            for i in 0..self.m {
                let d = -dir * self.tab[i * self.ncols + q];
                let b = self.basis[i];
                let (limit, hits_lower) = if d < -EPS {
                    if self.lo[b].is_finite() {
                        (((xb[i] - self.lo[b]) / -d).max(0.0), true)
                    } else {
                        continue;
                    }
                } else if d > EPS {
                    if self.hi[b].is_finite() {
                        (((self.hi[b] - xb[i]) / d).max(0.0), false)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                };
                let better = match leaving {
                    None => limit < t,
                    // Ties break toward the smallest basic index for
                    // determinism (and Bland compatibility).
                    Some(_) => limit < t - EPS || (limit < t + EPS && b < self.basis[leaving.unwrap().0]),
                };
                if better {
                    t = limit.min(t);
                    leaving = Some((i, hits_lower));
                }
            }
            if t.is_infinite() {
                return Ok(Outcome::Unbounded);
            }
            self.pivots += 1;
            match leaving {
                None => {
                    // Bound flip: the entering column crosses its own box.
                    self.val[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((r, hits_lower)) => {
                    let b = self.basis[r];
                    let leave_val = if hits_lower { self.lo[b] } else { self.hi[b] };
                    self.pivot(r, q);
                    self.val[b] = leave_val;
                }
            }
        }
    }

    /// Replace the basic variable of row `r` by column `q`.
    fn pivot(&mut self, r: usize, q: usize) {
        let ncols = self.ncols;
        let piv = self.tab[r * ncols + q];
        debug_assert!(piv.abs() > 1e-12, "pivot element too small");
        let inv = 1.0 / piv;
        for j in 0..ncols {
            self.tab[r * ncols + j] *= inv;
        }
        self.binv_b[r] *= inv;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * ncols + q];
            if f == 0.0 {
                continue;
            }
            for j in 0..ncols {
                self.tab[i * ncols + j] -= f * self.tab[r * ncols + j];
            }
            self.binv_b[i] -= f * self.binv_b[r];
        }
        let old = self.basis[r];
        self.in_basis[old] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
    }
}
