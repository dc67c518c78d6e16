//! MILP instances in the form `min c'x  s.t.  Ax ∘ b,  l <= x <= u,  x_j integer for j in I`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Constraint sense. The ordering `Le < Eq < Ge` is relied on by the
/// canonical variable ordering, matching iota(<=) = -1, iota(=) = 0, iota(>=) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn iota(self) -> i8 {
        match self {
            Sense::Le => -1,
            Sense::Eq => 0,
            Sense::Ge => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// Lower bound of a variable. Infinity is a tagged variant, never an f64 sentinel,
/// so arithmetic paths must branch on finiteness explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lower {
    NegInf,
    Finite(f64),
}

/// Upper bound of a variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upper {
    Finite(f64),
    PosInf,
}

impl Lower {
    pub fn finite(self) -> Option<f64> {
        match self {
            Lower::NegInf => None,
            Lower::Finite(v) => Some(v),
        }
    }

    /// Total order with NegInf below every real.
    pub fn cmp_total(&self, other: &Self) -> std::cmp::Ordering {
        use Lower::*;
        match (self, other) {
            (NegInf, NegInf) => std::cmp::Ordering::Equal,
            (NegInf, Finite(_)) => std::cmp::Ordering::Less,
            (Finite(_), NegInf) => std::cmp::Ordering::Greater,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

impl Upper {
    pub fn finite(self) -> Option<f64> {
        match self {
            Upper::PosInf => None,
            Upper::Finite(v) => Some(v),
        }
    }

    /// Total order with PosInf above every real.
    pub fn cmp_total(&self, other: &Self) -> std::cmp::Ordering {
        use Upper::*;
        match (self, other) {
            (PosInf, PosInf) => std::cmp::Ordering::Equal,
            (PosInf, Finite(_)) => std::cmp::Ordering::Greater,
            (Finite(_), PosInf) => std::cmp::Ordering::Less,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("m and n must be positive (got m={m}, n={n})")]
    EmptyDimension { m: usize, n: usize },
    #[error("field {field} has length {got}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("coefficient at ({i},{j}) is out of range for a {m}x{n} matrix")]
    EntryOutOfRange { i: usize, j: usize, m: usize, n: usize },
    #[error("duplicate coefficient at ({i},{j})")]
    DuplicateEntry { i: usize, j: usize },
    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },
    #[error("lower bound {lower} exceeds upper bound {upper} for variable {j}")]
    BoundOrder { j: usize, lower: f64, upper: f64 },
    #[error("permutation dimensions ({m},{n}) do not match instance ({em},{en})")]
    DimensionMismatch { m: usize, n: usize, em: usize, en: usize },
}

/// A validated MILP instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    m: usize,
    n: usize,
    a: BTreeMap<(usize, usize), f64>,
    b: Vec<f64>,
    senses: Vec<Sense>,
    c: Vec<f64>,
    lower: Vec<Lower>,
    upper: Vec<Upper>,
    integer_mask: Vec<bool>,
}

impl MilpInstance {
    /// Build and validate an instance. Zero coefficients are dropped (no edge in
    /// the induced graph); duplicate positions and non-finite data are rejected.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        n: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        b: Vec<f64>,
        senses: Vec<Sense>,
        c: Vec<f64>,
        lower: Vec<Lower>,
        upper: Vec<Upper>,
        integer_mask: Vec<bool>,
    ) -> Result<Self, MilpError> {
        if m == 0 || n == 0 {
            return Err(MilpError::EmptyDimension { m, n });
        }
        check_len("b", b.len(), m)?;
        check_len("senses", senses.len(), m)?;
        check_len("c", c.len(), n)?;
        check_len("lower", lower.len(), n)?;
        check_len("upper", upper.len(), n)?;
        check_len("integer_mask", integer_mask.len(), n)?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(MilpError::NonFinite { field: "b" });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(MilpError::NonFinite { field: "c" });
        }
        for j in 0..n {
            if let Lower::Finite(l) = lower[j] {
                if !l.is_finite() {
                    return Err(MilpError::NonFinite { field: "lower" });
                }
            }
            if let Upper::Finite(u) = upper[j] {
                if !u.is_finite() {
                    return Err(MilpError::NonFinite { field: "upper" });
                }
            }
            if let (Lower::Finite(l), Upper::Finite(u)) = (lower[j], upper[j]) {
                if l > u {
                    return Err(MilpError::BoundOrder { j, lower: l, upper: u });
                }
            }
        }
        let mut a = BTreeMap::new();
        for (i, j, v) in entries {
            if i >= m || j >= n {
                return Err(MilpError::EntryOutOfRange { i, j, m, n });
            }
            if !v.is_finite() {
                return Err(MilpError::NonFinite { field: "A" });
            }
            if v == 0.0 {
                continue;
            }
            if a.insert((i, j), v).is_some() {
                return Err(MilpError::DuplicateEntry { i, j });
            }
        }
        Ok(MilpInstance {
            m,
            n,
            a,
            b,
            senses,
            c,
            lower,
            upper,
            integer_mask,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.m
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    /// Nonzero coefficients in deterministic row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.a.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.a.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn num_nonzeros(&self) -> usize {
        self.a.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn senses(&self) -> &[Sense] {
        &self.senses
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn lower_bounds(&self) -> &[Lower] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[Upper] {
        &self.upper
    }

    pub fn integer_mask(&self) -> &[bool] {
        &self.integer_mask
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.integer_mask[j]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest constraint/bound violation of `x` (integrality not included).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.m];
        for (i, j, v) in self.entries() {
            ax[i] += v * x[j];
        }
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let r = ax[i] - self.b[i];
            let viol = match self.senses[i] {
                Sense::Le => r.max(0.0),
                Sense::Eq => r.abs(),
                Sense::Ge => (-r).max(0.0),
            };
            worst = worst.max(viol);
        }
        for j in 0..self.n {
            if let Lower::Finite(l) = self.lower[j] {
                worst = worst.max(l - x[j]);
            }
            if let Upper::Finite(u) = self.upper[j] {
                worst = worst.max(x[j] - u);
            }
        }
        worst
    }
}

fn check_len(field: &'static str, got: usize, expected: usize) -> Result<(), MilpError> {
    if got != expected {
        Err(MilpError::LengthMismatch {
            field,
            got,
            expected,
        })
    } else {
        Ok(())
    }
}

/// A pair of bijections: `sigma_v` on constraint indices, `sigma_w` on variable
/// indices. Index `i` maps to `sigma_v[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    sigma_v: Vec<usize>,
    sigma_w: Vec<usize>,
}

#[derive(Debug, Error)]
#[error("not a bijection on 0..{len}")]
pub struct NotABijection {
    pub len: usize,
}

impl Permutation {
    pub fn new(sigma_v: Vec<usize>, sigma_w: Vec<usize>) -> Result<Self, NotABijection> {
        for s in [&sigma_v, &sigma_w] {
            let mut seen = vec![false; s.len()];
            for &i in s {
                if i >= s.len() || seen[i] {
                    return Err(NotABijection { len: s.len() });
                }
                seen[i] = true;
            }
        }
        Ok(Permutation { sigma_v, sigma_w })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Permutation {
            sigma_v: (0..m).collect(),
            sigma_w: (0..n).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut sigma_v = vec![0; self.sigma_v.len()];
        let mut sigma_w = vec![0; self.sigma_w.len()];
        for (i, &t) in self.sigma_v.iter().enumerate() {
            sigma_v[t] = i;
        }
        for (j, &t) in self.sigma_w.iter().enumerate() {
            sigma_w[t] = j;
        }
        Permutation { sigma_v, sigma_w }
    }

    pub fn v(&self, i: usize) -> usize {
        self.sigma_v[i]
    }

    pub fn w(&self, j: usize) -> usize {
        self.sigma_w[j]
    }

    pub fn v_len(&self) -> usize {
        self.sigma_v.len()
    }

    pub fn w_len(&self) -> usize {
        self.sigma_w.len()
    }

    /// Apply sigma_w to a variable-indexed vector: output[sigma_w(j)] = input[j].
    pub fn apply_w<T: Clone>(&self, xs: &[T]) -> Vec<T> {
        let mut out = vec![xs[0].clone(); xs.len()];
        for (j, x) in xs.iter().enumerate() {
            out[self.sigma_w[j]] = x.clone();
        }
        out
    }
}

/// Reorder rows by sigma_v and columns by sigma_w. Mirrors the graph-level
/// permutation action so label-invariance tests can run without graphs.
pub fn permute_instance(inst: &MilpInstance, p: &Permutation) -> Result<MilpInstance, MilpError> {
    if p.v_len() != inst.m || p.w_len() != inst.n {
        return Err(MilpError::DimensionMismatch {
            m: p.v_len(),
            n: p.w_len(),
            em: inst.m,
            en: inst.n,
        });
    }
    let (m, n) = (inst.m, inst.n);
    let mut b = vec![0.0; m];
    let mut senses = vec![Sense::Eq; m];
    for i in 0..m {
        b[p.v(i)] = inst.b[i];
        senses[p.v(i)] = inst.senses[i];
    }
    let mut c = vec![0.0; n];
    let mut lower = vec![Lower::NegInf; n];
    let mut upper = vec![Upper::PosInf; n];
    let mut integer_mask = vec![false; n];
    for j in 0..n {
        c[p.w(j)] = inst.c[j];
        lower[p.w(j)] = inst.lower[j];
        upper[p.w(j)] = inst.upper[j];
        integer_mask[p.w(j)] = inst.integer_mask[j];
    }
    let entries: Vec<_> = inst.entries().map(|(i, j, v)| (p.v(i), p.w(j), v)).collect();
    MilpInstance::new(m, n, entries, b, senses, c, lower, upper, integer_mask)
}
