//! Small hand-written instances used across tests and docs.

use crate::milp::{Lower, MilpInstance, Sense, Upper};

/// A 2-constraint, 2-variable instance whose graph refines to a discrete
/// coloring: min x1 + x2 s.t. x1 + 3*x2 >= 1, x1 + x2 >= 1, x1 <= 3,
/// x2 <= 5, x2 integer.
pub fn small_unfoldable() -> MilpInstance {
    MilpInstance::new(
        2,
        2,
        vec![(0, 0, 1.0), (0, 1, 3.0), (1, 0, 1.0), (1, 1, 1.0)],
        vec![1.0, 1.0],
        vec![Sense::Ge, Sense::Ge],
        vec![1.0, 1.0],
        vec![Lower::NegInf, Lower::NegInf],
        vec![Upper::Finite(3.0), Upper::Finite(5.0)],
        vec![false, true],
    )
    .unwrap()
}
