//! Scalar training objectives.

use crate::error::Result;
use crate::tensor::{Tape, Var};

/// Mean `softplus(x) - x·t` over all logits, targets in {0, 1}.
pub fn bce_with_logits(tape: &mut Tape, logits: Var, targets: &[f64]) -> Result<Var> {
    tape.bce_with_logits(logits, targets)
}

/// Mean `logsumexp(row) - row[target]` over a `[batch, classes]` (or
/// `[classes]`) logit tensor.
pub fn cross_entropy(tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    tape.cross_entropy(logits, targets)
}
