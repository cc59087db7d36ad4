use super::formula::{conjoin, disjoin, negate, Alphabet, Formula};
use super::{LtlfError, Result};

/// One-step residual of `f` after the trace emits `action`.
///
/// Exactly one action holds per step, so an atom progresses to `true` iff it
/// names the action. The result is normalized.
pub fn progress(f: &Formula, action: &str, alphabet: &Alphabet) -> Result<Formula> {
    let canon = alphabet
        .canonical(action)
        .ok_or_else(|| LtlfError::InvalidInput(format!("action {action:?} not in alphabet")))?;
    Ok(progress_unchecked(f, canon))
}

pub(super) fn progress_unchecked(f: &Formula, action: &str) -> Formula {
    step(f, action).normalize()
}

fn step(f: &Formula, action: &str) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(p) => {
            if p == action {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Not(g) => negate(step(g, action)),
        Formula::And(gs) => conjoin(gs.iter().map(|g| step(g, action))),
        Formula::Or(gs) => disjoin(gs.iter().map(|g| step(g, action))),
        Formula::Implies(a, b) => Formula::implies(step(a, action), step(b, action)).normalize(),
        Formula::Next(g) => g.normalize(),
        Formula::Eventually(g) => disjoin([step(g, action), f.normalize()]),
        Formula::Globally(g) => conjoin([step(g, action), f.normalize()]),
    }
}
