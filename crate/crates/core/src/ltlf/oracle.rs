//! Direct recursive LTLf satisfaction, used to cross-check compiled automata.
//!
//! Position `i` ranges over `0..=len`; the position one past the last action
//! is the empty suffix and is judged by [`Formula::eval_empty`]. So `X φ` at
//! the last action holds iff `φ` holds on the empty suffix, `F` ranges over
//! real positions only, and `G` is vacuous past the end.

use super::formula::Formula;

pub fn semantic_check<S: AsRef<str>>(f: &Formula, trace: &[S]) -> bool {
    let trace: Vec<&str> = trace.iter().map(AsRef::as_ref).collect();
    holds(f, &trace, 0)
}

fn holds(f: &Formula, trace: &[&str], i: usize) -> bool {
    if i >= trace.len() {
        return f.eval_empty();
    }
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(p) => trace[i] == p,
        Formula::Not(g) => !holds(g, trace, i),
        Formula::And(gs) => gs.iter().all(|g| holds(g, trace, i)),
        Formula::Or(gs) => gs.iter().any(|g| holds(g, trace, i)),
        Formula::Implies(a, b) => !holds(a, trace, i) || holds(b, trace, i),
        Formula::Next(g) => holds(g, trace, i + 1),
        Formula::Eventually(g) => (i..trace.len()).any(|j| holds(g, trace, j)),
        Formula::Globally(g) => (i..trace.len()).all(|j| holds(g, trace, j)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltlf::parser::parse_unchecked;

    fn check(text: &str, trace: &[&str]) -> bool {
        semantic_check(&parse_unchecked(text).unwrap(), trace)
    }

    #[test]
    fn paper_bolt_examples() {
        assert!(!check("G(q -> X !q)", &["q", "q"]));
        assert!(check("G(q -> X !q)", &["q", "c", "q"]));
        assert!(check("F(q)", &["c", "c", "q"]));
        assert!(!check("F(q)", &["c", "c"]));
        assert!(check("G(w -> X !w)", &["w", "c", "w", "c"]));
    }

    #[test]
    fn empty_trace_uses_eval_empty() {
        for text in ["G q", "F q", "!q", "X q", "true", "q -> F q"] {
            let f = parse_unchecked(text).unwrap();
            assert_eq!(semantic_check::<&str>(&f, &[]), f.eval_empty(), "{text}");
        }
    }

    #[test]
    fn next_at_last_position_judged_on_empty_suffix() {
        assert!(!check("X q", &["c"]));
        assert!(check("X !q", &["c"]));
        assert!(check("X q", &["c", "q"]));
    }
}
