//! LTLf restraining bolts over the robot's action alphabet.
//!
//! Formulas are parsed, compiled to DFAs by memoized progression with
//! syntactic normalization, and monitored at runtime to produce the bolt
//! component of the reward. Each trace step carries exactly one action.

mod automaton;
mod bolt;
mod formula;
mod oracle;
mod parser;
mod progress;

pub use automaton::{BoltAutomaton, StateId, DEFAULT_STATE_BUDGET};
pub use bolt::{
    Bolt, BoltConfig, BoltEntry, BoltRuntime, BoltSet, BoltSpec, BoltStatus, DEFAULT_BOLT_REWARD,
    PAPER_BOLTS,
};
pub use formula::{Alphabet, Formula};
pub use oracle::semantic_check;
pub use parser::{parse, parse_unchecked};
pub use progress::progress;

pub type Result<T> = std::result::Result<T, LtlfError>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LtlfError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("automaton exceeds the state budget of {0}")]
    CompileBudget(usize),
}

/// Empty-trace truth of `f`; see [`Formula::eval_empty`].
pub fn eval_empty(f: &Formula) -> bool {
    f.eval_empty()
}

pub fn compile(f: &Formula, alphabet: &Alphabet) -> Result<BoltAutomaton> {
    BoltAutomaton::compile(f, alphabet)
}

pub fn accepts<S: AsRef<str>>(a: &BoltAutomaton, trace: &[S]) -> Result<bool> {
    a.accepts(trace)
}
