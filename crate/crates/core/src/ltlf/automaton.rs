use std::collections::{HashMap, VecDeque};

use super::formula::{Alphabet, Formula};
use super::progress::progress_unchecked;
use super::{LtlfError, Result};

pub const DEFAULT_STATE_BUDGET: usize = 10_000;

pub type StateId = usize;

/// DFA obtained by exhaustive progression of a formula. State `i` is the
/// normalized residual formula `states[i]`.
#[derive(Debug, Clone)]
pub struct BoltAutomaton {
    alphabet: Alphabet,
    states: Vec<Formula>,
    initial: StateId,
    // transitions[state][symbol index]
    transitions: Vec<Vec<StateId>>,
    accepting: Vec<bool>,
    dead: Vec<bool>,
}

impl BoltAutomaton {
    pub fn compile(f: &Formula, alphabet: &Alphabet) -> Result<Self> {
        Self::compile_with_budget(f, alphabet, DEFAULT_STATE_BUDGET)
    }

    pub fn compile_with_budget(f: &Formula, alphabet: &Alphabet, budget: usize) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(LtlfError::InvalidInput("alphabet must be nonempty".into()));
        }
        if let Some(bad) = f.atoms().into_iter().find(|a| alphabet.index_of(a).is_none()) {
            return Err(LtlfError::UnknownAtom(bad.to_string()));
        }
        let initial = f.normalize();
        let mut index: HashMap<Formula, StateId> = HashMap::new();
        let mut states = vec![initial.clone()];
        index.insert(initial, 0);
        let mut transitions: Vec<Vec<StateId>> = Vec::new();
        let mut queue = VecDeque::from([0]);

        while let Some(id) = queue.pop_front() {
            let mut row = Vec::with_capacity(alphabet.len());
            for symbol in alphabet.symbols() {
                let next = progress_unchecked(&states[id], symbol);
                let next_id = match index.get(&next) {
                    Some(&n) => n,
                    None => {
                        if states.len() >= budget {
                            return Err(LtlfError::CompileBudget(budget));
                        }
                        let n = states.len();
                        index.insert(next.clone(), n);
                        states.push(next);
                        queue.push_back(n);
                        n
                    }
                };
                row.push(next_id);
            }
            if transitions.len() <= id {
                transitions.resize(id + 1, Vec::new());
            }
            transitions[id] = row;
        }

        let accepting = states.iter().map(Formula::eval_empty).collect();
        let dead = states.iter().map(|s| *s == Formula::False).collect();
        Ok(BoltAutomaton {
            alphabet: alphabet.clone(),
            states,
            initial: 0,
            transitions,
            accepting,
            dead,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state_formula(&self, s: StateId) -> &Formula {
        &self.states[s]
    }

    pub fn is_accepting(&self, s: StateId) -> bool {
        self.accepting[s]
    }

    pub fn is_dead(&self, s: StateId) -> bool {
        self.dead[s]
    }

    /// Successor by symbol index.
    pub fn step_index(&self, s: StateId, symbol: usize) -> StateId {
        self.transitions[s][symbol]
    }

    pub fn step(&self, s: StateId, action: &str) -> Result<StateId> {
        let sym = self
            .alphabet
            .index_of(action)
            .ok_or_else(|| LtlfError::InvalidInput(format!("unknown action {action:?}")))?;
        Ok(self.step_index(s, sym))
    }

    /// States visited while reading `trace`, starting with the initial state.
    pub fn run<S: AsRef<str>>(&self, trace: &[S]) -> Result<Vec<StateId>> {
        let symbols = self.alphabet.resolve_trace(trace)?;
        let mut path = vec![self.initial];
        let mut s = self.initial;
        for sym in symbols {
            s = self.step_index(s, sym);
            path.push(s);
        }
        Ok(path)
    }

    pub fn accepts<S: AsRef<str>>(&self, trace: &[S]) -> Result<bool> {
        let path = self.run(trace)?;
        Ok(self.accepting[*path.last().expect("path holds the initial state")])
    }

    /// Acceptance over a trace of symbol indices.
    pub fn accepts_indices(&self, trace: &[usize]) -> bool {
        let last = trace.iter().fold(self.initial, |s, &sym| self.step_index(s, sym));
        self.accepting[last]
    }
}
