//! Restraining bolts: formulas with rewards, monitored step by step.
//!
//! A bolt pays `-reward` once, on the step its automaton enters the dead
//! state, and `+reward` at episode end if its final state is accepting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::automaton::{BoltAutomaton, StateId};
use super::formula::{Alphabet, Formula};
use super::parser::parse;
use super::{LtlfError, Result};

/// The four constraints used on the robot, in the order the config lists them.
pub const PAPER_BOLTS: [&str; 4] = [
    "G(ask_question -> X !ask_question)",
    "G(wave_hands -> X !wave_hands)",
    "F(ask_question)",
    "F(wave_hands)",
];

pub const DEFAULT_BOLT_REWARD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltEntry {
    pub formula: String,
    pub reward: f64,
}

/// Bolt configuration file: `{"bolts": [{"formula": "...", "reward": 10.0}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltConfig {
    pub bolts: Vec<BoltEntry>,
}

impl Default for BoltConfig {
    fn default() -> Self {
        BoltConfig::paper_defaults(DEFAULT_BOLT_REWARD)
    }
}

impl BoltConfig {
    pub fn paper_defaults(reward: f64) -> Self {
        BoltConfig {
            bolts: PAPER_BOLTS
                .iter()
                .map(|f| BoltEntry { formula: f.to_string(), reward })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LtlfError::InvalidInput(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LtlfError::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn specs(&self, alphabet: &Alphabet) -> Result<Vec<BoltSpec>> {
        self.bolts
            .iter()
            .map(|b| BoltSpec::new(parse(&b.formula, alphabet)?, b.reward))
            .collect()
    }

    pub fn compile(&self, alphabet: &Alphabet) -> Result<BoltSet> {
        BoltSet::compile(self.specs(alphabet)?, alphabet)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoltSpec {
    pub formula: Formula,
    pub reward: f64,
}

impl BoltSpec {
    pub fn new(formula: Formula, reward: f64) -> Result<Self> {
        if !(reward > 0.0) || !reward.is_finite() {
            return Err(LtlfError::InvalidInput(format!("bolt reward must be > 0, got {reward}")));
        }
        Ok(BoltSpec { formula, reward })
    }
}

#[derive(Debug, Clone)]
pub struct Bolt {
    pub spec: BoltSpec,
    pub automaton: BoltAutomaton,
}

/// Compiled bolts sharing one alphabet. Immutable once built.
#[derive(Debug, Clone)]
pub struct BoltSet {
    alphabet: Alphabet,
    bolts: Vec<Bolt>,
}

/// Live monitoring state: one automaton state per bolt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoltRuntime {
    pub states: Vec<StateId>,
}

/// Per-bolt snapshot for logs and telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoltStatus {
    pub state: StateId,
    pub violated: bool,
    pub accepting: bool,
}

impl BoltSet {
    pub fn compile(specs: Vec<BoltSpec>, alphabet: &Alphabet) -> Result<Self> {
        let bolts = specs
            .into_iter()
            .map(|spec| {
                let automaton = BoltAutomaton::compile(&spec.formula, alphabet)?;
                Ok(Bolt { spec, automaton })
            })
            .collect::<Result<_>>()?;
        Ok(BoltSet { alphabet: alphabet.clone(), bolts })
    }

    pub fn empty(alphabet: &Alphabet) -> Self {
        BoltSet { alphabet: alphabet.clone(), bolts: Vec::new() }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn bolts(&self) -> &[Bolt] {
        &self.bolts
    }

    pub fn len(&self) -> usize {
        self.bolts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bolts.is_empty()
    }

    /// Number of automaton states of each bolt, in order.
    pub fn state_counts(&self) -> Vec<usize> {
        self.bolts.iter().map(|b| b.automaton.num_states()).collect()
    }

    pub fn start(&self) -> BoltRuntime {
        BoltRuntime { states: self.bolts.iter().map(|b| b.automaton.initial()).collect() }
    }

    /// Advances every bolt by one action. Returns the new runtime and the
    /// summed penalty of bolts that died on this step.
    pub fn step(&self, rt: &BoltRuntime, action: &str) -> Result<(BoltRuntime, f64)> {
        let sym = self
            .alphabet
            .index_of(action)
            .ok_or_else(|| LtlfError::InvalidInput(format!("unknown action {action:?}")))?;
        Ok(self.step_index(rt, sym))
    }

    pub fn step_index(&self, rt: &BoltRuntime, symbol: usize) -> (BoltRuntime, f64) {
        let mut penalty = 0.0;
        let states = self
            .bolts
            .iter()
            .zip(&rt.states)
            .map(|(bolt, &s)| {
                let a = &bolt.automaton;
                let next = a.step_index(s, symbol);
                if a.is_dead(next) && !a.is_dead(s) {
                    penalty -= bolt.spec.reward;
                }
                next
            })
            .collect();
        (BoltRuntime { states }, penalty)
    }

    /// End-of-episode settlement: `+reward` for every accepting bolt.
    pub fn terminal(&self, rt: &BoltRuntime) -> f64 {
        self.bolts
            .iter()
            .zip(&rt.states)
            .filter(|(b, &s)| b.automaton.is_accepting(s))
            .map(|(b, _)| b.spec.reward)
            .sum()
    }

    pub fn status(&self, rt: &BoltRuntime) -> Vec<BoltStatus> {
        self.bolts
            .iter()
            .zip(&rt.states)
            .map(|(b, &s)| BoltStatus {
                state: s,
                violated: b.automaton.is_dead(s),
                accepting: b.automaton.is_accepting(s),
            })
            .collect()
    }

    pub fn any_violated(&self, rt: &BoltRuntime) -> bool {
        self.status(rt).iter().any(|s| s.violated)
    }

    pub fn all_accepting(&self, rt: &BoltRuntime) -> bool {
        self.status(rt).iter().all(|s| s.accepting)
    }
}
