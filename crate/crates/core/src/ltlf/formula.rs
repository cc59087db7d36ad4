use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LtlfError, Result};

/// LTLf syntax tree over action names.
///
/// `And`/`Or` are n-ary so normalization can flatten, sort and dedup
/// operands. The derived `Ord` is the canonical operand order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(Box<Formula>),
    Globally(Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(vec![a, b])
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(vec![a, b])
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Next(f) | Formula::Eventually(f) | Formula::Globally(f) => {
                1 + f.depth()
            }
            Formula::Implies(a, b) => 1 + a.depth().max(b.depth()),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(Formula::depth).max().unwrap_or(0),
        }
    }

    /// Visits every atom name in the tree.
    pub fn atoms(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => out.push(a),
            Formula::Not(f) | Formula::Next(f) | Formula::Eventually(f) | Formula::Globally(f) => {
                f.collect_atoms(out)
            }
            Formula::Implies(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_atoms(out)),
        }
    }

    /// Truth over the empty remaining trace: atoms, `X` and `F` are false,
    /// `G` is vacuously true, connectives compose.
    pub fn eval_empty(&self) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(_) | Formula::Next(_) | Formula::Eventually(_) => false,
            Formula::Globally(_) => true,
            Formula::Not(f) => !f.eval_empty(),
            Formula::And(fs) => fs.iter().all(Formula::eval_empty),
            Formula::Or(fs) => fs.iter().any(Formula::eval_empty),
            Formula::Implies(a, b) => !a.eval_empty() || b.eval_empty(),
        }
    }

    /// Syntactic simplification: constant folding, double negation, n-ary
    /// flattening, sorted and deduplicated operands, complementary pairs.
    /// Temporal operators are kept as written apart from their operands.
    pub fn normalize(&self) -> Formula {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => self.clone(),
            Formula::Not(f) => negate(f.normalize()),
            Formula::And(fs) => conjoin(fs.iter().map(Formula::normalize)),
            Formula::Or(fs) => disjoin(fs.iter().map(Formula::normalize)),
            Formula::Implies(a, b) => match (a.normalize(), b.normalize()) {
                (Formula::False, _) | (_, Formula::True) => Formula::True,
                (Formula::True, b) => b,
                (a, Formula::False) => negate(a),
                (a, b) if a == b => Formula::True,
                (a, b) => Formula::implies(a, b),
            },
            Formula::Next(f) => match f.normalize() {
                Formula::False => Formula::False,
                g => Formula::next(g),
            },
            Formula::Eventually(f) => match f.normalize() {
                Formula::False => Formula::False,
                g => Formula::eventually(g),
            },
            Formula::Globally(f) => match f.normalize() {
                Formula::True => Formula::True,
                g => Formula::globally(g),
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(_) => 2,
            Formula::And(_) => 3,
            _ => 4,
        }
    }
}

pub(super) fn negate(f: Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Not(inner) => *inner,
        g => Formula::not(g),
    }
}

fn complementary(sorted: &[Formula]) -> bool {
    sorted.iter().any(|f| match f {
        Formula::Not(inner) => sorted.binary_search(inner).is_ok(),
        _ => false,
    })
}

/// Normalized n-ary conjunction of already-normalized operands.
pub(super) fn conjoin(operands: impl IntoIterator<Item = Formula>) -> Formula {
    let mut flat = Vec::new();
    for f in operands {
        match f {
            Formula::True => {}
            Formula::False => return Formula::False,
            Formula::And(inner) => flat.extend(inner),
            g => flat.push(g),
        }
    }
    flat.sort();
    flat.dedup();
    if complementary(&flat) {
        return Formula::False;
    }
    match flat.len() {
        0 => Formula::True,
        1 => flat.pop().unwrap(),
        _ => Formula::And(flat),
    }
}

/// Normalized n-ary disjunction of already-normalized operands.
pub(super) fn disjoin(operands: impl IntoIterator<Item = Formula>) -> Formula {
    let mut flat = Vec::new();
    for f in operands {
        match f {
            Formula::False => {}
            Formula::True => return Formula::True,
            Formula::Or(inner) => flat.extend(inner),
            g => flat.push(g),
        }
    }
    flat.sort();
    flat.dedup();
    if complementary(&flat) {
        return Formula::True;
    }
    match flat.len() {
        0 => Formula::False,
        1 => flat.pop().unwrap(),
        _ => Formula::Or(flat),
    }
}

impl fmt::Display for Formula {
    /// Prints in the parser's concrete syntax; `parse(to_string(f)) == f`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(out: &mut fmt::Formatter<'_>, child: &Formula, min_prec: u8) -> fmt::Result {
            if child.precedence() < min_prec {
                write!(out, "({child})")
            } else {
                write!(out, "{child}")
            }
        }
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(inner) => {
                write!(f, "!")?;
                operand(f, inner, 4)
            }
            Formula::Next(inner) => write!(f, "X({inner})"),
            Formula::Eventually(inner) => write!(f, "F({inner})"),
            Formula::Globally(inner) => write!(f, "G({inner})"),
            Formula::And(fs) | Formula::Or(fs) => {
                let (sep, prec) = if matches!(self, Formula::And(_)) { (" & ", 3) } else { (" | ", 2) };
                for (i, child) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    // nested same-operator nodes keep their grouping
                    operand(f, child, prec + 1)?;
                }
                Ok(())
            }
            Formula::Implies(a, b) => {
                operand(f, a, 2)?;
                write!(f, " -> ")?;
                operand(f, b, 1)
            }
        }
    }
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Finite set of action symbols, each with an index, plus alias spellings
/// that resolve to a canonical symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
    #[serde(default)]
    aliases: BTreeMap<String, usize>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(LtlfError::InvalidInput("alphabet must be nonempty".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(LtlfError::InvalidInput(format!("duplicate symbol {s}")));
            }
            if !is_identifier(s) || matches!(s.as_str(), "G" | "F" | "X" | "true" | "false") {
                return Err(LtlfError::InvalidInput(format!("{s:?} is not a valid symbol name")));
            }
        }
        Ok(Alphabet { symbols, aliases: BTreeMap::new() })
    }

    /// Adds an alternative spelling for `symbol`.
    pub fn with_alias(mut self, alias: &str, symbol: &str) -> Result<Self> {
        let idx = self
            .position(symbol)
            .ok_or_else(|| LtlfError::UnknownAtom(symbol.to_string()))?;
        self.aliases.insert(alias.to_string(), idx);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    /// Index of a symbol or alias.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.position(name).or_else(|| self.aliases.get(name).copied())
    }

    /// Canonical spelling of a symbol or alias.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        self.index_of(name).map(|i| self.symbols[i].as_str())
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    /// Resolves a trace of names to symbol indices.
    pub fn resolve_trace<S: AsRef<str>>(&self, trace: &[S]) -> Result<Vec<usize>> {
        trace
            .iter()
            .map(|s| {
                self.index_of(s.as_ref())
                    .ok_or_else(|| LtlfError::InvalidInput(format!("unknown action {:?}", s.as_ref())))
            })
            .collect()
    }

    /// Restricts the alphabet to the listed symbols, keeping aliases that
    /// point into the subset.
    pub fn subset(&self, names: &[&str]) -> Result<Alphabet> {
        let canon: Vec<String> = names
            .iter()
            .map(|n| {
                self.canonical(n)
                    .map(str::to_string)
                    .ok_or_else(|| LtlfError::UnknownAtom(n.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut sub = Alphabet::new(canon)?;
        for (alias, &idx) in &self.aliases {
            if let Some(pos) = sub.position(&self.symbols[idx]) {
                sub.aliases.insert(alias.clone(), pos);
            }
        }
        Ok(sub)
    }
}

pub(super) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
