//! Single-tape Turing machines: JSON description, validation and the
//! reference simulator whose trace is the oracle for compiled transformers.

mod simulate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simulate::{last_writer, simulate, simulate_from, TmTrace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TuringError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("no transition for state `{state}` reading `{symbol}`")]
    PartialDelta { state: String, symbol: String },
    #[error("blank symbol `{0}` is not in the alphabet")]
    BlankNotInAlphabet(String),
    #[error("states {0:?} are both accepting and rejecting")]
    TerminalOverlap(Vec<String>),
    #[error("symbol `{0}` is not an input symbol of this machine")]
    SymbolNotInAlphabet(String),
    #[error("machine did not reach a terminal state within {0} steps")]
    NotTerminated(usize),
    #[error("head moved left of cell 1 at step {0}")]
    LeftEdgeViolation(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Move {
    pub fn offset(self) -> i64 {
        match self {
            Move::Left => -1,
            Move::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub next: usize,
    pub write: usize,
    pub mv: Move,
}

/// Validated machine. States and symbols are referred to by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmSpec {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub blank: usize,
    /// Symbols allowed in inputs; defaults to every non-blank symbol.
    pub input_alphabet: Vec<usize>,
    pub init: usize,
    pub accept: Vec<bool>,
    pub reject: Vec<bool>,
    /// `delta[z * |A| + a]`; `None` only for terminal states.
    delta: Vec<Option<Transition>>,
    pub time_bound: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    state: String,
    read: String,
    next: String,
    write: String,
    #[serde(rename = "move")]
    mv: Move,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    states: Vec<String>,
    alphabet: Vec<String>,
    blank: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_alphabet: Option<Vec<String>>,
    init: String,
    accept: Vec<String>,
    reject: Vec<String>,
    delta: Vec<RawRow>,
    time_bound: usize,
}

fn index_of(names: &[String], what: &str) -> Result<HashMap<String, usize>, TuringError> {
    let mut m = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if m.insert(n.clone(), i).is_some() {
            return Err(TuringError::SchemaError(format!("duplicate {what} `{n}`")));
        }
    }
    Ok(m)
}

pub fn parse_tm(text: &str) -> Result<TmSpec, TuringError> {
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| TuringError::SchemaError(e.to_string()))?;
    TmSpec::from_raw(raw)
}

impl TmSpec {
    fn from_raw(raw: RawSpec) -> Result<Self, TuringError> {
        let sidx = index_of(&raw.states, "state")?;
        let aidx = index_of(&raw.alphabet, "symbol")?;
        let state = |s: &str| {
            sidx.get(s).copied().ok_or_else(|| TuringError::SchemaError(format!("unknown state `{s}`")))
        };
        let symbol = |s: &str| {
            aidx.get(s).copied().ok_or_else(|| TuringError::SchemaError(format!("unknown symbol `{s}`")))
        };
        let blank = *aidx.get(&raw.blank).ok_or_else(|| TuringError::BlankNotInAlphabet(raw.blank.clone()))?;
        let init = state(&raw.init)?;
        let k = raw.states.len();
        let na = raw.alphabet.len();

        let mut accept = vec![false; k];
        let mut reject = vec![false; k];
        for s in &raw.accept {
            accept[state(s)?] = true;
        }
        for s in &raw.reject {
            reject[state(s)?] = true;
        }
        let overlap: Vec<String> =
            (0..k).filter(|&z| accept[z] && reject[z]).map(|z| raw.states[z].clone()).collect();
        if !overlap.is_empty() {
            return Err(TuringError::TerminalOverlap(overlap));
        }
        if accept[init] || reject[init] {
            return Err(TuringError::SchemaError("initial state must not be terminal".into()));
        }
        if raw.time_bound == 0 {
            return Err(TuringError::SchemaError("time_bound must be positive".into()));
        }

        let mut delta: Vec<Option<Transition>> = vec![None; k * na];
        for row in &raw.delta {
            let (z, a) = (state(&row.state)?, symbol(&row.read)?);
            let t = Transition { next: state(&row.next)?, write: symbol(&row.write)?, mv: row.mv };
            if delta[z * na + a].replace(t).is_some() {
                return Err(TuringError::SchemaError(format!(
                    "duplicate transition for ({}, {})",
                    row.state, row.read
                )));
            }
        }
        for z in 0..k {
            if accept[z] || reject[z] {
                // Terminal rows are overridden by the self-loop convention.
                for a in 0..na {
                    delta[z * na + a] = None;
                }
                continue;
            }
            for a in 0..na {
                if delta[z * na + a].is_none() {
                    return Err(TuringError::PartialDelta {
                        state: raw.states[z].clone(),
                        symbol: raw.alphabet[a].clone(),
                    });
                }
            }
        }

        let input_alphabet = match &raw.input_alphabet {
            Some(syms) => {
                let mut v = Vec::new();
                for s in syms {
                    let a = symbol(s)?;
                    if a == blank {
                        return Err(TuringError::SchemaError("blank cannot be an input symbol".into()));
                    }
                    v.push(a);
                }
                v
            }
            None => (0..na).filter(|&a| a != blank).collect(),
        };

        Ok(TmSpec {
            states: raw.states,
            alphabet: raw.alphabet,
            blank,
            input_alphabet,
            init,
            accept,
            reject,
            delta,
            time_bound: raw.time_bound,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }
    pub fn num_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_terminal(&self, z: usize) -> bool {
        self.accept[z] || self.reject[z]
    }

    /// Transition with terminal states looping in place: (z, a) ↦ (z, a, R).
    pub fn step(&self, z: usize, a: usize) -> Transition {
        match self.delta[z * self.num_symbols() + a] {
            Some(t) => t,
            None => Transition { next: z, write: a, mv: Move::Right },
        }
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|s| s == name)
    }

    /// Splits an input into symbols: characters when every symbol is a
    /// single character, whitespace-separated tokens otherwise.
    pub fn tokenize(&self, input: &str) -> Result<Vec<usize>, TuringError> {
        let single = self.alphabet.iter().all(|s| s.chars().count() == 1);
        let toks: Vec<String> = if single {
            input.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
        } else {
            input.split_whitespace().map(String::from).collect()
        };
        toks.iter()
            .map(|t| {
                self.symbol_index(t)
                    .filter(|a| self.input_alphabet.contains(a))
                    .ok_or_else(|| TuringError::SymbolNotInAlphabet(t.clone()))
            })
            .collect()
    }

    pub fn render(&self, x: &[usize]) -> String {
        let single = self.alphabet.iter().all(|s| s.chars().count() == 1);
        let parts: Vec<&str> = x.iter().map(|&a| self.alphabet[a].as_str()).collect();
        if single {
            parts.concat()
        } else {
            parts.join(" ")
        }
    }

    /// Every input over the input alphabet of length at most `max_len`,
    /// shortest first, then lexicographic in alphabet order.
    pub fn all_inputs(&self, max_len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for w in &frontier {
                for &a in &self.input_alphabet {
                    let mut v: Vec<usize> = w.clone();
                    v.push(a);
                    next.push(v);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    /// Adds a fresh state `name` whose every transition is (init, a, R),
    /// and makes it the initial state.
    pub fn with_pre_state(&self, name: &str) -> TmSpec {
        let mut s = self.clone();
        let mut n = name.to_string();
        while s.states.contains(&n) {
            n.push('_');
        }
        let na = s.num_symbols();
        s.states.push(n);
        s.accept.push(false);
        s.reject.push(false);
        for a in 0..na {
            s.delta.push(Some(Transition { next: self.init, write: a, mv: Move::Right }));
        }
        s.init = s.states.len() - 1;
        s
    }

    pub fn to_json(&self) -> String {
        let mut delta = Vec::new();
        for z in 0..self.num_states() {
            for a in 0..self.num_symbols() {
                if let Some(t) = self.delta[z * self.num_symbols() + a] {
                    delta.push(RawRow {
                        state: self.states[z].clone(),
                        read: self.alphabet[a].clone(),
                        next: self.states[t.next].clone(),
                        write: self.alphabet[t.write].clone(),
                        mv: t.mv,
                    });
                }
            }
        }
        let default_inputs: Vec<usize> = (0..self.num_symbols()).filter(|&a| a != self.blank).collect();
        let raw = RawSpec {
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            blank: self.alphabet[self.blank].clone(),
            input_alphabet: (self.input_alphabet != default_inputs)
                .then(|| self.input_alphabet.iter().map(|&a| self.alphabet[a].clone()).collect()),
            init: self.states[self.init].clone(),
            accept: (0..self.num_states()).filter(|&z| self.accept[z]).map(|z| self.states[z].clone()).collect(),
            reject: (0..self.num_states()).filter(|&z| self.reject[z]).map(|z| self.states[z].clone()).collect(),
            delta,
            time_bound: self.time_bound,
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }
}

/// Machines shipped with the crate.
pub mod corpus {
    use super::{parse_tm, TmSpec};

    pub const PARITY: &str = include_str!("../../corpus/machines/parity.json");
    pub const PALINDROME: &str = include_str!("../../corpus/machines/palindrome.json");
    pub const ANBN: &str = include_str!("../../corpus/machines/anbn.json");

    pub fn parity() -> TmSpec {
        parse_tm(PARITY).expect("corpus machine")
    }
    pub fn palindrome() -> TmSpec {
        parse_tm(PALINDROME).expect("corpus machine")
    }
    pub fn anbn() -> TmSpec {
        parse_tm(ANBN).expect("corpus machine")
    }

    pub fn all() -> Vec<(&'static str, TmSpec)> {
        vec![("parity", parity()), ("palindrome", palindrome()), ("anbn", anbn())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_parses() {
        let m = corpus::parity();
        assert_eq!(m.num_states(), 4);
        assert_eq!(m.alphabet, vec!["0", "1", "_"]);
        assert_eq!(parse_tm(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn corpus_machines_round_trip() {
        for (_, m) in corpus::all() {
            assert!(m.num_states() <= 8);
            assert_eq!(parse_tm(&m.to_json()).unwrap(), m);
        }
    }

    #[test]
    fn missing_row_is_partial() {
        let text = corpus::PARITY.replace(
            r#"{"state": "q_odd", "read": "_", "next": "rej", "write": "_", "move": "R"}"#,
            r#"{"state": "acc", "read": "_", "next": "acc", "write": "_", "move": "R"}"#,
        );
        assert_eq!(
            parse_tm(&text).unwrap_err(),
            TuringError::PartialDelta { state: "q_odd".into(), symbol: "_".into() }
        );
    }

    #[test]
    fn validation_errors() {
        let overlap = corpus::PARITY.replace(r#""reject": ["rej"]"#, r#""reject": ["rej", "acc"]"#);
        assert_eq!(parse_tm(&overlap).unwrap_err(), TuringError::TerminalOverlap(vec!["acc".into()]));
        let blank = corpus::PARITY.replace(r#""blank": "_""#, r#""blank": "B""#);
        assert_eq!(parse_tm(&blank).unwrap_err(), TuringError::BlankNotInAlphabet("B".into()));
        assert!(matches!(parse_tm("{}").unwrap_err(), TuringError::SchemaError(_)));
        let bad_move = corpus::PARITY.replacen(r#""move": "R""#, r#""move": "S""#, 1);
        assert!(matches!(parse_tm(&bad_move).unwrap_err(), TuringError::SchemaError(_)));
    }

    #[test]
    fn tokenize_rejects_blank_and_unknown() {
        let m = corpus::parity();
        assert_eq!(m.tokenize("101").unwrap(), vec![1, 0, 1]);
        assert_eq!(m.tokenize("1_").unwrap_err(), TuringError::SymbolNotInAlphabet("_".into()));
        assert_eq!(m.tokenize("2").unwrap_err(), TuringError::SymbolNotInAlphabet("2".into()));
        let ab = corpus::anbn();
        assert!(ab.tokenize("aX").is_err());
    }

    #[test]
    fn input_enumeration_counts() {
        assert_eq!(corpus::parity().all_inputs(6).len(), 127);
        assert_eq!(corpus::anbn().all_inputs(6).len(), 127);
    }
}
