//! Boolean circuits: netlist parsing, layering and reference evaluation.

pub mod corpus;
mod layered;
mod parse;
mod random;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use layered::{layerize, LayeredCircuit, LayeredGate};
pub use parse::parse_circuit;
pub use random::{random_circuit, RandomCircuitParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Or,
    Not,
    Id,
    Input,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::And | GateKind::Or => 2,
            GateKind::Not | GateKind::Id => 1,
            GateKind::Input => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Not => "NOT",
            GateKind::Id => "ID",
            GateKind::Input => "INPUT",
        }
    }

    /// Kinds allowed on a `gate` line.
    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "AND" => Some(GateKind::And),
            "OR" => Some(GateKind::Or),
            "NOT" => Some(GateKind::Not),
            "ID" => Some(GateKind::Id),
            _ => None,
        }
    }

    pub fn apply(self, args: &[bool]) -> bool {
        match self {
            GateKind::And => args[0] && args[1],
            GateKind::Or => args[0] || args[1],
            GateKind::Not => !args[0],
            GateKind::Id => args[0],
            GateKind::Input => unreachable!("input gates carry no operation"),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("{at}: unknown gate kind `{kind}`")]
    UnknownGateKind { kind: String, at: Pos },
    #[error("{at}: undeclared argument `{id}`")]
    UndeclaredArg { id: String, at: Pos },
    #[error("{at}: duplicate id `{id}`")]
    DuplicateId { id: String, at: Pos },
    #[error("missing output line")]
    MissingOutput,
    #[error("{at}: {kind} takes {expected} argument(s), found {found}")]
    BadArity { kind: GateKind, expected: usize, found: usize, at: Pos },
    #[error("{at}: {msg}")]
    Syntax { msg: String, at: Pos },
    #[error("input has {got} bits but the circuit has {expected} inputs")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub id: String,
    pub kind: GateKind,
    /// Indices of earlier nodes.
    pub args: Vec<usize>,
}

/// Single-output DAG. Nodes are stored in declaration order, which is a
/// topological order because arguments must be declared first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    nodes: Vec<Gate>,
    inputs: Vec<usize>,
    output: usize,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Circuit {
    /// Builds a circuit from named parts; used by tests and generators.
    pub fn build(
        inputs: &[&str],
        gates: &[(&str, GateKind, &[&str])],
        output: &str,
    ) -> Result<Self, CircuitError> {
        let mut b = CircuitBuilder::default();
        b.inputs(inputs.iter().map(|s| s.to_string()), Pos::default())?;
        for (id, kind, args) in gates {
            b.gate(id, *kind, args, Pos::default(), &[])?;
        }
        b.finish(Some((output.to_string(), Pos::default())))
    }

    pub fn nodes(&self) -> &[Gate] {
        &self.nodes
    }
    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }
    pub fn output(&self) -> usize {
        self.output
    }
    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }
    pub fn gate_count(&self) -> usize {
        self.nodes.len() - self.inputs.len()
    }

    pub fn evaluate(&self, x: &[bool]) -> Result<bool, CircuitError> {
        if x.len() != self.inputs.len() {
            return Err(CircuitError::LengthMismatch { expected: self.inputs.len(), got: x.len() });
        }
        let mut vals = vec![false; self.nodes.len()];
        let mut next_input = 0;
        for (i, g) in self.nodes.iter().enumerate() {
            vals[i] = if g.kind == GateKind::Input {
                next_input += 1;
                x[next_input - 1]
            } else {
                let a: Vec<bool> = g.args.iter().map(|&j| vals[j]).collect();
                g.kind.apply(&a)
            };
        }
        Ok(vals[self.output])
    }

    /// Netlist text; `parse_circuit(&c.to_netlist())` reproduces `c`.
    pub fn to_netlist(&self) -> String {
        let mut s = String::from("inputs");
        for &i in &self.inputs {
            s.push(' ');
            s.push_str(&self.nodes[i].id);
        }
        s.push('\n');
        for g in self.nodes.iter().filter(|g| g.kind != GateKind::Input) {
            s.push_str(&format!("gate {} = {}", g.id, g.kind));
            for &a in &g.args {
                s.push(' ');
                s.push_str(&self.nodes[a].id);
            }
            s.push('\n');
        }
        s.push_str(&format!("output {}\n", self.nodes[self.output].id));
        s
    }
}

/// Incremental validator shared by the parser and `Circuit::build`.
#[derive(Default)]
pub(crate) struct CircuitBuilder {
    nodes: Vec<Gate>,
    inputs: Vec<usize>,
    index: HashMap<String, usize>,
    have_inputs: bool,
}

impl CircuitBuilder {
    fn declare(&mut self, id: String, kind: GateKind, args: Vec<usize>, at: Pos) -> Result<usize, CircuitError> {
        if !is_identifier(&id) {
            return Err(CircuitError::Syntax { msg: format!("invalid identifier `{id}`"), at });
        }
        if self.index.contains_key(&id) {
            return Err(CircuitError::DuplicateId { id, at });
        }
        let n = self.nodes.len();
        self.index.insert(id.clone(), n);
        self.nodes.push(Gate { id, kind, args });
        Ok(n)
    }

    pub(crate) fn inputs(&mut self, ids: impl IntoIterator<Item = String>, at: Pos) -> Result<(), CircuitError> {
        if self.have_inputs {
            return Err(CircuitError::Syntax { msg: "second `inputs` line".into(), at });
        }
        self.have_inputs = true;
        for id in ids {
            let n = self.declare(id, GateKind::Input, Vec::new(), at)?;
            self.inputs.push(n);
        }
        if self.inputs.is_empty() {
            return Err(CircuitError::Syntax { msg: "`inputs` needs at least one id".into(), at });
        }
        Ok(())
    }

    /// `arg_pos` gives per-argument positions when available.
    pub(crate) fn gate(
        &mut self,
        id: &str,
        kind: GateKind,
        args: &[&str],
        at: Pos,
        arg_pos: &[Pos],
    ) -> Result<(), CircuitError> {
        if args.len() != kind.arity() {
            return Err(CircuitError::BadArity { kind, expected: kind.arity(), found: args.len(), at });
        }
        let mut resolved = Vec::with_capacity(args.len());
        for (k, a) in args.iter().enumerate() {
            match self.index.get(*a) {
                Some(&j) => resolved.push(j),
                None => {
                    return Err(CircuitError::UndeclaredArg {
                        id: a.to_string(),
                        at: arg_pos.get(k).copied().unwrap_or(at),
                    })
                }
            }
        }
        self.declare(id.to_string(), kind, resolved, at)?;
        Ok(())
    }

    pub(crate) fn finish(self, output: Option<(String, Pos)>) -> Result<Circuit, CircuitError> {
        let (out, at) = output.ok_or(CircuitError::MissingOutput)?;
        let &output = self.index.get(&out).ok_or(CircuitError::UndeclaredArg { id: out, at })?;
        if !self.have_inputs {
            return Err(CircuitError::Syntax { msg: "missing `inputs` line".into(), at: Pos::default() });
        }
        Ok(Circuit { nodes: self.nodes, inputs: self.inputs, output })
    }
}

/// All bit-vectors of length `r` in counting order (bit 0 is the first input).
pub fn all_inputs(r: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..(1u64 << r)).map(move |v| (0..r).map(|i| (v >> (r - 1 - i)) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_tables() {
        let and = Circuit::build(&["a", "b"], &[("g", GateKind::And, &["a", "b"])], "g").unwrap();
        let or = Circuit::build(&["a", "b"], &[("g", GateKind::Or, &["a", "b"])], "g").unwrap();
        assert!(and.evaluate(&[true, true]).unwrap());
        assert!(!and.evaluate(&[false, true]).unwrap());
        assert!(!or.evaluate(&[false, false]).unwrap());
        assert!(or.evaluate(&[true, false]).unwrap());
    }

    #[test]
    fn majority_matches_brute_force() {
        let maj = Circuit::build(
            &["a", "b", "c"],
            &[
                ("ab", GateKind::And, &["a", "b"]),
                ("bc", GateKind::And, &["b", "c"]),
                ("ac", GateKind::And, &["a", "c"]),
                ("o1", GateKind::Or, &["ab", "bc"]),
                ("o2", GateKind::Or, &["o1", "ac"]),
            ],
            "o2",
        )
        .unwrap();
        for x in all_inputs(3) {
            let ones = x.iter().filter(|&&b| b).count();
            assert_eq!(maj.evaluate(&x).unwrap(), ones >= 2, "{x:?}");
        }
    }

    #[test]
    fn length_mismatch() {
        let c = Circuit::build(&["a"], &[("g", GateKind::Not, &["a"])], "g").unwrap();
        assert_eq!(c.evaluate(&[]), Err(CircuitError::LengthMismatch { expected: 1, got: 0 }));
    }

    #[test]
    fn output_may_be_an_input() {
        let c = Circuit::build(&["a", "b"], &[], "b").unwrap();
        assert!(c.evaluate(&[false, true]).unwrap());
    }

    #[test]
    fn all_inputs_enumerates_msb_first() {
        let v: Vec<_> = all_inputs(2).collect();
        assert_eq!(v, vec![vec![false, false], vec![false, true], vec![true, false], vec![true, true]]);
    }
}
