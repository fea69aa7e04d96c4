//! Line-oriented netlist parser.
//!
//! ```text
//! # comment
//! inputs x0 x1
//! gate g = AND x0 x1
//! output g
//! ```

use super::{Circuit, CircuitBuilder, CircuitError, GateKind, Pos};

/// Splits a line into tokens with 1-based columns, dropping `#` comments.
fn tokens(line: &str, lineno: usize) -> Vec<(&str, Pos)> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((&code[s..i], pos_of(code, s, lineno)));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((&code[s..], pos_of(code, s, lineno)));
    }
    out
}

fn pos_of(line: &str, byte: usize, lineno: usize) -> Pos {
    Pos { line: lineno, col: line[..byte].chars().count() + 1 }
}

pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    let mut b = CircuitBuilder::default();
    let mut output: Option<(String, Pos)> = None;

    for (idx, line) in text.lines().enumerate() {
        let toks = tokens(line, idx + 1);
        let Some(&(head, at)) = toks.first() else { continue };
        match head {
            "inputs" => b.inputs(toks[1..].iter().map(|(t, _)| t.to_string()), at)?,
            "gate" => {
                if toks.len() < 4 || toks[2].0 != "=" {
                    return Err(CircuitError::Syntax {
                        msg: "expected `gate <id> = <KIND> <arg>...`".into(),
                        at,
                    });
                }
                let (id, _) = toks[1];
                let (kw, kw_at) = toks[3];
                let kind = GateKind::from_keyword(kw)
                    .ok_or_else(|| CircuitError::UnknownGateKind { kind: kw.to_string(), at: kw_at })?;
                let args: Vec<&str> = toks[4..].iter().map(|(t, _)| *t).collect();
                let arg_pos: Vec<Pos> = toks[4..].iter().map(|(_, p)| *p).collect();
                b.gate(id, kind, &args, toks[1].1, &arg_pos)?;
            }
            "output" => {
                if output.is_some() {
                    return Err(CircuitError::Syntax { msg: "second `output` line".into(), at });
                }
                if toks.len() != 2 {
                    return Err(CircuitError::Syntax { msg: "expected `output <id>`".into(), at });
                }
                output = Some((toks[1].0.to_string(), toks[1].1));
            }
            other => {
                return Err(CircuitError::Syntax { msg: format!("unknown directive `{other}`"), at });
            }
        }
    }
    b.finish(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_program() {
        let c = parse_circuit("inputs x0 x1\ngate g = AND x0 x1\noutput g").unwrap();
        assert_eq!(c.num_inputs(), 2);
        assert_eq!(c.gate_count(), 1);
        assert!(c.evaluate(&[true, true]).unwrap());
    }

    #[test]
    fn arity_is_checked_before_names() {
        let e = parse_circuit("gate g = AND x0").unwrap_err();
        assert!(matches!(e, CircuitError::BadArity { expected: 2, found: 1, .. }), "{e}");
    }

    #[test]
    fn not_gate_semantics() {
        let c = parse_circuit("inputs x0\ngate g = NOT x0\noutput g").unwrap();
        assert!(!c.evaluate(&[true]).unwrap());
    }

    #[test]
    fn diagnostics_carry_positions() {
        let e = parse_circuit("inputs a\n  gate g = XOR a a\noutput g").unwrap_err();
        assert_eq!(e, CircuitError::UnknownGateKind { kind: "XOR".into(), at: Pos { line: 2, col: 12 } });
        let e = parse_circuit("inputs a\ngate g = NOT b\noutput g").unwrap_err();
        assert_eq!(e, CircuitError::UndeclaredArg { id: "b".into(), at: Pos { line: 2, col: 14 } });
        let e = parse_circuit("inputs a a\noutput a").unwrap_err();
        assert!(matches!(e, CircuitError::DuplicateId { .. }));
        let e = parse_circuit("inputs a\ngate g = NOT a\n").unwrap_err();
        assert_eq!(e, CircuitError::MissingOutput);
        let e = parse_circuit("inputs a\ngate 9g = NOT a\noutput a").unwrap_err();
        assert!(matches!(e, CircuitError::Syntax { .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_circuit("# header\n\ninputs a b # two\ngate g = OR a b\noutput g # done\n").unwrap();
        assert!(!c.evaluate(&[false, false]).unwrap());
    }
}
