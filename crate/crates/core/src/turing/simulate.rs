//! Reference simulator.

use serde::Serialize;

use super::{Move, TmSpec, TuringError};

/// Full execution record. Index `i` of `states`/`symbols`/`locs` is time
/// step `i` (0..=T); `written`/`moves`/`iprime` are indexed by `i - 1` for
/// steps 1..=T.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TmTrace {
    pub states: Vec<usize>,
    pub symbols: Vec<usize>,
    pub locs: Vec<usize>,
    pub written: Vec<usize>,
    pub moves: Vec<Move>,
    pub iprime: Vec<usize>,
    pub halted_at: Option<usize>,
    pub decision: Option<bool>,
}

impl TmTrace {
    pub fn steps(&self) -> usize {
        self.written.len()
    }

    /// Final decision, or `NotTerminated` when z_T is not terminal.
    pub fn decision(&self) -> Result<bool, TuringError> {
        self.decision.ok_or(TuringError::NotTerminated(self.steps()))
    }

    pub fn written_at(&self, i: usize) -> usize {
        self.written[i - 1]
    }
    pub fn move_at(&self, i: usize) -> Move {
        self.moves[i - 1]
    }
    pub fn iprime_at(&self, i: usize) -> usize {
        self.iprime[i - 1]
    }
}

/// i' = max{1 ≤ t ≤ i : loc_{t-1} = loc_i}, or 0.
pub fn last_writer(locs: &[usize], i: usize) -> usize {
    (1..=i).rev().find(|&t| locs[t - 1] == locs[i]).unwrap_or(0)
}

/// Runs `spec` for `spec.time_bound` steps from cell 1.
pub fn simulate(spec: &TmSpec, x: &[usize]) -> Result<TmTrace, TuringError> {
    for &a in x {
        if !spec.input_alphabet.contains(&a) {
            return Err(TuringError::SymbolNotInAlphabet(spec.alphabet.get(a).cloned().unwrap_or_default()));
        }
    }
    simulate_from(spec, x, spec.init, 1, spec.time_bound)
}

/// General runner: the head starts at `start_loc` (cell 0 is a virtual
/// blank cell left of the input) and runs `steps` steps. Moving below
/// cell 1 after the start is a left-edge violation.
pub fn simulate_from(
    spec: &TmSpec,
    x: &[usize],
    start_state: usize,
    start_loc: usize,
    steps: usize,
) -> Result<TmTrace, TuringError> {
    let mut tape: Vec<usize> = vec![spec.blank; x.len() + steps + start_loc + 2];
    tape[1..=x.len()].copy_from_slice(x);

    let mut t = TmTrace {
        states: vec![start_state],
        symbols: vec![tape[start_loc]],
        locs: vec![start_loc],
        written: Vec::with_capacity(steps),
        moves: Vec::with_capacity(steps),
        iprime: Vec::with_capacity(steps),
        halted_at: spec.is_terminal(start_state).then_some(0),
        decision: None,
    };
    for i in 1..=steps {
        let (z, a, loc) = (t.states[i - 1], t.symbols[i - 1], t.locs[i - 1]);
        let tr = spec.step(z, a);
        tape[loc] = tr.write;
        let next = loc as i64 + tr.mv.offset();
        if next < 1 {
            return Err(TuringError::LeftEdgeViolation(i));
        }
        let next = next as usize;
        t.states.push(tr.next);
        t.symbols.push(tape[next]);
        t.locs.push(next);
        t.written.push(tr.write);
        t.moves.push(tr.mv);
        t.iprime.push(last_writer(&t.locs, i));
        if t.halted_at.is_none() && spec.is_terminal(tr.next) {
            t.halted_at = Some(i);
        }
    }
    let last = *t.states.last().unwrap();
    t.decision = if spec.accept[last] {
        Some(true)
    } else if spec.reject[last] {
        Some(false)
    } else {
        None
    };
    Ok(t)
}
