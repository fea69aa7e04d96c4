//! Checks a compiled model against the reference simulator, one block
//! boundary at a time.

use serde::Serialize;

use super::{bin_encode, CompiledTm, CoordinateLayout, Group};
use crate::scalar::{Rational, Scalar};
use crate::transformer::TransformerError;
use crate::turing::{simulate, simulate_from, Move, TmTrace, TuringError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub step: usize,
    pub layer: usize,
    pub block: String,
    pub group: &'static str,
    pub expected: Vec<String>,
    pub got: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputCheck {
    pub input: Vec<usize>,
    /// Decision of the original machine; `None` when it does not halt in time.
    pub decision: Option<bool>,
    pub prediction: f64,
    pub prediction_ok: bool,
    pub mismatches: Vec<Mismatch>,
    /// Steps where the fetch attention missed the last writer.
    pub iprime_errors: Vec<usize>,
    /// Smallest hard-max gap over all non-identity attentions.
    pub min_gap: Option<f64>,
    pub non_binary: usize,
}

impl InputCheck {
    pub fn ok(&self) -> bool {
        self.prediction_ok
            && self.mismatches.is_empty()
            && self.iprime_errors.is_empty()
            && self.non_binary == 0
            && self.min_gap.map_or(true, |g| g >= 1.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Machine(#[from] TuringError),
    #[error(transparent)]
    Model(#[from] TransformerError),
}

fn set(v: &mut [u8], lay: &CoordinateLayout, g: Group, k: usize) {
    v[lay.at(g, k)] = 1;
}

fn set_bin(v: &mut [u8], lay: &CoordinateLayout, g: Group, n: usize) {
    let bits = bin_encode(n, lay.d_pos).expect("location fits the position width");
    for (k, b) in bits.into_iter().enumerate() {
        if b {
            set(v, lay, g, k);
        }
    }
}

/// Boundaries checked inside each step, in layer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Transition,
    Location,
    Exists,
    /// Bit `j` (0-based) of i′ revealed.
    Bit(usize),
    Fetch,
    EncoderRead,
    Output,
}

impl Boundary {
    fn name(self) -> String {
        match self {
            Boundary::Transition => "transition".into(),
            Boundary::Location => "location".into(),
            Boundary::Exists => "search.exists".into(),
            Boundary::Bit(j) => format!("search.bit{}", j + 1),
            Boundary::Fetch => "search.fetch".into(),
            Boundary::EncoderRead => "encoder.read".into(),
            Boundary::Output => "output".into(),
        }
    }
}

/// State vector expected after `boundary` of decoder step `i ≥ 1`, given
/// the augmented machine's trace and the input.
pub fn expected_block_state(lay: &CoordinateLayout, trace: &TmTrace, x: &[usize], i: usize, boundary: Boundary) -> Vec<u8> {
    let mut v = vec![0u8; lay.d()];
    if boundary == Boundary::Output {
        set(&mut v, lay, Group::St, trace.states[i]);
        set(&mut v, lay, Group::Sym1, trace.symbols[i]);
        set_bin(&mut v, lay, Group::Pos2, trace.locs[i]);
        return v;
    }
    set(&mut v, lay, Group::St, trace.states[i]);
    set(&mut v, lay, Group::Sym2, trace.written_at(i));
    set_bin(&mut v, lay, Group::Pos1, i);
    set_bin(&mut v, lay, Group::Pos2, trace.locs[i - 1]);
    if boundary == Boundary::Transition {
        let k = if trace.move_at(i) == Move::Left { 0 } else { 1 };
        set(&mut v, lay, Group::Scr4, k);
        return v;
    }
    set_bin(&mut v, lay, Group::Pos3, trace.locs[i]);
    let ip = trace.iprime_at(i);
    let stage = match boundary {
        Boundary::Location => 0,
        Boundary::Exists => 1,
        Boundary::Bit(_) => 2,
        Boundary::Fetch => 3,
        _ => 4,
    };
    if stage >= 1 && ip > 0 {
        set(&mut v, lay, Group::Scr4, 0);
    }
    if let Boundary::Bit(j) = boundary {
        let bits = bin_encode(ip, lay.d_pos).expect("step index fits the position width");
        for (k, &b) in bits.iter().enumerate().take(j + 1) {
            if b {
                set(&mut v, lay, Group::Scr3, k);
            }
        }
    }
    if stage >= 3 && ip > 0 {
        set(&mut v, lay, Group::Scr1, trace.written_at(ip));
    }
    if stage >= 4 {
        let loc = trace.locs[i];
        if loc <= x.len() {
            set(&mut v, lay, Group::Scr2, x[loc - 1]);
            set(&mut v, lay, Group::Scr4, 1);
        }
    }
    v
}

fn render(v: &[u8], lay: &CoordinateLayout, g: Group) -> Vec<String> {
    lay.range(g).map(|c| v[c].to_string()).collect()
}

fn render_exact(h: &[Rational], lay: &CoordinateLayout, g: Group) -> Vec<String> {
    lay.range(g).map(|c| h[c].to_string()).collect()
}

fn as_bits(h: &[Rational]) -> (Vec<u8>, usize) {
    let one = Rational::one();
    let mut bad = 0;
    let v = h
        .iter()
        .map(|x| {
            if x.is_zero() {
                0
            } else if *x == one {
                1
            } else {
                bad += 1;
                2
            }
        })
        .collect();
    (v, bad)
}

/// Runs the rational model on `x` and compares every block boundary of
/// every step with the simulator.
pub fn verify_input(c: &CompiledTm, spec: &crate::turing::TmSpec, x: &[usize]) -> Result<InputCheck, VerifyError> {
    let reference = simulate(spec, x)?;
    let aug = &c.augmented;
    let trace = simulate_from(aug, x, aug.init, 0, spec.time_bound + 1)?;
    let dec = c.model.decode_recorded(x)?;
    let lay = &c.layout;
    let b = &c.blocks;

    let mut bounds: Vec<(usize, Boundary)> = vec![
        (b.transition.end, Boundary::Transition),
        (b.location.end, Boundary::Location),
        (b.exists + 1, Boundary::Exists),
    ];
    for (j, l) in b.bits.clone().enumerate() {
        bounds.push((l + 1, Boundary::Bit(j)));
    }
    bounds.push((b.fetch + 1, Boundary::Fetch));
    bounds.push((b.encoder_read + 1, Boundary::EncoderRead));
    bounds.push((b.output.end, Boundary::Output));
    let last = c.model.layers.len();

    let mut mismatches = Vec::new();
    let mut iprime_errors = Vec::new();
    let mut non_binary = 0;
    let mut min_gap: Option<Rational> = None;
    for (s, rec) in dec.records.iter().enumerate() {
        let i = s + 1;
        for st in &rec.states {
            non_binary += as_bits(st).1;
        }
        for info in rec.dec.iter().chain(&rec.enc) {
            if let Some(g) = &info.gap {
                if min_gap.as_ref().map_or(true, |m| g < m) {
                    min_gap = Some(g.clone());
                }
            }
        }
        let ip = trace.iprime_at(i);
        if rec.dec[b.fetch].argmax != vec![ip] {
            iprime_errors.push(i);
        }
        for &(layer, bd) in bounds.iter().chain(std::iter::once(&(last, Boundary::Output))) {
            let want = expected_block_state(lay, &trace, x, i, bd);
            let (got, _) = as_bits(&rec.states[layer]);
            if want != got {
                for g in Group::ALL {
                    let r = lay.range(g);
                    if want[r.clone()] != got[r] {
                        mismatches.push(Mismatch {
                            step: i,
                            layer,
                            block: bd.name(),
                            group: g.name(),
                            expected: render(&want, lay, g),
                            got: render_exact(&rec.states[layer], lay, g),
                        });
                    }
                }
                let pad = lay.d_tm()..lay.d();
                if want[pad.clone()] != got[pad] {
                    mismatches.push(Mismatch {
                        step: i,
                        layer,
                        block: bd.name(),
                        group: "padding",
                        expected: Vec::new(),
                        got: Vec::new(),
                    });
                }
            }
        }
    }

    let decision = reference.decision;
    let prediction_ok = match decision {
        Some(acc) => dec.prediction == <Rational as Scalar>::from_i64(if acc { 1 } else { -1 }),
        None => true,
    };
    Ok(InputCheck {
        input: x.to_vec(),
        decision,
        prediction: dec.prediction.to_f64(),
        prediction_ok,
        mismatches,
        iprime_errors,
        min_gap: min_gap.map(|g| g.to_f64()),
        non_binary,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{compile_tm, TmCompileOptions};
    use super::*;
    use crate::turing::corpus;

    fn check_all(name: &str, spec: &crate::turing::TmSpec, max_len: usize) {
        let c = compile_tm(spec, &TmCompileOptions::default()).unwrap();
        for x in spec.all_inputs(max_len) {
            let r = verify_input(&c, spec, &x).unwrap();
            assert!(r.ok(), "{name} on {}: {:?}", spec.render(&x), r);
        }
    }

    #[test]
    fn parity_short_inputs() {
        check_all("parity", &corpus::parity(), 3);
    }

    #[test]
    fn palindrome_short_inputs() {
        check_all("palindrome", &corpus::palindrome(), 2);
    }

    #[test]
    fn anbn_short_inputs() {
        check_all("anbn", &corpus::anbn(), 2);
    }

    #[test]
    fn padded_model_still_exact() {
        let spec = corpus::parity();
        let base = compile_tm(&spec, &TmCompileOptions::default()).unwrap();
        let opts = TmCompileOptions {
            target_width: Some(base.layout.d_tm() + 5),
            target_layers: Some(base.model.layers.len() + 2),
        };
        let c = compile_tm(&spec, &opts).unwrap();
        let x = spec.tokenize("101").unwrap();
        let r = verify_input(&c, &spec, &x).unwrap();
        assert!(r.ok(), "{r:?}");
        assert_eq!(r.decision, Some(true));
    }
}
