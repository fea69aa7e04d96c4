//! Layered circuit → ReLU net: one two-sublayer gadget block per gate layer,
//! optional round corrections after each block, and a final `2z − 1` read-out.
//!
//! Gadget weight table (hidden row `u`, second-layer diagonal `s`, bias `c`;
//! block output is `φ(s·u + c)`):
//!
//! | gate | hidden row            | s  | c |
//! |------|-----------------------|----|---|
//! | AND  | φ(x₁ + x₂ − 1)        | 1  | 0 |
//! | OR   | φ(1 − x₁ − x₂)        | −1 | 1 |
//! | NOT  | φ(1 − x)              | 1  | 0 |
//! | ID   | φ(x)                  | 1  | 0 |

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::circuit::{GateKind, LayeredCircuit, LayeredGate};
use crate::ffnet::{round_sublayer, LayeredNet, Sublayer};
use crate::matrix::{Affine, MatrixBuilder};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("target width {requested} is below the circuit width {required}")]
    WidthTooSmall { requested: usize, required: usize },
    #[error("target depth {requested} is below the natural depth {natural} gate blocks")]
    DepthTooSmall { requested: usize, natural: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// Hidden width m̂; defaults to the circuit width m.
    pub target_width: Option<usize>,
    /// Total number of gate blocks; extra blocks are ID layers.
    pub target_depth: Option<usize>,
    pub insert_corrections: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { target_width: None, target_depth: None, insert_corrections: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GadgetCounts {
    pub and: usize,
    pub or: usize,
    pub not: usize,
    pub id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileReport {
    pub inputs: usize,
    pub circuit_widths: Vec<usize>,
    /// q, counting the input layer.
    pub circuit_depth: usize,
    /// c, counting inputs.
    pub circuit_size: usize,
    pub circuit_width: usize,
    pub net_width: usize,
    pub gate_blocks: usize,
    pub padding_blocks: usize,
    pub corrections: usize,
    pub sublayers: usize,
    pub param_count: usize,
    pub theta_count: usize,
    /// Exact ‖θ‖₁ in the net's scalar encoding.
    pub l1_norm: Value,
    pub l1_norm_f64: f64,
    pub gadgets: GadgetCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledCircuit<T: Scalar> {
    pub net: LayeredNet<T>,
    /// Number of leading non-padding coordinates of every sublayer output.
    pub active: Vec<usize>,
    pub report: CompileReport,
}

/// The two sublayers simulating one gate layer. `in_dim` is the width of the
/// incoming vector and `width` the padded output width.
pub fn compile_gate_layer<T: Scalar>(gates: &[LayeredGate], in_dim: usize, width: usize) -> [Sublayer<T>; 2] {
    assert!(gates.len() <= width, "gate layer wider than the net");
    let mut w1 = MatrixBuilder::new(width, in_dim);
    let mut b1 = vec![T::zero(); width];
    let mut w2 = MatrixBuilder::new(width, width);
    let mut b2 = vec![T::zero(); width];
    let one = T::one();
    let neg = T::from_i64(-1);
    for (j, g) in gates.iter().enumerate() {
        match g.kind {
            GateKind::And => {
                w1.add(j, g.args[0], &one);
                w1.add(j, g.args[1], &one);
                b1[j] = neg.clone();
                w2.set(j, j, one.clone());
            }
            GateKind::Or => {
                w1.add(j, g.args[0], &neg);
                w1.add(j, g.args[1], &neg);
                b1[j] = one.clone();
                w2.set(j, j, neg.clone());
                b2[j] = one.clone();
            }
            GateKind::Not => {
                w1.set(j, g.args[0], neg.clone());
                b1[j] = one.clone();
                w2.set(j, j, one.clone());
            }
            GateKind::Id => {
                w1.set(j, g.args[0], one.clone());
                w2.set(j, j, one.clone());
            }
            GateKind::Input => unreachable!("inputs never appear in gate layers"),
        }
    }
    [Sublayer::lin_relu(Affine::new(w1.build(), b1)), Sublayer::lin_relu(Affine::new(w2.build(), b2))]
}

/// Round gadget on the first `active` of `width` coordinates.
pub fn round_gadget<T: Scalar>(width: usize, active: usize) -> Sublayer<T> {
    let mask: Vec<bool> = (0..width).map(|j| j < active).collect();
    round_sublayer(&mask)
}

pub fn compile<T: Scalar>(c: &LayeredCircuit, opts: &CompileOptions) -> Result<CompiledCircuit<T>, CompileError> {
    let m = c.width();
    let width = opts.target_width.unwrap_or(m);
    if width < m {
        return Err(CompileError::WidthTooSmall { requested: width, required: m });
    }
    let natural = c.layers.len();
    let blocks = opts.target_depth.unwrap_or(natural);
    if blocks < natural {
        return Err(CompileError::DepthTooSmall { requested: blocks, natural });
    }

    let last_width = c.widths().last().copied().unwrap_or(0);
    let padding_layer: Vec<LayeredGate> = (0..last_width)
        .map(|j| LayeredGate { name: format!("pad{j}"), kind: GateKind::Id, args: vec![j] })
        .collect();

    let mut subs = Vec::new();
    let mut active = Vec::new();
    let mut gadgets = GadgetCounts::default();
    let mut in_dim = c.num_inputs();
    for b in 0..blocks {
        let gates = c.layers.get(b).unwrap_or(&padding_layer);
        for g in gates {
            match g.kind {
                GateKind::And => gadgets.and += 1,
                GateKind::Or => gadgets.or += 1,
                GateKind::Not => gadgets.not += 1,
                _ => gadgets.id += 1,
            }
        }
        subs.extend(compile_gate_layer::<T>(gates, in_dim, width));
        active.extend([gates.len(), gates.len()]);
        if opts.insert_corrections {
            subs.push(round_gadget(width, gates.len()));
            active.push(gates.len());
        }
        in_dim = width;
    }
    let mut readout = MatrixBuilder::new(1, in_dim);
    readout.set(0, c.output, T::from_i64(2));
    subs.push(Sublayer::lin(Affine::new(readout.build(), vec![T::from_i64(-1)])));
    active.push(1);

    let mut net = LayeredNet::new(c.num_inputs(), subs).expect("compiled dimensions chain");
    let l1 = net.l1_norm();
    let report = CompileReport {
        inputs: c.num_inputs(),
        circuit_widths: c.widths(),
        circuit_depth: c.depth(),
        circuit_size: c.size(),
        circuit_width: m,
        net_width: width,
        gate_blocks: natural,
        padding_blocks: blocks - natural,
        corrections: if opts.insert_corrections { blocks } else { 0 },
        sublayers: net.sublayers.len(),
        param_count: net.param_count(),
        theta_count: net.theta_count(),
        l1_norm: l1.to_json(),
        l1_norm_f64: l1.to_f64(),
        gadgets,
    };
    net.meta.insert("source".into(), json!("circuit"));
    net.meta.insert("active_dims".into(), json!(active));
    net.meta.insert("circuit_inputs".into(), json!(c.input_names));
    Ok(CompiledCircuit { net, active, report })
}

/// First `(sublayer, coordinate)` whose padding value is nonzero on input `x`.
pub fn padding_violation<T: Scalar>(net: &LayeredNet<T>, active: &[usize], x: &[T]) -> Option<(usize, usize)> {
    let trace = net.forward_trace(x).ok()?;
    for (i, h) in trace.iter().skip(1).enumerate() {
        if let Some(j) = (active[i]..h.len()).find(|&j| !h[j].is_zero()) {
            return Some((i, j));
        }
    }
    None
}

/// Encodes a bit vector as 0/1 scalars.
pub fn bits_to_scalars<T: Scalar>(x: &[bool]) -> Vec<T> {
    x.iter().map(|&b| if b { T::one() } else { T::zero() }).collect()
}

/// Least-squares slope of ‖θ‖₁ against circuit size across a corpus.
pub fn norm_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{all_inputs, corpus, layerize, parse_circuit};
    use crate::ffnet::SublayerOp;
    use crate::scalar::Rational;

    fn r(n: i64) -> Rational {
        <Rational as Scalar>::from_i64(n)
    }

    fn out(net: &LayeredNet<Rational>, x: &[bool]) -> Rational {
        net.forward(&bits_to_scalars(x)).unwrap()[0].clone()
    }

    #[test]
    fn and_circuit() {
        let c = layerize(&parse_circuit(corpus::AND).unwrap());
        let net = compile::<Rational>(&c, &CompileOptions::default()).unwrap().net;
        assert_eq!(out(&net, &[true, true]), r(1));
        assert_eq!(out(&net, &[false, true]), r(-1));
        let kinds: Vec<&str> = net.sublayers.iter().map(|s| s.kind_name()).collect();
        assert_eq!(kinds, ["linrelu", "linrelu", "round", "lin"]);
    }

    #[test]
    fn gadget_rows() {
        let gates = |k: GateKind, args: Vec<usize>| vec![LayeredGate { name: "g".into(), kind: k, args }];
        let [h, o] = compile_gate_layer::<Rational>(&gates(GateKind::And, vec![0, 1]), 2, 1);
        let SublayerOp::LinRelu(a) = &h.op else { panic!() };
        assert_eq!(a.weight.data(), &[r(1), r(1)]);
        assert_eq!(a.bias, vec![r(-1)]);
        let SublayerOp::LinRelu(a2) = &o.op else { panic!() };
        assert_eq!(a2.weight.data(), &[r(1)]);

        let run = |s: &[Sublayer<Rational>; 2], x: &[i64]| {
            let v: Vec<Rational> = x.iter().map(|&v| r(v)).collect();
            s[1].apply(&s[0].apply(&v))[0].clone()
        };
        let or = compile_gate_layer::<Rational>(&gates(GateKind::Or, vec![0, 1]), 2, 1);
        assert_eq!(run(&or, &[0, 0]), r(0));
        assert_eq!(run(&or, &[1, 0]), r(1));
        assert_eq!(run(&or, &[1, 1]), r(1));
        let not = compile_gate_layer::<Rational>(&gates(GateKind::Not, vec![0]), 1, 1);
        assert_eq!(run(&not, &[1]), r(0));
        assert_eq!(run(&not, &[0]), r(1));
    }

    #[test]
    fn named_corpus_is_exact_with_and_without_corrections() {
        for (name, c) in corpus::named() {
            let l = layerize(&c);
            for corr in [true, false] {
                let opts = CompileOptions { insert_corrections: corr, ..Default::default() };
                let net = compile::<Rational>(&l, &opts).unwrap().net;
                for x in all_inputs(l.num_inputs()) {
                    let want = if c.evaluate(&x).unwrap() { 1 } else { -1 };
                    assert_eq!(out(&net, &x), r(want), "{name} {x:?}");
                }
            }
        }
    }

    #[test]
    fn wide_and_deep_padding_stays_zero() {
        let l = layerize(&parse_circuit(corpus::MAJORITY).unwrap());
        let opts = CompileOptions { target_width: Some(4 * l.width()), target_depth: Some(6), insert_corrections: true };
        let cc = compile::<Rational>(&l, &opts).unwrap();
        assert_eq!(cc.report.padding_blocks, 6 - l.layers.len());
        for x in all_inputs(3) {
            let xs = bits_to_scalars::<Rational>(&x);
            assert_eq!(padding_violation(&cc.net, &cc.active, &xs), None);
            let want = if l.evaluate(&x).unwrap() { 1 } else { -1 };
            assert_eq!(out(&cc.net, &x), r(want));
        }
    }

    #[test]
    fn option_errors() {
        let l = layerize(&parse_circuit(corpus::MAJORITY).unwrap());
        let e = compile::<Rational>(&l, &CompileOptions { target_width: Some(2), ..Default::default() });
        assert_eq!(e.unwrap_err(), CompileError::WidthTooSmall { requested: 2, required: 3 });
        let e = compile::<Rational>(&l, &CompileOptions { target_depth: Some(1), ..Default::default() });
        assert!(matches!(e.unwrap_err(), CompileError::DepthTooSmall { .. }));
    }

    #[test]
    fn input_passthrough_circuit() {
        let l = layerize(&parse_circuit("inputs a b\noutput b").unwrap());
        let net = compile::<Rational>(&l, &CompileOptions::default()).unwrap().net;
        assert_eq!(out(&net, &[true, false]), r(-1));
        assert_eq!(out(&net, &[false, true]), r(1));
    }

    #[test]
    fn round_boundaries() {
        let g = round_gadget::<Rational>(1, 1);
        let third = <Rational as Scalar>::from_ratio(1, 3);
        assert_eq!(g.apply(&[third.clone()]), vec![r(0)]);
        assert_eq!(g.apply(&[third.clone() + third]), vec![r(1)]);
    }

    #[test]
    fn slope_of_a_line() {
        assert!((norm_slope(&[(1, 3.0), (2, 5.0), (4, 9.0)]) - 2.0).abs() < 1e-12);
    }
}
