//! Layered feedforward networks with exact and float evaluation, canonical
//! parameter flattening and perturbed forward passes.

mod json;
mod perturb;
pub mod toy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::matrix::{Affine, Matrix, MatrixBuilder};
use crate::scalar::{Rational, Scalar};

pub use json::{parse_net_json, AnyNet, NET_FORMAT};
pub use perturb::ParamGradient;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch { what: String, expected: usize, got: usize },
    #[error("net format error: {0}")]
    Format(String),
}

pub(crate) fn dim_check(what: &str, expected: usize, got: usize) -> Result<(), NetError> {
    if expected == got {
        Ok(())
    } else {
        Err(NetError::DimMismatch { what: what.to_string(), expected, got })
    }
}

/// Which entries of a sublayer count as trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamScope {
    #[default]
    All,
    /// Biases are architectural constants.
    Weights,
    /// The whole sublayer is a constant map.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SublayerOp<T: Scalar> {
    LinRelu(Affine<T>),
    Lin(Affine<T>),
    /// `outer · φ(inner · h)`, the two-ReLU ramp that snaps values to {0,1}.
    Round { inner: Affine<T>, outer: Affine<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sublayer<T: Scalar> {
    pub op: SublayerOp<T>,
    pub correction: bool,
    pub scope: ParamScope,
}

impl<T: Scalar> Sublayer<T> {
    pub fn lin_relu(a: Affine<T>) -> Self {
        Sublayer { op: SublayerOp::LinRelu(a), correction: false, scope: ParamScope::All }
    }
    pub fn lin(a: Affine<T>) -> Self {
        Sublayer { op: SublayerOp::Lin(a), correction: false, scope: ParamScope::All }
    }
    pub fn with_scope(mut self, scope: ParamScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.op {
            SublayerOp::LinRelu(_) => "linrelu",
            SublayerOp::Lin(_) => "lin",
            SublayerOp::Round { .. } => "round",
        }
    }

    /// Affine steps in evaluation order, each flagged with whether a ReLU follows.
    pub fn steps(&self) -> Vec<(&Affine<T>, bool)> {
        match &self.op {
            SublayerOp::LinRelu(a) => vec![(a, true)],
            SublayerOp::Lin(a) => vec![(a, false)],
            SublayerOp::Round { inner, outer } => vec![(inner, true), (outer, false)],
        }
    }

    fn steps_mut(&mut self) -> Vec<&mut Affine<T>> {
        match &mut self.op {
            SublayerOp::LinRelu(a) | SublayerOp::Lin(a) => vec![a],
            SublayerOp::Round { inner, outer } => vec![inner, outer],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.steps()[0].0.in_dim()
    }
    pub fn out_dim(&self) -> usize {
        self.steps().last().unwrap().0.out_dim()
    }

    pub fn apply(&self, h: &[T]) -> Vec<T> {
        let mut v = h.to_vec();
        for (a, relu) in self.steps() {
            v = if relu { a.apply_relu(&v) } else { a.apply(&v) };
        }
        v
    }

    fn scoped_counts(&self, a: &Affine<T>) -> (usize, usize) {
        let nw = a.weight.data().len();
        match self.scope {
            ParamScope::All => (nw, a.bias.len()),
            ParamScope::Weights => (nw, 0),
            ParamScope::None => (0, 0),
        }
    }

    pub fn param_count(&self) -> usize {
        self.steps().iter().map(|(a, _)| self.scoped_counts(a)).map(|(w, b)| w + b).sum()
    }

    fn flatten_into(&self, out: &mut Vec<T>) {
        for (a, _) in self.steps() {
            let (nw, nb) = self.scoped_counts(a);
            out.extend_from_slice(&a.weight.data()[..nw]);
            out.extend_from_slice(&a.bias[..nb]);
        }
    }

    fn unflatten_from<'a>(&mut self, mut src: &'a [T]) -> &'a [T] {
        let scope = self.scope;
        for a in self.steps_mut() {
            let nw = if scope == ParamScope::None { 0 } else { a.weight.data().len() };
            let nb = if scope == ParamScope::All { a.bias.len() } else { 0 };
            if nw > 0 {
                a.weight = Matrix::from_vec(a.out_dim(), a.in_dim(), src[..nw].to_vec());
            }
            a.bias[..nb].clone_from_slice(&src[nw..nw + nb]);
            src = &src[nw + nb..];
        }
        src
    }

    fn l1(&self) -> T {
        let mut s = T::zero();
        for (a, _) in self.steps() {
            let (nw, nb) = self.scoped_counts(a);
            for v in a.weight.data()[..nw].iter().chain(&a.bias[..nb]) {
                s.add_assign(&v.abs());
            }
        }
        s
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> Sublayer<U> {
        let op = match &self.op {
            SublayerOp::LinRelu(a) => SublayerOp::LinRelu(a.map(f)),
            SublayerOp::Lin(a) => SublayerOp::Lin(a.map(f)),
            SublayerOp::Round { inner, outer } => SublayerOp::Round { inner: inner.map(f), outer: outer.map(f) },
        };
        Sublayer { op, correction: self.correction, scope: self.scope }
    }
}

/// Round gadget on the coordinates flagged in `active`; the rest map to 0.
/// Row 2j computes z_j − 1/3 and row 2j+1 computes z_j − 2/3.
pub fn round_sublayer<T: Scalar>(active: &[bool]) -> Sublayer<T> {
    let m = active.len();
    let mut inner = MatrixBuilder::new(2 * m, m);
    let mut inner_b = vec![T::zero(); 2 * m];
    let mut outer = MatrixBuilder::new(m, 2 * m);
    for (j, &on) in active.iter().enumerate() {
        if on {
            inner.set(2 * j, j, T::one());
            inner.set(2 * j + 1, j, T::one());
            inner_b[2 * j] = T::from_ratio(-1, 3);
            inner_b[2 * j + 1] = T::from_ratio(-2, 3);
            outer.set(j, 2 * j, T::from_i64(3));
            outer.set(j, 2 * j + 1, T::from_i64(-3));
        }
    }
    Sublayer {
        op: SublayerOp::Round {
            inner: Affine::new(inner.build(), inner_b),
            outer: Affine::new(outer.build(), vec![T::zero(); m]),
        },
        correction: true,
        scope: ParamScope::All,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredNet<T: Scalar> {
    pub input_dim: usize,
    pub sublayers: Vec<Sublayer<T>>,
    pub meta: BTreeMap<String, Value>,
}

impl<T: Scalar> LayeredNet<T> {
    pub fn new(input_dim: usize, sublayers: Vec<Sublayer<T>>) -> Result<Self, NetError> {
        let mut d = input_dim;
        for (i, s) in sublayers.iter().enumerate() {
            let mut cur = d;
            for (a, _) in s.steps() {
                dim_check(&format!("sublayer {i} input"), cur, a.in_dim())?;
                cur = a.out_dim();
            }
            d = cur;
        }
        Ok(LayeredNet { input_dim, sublayers, meta: BTreeMap::new() })
    }

    pub fn output_dim(&self) -> usize {
        self.sublayers.last().map_or(self.input_dim, Sublayer::out_dim)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NetError> {
        Ok(self.forward_trace(x)?.pop().unwrap())
    }

    /// Input followed by every sublayer output.
    pub fn forward_trace(&self, x: &[T]) -> Result<Vec<Vec<T>>, NetError> {
        dim_check("net input", self.input_dim, x.len())?;
        let mut out = vec![x.to_vec()];
        for s in &self.sublayers {
            let next = s.apply(out.last().unwrap());
            out.push(next);
        }
        Ok(out)
    }

    /// Sublayer indices in canonical parameter order: θ first, then ξ.
    pub fn param_order(&self) -> Vec<usize> {
        let (mut theta, mut xi): (Vec<usize>, Vec<usize>) =
            (0..self.sublayers.len()).partition(|&i| !self.sublayers[i].correction);
        theta.append(&mut xi);
        theta
    }

    pub fn param_count(&self) -> usize {
        self.sublayers.iter().map(Sublayer::param_count).sum()
    }

    /// Length of the θ part (non-correction parameters).
    pub fn theta_count(&self) -> usize {
        self.sublayers.iter().filter(|s| !s.correction).map(Sublayer::param_count).sum()
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for i in self.param_order() {
            self.sublayers[i].flatten_into(&mut out);
        }
        out
    }

    pub fn unflatten(&self, params: &[T]) -> Result<Self, NetError> {
        dim_check("parameter vector", self.param_count(), params.len())?;
        let mut net = self.clone();
        let mut rest = params;
        for i in self.param_order() {
            rest = net.sublayers[i].unflatten_from(rest);
        }
        Ok(net)
    }

    /// ‖θ‖₁ over all trainable parameters (θ and ξ).
    pub fn l1_norm(&self) -> T {
        let mut s = T::zero();
        for l in &self.sublayers {
            s.add_assign(&l.l1());
        }
        s
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> LayeredNet<U> {
        LayeredNet {
            input_dim: self.input_dim,
            sublayers: self.sublayers.iter().map(|s| s.map(f)).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_float(&self) -> LayeredNet<f64> {
        self.map(|v| v.to_f64())
    }
}

impl LayeredNet<f64> {
    pub fn to_rational(&self) -> LayeredNet<Rational> {
        self.map(|v| v.to_rational())
    }
}
