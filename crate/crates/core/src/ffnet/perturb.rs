//! Float-mode perturbed evaluation: parameter space and layer space.

use super::{dim_check, LayeredNet, NetError, ParamScope};
use crate::matrix::{l2_norm, Affine};

/// Offsets of one affine step's weights and bias inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct StepOffsets {
    weight: Option<usize>,
    bias: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ParamGradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LayeredNet<f64> {
    fn step_offsets(&self) -> Vec<Vec<StepOffsets>> {
        let mut offs: Vec<Vec<StepOffsets>> = vec![Vec::new(); self.sublayers.len()];
        let mut at = 0;
        for i in self.param_order() {
            let s = &self.sublayers[i];
            for (a, _) in s.steps() {
                let nw = a.weight.data().len();
                let weight = (s.scope != ParamScope::None).then(|| {
                    at += nw;
                    at - nw
                });
                let bias = (s.scope == ParamScope::All).then(|| {
                    at += a.bias.len();
                    at - a.bias.len()
                });
                offs[i].push(StepOffsets { weight, bias });
            }
        }
        offs
    }

    fn check_scalar_output(&self) -> Result<(), NetError> {
        dim_check("net output (classifier nets are scalar)", 1, self.output_dim())
    }

    /// Evaluates the net with parameters (θ, ξ) + δ.
    pub fn forward_param_perturbed(&self, x: &[f64], delta: &[f64]) -> Result<f64, NetError> {
        Ok(self.run_perturbed(x, delta, false)?.value)
    }

    /// Value and gradient with respect to δ at the perturbed point.
    pub fn param_gradient(&self, x: &[f64], delta: &[f64]) -> Result<ParamGradient, NetError> {
        self.run_perturbed(x, delta, true)
    }

    fn run_perturbed(&self, x: &[f64], delta: &[f64], want_grad: bool) -> Result<ParamGradient, NetError> {
        dim_check("net input", self.input_dim, x.len())?;
        dim_check("perturbation", self.param_count(), delta.len())?;
        self.check_scalar_output()?;
        let offs = self.step_offsets();

        struct Tape<'a> {
            a: &'a Affine<f64>,
            relu: bool,
            off: StepOffsets,
            input: Vec<f64>,
            pre: Vec<f64>,
        }
        let mut tape: Vec<Tape> = Vec::new();
        let mut h = x.to_vec();
        for (i, s) in self.sublayers.iter().enumerate() {
            for (k, (a, relu)) in s.steps().into_iter().enumerate() {
                let off = offs[i][k];
                let pre = perturbed_affine(a, off, delta, &h);
                let next: Vec<f64> = if relu { pre.iter().map(|v| v.max(0.0)).collect() } else { pre.clone() };
                if want_grad {
                    tape.push(Tape { a, relu, off, input: std::mem::take(&mut h), pre });
                }
                h = next;
            }
        }
        let value = h[0];
        if !want_grad {
            return Ok(ParamGradient { value, grad: Vec::new() });
        }

        let mut grad = vec![0.0; delta.len()];
        let mut g = vec![1.0];
        for t in tape.iter().rev() {
            let rows = t.a.out_dim();
            let cols = t.a.in_dim();
            let gp: Vec<f64> =
                (0..rows).map(|r| if !t.relu || t.pre[r] > 0.0 { g[r] } else { 0.0 }).collect();
            if let Some(wo) = t.off.weight {
                for r in 0..rows {
                    if gp[r] != 0.0 {
                        for c in 0..cols {
                            grad[wo + r * cols + c] += gp[r] * t.input[c];
                        }
                    }
                }
            }
            if let Some(bo) = t.off.bias {
                for r in 0..rows {
                    grad[bo + r] += gp[r];
                }
            }
            let mut gin = vec![0.0; cols];
            for r in 0..rows {
                if gp[r] == 0.0 {
                    continue;
                }
                for (c, gi) in gin.iter_mut().enumerate() {
                    let mut w = *t.a.weight.get(r, c);
                    if let Some(wo) = t.off.weight {
                        w += delta[wo + r * cols + c];
                    }
                    *gi += w * gp[r];
                }
            }
            g = gin;
        }
        Ok(ParamGradient { value, grad })
    }

    /// Output dimension of every sublayer, the shape of a layer perturbation.
    pub fn layer_dims(&self) -> Vec<usize> {
        self.sublayers.iter().map(|s| s.out_dim()).collect()
    }

    /// h_i = f_i(h_{i-1}) + δ_i · max{‖h_{i-1}‖₂, 1}, h_0 = x.
    pub fn forward_layer_perturbed(&self, x: &[f64], delta: &[Vec<f64>]) -> Result<f64, NetError> {
        dim_check("net input", self.input_dim, x.len())?;
        dim_check("layer perturbation count", self.sublayers.len(), delta.len())?;
        self.check_scalar_output()?;
        let mut h = x.to_vec();
        for (i, (s, d)) in self.sublayers.iter().zip(delta).enumerate() {
            dim_check(&format!("layer perturbation {i}"), s.out_dim(), d.len())?;
            let scale = l2_norm(&h).max(1.0);
            let mut next = s.apply(&h);
            for (v, dv) in next.iter_mut().zip(d) {
                *v += dv * scale;
            }
            h = next;
        }
        Ok(h[0])
    }
}

fn perturbed_affine(a: &Affine<f64>, off: StepOffsets, delta: &[f64], h: &[f64]) -> Vec<f64> {
    let rows = a.out_dim();
    let cols = a.in_dim();
    (0..rows)
        .map(|r| {
            // Same accumulation order as `Affine::apply`, so δ = 0 is bit-exact.
            let mut v = match off.weight {
                Some(wo) => {
                    let mut acc = 0.0;
                    for (c, hc) in h.iter().enumerate() {
                        let w = a.weight.get(r, c) + delta[wo + r * cols + c];
                        if w != 0.0 && *hc != 0.0 {
                            acc += w * hc;
                        }
                    }
                    acc
                }
                None => a.weight.row_dot(r, h),
            };
            v += a.bias[r];
            if let Some(bo) = off.bias {
                v += delta[bo + r];
            }
            v
        })
        .collect()
}
