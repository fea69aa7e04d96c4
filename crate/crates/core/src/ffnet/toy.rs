//! Small scalar nets used to demonstrate the margin gap.

use super::{round_sublayer, LayeredNet, ParamScope, Sublayer};
use crate::matrix::{Affine, Matrix};
use crate::scalar::Scalar;

fn scalar_affine<T: Scalar>(w: T, b: T) -> Affine<T> {
    Affine::new(Matrix::from_rows(vec![vec![w]]), vec![b])
}

/// `W_d ⋯ W_1 x − 0.5` with all weights 1. Only the d weights are parameters.
///
/// With `corrected`, a round gadget follows every weight and the −0.5 moves
/// into a constant read-out: `round(W_d round(⋯ round(W_1 x))) − 0.5`. The
/// round gadgets are fixed maps here, so the parameter vector is still the d
/// weights.
pub fn product_net<T: Scalar>(d: usize, corrected: bool) -> LayeredNet<T> {
    assert!(d >= 1, "product net needs at least one layer");
    let half = T::from_ratio(-1, 2);
    let mut subs = Vec::new();
    for i in 0..d {
        let last = i + 1 == d;
        let b = if last && !corrected { half.clone() } else { T::zero() };
        subs.push(Sublayer::lin(scalar_affine(T::one(), b)).with_scope(ParamScope::Weights));
        if corrected {
            subs.push(round_sublayer(&[true]).with_scope(ParamScope::None));
        }
    }
    if corrected {
        subs.push(Sublayer::lin(scalar_affine(T::one(), half)).with_scope(ParamScope::None));
    }
    let mut net = LayeredNet::new(1, subs).expect("scalar chain");
    net.meta.insert("name".into(), format!("product-{d}{}", if corrected { "-round" } else { "" }).into());
    net
}

/// f(x, θ) = θx − 0.5 at θ = 1.
pub fn linear_threshold<T: Scalar>() -> LayeredNet<T> {
    let s = Sublayer::lin(scalar_affine(T::one(), T::from_ratio(-1, 2))).with_scope(ParamScope::Weights);
    LayeredNet::new(1, vec![s]).expect("scalar")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    #[test]
    fn product_net_value() {
        let half = <Rational as Scalar>::from_ratio(1, 2);
        for corrected in [false, true] {
            let net = product_net::<Rational>(16, corrected);
            assert_eq!(net.param_count(), 16);
            assert_eq!(net.forward(&[Rational::one()]).unwrap(), vec![half.clone()]);
        }
    }

    #[test]
    fn corrected_net_ignores_small_weight_shifts() {
        let net = product_net::<f64>(16, true);
        let d = vec![-0.33; 16];
        assert_eq!(net.forward_param_perturbed(&[1.0], &d).unwrap(), 0.5);
    }
}
