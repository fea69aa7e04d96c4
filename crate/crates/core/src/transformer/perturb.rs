//! Shared parameter vector: every parameter appears once no matter how many
//! timesteps reuse it.

use super::{dim_check, Attention, TransformerError, TransformerModel};
use crate::matrix::{Affine, Matrix};
use crate::scalar::Scalar;

fn push_attn<T: Scalar>(a: &Attention<T>, out: &mut Vec<T>) {
    a.query.flatten_into(out);
    a.key.flatten_into(out);
    a.value.flatten_into(out);
    out.extend_from_slice(&a.null_key);
    out.extend_from_slice(&a.null_value);
}

fn take<'a, T: Clone>(src: &mut &'a [T], n: usize) -> Vec<T> {
    let (head, rest) = src.split_at(n);
    *src = rest;
    head.to_vec()
}

fn read_affine<T: Scalar>(a: &Affine<T>, src: &mut &[T]) -> Affine<T> {
    let (b, rest) = a.unflatten_from(src);
    *src = rest;
    b
}

fn read_attn<T: Scalar>(a: &Attention<T>, src: &mut &[T]) -> Attention<T> {
    Attention {
        query: read_affine(&a.query, src),
        key: read_affine(&a.key, src),
        value: read_affine(&a.value, src),
        null_key: take(src, a.null_key.len()),
        null_value: take(src, a.null_value.len()),
    }
}

impl<T: Scalar> TransformerModel<T> {
    /// Order: E, o_0, per layer (decoder attention, encoder attention, ff
    /// slots that are not corrections), θ_cls, then correction slots.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        out.extend_from_slice(self.embed.data());
        out.extend_from_slice(&self.h00);
        for l in &self.layers {
            push_attn(&l.dec_attn, &mut out);
            push_attn(&l.enc_attn, &mut out);
            let n = if l.correction_tail { 1 } else { 3 };
            for a in &l.ff[..n] {
                a.flatten_into(&mut out);
            }
        }
        out.extend_from_slice(&self.cls);
        for l in self.layers.iter().filter(|l| l.correction_tail) {
            l.ff[1].flatten_into(&mut out);
            l.ff[2].flatten_into(&mut out);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.flatten_len(false)
    }

    /// Length of the non-correction part.
    pub fn theta_count(&self) -> usize {
        self.flatten_len(true)
    }

    /// Offset of θ_cls inside the flat vector.
    pub fn cls_offset(&self) -> usize {
        self.theta_count() - self.cls.len()
    }

    fn flatten_len(&self, theta_only: bool) -> usize {
        let attn = |a: &Attention<T>| {
            a.query.param_count() + a.key.param_count() + a.value.param_count() + a.null_key.len() + a.null_value.len()
        };
        let mut n = self.embed.data().len() + self.h00.len() + self.cls.len();
        for l in &self.layers {
            n += attn(&l.dec_attn) + attn(&l.enc_attn) + l.ff[0].param_count();
            if !l.correction_tail || !theta_only {
                n += l.ff[1].param_count() + l.ff[2].param_count();
            }
        }
        n
    }

    pub fn unflatten(&self, params: &[T]) -> Result<Self, TransformerError> {
        dim_check("parameter vector", self.param_count(), params.len())?;
        let mut src = params;
        let mut m = self.clone();
        m.embed = Matrix::from_vec(self.embed.rows(), self.embed.cols(), take(&mut src, self.embed.data().len()));
        m.h00 = take(&mut src, self.h00.len());
        for (l, ml) in self.layers.iter().zip(m.layers.iter_mut()) {
            ml.dec_attn = read_attn(&l.dec_attn, &mut src);
            ml.enc_attn = read_attn(&l.enc_attn, &mut src);
            let n = if l.correction_tail { 1 } else { 3 };
            for k in 0..n {
                ml.ff[k] = read_affine(&l.ff[k], &mut src);
            }
        }
        m.cls = take(&mut src, self.cls.len());
        for (l, ml) in self.layers.iter().zip(m.layers.iter_mut()) {
            if l.correction_tail {
                ml.ff[1] = read_affine(&l.ff[1], &mut src);
                ml.ff[2] = read_affine(&l.ff[2], &mut src);
            }
        }
        debug_assert!(src.is_empty());
        Ok(m)
    }

    /// ‖θ‖₁ over the shared parameter vector.
    pub fn l1_norm(&self) -> T {
        let mut s = T::zero();
        for v in self.flatten() {
            s.add_assign(&v.abs());
        }
        s
    }
}

impl TransformerModel<f64> {
    /// Prediction with every shared parameter shifted by δ once.
    pub fn decode_param_perturbed(&self, x: &[usize], delta: &[f64]) -> Result<f64, TransformerError> {
        dim_check("perturbation", self.param_count(), delta.len())?;
        let shifted: Vec<f64> = self.flatten().iter().zip(delta).map(|(a, b)| a + b).collect();
        Ok(self.unflatten(&shifted)?.decode(x)?.prediction)
    }
}
