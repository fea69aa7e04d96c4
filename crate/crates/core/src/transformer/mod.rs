//! Encoder-decoder transformer with hard-max attention.
//!
//! The encoder only embeds: `Enc_i = E[:, x_i] + pos(i)`. Each decoder layer
//! runs decoder self-attention, encoder-decoder attention and three
//! affine+ReLU sublayers. Decoding is autoregressive on the hidden state:
//! step `i` starts from `o_{i−1} + pos(i)`.

mod json;
mod perturb;

use serde_json::Value;
use thiserror::Error;

use crate::matrix::{Affine, Matrix};
use crate::scalar::Scalar;

pub use json::{parse_transformer_json, AnyTransformer, TRANSFORMER_FORMAT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformerError {
    #[error("unknown symbol index {0}")]
    UnknownSymbol(usize),
    #[error("decoder step count must be positive")]
    InvalidSteps,
    #[error("position {pos} does not fit in {bits} bits")]
    PositionOverflow { pos: usize, bits: usize },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch { what: String, expected: usize, got: usize },
    #[error("transformer format error: {0}")]
    Format(String),
}

pub(crate) fn dim_check(what: &str, expected: usize, got: usize) -> Result<(), TransformerError> {
    if expected == got {
        Ok(())
    } else {
        Err(TransformerError::DimMismatch { what: what.to_string(), expected, got })
    }
}

/// MSB-first binary encoding of `i` in `bits` bits, as 0/1 scalars.
pub fn bin<T: Scalar>(i: usize, bits: usize) -> Result<Vec<T>, TransformerError> {
    if bits < usize::BITS as usize && i >> bits != 0 {
        return Err(TransformerError::PositionOverflow { pos: i, bits });
    }
    Ok((0..bits).map(|k| if (i >> (bits - 1 - k)) & 1 == 1 { T::one() } else { T::zero() }).collect())
}

/// Adds `Bin(i)` to the coordinates `offset..offset + bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionalEncoding {
    pub offset: usize,
    pub bits: usize,
}

impl PositionalEncoding {
    pub fn add_to<T: Scalar>(&self, h: &mut [T], i: usize) -> Result<(), TransformerError> {
        for (k, b) in bin::<T>(i, self.bits)?.into_iter().enumerate() {
            if !b.is_zero() {
                h[self.offset + k].add_assign(&b);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T: Scalar> {
    pub query: Affine<T>,
    pub key: Affine<T>,
    pub value: Affine<T>,
    pub null_key: Vec<T>,
    pub null_value: Vec<T>,
}

/// Which candidates won a hard-max and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnInfo<T> {
    /// 0 is the null candidate, `t ≥ 1` is history entry `t`.
    pub argmax: Vec<usize>,
    pub max: T,
    /// Max score minus the best score outside the argmax set.
    pub gap: Option<T>,
}

impl<T: Scalar> Attention<T> {
    /// All-zero parameters with key dimension `dk`: the identity map.
    pub fn zeros(d: usize, dk: usize) -> Self {
        Attention {
            query: Affine::zeros(dk, d),
            key: Affine::zeros(dk, d),
            value: Affine::zeros(d, d),
            null_key: vec![T::zero(); dk],
            null_value: vec![T::zero(); d],
        }
    }

    pub fn key_dim(&self) -> usize {
        self.query.out_dim()
    }

    pub fn model_dim(&self) -> usize {
        self.value.out_dim()
    }

    pub fn is_identity(&self) -> bool {
        self.value.is_zero() && self.null_value.iter().all(Scalar::is_zero)
    }

    fn check(&self, d: usize, what: &str) -> Result<(), TransformerError> {
        let dk = self.key_dim();
        dim_check(&format!("{what} query input"), d, self.query.in_dim())?;
        dim_check(&format!("{what} key input"), d, self.key.in_dim())?;
        dim_check(&format!("{what} key output"), dk, self.key.out_dim())?;
        dim_check(&format!("{what} value input"), d, self.value.in_dim())?;
        dim_check(&format!("{what} value output"), d, self.value.out_dim())?;
        dim_check(&format!("{what} null key"), dk, self.null_key.len())?;
        dim_check(&format!("{what} null value"), d, self.null_value.len())
    }

    /// `h + mean_{j ∈ J} v_j` over the argmax set J of `⟨Q h, k_j⟩`,
    /// candidates being the null pair followed by `keys`/`values`.
    pub fn attend(&self, h: &[T], keys: &[Vec<T>], values: &[Vec<T>]) -> (Vec<T>, AttnInfo<T>) {
        let q = self.query.apply(h);
        let score = |k: &[T]| {
            let mut s = T::zero();
            for (a, b) in q.iter().zip(k) {
                if !a.is_zero() && !b.is_zero() {
                    s.mul_add_assign(a, b);
                }
            }
            s
        };
        let scores: Vec<T> = std::iter::once(score(&self.null_key)).chain(keys.iter().map(|k| score(k))).collect();
        let mut max = scores[0].clone();
        for s in &scores[1..] {
            if *s > max {
                max = s.clone();
            }
        }
        let argmax: Vec<usize> = (0..scores.len()).filter(|&j| scores[j].ties_max(&max)).collect();
        let mut runner: Option<T> = None;
        for (j, s) in scores.iter().enumerate() {
            if !argmax.contains(&j) && runner.as_ref().map_or(true, |r| s > r) {
                runner = Some(s.clone());
            }
        }
        let gap = runner.map(|r| max.sub(&r));

        let mut out = h.to_vec();
        let mut acc = vec![T::zero(); h.len()];
        for &j in &argmax {
            let v = if j == 0 { &self.null_value } else { &values[j - 1] };
            for (a, b) in acc.iter_mut().zip(v) {
                if !b.is_zero() {
                    a.add_assign(b);
                }
            }
        }
        let n = argmax.len();
        for (o, a) in out.iter_mut().zip(acc) {
            if !a.is_zero() {
                o.add_assign(&if n == 1 { a } else { a.div_usize(n) });
            }
        }
        (out, AttnInfo { argmax, max, gap })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> Attention<U> {
        Attention {
            query: self.query.map(f),
            key: self.key.map(f),
            value: self.value.map(f),
            null_key: self.null_key.iter().map(f).collect(),
            null_value: self.null_value.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer<T: Scalar> {
    pub dec_attn: Attention<T>,
    pub enc_attn: Attention<T>,
    /// Three affine maps, each followed by ReLU.
    pub ff: [Affine<T>; 3],
    /// Slots 2 and 3 of `ff` are correction parameters (flattened last).
    pub correction_tail: bool,
}

impl<T: Scalar> TransformerLayer<T> {
    /// Zero attention and identity feedforward.
    pub fn identity(d: usize) -> Self {
        TransformerLayer {
            dec_attn: Attention::zeros(d, 0),
            enc_attn: Attention::zeros(d, 0),
            ff: [Affine::identity(d), Affine::identity(d), Affine::identity(d)],
            correction_tail: false,
        }
    }

    pub fn feed_forward(&self, h: &[T]) -> Vec<T> {
        let a = self.ff[0].apply_relu(h);
        let b = self.ff[1].apply_relu(&a);
        self.ff[2].apply_relu(&b)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> TransformerLayer<U> {
        TransformerLayer {
            dec_attn: self.dec_attn.map(f),
            enc_attn: self.enc_attn.map(f),
            ff: [self.ff[0].map(f), self.ff[1].map(f), self.ff[2].map(f)],
            correction_tail: self.correction_tail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel<T: Scalar> {
    pub d: usize,
    pub alphabet: Vec<String>,
    /// d × |A| symbol embeddings.
    pub embed: Matrix<T>,
    pub pos: PositionalEncoding,
    /// Initial decoder state o_0.
    pub h00: Vec<T>,
    pub layers: Vec<TransformerLayer<T>>,
    pub cls: Vec<T>,
    /// T′, the number of decoder steps.
    pub steps: usize,
    pub meta: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    /// Input to every layer followed by the step output: `layers.len() + 1` vectors.
    pub states: Vec<Vec<T>>,
    pub dec: Vec<AttnInfo<T>>,
    pub enc: Vec<AttnInfo<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub prediction: T,
    /// o_0 … o_{T′}.
    pub outputs: Vec<Vec<T>>,
    /// Per-step records for steps 1..=T′ (empty unless requested).
    pub records: Vec<StepRecord<T>>,
}

impl<T: Scalar> TransformerModel<T> {
    pub fn validate(&self) -> Result<(), TransformerError> {
        if self.steps == 0 {
            return Err(TransformerError::InvalidSteps);
        }
        let d = self.d;
        dim_check("embedding rows", d, self.embed.rows())?;
        dim_check("embedding columns", self.alphabet.len(), self.embed.cols())?;
        dim_check("initial decoder input", d, self.h00.len())?;
        dim_check("classifier", d, self.cls.len())?;
        if self.pos.offset + self.pos.bits > d {
            return Err(TransformerError::DimMismatch {
                what: "positional encoding range".into(),
                expected: d,
                got: self.pos.offset + self.pos.bits,
            });
        }
        for (j, l) in self.layers.iter().enumerate() {
            l.dec_attn.check(d, &format!("layer {j} decoder attention"))?;
            l.enc_attn.check(d, &format!("layer {j} encoder attention"))?;
            dim_check(&format!("layer {j} ff1 input"), d, l.ff[0].in_dim())?;
            dim_check(&format!("layer {j} ff2 input"), l.ff[0].out_dim(), l.ff[1].in_dim())?;
            dim_check(&format!("layer {j} ff3 input"), l.ff[1].out_dim(), l.ff[2].in_dim())?;
            dim_check(&format!("layer {j} ff3 output"), d, l.ff[2].out_dim())?;
        }
        Ok(())
    }

    /// `E[:, x_i] + pos(i)` for i = 1..n.
    pub fn encode(&self, x: &[usize]) -> Result<Vec<Vec<T>>, TransformerError> {
        x.iter()
            .enumerate()
            .map(|(i, &a)| {
                if a >= self.embed.cols() {
                    return Err(TransformerError::UnknownSymbol(a));
                }
                let mut v: Vec<T> = (0..self.d).map(|r| self.embed.get(r, a).clone()).collect();
                self.pos.add_to(&mut v, i + 1)?;
                Ok(v)
            })
            .collect()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>, TransformerError> {
        text.chars()
            .map(|c| {
                let s = c.to_string();
                self.alphabet.iter().position(|a| *a == s).ok_or(TransformerError::Format(format!("unknown symbol `{s}`")))
            })
            .collect()
    }

    pub fn decode(&self, x: &[usize]) -> Result<Decoded<T>, TransformerError> {
        self.run(x, false)
    }

    /// Decode keeping every per-layer state and attention decision.
    pub fn decode_recorded(&self, x: &[usize]) -> Result<Decoded<T>, TransformerError> {
        self.run(x, true)
    }

    fn run(&self, x: &[usize], record: bool) -> Result<Decoded<T>, TransformerError> {
        if self.steps == 0 {
            return Err(TransformerError::InvalidSteps);
        }
        let enc = self.encode(x)?;
        let nl = self.layers.len();
        let enc_kv: Vec<(Vec<Vec<T>>, Vec<Vec<T>>)> = self
            .layers
            .iter()
            .map(|l| {
                if l.enc_attn.is_identity() {
                    (Vec::new(), Vec::new())
                } else {
                    (enc.iter().map(|e| l.enc_attn.key.apply(e)).collect(), enc.iter().map(|e| l.enc_attn.value.apply(e)).collect())
                }
            })
            .collect();
        let mut dec_keys: Vec<Vec<Vec<T>>> = vec![Vec::new(); nl];
        let mut dec_vals: Vec<Vec<Vec<T>>> = vec![Vec::new(); nl];
        let mut outputs = vec![self.h00.clone()];
        let mut records = Vec::new();

        for i in 1..=self.steps {
            let mut h = outputs[i - 1].clone();
            self.pos.add_to(&mut h, i)?;
            let mut rec = record.then(|| StepRecord { states: Vec::new(), dec: Vec::new(), enc: Vec::new() });
            for (j, l) in self.layers.iter().enumerate() {
                if let Some(r) = rec.as_mut() {
                    r.states.push(h.clone());
                }
                if !l.dec_attn.is_identity() {
                    dec_keys[j].push(l.dec_attn.key.apply(&h));
                    dec_vals[j].push(l.dec_attn.value.apply(&h));
                    let (out, info) = l.dec_attn.attend(&h, &dec_keys[j], &dec_vals[j]);
                    h = out;
                    if let Some(r) = rec.as_mut() {
                        r.dec.push(info);
                    }
                } else if let Some(r) = rec.as_mut() {
                    r.dec.push(AttnInfo { argmax: Vec::new(), max: T::zero(), gap: None });
                }
                if !l.enc_attn.is_identity() {
                    let (out, info) = l.enc_attn.attend(&h, &enc_kv[j].0, &enc_kv[j].1);
                    h = out;
                    if let Some(r) = rec.as_mut() {
                        r.enc.push(info);
                    }
                } else if let Some(r) = rec.as_mut() {
                    r.enc.push(AttnInfo { argmax: Vec::new(), max: T::zero(), gap: None });
                }
                h = l.feed_forward(&h);
            }
            if let Some(mut r) = rec {
                r.states.push(h.clone());
                records.push(r);
            }
            outputs.push(h);
        }
        let mut prediction = T::zero();
        for (c, v) in self.cls.iter().zip(outputs.last().unwrap()) {
            prediction.mul_add_assign(c, v);
        }
        Ok(Decoded { prediction, outputs, records })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> TransformerModel<U> {
        TransformerModel {
            d: self.d,
            alphabet: self.alphabet.clone(),
            embed: self.embed.map(f),
            pos: self.pos,
            h00: self.h00.iter().map(f).collect(),
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
            cls: self.cls.iter().map(f).collect(),
            steps: self.steps,
            meta: self.meta.clone(),
        }
    }

    pub fn to_float(&self) -> TransformerModel<f64> {
        self.map(|v| v.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(n: i64) -> Rational {
        <Rational as Scalar>::from_i64(n)
    }

    #[test]
    fn bin_is_msb_first() {
        assert_eq!(bin::<Rational>(0, 4).unwrap(), vec![r(0); 4]);
        assert_eq!(bin::<Rational>(5, 4).unwrap(), vec![r(0), r(1), r(0), r(1)]);
        assert!(matches!(bin::<Rational>(16, 4), Err(TransformerError::PositionOverflow { .. })));
    }

    fn unit_attn(values: bool) -> Attention<Rational> {
        // Score is the first coordinate of the key; null key scores 0.
        let mut a = Attention::zeros(2, 1);
        a.query = Affine::new(Matrix::from_rows(vec![vec![r(0), r(0)]]), vec![r(1)]);
        a.key = Affine::new(Matrix::from_rows(vec![vec![r(1), r(0)]]), vec![r(0)]);
        if values {
            a.value = Affine::identity(2);
        }
        a
    }

    #[test]
    fn zero_attention_is_identity() {
        let a = Attention::<Rational>::zeros(2, 3);
        let h = vec![r(1), r(2)];
        let (out, info) = a.attend(&h, &[a.key.apply(&h)], &[a.value.apply(&h)]);
        assert_eq!(out, h);
        assert_eq!(info.argmax, vec![0, 1]);
    }

    #[test]
    fn singleton_argmax_adds_value() {
        let a = unit_attn(true);
        let h = vec![r(0), r(1)];
        let hist = vec![vec![r(3), r(4)]];
        let keys: Vec<Vec<Rational>> = hist.iter().map(|v| a.key.apply(v)).collect();
        let vals: Vec<Vec<Rational>> = hist.iter().map(|v| a.value.apply(v)).collect();
        let (out, info) = a.attend(&h, &keys, &vals);
        assert_eq!(out, vec![r(3), r(5)]);
        assert_eq!(info.argmax, vec![1]);
        assert_eq!(info.gap, Some(r(3)));
    }

    #[test]
    fn ties_are_averaged() {
        let a = unit_attn(true);
        let hist = [vec![r(2), r(0)], vec![r(2), r(6)]];
        let keys: Vec<Vec<Rational>> = hist.iter().map(|v| a.key.apply(v)).collect();
        let vals: Vec<Vec<Rational>> = hist.iter().map(|v| a.value.apply(v)).collect();
        let (out, info) = a.attend(&[r(0), r(0)], &keys, &vals);
        assert_eq!(out, vec![r(2), r(3)]);
        assert_eq!(info.argmax, vec![1, 2]);
        assert_eq!(info.gap, Some(r(2)));
    }

    #[test]
    fn float_ties_use_tolerance() {
        let a = unit_attn(true).map(|v| v.to_f64());
        let hist = [vec![1.0, 0.0], vec![1.0 + 1e-9, 4.0]];
        let keys: Vec<Vec<f64>> = hist.iter().map(|v| a.key.apply(v)).collect();
        let vals: Vec<Vec<f64>> = hist.iter().map(|v| a.value.apply(v)).collect();
        let (_, info) = a.attend(&[0.0, 0.0], &keys, &vals);
        assert_eq!(info.argmax, vec![1, 2]);
    }

    pub(crate) fn identity_model(d: usize, layers: usize, steps: usize) -> TransformerModel<Rational> {
        TransformerModel {
            d,
            alphabet: vec!["0".into(), "1".into()],
            embed: Matrix::from_rows((0..d).map(|i| vec![r((i % 2) as i64), r(1)]).collect()),
            pos: PositionalEncoding { offset: 0, bits: 3 },
            h00: (0..d).map(|i| r(i as i64)).collect(),
            layers: (0..layers).map(|_| TransformerLayer::identity(d)).collect(),
            cls: (0..d).map(|i| r(1 - i as i64)).collect(),
            steps,
            meta: Default::default(),
        }
    }

    #[test]
    fn identity_layers_accumulate_positions() {
        let m = identity_model(4, 3, 5);
        m.validate().unwrap();
        let out = m.decode(&[1, 0]).unwrap();
        // Closed form: o_i = h00 + Σ_{s ≤ i} Bin(s) on the position coordinates.
        for i in 0..=5usize {
            let mut want = m.h00.clone();
            for s in 1..=i {
                for (k, b) in bin::<Rational>(s, 3).unwrap().into_iter().enumerate() {
                    want[k] += b;
                }
            }
            assert_eq!(out.outputs[i], want);
        }
        let mut p = r(0);
        for (c, v) in m.cls.iter().zip(&out.outputs[5]) {
            p += c * v;
        }
        assert_eq!(out.prediction, p);
    }

    #[test]
    fn encodings() {
        let m = identity_model(4, 1, 1);
        assert!(m.encode(&[]).unwrap().is_empty());
        let e = m.encode(&[1]).unwrap();
        assert_eq!(e[0], vec![r(1), r(1), r(2), r(1)]);
        assert_eq!(m.encode(&[2]).unwrap_err(), TransformerError::UnknownSymbol(2));
    }

    #[test]
    fn zero_steps_is_invalid() {
        let m = identity_model(4, 1, 0);
        assert_eq!(m.decode(&[]).unwrap_err(), TransformerError::InvalidSteps);
        assert_eq!(m.validate().unwrap_err(), TransformerError::InvalidSteps);
    }
}
