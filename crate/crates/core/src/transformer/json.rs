//! Transformer JSON. Matrices use the sparse triplet form since compiled
//! models are almost entirely zeros.

use serde_json::{json, Value};

use super::{Attention, PositionalEncoding, TransformerError, TransformerLayer, TransformerModel};
use crate::matrix::{vec_from_json, vec_to_json, Affine, Matrix};
use crate::scalar::{Mode, Rational, Scalar};

pub const TRANSFORMER_FORMAT: &str = "sma-transformer/1";

#[derive(Debug, Clone, PartialEq)]
pub enum AnyTransformer {
    Rational(TransformerModel<Rational>),
    Float(TransformerModel<f64>),
}

impl AnyTransformer {
    pub fn mode(&self) -> Mode {
        match self {
            AnyTransformer::Rational(_) => Mode::Rational,
            AnyTransformer::Float(_) => Mode::Float,
        }
    }

    pub fn to_float(&self) -> TransformerModel<f64> {
        match self {
            AnyTransformer::Rational(m) => m.to_float(),
            AnyTransformer::Float(m) => m.clone(),
        }
    }

    pub fn meta(&self) -> &serde_json::Map<String, Value> {
        match self {
            AnyTransformer::Rational(m) => &m.meta,
            AnyTransformer::Float(m) => &m.meta,
        }
    }
}

fn err(msg: impl Into<String>) -> TransformerError {
    TransformerError::Format(msg.into())
}

fn affine_json<T: Scalar>(a: &Affine<T>) -> Value {
    json!({"W": a.weight.to_json_sparse(), "b": vec_to_json(&a.bias)})
}

fn attn_json<T: Scalar>(a: &Attention<T>) -> Value {
    json!({
        "Q": affine_json(&a.query),
        "K": affine_json(&a.key),
        "V": affine_json(&a.value),
        "K0": vec_to_json(&a.null_key),
        "V0": vec_to_json(&a.null_value),
    })
}

fn field<'a>(v: &'a Value, k: &str, ctx: &str) -> Result<&'a Value, TransformerError> {
    v.get(k).ok_or_else(|| err(format!("{ctx}: missing `{k}`")))
}

fn affine_from<T: Scalar>(v: &Value, ctx: &str) -> Result<Affine<T>, TransformerError> {
    let w = Matrix::from_json(field(v, "W", ctx)?, None).map_err(|e| err(format!("{ctx}: {e}")))?;
    let b = vec_from_json(field(v, "b", ctx)?).map_err(|e| err(format!("{ctx}: {e}")))?;
    if b.len() != w.rows() {
        return Err(err(format!("{ctx}: bias length {} for {} rows", b.len(), w.rows())));
    }
    Ok(Affine::new(w, b))
}

fn vec_field<T: Scalar>(v: &Value, k: &str, ctx: &str) -> Result<Vec<T>, TransformerError> {
    vec_from_json(field(v, k, ctx)?).map_err(|e| err(format!("{ctx}.{k}: {e}")))
}

fn attn_from<T: Scalar>(v: &Value, ctx: &str) -> Result<Attention<T>, TransformerError> {
    Ok(Attention {
        query: affine_from(field(v, "Q", ctx)?, &format!("{ctx}.Q"))?,
        key: affine_from(field(v, "K", ctx)?, &format!("{ctx}.K"))?,
        value: affine_from(field(v, "V", ctx)?, &format!("{ctx}.V"))?,
        null_key: vec_field(v, "K0", ctx)?,
        null_value: vec_field(v, "V0", ctx)?,
    })
}

fn usize_field(v: &Value, k: &str, ctx: &str) -> Result<usize, TransformerError> {
    field(v, k, ctx)?.as_u64().map(|n| n as usize).ok_or_else(|| err(format!("{ctx}: `{k}` must be an integer")))
}

impl<T: Scalar> TransformerModel<T> {
    pub fn to_json(&self) -> Value {
        let layers: Vec<Value> = self
            .layers
            .iter()
            .map(|l| {
                json!({
                    "dec_attn": attn_json(&l.dec_attn),
                    "enc_attn": attn_json(&l.enc_attn),
                    "ff": l.ff.iter().map(affine_json).collect::<Vec<_>>(),
                    "correction": l.correction_tail,
                })
            })
            .collect();
        json!({
            "format": TRANSFORMER_FORMAT,
            "mode": T::MODE.to_string(),
            "d": self.d,
            "alphabet": self.alphabet,
            "embed": self.embed.to_json_sparse(),
            "pos": {"offset": self.pos.offset, "bits": self.pos.bits},
            "h00": vec_to_json(&self.h00),
            "layers": layers,
            "cls": vec_to_json(&self.cls),
            "steps": self.steps,
            "meta": self.meta,
        })
    }

    fn from_json_value(v: &Value) -> Result<Self, TransformerError> {
        let top = "transformer";
        let alphabet = field(v, "alphabet", top)?
            .as_array()
            .ok_or_else(|| err("`alphabet` must be an array"))?
            .iter()
            .map(|s| s.as_str().map(str::to_string).ok_or_else(|| err("alphabet entries must be strings")))
            .collect::<Result<Vec<_>, _>>()?;
        let pos = field(v, "pos", top)?;
        let layers = field(v, "layers", top)?
            .as_array()
            .ok_or_else(|| err("`layers` must be an array"))?
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let ctx = format!("layer {j}");
                let ff = field(l, "ff", &ctx)?.as_array().ok_or_else(|| err(format!("{ctx}: `ff` must be an array")))?;
                if ff.len() != 3 {
                    return Err(err(format!("{ctx}: expected 3 feedforward sublayers, got {}", ff.len())));
                }
                Ok(TransformerLayer {
                    dec_attn: attn_from(field(l, "dec_attn", &ctx)?, &format!("{ctx}.dec_attn"))?,
                    enc_attn: attn_from(field(l, "enc_attn", &ctx)?, &format!("{ctx}.enc_attn"))?,
                    ff: [
                        affine_from(&ff[0], &format!("{ctx}.ff0"))?,
                        affine_from(&ff[1], &format!("{ctx}.ff1"))?,
                        affine_from(&ff[2], &format!("{ctx}.ff2"))?,
                    ],
                    correction_tail: l.get("correction").and_then(Value::as_bool).unwrap_or(false),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = TransformerModel {
            d: usize_field(v, "d", top)?,
            alphabet,
            embed: Matrix::from_json(field(v, "embed", top)?, None).map_err(|e| err(format!("embed: {e}")))?,
            pos: PositionalEncoding { offset: usize_field(pos, "offset", "pos")?, bits: usize_field(pos, "bits", "pos")? },
            h00: vec_field(v, "h00", top)?,
            layers,
            cls: vec_field(v, "cls", top)?,
            steps: usize_field(v, "steps", top)?,
            meta: v.get("meta").and_then(Value::as_object).cloned().unwrap_or_default(),
        };
        m.validate()?;
        Ok(m)
    }
}

pub fn parse_transformer_json(text: &str) -> Result<AnyTransformer, TransformerError> {
    let v: Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    match v.get("format").and_then(Value::as_str) {
        Some(TRANSFORMER_FORMAT) => {}
        Some(f) => return Err(err(format!("unsupported format `{f}`"))),
        None => return Err(err("missing `format`")),
    }
    let mode: Mode = v.get("mode").and_then(Value::as_str).unwrap_or("rational").parse().map_err(err)?;
    Ok(match mode {
        Mode::Rational => AnyTransformer::Rational(TransformerModel::from_json_value(&v)?),
        Mode::Float => AnyTransformer::Float(TransformerModel::from_json_value(&v)?),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::identity_model;
    use super::super::Attention;
    use super::*;

    #[test]
    fn round_trip() {
        let mut m = identity_model(4, 2, 3);
        m.layers[0].dec_attn = Attention::zeros(4, 2);
        m.layers[1].correction_tail = true;
        m.meta.insert("k".into(), json!(1));
        let text = m.to_json().to_string();
        assert_eq!(parse_transformer_json(&text).unwrap(), AnyTransformer::Rational(m.clone()));
        let f = m.to_float();
        assert_eq!(parse_transformer_json(&f.to_json().to_string()).unwrap(), AnyTransformer::Float(f));
    }

    #[test]
    fn zero_steps_rejected_on_load() {
        let mut v = identity_model(4, 1, 2).to_json();
        v["steps"] = json!(0);
        assert_eq!(parse_transformer_json(&v.to_string()).unwrap_err(), TransformerError::InvalidSteps);
    }
}
