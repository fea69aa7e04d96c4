//! Net JSON reader and writer.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{LayeredNet, NetError, ParamScope, Sublayer, SublayerOp};
use crate::matrix::{vec_from_json, vec_to_json, Affine, Matrix};
use crate::scalar::{Mode, Rational, Scalar};

pub const NET_FORMAT: &str = "sma-net/1";

/// A net loaded from disk in whichever mode its file declares.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyNet {
    Rational(LayeredNet<Rational>),
    Float(LayeredNet<f64>),
}

impl AnyNet {
    pub fn mode(&self) -> Mode {
        match self {
            AnyNet::Rational(_) => Mode::Rational,
            AnyNet::Float(_) => Mode::Float,
        }
    }

    pub fn to_float(&self) -> LayeredNet<f64> {
        match self {
            AnyNet::Rational(n) => n.to_float(),
            AnyNet::Float(n) => n.clone(),
        }
    }

    pub fn to_rational(&self) -> LayeredNet<Rational> {
        match self {
            AnyNet::Rational(n) => n.clone(),
            AnyNet::Float(n) => n.to_rational(),
        }
    }

    /// Converts to the requested mode.
    pub fn in_mode(&self, mode: Mode) -> AnyNet {
        match mode {
            Mode::Rational => AnyNet::Rational(self.to_rational()),
            Mode::Float => AnyNet::Float(self.to_float()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            AnyNet::Rational(n) => n.to_json(),
            AnyNet::Float(n) => n.to_json(),
        }
    }

    pub fn meta(&self) -> &BTreeMap<String, Value> {
        match self {
            AnyNet::Rational(n) => &n.meta,
            AnyNet::Float(n) => &n.meta,
        }
    }
}

fn fmt_err(msg: impl Into<String>) -> NetError {
    NetError::Format(msg.into())
}

impl<T: Scalar> LayeredNet<T> {
    pub fn to_json(&self) -> Value {
        let subs: Vec<Value> = self
            .sublayers
            .iter()
            .map(|s| {
                let mut o = Map::new();
                o.insert("kind".into(), json!(s.kind_name()));
                let steps = s.steps();
                o.insert("W".into(), steps[0].0.weight.to_json_dense());
                o.insert("b".into(), vec_to_json(&steps[0].0.bias));
                if let Some((outer, _)) = steps.get(1) {
                    o.insert("W2".into(), outer.weight.to_json_dense());
                    o.insert("b2".into(), vec_to_json(&outer.bias));
                }
                o.insert("correction".into(), json!(s.correction));
                if s.scope != ParamScope::All {
                    o.insert("params".into(), serde_json::to_value(s.scope).expect("scope serializes"));
                }
                Value::Object(o)
            })
            .collect();
        json!({
            "format": NET_FORMAT,
            "mode": T::MODE.to_string(),
            "input_dim": self.input_dim,
            "sublayers": subs,
            "meta": self.meta,
        })
    }

    fn from_json_value(v: &Value) -> Result<Self, NetError> {
        let input_dim = v
            .get("input_dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| fmt_err("missing `input_dim`"))? as usize;
        let subs = v
            .get("sublayers")
            .and_then(Value::as_array)
            .ok_or_else(|| fmt_err("missing `sublayers`"))?;
        let mut dim = input_dim;
        let mut out = Vec::with_capacity(subs.len());
        for (i, s) in subs.iter().enumerate() {
            let ctx = |e: String| fmt_err(format!("sublayer {i}: {e}"));
            let affine = |wk: &str, bk: &str, cols: usize| -> Result<Affine<T>, NetError> {
                let w = Matrix::<T>::from_json(s.get(wk).ok_or_else(|| ctx(format!("missing `{wk}`")))?, Some(cols))
                    .map_err(ctx)?;
                let b = vec_from_json::<T>(s.get(bk).ok_or_else(|| ctx(format!("missing `{bk}`")))?).map_err(ctx)?;
                if b.len() != w.rows() {
                    return Err(ctx(format!("`{bk}` has {} entries for {} rows", b.len(), w.rows())));
                }
                Ok(Affine::new(w, b))
            };
            let kind = s.get("kind").and_then(Value::as_str).ok_or_else(|| ctx("missing `kind`".into()))?;
            let first = affine("W", "b", dim)?;
            let op = match kind {
                "linrelu" => SublayerOp::LinRelu(first),
                "lin" => SublayerOp::Lin(first),
                "round" => {
                    let outer = affine("W2", "b2", first.out_dim())?;
                    SublayerOp::Round { inner: first, outer }
                }
                other => return Err(ctx(format!("unknown kind `{other}`"))),
            };
            let correction = s.get("correction").and_then(Value::as_bool).unwrap_or(false);
            let scope = match s.get("params") {
                None => ParamScope::All,
                Some(p) => serde_json::from_value(p.clone()).map_err(|e| ctx(e.to_string()))?,
            };
            let sub = Sublayer { op, correction, scope };
            dim = sub.out_dim();
            out.push(sub);
        }
        let mut net = LayeredNet::new(input_dim, out)?;
        if let Some(Value::Object(m)) = v.get("meta") {
            net.meta = m.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        }
        Ok(net)
    }
}

/// Reads Net JSON. The `mode` field picks the scalar type; it defaults to
/// rational when every number is a string and float otherwise.
pub fn parse_net_json(text: &str) -> Result<AnyNet, NetError> {
    let v: Value = serde_json::from_str(text).map_err(|e| fmt_err(e.to_string()))?;
    if let Some(f) = v.get("format").and_then(Value::as_str) {
        if f != NET_FORMAT {
            return Err(fmt_err(format!("unsupported format `{f}`")));
        }
    }
    let mode = match v.get("mode").and_then(Value::as_str) {
        Some(m) => m.parse::<Mode>().map_err(fmt_err)?,
        None if text.contains("\"/") || !has_float_literal(&v) => Mode::Rational,
        None => Mode::Float,
    };
    Ok(match mode {
        Mode::Rational => AnyNet::Rational(LayeredNet::from_json_value(&v)?),
        Mode::Float => AnyNet::Float(LayeredNet::from_json_value(&v)?),
    })
}

fn has_float_literal(v: &Value) -> bool {
    match v {
        Value::Number(n) => !n.is_i64() && !n.is_u64(),
        Value::Array(a) => a.iter().any(has_float_literal),
        Value::Object(o) => o.values().any(has_float_literal),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{round_sublayer, toy};
    use super::*;

    #[test]
    fn round_trip_both_modes() {
        let mut net = toy::product_net::<Rational>(3, true);
        net.meta.insert("note".into(), json!("x"));
        let text = net.to_json().to_string();
        assert_eq!(parse_net_json(&text).unwrap(), AnyNet::Rational(net.clone()));
        let f = net.to_float();
        assert_eq!(parse_net_json(&f.to_json().to_string()).unwrap(), AnyNet::Float(f));
    }

    #[test]
    fn rational_strings_are_exact() {
        let net = LayeredNet::new(2, vec![round_sublayer::<Rational>(&[true, true])]).unwrap();
        let text = net.to_json().to_string();
        assert!(text.contains("\"-1/3\""));
        assert_eq!(parse_net_json(&text).unwrap().to_rational(), net);
    }

    #[test]
    fn handwritten_float_net() {
        let text = r#"{"input_dim":1,"sublayers":[{"kind":"lin","W":[[0.5]],"b":[0.25]}]}"#;
        let net = parse_net_json(text).unwrap();
        assert_eq!(net.mode(), Mode::Float);
        assert_eq!(net.to_float().forward(&[1.0]).unwrap(), vec![0.75]);
    }

    #[test]
    fn bad_dims_are_reported() {
        let text = r#"{"input_dim":2,"sublayers":[{"kind":"lin","W":[[1]],"b":[0]}]}"#;
        assert!(matches!(parse_net_json(text).unwrap_err(), NetError::DimMismatch { .. }));
        let text = r#"{"input_dim":1,"sublayers":[{"kind":"conv","W":[[1]],"b":[0]}]}"#;
        assert!(matches!(parse_net_json(text).unwrap_err(), NetError::Format(_)));
    }
}
