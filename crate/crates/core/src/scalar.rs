//! Numeric modes: exact rationals and IEEE-754 doubles behind one trait.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Arbitrary-precision rational.
pub type Rational = BigRational;

/// Tie tolerance used by float-mode hard-max attention.
pub const FLOAT_TIE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rational,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Rational => f.write_str("rational"),
            Mode::Float => f.write_str("float"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rational" => Ok(Mode::Rational),
            "float" => Ok(Mode::Float),
            other => Err(format!("unknown mode `{other}` (expected rational or float)")),
        }
    }
}

/// Scalar field used by every evaluator in the crate.
pub trait Scalar: Clone + PartialEq + PartialOrd + fmt::Debug + Send + Sync + 'static {
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_i64(v: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn to_rational(&self) -> Rational;
    fn to_f64(&self) -> f64;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div_usize(&self, n: usize) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;

    /// `self += a * b`
    fn mul_add_assign(&mut self, a: &Self, b: &Self);
    fn add_assign(&mut self, o: &Self);

    fn relu(&self) -> Self {
        if *self > Self::zero() {
            self.clone()
        } else {
            Self::zero()
        }
    }

    /// Whether `self` counts as attaining `max` in a hard-max argmax set.
    fn ties_max(&self, max: &Self) -> bool;

    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Result<Self, String>;
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Rational;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn to_rational(&self) -> Rational {
        self.clone()
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div_usize(&self, n: usize) -> Self {
        self / Rational::from_integer(BigInt::from(n))
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        if a.is_integer() && b.is_integer() && self.is_integer() {
            let v = self.numer() + a.numer() * b.numer();
            *self = Rational::from_integer(v);
        } else {
            *self += a * b;
        }
    }
    fn add_assign(&mut self, o: &Self) {
        *self += o;
    }
    fn ties_max(&self, max: &Self) -> bool {
        self == max
    }
    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }
    fn from_json(v: &Value) -> Result<Self, String> {
        match v {
            Value::String(s) => parse_rational(s),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(<Rational as Scalar>::from_i64(i))
                } else {
                    let f = n.as_f64().ok_or_else(|| format!("bad number {n}"))?;
                    Rational::from_float(f).ok_or_else(|| format!("non-finite number {n}"))
                }
            }
            other => Err(format!("expected rational string, got {other}")),
        }
    }
}

/// Parses `"num/den"` or an integer string.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let t = s.trim();
    let r = match t.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let d: BigInt = d.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            if Zero::is_zero(&d) {
                return Err(format!("zero denominator in `{s}`"));
            }
            Rational::new(n, d)
        }
        None => Rational::from_integer(t.parse().map_err(|_| format!("bad rational `{s}`"))?),
    };
    Ok(r)
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn to_rational(&self) -> Rational {
        Rational::from_float(*self).unwrap_or_else(<Rational as Scalar>::zero)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div_usize(&self, n: usize) -> Self {
        self / n as f64
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn add_assign(&mut self, o: &Self) {
        *self += o;
    }
    fn ties_max(&self, max: &Self) -> bool {
        max - self <= FLOAT_TIE_TOL
    }
    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self).map(Value::Number).unwrap_or(Value::Null)
    }
    fn from_json(v: &Value) -> Result<Self, String> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| format!("bad number {n}")),
            Value::String(s) => parse_rational(s).map(|r| <f64 as Scalar>::from_rational(&r)),
            other => Err(format!("expected number, got {other}")),
        }
    }
}
