//! Dense matrices with a cached nonzero index, and affine maps.
//!
//! Compiled constructions are extremely sparse, so products skip zero
//! weights and zero inputs. Storage stays dense so flattening is trivial.

use serde_json::{json, Value};

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    nz: Vec<Vec<u32>>,
}

impl<T: Scalar> PartialEq for Matrix<T> {
    fn eq(&self, o: &Self) -> bool {
        self.rows == o.rows && self.cols == o.cols && self.data == o.data
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        let nz = (0..rows)
            .map(|r| {
                (0..cols)
                    .filter(|&c| !data[r * cols + c].is_zero())
                    .map(|c| c as u32)
                    .collect()
            })
            .collect();
        Matrix { rows, cols, data, nz }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
            nz: vec![Vec::new(); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = MatrixBuilder::new(n, n);
        for i in 0..n {
            b.set(i, i, T::one());
        }
        b.build()
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix");
            data.extend(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }
    pub fn nonzero_cols(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        self.nz[r].iter().map(|&c| c as usize)
    }
    pub fn nnz(&self) -> usize {
        self.nz.iter().map(Vec::len).sum()
    }
    pub fn is_zero(&self) -> bool {
        self.nz.iter().all(Vec::is_empty)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matrix-vector dimension");
        (0..self.rows).map(|r| self.row_dot(r, x)).collect()
    }

    pub fn row_dot(&self, r: usize, x: &[T]) -> T {
        let mut acc = T::zero();
        let base = r * self.cols;
        for &c in &self.nz[r] {
            let c = c as usize;
            if !x[c].is_zero() {
                acc.mul_add_assign(&self.data[base + c], &x[c]);
            }
        }
        acc
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix::from_vec(self.rows, self.cols, self.data.iter().map(f).collect())
    }

    pub fn l1(&self) -> T {
        let mut s = T::zero();
        for v in &self.data {
            s.add_assign(&v.abs());
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt()
    }

    /// Dense JSON form: list of rows.
    pub fn to_json_dense(&self) -> Value {
        Value::Array(
            (0..self.rows)
                .map(|r| Value::Array((0..self.cols).map(|c| self.get(r, c).to_json()).collect()))
                .collect(),
        )
    }

    /// Sparse JSON form: `{"rows","cols","entries":[[i,j,v],...]}`.
    pub fn to_json_sparse(&self) -> Value {
        let mut entries = Vec::new();
        for r in 0..self.rows {
            for c in self.nonzero_cols(r) {
                entries.push(json!([r, c, self.get(r, c).to_json()]));
            }
        }
        json!({"rows": self.rows, "cols": self.cols, "entries": entries})
    }

    /// Accepts both the dense and sparse forms. `cols_hint` fixes the width
    /// of an empty dense matrix.
    pub fn from_json(v: &Value, cols_hint: Option<usize>) -> Result<Self, String> {
        match v {
            Value::Array(rows) => {
                let mut data = Vec::new();
                let mut cols = None;
                for row in rows {
                    let row = row.as_array().ok_or("matrix row must be an array")?;
                    match cols {
                        None => cols = Some(row.len()),
                        Some(c) if c != row.len() => return Err("ragged matrix".into()),
                        _ => {}
                    }
                    for x in row {
                        data.push(T::from_json(x)?);
                    }
                }
                let cols = cols.or(cols_hint).unwrap_or(0);
                Ok(Matrix::from_vec(rows.len(), cols, data))
            }
            Value::Object(o) => {
                let get = |k: &str| {
                    o.get(k)
                        .and_then(Value::as_u64)
                        .map(|x| x as usize)
                        .ok_or_else(|| format!("sparse matrix missing `{k}`"))
                };
                let (rows, cols) = (get("rows")?, get("cols")?);
                let mut b = MatrixBuilder::new(rows, cols);
                let entries = o
                    .get("entries")
                    .and_then(Value::as_array)
                    .ok_or("sparse matrix missing `entries`")?;
                for e in entries {
                    let e = e.as_array().filter(|e| e.len() == 3).ok_or("bad sparse entry")?;
                    let r = e[0].as_u64().ok_or("bad sparse row")? as usize;
                    let c = e[1].as_u64().ok_or("bad sparse col")? as usize;
                    if r >= rows || c >= cols {
                        return Err(format!("sparse entry ({r},{c}) out of range"));
                    }
                    b.set(r, c, T::from_json(&e[2])?);
                }
                Ok(b.build())
            }
            _ => Err("matrix must be an array or sparse object".into()),
        }
    }
}

/// Mutable staging area; the nonzero index is built once on `build`.
pub struct MatrixBuilder<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> MatrixBuilder<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        MatrixBuilder { rows, cols, data: vec![T::zero(); rows * cols] }
    }
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
    pub fn add(&mut self, r: usize, c: usize, v: &T) {
        self.data[r * self.cols + c].add_assign(v);
    }
    pub fn build(self) -> Matrix<T> {
        Matrix::from_vec(self.rows, self.cols, self.data)
    }
}

/// `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T: Scalar> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Self {
        assert_eq!(weight.rows(), bias.len(), "affine bias length");
        Affine { weight, bias }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine::new(Matrix::zeros(out_dim, in_dim), vec![T::zero(); out_dim])
    }

    pub fn identity(n: usize) -> Self {
        Affine::new(Matrix::identity(n), vec![T::zero(); n])
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.out_dim())
            .map(|r| {
                let mut v = self.weight.row_dot(r, x);
                v.add_assign(&self.bias[r]);
                v
            })
            .collect()
    }

    pub fn apply_relu(&self, x: &[T]) -> Vec<T> {
        let mut y = self.apply(x);
        for v in &mut y {
            *v = v.relu();
        }
        y
    }

    pub fn is_zero(&self) -> bool {
        self.weight.is_zero() && self.bias.iter().all(Scalar::is_zero)
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Affine<U> {
        Affine::new(self.weight.map(&f), self.bias.iter().map(f).collect())
    }

    pub fn l1(&self) -> T {
        let mut s = self.weight.l1();
        for v in &self.bias {
            s.add_assign(&v.abs());
        }
        s
    }

    /// Pushes `W` (row-major) then `b`.
    pub fn flatten_into(&self, out: &mut Vec<T>) {
        out.extend_from_slice(self.weight.data());
        out.extend_from_slice(&self.bias);
    }

    /// Reads `W` then `b` from the front of `src`, returning the rest.
    pub fn unflatten_from<'a>(&self, src: &'a [T]) -> (Self, &'a [T]) {
        let nw = self.weight.data().len();
        let nb = self.bias.len();
        let w = Matrix::from_vec(self.out_dim(), self.in_dim(), src[..nw].to_vec());
        let b = src[nw..nw + nb].to_vec();
        (Affine::new(w, b), &src[nw + nb..])
    }
}

pub fn vec_to_json<T: Scalar>(v: &[T]) -> Value {
    Value::Array(v.iter().map(Scalar::to_json).collect())
}

pub fn vec_from_json<T: Scalar>(v: &Value) -> Result<Vec<T>, String> {
    v.as_array()
        .ok_or_else(|| "expected an array".to_string())?
        .iter()
        .map(T::from_json)
        .collect()
}

pub fn l2_norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64().powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(n: i64, d: i64) -> Rational {
        <Rational as Scalar>::from_ratio(n, d)
    }

    #[test]
    fn sparse_product_matches_dense_definition() {
        let m = Matrix::from_rows(vec![vec![r(1, 2), r(0, 1)], vec![r(-3, 1), r(2, 3)]]);
        let y = m.mul_vec(&[r(2, 1), r(3, 1)]);
        assert_eq!(y, vec![r(1, 1), r(-4, 1)]);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn json_forms_round_trip() {
        let m = Matrix::from_rows(vec![vec![r(1, 3), r(0, 1)], vec![r(0, 1), r(-2, 1)]]);
        let d = Matrix::<Rational>::from_json(&m.to_json_dense(), None).unwrap();
        let s = Matrix::<Rational>::from_json(&m.to_json_sparse(), None).unwrap();
        assert_eq!(d, m);
        assert_eq!(s, m);
        let empty = Matrix::<f64>::from_json(&serde_json::json!([]), Some(4)).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (0, 4));
    }

    #[test]
    fn affine_flatten_round_trip() {
        let a = Affine::new(Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]), vec![5.0, 6.0]);
        let mut flat = Vec::new();
        a.flatten_into(&mut flat);
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (b, rest) = a.unflatten_from(&flat);
        assert_eq!(a, b);
        assert!(rest.is_empty());
    }
}
