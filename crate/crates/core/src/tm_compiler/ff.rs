//! Feedforward stages: a functional affine+ReLU layer whose linear read-out
//! is fused with the round correction, giving the three ff slots
//! `round(A₂ φ(A₁ h + b₁) + b₂)`.

use crate::matrix::{Affine, MatrixBuilder};
use crate::scalar::{Rational, Scalar};

/// Hidden unit `φ(Σ coef·h_c + bias)`.
#[derive(Debug, Clone, Default)]
pub struct Unit {
    pub terms: Vec<(usize, i64)>,
    pub bias: i64,
}

/// Output coordinate `Σ coef·u_k + bias` over hidden units.
#[derive(Debug, Clone, Default)]
pub struct Readout {
    pub terms: Vec<(usize, i64)>,
    pub bias: i64,
}

#[derive(Debug, Clone)]
pub struct FfStage {
    pub d: usize,
    pub hidden: Vec<Unit>,
    pub out: Vec<Readout>,
}

impl FfStage {
    pub fn new(d: usize) -> Self {
        FfStage { d, hidden: Vec::new(), out: vec![Readout::default(); d] }
    }

    pub fn unit(&mut self, u: Unit) -> usize {
        self.hidden.push(u);
        self.hidden.len() - 1
    }

    /// Output `c` becomes a copy of input `src`.
    pub fn copy(&mut self, c: usize, src: usize) {
        let k = self.unit(Unit { terms: vec![(src, 1)], bias: 0 });
        self.out[c] = Readout { terms: vec![(k, 1)], bias: 0 };
    }

    /// The three affine slots, round applied to every output coordinate.
    pub fn build(&self) -> [Affine<Rational>; 3] {
        let d = self.d;
        let h = self.hidden.len();
        let int = |v: i64| <Rational as Scalar>::from_i64(v);
        let mut w0 = MatrixBuilder::new(h, d);
        let mut b0 = Vec::with_capacity(h);
        for (k, u) in self.hidden.iter().enumerate() {
            for &(c, v) in &u.terms {
                w0.add(k, c, &int(v));
            }
            b0.push(int(u.bias));
        }
        let third = <Rational as Scalar>::from_ratio(1, 3);
        let two_thirds = <Rational as Scalar>::from_ratio(2, 3);
        let mut w1 = MatrixBuilder::new(2 * d, h);
        let mut b1 = Vec::with_capacity(2 * d);
        let mut w2 = MatrixBuilder::new(d, 2 * d);
        for (c, r) in self.out.iter().enumerate() {
            for &(k, v) in &r.terms {
                w1.add(2 * c, k, &int(v));
                w1.add(2 * c + 1, k, &int(v));
            }
            b1.push(int(r.bias) - third.clone());
            b1.push(int(r.bias) - two_thirds.clone());
            w2.set(c, 2 * c, int(3));
            w2.set(c, 2 * c + 1, int(-3));
        }
        [
            Affine::new(w0.build(), b0),
            Affine::new(w1.build(), b1),
            Affine::new(w2.build(), vec![int(0); d]),
        ]
    }
}

/// A coordinate, possibly negated (`1 − h_c`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lit {
    pub coord: usize,
    pub neg: bool,
}

pub fn pos(coord: usize) -> Lit {
    Lit { coord, neg: false }
}

pub fn neg(coord: usize) -> Lit {
    Lit { coord, neg: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Zero,
    Id(Lit),
    And(Lit, Lit),
    Or(Lit, Lit),
}

/// One boolean gate per output coordinate, built from the gate gadgets.
#[derive(Debug, Clone)]
pub struct BoolLayer {
    pub cells: Vec<Cell>,
}

impl BoolLayer {
    /// Every coordinate below `live` copies itself; the rest are zero.
    pub fn copy_all(d: usize, live: usize) -> Self {
        BoolLayer { cells: (0..d).map(|c| if c < live { Cell::Id(pos(c)) } else { Cell::Zero }).collect() }
    }

    pub fn set(&mut self, c: usize, cell: Cell) -> &mut Self {
        self.cells[c] = cell;
        self
    }

    pub fn stage(&self) -> FfStage {
        let mut st = FfStage::new(self.cells.len());
        let lit = |l: Lit, terms: &mut Vec<(usize, i64)>| -> i64 {
            terms.push((l.coord, if l.neg { -1 } else { 1 }));
            i64::from(l.neg)
        };
        for (c, cell) in self.cells.iter().enumerate() {
            match *cell {
                Cell::Zero => {}
                Cell::Id(l) => {
                    let mut u = Unit::default();
                    u.bias = lit(l, &mut u.terms);
                    let k = st.unit(u);
                    st.out[c] = Readout { terms: vec![(k, 1)], bias: 0 };
                }
                Cell::And(a, b) => {
                    let mut u = Unit::default();
                    u.bias = lit(a, &mut u.terms) + lit(b, &mut u.terms) - 1;
                    let k = st.unit(u);
                    st.out[c] = Readout { terms: vec![(k, 1)], bias: 0 };
                }
                Cell::Or(a, b) => {
                    // 1 − φ(1 − a − b)
                    let mut u = Unit::default();
                    let ba = lit(a, &mut u.terms);
                    let bb = lit(b, &mut u.terms);
                    for t in &mut u.terms {
                        t.1 = -t.1;
                    }
                    u.bias = 1 - ba - bb;
                    let k = st.unit(u);
                    st.out[c] = Readout { terms: vec![(k, -1)], bias: 1 };
                }
            }
        }
        st
    }
}
