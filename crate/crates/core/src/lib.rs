//! Compilers from boolean circuits and Turing machines to exact ReLU
//! networks and hard-max transformers, plus all-layer margin tools and
//! sample-complexity calculators.

pub mod bounds;
pub mod circuit;
pub mod circuit_compiler;
pub mod ffnet;
pub mod margin;
pub mod matrix;
pub mod scalar;
pub mod tm_compiler;
pub mod transformer;
pub mod turing;
