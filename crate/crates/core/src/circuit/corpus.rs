//! Circuits shipped with the crate, plus the seeded random corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{layerize, parse_circuit, random_circuit, Circuit, LayeredCircuit, RandomCircuitParams};

pub const AND: &str = include_str!("../../corpus/circuits/and.ckt");
pub const OR: &str = include_str!("../../corpus/circuits/or.ckt");
pub const NOT: &str = include_str!("../../corpus/circuits/not.ckt");
pub const MAJORITY: &str = include_str!("../../corpus/circuits/majority.ckt");
pub const PARITY: &str = include_str!("../../corpus/circuits/parity.ckt");

pub fn named() -> Vec<(&'static str, Circuit)> {
    [("and", AND), ("or", OR), ("not", NOT), ("majority", MAJORITY), ("parity", PARITY)]
        .into_iter()
        .map(|(n, t)| (n, parse_circuit(t).expect("corpus circuit")))
        .collect()
}

pub const RANDOM_MAX_INPUTS: usize = 10;
pub const RANDOM_MAX_WIDTH: usize = 8;
pub const RANDOM_MAX_DEPTH: usize = 10;

/// `count` layered circuits with r ≤ 10 inputs, at most 8 gates per gate
/// layer after layering, and depth q ≤ 10 counting the input layer.
pub fn random_layered(seed: u64, count: usize) -> Vec<LayeredCircuit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = RandomCircuitParams {
            inputs: rng.gen_range(1..=RANDOM_MAX_INPUTS),
            width: rng.gen_range(1..=RANDOM_MAX_WIDTH),
            gate_layers: rng.gen_range(1..RANDOM_MAX_DEPTH),
            skip_prob: 0.25,
        };
        let l = layerize(&random_circuit(&mut rng, p));
        if l.layers.iter().all(|g| g.len() <= RANDOM_MAX_WIDTH) {
            out.push(l);
        }
    }
    out
}
