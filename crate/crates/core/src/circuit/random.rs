//! Seeded random circuits for corpora and property tests.

use rand::Rng;

use super::{Circuit, GateKind};

#[derive(Debug, Clone, Copy)]
pub struct RandomCircuitParams {
    pub inputs: usize,
    /// Maximum gates per layer.
    pub width: usize,
    /// Number of gate layers.
    pub gate_layers: usize,
    /// Chance that an argument reaches back past the previous layer.
    pub skip_prob: f64,
}

/// Gates are generated layer by layer; the last layer is the single output.
/// With `skip_prob = 0` the result is layered by construction.
pub fn random_circuit<R: Rng>(rng: &mut R, p: RandomCircuitParams) -> Circuit {
    assert!(p.inputs >= 1 && p.width >= 1 && p.gate_layers >= 1);
    let inputs: Vec<String> = (0..p.inputs).map(|i| format!("x{i}")).collect();
    let mut layers: Vec<Vec<String>> = vec![inputs.clone()];
    let mut gates: Vec<(String, GateKind, Vec<String>)> = Vec::new();
    for l in 1..=p.gate_layers {
        let w = if l == p.gate_layers { 1 } else { rng.gen_range(1..=p.width) };
        let mut names = Vec::with_capacity(w);
        for j in 0..w {
            let kind = match rng.gen_range(0..7) {
                0 | 1 => GateKind::And,
                2 | 3 => GateKind::Or,
                4 | 5 => GateKind::Not,
                _ => GateKind::Id,
            };
            let args = (0..kind.arity())
                .map(|_| {
                    let src = if l > 1 && rng.gen_bool(p.skip_prob) { rng.gen_range(0..l - 1) } else { l - 1 };
                    let layer = &layers[src];
                    layer[rng.gen_range(0..layer.len())].clone()
                })
                .collect();
            let name = format!("g{l}_{j}");
            gates.push((name.clone(), kind, args));
            names.push(name);
        }
        layers.push(names);
    }
    let out = layers.last().unwrap()[0].clone();
    let ins: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let gs: Vec<(&str, GateKind, Vec<&str>)> =
        gates.iter().map(|(n, k, a)| (n.as_str(), *k, a.iter().map(String::as_str).collect())).collect();
    let gs: Vec<(&str, GateKind, &[&str])> = gs.iter().map(|(n, k, a)| (*n, *k, a.as_slice())).collect();
    Circuit::build(&ins, &gs, &out).expect("generated circuit is well formed")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::{all_inputs, layerize};
    use super::*;

    #[test]
    fn generator_is_seeded() {
        let p = RandomCircuitParams { inputs: 4, width: 5, gate_layers: 4, skip_prob: 0.3 };
        let a = random_circuit(&mut ChaCha8Rng::seed_from_u64(7), p);
        let b = random_circuit(&mut ChaCha8Rng::seed_from_u64(7), p);
        assert_eq!(a, b);
    }

    #[test]
    fn no_skips_means_layered() {
        let p = RandomCircuitParams { inputs: 5, width: 6, gate_layers: 5, skip_prob: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let c = random_circuit(&mut rng, p);
            let l = layerize(&c);
            assert_eq!(l.id_gate_count(), c.nodes().iter().filter(|g| g.kind == GateKind::Id).count()
                - dead_ids(&c));
            for x in all_inputs(5) {
                assert_eq!(l.evaluate(&x).unwrap(), c.evaluate(&x).unwrap());
            }
        }
    }

    fn dead_ids(c: &Circuit) -> usize {
        let mut live = vec![false; c.nodes().len()];
        live[c.output()] = true;
        for i in (0..c.nodes().len()).rev() {
            if live[i] {
                for &a in &c.nodes()[i].args {
                    live[a] = true;
                }
            }
        }
        c.nodes().iter().enumerate().filter(|(i, g)| !live[*i] && g.kind == GateKind::Id).count()
    }
}
