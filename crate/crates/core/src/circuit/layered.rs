//! Layered normal form: every edge joins consecutive layers.

use std::collections::{BTreeMap, HashSet};

use super::{Circuit, CircuitError, GateKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredGate {
    pub name: String,
    pub kind: GateKind,
    /// Indices into the previous layer.
    pub args: Vec<usize>,
}

/// Layer 0 holds the inputs; `layers[i]` is gate layer `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredCircuit {
    pub input_names: Vec<String>,
    pub layers: Vec<Vec<LayeredGate>>,
    /// Index of the output node in the last layer (layer 0 when there are no gates).
    pub output: usize,
}

impl LayeredCircuit {
    pub fn num_inputs(&self) -> usize {
        self.input_names.len()
    }

    /// m_0..m_{q-1}
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_names.len()).chain(self.layers.iter().map(Vec::len)).collect()
    }

    /// q, counting the input layer.
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    /// c, counting inputs.
    pub fn size(&self) -> usize {
        self.widths().iter().sum()
    }

    /// m = max_i m_i
    pub fn width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(0)
    }

    pub fn id_gate_count(&self) -> usize {
        self.layers.iter().flatten().filter(|g| g.kind == GateKind::Id).count()
    }

    /// Checks arity and that every argument indexes the previous layer.
    pub fn is_layered(&self) -> bool {
        let widths = self.widths();
        let edges_ok = self.layers.iter().enumerate().all(|(i, layer)| {
            layer
                .iter()
                .all(|g| g.args.len() == g.kind.arity() && g.args.iter().all(|&a| a < widths[i]))
        });
        edges_ok && self.output < *widths.last().unwrap_or(&0)
    }

    /// Values of every layer, layer 0 first.
    pub fn evaluate_layers(&self, x: &[bool]) -> Result<Vec<Vec<bool>>, CircuitError> {
        if x.len() != self.num_inputs() {
            return Err(CircuitError::LengthMismatch { expected: self.num_inputs(), got: x.len() });
        }
        let mut out = vec![x.to_vec()];
        for layer in &self.layers {
            let prev = out.last().unwrap();
            let vals =
                layer.iter().map(|g| g.kind.apply(&g.args.iter().map(|&a| prev[a]).collect::<Vec<_>>())).collect();
            out.push(vals);
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: &[bool]) -> Result<bool, CircuitError> {
        Ok(self.evaluate_layers(x)?.last().unwrap()[self.output])
    }

    /// Flat circuit with the same nodes, in layer order.
    pub fn to_circuit(&self) -> Circuit {
        let mut names: Vec<Vec<&str>> = vec![self.input_names.iter().map(String::as_str).collect()];
        let mut gates = Vec::new();
        for layer in &self.layers {
            let prev = names.last().unwrap().clone();
            for g in layer {
                let args: Vec<&str> = g.args.iter().map(|&a| prev[a]).collect();
                gates.push((g.name.as_str(), g.kind, args));
            }
            names.push(layer.iter().map(|g| g.name.as_str()).collect());
        }
        let out = names.last().unwrap()[self.output];
        let inputs: Vec<&str> = self.input_names.iter().map(String::as_str).collect();
        let gates: Vec<(&str, GateKind, &[&str])> = gates.iter().map(|(n, k, a)| (*n, *k, a.as_slice())).collect();
        Circuit::build(&inputs, &gates, out).expect("layered circuit is well formed")
    }
}

/// Assigns each gate to 1 + the max layer of its arguments and bridges longer
/// edges with one ID gate per skipped layer (shared between consumers).
/// Gates that do not feed the output are dropped; inputs are always kept.
pub fn layerize(c: &Circuit) -> LayeredCircuit {
    let nodes = c.nodes();

    let mut live = vec![false; nodes.len()];
    live[c.output()] = true;
    for i in (0..nodes.len()).rev() {
        if live[i] {
            for &a in &nodes[i].args {
                live[a] = true;
            }
        }
    }

    let mut level = vec![0usize; nodes.len()];
    for (i, g) in nodes.iter().enumerate() {
        if g.kind != GateKind::Input {
            level[i] = 1 + g.args.iter().map(|&a| level[a]).max().unwrap_or(0);
        }
    }
    let depth = level[c.output()];

    // Layers whose copy of node `src` is needed, keyed by node index.
    let mut need: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    for (i, g) in nodes.iter().enumerate() {
        if !live[i] || g.kind == GateKind::Input {
            continue;
        }
        for &a in &g.args {
            for l in level[a] + 1..level[i] {
                need.entry(a).or_default().insert(l);
            }
        }
    }

    let mut taken: HashSet<String> = nodes.iter().map(|g| g.id.clone()).collect();
    let mut fresh = |base: &str, l: usize| {
        let mut name = format!("{base}_id{l}");
        let mut k = 0;
        while taken.contains(&name) {
            k += 1;
            name = format!("{base}_id{l}_{k}");
        }
        taken.insert(name.clone());
        name
    };

    // slot[(node, layer)] = position of that node's copy in `layer`.
    let mut slot: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (pos, &i) in c.inputs().iter().enumerate() {
        slot.insert((i, 0), pos);
    }
    let mut layers: Vec<Vec<LayeredGate>> = vec![Vec::new(); depth];
    for l in 1..=depth {
        let mut layer = Vec::new();
        for (i, g) in nodes.iter().enumerate() {
            if live[i] && g.kind != GateKind::Input && level[i] == l {
                let args = g.args.iter().map(|&a| slot[&(a, l - 1)]).collect();
                slot.insert((i, l), layer.len());
                layer.push(LayeredGate { name: g.id.clone(), kind: g.kind, args });
            }
        }
        for (&src, ls) in &need {
            if ls.contains(&l) {
                let arg = slot[&(src, l - 1)];
                slot.insert((src, l), layer.len());
                layer.push(LayeredGate { name: fresh(&nodes[src].id, l), kind: GateKind::Id, args: vec![arg] });
            }
        }
        layers[l - 1] = layer;
    }

    LayeredCircuit {
        input_names: c.inputs().iter().map(|&i| nodes[i].id.clone()).collect(),
        layers,
        output: slot[&(c.output(), depth)],
    }
}
