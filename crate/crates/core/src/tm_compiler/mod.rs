//! Turing machine → hard-max transformer.
//!
//! Decoder output `o_i` holds one-hot `z_i` in `st`, one-hot `a_i` in `sym1`
//! and `Bin(loc_i)` in `pos2`, zeros elsewhere. One decoder step rebuilds
//! `o_i` from `o_{i−1}` through six blocks: transition, location update,
//! last-writer search, encoder read, output select and identity padding.
//!
//! A pre-init state at virtual cell 0 makes `o_0` input independent: its
//! only job is to step right onto cell 1, so the first real symbol arrives
//! through the same attention path as every later one.

mod ff;
mod verify;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::matrix::{Affine, MatrixBuilder};
use crate::scalar::{Rational, Scalar};
use crate::transformer::{Attention, PositionalEncoding, TransformerLayer, TransformerModel};
use crate::turing::{Move, TmSpec};

pub use ff::{neg, pos, BoolLayer, Cell, FfStage, Lit};
pub use verify::{expected_block_state, verify_input, Boundary, InputCheck, Mismatch, VerifyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TmCompileError {
    #[error("time bound must be at least 1")]
    TimeBoundTooSmall,
    #[error("target width {requested} is below the layout width {required}")]
    WidthTooSmall { requested: usize, required: usize },
    #[error("target depth {requested} is below the construction depth {required}")]
    DepthTooSmall { requested: usize, required: usize },
    #[error("scratch arithmetic needs at least 2 alphabet symbols")]
    AlphabetTooSmall,
    #[error("compiled model metadata: {0}")]
    Metadata(String),
}

/// MSB-first bits of `i`; `None` when `i` needs more than `bits` bits.
pub fn bin_encode(i: usize, bits: usize) -> Option<Vec<bool>> {
    if bits < usize::BITS as usize && i >> bits != 0 {
        return None;
    }
    Some((0..bits).map(|k| (i >> (bits - 1 - k)) & 1 == 1).collect())
}

pub fn bin_decode(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

/// ⌈log₂(T + 2)⌉: enough bits for locations 0..=T+1.
pub fn d_pos_for(time_bound: usize) -> usize {
    let mut p = 0;
    while (1usize << p) < time_bound + 2 {
        p += 1;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    St,
    Sym1,
    Sym2,
    Pos1,
    Pos2,
    Pos3,
    Scr1,
    Scr2,
    Scr3,
    Scr4,
}

impl Group {
    pub const ALL: [Group; 10] = [
        Group::St,
        Group::Sym1,
        Group::Sym2,
        Group::Pos1,
        Group::Pos2,
        Group::Pos3,
        Group::Scr1,
        Group::Scr2,
        Group::Scr3,
        Group::Scr4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::St => "st",
            Group::Sym1 => "sym1",
            Group::Sym2 => "sym2",
            Group::Pos1 => "pos1",
            Group::Pos2 => "pos2",
            Group::Pos3 => "pos3",
            Group::Scr1 => "scr1",
            Group::Scr2 => "scr2",
            Group::Scr3 => "scr3",
            Group::Scr4 => "scr4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateLayout {
    pub states: usize,
    pub symbols: usize,
    pub d_pos: usize,
    /// Zero coordinates appended after the groups.
    pub padding: usize,
}

impl CoordinateLayout {
    pub fn width(&self, g: Group) -> usize {
        match g {
            Group::St => self.states,
            Group::Sym1 | Group::Sym2 | Group::Scr1 | Group::Scr2 => self.symbols,
            Group::Pos1 | Group::Pos2 | Group::Pos3 | Group::Scr3 => self.d_pos,
            Group::Scr4 => 3,
        }
    }

    pub fn offset(&self, g: Group) -> usize {
        Group::ALL.iter().take_while(|&&h| h != g).map(|&h| self.width(h)).sum()
    }

    pub fn range(&self, g: Group) -> Range<usize> {
        let o = self.offset(g);
        o..o + self.width(g)
    }

    /// Coordinate `k` (0-based) of group `g`.
    pub fn at(&self, g: Group, k: usize) -> usize {
        debug_assert!(k < self.width(g));
        self.offset(g) + k
    }

    /// d_TM = |Z| + 2|A| + 3 d_pos + d_scr.
    pub fn d_tm(&self) -> usize {
        Group::ALL.iter().map(|&g| self.width(g)).sum()
    }

    pub fn d(&self) -> usize {
        self.d_tm() + self.padding
    }

    pub fn to_json(&self) -> Value {
        let groups: serde_json::Map<String, Value> = Group::ALL
            .iter()
            .map(|&g| (g.name().to_string(), json!({"offset": self.offset(g), "width": self.width(g)})))
            .collect();
        json!({
            "states": self.states,
            "symbols": self.symbols,
            "d_pos": self.d_pos,
            "padding": self.padding,
            "d_tm": self.d_tm(),
            "d": self.d(),
            "groups": groups,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TmCompileOptions {
    /// Model width; extra coordinates stay exactly zero.
    pub target_width: Option<usize>,
    /// Total layer count; extra layers are identity fillers.
    pub target_layers: Option<usize>,
}

/// Contiguous layer ranges of each block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpans {
    pub transition: Range<usize>,
    pub location: Range<usize>,
    pub exists: usize,
    /// One layer per revealed bit of i′, most significant first.
    pub bits: Range<usize>,
    pub fetch: usize,
    pub encoder_read: usize,
    pub output: Range<usize>,
    pub padding: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledTm {
    pub model: TransformerModel<Rational>,
    pub layout: CoordinateLayout,
    /// The machine with the pre-init state added (it is the initial state).
    pub augmented: TmSpec,
    pub provenance: Vec<String>,
    pub blocks: BlockSpans,
}

pub const PRE_STATE: &str = "z_pre";

struct Builder {
    lay: CoordinateLayout,
    d: usize,
    layers: Vec<TransformerLayer<Rational>>,
    tags: Vec<String>,
}

fn int(v: i64) -> Rational {
    <Rational as Scalar>::from_i64(v)
}

impl Builder {
    fn push(&mut self, tag: impl Into<String>, dec: Option<Attention<Rational>>, enc: Option<Attention<Rational>>, stage: FfStage) {
        assert_eq!(stage.d, self.d);
        self.layers.push(TransformerLayer {
            dec_attn: dec.unwrap_or_else(|| Attention::zeros(self.d, 0)),
            enc_attn: enc.unwrap_or_else(|| Attention::zeros(self.d, 0)),
            ff: stage.build(),
            correction_tail: true,
        });
        self.tags.push(tag.into());
    }

    fn copy_layer(&self) -> BoolLayer {
        BoolLayer::copy_all(self.d, self.lay.d_tm())
    }

    fn c(&self, g: Group, k: usize) -> usize {
        self.lay.at(g, k)
    }

    /// Affine map whose rows are `2·h_c − 1` for each listed coordinate,
    /// then constant rows.
    fn pm_rows(&self, coords: &[usize], consts: &[i64]) -> Affine<Rational> {
        let rows = coords.len() + consts.len();
        let mut w = MatrixBuilder::new(rows, self.d);
        let mut b = vec![int(0); rows];
        for (r, &c) in coords.iter().enumerate() {
            w.set(r, c, int(2));
            b[r] = int(-1);
        }
        for (k, &v) in consts.iter().enumerate() {
            b[coords.len() + k] = int(v);
        }
        Affine::new(w.build(), b)
    }

    fn group_coords(&self, g: Group, n: usize) -> Vec<usize> {
        (0..n).map(|k| self.c(g, k)).collect()
    }

    /// Attention with the given query/key rows, null score `null_score`
    /// (through the trailing constant query row) and a value map.
    fn attention(
        &self,
        query: Affine<Rational>,
        key: Affine<Rational>,
        null_score: i64,
        value: Affine<Rational>,
    ) -> Attention<Rational> {
        let dk = query.out_dim();
        let mut null_key = vec![int(0); dk];
        null_key[dk - 1] = int(null_score);
        Attention { query, key, value, null_key, null_value: vec![int(0); self.d] }
    }

    /// Value map writing constant 1 into coordinate `c`.
    fn const_value(&self, c: usize) -> Affine<Rational> {
        let mut b = vec![int(0); self.d];
        b[c] = int(1);
        Affine::new(MatrixBuilder::new(self.d, self.d).build(), b)
    }

    /// Value map copying group `from` into group `to` (same width).
    fn copy_value(&self, from: Group, to: Group, extra: Option<usize>) -> Affine<Rational> {
        let mut w = MatrixBuilder::new(self.d, self.d);
        for k in 0..self.lay.width(from) {
            w.set(self.c(to, k), self.c(from, k), int(1));
        }
        let mut b = vec![int(0); self.d];
        if let Some(c) = extra {
            b[c] = int(1);
        }
        Affine::new(w.build(), b)
    }

    fn transition(&mut self, spec: &TmSpec) {
        let lay = self.lay;
        let mut st = FfStage::new(self.d);
        let (nz, na) = (spec.num_states(), spec.num_symbols());
        let mut st_terms: Vec<Vec<(usize, i64)>> = vec![Vec::new(); nz];
        let mut sym_terms: Vec<Vec<(usize, i64)>> = vec![Vec::new(); na];
        let mut left = Vec::new();
        let mut right = Vec::new();
        for z in 0..nz {
            for a in 0..na {
                let k = st.unit(ff::Unit {
                    terms: vec![(lay.at(Group::St, z), 1), (lay.at(Group::Sym1, a), 1)],
                    bias: -1,
                });
                let t = spec.step(z, a);
                st_terms[t.next].push((k, 1));
                sym_terms[t.write].push((k, 1));
                match t.mv {
                    Move::Left => left.push((k, 1)),
                    Move::Right => right.push((k, 1)),
                }
            }
        }
        for (z, terms) in st_terms.into_iter().enumerate() {
            st.out[lay.at(Group::St, z)] = ff::Readout { terms, bias: 0 };
        }
        for (a, terms) in sym_terms.into_iter().enumerate() {
            st.out[lay.at(Group::Sym2, a)] = ff::Readout { terms, bias: 0 };
        }
        st.out[lay.at(Group::Scr4, 0)] = ff::Readout { terms: left, bias: 0 };
        st.out[lay.at(Group::Scr4, 1)] = ff::Readout { terms: right, bias: 0 };
        for k in 0..lay.d_pos {
            st.copy(lay.at(Group::Pos1, k), lay.at(Group::Pos1, k));
            st.copy(lay.at(Group::Pos2, k), lay.at(Group::Pos2, k));
        }
        self.push("transition", None, None, st);
    }

    /// Pipelined ripple: subtracts (`borrow`) or adds the flag in `reg`
    /// to the number in `src`, writing `dst`. Takes d_pos + 1 layers.
    fn ripple(&mut self, tag: &str, src: Group, dst: Group, reg: usize, borrow: bool) {
        let dp = self.lay.d_pos;
        let pair = |b: &Builder, t: usize| {
            let g = if t % 2 == 1 { Group::Scr1 } else { Group::Scr2 };
            (b.c(g, 0), b.c(g, 1))
        };
        // Bit handled at pipeline position t (1-based from the LSB).
        let bit = |t: usize| dp - t;
        for t in 1..=dp + 1 {
            let mut l = self.copy_layer();
            if t <= dp {
                let b = self.c(src, bit(t));
                let (u, w) = pair(self, t);
                l.set(u, Cell::Or(pos(b), pos(reg)));
                l.set(w, Cell::And(pos(b), pos(reg)));
                l.set(reg, if borrow { Cell::And(neg(b), pos(reg)) } else { Cell::And(pos(b), pos(reg)) });
            }
            if t >= 2 {
                let (u, w) = pair(self, t - 1);
                l.set(self.c(dst, bit(t - 1)), Cell::And(pos(u), neg(w)));
                l.set(u, Cell::Zero);
                l.set(w, Cell::Zero);
            }
            if t == dp + 1 {
                l.set(reg, Cell::Zero);
            }
            self.push(format!("{tag}.{t}"), None, None, l.stage());
        }
    }

    fn search(&mut self) {
        let dp = self.lay.d_pos as i64;
        let d_pos = self.lay.d_pos;
        let pos2 = self.group_coords(Group::Pos2, d_pos);
        let pos3 = self.group_coords(Group::Pos3, d_pos);

        // Existence: does any past step start at loc_i?
        let q = self.pm_rows(&pos3, &[1]);
        let k = self.pm_rows(&pos2, &[0]);
        let v = self.const_value(self.c(Group::Scr4, 0));
        let att = self.attention(q, k, dp - 1, v);
        let ff = self.copy_layer().stage();
        self.push("search.exists", Some(att), None, ff);

        // Bit j + 1 of i′ given bits 1..=j in scr3.
        for j in 0..d_pos {
            let scr3: Vec<usize> = (0..j).map(|b| self.c(Group::Scr3, b)).collect();
            let pos1: Vec<usize> = (0..=j).map(|b| self.c(Group::Pos1, b)).collect();
            let q = self.pm_rows(&[pos3.clone(), scr3].concat(), &[1, 1]);
            let k = self.pm_rows(&[pos2.clone(), pos1].concat(), &[0]);
            let v = self.const_value(self.c(Group::Scr4, 2));
            let att = self.attention(q, k, dp + j as i64, v);
            let mut l = self.copy_layer();
            l.set(self.c(Group::Scr3, j), Cell::Id(pos(self.c(Group::Scr4, 2))));
            l.set(self.c(Group::Scr4, 2), Cell::Zero);
            self.push(format!("search.bit{}", j + 1), Some(att), None, l.stage());
        }

        // Fetch the symbol written at step i′.
        let scr3 = self.group_coords(Group::Scr3, d_pos);
        let pos1 = self.group_coords(Group::Pos1, d_pos);
        let q = self.pm_rows(&[pos3.clone(), scr3.clone()].concat(), &[1]);
        let k = self.pm_rows(&[pos2, pos1].concat(), &[0]);
        let v = self.copy_value(Group::Sym2, Group::Scr1, None);
        let att = self.attention(q, k, 2 * dp - 1, v);
        let mut l = self.copy_layer();
        for c in scr3 {
            l.set(c, Cell::Zero);
        }
        self.push("search.fetch", Some(att), None, l.stage());
    }

    fn encoder_read(&mut self) {
        let dp = self.lay.d_pos;
        let pos3 = self.group_coords(Group::Pos3, dp);
        let pos1 = self.group_coords(Group::Pos1, dp);
        let q = self.pm_rows(&pos3, &[1]);
        let k = self.pm_rows(&pos1, &[0]);
        let v = self.copy_value(Group::Sym1, Group::Scr2, Some(self.c(Group::Scr4, 1)));
        let att = self.attention(q, k, dp as i64 - 1, v);
        let ff = self.copy_layer().stage();
        self.push("encoder.read", None, Some(att), ff);
    }

    fn output(&mut self, blank: usize) {
        let lay = self.lay;
        let na = lay.symbols;
        let s = |k| lay.at(Group::Scr4, k);
        let scr1 = |a| lay.at(Group::Scr1, a);
        let scr2 = |a| lay.at(Group::Scr2, a);
        let sym1 = |a| lay.at(Group::Sym1, a);

        // Selector: s1 = i′ > 0, then (¬s1 ∧ s2), (¬s1 ∧ ¬s2).
        let mut l = self.copy_layer();
        l.set(s(1), Cell::And(neg(s(0)), pos(s(1))));
        l.set(s(2), Cell::And(neg(s(0)), neg(s(1))));
        self.push("output.select", None, None, l.stage());

        let mut l = self.copy_layer();
        for a in 0..na {
            l.set(scr1(a), Cell::And(pos(s(0)), pos(scr1(a))));
            l.set(scr2(a), Cell::And(pos(s(1)), pos(scr2(a))));
        }
        l.set(sym1(blank), Cell::Id(pos(s(2))));
        self.push("output.gate", None, None, l.stage());

        let mut l = self.copy_layer();
        for a in 0..na {
            if a == blank {
                l.set(scr1(a), Cell::Or(pos(scr1(a)), pos(scr2(a))));
            } else {
                l.set(sym1(a), Cell::Or(pos(scr1(a)), pos(scr2(a))));
            }
        }
        self.push("output.merge", None, None, l.stage());

        let mut l = BoolLayer::copy_all(self.d, 0);
        for z in 0..lay.states {
            l.set(lay.at(Group::St, z), Cell::Id(pos(lay.at(Group::St, z))));
        }
        for a in 0..na {
            l.set(sym1(a), Cell::Id(pos(sym1(a))));
        }
        l.set(sym1(blank), Cell::Or(pos(sym1(blank)), pos(scr1(blank))));
        for k in 0..lay.d_pos {
            l.set(lay.at(Group::Pos2, k), Cell::Id(pos(lay.at(Group::Pos3, k))));
        }
        self.push("output.emit", None, None, l.stage());
    }
}

/// Layers used by the construction before padding: 3 d_pos + 10.
pub fn construction_layers(d_pos: usize) -> usize {
    3 * d_pos + 10
}

pub fn compile_tm(spec: &TmSpec, opts: &TmCompileOptions) -> Result<CompiledTm, TmCompileError> {
    if spec.time_bound < 1 {
        return Err(TmCompileError::TimeBoundTooSmall);
    }
    if spec.num_symbols() < 2 {
        return Err(TmCompileError::AlphabetTooSmall);
    }
    let aug = spec.with_pre_state(PRE_STATE);
    let d_pos = d_pos_for(spec.time_bound);
    let mut lay = CoordinateLayout { states: aug.num_states(), symbols: aug.num_symbols(), d_pos, padding: 0 };
    if let Some(w) = opts.target_width {
        if w < lay.d_tm() {
            return Err(TmCompileError::WidthTooSmall { requested: w, required: lay.d_tm() });
        }
        lay.padding = w - lay.d_tm();
    }
    let natural = construction_layers(d_pos);
    let total = opts.target_layers.unwrap_or(natural);
    if total < natural {
        return Err(TmCompileError::DepthTooSmall { requested: total, required: natural });
    }

    let d = lay.d();
    let mut b = Builder { lay, d, layers: Vec::new(), tags: Vec::new() };
    b.transition(&aug);
    b.ripple("location.borrow", Group::Pos2, Group::Pos3, lay.at(Group::Scr4, 0), true);
    b.ripple("location.carry", Group::Pos3, Group::Pos3, lay.at(Group::Scr4, 1), false);
    b.search();
    b.encoder_read();
    b.output(aug.blank);
    debug_assert_eq!(b.layers.len(), natural);
    while b.layers.len() < total {
        let ff = b.copy_layer().stage();
        b.push("padding", None, None, ff);
    }

    let blocks = BlockSpans {
        transition: 0..1,
        location: 1..2 * d_pos + 3,
        exists: 2 * d_pos + 3,
        bits: 2 * d_pos + 4..3 * d_pos + 4,
        fetch: 3 * d_pos + 4,
        encoder_read: 3 * d_pos + 5,
        output: 3 * d_pos + 6..3 * d_pos + 10,
        padding: natural..total,
    };

    let mut embed = MatrixBuilder::new(d, aug.num_symbols());
    for a in 0..aug.num_symbols() {
        embed.set(lay.at(Group::Sym1, a), a, int(1));
    }
    let mut h00 = vec![int(0); d];
    h00[lay.at(Group::St, aug.init)] = int(1);
    h00[lay.at(Group::Sym1, aug.blank)] = int(1);
    let mut cls = vec![int(0); d];
    for z in 0..aug.num_states() {
        if aug.accept[z] {
            cls[lay.at(Group::St, z)] = int(1);
        } else if aug.reject[z] {
            cls[lay.at(Group::St, z)] = int(-1);
        }
    }

    let mut model = TransformerModel {
        d,
        alphabet: aug.alphabet.clone(),
        embed: embed.build(),
        pos: PositionalEncoding { offset: lay.offset(Group::Pos1), bits: d_pos },
        h00,
        layers: b.layers,
        cls,
        steps: spec.time_bound + 1,
        meta: Default::default(),
    };
    model.meta.insert("source".into(), json!("turing-machine"));
    model.meta.insert("layout".into(), lay.to_json());
    model.meta.insert("layout_raw".into(), serde_json::to_value(lay).expect("layout serializes"));
    model.meta.insert("blocks".into(), serde_json::to_value(&blocks).expect("blocks serialize"));
    model.meta.insert("provenance".into(), json!(b.tags));
    model.meta.insert("time_bound".into(), json!(spec.time_bound));
    model.meta.insert("pre_state".into(), json!(aug.states[aug.init]));

    Ok(CompiledTm { model, layout: lay, augmented: aug, provenance: b.tags, blocks })
}

impl CompiledTm {
    /// Rebuilds the compiled view of a model loaded from disk, checking it
    /// against the machine it claims to implement.
    pub fn from_model(model: TransformerModel<Rational>, spec: &TmSpec) -> Result<Self, TmCompileError> {
        let meta = |k: &str| model.meta.get(k).cloned().ok_or_else(|| TmCompileError::Metadata(format!("missing `{k}`")));
        let layout: CoordinateLayout =
            serde_json::from_value(meta("layout_raw")?).map_err(|e| TmCompileError::Metadata(e.to_string()))?;
        let blocks: BlockSpans =
            serde_json::from_value(meta("blocks")?).map_err(|e| TmCompileError::Metadata(e.to_string()))?;
        let provenance: Vec<String> =
            serde_json::from_value(meta("provenance")?).map_err(|e| TmCompileError::Metadata(e.to_string()))?;
        let aug = spec.with_pre_state(PRE_STATE);
        if layout.states != aug.num_states() || layout.symbols != aug.num_symbols() {
            return Err(TmCompileError::Metadata("layout does not match the machine".into()));
        }
        if model.steps != spec.time_bound + 1 {
            return Err(TmCompileError::Metadata(format!(
                "model runs {} steps but the machine's time bound is {}",
                model.steps, spec.time_bound
            )));
        }
        Ok(CompiledTm { model, layout, augmented: aug, provenance, blocks })
    }

    pub fn report(&self) -> Value {
        let l1 = self.model.l1_norm();
        json!({
            "layers": self.model.layers.len(),
            "construction_layers": construction_layers(self.layout.d_pos),
            "d": self.layout.d(),
            "d_tm": self.layout.d_tm(),
            "d_pos": self.layout.d_pos,
            "steps": self.model.steps,
            "param_count": self.model.param_count(),
            "theta_count": self.model.theta_count(),
            "l1_norm": l1.to_json(),
            "l1_norm_f64": l1.to_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turing::corpus;

    #[test]
    fn bin_examples() {
        assert_eq!(bin_encode(0, 4).unwrap(), vec![false; 4]);
        assert_eq!(bin_encode(5, 4).unwrap(), vec![false, true, false, true]);
        assert_eq!(bin_encode(16, 4), None);
        for i in 0..16 {
            assert_eq!(bin_decode(&bin_encode(i, 4).unwrap()), i);
        }
    }

    #[test]
    fn d_pos_covers_shifted_locations() {
        assert_eq!(d_pos_for(1), 2);
        assert_eq!(d_pos_for(2), 2);
        assert_eq!(d_pos_for(3), 3);
        assert_eq!(d_pos_for(32), 6);
        assert_eq!(d_pos_for(64), 7);
    }

    #[test]
    fn layout_groups_tile_the_vector() {
        let lay = CoordinateLayout { states: 5, symbols: 3, d_pos: 6, padding: 0 };
        let mut next = 0;
        for g in Group::ALL {
            assert_eq!(lay.range(g).start, next);
            next = lay.range(g).end;
        }
        assert_eq!(next, lay.d_tm());
        assert_eq!(lay.d_tm(), 5 + 2 * 3 + 3 * 6 + (2 * 3 + 6 + 3));
    }

    #[test]
    fn structure_of_compiled_parity() {
        let c = compile_tm(&corpus::parity(), &TmCompileOptions::default()).unwrap();
        let dp = c.layout.d_pos;
        assert_eq!(c.model.layers.len(), 3 * dp + 10);
        assert_eq!(c.provenance.len(), c.model.layers.len());
        assert_eq!(c.provenance[c.blocks.fetch], "search.fetch");
        assert_eq!(c.provenance[c.blocks.encoder_read], "encoder.read");
        assert_eq!(c.provenance[c.blocks.output.start], "output.select");
        assert_eq!(c.provenance[c.blocks.bits.start], "search.bit1");
        assert_eq!(c.model.steps, 33);
        c.model.validate().unwrap();
        // Key dimension grows through the bit-reveal layers.
        for (j, l) in c.blocks.bits.clone().enumerate() {
            assert_eq!(c.model.layers[l].dec_attn.key_dim(), dp + j + 2);
        }
        assert_eq!(c.model.layers[c.blocks.fetch].dec_attn.key_dim(), 2 * dp + 1);
    }

    #[test]
    fn options_are_checked() {
        let m = corpus::parity();
        let e = compile_tm(&m, &TmCompileOptions { target_width: Some(3), ..Default::default() });
        assert!(matches!(e.unwrap_err(), TmCompileError::WidthTooSmall { .. }));
        let e = compile_tm(&m, &TmCompileOptions { target_layers: Some(3), ..Default::default() });
        assert!(matches!(e.unwrap_err(), TmCompileError::DepthTooSmall { .. }));
        let mut short = m.clone();
        short.time_bound = 0;
        assert_eq!(compile_tm(&short, &TmCompileOptions::default()).unwrap_err(), TmCompileError::TimeBoundTooSmall);
    }
}
