//! All-layer margin: adversarial upper bounds, certified lower bounds and
//! perturbation robustness checks.
//!
//! The search never claims an exact margin. Every reported upper bound
//! carries a witness δ that flips the predicted label when re-applied.

mod profile;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ffnet::LayeredNet;
use crate::transformer::TransformerModel;

pub use profile::{
    block_radii, certificate_terms, certified_lower_bound, estimate_profile, robustness_property_test, BlockRadii,
    LipschitzProfile, ParamBlock, RobustnessOutcome,
};

/// Bisection stops once the flip interval along a ray is this narrow.
pub const BISECTION_TOL: f64 = 1e-6;
const RAY_START: f64 = 1e-3;
const RAY_MAX: f64 = 1e6;

#[derive(Debug, Error)]
pub enum MarginError {
    #[error("no sign flip found within {evaluations} evaluations")]
    NotFlippable { evaluations: usize, report: Box<MarginReport> },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("input set is empty")]
    EmptyInputSet,
    #[error("net has no correction layers")]
    NoCorrections,
    #[error("pre-correction value {value} at sublayer {sublayer} is not within 1/3 of a binary value")]
    NotCorrectable { sublayer: usize, value: f64 },
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error("model evaluation: {0}")]
    Model(String),
}

/// Fixed input, perturbation space and scalar read-out.
pub trait PerturbableModel {
    fn dim(&self) -> usize;
    fn eval(&self, delta: &[f64]) -> Result<f64, MarginError>;
    /// Value and gradient in δ, when the model supports backprop.
    fn gradient(&self, _delta: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }
    /// Extra search directions worth trying first.
    fn hints(&self, _label: bool) -> Vec<Vec<f64>> {
        Vec::new()
    }
    fn kind(&self) -> &'static str;
}

pub struct NetParamModel<'a> {
    pub net: &'a LayeredNet<f64>,
    pub x: Vec<f64>,
}

impl PerturbableModel for NetParamModel<'_> {
    fn dim(&self) -> usize {
        self.net.param_count()
    }
    fn eval(&self, delta: &[f64]) -> Result<f64, MarginError> {
        self.net.forward_param_perturbed(&self.x, delta).map_err(|e| MarginError::Model(e.to_string()))
    }
    fn gradient(&self, delta: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.net.param_gradient(&self.x, delta).ok().map(|g| (g.value, g.grad))
    }
    fn kind(&self) -> &'static str {
        "parameter"
    }
}

/// Hidden-layer perturbations, flattened sublayer by sublayer.
pub struct NetLayerModel<'a> {
    pub net: &'a LayeredNet<f64>,
    pub x: Vec<f64>,
}

impl NetLayerModel<'_> {
    fn split(&self, delta: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut at = 0;
        for n in self.net.layer_dims() {
            out.push(delta[at..at + n].to_vec());
            at += n;
        }
        out
    }
}

impl PerturbableModel for NetLayerModel<'_> {
    fn dim(&self) -> usize {
        self.net.layer_dims().iter().sum()
    }
    fn eval(&self, delta: &[f64]) -> Result<f64, MarginError> {
        self.net.forward_layer_perturbed(&self.x, &self.split(delta)).map_err(|e| MarginError::Model(e.to_string()))
    }
    /// Shifting the read-out layer alone moves the output one for one.
    fn hints(&self, label: bool) -> Vec<Vec<f64>> {
        let mut d = vec![0.0; self.dim()];
        let last = d.len() - 1;
        d[last] = if label { -1.0 } else { 1.0 };
        vec![d]
    }
    fn kind(&self) -> &'static str {
        "layer"
    }
}

pub struct TransformerParamModel<'a> {
    pub model: &'a TransformerModel<f64>,
    pub x: Vec<usize>,
    base: Vec<f64>,
}

impl<'a> TransformerParamModel<'a> {
    pub fn new(model: &'a TransformerModel<f64>, x: Vec<usize>) -> Self {
        TransformerParamModel { base: model.flatten(), model, x }
    }
}

impl PerturbableModel for TransformerParamModel<'_> {
    fn dim(&self) -> usize {
        self.base.len()
    }
    fn eval(&self, delta: &[f64]) -> Result<f64, MarginError> {
        let shifted: Vec<f64> = self.base.iter().zip(delta).map(|(a, b)| a + b).collect();
        let m = self.model.unflatten(&shifted).map_err(|e| MarginError::Model(e.to_string()))?;
        Ok(m.decode(&self.x).map_err(|e| MarginError::Model(e.to_string()))?.prediction)
    }
    /// The prediction is linear in θ_cls with gradient o_{T′}.
    fn hints(&self, label: bool) -> Vec<Vec<f64>> {
        let Ok(dec) = self.model.decode(&self.x) else { return Vec::new() };
        let last = dec.outputs.last().expect("at least o_0");
        let sign = if label { -1.0 } else { 1.0 };
        let mut d = vec![0.0; self.dim()];
        let at = self.model.cls_offset();
        for (k, v) in last.iter().enumerate() {
            d[at + k] = sign * v;
        }
        vec![d]
    }
    fn kind(&self) -> &'static str {
        "parameter"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Forward evaluations across all restarts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 10_000, restarts: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchStats {
    pub restarts: usize,
    pub evaluations: usize,
    pub budget: usize,
    pub seed: u64,
    pub rays: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginReport {
    pub kind: String,
    pub input: Value,
    pub label: u8,
    pub output: f64,
    pub upper_bound: Option<f64>,
    pub witness: Option<Vec<f64>>,
    /// Output of the model at the witness, re-evaluated after the search.
    pub witness_output: Option<f64>,
    pub lower_bound: Option<f64>,
    pub profile: Option<LipschitzProfile>,
    pub stats: SearchStats,
}

fn flips(label: bool, f: f64) -> bool {
    !f.is_nan() && (f > 0.0) != label
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn scaled(dir: &[f64], t: f64) -> Vec<f64> {
    dir.iter().map(|v| v * t).collect()
}

struct Search<'a> {
    model: &'a dyn PerturbableModel,
    label: bool,
    budget: usize,
    evals: usize,
    rays: usize,
    best: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn left(&self) -> bool {
        self.evals < self.budget
    }

    /// `None` once the budget is spent.
    fn flips_at(&mut self, delta: &[f64]) -> Result<Option<bool>, MarginError> {
        if !self.left() {
            return Ok(None);
        }
        self.evals += 1;
        Ok(Some(flips(self.label, self.model.eval(delta)?)))
    }

    fn cap(&self) -> f64 {
        self.best.as_ref().map_or(RAY_MAX, |b| b.0)
    }

    /// Smallest flipping scale along the unit direction `dir`, starting the
    /// upward scan at `start`.
    fn ray(&mut self, dir: &[f64], start: f64) -> Result<(), MarginError> {
        let n = norm(dir);
        if n == 0.0 || !n.is_finite() {
            return Ok(());
        }
        let dir: Vec<f64> = dir.iter().map(|v| v / n).collect();
        self.rays += 1;
        let cap = self.cap();
        let mut lo = 0.0;
        let mut t = start.clamp(1e-9, cap);
        let mut hi = loop {
            match self.flips_at(&scaled(&dir, t))? {
                None => return Ok(()),
                Some(true) => break t,
                Some(false) => {}
            }
            if t >= cap {
                return Ok(());
            }
            lo = t;
            t = (t * 2.0).min(cap);
        };
        loop {
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                match self.flips_at(&scaled(&dir, mid))? {
                    None => break,
                    Some(true) => hi = mid,
                    Some(false) => lo = mid,
                }
            }
            // Keep the witness locally minimal: half of it must not flip.
            match self.flips_at(&scaled(&dir, hi / 2.0))? {
                Some(true) => {
                    hi /= 2.0;
                    lo = 0.0;
                }
                _ => break,
            }
        }
        if hi < self.cap() {
            self.best = Some((hi, scaled(&dir, hi)));
        }
        Ok(())
    }

    /// Iterated linearization from `start`; ends with a ray along the
    /// final iterate.
    fn deepfool(&mut self, start: Vec<f64>) -> Result<(), MarginError> {
        let mut delta = start;
        for _ in 0..30 {
            if !self.left() {
                return Ok(());
            }
            self.evals += 2;
            let Some((f, g)) = self.model.gradient(&delta) else { return Ok(()) };
            if flips(self.label, f) {
                break;
            }
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg == 0.0 || !gg.is_finite() {
                return Ok(());
            }
            // Aim slightly past the boundary.
            let target = if self.label { -1e-3 } else { 1e-3 };
            let step = 1.05 * (target - f) / gg;
            for (d, gv) in delta.iter_mut().zip(&g) {
                *d += step * gv;
            }
        }
        let n = norm(&delta);
        self.ray(&delta, n / 4.0)
    }
}

fn label_bool(y: u8) -> Result<bool, MarginError> {
    match y {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(MarginError::InvalidLabel(y)),
    }
}

fn restart_rng(seed: u64, r: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Multi-restart search for the smallest ‖δ‖₂ flipping the label.
pub fn margin_upper_bound(
    model: &dyn PerturbableModel,
    input: Value,
    y: u8,
    opts: &SearchOptions,
) -> Result<MarginReport, MarginError> {
    let label = label_bool(y)?;
    let p = model.dim();
    let zero = vec![0.0; p];
    let output = model.eval(&zero)?;
    let mut s = Search { model, label, budget: opts.budget, evals: 1, rays: 0, best: None };
    if flips(label, output) {
        s.best = Some((0.0, zero.clone()));
    }
    let restarts = opts.restarts.max(1);
    let has_grad = model.gradient(&zero).is_some();
    if s.best.is_none() && p > 0 {
        for h in model.hints(label) {
            s.ray(&h, RAY_START)?;
        }
        for r in 0..restarts {
            let mut rng = restart_rng(opts.seed, r);
            let share = s.evals + (opts.budget.saturating_sub(s.evals)) / (restarts - r);
            let stop = share.min(opts.budget);
            if r == 0 && has_grad {
                s.deepfool(zero.clone())?;
            }
            while s.evals < stop {
                let before = s.evals;
                let pick: f64 = rng.gen();
                if has_grad && pick < 0.25 {
                    let scale = 0.1 * s.cap().min(1.0);
                    let start: Vec<f64> = gaussian(&mut rng, p).iter().map(|v| v * scale / (p as f64).sqrt()).collect();
                    s.deepfool(start)?;
                } else if pick < 0.5 {
                    let k = rng.gen_range(0..p);
                    let mut d = vec![0.0; p];
                    d[k] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    s.ray(&d, RAY_START)?;
                } else {
                    let d = gaussian(&mut rng, p);
                    s.ray(&d, RAY_START)?;
                }
                if s.evals == before {
                    s.evals += 1;
                }
            }
        }
    }

    let mut report = MarginReport {
        kind: model.kind().to_string(),
        input,
        label: y,
        output,
        upper_bound: None,
        witness: None,
        witness_output: None,
        lower_bound: None,
        profile: None,
        stats: SearchStats { restarts, evaluations: s.evals, budget: opts.budget, seed: opts.seed, rays: s.rays },
    };
    match s.best {
        Some((t, w)) => {
            let f = model.eval(&w)?;
            if !flips(label, f) {
                return Err(MarginError::Model(format!("witness of norm {t} does not flip on re-evaluation")));
            }
            report.upper_bound = Some(norm(&w));
            report.witness_output = Some(f);
            report.witness = Some(w);
            Ok(report)
        }
        None => Err(MarginError::NotFlippable { evaluations: s.evals, report: Box::new(report) }),
    }
}

/// Layer-based variant: δ_i added to hidden layer i, scaled by the
/// incoming hidden norm.
pub fn layer_margin_upper_bound(
    net: &LayeredNet<f64>,
    x: &[f64],
    y: u8,
    opts: &SearchOptions,
) -> Result<MarginReport, MarginError> {
    let m = NetLayerModel { net, x: x.to_vec() };
    margin_upper_bound(&m, serde_json::json!(x), y, opts)
}

/// Whether `delta` flips the label of `model` (independent re-check).
pub fn witness_flips(model: &dyn PerturbableModel, y: u8, delta: &[f64]) -> Result<bool, MarginError> {
    Ok(flips(label_bool(y)?, model.eval(delta)?))
}
