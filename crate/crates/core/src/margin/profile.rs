//! Lipschitz profiles, the nine-term certificate and per-block radii for
//! nets with round corrections.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MarginError;
use crate::ffnet::{LayeredNet, ParamScope, SublayerOp};
use crate::matrix::l2_norm;

/// Round maps every value within this distance of 0 or 1 back exactly.
pub const ROUND_RADIUS: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    #[serde(rename = "N")]
    pub n: f64,
    pub kappa_0: f64,
    pub kappa_theta: f64,
    pub kappa_f: f64,
    pub sigma_h: f64,
    pub sigma_theta: f64,
    pub kappa_xi: f64,
    pub sigma_xi: f64,
    pub rho: f64,
}

impl LipschitzProfile {
    pub fn all_ones(rho: f64) -> Self {
        LipschitzProfile {
            n: 1.0,
            kappa_0: 1.0,
            kappa_theta: 1.0,
            kappa_f: 1.0,
            sigma_h: 1.0,
            sigma_theta: 1.0,
            kappa_xi: 1.0,
            sigma_xi: 1.0,
            rho,
        }
    }

    pub fn validate(&self) -> Result<(), MarginError> {
        let named = [
            ("N", self.n),
            ("kappa_0", self.kappa_0),
            ("kappa_theta", self.kappa_theta),
            ("kappa_f", self.kappa_f),
            ("sigma_h", self.sigma_h),
            ("sigma_theta", self.sigma_theta),
            ("kappa_xi", self.kappa_xi),
            ("sigma_xi", self.sigma_xi),
            ("rho", self.rho),
        ];
        for (k, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MarginError::InvalidProfile(format!("{k} = {v} must be positive and finite")));
            }
        }
        if self.rho >= 1.0 {
            return Err(MarginError::InvalidProfile(format!("rho = {} must be below 1", self.rho)));
        }
        Ok(())
    }
}

/// The nine closed-form terms, labelled.
pub fn certificate_terms(p: &LipschitzProfile) -> [(&'static str, f64); 9] {
    let LipschitzProfile { n, kappa_0, kappa_theta: kt, kappa_f: kf, sigma_h, sigma_theta, kappa_xi: kx, sigma_xi, rho } = *p;
    [
        ("N/kappa_0", n / kappa_0),
        ("rho/kappa_0", rho / kappa_0),
        ("sigma_theta", sigma_theta),
        ("sigma_xi", sigma_xi),
        ("1/(2 kappa_theta)", 1.0 / (2.0 * kt)),
        ("rho/(2 kappa_theta N)", rho / (2.0 * kt * n)),
        ("sigma_h/(2 kappa_xi N)", sigma_h / (2.0 * kx * n)),
        ("rho/(4 N kappa_f kappa_xi)", rho / (4.0 * n * kf * kx)),
        ("1/(4 kappa_f kappa_xi)", 1.0 / (4.0 * kf * kx)),
    ]
}

pub fn certified_lower_bound(p: &LipschitzProfile) -> Result<f64, MarginError> {
    p.validate()?;
    Ok(certificate_terms(p).iter().map(|t| t.1).fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone)]
struct StepGeom {
    w: f64,
    in_norm: f64,
    weights: bool,
    bias: bool,
}

#[derive(Debug, Clone)]
struct SubGeom {
    steps: Vec<StepGeom>,
    correction: bool,
    /// Worst distance of a rounded coordinate from {0, 1} (corrections only).
    pre_dist: f64,
}

struct Geometry {
    subs: Vec<SubGeom>,
    n: f64,
    min_abs_output: f64,
}

fn geometry(net: &LayeredNet<f64>, inputs: &[Vec<f64>]) -> Result<Geometry, MarginError> {
    if inputs.is_empty() {
        return Err(MarginError::EmptyInputSet);
    }
    let mut subs: Vec<SubGeom> = net
        .sublayers
        .iter()
        .map(|s| SubGeom {
            steps: s
                .steps()
                .iter()
                .map(|(a, _)| StepGeom {
                    w: a.weight.frobenius(),
                    in_norm: 0.0,
                    weights: s.scope != ParamScope::None,
                    bias: s.scope == ParamScope::All,
                })
                .collect(),
            correction: s.correction,
            pre_dist: 0.0,
        })
        .collect();
    let mut n: f64 = 1.0;
    let mut min_abs_output = f64::INFINITY;
    for x in inputs {
        let mut h = x.clone();
        n = n.max(l2_norm(&h));
        for (s, g) in net.sublayers.iter().zip(subs.iter_mut()) {
            if let SublayerOp::Round { inner, .. } = &s.op {
                for (j, v) in h.iter().enumerate() {
                    let read = (0..inner.out_dim()).any(|r| *inner.weight.get(r, j) != 0.0);
                    if read {
                        g.pre_dist = g.pre_dist.max(v.abs().min((v - 1.0).abs()));
                    }
                }
            }
            for ((a, relu), sg) in s.steps().into_iter().zip(g.steps.iter_mut()) {
                sg.in_norm = sg.in_norm.max(l2_norm(&h));
                h = if relu { a.apply_relu(&h) } else { a.apply(&h) };
                n = n.max(l2_norm(&h));
            }
        }
        min_abs_output = min_abs_output.min(h[0].abs());
    }
    Ok(Geometry { subs, n, min_abs_output })
}

/// A group of parameters perturbed together: a run of sublayers between
/// corrections, or one correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBlock {
    pub sublayers: Range<usize>,
    pub correction: bool,
    /// Index ranges inside the flat parameter vector.
    pub params: Vec<Range<usize>>,
    pub radius: f64,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.params.iter().map(|r| r.len()).sum()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockRadii {
    pub blocks: Vec<ParamBlock>,
    /// Common radius; every block is safe at any ‖δ_block‖₂ ≤ radius.
    pub radius: f64,
    pub min_abs_output: f64,
}

fn flat_ranges(net: &LayeredNet<f64>) -> Vec<Range<usize>> {
    let mut out = vec![0..0; net.sublayers.len()];
    let mut at = 0;
    for i in net.param_order() {
        let n = net.sublayers[i].param_count();
        out[i] = at..at + n;
        at += n;
    }
    out
}

/// Worst-case deviation bound when every sublayer's parameters move by at
/// most `r`; `None` when some correction input leaves its safe radius.
fn final_deviation(g: &Geometry, r: f64) -> Option<f64> {
    let mut d = 0.0f64;
    for s in &g.subs {
        if s.correction {
            if d > ROUND_RADIUS - s.pre_dist {
                return None;
            }
            // Exact on the perturbed input; only the gadget's own
            // parameters move the output.
            let mut e = 0.0;
            let mut lip_in = 1.0;
            for st in &s.steps {
                let rs = if st.weights { r } else { 0.0 };
                let c = st.in_norm + lip_in * d;
                let shift = if st.bias { rs * (c * c + 1.0).sqrt() } else { rs * c };
                e = (st.w + rs) * e + shift;
                lip_in *= st.w;
            }
            d = e;
        } else {
            for st in &s.steps {
                let rs = if st.weights { r } else { 0.0 };
                let c = st.in_norm;
                let shift = if st.bias { rs * (c * c + 1.0).sqrt() } else { rs * c };
                d = (st.w + rs) * d + shift;
            }
        }
    }
    Some(d)
}

/// Largest common per-block radius (capped at 1/3) that keeps every
/// correction exact and the output sign unchanged on `inputs`.
pub fn block_radii(net: &LayeredNet<f64>, inputs: &[Vec<f64>]) -> Result<BlockRadii, MarginError> {
    if !net.sublayers.iter().any(|s| s.correction) {
        return Err(MarginError::NoCorrections);
    }
    let g = geometry(net, inputs)?;
    for (i, s) in g.subs.iter().enumerate() {
        if s.correction && s.pre_dist >= ROUND_RADIUS {
            return Err(MarginError::NotCorrectable { sublayer: i, value: s.pre_dist });
        }
    }
    let ok = |r: f64| final_deviation(&g, r).is_some_and(|d| d < g.min_abs_output);
    let mut radius = 0.0;
    if ok(ROUND_RADIUS) {
        radius = ROUND_RADIUS;
    } else if ok(0.0) {
        let (mut lo, mut hi) = (0.0, ROUND_RADIUS);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        radius = lo;
    }

    let ranges = flat_ranges(net);
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 0..=net.sublayers.len() {
        let boundary = i == net.sublayers.len() || net.sublayers[i].correction;
        if boundary {
            if i > start {
                blocks.push(ParamBlock {
                    sublayers: start..i,
                    correction: false,
                    params: (start..i).map(|k| ranges[k].clone()).filter(|r| !r.is_empty()).collect(),
                    radius,
                });
            }
            if i < net.sublayers.len() {
                blocks.push(ParamBlock {
                    sublayers: i..i + 1,
                    correction: true,
                    params: [ranges[i].clone()].into_iter().filter(|r| !r.is_empty()).collect(),
                    radius,
                });
            }
            start = i + 1;
        }
    }
    blocks.retain(|b| !b.is_empty());
    Ok(BlockRadii { blocks, radius, min_abs_output: g.min_abs_output })
}

/// Conservative constants from weight norms and hidden norms on `inputs`.
pub fn estimate_profile(net: &LayeredNet<f64>, inputs: &[Vec<f64>]) -> Result<LipschitzProfile, MarginError> {
    let g = geometry(net, inputs)?;
    let worst_pre = g.subs.iter().filter(|s| s.correction).map(|s| s.pre_dist).fold(0.0, f64::max);
    let rho = (ROUND_RADIUS - worst_pre).min(g.min_abs_output / 2.0);
    if !(rho > 0.0) {
        return Err(MarginError::InvalidProfile(format!("correction radius {rho} is not positive")));
    }
    let sigma = rho;
    let n = g.n;
    const FLOOR: f64 = 1e-12;

    let mut kappa_theta: f64 = 0.0;
    let mut kappa_0: f64 = 0.0;
    let mut kappa_f: f64 = 1.0;
    let mut kappa_xi: f64 = 0.0;
    let mut run: Vec<&StepGeom> = Vec::new();
    let mut first = true;
    let mut close_run = |run: &mut Vec<&StepGeom>, first: &mut bool| {
        if run.is_empty() {
            return;
        }
        let mut lf = 1.0;
        let mut sum_unit = 0.0;
        let mut sum_abs = 0.0;
        for st in run.iter().rev() {
            if st.weights {
                sum_unit += lf * lf * 2.0;
                sum_abs += lf * lf * (st.in_norm * st.in_norm + 1.0);
            }
            lf *= st.w + sigma;
        }
        kappa_f = kappa_f.max(lf);
        kappa_theta = kappa_theta.max(sum_unit.sqrt());
        if *first {
            kappa_0 = sum_abs.sqrt();
            *first = false;
        }
        run.clear();
    };
    for s in &g.subs {
        if s.correction {
            close_run(&mut run, &mut first);
            if s.steps.iter().any(|st| st.weights) {
                let mut e2 = 0.0;
                let mut lin = 1.0;
                for st in &s.steps {
                    let c = st.in_norm + lin * rho;
                    e2 = e2 * (st.w + sigma) * (st.w + sigma) + c * c + 1.0;
                    lin *= st.w;
                }
                kappa_xi = kappa_xi.max(e2.sqrt() / n);
            }
        } else {
            run.extend(s.steps.iter());
        }
    }
    close_run(&mut run, &mut first);

    let p = LipschitzProfile {
        n,
        kappa_0: kappa_0.max(FLOOR),
        kappa_theta: kappa_theta.max(FLOOR),
        kappa_f,
        sigma_h: sigma,
        sigma_theta: sigma,
        kappa_xi: kappa_xi.max(FLOOR),
        sigma_xi: sigma,
        rho,
    };
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessOutcome {
    pub passed: bool,
    pub trials: usize,
    pub radius: f64,
    pub min_abs_output: f64,
    pub counterexample: Option<Vec<f64>>,
}

/// Samples δ with every block on the sphere of its radius and checks the
/// predicted sign never changes.
pub fn robustness_property_test(
    net: &LayeredNet<f64>,
    radii: &BlockRadii,
    x: &[f64],
    trials: usize,
    seed: u64,
) -> Result<RobustnessOutcome, MarginError> {
    let p = net.param_count();
    let base = net.forward_param_perturbed(x, &vec![0.0; p]).map_err(|e| MarginError::Model(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_abs = base.abs();
    for _ in 0..trials {
        let mut delta = vec![0.0; p];
        for b in &radii.blocks {
            let v: Vec<f64> = (0..b.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nv == 0.0 {
                continue;
            }
            let mut it = v.into_iter();
            for r in &b.params {
                for k in r.clone() {
                    delta[k] = it.next().expect("sized to the block") * b.radius / nv;
                }
            }
        }
        let f = net.forward_param_perturbed(x, &delta).map_err(|e| MarginError::Model(e.to_string()))?;
        min_abs = min_abs.min(f.abs());
        if (f > 0.0) != (base > 0.0) {
            return Ok(RobustnessOutcome {
                passed: false,
                trials,
                radius: radii.radius,
                min_abs_output: min_abs,
                counterexample: Some(delta),
            });
        }
    }
    Ok(RobustnessOutcome { passed: true, trials, radius: radii.radius, min_abs_output: min_abs, counterexample: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnet::toy;
    use crate::matrix::{Affine, Matrix};

    #[test]
    fn all_ones_profile() {
        assert_eq!(certified_lower_bound(&LipschitzProfile::all_ones(0.9)).unwrap(), 0.225);
        let terms = certificate_terms(&LipschitzProfile::all_ones(0.9));
        let want = [1.0, 0.9, 1.0, 1.0, 0.5, 0.45, 0.5, 0.225, 0.25];
        for (t, w) in terms.iter().zip(want) {
            assert!((t.1 - w).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_to_zero_drives_bound_to_zero() {
        let b = certified_lower_bound(&LipschitzProfile::all_ones(1e-9)).unwrap();
        assert!(b <= 1e-9);
    }

    #[test]
    fn invalid_profiles_rejected() {
        let mut p = LipschitzProfile::all_ones(0.5);
        p.kappa_f = 0.0;
        assert!(matches!(certified_lower_bound(&p), Err(MarginError::InvalidProfile(_))));
        assert!(certified_lower_bound(&LipschitzProfile::all_ones(1.0)).is_err());
    }

    #[test]
    fn corrected_product_net_blocks_at_one_third() {
        let net = toy::product_net::<f64>(16, true);
        let r = block_radii(&net, &[vec![1.0]]).unwrap();
        assert_eq!(r.radius, ROUND_RADIUS);
        assert_eq!(r.blocks.len(), 16);
        assert!(r.blocks.iter().all(|b| b.len() == 1));
        let out = robustness_property_test(&net, &r, &[1.0], 1000, 5).unwrap();
        assert!(out.passed);
    }

    #[test]
    fn zero_trials_pass() {
        let net = toy::product_net::<f64>(4, true);
        let r = block_radii(&net, &[vec![1.0]]).unwrap();
        assert!(robustness_property_test(&net, &r, &[1.0], 0, 0).unwrap().passed);
    }

    #[test]
    fn uncorrected_net_has_no_blocks() {
        let net = toy::product_net::<f64>(4, false);
        assert!(matches!(block_radii(&net, &[vec![1.0]]), Err(MarginError::NoCorrections)));
    }

    #[test]
    fn diagonal_layer_kappa_f() {
        let w = Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        let net = LayeredNet::new(
            2,
            vec![
                crate::ffnet::Sublayer::lin_relu(Affine::new(w, vec![0.0, 0.0])).with_scope(ParamScope::None),
                crate::ffnet::Sublayer::lin(Affine::new(Matrix::from_rows(vec![vec![1.0, 1.0]]), vec![-1.0])),
            ],
        )
        .unwrap();
        // The only layer map has Frobenius norm 2√2 ≥ spectral norm 2.
        let g = geometry(&net, &[vec![1.0, 0.0]]).unwrap();
        assert!(g.subs[0].steps[0].w >= 2.0);
    }

    #[test]
    fn adding_a_layer_never_decreases_n() {
        let base = toy::product_net::<f64>(3, false);
        let mut longer = base.clone();
        longer.sublayers.insert(
            0,
            crate::ffnet::Sublayer::lin(Affine::new(Matrix::from_rows(vec![vec![3.0]]), vec![0.0])),
        );
        let inputs = [vec![1.0]];
        assert!(geometry(&longer, &inputs).unwrap().n >= geometry(&base, &inputs).unwrap().n);
    }
}
