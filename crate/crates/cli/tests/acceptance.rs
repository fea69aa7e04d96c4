//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tempfile::TempDir;

use sma_core::bounds::{self, BoundQuery, MIN_SAMPLES};
use sma_core::circuit::{all_inputs, corpus, layerize, LayeredCircuit};
use sma_core::circuit_compiler::{bits_to_scalars, compile, padding_violation, CompileOptions};
use sma_core::ffnet::{toy, LayeredNet};
use sma_core::margin::{
    block_radii, certified_lower_bound, estimate_profile, margin_upper_bound, robustness_property_test,
    LipschitzProfile, MarginError, NetParamModel, SearchOptions,
};
use sma_core::scalar::{Rational, Scalar};
use sma_core::tm_compiler::{compile_tm, verify_input, TmCompileOptions};
use sma_core::turing::{self, simulate};

const RANDOM_SEED: u64 = 2024;
const RANDOM_COUNT: usize = 50;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn circuit_corpus() -> Vec<(String, LayeredCircuit)> {
    let mut all: Vec<(String, LayeredCircuit)> =
        corpus::named().into_iter().map(|(n, c)| (n.to_string(), layerize(&c))).collect();
    for (k, l) in corpus::random_layered(RANDOM_SEED, RANDOM_COUNT).into_iter().enumerate() {
        all.push((format!("random{k}"), l));
    }
    all
}

fn target(c: &LayeredCircuit, x: &[bool]) -> Rational {
    Rational::from_i64(if c.evaluate(x).unwrap() { 1 } else { -1 })
}

fn circuit_exactness() -> Verdict {
    let start = Instant::now();
    let opts = CompileOptions { target_width: None, target_depth: None, insert_corrections: true };
    let (mut checked, mut mismatches, mut first) = (0usize, 0usize, None);
    for (name, c) in circuit_corpus() {
        let net = compile::<Rational>(&c, &opts).unwrap().net;
        for x in all_inputs(c.num_inputs()) {
            checked += 1;
            if net.forward(&bits_to_scalars(&x)).unwrap() != vec![target(&c, &x)] {
                mismatches += 1;
                first.get_or_insert_with(|| format!("{name} on {x:?}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mismatches == 0 && secs <= 60.0,
        format!("{checked} circuit inputs, {mismatches} mismatches, {secs:.1} s{}", fmt_first(&first)),
    )
}

fn fmt_first(first: &Option<String>) -> String {
    first.as_ref().map_or(String::new(), |f| format!("; first {f}"))
}

fn width_neutrality() -> Verdict {
    let (mut checked, mut changed, mut padding, mut first) = (0usize, 0usize, 0usize, None);
    for (name, c) in circuit_corpus() {
        let base = compile::<Rational>(&c, &CompileOptions::default()).unwrap();
        let m = base.report.net_width;
        let wide_opts = CompileOptions { target_width: Some(4 * m), ..CompileOptions::default() };
        let wide = compile::<Rational>(&c, &wide_opts).unwrap();
        for x in all_inputs(c.num_inputs()) {
            checked += 1;
            let xs = bits_to_scalars::<Rational>(&x);
            if base.net.forward(&xs).unwrap() != wide.net.forward(&xs).unwrap() {
                changed += 1;
                first.get_or_insert_with(|| format!("{name} output on {x:?}"));
            }
            if let Some((l, j)) = padding_violation(&wide.net, &wide.active, &xs) {
                padding += 1;
                first.get_or_insert_with(|| format!("{name} padding {j} at sublayer {l} on {x:?}"));
            }
        }
    }
    verdict(
        changed == 0 && padding == 0,
        format!("{checked} inputs at 4x width, {changed} changed outputs, {padding} nonzero padding{}", fmt_first(&first)),
    )
}

fn toy_separation() -> Verdict {
    let start = Instant::now();
    let x = vec![1.0];
    let plain: LayeredNet<f64> = toy::product_net(16, false);
    let corrected: LayeredNet<f64> = toy::product_net(16, true);
    let opts = SearchOptions { budget: 10_000, restarts: 4, seed: 11 };
    let up = margin_upper_bound(&NetParamModel { net: &plain, x: x.clone() }, json!(x), 1, &opts);
    let plain_bound = up.ok().and_then(|r| r.upper_bound);
    let plain_ok = plain_bound.is_some_and(|u| u <= 0.75);

    let (corr_ok, corr_desc) = match margin_upper_bound(&NetParamModel { net: &corrected, x: x.clone() }, json!(x), 1, &opts) {
        Ok(r) => {
            let u = r.upper_bound.unwrap();
            (u >= 1.0 / 3.0 && r.stats.evaluations >= 10_000, format!("smallest flip {u} after {} evaluations", r.stats.evaluations))
        }
        Err(MarginError::NotFlippable { evaluations, .. }) => {
            (evaluations >= 10_000, format!("no flip in {evaluations} evaluations"))
        }
        Err(e) => (false, e.to_string()),
    };
    let radii = block_radii(&corrected, &[x.clone()]).unwrap();
    let robust = robustness_property_test(&corrected, &radii, &x, 1000, 12).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        plain_ok && corr_ok && robust.passed && secs <= 120.0,
        format!(
            "plain upper bound {} (<= 0.75); corrected: {corr_desc}; robustness {} samples at radius {:.4}: {}; {secs:.1} s",
            plain_bound.map_or("none".into(), |u| format!("{u:.4}")),
            robust.trials,
            radii.radius,
            if robust.passed { "pass" } else { "fail" }
        ),
    )
}

fn certificate_soundness() -> Verdict {
    let exact = certified_lower_bound(&LipschitzProfile::all_ones(0.9)).unwrap() == 0.225;
    let mut nets: Vec<(String, LayeredNet<f64>, Vec<Vec<f64>>)> = Vec::new();
    let opts = CompileOptions { target_width: None, target_depth: None, insert_corrections: true };
    for (name, c) in circuit_corpus() {
        let net = compile::<f64>(&c, &opts).unwrap().net;
        let xs = all_inputs(c.num_inputs()).map(|x| bits_to_scalars::<f64>(&x)).collect();
        nets.push((name, net, xs));
    }
    nets.push(("product16".into(), toy::product_net(16, true), vec![vec![0.0], vec![1.0]]));
    let (mut pairs, mut violations, mut unflipped, mut first) = (0usize, 0usize, 0usize, None);
    let mut tightest = f64::INFINITY;
    for (name, net, xs) in &nets {
        let lower = certified_lower_bound(&estimate_profile(net, xs).unwrap()).unwrap();
        for (k, x) in xs.iter().enumerate() {
            pairs += 1;
            let label = u8::from(net.forward(x).unwrap()[0] > 0.0);
            let opts = SearchOptions { budget: 300, restarts: 1, seed: k as u64 };
            match margin_upper_bound(&NetParamModel { net, x: x.clone() }, json!(x), label, &opts) {
                Ok(r) => {
                    let u = r.upper_bound.unwrap();
                    tightest = tightest.min(u / lower);
                    if lower > u {
                        violations += 1;
                        first.get_or_insert_with(|| format!("{name} input {k}: {lower} > {u}"));
                    }
                }
                Err(MarginError::NotFlippable { .. }) => unflipped += 1,
                Err(e) => {
                    violations += 1;
                    first.get_or_insert_with(|| format!("{name}: {e}"));
                }
            }
        }
    }
    verdict(
        exact && violations == 0,
        format!(
            "all-ones profile = 0.225: {exact}; {} nets, {pairs} inputs, {violations} violations, {unflipped} unflipped, min upper/lower ratio {tightest:.2}{}",
            nets.len(),
            fmt_first(&first)
        ),
    )
}

fn tm_exactness() -> Verdict {
    let start = Instant::now();
    let (mut inputs, mut excluded) = (0usize, 0usize);
    let (mut sign, mut groups, mut iprime, mut gap) = (0usize, 0usize, 0usize, 0usize);
    let mut first = None;
    for (name, spec) in turing::corpus::all() {
        let c = compile_tm(&spec, &TmCompileOptions::default()).unwrap();
        for x in spec.all_inputs(6) {
            if simulate(&spec, &x).map(|t| t.decision.is_none()).unwrap_or(true) {
                excluded += 1;
                continue;
            }
            inputs += 1;
            let r = verify_input(&c, &spec, &x).unwrap();
            sign += usize::from(!r.prediction_ok);
            groups += usize::from(!r.mismatches.is_empty() || r.non_binary > 0);
            iprime += usize::from(!r.iprime_errors.is_empty());
            gap += usize::from(r.min_gap.is_some_and(|g| g < 1.0));
            if !r.ok() {
                first.get_or_insert_with(|| format!("{name} on {:?}", spec.render(&x)));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = inputs > 0 && sign + groups + iprime + gap == 0 && secs <= 600.0;
    verdict(
        pass,
        format!(
            "{inputs} inputs ({excluded} undecided): sign {sign}, layout {groups}, last-writer {iprime}, gap {gap} failures; {secs:.1} s{}",
            fmt_first(&first)
        ),
    )
}

fn bound_formulas() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cases = [(-0.1, 0.5, 1.0), (0.0, 0.5, 1.0), (0.25, 0.5, 0.5), (0.5, 0.5, 0.0), (0.9, 0.5, 0.0)];
    let ramp = cases.iter().all(|&(m, g, want)| bounds::surrogate_loss(m, g).unwrap() == want);
    let mut dominated = 0usize;
    for _ in 0..100_000 {
        let m: f64 = rng.gen_range(-3.0..3.0);
        let g: f64 = rng.gen_range(1e-4..3.0);
        let s = bounds::surrogate_loss(m, g).unwrap();
        dominated += usize::from(s >= if m <= 0.0 { 1.0 } else { 0.0 } && (0.0..=1.0).contains(&s));
    }
    let mut exact = 0usize;
    for _ in 0..100 {
        let q = BoundQuery {
            alpha: rng.gen_range(0.1..20.0),
            p: rng.gen_range(2.0..1e6),
            gamma: rng.gen_range(0.05..5.0),
            eps: rng.gen_range(0.01..0.5),
            ..BoundQuery::default()
        };
        let s = bounds::solve_sample_complexity(q.alpha, q.p, q.gamma, q.eps, q.c_rad).unwrap();
        let at = bounds::rademacher_bound(&BoundQuery { n: s.n, ..q }).unwrap();
        let below_ok = s.n == MIN_SAMPLES || bounds::rademacher_bound(&BoundQuery { n: s.n - 1, ..q }).unwrap() > q.eps;
        exact += usize::from(at <= q.eps && below_ok);
    }
    let sm = bounds::sm_bound(0.0, 530, 0.01).unwrap();
    verdict(
        ramp && dominated == 100_000 && exact == 100 && (sm - 0.2).abs() <= 1e-3,
        format!("ramp cases {ramp}; dominance {dominated}/100000; exact boundary {exact}/100; sm_bound(0, 530, 0.01) = {sm:.6}"),
    )
}

fn sma(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sma")).args(args).output().expect("binary runs")
}

fn determinism() -> Verdict {
    let dir = TempDir::new().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let corpus_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus");
    let ckt = corpus_dir.join("circuits/majority.ckt").display().to_string();
    let (net, toy_net, tr) = (p("maj.json"), p("toy.json"), p("par.json"));
    sma(&["compile-circuit", &ckt, "-o", &net]);
    sma(&["toy-net", "--d", "16", "-o", &toy_net]);
    sma(&["compile-tm", &corpus_dir.join("machines/parity.json").display().to_string(), "-o", &tr]);
    let commands: Vec<Vec<&str>> = vec![
        vec!["verify", "circuit", &net, &ckt, "--samples", "50", "--seed", "9"],
        vec!["margin", "upper", &toy_net, "--input", "1", "--seed", "3", "--budget", "4000"],
        vec!["margin", "upper", &net, "--input", "110", "--seed", "4", "--layer-based", "--budget", "2000"],
        vec!["margin", "certify", &net, "--trials", "50", "--compare", "--budget", "300", "--seed", "5"],
        vec!["margin", "upper", &tr, "--input", "10", "--seed", "6", "--budget", "150", "--restarts", "1"],
    ];
    let mut identical = 0usize;
    let mut first = None;
    for (k, cmd) in commands.iter().enumerate() {
        let mut bytes = Vec::new();
        for run in 0..2 {
            let rep = p(&format!("r{k}_{run}.json"));
            let mut args = vec!["--report", &rep];
            args.extend(cmd.iter().copied());
            sma(&args);
            bytes.push(std::fs::read(&rep).unwrap_or_default());
        }
        if !bytes[0].is_empty() && bytes[0] == bytes[1] {
            identical += 1;
        } else {
            first.get_or_insert_with(|| cmd.join(" "));
        }
    }
    verdict(
        identical == commands.len(),
        format!("{identical}/{} seeded commands byte-identical across two runs{}", commands.len(), fmt_first(&first)),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("circuit compilation exactness", circuit_exactness),
        ("overparameterization neutrality", width_neutrality),
        ("toy margin separation", toy_separation),
        ("certificate soundness", certificate_soundness),
        ("Turing machine compilation exactness", tm_exactness),
        ("ramp loss and bound formulas", bound_formulas),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {} {}: {} ({})", k + 1, if v.pass { "PASS" } else { "FAIL" }, name, v.detail);
    }
    println!("acceptance: {}/7 passed in {:.1?}", 7 - failed, Duration::from_secs_f64(total.elapsed().as_secs_f64()));
    if failed > 0 {
        std::process::exit(1);
    }
}
