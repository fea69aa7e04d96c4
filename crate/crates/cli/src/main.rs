mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use sma_core::bounds;
use sma_core::circuit::{all_inputs, layerize, parse_circuit, Circuit};
use sma_core::circuit_compiler::{bits_to_scalars, compile, CompileOptions};
use sma_core::ffnet::{parse_net_json, toy, AnyNet, LayeredNet};
use sma_core::margin::{
    self, block_radii, certificate_terms, certified_lower_bound, estimate_profile, robustness_property_test,
    LipschitzProfile, MarginError, MarginReport, NetParamModel, SearchOptions, TransformerParamModel,
};
use sma_core::scalar::{Mode, Rational, Scalar};
use sma_core::tm_compiler::{compile_tm, verify_input, CompiledTm, TmCompileOptions};
use sma_core::transformer::{parse_transformer_json, AnyTransformer, TransformerModel};
use sma_core::turing::{parse_tm, simulate, TmSpec, TuringError};

use report::{Inputs, Report, NET_FORMAT, TRANSFORMER_FORMAT};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nnet format: sma-net/1\ntransformer format: sma-transformer/1"
);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Semantic(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Semantic(_) => 3,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn semantic(e: impl std::fmt::Display) -> CliError {
    CliError::Semantic(e.to_string())
}

#[derive(Parser)]
#[command(name = "sma", version, long_version = LONG_VERSION, about = "Compile circuits and Turing machines to exact networks; bound their margins")]
struct Cli {
    /// Write a machine-readable JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Print wall time to standard error.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Rational,
    Float,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Rational => Mode::Rational,
            ModeArg::Float => Mode::Float,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compile a netlist into a ReLU net.
    CompileCircuit(CompileCircuitArgs),
    /// Compile a Turing machine into a hard-max transformer.
    CompileTm(CompileTmArgs),
    /// Evaluate a net on one input.
    RunNet(RunNetArgs),
    /// Simulate a Turing machine on one input.
    RunTm(RunTmArgs),
    #[command(subcommand)]
    Verify(VerifyCmd),
    #[command(subcommand)]
    Margin(MarginCmd),
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Write one of the scalar demonstration nets.
    ToyNet(ToyNetArgs),
}

#[derive(Args)]
struct CompileCircuitArgs {
    circuit: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Net width; coordinates past the circuit width stay zero.
    #[arg(long)]
    width: Option<usize>,
    /// Number of gate blocks; extra blocks copy the last layer.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    no_correction: bool,
    #[arg(long, value_enum, default_value = "rational")]
    mode: ModeArg,
}

#[derive(Args)]
struct CompileTmArgs {
    machine: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    /// Total layer count; extra layers are identities.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, value_enum, default_value = "rational")]
    mode: ModeArg,
}

#[derive(Args)]
struct RunNetArgs {
    net: PathBuf,
    /// Bit string such as 1011, or comma-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// Evaluate in this mode instead of the file's.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct RunTmArgs {
    machine: PathBuf,
    #[arg(long, default_value = "")]
    input: String,
    /// Print state, symbol and head location at every step.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Check net(x) = 2·G(x) − 1.
    Circuit(VerifyCircuitArgs),
    /// Check a compiled transformer against the simulator.
    Tm(VerifyTmArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("coverage").required(true).args(["exhaustive", "samples"])))]
struct VerifyCircuitArgs {
    net: PathBuf,
    circuit: PathBuf,
    #[arg(long)]
    exhaustive: bool,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct VerifyTmArgs {
    transformer: PathBuf,
    machine: PathBuf,
    #[arg(long)]
    max_len: usize,
    /// Also compare every layout group at every block boundary.
    #[arg(long)]
    invariants: bool,
}

#[derive(Subcommand)]
enum MarginCmd {
    /// Search for a small label-flipping perturbation.
    Upper(MarginUpperArgs),
    /// Certified lower bound from a Lipschitz profile.
    Certify(MarginCertifyArgs),
}

#[derive(Args)]
struct MarginUpperArgs {
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// Label in {0, 1}; defaults to the model's own prediction.
    #[arg(long)]
    label: Option<u8>,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Forward evaluations across all restarts.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb hidden layers instead of parameters.
    #[arg(long)]
    layer_based: bool,
}

#[derive(Args)]
struct MarginCertifyArgs {
    model: PathBuf,
    /// Lipschitz profile JSON; estimated from the inputs when absent (nets only).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Input set for estimation; all bit strings of the input width by default.
    #[arg(long, allow_hyphen_values = true)]
    input: Vec<String>,
    /// Robustness samples per input at the per-block radius.
    #[arg(long, default_value_t = 0)]
    trials: usize,
    /// Also search an upper bound on every input and count violations.
    #[arg(long)]
    compare: bool,
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum BoundCmd {
    /// Smallest n with the Rademacher bound below eps.
    SampleComplexity(SampleComplexityArgs),
    /// Ramp loss of one margin value.
    Surrogate(SurrogateArgs),
    /// 5ε + 2√(ln(2/δ)/n).
    Sm(SmArgs),
    /// Sample complexity with α and p read from a model file.
    Model(ModelBoundArgs),
}

#[derive(Args)]
struct SampleComplexityArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    c_rad: f64,
}

#[derive(Args)]
struct SurrogateArgs {
    #[arg(long, allow_hyphen_values = true)]
    margin: f64,
    #[arg(long, allow_hyphen_values = true)]
    gamma: f64,
}

#[derive(Args)]
struct SmArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.01)]
    delta_conf: f64,
}

#[derive(Args)]
struct ModelBoundArgs {
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    gamma: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    c_rad: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ToyKind {
    Product,
    Threshold,
}

#[derive(Args)]
struct ToyNetArgs {
    #[arg(long, value_enum, default_value = "product")]
    kind: ToyKind,
    #[arg(long, default_value_t = 16)]
    d: usize,
    /// Insert a round gadget after every weight.
    #[arg(long)]
    corrected: bool,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "rational")]
    mode: ModeArg,
}

/// What a command produced: a human summary, report fields and whether a
/// verification failed.
struct Outcome {
    command: &'static str,
    summary: String,
    options: Value,
    seed: Option<u64>,
    inputs: Inputs,
    results: Value,
    failed: bool,
    /// Semantic failure that still produced a report.
    error: Option<CliError>,
}

impl Outcome {
    fn new(command: &'static str, options: Value, inputs: Inputs) -> Self {
        Outcome {
            command,
            summary: String::new(),
            options,
            seed: None,
            inputs,
            results: Value::Null,
            failed: false,
            error: None,
        }
    }
}

fn write_file(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string(v).expect("json serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn parse_bits_or_numbers(s: &str) -> Result<Vec<f64>, CliError> {
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| usage(format!("input `{t}`: {e}")))).collect()
    } else {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0.0),
                '1' => Ok(1.0),
                _ => Err(usage(format!("input must be a bit string or comma-separated numbers, found `{c}`"))),
            })
            .collect()
    }
}

fn render_bits(x: &[bool]) -> String {
    x.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn load_net(inputs: &mut Inputs, path: &Path) -> Result<AnyNet, CliError> {
    let text = inputs.read(path)?;
    parse_net_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_tm(inputs: &mut Inputs, path: &Path) -> Result<TmSpec, CliError> {
    let text = inputs.read(path)?;
    parse_tm(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

enum AnyModel {
    Net(AnyNet),
    Transformer(AnyTransformer),
}

fn load_model(inputs: &mut Inputs, path: &Path) -> Result<AnyModel, CliError> {
    let text = inputs.read(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if v.get("format").and_then(Value::as_str) == Some(TRANSFORMER_FORMAT) {
        parse_transformer_json(&text)
            .map(AnyModel::Transformer)
            .map_err(|e| usage(format!("{}: {e}", path.display())))
    } else {
        parse_net_json(&text).map(AnyModel::Net).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn rational_transformer(m: &AnyTransformer) -> TransformerModel<Rational> {
    match m {
        AnyTransformer::Rational(m) => m.clone(),
        AnyTransformer::Float(m) => m.map(|v| v.to_rational()),
    }
}

fn cmd_compile_circuit(a: &CompileCircuitArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let text = inputs.read(&a.circuit)?;
    let circuit = parse_circuit(&text).map_err(|e| usage(format!("{}: {e}", a.circuit.display())))?;
    let layered = layerize(&circuit);
    let opts =
        CompileOptions { target_width: a.width, target_depth: a.depth, insert_corrections: !a.no_correction };
    let mode = Mode::from(a.mode);
    let (net, report) = match mode {
        Mode::Rational => {
            let c = compile::<Rational>(&layered, &opts).map_err(semantic)?;
            (AnyNet::Rational(c.net), c.report)
        }
        Mode::Float => {
            let c = compile::<f64>(&layered, &opts).map_err(semantic)?;
            (AnyNet::Float(c.net), c.report)
        }
    };
    write_file(&a.output, &net.to_json())?;
    let options = json!({
        "circuit": path_str(&a.circuit),
        "output": path_str(&a.output),
        "width": a.width,
        "depth": a.depth,
        "correction": !a.no_correction,
        "mode": mode,
    });
    let mut o = Outcome::new("compile-circuit", options, inputs);
    o.summary = format!(
        "compiled {} gates into {} sublayers of width {} ({} parameters) -> {}",
        report.circuit_size,
        report.sublayers,
        report.net_width,
        report.param_count,
        a.output.display()
    );
    o.results = serde_json::to_value(&report).expect("report serializes");
    Ok(o)
}

fn cmd_compile_tm(a: &CompileTmArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let spec = load_tm(&mut inputs, &a.machine)?;
    let opts = TmCompileOptions { target_width: a.width, target_layers: a.layers };
    let c = compile_tm(&spec, &opts).map_err(semantic)?;
    let mode = Mode::from(a.mode);
    let v = match mode {
        Mode::Rational => c.model.to_json(),
        Mode::Float => c.model.to_float().to_json(),
    };
    write_file(&a.output, &v)?;
    let options = json!({
        "machine": path_str(&a.machine),
        "output": path_str(&a.output),
        "width": a.width,
        "layers": a.layers,
        "mode": mode,
    });
    let mut o = Outcome::new("compile-tm", options, inputs);
    o.summary = format!(
        "compiled machine with T = {} into {} layers of width {} -> {}",
        spec.time_bound,
        c.model.layers.len(),
        c.model.d,
        a.output.display()
    );
    let mut results = c.report();
    results["provenance"] = json!(c.provenance);
    results["layout"] = c.layout.to_json();
    o.results = results;
    Ok(o)
}

fn cmd_run_net(a: &RunNetArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let net = load_net(&mut inputs, &a.net)?;
    let net = match a.mode {
        Some(m) => net.in_mode(m.into()),
        None => net,
    };
    let x = parse_bits_or_numbers(&a.input)?;
    let out: Vec<Value> = match &net {
        AnyNet::Rational(n) => {
            let xr: Vec<Rational> = x.iter().map(|v| v.to_rational()).collect();
            n.forward(&xr).map_err(semantic)?.iter().map(Scalar::to_json).collect()
        }
        AnyNet::Float(n) => n.forward(&x).map_err(semantic)?.iter().map(|v| json!(v)).collect(),
    };
    let shown: Vec<String> = out.iter().map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string)).collect();
    let options = json!({"net": path_str(&a.net), "input": a.input, "mode": net.mode()});
    let mut o = Outcome::new("run-net", options, inputs);
    o.summary = format!("output: {}", shown.join(" "));
    o.results = json!({"output": out});
    Ok(o)
}

fn cmd_run_tm(a: &RunTmArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let spec = load_tm(&mut inputs, &a.machine)?;
    let x = spec.tokenize(&a.input).map_err(usage)?;
    let trace = simulate(&spec, &x).map_err(semantic)?;
    let options = json!({"machine": path_str(&a.machine), "input": a.input, "trace": a.trace});
    let mut o = Outcome::new("run-tm", options, inputs);
    let mut lines = Vec::new();
    if a.trace {
        for i in 0..trace.states.len() {
            lines.push(format!(
                "step {i}: state {} symbol {} loc {}",
                spec.states[trace.states[i]], spec.alphabet[trace.symbols[i]], trace.locs[i]
            ));
        }
    }
    let mut results = json!({
        "decision": trace.decision.map(u8::from),
        "halted_at": trace.halted_at,
        "steps": trace.steps(),
    });
    if a.trace {
        results["trace"] = serde_json::to_value(&trace).expect("trace serializes");
    }
    o.results = results;
    match trace.decision {
        Some(d) => lines.push(format!("decision: {}", u8::from(d))),
        None => {
            lines.push("decision: none".into());
            o.error = Some(semantic(TuringError::NotTerminated(trace.steps())));
        }
    }
    o.summary = lines.join("\n");
    Ok(o)
}

fn cmd_verify_circuit(a: &VerifyCircuitArgs) -> Result<Outcome, CliError> {
    if a.samples == Some(0) {
        return Err(usage("--samples must be at least 1"));
    }
    let mut inputs = Inputs::default();
    let net = load_net(&mut inputs, &a.net)?;
    let text = inputs.read(&a.circuit)?;
    let circuit: Circuit = parse_circuit(&text).map_err(|e| usage(format!("{}: {e}", a.circuit.display())))?;
    let r = circuit.num_inputs();
    let in_dim = match &net {
        AnyNet::Rational(n) => n.input_dim,
        AnyNet::Float(n) => n.input_dim,
    };
    if in_dim != r {
        return Err(semantic(format!("net takes {in_dim} inputs but the circuit has {r}")));
    }
    let xs: Vec<Vec<bool>> = if a.exhaustive {
        if r > 24 {
            return Err(semantic(format!("exhaustive check over {r} inputs is too large; use --samples")));
        }
        all_inputs(r).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        (0..a.samples.unwrap_or(0)).map(|_| (0..r).map(|_| rng.gen::<bool>()).collect()).collect()
    };
    let mut mismatches = 0usize;
    let mut first: Option<Value> = None;
    for x in &xs {
        let want = if circuit.evaluate(x).map_err(semantic)? { 1 } else { -1 };
        let (ok, got) = match &net {
            AnyNet::Rational(n) => {
                let y = n.forward(&bits_to_scalars::<Rational>(x)).map_err(semantic)?;
                (y.len() == 1 && y[0] == <Rational as Scalar>::from_i64(want), y[0].to_json())
            }
            AnyNet::Float(n) => {
                let y = n.forward(&bits_to_scalars::<f64>(x)).map_err(semantic)?;
                (y.len() == 1 && (y[0] - want as f64).abs() <= 1e-9, json!(y[0]))
            }
        };
        if !ok {
            mismatches += 1;
            if first.is_none() {
                first = Some(json!({"input": render_bits(x), "expected": want, "got": got}));
            }
        }
    }
    let options = json!({
        "net": path_str(&a.net),
        "circuit": path_str(&a.circuit),
        "exhaustive": a.exhaustive,
        "samples": a.samples,
        "seed": a.seed,
        "mode": net.mode(),
    });
    let mut o = Outcome::new("verify circuit", options, inputs);
    o.seed = (!a.exhaustive).then_some(a.seed);
    o.failed = mismatches > 0;
    o.summary = match &first {
        None => format!("pass: {} inputs, 0 mismatches", xs.len()),
        Some(c) => format!("FAIL: {mismatches} of {} inputs mismatch; first counterexample {c}", xs.len()),
    };
    o.results = json!({"checked": xs.len(), "mismatches": mismatches, "counterexample": first});
    Ok(o)
}

fn cmd_verify_tm(a: &VerifyTmArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let text = inputs.read(&a.transformer)?;
    let model = parse_transformer_json(&text).map_err(|e| usage(format!("{}: {e}", a.transformer.display())))?;
    let spec = load_tm(&mut inputs, &a.machine)?;
    let compiled = if a.invariants {
        if model.mode() == Mode::Float {
            return Err(semantic(
                "layout invariants are checked exactly and a float model cannot hold 1/3 exactly; recompile with --mode rational",
            ));
        }
        Some(CompiledTm::from_model(rational_transformer(&model), &spec).map_err(semantic)?)
    } else {
        None
    };
    let xs = spec.all_inputs(a.max_len);
    let mut checked = 0usize;
    let mut excluded = Vec::new();
    let mut failures = 0usize;
    let mut first: Option<Value> = None;
    let mut min_gap: Option<f64> = None;
    for x in &xs {
        let shown = spec.render(x);
        let decision = match simulate(&spec, x).map(|t| t.decision) {
            Ok(Some(d)) => d,
            Ok(None) | Err(_) => {
                excluded.push(shown);
                continue;
            }
        };
        checked += 1;
        let (ok, detail) = if let Some(c) = &compiled {
            let r = verify_input(c, &spec, x).map_err(semantic)?;
            if let Some(g) = r.min_gap {
                min_gap = Some(min_gap.map_or(g, |m: f64| m.min(g)));
            }
            let detail = json!({
                "prediction": r.prediction,
                "mismatches": r.mismatches.iter().take(5).collect::<Vec<_>>(),
                "iprime_errors": r.iprime_errors,
                "min_gap": r.min_gap,
                "non_binary": r.non_binary,
            });
            (r.ok(), detail)
        } else {
            let p = match &model {
                AnyTransformer::Rational(m) => m.decode(x).map_err(semantic)?.prediction.to_f64(),
                AnyTransformer::Float(m) => m.decode(x).map_err(semantic)?.prediction,
            };
            ((p > 0.0) == decision, json!({"prediction": p}))
        };
        if !ok {
            failures += 1;
            if first.is_none() {
                let mut c = json!({"input": shown, "decision": u8::from(decision)});
                c["detail"] = detail;
                first = Some(c);
            }
        }
    }
    let options = json!({
        "transformer": path_str(&a.transformer),
        "machine": path_str(&a.machine),
        "max_len": a.max_len,
        "invariants": a.invariants,
        "mode": model.mode(),
    });
    let mut o = Outcome::new("verify tm", options, inputs);
    o.failed = failures > 0;
    o.summary = match &first {
        None => format!("pass: {checked} inputs checked, {} excluded (no decision in time)", excluded.len()),
        Some(c) => format!("FAIL: {failures} of {checked} inputs; first counterexample {c}"),
    };
    o.results = json!({
        "checked": checked,
        "excluded": excluded,
        "failures": failures,
        "min_gap": min_gap,
        "counterexample": first,
    });
    Ok(o)
}

fn margin_outcome(
    command: &'static str,
    options: Value,
    inputs: Inputs,
    seed: u64,
    res: Result<MarginReport, MarginError>,
) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(command, options, inputs);
    o.seed = Some(seed);
    match res {
        Ok(r) => {
            o.summary = format!(
                "upper bound {} ({} evaluations, output {})",
                r.upper_bound.map_or("none".into(), |u| u.to_string()),
                r.stats.evaluations,
                r.output
            );
            o.results = serde_json::to_value(&r).expect("report serializes");
        }
        Err(MarginError::NotFlippable { evaluations, report }) => {
            o.summary = format!("no flip found in {evaluations} evaluations; upper bound none");
            o.results = serde_json::to_value(&*report).expect("report serializes");
            o.error = Some(semantic(format!("not flippable within {evaluations} evaluations")));
        }
        Err(e) => return Err(semantic(e)),
    }
    Ok(o)
}

fn cmd_margin_upper(a: &MarginUpperArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let model = load_model(&mut inputs, &a.model)?;
    let opts = SearchOptions { budget: a.budget, restarts: a.restarts, seed: a.seed };
    let mut options = json!({
        "model": path_str(&a.model),
        "input": a.input,
        "restarts": a.restarts,
        "budget": a.budget,
        "seed": a.seed,
        "layer_based": a.layer_based,
    });
    let res = match model {
        AnyModel::Net(net) => {
            let net = net.to_float();
            let x = parse_bits_or_numbers(&a.input)?;
            let base = net.forward(&x).map_err(semantic)?;
            let label = a.label.unwrap_or(u8::from(base[0] > 0.0));
            options["label"] = json!(label);
            if a.layer_based {
                margin::layer_margin_upper_bound(&net, &x, label, &opts)
            } else {
                margin::margin_upper_bound(&NetParamModel { net: &net, x: x.clone() }, json!(x), label, &opts)
            }
        }
        AnyModel::Transformer(m) => {
            if a.layer_based {
                return Err(semantic("layer-based margins are defined for nets only"));
            }
            let m = m.to_float();
            let x = m.tokenize(&a.input).map_err(usage)?;
            let base = m.decode(&x).map_err(semantic)?.prediction;
            let label = a.label.unwrap_or(u8::from(base > 0.0));
            options["label"] = json!(label);
            let pm = TransformerParamModel::new(&m, x);
            margin::margin_upper_bound(&pm, json!(a.input), label, &opts)
        }
    };
    margin_outcome("margin upper", options, inputs, a.seed, res)
}

fn binary_inputs(dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    if dim > 16 {
        return Err(semantic(format!("{dim} inputs is too many to enumerate; pass --input")));
    }
    Ok(all_inputs(dim).map(|x| bits_to_scalars::<f64>(&x)).collect())
}

fn cmd_margin_certify(a: &MarginCertifyArgs) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::default();
    let model = load_model(&mut inputs, &a.model)?;
    let given: Option<LipschitzProfile> = match &a.profile {
        Some(p) => {
            let text = inputs.read(p)?;
            Some(serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let options = json!({
        "model": path_str(&a.model),
        "profile": a.profile.as_deref().map(path_str),
        "input": a.input,
        "trials": a.trials,
        "compare": a.compare,
        "budget": a.budget,
        "seed": a.seed,
    });
    let net = match model {
        AnyModel::Transformer(_) => {
            let Some(profile) = given else {
                return Err(semantic("certifying a transformer needs --profile"));
            };
            let lower = certified_lower_bound(&profile).map_err(semantic)?;
            let mut o = Outcome::new("margin certify", options, inputs);
            o.summary = format!("certified lower bound {lower}");
            o.results = json!({"lower_bound": lower, "profile": profile, "terms": terms_json(&profile)});
            return Ok(o);
        }
        AnyModel::Net(n) => n.to_float(),
    };
    let xs: Vec<Vec<f64>> = if a.input.is_empty() {
        binary_inputs(net.input_dim)?
    } else {
        a.input.iter().map(|s| parse_bits_or_numbers(s)).collect::<Result<_, _>>()?
    };
    let profile = match given {
        Some(p) => p,
        None => estimate_profile(&net, &xs).map_err(semantic)?,
    };
    let lower = certified_lower_bound(&profile).map_err(semantic)?;
    let mut results = json!({
        "lower_bound": lower,
        "profile": profile,
        "terms": terms_json(&profile),
        "inputs": xs.len(),
    });
    let mut failed = false;
    let mut lines = vec![format!("certified lower bound {lower} over {} inputs", xs.len())];
    if a.trials > 0 {
        let radii = block_radii(&net, &xs).map_err(semantic)?;
        let mut worst: Option<Value> = None;
        for (k, x) in xs.iter().enumerate() {
            let r = robustness_property_test(&net, &radii, x, a.trials, a.seed.wrapping_add(k as u64))
                .map_err(semantic)?;
            if !r.passed && worst.is_none() {
                worst = Some(json!({"input": x, "delta": r.counterexample}));
            }
        }
        failed |= worst.is_some();
        lines.push(format!(
            "robustness at block radius {}: {}",
            radii.radius,
            if worst.is_none() { "pass" } else { "FAIL" }
        ));
        results["robustness"] =
            json!({"radius": radii.radius, "blocks": radii.blocks.len(), "trials": a.trials, "counterexample": worst});
    }
    if a.compare {
        let mut violations = 0usize;
        let mut min_upper: Option<f64> = None;
        let opts = SearchOptions { budget: a.budget, restarts: 2, seed: a.seed };
        for x in &xs {
            let label = u8::from(net.forward(x).map_err(semantic)?[0] > 0.0);
            let m = NetParamModel { net: &net, x: x.clone() };
            if let Ok(r) = margin::margin_upper_bound(&m, json!(x), label, &opts) {
                let u = r.upper_bound.expect("successful search has a bound");
                min_upper = Some(min_upper.map_or(u, |m: f64| m.min(u)));
                if lower > u {
                    violations += 1;
                }
            }
        }
        failed |= violations > 0;
        lines.push(format!(
            "smallest searched upper bound {}; violations {violations}",
            min_upper.map_or("none".into(), |u| u.to_string())
        ));
        results["comparison"] = json!({"min_upper_bound": min_upper, "violations": violations});
    }
    let mut o = Outcome::new("margin certify", options, inputs);
    o.seed = Some(a.seed);
    o.failed = failed;
    o.summary = lines.join("\n");
    o.results = results;
    Ok(o)
}

fn terms_json(p: &LipschitzProfile) -> Value {
    Value::Object(certificate_terms(p).iter().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

fn cmd_bound(b: &BoundCmd) -> Result<Outcome, CliError> {
    let inputs = Inputs::default();
    Ok(match b {
        BoundCmd::SampleComplexity(a) => {
            let s = bounds::solve_sample_complexity(a.alpha, a.p, a.gamma, a.eps, a.c_rad).map_err(semantic)?;
            let options = json!({"alpha": a.alpha, "p": a.p, "gamma": a.gamma, "eps": a.eps, "c_rad": a.c_rad});
            let mut o = Outcome::new("bound sample-complexity", options, inputs);
            o.summary = format!("n* = {} (up to the constant c_rad = {})", s.n, a.c_rad);
            o.results = serde_json::to_value(s).expect("serializes");
            o
        }
        BoundCmd::Surrogate(a) => {
            let v = bounds::surrogate_loss(a.margin, a.gamma).map_err(semantic)?;
            let mut o = Outcome::new("bound surrogate", json!({"margin": a.margin, "gamma": a.gamma}), inputs);
            o.summary = format!("surrogate loss {v}");
            o.results = json!({"loss": v});
            o
        }
        BoundCmd::Sm(a) => {
            let v = bounds::sm_bound(a.eps, a.n, a.delta_conf).map_err(semantic)?;
            let options = json!({"eps": a.eps, "n": a.n, "delta_conf": a.delta_conf});
            let mut o = Outcome::new("bound sm", options, inputs);
            o.summary = format!("population error bound {v}");
            o.results = json!({"bound": v});
            o
        }
        BoundCmd::Model(a) => {
            let mut inputs = inputs;
            let (l1, p) = match load_model(&mut inputs, &a.model)? {
                AnyModel::Net(n) => {
                    let n: LayeredNet<f64> = n.to_float();
                    (n.l1_norm(), n.param_count())
                }
                AnyModel::Transformer(m) => {
                    let m = m.to_float();
                    (m.l1_norm(), m.param_count())
                }
            };
            let s = bounds::sample_complexity_from_params(l1, p, a.gamma, a.eps, a.c_rad).map_err(semantic)?;
            let options = json!({"model": path_str(&a.model), "gamma": a.gamma, "eps": a.eps, "c_rad": a.c_rad});
            let mut o = Outcome::new("bound model", options, inputs);
            o.summary = format!("alpha = {l1}, p = {p}: n* = {}", s.result.n);
            o.results = serde_json::to_value(s).expect("serializes");
            o
        }
    })
}

fn cmd_toy_net(a: &ToyNetArgs) -> Result<Outcome, CliError> {
    if a.d == 0 {
        return Err(usage("--d must be at least 1"));
    }
    let net: LayeredNet<Rational> = match a.kind {
        ToyKind::Product => toy::product_net(a.d, a.corrected),
        ToyKind::Threshold => toy::linear_threshold(),
    };
    let net = AnyNet::Rational(net).in_mode(a.mode.into());
    write_file(&a.output, &net.to_json())?;
    let options = json!({
        "kind": format!("{:?}", a.kind).to_lowercase(),
        "d": a.d,
        "corrected": a.corrected,
        "output": path_str(&a.output),
        "mode": Mode::from(a.mode),
    });
    let mut o = Outcome::new("toy-net", options, Inputs::default());
    o.summary = format!("wrote {}", a.output.display());
    o.results = json!({"format": NET_FORMAT});
    Ok(o)
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.cmd {
        Command::CompileCircuit(a) => cmd_compile_circuit(a),
        Command::CompileTm(a) => cmd_compile_tm(a),
        Command::RunNet(a) => cmd_run_net(a),
        Command::RunTm(a) => cmd_run_tm(a),
        Command::Verify(VerifyCmd::Circuit(a)) => cmd_verify_circuit(a),
        Command::Verify(VerifyCmd::Tm(a)) => cmd_verify_tm(a),
        Command::Margin(MarginCmd::Upper(a)) => cmd_margin_upper(a),
        Command::Margin(MarginCmd::Certify(a)) => cmd_margin_certify(a),
        Command::Bound(b) => cmd_bound(b),
        Command::ToyNet(a) => cmd_toy_net(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(&cli);
    if cli.timing {
        eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    }
    let o = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code());
        }
    };
    if !o.summary.is_empty() {
        println!("{}", o.summary);
    }
    if let Some(path) = &cli.report {
        let r = Report { command: o.command.into(), options: o.options, seed: o.seed, inputs: o.inputs, results: o.results };
        if let Err(e) = r.write(path) {
            eprintln!("error: {e}");
            return ExitCode::from(e.code());
        }
    }
    if let Some(e) = o.error {
        eprintln!("error: {e}");
        return ExitCode::from(e.code());
    }
    if o.failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
