use serde_json::json;

use sma_core::circuit::{all_inputs, corpus, layerize};
use sma_core::circuit_compiler::{bits_to_scalars, compile, CompileOptions};
use sma_core::ffnet::toy;
use sma_core::margin::{
    certified_lower_bound, estimate_profile, layer_margin_upper_bound, margin_upper_bound, witness_flips,
    NetParamModel, SearchOptions, TransformerParamModel,
};
use sma_core::tm_compiler::{compile_tm, TmCompileOptions};
use sma_core::turing;

#[test]
fn witnesses_flip_and_meet_the_reported_norm() {
    let net = toy::product_net::<f64>(8, false);
    let m = NetParamModel { net: &net, x: vec![1.0] };
    let r = margin_upper_bound(&m, json!([1.0]), 1, &SearchOptions::default()).unwrap();
    let w = r.witness.clone().unwrap();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - r.upper_bound.unwrap()).abs() < 1e-9);
    assert!(witness_flips(&m, 1, &w).unwrap());
    // 3/√d is always feasible.
    assert!(r.upper_bound.unwrap() <= 3.0 / 8f64.sqrt() + 1e-6);
}

#[test]
fn same_seed_same_report() {
    let net = toy::product_net::<f64>(16, false);
    let m = NetParamModel { net: &net, x: vec![1.0] };
    let opts = SearchOptions { budget: 3000, restarts: 3, seed: 41 };
    let a = margin_upper_bound(&m, json!([1.0]), 1, &opts).unwrap();
    let b = margin_upper_bound(&m, json!([1.0]), 1, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn layer_margins_exist_for_compiled_circuits() {
    let (_, c) = corpus::named().into_iter().find(|(n, _)| *n == "majority").unwrap();
    let net = compile::<f64>(&layerize(&c), &CompileOptions::default()).unwrap().net;
    for x in all_inputs(3) {
        let xs = bits_to_scalars::<f64>(&x);
        let label = u8::from(net.forward(&xs).unwrap()[0] > 0.0);
        let r = layer_margin_upper_bound(&net, &xs, label, &SearchOptions { budget: 2000, ..Default::default() }).unwrap();
        assert!(r.upper_bound.unwrap() > 0.0);
    }
}

#[test]
fn certificate_below_search_on_named_circuits() {
    for (name, c) in corpus::named() {
        let l = layerize(&c);
        let net = compile::<f64>(&l, &CompileOptions::default()).unwrap().net;
        let xs: Vec<Vec<f64>> = all_inputs(l.num_inputs()).map(|x| bits_to_scalars(&x)).collect();
        let lower = certified_lower_bound(&estimate_profile(&net, &xs).unwrap()).unwrap();
        assert!(lower > 0.0, "{name}");
        for x in &xs {
            let label = u8::from(net.forward(x).unwrap()[0] > 0.0);
            let m = NetParamModel { net: &net, x: x.clone() };
            let r = margin_upper_bound(&m, json!(x), label, &SearchOptions { budget: 1000, ..Default::default() }).unwrap();
            assert!(lower <= r.upper_bound.unwrap(), "{name}");
        }
    }
}

#[test]
fn compiled_transformer_has_a_positive_parameter_margin() {
    let spec = turing::corpus::parity();
    let model = compile_tm(&spec, &TmCompileOptions::default()).unwrap().model.to_float();
    let x = spec.tokenize("1").unwrap();
    let m = TransformerParamModel::new(&model, x);
    let r = margin_upper_bound(&m, json!("1"), 0, &SearchOptions { budget: 200, restarts: 1, seed: 2 }).unwrap();
    let u = r.upper_bound.unwrap();
    assert!(u > 0.0 && u.is_finite());
}
