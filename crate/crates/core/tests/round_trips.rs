use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sma_core::circuit::{all_inputs, corpus, layerize, random_circuit, RandomCircuitParams};
use sma_core::circuit_compiler::{bits_to_scalars, compile, round_gadget, CompileOptions};
use sma_core::ffnet::{parse_net_json, AnyNet, LayeredNet};
use sma_core::scalar::{Rational, Scalar};
use sma_core::tm_compiler::{compile_tm, verify_input, CompiledTm, TmCompileOptions};
use sma_core::transformer::{parse_transformer_json, AnyTransformer};
use sma_core::turing::{self, simulate};

#[test]
fn net_json_round_trip_keeps_outputs() {
    for (name, c) in corpus::named() {
        let l = layerize(&c);
        let net = compile::<Rational>(&l, &CompileOptions::default()).unwrap().net;
        let text = AnyNet::Rational(net.clone()).to_json().to_string();
        let back = parse_net_json(&text).unwrap().to_rational();
        for x in all_inputs(l.num_inputs()) {
            let xs = bits_to_scalars::<Rational>(&x);
            assert_eq!(net.forward(&xs).unwrap(), back.forward(&xs).unwrap(), "{name}");
        }
    }
}

#[test]
fn float_and_rational_compilations_agree_on_random_corpus() {
    for l in corpus::random_layered(77, 15) {
        let exact = compile::<Rational>(&l, &CompileOptions::default()).unwrap().net;
        let float = compile::<f64>(&l, &CompileOptions::default()).unwrap().net;
        for x in all_inputs(l.num_inputs()) {
            let e = exact.forward(&bits_to_scalars::<Rational>(&x)).unwrap()[0].to_f64();
            let f = float.forward(&bits_to_scalars::<f64>(&x)).unwrap()[0];
            assert!((e - f).abs() < 1e-9);
        }
    }
}

#[test]
fn transformer_json_round_trip_still_verifies() {
    let spec = turing::corpus::parity();
    let c = compile_tm(&spec, &TmCompileOptions::default()).unwrap();
    let back = parse_transformer_json(&c.model.to_json().to_string()).unwrap();
    let float = back.to_float();
    let AnyTransformer::Rational(exact) = back else { panic!("rational model came back as float") };
    let rebuilt = CompiledTm::from_model(exact, &spec).unwrap();
    assert_eq!(rebuilt.layout.d(), c.layout.d());
    for x in spec.all_inputs(3) {
        let r = verify_input(&rebuilt, &spec, &x).unwrap();
        assert!(r.ok(), "{:?}: {:?}", spec.render(&x), r.mismatches.first());
        let want = simulate(&spec, &x).unwrap().decision.unwrap();
        assert_eq!(float.decode(&x).unwrap().prediction > 0.0, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_gadget_snaps_within_one_third(bits in prop::collection::vec(any::<bool>(), 1..6), noise in prop::collection::vec(-0.333f64..0.333, 6)) {
        let d = bits.len();
        let net = LayeredNet::<f64>::new(d, vec![round_gadget(d, d)]).unwrap();
        let x: Vec<f64> = bits.iter().zip(&noise).map(|(&b, e)| f64::from(u8::from(b)) + e).collect();
        let y = net.forward(&x).unwrap();
        for (b, v) in bits.iter().zip(&y) {
            prop_assert!((v - f64::from(u8::from(*b))).abs() < 1e-12);
        }
    }

    #[test]
    fn layering_preserves_the_function(seed in any::<u64>(), inputs in 1usize..6, width in 1usize..5, layers in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(&mut rng, RandomCircuitParams { inputs, width, gate_layers: layers, skip_prob: 0.4 });
        let l = layerize(&c);
        prop_assert!(l.is_layered());
        for x in all_inputs(inputs) {
            prop_assert_eq!(c.evaluate(&x).unwrap(), l.evaluate(&x).unwrap());
        }
    }

    #[test]
    fn extra_depth_keeps_outputs(seed in 0u64..500, extra in 1usize..4) {
        let l = corpus::random_layered(seed, 1).pop().unwrap();
        let base = compile::<Rational>(&l, &CompileOptions::default()).unwrap();
        let deep_opts = CompileOptions { target_depth: Some(base.report.gate_blocks + extra), ..CompileOptions::default() };
        let deep = compile::<Rational>(&l, &deep_opts).unwrap();
        prop_assert_eq!(deep.report.padding_blocks, extra);
        for x in all_inputs(l.num_inputs()) {
            let xs = bits_to_scalars::<Rational>(&x);
            prop_assert_eq!(base.net.forward(&xs).unwrap(), deep.net.forward(&xs).unwrap());
        }
    }
}
