mod common;

use common::*;
use fragvqa_net::attention::{build_gate_mask, grpb_attention, relative_position_index, rpb_attention, table_len};
use fragvqa_net::{DType, Fanet};
use proptest::prelude::*;

fn tie_tables(model: &Fanet, rng: &mut rand_chacha::ChaCha8Rng) {
    let names = model.params().names();
    for name in names.iter().filter(|n| n.ends_with("real_bias_table")) {
        let var = model.params().get(name).unwrap();
        let t = random_tensor(rng, var.dims(), 1.0);
        model.params().set(name, &t).unwrap();
        model.params().set(&name.replace("real_", "pseudo_"), &t).unwrap();
    }
}

fn untie_tables(model: &Fanet, rng: &mut rand_chacha::ChaCha8Rng) {
    for name in model.params().names().iter().filter(|n| n.ends_with("_bias_table")) {
        let var = model.params().get(name).unwrap();
        let t = random_tensor(rng, var.dims(), 2.0);
        model.params().set(name, &t).unwrap();
    }
}

#[test]
fn tied_tables_reduce_to_plain_relative_bias_network() {
    let mut r = rng(11);
    for case in 0..50 {
        let cfg = random_small_config(&mut r);
        let gated = Fanet::new(cfg.clone(), DType::F64, case).unwrap();
        randomize(&gated, &mut r, 0.2);
        tie_tables(&gated, &mut r);
        let plain = Fanet::new(fragvqa_net::FanetConfig { gated_bias: [false; 4], ..cfg.clone() }, DType::F64, 0).unwrap();
        copy_shared(&gated, &plain);
        let x = random_input(&mut r, &cfg, 2);
        let a = gated.regress(&x).unwrap();
        let b = plain.regress(&x).unwrap();
        let d = max_abs_diff(&a, &b);
        assert!(d <= 1e-10, "case {case}: {cfg:?} differs by {d}");
    }
}

#[test]
fn untied_tables_change_the_output() {
    let mut r = rng(12);
    let cfg = fragvqa_net::FanetConfig::tiny();
    let gated = Fanet::new(cfg.clone(), DType::F64, 1).unwrap();
    randomize(&gated, &mut r, 0.2);
    untie_tables(&gated, &mut r);
    let plain = Fanet::new(fragvqa_net::FanetConfig { gated_bias: [false; 4], ..cfg.clone() }, DType::F64, 0).unwrap();
    copy_shared(&gated, &plain);
    let x = random_input(&mut r, &cfg, 1);
    let d = max_abs_diff(&gated.regress(&x).unwrap(), &plain.regress(&x).unwrap());
    assert!(d > 1e-6, "outputs agree to {d}");
}

#[test]
fn single_window_degeneracy_and_witness() {
    let mut r = rng(13);
    let window = [2, 2, 4];
    let n = 16;
    let index = relative_position_index(window, window).unwrap();
    let gate = build_gate_mask([0, 0, 2], window, 4);
    assert!(gate.is_mixed());
    let q = random_tensor(&mut r, &[2, n, 3], 1.0);
    let k = random_tensor(&mut r, &[2, n, 3], 1.0);
    let v = random_tensor(&mut r, &[2, n, 3], 1.0);
    let table = random_tensor(&mut r, &[table_len(window), 2], 1.0);
    let tied = grpb_attention(&q, &k, &v, &table, &table, &index, &gate).unwrap();
    let plain = rpb_attention(&q, &k, &v, &table, &index).unwrap();
    assert_eq!(max_abs_diff(&tied, &plain), 0.0);

    let zero = fragvqa_net::Tensor::zeros((table_len(window), 2), DType::F64, &fragvqa_net::Device::Cpu).unwrap();
    let no_bias = fragvqa_net::attention::attend(&q, &k, &v, None).unwrap();
    let zeroed = grpb_attention(&q, &k, &v, &zero, &zero, &index, &gate).unwrap();
    assert!(max_abs_diff(&no_bias, &zeroed) < 1e-15);

    let other = random_tensor(&mut r, &[table_len(window), 2], 1.0);
    let untied = grpb_attention(&q, &k, &v, &table, &other, &index, &gate).unwrap();
    assert!(max_abs_diff(&untied, &plain) > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn gate_is_an_equivalence_relation(
        origin in prop::array::uniform3(0usize..40),
        window in prop::array::uniform3(1usize..6),
        mp in 1usize..9,
    ) {
        let g = build_gate_mask(origin, window, mp);
        let n = g.len();
        for i in 0..n {
            prop_assert!(g.get(i, i));
            for j in 0..n {
                prop_assert_eq!(g.get(i, j), g.get(j, i));
                if g.get(i, j) {
                    for k in 0..n {
                        prop_assert_eq!(g.get(j, k), g.get(i, k));
                    }
                }
            }
        }
    }
}
