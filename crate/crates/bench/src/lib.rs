//! Shared fixtures for the criterion benchmarks: seeded desk-scale
//! instances with one, two, and three hidden layers.

use bnnverify_core::bnn::{BnnModel, InputSpec, Norm};
use bnnverify_core::gen::{gen_input, gen_model};
use bnnverify_core::rat::{rat, rat_int};

pub fn instances() -> Vec<(String, BnnModel, InputSpec)> {
    let cases: [(&str, &[usize], u32); 3] = [
        ("shallow-4x4", &[4, 4, 3], 2),
        ("deep-3x3x3", &[3, 3, 3, 3], 1),
        ("wide-5x5", &[5, 5, 2], 3),
    ];
    cases
        .iter()
        .map(|&(name, dims, q)| {
            let model = gen_model(dims, q, &rat(2, 3), -2, 2, 42).unwrap();
            let spec = gen_input(&model, 43).to_spec(rat_int(1), Norm::L1);
            (name.to_string(), model, spec)
        })
        .collect()
}
