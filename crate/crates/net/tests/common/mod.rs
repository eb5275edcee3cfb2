#![allow(dead_code)]

use fragvqa_core::sampling::GridSpec;
use fragvqa_net::{DType, Device, Fanet, FanetConfig, Preset, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random configuration that still exercises shifted windows,
/// clamped windows and mixed gates.
pub fn random_small_config(rng: &mut ChaCha8Rng) -> FanetConfig {
    let windows = [[2, 2, 2], [2, 4, 4], [1, 4, 4], [2, 3, 3], [1, 2, 2]];
    let heads = [[1, 1, 2, 2], [1, 2, 2, 4], [2, 2, 4, 4]];
    let embed = [4, 8][rng.random_range(0..2)];
    FanetConfig {
        preset: Preset::Custom,
        embed_dim: embed,
        depths: [0; 4].map(|_| rng.random_range(1..=2)),
        heads: heads[rng.random_range(0..heads.len())],
        window: windows[rng.random_range(0..windows.len())],
        patch_stride: [2, 4, 4],
        in_channels: 3,
        mlp_ratio: 2,
        fragments: GridSpec::new(rng.random_range(1..=2), 32, [2, 4][rng.random_range(0..2)]).unwrap(),
        gated_bias: [true; 4],
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, cfg: &FanetConfig, batch: usize) -> Tensor {
    let [t, h, w] = cfg.input_dims();
    random_tensor(rng, &[batch, t, h, w, 3], 1.5)
}

/// Perturbs every parameter so the network is far from its near-linear init.
pub fn randomize(model: &Fanet, rng: &mut ChaCha8Rng, scale: f64) {
    for (name, var) in model.params().iter() {
        let noise = random_tensor(rng, var.dims(), scale).to_dtype(var.dtype()).unwrap();
        let v = (var.as_tensor() + noise).unwrap();
        model.params().set(name, &v).unwrap();
    }
}

pub fn copy_shared(from: &Fanet, to: &Fanet) {
    for (name, var) in to.params().iter() {
        let src = from.params().get(name).unwrap_or_else(|| panic!("{name} missing"));
        var.set(src.as_tensor()).unwrap();
    }
}

pub fn to_vec(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    to_vec(a)
        .iter()
        .zip(to_vec(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
