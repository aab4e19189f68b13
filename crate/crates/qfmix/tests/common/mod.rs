#![allow(dead_code)]

use qfmix::model::arch::{ArchitectureSpec, ThetaMode};
use qfmix::model::{Network, ParameterStore};
use qfmix::neurons::PGadget;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Worst relative error between backprop and central differences over the
/// real parameters; gradients below `floor` in magnitude are compared on
/// the `floor` scale.
pub fn gradient_error(net: &Network, params: &ParameterStore, x: &[f64], label: usize, temp: f64, floor: f64) -> f64 {
    let trace = net.forward(params, x).unwrap();
    let analytic = net.backward(params, &trace, label, temp).unwrap().to_flat();
    let base = params.to_flat();
    let mut worst: f64 = 0.0;
    for range in params.real_ranges() {
        for i in range {
            let eval = |delta: f64| {
                let mut p = params.clone();
                let mut flat = base.clone();
                flat[i] += delta;
                p.from_flat(&flat);
                let t = net.forward(&p, x).unwrap();
                net.loss(&t, label, temp).unwrap()
            };
            let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            let a = analytic[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// A random small architecture with at least two classes.
pub fn random_arch(rng: &mut ChaCha8Rng) -> ArchitectureSpec {
    loop {
        let n = rng.gen_range(1..=3);
        let r1 = rng.gen_range(1..=3);
        let r2 = rng.gen_bool(0.6);
        let r3 = rng.gen_range(0..=2);
        if !r2 && r3 == 0 && n < 2 {
            continue;
        }
        let mut widths: Vec<usize> = (0..usize::from(r2) + r3).map(|_| rng.gen_range(2..=4)).collect();
        let classes = if widths.is_empty() { 2 } else { *widths.last().unwrap() };
        if let Some(l) = widths.last_mut() {
            *l = classes;
        }
        let mut arch = ArchitectureSpec::mixnn(1 << n, r1, r2, r3, &widths, classes).unwrap();
        for l in arch.layers.iter_mut() {
            if rng.gen_bool(0.3) {
                l.theta = ThetaMode::Shared;
            }
            if rng.gen_bool(0.3) {
                l.gadget = PGadget::Product;
            }
        }
        return arch;
    }
}

/// Parameters with angles spread over a full turn.
pub fn random_params(net: &Network, rng: &mut ChaCha8Rng) -> ParameterStore {
    let mut p = net.init_params(rng.gen());
    let mut flat = p.to_flat();
    for r in p.real_ranges() {
        for i in r {
            flat[i] = rng.gen_range(-3.0..3.0);
        }
    }
    p.from_flat(&flat);
    p
}

pub fn random_input(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(0.05..1.0)).collect()
}

pub fn workspace_data_dir() -> std::path::PathBuf {
    std::env::var_os("QFMIX_DATA")
        .map(Into::into)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}
