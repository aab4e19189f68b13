mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use qfmix::cli::{path6_demo_arch, random_inputs, random_params as seeded_params, verify};
use qfmix::encoding::{amplitude_encode, decode_probabilities, probability_encode};
use qfmix::model::arch::ArchitectureSpec;
use qfmix::model::{argmax, build_circuit, circuit_inference, train, Network, Samples, TrainConfig};
use qfmix::neurons::{
    build_p_neuron, build_p_select_neuron, n_forward, p_select_forward, u_forward, v_forward,
    BinaryWeights,
};
use qfmix::statevec::{CircuitFragment, Gate, StateVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gate_strategy() -> impl Strategy<Value = Gate> {
    prop_oneof![
        Just(Gate::H),
        Just(Gate::X),
        Just(Gate::Z),
        (-7.0..7.0f64).prop_map(Gate::Rx),
        (-7.0..7.0f64).prop_map(Gate::Ry),
        Just(Gate::Cx),
        Just(Gate::Cz),
        prop::collection::vec(any::<bool>(), 1..3).prop_map(Gate::Mcx),
        (1usize..3).prop_map(Gate::Mcz),
        ((-7.0..7.0f64), prop::collection::vec(any::<bool>(), 1..3)).prop_map(|(t, p)| Gate::Mcry(t, p)),
    ]
}

/// A gate together with distinct qubits on an `n`-qubit register.
fn placed_gate(n: usize) -> impl Strategy<Value = (Gate, Vec<usize>)> {
    gate_strategy()
        .prop_filter("fits register", move |g| g.arity() <= n)
        .prop_flat_map(move |g| {
            let k = g.arity();
            (Just(g), Just((0..n).collect::<Vec<_>>()).prop_shuffle().prop_map(move |q| q[..k].to_vec()))
        })
}

fn random_state(n: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1 << n)
        .prop_filter("nonzero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let norm = v.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
            StateVector::from_amplitudes(v.iter().map(|&(a, b)| Complex64::new(a / norm, b / norm)).collect()).unwrap()
        })
}

/// Dense embedding of a gate's matrix into the full register.
fn embedded(gate: &Gate, qubits: &[usize], n: usize) -> Vec<Vec<Complex64>> {
    let m = gate.matrix();
    let k = qubits.len();
    let dim = 1 << n;
    let sub = |i: usize| {
        qubits
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &q)| acc | (((i >> (n - 1 - q)) & 1) << (k - 1 - j)))
    };
    let mask: usize = qubits.iter().map(|&q| 1 << (n - 1 - q)).sum();
    let mut full = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for (i, row) in full.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i & !mask == j & !mask {
                *cell = m[sub(i)][sub(j)];
            }
        }
    }
    full
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn weights(bits: &[bool]) -> BinaryWeights {
    BinaryWeights::new(bits.iter().map(|&b| if b { 1 } else { -1 }).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_match_dense_embedding((state, (gate, qs)) in (1usize..5).prop_flat_map(|n| (random_state(n), placed_gate(n)))) {
        let n = state.n_qubits();
        let full = embedded(&gate, &qs, n);
        let expected: Vec<Complex64> = full
            .iter()
            .map(|row| row.iter().zip(state.amps()).map(|(a, b)| a * b).sum())
            .collect();
        let mut s = state.clone();
        s.apply(&gate, &qs).unwrap();
        for (a, b) in s.amps().iter().zip(&expected) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn circuits_preserve_norm_and_invert(
        (state, ops) in (1usize..5).prop_flat_map(|n| (random_state(n), prop::collection::vec(placed_gate(n), 0..12)))
    ) {
        let mut frag = CircuitFragment::new(state.n_qubits());
        for (g, q) in ops {
            frag.push(g, q).unwrap();
        }
        let mut s = state.clone();
        frag.apply_to(&mut s).unwrap();
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        frag.inverse().apply_to(&mut s).unwrap();
        for (a, b) in s.amps().iter().zip(state.amps()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn marginals_sum_basis_weights(state in (1usize..5).prop_flat_map(random_state), q in 0usize..4) {
        let n = state.n_qubits();
        let q = q % n;
        let direct: f64 = state
            .amps()
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> (n - 1 - q)) & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let m = state.marginal_prob_one(q).unwrap();
        prop_assert!((m - direct).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&m));
    }

    #[test]
    fn amplitude_encoding_normalizes(x in (0usize..4).prop_flat_map(|n| prop::collection::vec(-2.0..2.0f64, 1 << n))
        .prop_filter("nonzero", |x| x.iter().any(|v| v.abs() > 1e-3))) {
        let (s, scale) = amplitude_encode(&x).unwrap();
        for (a, v) in s.amps().iter().zip(&x) {
            prop_assert!((a.re * scale - v).abs() < 1e-12 && a.im.abs() < 1e-15);
        }
    }

    #[test]
    fn probability_encoding_round_trips(p in prop::collection::vec(0.0..=1.0f64, 1..6)) {
        let (_, s) = probability_encode(&p).unwrap();
        let qs: Vec<usize> = (0..p.len()).collect();
        let back = decode_probabilities(&s, &qs).unwrap();
        for (a, b) in back.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for q in qs {
            prop_assert!(s.is_product_qubit(q, 1e-9).unwrap());
        }
    }

    #[test]
    fn u_output_ignores_global_sign(x in (1usize..5).prop_flat_map(|n| prop::collection::vec(-1.0..1.0f64, 1 << n))
        .prop_filter("nonzero", |x| x.iter().any(|v| v.abs() > 1e-3)), bits in prop::collection::vec(any::<bool>(), 16)) {
        let x = unit(&x);
        let w = weights(&bits[..x.len()]);
        let a = u_forward(&x, &w).unwrap();
        let b = u_forward(&x, &w.negated()).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn n_output_stays_between_p_and_its_complement(p in 0.0..=1.0f64, th in -10.0..10.0f64) {
        let h = n_forward(p, th);
        prop_assert!(h >= p.min(1.0 - p) - 1e-12 && h <= p.max(1.0 - p) + 1e-12);
    }

    #[test]
    fn v_blocks_preserve_norm(
        (x, blocks) in (1usize..5).prop_flat_map(|n| (
            prop::collection::vec(-1.0..1.0f64, 1 << n),
            prop::collection::vec(prop::collection::vec(-7.0..7.0f64, 2 * n), 1..4),
        )).prop_filter("nonzero", |(x, _)| x.iter().any(|v| v.abs() > 1e-3))
    ) {
        let y = v_forward(&unit(&x), &blocks).unwrap();
        prop_assert!((y.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn select_p_restores_its_inputs(p in prop::collection::vec(0.0..=1.0f64, 1..5), bits in prop::collection::vec(any::<bool>(), 4)) {
        let m = p.len();
        let w = weights(&bits[..m]);
        let (prep, _) = probability_encode(&p).unwrap();
        let frag = build_p_select_neuron(m, &w).unwrap();
        let s = prep.compose(&frag).simulate().unwrap();
        for (q, &pq) in p.iter().enumerate() {
            prop_assert!((s.marginal_prob_one(q).unwrap() - pq).abs() < 1e-10);
        }
        prop_assert!((s.marginal_prob_one(frag.qubit_span - 1).unwrap() - p_select_forward(&p, &w).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn u_latent_gradient_is_straight_through(
        x in prop::collection::vec(0.05..1.0f64, 8),
        theta in prop::collection::vec(-3.0..3.0f64, 6),
        latent in prop::collection::vec(-1.0..1.0f64, 8),
    ) {
        let arch = ArchitectureSpec::parse("input_dim 8\nclasses 1\nlayer v width=3\nlayer u width=1\n").unwrap();
        let net = Network::new(&arch).unwrap();
        let mut params = net.init_params(0);
        params.v_thetas[0] = theta.clone();
        params.u_latent[0] = latent.clone();
        let trace = net.forward(&params, &x).unwrap();
        let grad = net.backward_from(&params, &trace, &[1.0]).unwrap();
        let psi = v_forward(&unit(&x), &[theta]).unwrap();
        let w = BinaryWeights::from_latent(&latent);
        let dot: f64 = (0..8).map(|k| w.get(k) * psi[k]).sum();
        for (g, p) in grad.u_latent[0].iter().zip(&psi) {
            prop_assert!((g - 2.0 * dot * p / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn circuit_matches_model_for_u_n_and_p_chains(seed in any::<u64>(), which in 0usize..3) {
        let text = [
            "input_dim 4\nclasses 1\nlayer v width=2\nlayer u width=1\nlayer n width=1\n",
            "input_dim 4\nclasses 1\nlayer v width=2\nlayer u width=2\nlayer p width=1\n",
            "input_dim 4\nclasses 1\nlayer v width=2\nlayer u width=2\nlayer n width=2\nlayer p width=1\n",
        ][which];
        let arch = ArchitectureSpec::parse(text).unwrap();
        let net = Network::new(&arch).unwrap();
        let params = seeded_params(&net, seed);
        let s = verify(&arch, &params, &random_inputs(4, 4, seed)).unwrap();
        prop_assert!(s.max_deviation < 1e-9, "deviation {}", s.max_deviation);
    }

    #[test]
    fn circuit_width_matches_closed_form(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = common::random_arch(&mut rng);
        let net = Network::new(&arch).unwrap();
        let params = net.init_params(seed);
        let circ = build_circuit(&net, &params, &common::random_input(arch.input_dim, &mut rng)).unwrap();
        prop_assert_eq!(circ.qubit_span, net.circuit_qubits());
        prop_assert_eq!(circ.measured.len(), arch.num_classes);
    }
}

#[test]
fn product_p_on_entangled_input_breaks_the_model() {
    let s = verify(&path6_demo_arch(), &seeded_params(&Network::new(&path6_demo_arch()).unwrap(), 1), &random_inputs(4, 20, 1)).unwrap();
    assert!(s.max_deviation > 0.01, "deviation {}", s.max_deviation);
}

#[test]
fn product_p_on_a_bell_pair_differs_from_the_marginal_product() {
    // (|00⟩+|11⟩)/√2 has marginals ½, ½; the AND gadget reads Pr[11] = ½, not ¼.
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    let frag = build_p_neuron(2, &BinaryWeights::ones(2)).unwrap();
    // q0 q1 carry the pair, the output qubit comes last
    let mut amps = vec![z; 8];
    amps[0] = Complex64::new(h, 0.0);
    amps[6] = Complex64::new(h, 0.0);
    let mut s = StateVector::from_amplitudes(amps).unwrap();
    frag.apply_to(&mut s).unwrap();
    let factorized = qfmix::neurons::p_forward(&[0.5, 0.5], &BinaryWeights::ones(2)).unwrap();
    let exact = s.marginal_prob_one(2).unwrap();
    assert!((exact - factorized).abs() > 0.01, "exact {exact}, factorized {factorized}");
}

#[test]
fn circuit_and_model_agree_on_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut agree = 0;
    let total = 100;
    for seed in 0..total {
        let arch = loop {
            let a = common::random_arch(&mut rng);
            let feasible = qfmix::mixer::validate_architecture(&a).unwrap().pass;
            if feasible && Network::new(&a).unwrap().circuit_qubits() <= 16 {
                break a;
            }
        };
        let net = Network::new(&arch).unwrap();
        let params = seeded_params(&net, seed);
        let x = common::random_input(arch.input_dim, &mut rng);
        let model = net.forward(&params, &x).unwrap().output;
        let exact = circuit_inference(&arch, &params, &x).unwrap();
        // identical U neurons tie exactly; either index is then a correct answer
        let top = model[argmax(&model)];
        if model[argmax(&exact)] >= top - 1e-12 {
            agree += 1;
        }
    }
    assert!(agree >= 99, "{agree}/{total}");
}

#[test]
fn training_is_deterministic() {
    let data = qfmix::data::cap_dataset(64, 5);
    let arch = ArchitectureSpec::mixnn(8, 1, true, 1, &[2, 2], 2).unwrap();
    let net = Network::new(&arch).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut p = net.init_params(3);
        let report = train(&net, &mut p, &data, Some(&data), &cfg).unwrap();
        (p.to_flat(), report)
    };
    assert_eq!(run(), run());
}

#[test]
fn untrained_weights_do_not_beat_chance_by_much() {
    let data: Samples = qfmix::data::cap_dataset(400, 6);
    let arch = ArchitectureSpec::mixnn(8, 1, true, 0, &[2], 2).unwrap();
    let net = Network::new(&arch).unwrap();
    let params = net.init_params(0);
    let acc = qfmix::model::accuracy(&net, &params, &data).unwrap();
    assert!((0.2..=0.8).contains(&acc), "{acc}");
}
