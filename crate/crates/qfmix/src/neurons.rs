//! Circuit builders and closed-form forward models for the V, U, P and N
//! neurons. Each closed form is checked against the simulator in tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::EncodingKind;
use crate::statevec::{CircuitFragment, Gate, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuronError {
    #[error("{what}: expected length {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("binary weight {0} is not +1 or -1")]
    NotBinary(i8),
    #[error("input vector is not unit norm (norm² = {0})")]
    NotNormalized(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn expect_len(what: &'static str, expected: usize, got: usize) -> Result<(), NeuronError> {
    if expected != got {
        return Err(NeuronError::Length {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuronKind {
    V,
    U,
    P,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronIo {
    pub input: EncodingKind,
    /// Native output encoding; V can also expose a probability view.
    pub output: EncodingKind,
    pub reuses_input_qubits: bool,
    pub output_entangled: bool,
}

impl NeuronKind {
    pub fn io(self) -> NeuronIo {
        use EncodingKind::*;
        match self {
            NeuronKind::V => NeuronIo {
                input: Amplitude,
                output: Amplitude,
                reuses_input_qubits: true,
                output_entangled: true,
            },
            NeuronKind::U => NeuronIo {
                input: Amplitude,
                output: Probability,
                reuses_input_qubits: false,
                output_entangled: true,
            },
            NeuronKind::P => NeuronIo {
                input: Probability,
                output: Probability,
                reuses_input_qubits: false,
                output_entangled: true,
            },
            // N inherits entanglement from whatever it acts on.
            NeuronKind::N => NeuronIo {
                input: Probability,
                output: Probability,
                reuses_input_qubits: true,
                output_entangled: false,
            },
        }
    }
}

/// Weights restricted to ±1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryWeights(Vec<i8>);

impl BinaryWeights {
    pub fn new(w: Vec<i8>) -> Result<Self, NeuronError> {
        if let Some(&bad) = w.iter().find(|&&x| x != 1 && x != -1) {
            return Err(NeuronError::NotBinary(bad));
        }
        Ok(BinaryWeights(w))
    }

    pub fn ones(len: usize) -> Self {
        BinaryWeights(vec![1; len])
    }

    /// sign(latent) with sign(0) = +1.
    pub fn from_latent(latent: &[f64]) -> Self {
        BinaryWeights(latent.iter().map(|&x| sign(x) as i8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i] as f64
    }

    pub fn negated(&self) -> Self {
        BinaryWeights(self.0.iter().map(|x| -x).collect())
    }
}

pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// ⌈log2 m⌉, with 0 for m ≤ 1.
pub fn ceil_log2(m: usize) -> usize {
    m.max(1).next_power_of_two().trailing_zeros() as usize
}

// ---- V ----

/// One gate of a V block in real arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VOp {
    Ry { qubit: usize, param: usize },
    Cx { control: usize, target: usize },
}

pub fn v_block_ops(n: usize) -> Vec<VOp> {
    let mut ops: Vec<VOp> = (0..n).map(|q| VOp::Ry { qubit: q, param: q }).collect();
    // On two qubits the ring would run both ways across one pair.
    let links = match n {
        0 | 1 => 0,
        2 => 1,
        _ => n,
    };
    ops.extend((0..links).map(|q| VOp::Cx {
        control: q,
        target: (q + 1) % n,
    }));
    ops.extend((0..n).map(|q| VOp::Ry {
        qubit: q,
        param: n + q,
    }));
    ops
}

pub fn build_v_block(n: usize, theta: &[f64]) -> Result<CircuitFragment, NeuronError> {
    expect_len("V block angles", 2 * n, theta.len())?;
    let mut frag = CircuitFragment::new(n);
    for op in v_block_ops(n) {
        match op {
            VOp::Ry { qubit, param } => frag.push(Gate::Ry(theta[param]), vec![qubit])?,
            VOp::Cx { control, target } => frag.push(Gate::Cx, vec![control, target])?,
        }
    }
    Ok(frag)
}

pub(crate) fn ry_real(state: &mut [f64], n: usize, q: usize, theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    let b = 1usize << (n - 1 - q);
    for i in (0..state.len()).filter(|i| i & b == 0) {
        let a0 = state[i];
        let a1 = state[i | b];
        state[i] = c * a0 - s * a1;
        state[i | b] = s * a0 + c * a1;
    }
}

/// Applies d/dθ RY(θ) (not unitary) to `state`.
pub(crate) fn dry_real(state: &mut [f64], n: usize, q: usize, theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    let b = 1usize << (n - 1 - q);
    for i in (0..state.len()).filter(|i| i & b == 0) {
        let a0 = state[i];
        let a1 = state[i | b];
        state[i] = 0.5 * (-s * a0 - c * a1);
        state[i | b] = 0.5 * (c * a0 - s * a1);
    }
}

pub(crate) fn cx_real(state: &mut [f64], n: usize, control: usize, target: usize) {
    let cb = 1usize << (n - 1 - control);
    let tb = 1usize << (n - 1 - target);
    for i in 0..state.len() {
        if i & cb != 0 && i & tb == 0 {
            state.swap(i, i | tb);
        }
    }
}

pub(crate) fn apply_v_block_real(state: &mut [f64], n: usize, theta: &[f64]) {
    for op in v_block_ops(n) {
        match op {
            VOp::Ry { qubit, param } => ry_real(state, n, qubit, theta[param]),
            VOp::Cx { control, target } => cx_real(state, n, control, target),
        }
    }
}

/// U(θ)·x for a stack of V blocks on real amplitudes.
pub fn v_forward(x: &[f64], blocks: &[Vec<f64>]) -> Result<Vec<f64>, NeuronError> {
    if x.len() < 2 || !x.len().is_power_of_two() {
        return Err(SimError::NotPowerOfTwo(x.len()).into());
    }
    let n = x.len().trailing_zeros() as usize;
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(NeuronError::NotNormalized(norm2));
    }
    let mut s = x.to_vec();
    for theta in blocks {
        expect_len("V block angles", 2 * n, theta.len())?;
        apply_v_block_real(&mut s, n, theta);
    }
    Ok(s)
}

/// Pr[1] of every qubit for real amplitudes.
pub fn real_marginals(state: &[f64]) -> Vec<f64> {
    let n = state.len().trailing_zeros() as usize;
    let mut m = vec![0.0; n];
    for (i, a) in state.iter().enumerate() {
        let p = a * a;
        for (q, mq) in m.iter_mut().enumerate() {
            if (i >> (n - 1 - q)) & 1 == 1 {
                *mq += p;
            }
        }
    }
    m
}

// ---- U ----

/// Diagonal ±1 circuit negating amplitude k exactly when w_k = −1.
///
/// Built from the algebraic normal form of the sign pattern: each monomial
/// becomes a Z, CZ or multi-controlled Z on its support. A constant term is
/// the global phase −1, realised as XZXZ on qubit 0.
pub fn sign_flip_fragment(n: usize, w: &BinaryWeights) -> Result<CircuitFragment, NeuronError> {
    let len = 1usize << n;
    expect_len("U weights", len, w.len())?;
    let mut anf: Vec<u8> = w.as_slice().iter().map(|&x| u8::from(x < 0)).collect();
    for bit in 0..n {
        let b = 1usize << bit;
        for k in 0..len {
            if k & b != 0 {
                anf[k] ^= anf[k ^ b];
            }
        }
    }
    let mut frag = CircuitFragment::new(n);
    if anf[0] == 1 {
        for g in [Gate::X, Gate::Z, Gate::X, Gate::Z] {
            frag.push(g, vec![0])?;
        }
    }
    for (mono, &a) in anf.iter().enumerate().skip(1) {
        if a == 0 {
            continue;
        }
        let support: Vec<usize> = (0..n).filter(|q| (mono >> (n - 1 - q)) & 1 == 1).collect();
        let gate = match support.len() {
            1 => Gate::Z,
            2 => Gate::Cz,
            k => Gate::Mcz(k - 1),
        };
        frag.push(gate, support)?;
    }
    Ok(frag)
}

/// Inputs on qubits 0..n, ancilla output on qubit n.
pub fn build_u_neuron(n: usize, w: &BinaryWeights) -> Result<CircuitFragment, NeuronError> {
    let mut frag = sign_flip_fragment(n, w)?;
    frag.qubit_span = n + 1;
    for q in 0..n {
        frag.push(Gate::H, vec![q])?;
    }
    frag.push(Gate::Mcx(vec![false; n]), (0..=n).collect())?;
    Ok(frag)
}

/// (Σ w_k x_k)² / N.
pub fn u_forward(x: &[f64], w: &BinaryWeights) -> Result<f64, NeuronError> {
    expect_len("U weights", x.len(), w.len())?;
    let dot: f64 = x.iter().zip(w.as_slice()).map(|(a, &b)| a * b as f64).sum();
    Ok(dot * dot / x.len() as f64)
}

// ---- P ----

/// Which P-neuron circuit to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum PGadget {
    /// Control-only selector: output = mean of flipped inputs.
    #[default]
    Select,
    /// Hadamard aggregation: output = Π g(q_i). Needs independent product inputs.
    Product,
}

impl PGadget {
    /// Extra qubits beyond the m inputs, including the output.
    pub fn extra_qubits(self, m: usize) -> usize {
        match self {
            PGadget::Select => ceil_log2(m) + 1,
            PGadget::Product => 1,
        }
    }
}

pub fn g(q: f64) -> f64 {
    (1.0 + 2.0 * (q * (1.0 - q)).max(0.0).sqrt()) / 2.0
}

fn flip(p: f64, w: i8) -> f64 {
    if w > 0 {
        p
    } else {
        1.0 - p
    }
}

/// Hadamard-aggregation P-neuron: inputs 0..m, ancilla m. Inputs are
/// un-rotated afterwards.
pub fn build_p_neuron(m: usize, w: &BinaryWeights) -> Result<CircuitFragment, NeuronError> {
    expect_len("P weights", m, w.len())?;
    let mut frag = CircuitFragment::new(m + 1);
    let flips: Vec<usize> = (0..m).filter(|&i| w.as_slice()[i] < 0).collect();
    for &i in &flips {
        frag.push(Gate::X, vec![i])?;
    }
    for i in 0..m {
        frag.push(Gate::H, vec![i])?;
    }
    frag.push(Gate::Mcx(vec![false; m]), (0..=m).collect())?;
    for i in 0..m {
        frag.push(Gate::H, vec![i])?;
    }
    for &i in &flips {
        frag.push(Gate::X, vec![i])?;
    }
    Ok(frag)
}

/// Π g(q_i) with q_i = p_i or 1 − p_i by weight sign.
pub fn p_forward(p: &[f64], w: &BinaryWeights) -> Result<f64, NeuronError> {
    expect_len("P weights", p.len(), w.len())?;
    Ok(p
        .iter()
        .zip(w.as_slice())
        .map(|(&pi, &wi)| g(flip(pi, wi)))
        .product())
}

/// Selector P-neuron: inputs 0..m, ⌈log2 m⌉ selector qubits, then the
/// output. Inputs are used only as controls.
pub fn build_p_select_neuron(m: usize, w: &BinaryWeights) -> Result<CircuitFragment, NeuronError> {
    expect_len("P weights", m, w.len())?;
    let k = ceil_log2(m);
    let out = m + k;
    let mut frag = CircuitFragment::new(out + 1);
    let flips: Vec<usize> = (0..m).filter(|&i| w.as_slice()[i] < 0).collect();
    for &i in &flips {
        frag.push(Gate::X, vec![i])?;
    }
    for s in 0..k {
        frag.push(Gate::H, vec![m + s])?;
    }
    for i in 0..m {
        let mut pol: Vec<bool> = (0..k).map(|s| (i >> (k - 1 - s)) & 1 == 1).collect();
        pol.push(true);
        let mut qubits: Vec<usize> = (m..m + k).collect();
        qubits.push(i);
        qubits.push(out);
        frag.push(Gate::Mcx(pol), qubits)?;
    }
    for &i in &flips {
        frag.push(Gate::X, vec![i])?;
    }
    Ok(frag)
}

/// Σ q_i / 2^⌈log2 m⌉.
pub fn p_select_forward(p: &[f64], w: &BinaryWeights) -> Result<f64, NeuronError> {
    expect_len("P weights", p.len(), w.len())?;
    let slots = (1usize << ceil_log2(p.len())) as f64;
    Ok(p
        .iter()
        .zip(w.as_slice())
        .map(|(&pi, &wi)| flip(pi, wi))
        .sum::<f64>()
        / slots)
}

// ---- N ----

pub fn build_n_neuron(theta: f64) -> CircuitFragment {
    CircuitFragment {
        ops: vec![(Gate::Rx(theta), vec![0])],
        qubit_span: 1,
        measured: Vec::new(),
    }
}

/// p·cos²(θ/2) + (1 − p)·sin²(θ/2).
pub fn n_forward(p: f64, theta: f64) -> f64 {
    let (s, c) = (theta / 2.0).sin_cos();
    p * c * c + (1.0 - p) * s * s
}
