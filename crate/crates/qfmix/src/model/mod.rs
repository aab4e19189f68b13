//! Factorized forward model, exact gradients, training and circuit-level
//! inference for mixed networks.

pub mod arch;
pub mod circuit;
pub mod train;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{normalized_amplitudes, EncodingError};
use crate::neurons::{
    apply_v_block_real, cx_real, dry_real, g, real_marginals, ry_real, sign, v_block_ops, NeuronKind,
    PGadget, VOp,
};
use crate::statevec::SimError;
use arch::{ArchError, ArchitectureSpec, ThetaMode};

pub use circuit::{build_circuit, circuit_inference};
pub use train::{accuracy, train, EpochMetrics, Samples, TrainConfig, TrainReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("input has length {got}, the network expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("parameters do not match the architecture: {0}")]
    ParamShape(String),
    #[error("label {label} is out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("the loss needs at least two classes")]
    TooFewClasses,
    #[error("trace was produced with different parameters")]
    StaleTrace,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("circuit needs {required} qubits; the simulator cap is {cap}")]
    QubitCap { required: usize, cap: usize },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One probability-stage transform after the amplitude stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    N { width: usize, shared: bool },
    P { inputs: usize, outputs: usize, gadget: PGadget },
}

/// The trainable layout derived from an architecture:
/// V blocks, then U or a probability view, then N/P stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: ArchitectureSpec,
    pub n: usize,
    pub blocks: usize,
    pub u_width: Option<usize>,
    pub stages: Vec<Stage>,
}

impl Network {
    pub fn new(arch: &ArchitectureSpec) -> Result<Self, ModelError> {
        arch.check()?;
        let n = arch.n_qubits();
        let mut i = 0;
        let mut blocks = 0;
        while i < arch.layers.len() && arch.layers[i].kind == NeuronKind::V {
            blocks += arch.layers[i].repeat;
            i += 1;
        }
        if blocks == 0 {
            return Err(ArchError::Unsupported("the first layer must be V".into()).into());
        }
        let mut u_width = None;
        let mut width = n;
        if i < arch.layers.len() && arch.layers[i].kind == NeuronKind::U {
            u_width = Some(arch.layers[i].width);
            width = arch.layers[i].width;
            i += 1;
        }
        let mut stages = Vec::new();
        for l in &arch.layers[i..] {
            match l.kind {
                NeuronKind::N => stages.push(Stage::N {
                    width,
                    shared: l.theta == ThetaMode::Shared,
                }),
                NeuronKind::P => {
                    stages.push(Stage::P {
                        inputs: width,
                        outputs: l.width,
                        gadget: l.gadget,
                    });
                    width = l.width;
                }
                k => {
                    return Err(ArchError::Unsupported(format!(
                        "{k:?} after the amplitude stage"
                    ))
                    .into())
                }
            }
        }
        Ok(Network {
            arch: arch.clone(),
            n,
            blocks,
            u_width,
            stages,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    /// Parameters drawn from N(0, 0.1²); N angles start at zero.
    pub fn init_params(&self, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| normal.sample(&mut rng)).collect() };
        let v_thetas = (0..self.blocks).map(|_| draw(2 * self.n)).collect();
        let u_latent = (0..self.u_width.unwrap_or(0))
            .map(|_| draw(self.dim()))
            .collect();
        let mut n_thetas = Vec::new();
        let mut p_latent = Vec::new();
        for s in &self.stages {
            match *s {
                Stage::N { width, shared } => n_thetas.push(vec![0.0; if shared { 1 } else { width }]),
                Stage::P {
                    inputs, outputs, ..
                } => p_latent.push((0..outputs).map(|_| draw(inputs)).collect()),
            }
        }
        ParameterStore {
            v_thetas,
            u_latent,
            n_thetas,
            p_latent,
        }
    }

    pub fn check_params(&self, p: &ParameterStore) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::ParamShape(m));
        if p.v_thetas.len() != self.blocks || p.v_thetas.iter().any(|t| t.len() != 2 * self.n) {
            return bad("V angles".into());
        }
        let uw = self.u_width.unwrap_or(0);
        if p.u_latent.len() != uw || p.u_latent.iter().any(|w| w.len() != self.dim()) {
            return bad("U weights".into());
        }
        let (mut ni, mut pi) = (0, 0);
        for s in &self.stages {
            match *s {
                Stage::N { width, shared } => {
                    let want = if shared { 1 } else { width };
                    if p.n_thetas.get(ni).map(|t| t.len()) != Some(want) {
                        return bad(format!("N layer {ni}"));
                    }
                    ni += 1;
                }
                Stage::P {
                    inputs, outputs, ..
                } => {
                    let ok = p
                        .p_latent
                        .get(pi)
                        .is_some_and(|w| w.len() == outputs && w.iter().all(|r| r.len() == inputs));
                    if !ok {
                        return bad(format!("P layer {pi}"));
                    }
                    pi += 1;
                }
            }
        }
        if ni != p.n_thetas.len() || pi != p.p_latent.len() {
            return bad("extra layers".into());
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParameterStore, input: &[f64]) -> Result<ForwardTrace, ModelError> {
        self.check_params(params)?;
        if input.len() != self.dim() {
            return Err(ModelError::InputShape {
                expected: self.dim(),
                got: input.len(),
            });
        }
        let (x, _) = normalized_amplitudes(input)?;
        let mut amplitude_stages = vec![x];
        for theta in &params.v_thetas {
            let mut s = amplitude_stages.last().unwrap().clone();
            apply_v_block_real(&mut s, self.n, theta);
            amplitude_stages.push(s);
        }
        let psi = amplitude_stages.last().unwrap();
        let first = match self.u_width {
            Some(_) => {
                let inv_n = 1.0 / self.dim() as f64;
                params
                    .u_latent
                    .iter()
                    .map(|lat| {
                        let d: f64 = lat.iter().zip(psi).map(|(&l, &a)| sign(l) * a).sum();
                        d * d * inv_n
                    })
                    .collect()
            }
            None => real_marginals(psi),
        };
        let mut probability_stages = vec![first];
        let (mut ni, mut pi) = (0, 0);
        for s in &self.stages {
            let h = probability_stages.last().unwrap();
            let next = match *s {
                Stage::N { shared, .. } => {
                    let th = &params.n_thetas[ni];
                    ni += 1;
                    h.iter()
                        .enumerate()
                        .map(|(c, &p)| {
                            let cos = th[if shared { 0 } else { c }].cos();
                            p * cos + 0.5 * (1.0 - cos)
                        })
                        .collect()
                }
                Stage::P { gadget, .. } => {
                    let w = &params.p_latent[pi];
                    pi += 1;
                    w.iter().map(|row| p_unit(h, row, gadget)).collect()
                }
            };
            probability_stages.push(next);
        }
        let last = probability_stages.last().unwrap();
        let output = if self.u_width.is_none() && self.stages.is_empty() {
            last[..self.num_classes()].to_vec()
        } else {
            last.clone()
        };
        Ok(ForwardTrace {
            amplitude_stages,
            probability_stages,
            output,
            fingerprint: params.fingerprint(),
        })
    }

    /// Reverse-mode gradients of the loss, with straight-through gradients
    /// on the latent binary weights.
    pub fn backward(
        &self,
        params: &ParameterStore,
        trace: &ForwardTrace,
        label: usize,
        temperature: f64,
    ) -> Result<ParameterStore, ModelError> {
        let dout = loss_grad(&trace.output, label, temperature)?;
        self.backward_from(params, trace, &dout)
    }

    /// Backpropagates an arbitrary output cotangent.
    pub fn backward_from(
        &self,
        params: &ParameterStore,
        trace: &ForwardTrace,
        dout: &[f64],
    ) -> Result<ParameterStore, ModelError> {
        if trace.fingerprint != params.fingerprint() {
            return Err(ModelError::StaleTrace);
        }
        let mut grad = params.zeros_like();
        let mut dh = vec![0.0; trace.probability_stages.last().unwrap().len()];
        dh[..dout.len()].copy_from_slice(dout);

        let (mut ni, mut pi) = (params.n_thetas.len(), params.p_latent.len());
        for (si, s) in self.stages.iter().enumerate().rev() {
            let h = &trace.probability_stages[si];
            match *s {
                Stage::N { shared, .. } => {
                    ni -= 1;
                    let th = &params.n_thetas[ni];
                    let mut dprev = vec![0.0; h.len()];
                    for c in 0..h.len() {
                        let k = if shared { 0 } else { c };
                        let (sin, cos) = th[k].sin_cos();
                        dprev[c] = dh[c] * cos;
                        grad.n_thetas[ni][k] += dh[c] * sin * (0.5 - h[c]);
                    }
                    dh = dprev;
                }
                Stage::P { gadget, .. } => {
                    pi -= 1;
                    let w = &params.p_latent[pi];
                    let out = &trace.probability_stages[si + 1];
                    let mut dprev = vec![0.0; h.len()];
                    let slots = (1usize << crate::neurons::ceil_log2(h.len())) as f64;
                    for (j, row) in w.iter().enumerate() {
                        for (i, &lat) in row.iter().enumerate() {
                            let wi = sign(lat);
                            let q = if wi > 0.0 { h[i] } else { 1.0 - h[i] };
                            // ∂out/∂q for this input
                            let dq = match gadget {
                                PGadget::Select => 1.0 / slots,
                                PGadget::Product => out[j] / g(q) * g_prime(q),
                            };
                            dprev[i] += dh[j] * dq * wi;
                            grad.p_latent[pi][j][i] += dh[j] * dq * (h[i] - 0.5);
                        }
                    }
                    dh = dprev;
                }
            }
        }

        let psi = trace.amplitude_stages.last().unwrap();
        let mut lambda = vec![0.0; psi.len()];
        match self.u_width {
            Some(_) => {
                let inv_n = 1.0 / self.dim() as f64;
                for (j, lat) in params.u_latent.iter().enumerate() {
                    let d: f64 = lat.iter().zip(psi).map(|(&l, &a)| sign(l) * a).sum();
                    let coef = dh[j] * 2.0 * d * inv_n;
                    for k in 0..psi.len() {
                        lambda[k] += coef * sign(lat[k]);
                        grad.u_latent[j][k] += coef * psi[k];
                    }
                }
            }
            None => {
                let n = self.n;
                for (i, a) in psi.iter().enumerate() {
                    let mut acc = 0.0;
                    for (q, d) in dh.iter().enumerate() {
                        if (i >> (n - 1 - q)) & 1 == 1 {
                            acc += d;
                        }
                    }
                    lambda[i] = 2.0 * a * acc;
                }
            }
        }

        let ops = v_block_ops(self.n);
        for b in (0..self.blocks).rev() {
            let theta = &params.v_thetas[b];
            let mut states = Vec::with_capacity(ops.len());
            let mut s = trace.amplitude_stages[b].clone();
            for op in &ops {
                states.push(s.clone());
                match *op {
                    VOp::Ry { qubit, param } => ry_real(&mut s, self.n, qubit, theta[param]),
                    VOp::Cx { control, target } => cx_real(&mut s, self.n, control, target),
                }
            }
            for (k, op) in ops.iter().enumerate().rev() {
                match *op {
                    VOp::Ry { qubit, param } => {
                        let mut ds = states[k].clone();
                        dry_real(&mut ds, self.n, qubit, theta[param]);
                        grad.v_thetas[b][param] += lambda.iter().zip(&ds).map(|(l, d)| l * d).sum::<f64>();
                        ry_real(&mut lambda, self.n, qubit, -theta[param]);
                    }
                    VOp::Cx { control, target } => cx_real(&mut lambda, self.n, control, target),
                }
            }
        }
        Ok(grad)
    }

    pub fn loss(&self, trace: &ForwardTrace, label: usize, temperature: f64) -> Result<f64, ModelError> {
        loss(&trace.output, label, temperature)
    }
}

fn p_unit(h: &[f64], row: &[f64], gadget: PGadget) -> f64 {
    let q = h
        .iter()
        .zip(row)
        .map(|(&p, &l)| if l >= 0.0 { p } else { 1.0 - p });
    match gadget {
        PGadget::Select => q.sum::<f64>() / (1usize << crate::neurons::ceil_log2(h.len())) as f64,
        PGadget::Product => q.map(g).product(),
    }
}

fn g_prime(q: f64) -> f64 {
    let r = (q * (1.0 - q)).max(1e-12).sqrt();
    (1.0 - 2.0 * q) / (2.0 * r)
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Normalised input followed by the state after each V block.
    pub amplitude_stages: Vec<Vec<f64>>,
    /// U outputs (or the V probability view), then each N/P stage.
    pub probability_stages: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    fingerprint: u64,
}

/// Real angles plus latent reals whose signs are the binary weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub v_thetas: Vec<Vec<f64>>,
    pub u_latent: Vec<Vec<f64>>,
    pub n_thetas: Vec<Vec<f64>>,
    pub p_latent: Vec<Vec<Vec<f64>>>,
}

impl ParameterStore {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.from_flat(&vec![0.0; self.len()]);
        z
    }

    pub fn len(&self) -> usize {
        self.to_flat().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.v_thetas.iter().flatten().copied().collect();
        v.extend(self.u_latent.iter().flatten());
        v.extend(self.n_thetas.iter().flatten());
        v.extend(self.p_latent.iter().flatten().flatten());
        v
    }

    pub fn from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        let slots = self
            .v_thetas
            .iter_mut()
            .flatten()
            .chain(self.u_latent.iter_mut().flatten())
            .chain(self.n_thetas.iter_mut().flatten())
            .chain(self.p_latent.iter_mut().flatten().flatten());
        for slot in slots {
            *slot = *it.next().expect("flat vector too short");
        }
    }

    /// Index range of the real (non-binary) parameters in [`Self::to_flat`].
    pub fn real_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let v = self.v_thetas.iter().map(Vec::len).sum::<usize>();
        let u = self.u_latent.iter().map(Vec::len).sum::<usize>();
        let nn = self.n_thetas.iter().map(Vec::len).sum::<usize>();
        vec![0..v, v + u..v + u + nn]
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for x in self.to_flat() {
            x.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Cross-entropy of softmax(temperature · output).
pub fn loss(output: &[f64], label: usize, temperature: f64) -> Result<f64, ModelError> {
    check_label(output, label)?;
    let z: Vec<f64> = output.iter().map(|o| o * temperature).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - z[label])
}

fn check_label(output: &[f64], label: usize) -> Result<(), ModelError> {
    if output.len() < 2 {
        return Err(ModelError::TooFewClasses);
    }
    if label >= output.len() {
        return Err(ModelError::Label {
            label,
            classes: output.len(),
        });
    }
    Ok(())
}

pub fn loss_grad(output: &[f64], label: usize, temperature: f64) -> Result<Vec<f64>, ModelError> {
    check_label(output, label)?;
    let z: Vec<f64> = output.iter().map(|o| o * temperature).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.iter()
        .enumerate()
        .map(|(c, v)| temperature * (v / s - if c == label { 1.0 } else { 0.0 }))
        .collect())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn forward(arch: &ArchitectureSpec, params: &ParameterStore, input: &[f64]) -> Result<ForwardTrace, ModelError> {
    Network::new(arch)?.forward(params, input)
}

pub fn backward(
    arch: &ArchitectureSpec,
    params: &ParameterStore,
    trace: &ForwardTrace,
    label: usize,
    temperature: f64,
) -> Result<ParameterStore, ModelError> {
    Network::new(arch)?.backward(params, trace, label, temperature)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: String,
    pub params: ParameterStore,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn new(arch: &ArchitectureSpec, params: &ParameterStore) -> Self {
        Checkpoint {
            version: Self::VERSION,
            arch: arch.to_string(),
            params: params.clone(),
        }
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec, ArchError> {
        ArchitectureSpec::parse(&self.arch)
    }
}
