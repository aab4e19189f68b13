//! Whole-network circuits measured only at the end.
//!
//! With a U layer every U neuron gets its own register holding a fresh copy
//! of the encoded input and the V blocks, followed by its ancilla. N neurons
//! act on channel qubits in place; P neurons add their own qubits.

use crate::encoding::amplitude_prep;
use crate::neurons::{build_p_neuron, build_p_select_neuron, build_u_neuron, build_v_block, BinaryWeights, PGadget};
use crate::statevec::{CircuitFragment, Gate, DEFAULT_MAX_QUBITS};

use super::arch::ArchitectureSpec;
use super::{ModelError, Network, ParameterStore, Stage};

impl Network {
    /// Qubits used by [`build_circuit`], from the architecture alone.
    pub fn circuit_qubits(&self) -> usize {
        let mut total = match self.u_width {
            Some(w) => w * (self.n + 1),
            None => self.n,
        };
        for s in &self.stages {
            if let Stage::P {
                inputs,
                outputs,
                gadget,
            } = *s
            {
                total += outputs * gadget.extra_qubits(inputs);
            }
        }
        total
    }
}

/// Builds the full circuit for one input; `measured` lists output qubits.
pub fn build_circuit(
    net: &Network,
    params: &ParameterStore,
    input: &[f64],
) -> Result<CircuitFragment, ModelError> {
    net.check_params(params)?;
    if input.len() != net.dim() {
        return Err(ModelError::InputShape {
            expected: net.dim(),
            got: input.len(),
        });
    }
    let n = net.n;
    let (prep, _) = amplitude_prep(input)?;
    let mut register = prep;
    register.qubit_span = n;
    for theta in &params.v_thetas {
        register = register.compose(&build_v_block(n, theta).map_err(neuron_err)?);
    }

    let mut circ = CircuitFragment::new(0);
    let mut channels: Vec<usize> = Vec::new();
    match net.u_width {
        Some(w) => {
            for j in 0..w {
                let base = j * (n + 1);
                let map: Vec<usize> = (base..=base + n).collect();
                circ.append_mapped(&register, &map);
                let wj = BinaryWeights::from_latent(&params.u_latent[j]);
                circ.append_mapped(&build_u_neuron(n, &wj).map_err(neuron_err)?, &map);
                channels.push(base + n);
            }
        }
        None => {
            let map: Vec<usize> = (0..n).collect();
            circ.append_mapped(&register, &map);
            channels = map;
        }
    }
    let mut next = circ.qubit_span.max(channels.iter().max().map_or(0, |m| m + 1));

    let (mut ni, mut pi) = (0, 0);
    for s in &net.stages {
        match *s {
            Stage::N { shared, .. } => {
                let th = &params.n_thetas[ni];
                ni += 1;
                for (c, &q) in channels.iter().enumerate() {
                    circ.push(Gate::Rx(th[if shared { 0 } else { c }]), vec![q])?;
                }
            }
            Stage::P {
                inputs, gadget, ..
            } => {
                let mut outs = Vec::new();
                for row in &params.p_latent[pi] {
                    let w = BinaryWeights::from_latent(row);
                    let frag = match gadget {
                        PGadget::Select => build_p_select_neuron(inputs, &w),
                        PGadget::Product => build_p_neuron(inputs, &w),
                    }
                    .map_err(neuron_err)?;
                    let extra = gadget.extra_qubits(inputs);
                    let mut map = channels.clone();
                    map.extend(next..next + extra);
                    next += extra;
                    circ.append_mapped(&frag, &map);
                    outs.push(next - 1);
                }
                pi += 1;
                channels = outs;
            }
        }
    }
    circ.qubit_span = circ.qubit_span.max(next);
    if net.u_width.is_none() && net.stages.is_empty() {
        channels.truncate(net.num_classes());
    }
    circ.measured = channels;
    Ok(circ)
}

fn neuron_err(e: crate::neurons::NeuronError) -> ModelError {
    match e {
        crate::neurons::NeuronError::Sim(s) => ModelError::Sim(s),
        other => ModelError::ParamShape(other.to_string()),
    }
}

/// Class probabilities from exact simulation of the whole circuit.
pub fn circuit_inference(
    arch: &ArchitectureSpec,
    params: &ParameterStore,
    input: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let net = Network::new(arch)?;
    let required = net.circuit_qubits();
    if required > DEFAULT_MAX_QUBITS {
        return Err(ModelError::QubitCap {
            required,
            cap: DEFAULT_MAX_QUBITS,
        });
    }
    let circ = build_circuit(&net, params, input)?;
    let state = circ.simulate()?;
    circ.measured
        .iter()
        .map(|&q| state.marginal_prob_one(q).map_err(ModelError::from))
        .collect()
}
