//! Amplitude and probability encodings, their preparation circuits, and
//! decoding back to marginals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statevec::{CircuitFragment, Gate, SimError, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodingKind {
    Amplitude,
    Probability,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("cannot amplitude-encode an empty or all-zero vector")]
    ZeroVector,
    #[error("probability datum {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Number of qubits needed for `len` amplitudes (at least one).
pub fn qubits_for(len: usize) -> usize {
    len.next_power_of_two().trailing_zeros().max(1) as usize
}

/// Zero-pads to a power of two and L2-normalises; returns the norm as scale.
pub fn normalized_amplitudes(data: &[f64]) -> Result<(Vec<f64>, f64), EncodingError> {
    let norm = data.iter().map(|x| x * x).sum::<f64>().sqrt();
    if data.is_empty() || norm == 0.0 || !norm.is_finite() {
        return Err(EncodingError::ZeroVector);
    }
    let mut v = vec![0.0; 1 << qubits_for(data.len())];
    for (o, x) in v.iter_mut().zip(data) {
        *o = x / norm;
    }
    Ok((v, norm))
}

pub fn amplitude_encode(data: &[f64]) -> Result<(StateVector, f64), EncodingError> {
    let (v, scale) = normalized_amplitudes(data)?;
    Ok((StateVector::from_real(&v)?, scale))
}

/// State-preparation circuit for a real vector: a binary tree of uniformly
/// controlled RY rotations, expanded into polarity-controlled RY gates.
pub fn amplitude_prep(data: &[f64]) -> Result<(CircuitFragment, f64), EncodingError> {
    let (v, scale) = normalized_amplitudes(data)?;
    let n = qubits_for(v.len());
    let mut frag = CircuitFragment::new(n);
    for level in 0..n {
        let block = 1usize << (n - level);
        let half = block / 2;
        for pattern in 0..(1usize << level) {
            let chunk = &v[pattern * block..(pattern + 1) * block];
            let (a, b) = if half == 1 {
                (chunk[0], chunk[1])
            } else {
                (norm(&chunk[..half]), norm(&chunk[half..]))
            };
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let theta = 2.0 * b.atan2(a);
            if theta == 0.0 {
                continue;
            }
            let polarity: Vec<bool> = (0..level)
                .map(|i| (pattern >> (level - 1 - i)) & 1 == 1)
                .collect();
            let mut qubits: Vec<usize> = (0..level).collect();
            qubits.push(level);
            let gate = if level == 0 {
                Gate::Ry(theta)
            } else {
                Gate::Mcry(theta, polarity)
            };
            frag.push(gate, qubits)?;
        }
    }
    Ok((frag, scale))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// RY angle that puts Pr[1] = d on a fresh qubit.
pub fn probability_angle(d: f64) -> f64 {
    2.0 * d.sqrt().asin()
}

pub fn probability_encode(data: &[f64]) -> Result<(CircuitFragment, StateVector), EncodingError> {
    for (index, &value) in data.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(EncodingError::OutOfRange { index, value });
        }
    }
    let mut frag = CircuitFragment::new(data.len());
    for (q, &d) in data.iter().enumerate() {
        frag.push(Gate::Ry(probability_angle(d)), vec![q])?;
    }
    let state = frag.simulate()?;
    Ok((frag, state))
}

pub fn decode_probabilities(state: &StateVector, qubits: &[usize]) -> Result<Vec<f64>, SimError> {
    qubits.iter().map(|&q| state.marginal_prob_one(q)).collect()
}
