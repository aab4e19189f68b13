//! Dense state-vector simulator.
//!
//! Qubit 0 is the most significant bit of the basis index, so on two qubits
//! `amps[1]` is the amplitude of |01⟩.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_QUBITS: usize = 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{n} qubits need {bytes} bytes of amplitudes; the cap is {cap} qubits")]
    Resource { n: usize, cap: usize, bytes: u128 },
    #[error("a register needs at least one qubit")]
    Empty,
    #[error("{gate} acts on {expected} qubits but {got} were given")]
    Arity {
        gate: String,
        expected: usize,
        got: usize,
    },
    #[error("qubit {0} appears twice in one gate application")]
    Duplicate(usize),
    #[error("qubit {index} is out of range for a {n}-qubit register")]
    OutOfRange { index: usize, n: usize },
    #[error("amplitude vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),
}

pub type Matrix2 = [[Complex64; 2]; 2];

/// Gate kinds. Controlled gates list their controls first and the target last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    H,
    X,
    Z,
    Rx(f64),
    Ry(f64),
    Cx,
    Cz,
    /// Multi-controlled X; `true` triggers on |1⟩, `false` on |0⟩.
    Mcx(Vec<bool>),
    /// Z on the target controlled (positively) by this many qubits.
    Mcz(usize),
    /// RY(θ) on the target with polarity-aware controls.
    Mcry(f64, Vec<bool>),
}

impl Gate {
    pub fn name(&self) -> String {
        match self {
            Gate::H => "H".into(),
            Gate::X => "X".into(),
            Gate::Z => "Z".into(),
            Gate::Rx(t) => format!("RX({t})"),
            Gate::Ry(t) => format!("RY({t})"),
            Gate::Cx => "CX".into(),
            Gate::Cz => "CZ".into(),
            Gate::Mcx(p) => format!("MCX[{}]", p.len()),
            Gate::Mcz(k) => format!("MCZ[{k}]"),
            Gate::Mcry(t, p) => format!("MCRY({t})[{}]", p.len()),
        }
    }

    pub fn arity(&self) -> usize {
        self.controls().len() + 1
    }

    pub fn controls(&self) -> Vec<bool> {
        match self {
            Gate::H | Gate::X | Gate::Z | Gate::Rx(_) | Gate::Ry(_) => Vec::new(),
            Gate::Cx | Gate::Cz => vec![true],
            Gate::Mcx(p) | Gate::Mcry(_, p) => p.clone(),
            Gate::Mcz(k) => vec![true; *k],
        }
    }

    /// The 2×2 unitary applied to the target when the controls fire.
    pub fn target_matrix(&self) -> Matrix2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Gate::H => [[c(h), c(h)], [c(h), c(-h)]],
            Gate::X | Gate::Cx | Gate::Mcx(_) => [[ZERO, ONE], [ONE, ZERO]],
            Gate::Z | Gate::Cz | Gate::Mcz(_) => [[ONE, ZERO], [ZERO, -ONE]],
            Gate::Rx(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                let mis = Complex64::new(0.0, -s);
                [[c(co), mis], [mis, c(co)]]
            }
            Gate::Ry(t) | Gate::Mcry(t, _) => {
                let (s, co) = (t / 2.0).sin_cos();
                [[c(co), c(-s)], [c(s), c(co)]]
            }
        }
    }

    pub fn inverse(&self) -> Gate {
        match self {
            Gate::Rx(t) => Gate::Rx(-t),
            Gate::Ry(t) => Gate::Ry(-t),
            Gate::Mcry(t, p) => Gate::Mcry(-t, p.clone()),
            g => g.clone(),
        }
    }

    /// Full 2^k × 2^k matrix over the gate's own qubits, first listed qubit
    /// as the most significant bit.
    #[allow(clippy::needless_range_loop)]
    pub fn matrix(&self) -> Vec<Vec<Complex64>> {
        let ctrl = self.controls();
        let k = ctrl.len() + 1;
        let dim = 1usize << k;
        let u = self.target_matrix();
        let mut m = vec![vec![ZERO; dim]; dim];
        for col in 0..dim {
            let fires = ctrl
                .iter()
                .enumerate()
                .all(|(i, &p)| ((col >> (k - 1 - i)) & 1 == 1) == p);
            if !fires {
                m[col][col] = ONE;
                continue;
            }
            let tb = col & 1;
            let base = col & !1;
            m[base][col] = u[0][tb];
            m[base | 1][col] = u[1][tb];
        }
        m
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_cap(n: usize, cap: usize) -> Result<(), SimError> {
    if n == 0 {
        return Err(SimError::Empty);
    }
    if n > cap {
        let bytes = (1u128 << n.min(120)) * 16;
        return Err(SimError::Resource { n, cap, bytes });
    }
    Ok(())
}

impl StateVector {
    /// |0…0⟩ on `n_qubits` qubits, capped at [`DEFAULT_MAX_QUBITS`].
    pub fn new(n_qubits: usize) -> Result<Self, SimError> {
        Self::with_cap(n_qubits, DEFAULT_MAX_QUBITS)
    }

    pub fn with_cap(n_qubits: usize, cap: usize) -> Result<Self, SimError> {
        check_cap(n_qubits, cap)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps raw amplitudes without renormalising them.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_cap(n_qubits, DEFAULT_MAX_QUBITS)?;
        Ok(StateVector { n_qubits, amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self, SimError> {
        Self::from_amplitudes(amps.iter().map(|&a| c(a)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit(&self, q: usize) -> usize {
        1 << (self.n_qubits - 1 - q)
    }

    fn check_index(&self, q: usize) -> Result<(), SimError> {
        if q >= self.n_qubits {
            return Err(SimError::OutOfRange {
                index: q,
                n: self.n_qubits,
            });
        }
        Ok(())
    }

    /// Applies `gate` in place; `qubits` lists controls first, target last.
    pub fn apply(&mut self, gate: &Gate, qubits: &[usize]) -> Result<(), SimError> {
        if qubits.len() != gate.arity() {
            return Err(SimError::Arity {
                gate: gate.name(),
                expected: gate.arity(),
                got: qubits.len(),
            });
        }
        for (i, &q) in qubits.iter().enumerate() {
            self.check_index(q)?;
            if qubits[..i].contains(&q) {
                return Err(SimError::Duplicate(q));
            }
        }
        let (controls, target) = qubits.split_at(qubits.len() - 1);
        let mut cmask = 0usize;
        let mut cval = 0usize;
        for (&q, p) in controls.iter().zip(gate.controls()) {
            let b = self.bit(q);
            cmask |= b;
            if p {
                cval |= b;
            }
        }
        self.kernel(gate.target_matrix(), cmask, cval, self.bit(target[0]));
        Ok(())
    }

    fn kernel(&mut self, u: Matrix2, cmask: usize, cval: usize, tbit: usize) {
        let len = self.amps.len();
        // Walk only indices with the target bit clear.
        let mut i = 0;
        while i < len {
            if i & tbit != 0 {
                i += tbit;
                continue;
            }
            if i & cmask == cval {
                let j = i | tbit;
                let a0 = self.amps[i];
                let a1 = self.amps[j];
                self.amps[i] = u[0][0] * a0 + u[0][1] * a1;
                self.amps[j] = u[1][0] * a0 + u[1][1] * a1;
            }
            i += 1;
        }
    }

    pub fn marginal_prob_one(&self, qubit: usize) -> Result<f64, SimError> {
        self.check_index(qubit)?;
        let b = self.bit(qubit);
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & b != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Reduced density matrix of one qubit.
    pub fn reduced_density(&self, qubit: usize) -> Result<Matrix2, SimError> {
        self.check_index(qubit)?;
        let b = self.bit(qubit);
        let mut rho = [[ZERO; 2]; 2];
        for i in (0..self.amps.len()).filter(|i| i & b == 0) {
            let a0 = self.amps[i];
            let a1 = self.amps[i | b];
            rho[0][0] += a0 * a0.conj();
            rho[1][1] += a1 * a1.conj();
            rho[0][1] += a0 * a1.conj();
        }
        rho[1][0] = rho[0][1].conj();
        Ok(rho)
    }

    /// True when the qubit's reduced state has purity at least `1 - tol`.
    pub fn is_product_qubit(&self, qubit: usize, tol: f64) -> Result<bool, SimError> {
        let rho = self.reduced_density(qubit)?;
        let purity = rho[0][0].norm_sqr() + rho[1][1].norm_sqr() + 2.0 * rho[0][1].norm_sqr();
        Ok(purity >= 1.0 - tol)
    }
}

/// An ordered gate list over `qubit_span` qubits. Measurements are terminal
/// by construction: they are recorded separately and read after every gate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CircuitFragment {
    pub ops: Vec<(Gate, Vec<usize>)>,
    pub qubit_span: usize,
    pub measured: Vec<usize>,
}

impl CircuitFragment {
    pub fn new(qubit_span: usize) -> Self {
        CircuitFragment {
            ops: Vec::new(),
            qubit_span,
            measured: Vec::new(),
        }
    }

    /// Appends a gate, growing the span if needed.
    pub fn push(&mut self, gate: Gate, qubits: Vec<usize>) -> Result<(), SimError> {
        if qubits.len() != gate.arity() {
            return Err(SimError::Arity {
                gate: gate.name(),
                expected: gate.arity(),
                got: qubits.len(),
            });
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[..i].contains(q) {
                return Err(SimError::Duplicate(*q));
            }
        }
        if let Some(&m) = qubits.iter().max() {
            self.qubit_span = self.qubit_span.max(m + 1);
        }
        self.ops.push((gate, qubits));
        Ok(())
    }

    /// Concatenates ops; the span is the larger of the two.
    pub fn compose(&self, other: &CircuitFragment) -> CircuitFragment {
        let mut out = self.clone();
        out.ops.extend(other.ops.iter().cloned());
        out.qubit_span = self.qubit_span.max(other.qubit_span);
        out.measured.extend(other.measured.iter().copied());
        out
    }

    /// Appends `other` with its qubit `i` placed on `map[i]`.
    pub fn append_mapped(&mut self, other: &CircuitFragment, map: &[usize]) {
        for (g, qs) in &other.ops {
            let mapped: Vec<usize> = qs.iter().map(|&q| map[q]).collect();
            if let Some(&m) = mapped.iter().max() {
                self.qubit_span = self.qubit_span.max(m + 1);
            }
            self.ops.push((g.clone(), mapped));
        }
    }

    pub fn inverse(&self) -> CircuitFragment {
        CircuitFragment {
            ops: self
                .ops
                .iter()
                .rev()
                .map(|(g, q)| (g.inverse(), q.clone()))
                .collect(),
            qubit_span: self.qubit_span,
            measured: Vec::new(),
        }
    }

    pub fn apply_to(&self, state: &mut StateVector) -> Result<(), SimError> {
        for (g, q) in &self.ops {
            state.apply(g, q)?;
        }
        Ok(())
    }

    /// Runs the fragment on |0…0⟩ of its own span.
    pub fn simulate(&self) -> Result<StateVector, SimError> {
        let mut s = StateVector::new(self.qubit_span)?;
        self.apply_to(&mut s)?;
        Ok(s)
    }
}
