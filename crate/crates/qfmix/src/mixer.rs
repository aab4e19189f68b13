//! Junction classification (paths 1–8) and feasibility rules (principles 1–5).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoding::EncodingKind;
use crate::model::arch::{ArchError, ArchitectureSpec, LayerSpec, VView};
use crate::neurons::{NeuronKind, PGadget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConsumerOp {
    ControlOnlyNoPhaseKickback,
    RxOnly,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionProfile {
    pub out_encoding: EncodingKind,
    pub out_entangled: bool,
    pub reuses_input_qubits: bool,
    pub in_encoding: EncodingKind,
    pub consumer_ops: BTreeSet<ConsumerOp>,
    pub consumer_requires_independent_inputs: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Feasible,
    ConditionallyFeasible(Vec<String>),
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionVerdict {
    pub path_id: u8,
    pub status: Status,
    pub principle: u8,
}

impl ConnectionVerdict {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }
}

pub fn classify_path(p: &JunctionProfile) -> u8 {
    use EncodingKind::*;
    match (p.out_entangled, p.out_encoding, p.in_encoding) {
        (false, Amplitude, Amplitude) => 1,
        (false, Amplitude, Probability) => 2,
        (false, Probability, Amplitude) => 3,
        (false, Probability, Probability) => 4,
        (true, Amplitude, Amplitude) => 5,
        (true, Amplitude, Probability) => 6,
        (true, Probability, Amplitude) => 7,
        (true, Probability, Probability) => 8,
    }
}

pub fn check_connection(p: &JunctionProfile) -> ConnectionVerdict {
    let path_id = classify_path(p);
    let (principle, status) = match path_id {
        1..=4 => (1, Status::Feasible),
        5 => (2, Status::Feasible),
        6 if p.consumer_requires_independent_inputs => (
            3,
            Status::Infeasible(
                "entangled amplitude outputs cannot feed a probability input that assumes independence"
                    .into(),
            ),
        ),
        6 => (
            3,
            Status::ConditionallyFeasible(vec![
                "consumer tolerates correlated probability inputs".into()
            ]),
        ),
        7 if p.reuses_input_qubits => (4, Status::Feasible),
        7 => (
            4,
            Status::Infeasible(
                "entangled probability outputs on fresh qubits cannot be read as amplitudes".into(),
            ),
        ),
        _ => {
            let allowed = [ConsumerOp::ControlOnlyNoPhaseKickback, ConsumerOp::RxOnly];
            if p.consumer_ops.iter().all(|op| allowed.contains(op)) {
                (5, Status::Feasible)
            } else {
                (
                    5,
                    Status::Infeasible(
                        "consumer acts on entangled probability qubits with more than controls or RX"
                            .into(),
                    ),
                )
            }
        }
    };
    ConnectionVerdict {
        path_id,
        status,
        principle,
    }
}

fn consumer_ops(layer: &LayerSpec) -> BTreeSet<ConsumerOp> {
    let op = match layer.kind {
        NeuronKind::N => ConsumerOp::RxOnly,
        NeuronKind::P if layer.gadget == PGadget::Select => ConsumerOp::ControlOnlyNoPhaseKickback,
        _ => ConsumerOp::Other,
    };
    BTreeSet::from([op])
}

fn output_encoding(producer: &LayerSpec, consumer: &LayerSpec) -> EncodingKind {
    match (producer.kind, producer.view) {
        (NeuronKind::V, VView::Amplitude) => EncodingKind::Amplitude,
        (NeuronKind::V, VView::Probability) => EncodingKind::Probability,
        (NeuronKind::V, VView::Auto) => consumer.kind.io().input,
        (k, _) => k.io().output,
    }
}

/// Static junction profile between two adjacent layers; `entangled` is
/// whether the producer's output qubits are entangled.
pub fn junction_profile(producer: &LayerSpec, consumer: &LayerSpec, entangled: bool) -> JunctionProfile {
    JunctionProfile {
        out_encoding: output_encoding(producer, consumer),
        out_entangled: entangled,
        reuses_input_qubits: producer.kind.io().reuses_input_qubits,
        in_encoding: consumer.kind.io().input,
        consumer_ops: consumer_ops(consumer),
        consumer_requires_independent_inputs: consumer.kind == NeuronKind::P
            && consumer.gadget == PGadget::Product,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionReport {
    pub from: usize,
    pub to: usize,
    pub from_kind: NeuronKind,
    pub to_kind: NeuronKind,
    pub profile: JunctionProfile,
    pub verdict: ConnectionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub junctions: Vec<JunctionReport>,
    pub pass: bool,
    pub mid_circuit_measurements: usize,
    pub final_measurements: usize,
    /// Layers fed an encoding other than their kind's canonical input.
    pub encoding_flags: Vec<String>,
}

pub fn validate_architecture(arch: &ArchitectureSpec) -> Result<ValidationReport, ArchError> {
    arch.check()?;
    let n = arch.n_qubits();
    let mut junctions = Vec::new();
    let mut encoding_flags = Vec::new();
    // Freshly encoded input is a product of nothing yet: unentangled.
    let mut entangled = false;
    for (i, l) in arch.layers.iter().enumerate() {
        if i > 0 {
            let prev = &arch.layers[i - 1];
            let profile = junction_profile(prev, l, entangled);
            if profile.out_encoding != profile.in_encoding {
                encoding_flags.push(format!(
                    "layer {i} ({:?}) expects {:?} input but receives {:?}",
                    l.kind, profile.in_encoding, profile.out_encoding
                ));
            }
            let verdict = check_connection(&profile);
            junctions.push(JunctionReport {
                from: i - 1,
                to: i,
                from_kind: prev.kind,
                to_kind: l.kind,
                profile,
                verdict,
            });
        }
        entangled = match l.kind {
            NeuronKind::V => entangled || n > 1,
            NeuronKind::U | NeuronKind::P => true,
            NeuronKind::N => entangled,
        };
    }
    let pass = junctions.iter().all(|j| j.verdict.is_feasible());
    let last = arch.layers.last().unwrap();
    let final_measurements = if arch.is_v_only() {
        arch.num_classes
    } else {
        last.width
    };
    Ok(ValidationReport {
        junctions,
        pass,
        mid_circuit_measurements: 0,
        final_measurements,
        encoding_flags,
    })
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in &self.junctions {
            let status = match &j.verdict.status {
                Status::Feasible => "feasible".to_string(),
                Status::ConditionallyFeasible(c) => format!("conditional ({})", c.join("; ")),
                Status::Infeasible(r) => format!("infeasible ({r})"),
            };
            writeln!(
                f,
                "layer {} {:?} -> layer {} {:?}: path {}, principle {}, {}",
                j.from, j.from_kind, j.to, j.to_kind, j.verdict.path_id, j.verdict.principle, status
            )?;
        }
        for flag in &self.encoding_flags {
            writeln!(f, "encoding: {flag}")?;
        }
        writeln!(
            f,
            "measurements: {} mid-circuit, {} final",
            self.mid_circuit_measurements, self.final_measurements
        )?;
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}
