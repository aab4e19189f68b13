//! Declarative network description and its line-oriented text format.
//!
//! ```text
//! input_dim 16
//! classes 2
//! layer v width=4 r=2
//! layer u width=4
//! layer n width=4 theta=per-channel
//! layer p width=2
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neurons::{NeuronKind, PGadget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed architecture: {0}")]
    Malformed(String),
    #[error("unsupported layer order for the trainable model: {0}")]
    Unsupported(String),
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, ArchError> {
    Err(ArchError::Malformed(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ThetaMode {
    #[default]
    PerChannel,
    Shared,
}

/// How a V layer exposes its qubits to the next layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum VView {
    /// Probability view when the consumer takes probabilities, else amplitudes.
    #[default]
    Auto,
    Amplitude,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: NeuronKind,
    pub width: usize,
    pub repeat: usize,
    pub theta: ThetaMode,
    pub view: VView,
    pub gadget: PGadget,
}

impl LayerSpec {
    pub fn new(kind: NeuronKind, width: usize) -> Self {
        LayerSpec {
            kind,
            width,
            repeat: 1,
            theta: ThetaMode::PerChannel,
            view: VView::Auto,
            gadget: PGadget::Select,
        }
    }

    pub fn v(n: usize, repeat: usize) -> Self {
        LayerSpec {
            repeat,
            ..Self::new(NeuronKind::V, n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    /// The mixed template: V×r1, optional U, then r3 × (N, P).
    /// `widths` lists the U width (if any) followed by each P width.
    pub fn mixnn(
        input_dim: usize,
        r1: usize,
        r2: bool,
        r3: usize,
        widths: &[usize],
        num_classes: usize,
    ) -> Result<Self, ArchError> {
        let n = log2_exact(input_dim)?;
        let need = usize::from(r2) + r3;
        if widths.len() != need {
            return malformed(format!("expected {need} widths, got {}", widths.len()));
        }
        let mut layers = vec![LayerSpec::v(n, r1)];
        let mut prev = n;
        let mut it = widths.iter();
        if r2 {
            let w = *it.next().unwrap();
            layers.push(LayerSpec::new(NeuronKind::U, w));
            prev = w;
        }
        for _ in 0..r3 {
            let w = *it.next().unwrap();
            layers.push(LayerSpec::new(NeuronKind::N, prev));
            layers.push(LayerSpec::new(NeuronKind::P, w));
            prev = w;
        }
        let arch = ArchitectureSpec {
            input_dim,
            num_classes,
            layers,
        };
        arch.check()?;
        Ok(arch)
    }

    pub fn n_qubits(&self) -> usize {
        self.input_dim.trailing_zeros() as usize
    }

    pub fn v_blocks(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == NeuronKind::V)
            .map(|l| l.repeat)
            .sum()
    }

    /// Sets the repetition count of the (single) V layer.
    pub fn with_v_repeat(&self, r: usize) -> Self {
        let mut a = self.clone();
        for l in a.layers.iter_mut().filter(|l| l.kind == NeuronKind::V) {
            l.repeat = r;
        }
        a
    }

    pub fn is_v_only(&self) -> bool {
        self.layers.iter().all(|l| l.kind == NeuronKind::V)
    }

    /// Structural checks independent of junction feasibility.
    pub fn check(&self) -> Result<(), ArchError> {
        let n = log2_exact(self.input_dim)?;
        if self.num_classes == 0 {
            return malformed("classes must be at least 1");
        }
        if self.layers.is_empty() {
            return malformed("no layers");
        }
        let mut prev = n;
        for (i, l) in self.layers.iter().enumerate() {
            if l.width == 0 {
                return malformed(format!("layer {i} has width 0"));
            }
            if l.repeat == 0 {
                return malformed(format!("layer {i} has r=0"));
            }
            if l.kind != NeuronKind::V && l.repeat != 1 {
                return malformed(format!("layer {i}: only V layers take r"));
            }
            match l.kind {
                NeuronKind::V if l.width != n => {
                    return malformed(format!(
                        "layer {i}: V width must be log2(input_dim) = {n}, got {}",
                        l.width
                    ))
                }
                NeuronKind::N if l.width != prev => {
                    return malformed(format!(
                        "layer {i}: N width must equal the previous width {prev}, got {}",
                        l.width
                    ))
                }
                _ => {}
            }
            prev = l.width;
        }
        if self.is_v_only() {
            if self.num_classes > n {
                return malformed(format!(
                    "a V-only network reads {} classes from {n} qubits",
                    self.num_classes
                ));
            }
        } else if prev != self.num_classes {
            return malformed(format!(
                "last layer width {prev} differs from classes {}",
                self.num_classes
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ArchError> {
        let mut input_dim = None;
        let mut classes = None;
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let perr = |msg: String| ArchError::Parse { line, msg };
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let mut tok = content.split_whitespace();
            let head = tok.next().unwrap();
            match head {
                "input_dim" | "classes" => {
                    let v: usize = tok
                        .next()
                        .ok_or_else(|| perr(format!("{head} needs a value")))?
                        .parse()
                        .map_err(|e| perr(format!("{head}: {e}")))?;
                    if tok.next().is_some() {
                        return Err(perr(format!("trailing tokens after {head}")));
                    }
                    if head == "input_dim" {
                        input_dim = Some(v);
                    } else {
                        classes = Some(v);
                    }
                }
                "layer" => {
                    let kind = match tok.next() {
                        Some("v") | Some("V") => NeuronKind::V,
                        Some("u") | Some("U") => NeuronKind::U,
                        Some("p") | Some("P") => NeuronKind::P,
                        Some("n") | Some("N") => NeuronKind::N,
                        Some(k) => return Err(perr(format!("unknown layer kind '{k}'"))),
                        None => return Err(perr("layer needs a kind".into())),
                    };
                    let mut spec = LayerSpec::new(kind, 0);
                    let mut have_width = false;
                    for kv in tok {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| perr(format!("expected key=value, got '{kv}'")))?;
                        let num = || v.parse::<usize>().map_err(|e| perr(format!("{k}: {e}")));
                        match k {
                            "width" => {
                                spec.width = num()?;
                                have_width = true;
                            }
                            "r" => spec.repeat = num()?,
                            "theta" => {
                                spec.theta = match v {
                                    "shared" => ThetaMode::Shared,
                                    "per-channel" => ThetaMode::PerChannel,
                                    _ => return Err(perr(format!("theta: unknown mode '{v}'"))),
                                }
                            }
                            "view" => {
                                spec.view = match v {
                                    "auto" => VView::Auto,
                                    "amplitude" => VView::Amplitude,
                                    "probability" => VView::Probability,
                                    _ => return Err(perr(format!("view: unknown '{v}'"))),
                                }
                            }
                            "gadget" => {
                                spec.gadget = match v {
                                    "select" => PGadget::Select,
                                    "product" => PGadget::Product,
                                    _ => return Err(perr(format!("gadget: unknown '{v}'"))),
                                }
                            }
                            _ => return Err(perr(format!("unknown key '{k}'"))),
                        }
                    }
                    if !have_width {
                        return Err(perr("layer needs width=".into()));
                    }
                    layers.push(spec);
                }
                other => return Err(perr(format!("unknown directive '{other}'"))),
            }
        }
        let arch = ArchitectureSpec {
            input_dim: input_dim.ok_or_else(|| ArchError::Malformed("missing input_dim".into()))?,
            num_classes: classes.ok_or_else(|| ArchError::Malformed("missing classes".into()))?,
            layers,
        };
        arch.check()?;
        Ok(arch)
    }
}

fn log2_exact(n: usize) -> Result<usize, ArchError> {
    if n < 2 || !n.is_power_of_two() {
        return malformed(format!("input_dim {n} is not a power of two ≥ 2"));
    }
    Ok(n.trailing_zeros() as usize)
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input_dim {}", self.input_dim)?;
        writeln!(f, "classes {}", self.num_classes)?;
        for l in &self.layers {
            let kind = match l.kind {
                NeuronKind::V => "v",
                NeuronKind::U => "u",
                NeuronKind::P => "p",
                NeuronKind::N => "n",
            };
            write!(f, "layer {kind} width={}", l.width)?;
            if l.kind == NeuronKind::V {
                write!(f, " r={}", l.repeat)?;
                match l.view {
                    VView::Auto => {}
                    VView::Amplitude => write!(f, " view=amplitude")?,
                    VView::Probability => write!(f, " view=probability")?,
                }
            }
            if l.kind == NeuronKind::N && l.theta == ThetaMode::Shared {
                write!(f, " theta=shared")?;
            }
            if l.kind == NeuronKind::P && l.gadget == PGadget::Product {
                write!(f, " gadget=product")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Short label such as `V×2+U+N+P`.
pub fn label(arch: &ArchitectureSpec) -> String {
    arch.layers
        .iter()
        .map(|l| match l.kind {
            NeuronKind::V if l.repeat > 1 => format!("V×{}", l.repeat),
            k => format!("{k:?}"),
        })
        .collect::<Vec<_>>()
        .join("+")
}
