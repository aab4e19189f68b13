//! Simulator and trainer for quantum neural networks that mix variational
//! (V), unitary (U), probabilistic (P) and normalisation (N) neurons.

pub mod cli;
pub mod data;
pub mod encoding;
pub mod mixer;
pub mod model;
pub mod neurons;
pub mod statevec;
