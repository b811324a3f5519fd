//! Exact integer-programming verification of binarized neural networks.
//!
//! The crate builds integer programs that decide epsilon-robustness of a
//! ternary-weight network around a quantized anchor input, strengthens
//! them with layerwise fixings, two-variable inequalities, and
//! single-neuron convex-hull cuts, and solves them with an exact rational
//! branch-and-bound engine. Brute-force oracles back every derived
//! quantity for testing.

pub mod bnn;
pub mod cuts;
pub mod driver;
pub mod formulation;
pub mod gen;
pub mod hull;
pub mod ip;
pub mod mip;
pub mod oracle;
pub mod rat;
pub mod report;
pub mod simplex;

pub use bnn::{
    argmax, BnnModel, InputFile, InputSpec, Layer, ModelError, NeuronConstants, Norm, Propagation,
    FORMAT_VERSION,
};
pub use rat::{parse_rat, rat, rat_int, Int, ParseRatError, Rat};
