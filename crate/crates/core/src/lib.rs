//! Numerosity ("semantic MNIST") datasets, their validation, small
//! from-scratch classifiers, and the human subitizing session engine.

pub mod canvas;
pub mod combinatorics;
pub mod dataset;
pub mod generator;
pub mod idx;
pub mod sampler;
pub mod session;
pub mod trainer;
