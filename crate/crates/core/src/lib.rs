//! Gated graph-attention models for protein-ligand activity and affinity
//! prediction.
//!
//! The pipeline runs bottom-up: [`chemio`] reads PDB and SDF input,
//! [`complexbuild`] crops the pocket and assembles labeled
//! [`complexbuild::ComplexGraph`]s, [`featurize`] encodes atoms, [`gat`]
//! holds the models, [`train`] fits them and [`metrics`] scores the
//! predictions.
//!
//! The numeric core ([`tensor`], [`gat`], [`train`]) is generic over
//! [`Scalar`]; file formats and metrics are fixed to `f64`. The aliases
//! below name the usual instantiations.

pub mod chemio;
pub mod complexbuild;
pub mod featurize;
pub mod gat;
pub mod metrics;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Model64 = gat::Model<f64>;
pub type Model32 = gat::Model<f32>;
pub type Trainer64 = train::Trainer<f64>;
pub type Trainer32 = train::Trainer<f32>;
pub type Checkpoint64 = train::checkpoint::Checkpoint<f64>;
