//! Lifted variable elimination over discrete graphical models.
//!
//! A run of variable elimination is recorded as an rv-elim graph, its vertices
//! are partitioned into blocks of provably (or approximately) identical
//! intermediate factors, and only one factor per block is computed.

// Negated comparisons deliberately treat NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod elim_order;
pub mod engine;
pub mod error;
pub mod factor;
pub mod model;
pub mod partition;
pub mod rvelim;
pub mod scalar;

pub use engine::{
    brute_force_marginals, compare, run, EngineParams, ErrorReport, InferenceResult, Marginal, MiniBuckets,
    PathLength, Stats,
};
pub use error::{Error, Result, Stage};
pub use factor::{combine, ElimOp, Factor, OpCount, VariableId};
pub use model::{Evidence, GeneratorConfig, Model, QuerySet};
pub use partition::Partition;
pub use rvelim::RvElimGraph;
pub use scalar::Scalar;

pub type Factor64 = Factor<f64>;
pub type Factor32 = Factor<f32>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type InferenceResult64 = InferenceResult<f64>;
pub type InferenceResult32 = InferenceResult<f32>;
pub type Marginal64 = Marginal<f64>;
pub type Marginal32 = Marginal<f32>;
