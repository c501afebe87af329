//! Exact computation engine for martingale representation under
//! progressive enlargement of filtrations.
//!
//! The finite engine works on [`finite_space::FiniteFilteredSpace`]s in
//! either exact rational or double arithmetic (see [`scalar`]). The
//! [`mixed`] module covers the Brownian-plus-atomic-default model class
//! with closed-form evaluators.

pub mod enlargement;
pub mod error;
pub mod exec;
pub mod finite_space;
pub mod linalg;
pub mod martingale_calculus;
pub mod mixed;
pub mod model_file;
pub mod representation;
pub mod scalar;
pub mod testkit;

pub use error::{Error, Result};
pub use finite_space::{
    cond_exp, FiniteFilteredSpace, Filtration, MeasureVector, Node, Partition, ProcessKind,
    ProcessTable, RandomTime,
};
pub use scalar::{ratio, Rational, Scalar};
