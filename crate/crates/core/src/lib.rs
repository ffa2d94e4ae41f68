//! Dense DAG-structured recurrent layers with attention over 2D grids.
//!
//! The crate covers the grid DAGs ([`grid`]), the recurrences with exact
//! reverse-mode gradients ([`model`]), SGD training and scene-labelling
//! metrics ([`training`]), synthetic tasks and file formats ([`data`]), and
//! the `ddrnn` command-line front end ([`cli`]).

pub mod cli;
pub mod data;
pub mod error;
pub mod field;
pub mod grid;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use field::{Field, LabelMap, IGNORE_LABEL};
pub use grid::{Direction, GridDims, VertexId};
pub use model::{ModelConfig, ModelParams, Variant};
pub use numerics::{Precision, Real, Rng};
