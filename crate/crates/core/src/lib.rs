pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fields;
pub mod fom;
pub mod io;
pub mod nets;
pub mod pipeline;
pub mod tensor;
pub mod training;

pub use config::ExperimentConfig;
pub use dataset::{NormalizationStats, Split, SplitData, Variable};
pub use error::{Error, Result};
pub use fields::{FieldKind, GridSpec, PermeabilityField};
pub use fom::{BoundaryConditions, FomParameters, TimeGrid};
pub use nets::{Generator, Variant, RESOLUTION};
pub use pipeline::{RunManifest, Stage};
pub use training::{Checkpoint, TrainConfig};
