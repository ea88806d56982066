//! Thermal-noise imaging of conductivity on a 2-D plate: finite-difference
//! forward model, synthetic internal-functional data, principal-symbol
//! conditioning and Gauss-Newton reconstruction.

pub mod error;
pub mod experiment;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod measure;
pub mod phantom;
pub mod sparse;
pub mod symbol;

pub use error::{Error, Result};
pub use forward::{
    BcKind, BoundarySpec, ConductivityField, ElectrodeFunction, LaplaceSolver, PhysicalConstants,
    PotentialField,
};
pub use grid::{BoundaryPartition, GapIntervals, GridOperators, GridSpec};
pub use inverse::{InverseProblem, ReconstructionConfig, ReconstructionKind, ReconstructionState};
pub use measure::{ExperimentParams, HeatingPattern, MeasurementSet, NoiseScaling};
pub use phantom::Phantom;
pub use symbol::{ConditionMap, FieldGradients, SymbolKind};
