//! Quantum control of alkali hyperfine ground states with rf and microwave fields.

pub mod config;
pub mod controllability;
pub mod error;
pub mod half;
pub mod hamiltonians;
pub mod linalg;
pub mod optimizer;
pub mod records;
pub mod simulator;
pub mod spin_algebra;
pub mod waveform;
pub mod wigner;

pub use controllability::{GeneratorSet, LieClosureResult, OutcomeClass, ScanOptions, ScanTable};
pub use error::{Error, Result};
pub use half::Half;
pub use hamiltonians::{
    AmplitudeMode, ChannelKind, ChannelSpec, ChannelValue, ControlConfiguration, ControlSample,
    MicrowaveTransition, PhaseMode,
};
pub use linalg::{CVector, OperatorMatrix};
pub use optimizer::{
    BenchmarkOptions, BenchmarkTable, BenchmarkVariant, OptimizationResult, OptimizerSettings,
    StatePrepProblem,
};
pub use records::RunRecord;
pub use simulator::{StateVector, Trajectory};
pub use spin_algebra::{Manifold, SpinSystem, TensorIndex};
pub use waveform::{SampledControls, WaveformKnots};
pub use wigner::{DensityMatrix, SphereGrid, SphereRadii, WignerSphereGrid};
