//! Input-mapping co-design sliding mode control (IMSMC) for discrete-time
//! linear systems with norm-bounded unknown dynamics, together with the
//! robust disturbance-compensated SMC baseline and an experiment harness.

pub mod error;
pub mod harness;
pub mod input_mapping;
pub mod linalg;
pub mod lmi;
pub mod nlsolve;
pub mod plant;
pub mod reaching;
pub mod surface;

pub use nalgebra;

pub use error::{ControlError, DesignError, HarnessError, PlantError, SolveError};
pub use harness::{ExperimentConfig, Metrics, TrajectoryLog};
pub use input_mapping::{ImsmcController, ImsmcSettings};
pub use nlsolve::{LmOptions, LmResult};
pub use plant::{DisturbanceSchedule, Plant, RegularForm, StateVector};
pub use reaching::{CompensatorMode, ReachingParams, RobustSmc};
pub use surface::{LmiSolution, SurfaceGain};
