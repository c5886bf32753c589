//! Simulated-annealing 0/1 matrix factorization `V ≈ W∘H` under AND/OR
//! algebra, with mismatch-count and rectified-linear penalty energies, plus
//! the experiment harness around it.

pub mod annealer;
pub mod bench;
pub mod binmat;
pub mod energy;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod instgen;
pub mod landscape;

pub use annealer::{run, Mode, RunResult, SolverConfig, StopReason, Target, TemperatureSchedule};
pub use binmat::{bool_product, integer_product, BinaryMatrix, FactorPair, ProductCounts};
pub use energy::{CostKind, EnergyValue, FactorState, Flip, PenaltyField};
pub use error::{Error, Result};
