//! Receding-horizon on/off scheduling of dynamic electric loads so that
//! their aggregate demand tracks a forecast power profile.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: switched per-load dynamics, exact zero-order-hold
//!   discretization and simulation.
//! - [`switching`]: the admissible set of dwell-constrained binary
//!   schedules, enumerated lazily or counted.
//! - [`horizon`]: tracking cost and the receding-horizon loop.
//! - [`profile`]: CSV ingestion, normalization, resampling and day-record
//!   output.

// Validation uses negated comparisons on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod horizon;
pub mod model;
pub mod profile;
pub mod switching;

pub use error::{Error, Result};
pub use horizon::{
    audit_dwell, cost, optimize_step, run_receding, tracking_error, violation, BarrierForm,
    CostSamples, Criterion, DayMetrics, DayRecord, DwellViolation, PowerProfile,
    RecedingHorizonState, ScheduleEvaluation, Scheduler, StepDiagnostics, StepOutcome,
    TrackingConfig,
};
pub use model::{
    make_dynamics, on_step_response, simulate_load, zoh_discretize, ContinuousDynamics,
    DiscreteDynamics, DynamicState, LoadBank, LoadModel, LoadSpec, StepResponse,
};
pub use num_complex::Complex64;
pub use profile::{
    normalize_peak, parse_csv, parse_csv_with, read_day_csv, resample, write_day_record,
    CsvColumns, DayTrace, NumberFormat, ParsedSeries, RawSeries, SummaryMeta,
};
pub use switching::{
    admissible_actions, count_schedules, enumerate_schedules, DecisionGrid, DwellCount, FinalRun,
    FirstEpoch, LoadSwitchState, ScheduleMatrix, ScheduleSpace, Semantics, SwitchLimits, TreeCount,
};
