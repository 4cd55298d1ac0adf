//! Orchestration: problem specs, parameter grids, sweeps, boundary
//! expansions and the command line.

pub mod bundle;
pub mod cli;
pub mod grid;
pub mod spec;
pub mod sweep;
pub mod trace;

pub use bundle::Bundle;
pub use grid::ParameterGrid;
pub use spec::{ProbeSpec, ProblemSpec};
pub use sweep::{branching_diagram, sweep, ProbeSection, SweepOptions, SweepReport};
pub use trace::{germ_from_trace, trace_from_germ, TraceExpansion, TraceTerm};

/// Version of the JSON reports written by the command line.
pub const SCHEMA_VERSION: u32 = 1;
