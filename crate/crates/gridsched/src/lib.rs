//! Conflict-aware scheduling of URLLC and eMBB services over a
//! flexible-numerology time-frequency grid.
//!
//! The library models a mini-slot grid with four resource-block shapes,
//! generates per-trial channel realizations, and solves the resulting
//! block-assignment problem several ways:
//!
//! - [`exact`]: the OMA integer program, by LP-based branch-and-bound at
//!   benchmark scale and exhaustive enumeration at oracle scale;
//! - [`lp`]: a bounded-variable simplex solver and the NOMA relaxation P1,
//!   where fractional block sharing removes the conflict constraint;
//! - [`heuristics`]: the conflict-aware greedy family and the bin-packing
//!   based heuristics, all near-linear in the block count;
//! - [`harness`]: a reproducible Monte Carlo engine comparing everything,
//!   with optional rayon data-parallel trials (`parallel` feature, on by
//!   default) and CSV output.
//!
//! Determinism is a design constraint throughout: every tie-break is fixed,
//! all randomness flows from explicit seeds, and repeated runs produce
//! byte-identical CSV bodies.

pub mod channel;
pub mod exact;
pub mod grid;
pub mod harness;
pub mod heuristics;
pub mod lp;
pub mod validate;

pub use channel::{
    sample_snr, throughput_matrix, ChannelError, EmbbService, ServiceSet, SnrRealization,
    ThroughputMatrix, UrllcService,
};
pub use exact::{
    solve_p0_bnb, solve_p0_bruteforce, Assignment, BnbConfig, ExactError, InstanceP0, Schedule,
    ScheduleStatus,
};
pub use grid::{
    build_conflicts, default_shapes, enumerate_blocks, latency_feasible, Block, BlockShape,
    ConflictStructure, GridError, GridSpec, ShapeId,
};
pub use harness::{
    run_scenario, run_trial, summarize, ExactMode, HarnessError, NumerologyMode, Scenario,
    ScenarioSummary, SolverKind, SolverParams, TrialReport,
};
pub use heuristics::{
    conflict_metrics, default_h, loss_vector, run_bpb, run_ca, run_mbp, ConflictMetrics,
    LossMetric, LossMode, LossVector, UtilityMatrix, UtilityVariant,
};
pub use lp::{
    build_p1, solve_lp, solve_p1, LinearProgram, LpConfig, LpError, LpSolution, LpStatus,
    NomaConfig, Sense,
};
pub use validate::{validate_schedule, Violation};
