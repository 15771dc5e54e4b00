#![no_std]

//! Finite, deterministic models of two-station correlation experiments.
//!
//! A [`LocalModel`] couples a source variable `λ`, a shared clock of time
//! slots, one instrument-parameter generator per station and one outcome
//! rule per station. Everything here is pure and allocation-only: the
//! companion `hvsim` crate carries file formats and the command line.
//!
//! The crate is organised by concern:
//!
//! - [`model`] and [`zoo`]: parameter spaces, rules and a catalogue of models.
//! - [`density`]: exact setting-dependent joint tables and the product-form check.
//! - [`symmetry`]: sign transforms that zero one-sided marginals.
//! - [`inequality`]: correlations, conditional expectations and CHSH.
//! - [`stations`]: clocked trial streams and the counterfactual locality audit.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod density;
pub mod error;
pub mod inequality;
pub mod model;
pub mod rng;
pub mod stations;
pub mod symmetry;
pub mod zoo;

pub use crate::density::{
    check_factorization, tabulate_joint, CellKey, Condition, FactorizationMode,
    FactorizationReport, JointTable,
};
pub use crate::error::{Error, Result};
pub use crate::inequality::{
    chsh, correlate, deterministic_bound, reference_chsh, reference_correlation, ChshResult,
    ChshSettings, CorrelationReport, DeterministicBound, Method,
};
pub use crate::model::{
    GenRule, InstalledSign, InstrumentParamGen, LocalModel, LocalOutput, ModelParts, OutcomeFn,
    OutcomeRule, OutcomeTable, Setting, Sign, SignScope, SignSource, SourceSpace, Station,
    TimeGrid, TransformStep,
};
pub use crate::stations::{
    locality_audit, run_experiment, AuditReport, Schedule, ScheduleSeeds, SettingPolicy,
    Stations, TrialRecord,
};
pub use crate::symmetry::{
    layer_double, make_sign_function, source_symmetrize, target_marginal, time_symmetrize,
    time_symmetrize_scoped, MarginalTarget, SignFunction,
};

/// Tolerance for "exact" probability bookkeeping (normalisation, cached means).
pub const EXACT_TOL: f64 = 1e-12;
