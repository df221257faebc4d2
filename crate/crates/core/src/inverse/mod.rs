//! Reconstruction pipelines built on adjoint-state Tikhonov optimization.

mod check;
mod control;
mod initial;
pub mod io;
mod optim;
mod potential;
mod probe;
mod recovery;
mod source;
mod tikhonov;
mod viscous;

pub use check::{directional_check, DirectionalCheck};
pub use control::{
    runge_control, runge_control_from, runge_sweep, sweep_table, ControlProblem, ControlSpace, RungeObjective,
    RungeOutcome, SweepRow,
};
pub use initial::{recover_initial_data, InitialDataProblem, InitialDataRecovery};
pub use optim::{IterationRecord, Lbfgs, NormalCg, OptimReport};
pub use potential::{recover_potential, PotentialRecovery, PotentialSettings};
pub use probe::{fit_line, linearization_probe, ProbeResult, RemainderNorm};
pub use recovery::{homogeneity_check, recover_nonlinearity, AlphaRow, HomogeneityRow, RecoveryResult, RecoverySettings, RecoverySummary, RemainderRow};
pub use source::{source_inversion, SourceInversion, SourceProblem};
pub use viscous::{integration_by_parts_mismatch, regularization_gap, IbpCheck};

#[cfg(test)]
mod tests;
