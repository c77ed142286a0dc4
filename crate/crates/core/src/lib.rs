//! Multi-machine transient stability simulation and energy analysis.
//!
//! The classical model is integrated in absolute angles and reported in the
//! center-of-inertia frame. Each machine gets its own kinetic and potential
//! energy; the superimposed machine is their sum.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assessment;
pub mod data;
pub mod energy;
pub mod equilibria;
pub mod error;
pub mod format;
pub mod simulator;
pub mod system;

pub use assessment::{
    assess, comparative_report, decompose_residual, find_cct, individual_verdicts,
    superimposed_verdict, system_verdict, AssessOptions, Assessed, AssessmentReport, CctResult,
    MachineVerdict, SmVerdict, Status,
};
pub use energy::{
    conservation_report, divergence_check, find_idsp_idlp, find_smpp, machine_energy_trace,
    pes_sample, DivergenceStatus, EnergyEvent, EnergyTrace, EventKind, GridSpec, PesGrid,
};
pub use equilibria::{
    margin, sctp_energy, solve_sep, solve_uep, solve_uep_multistart, uep_energy, EquilibriumKind,
    EquilibriumPoint, Margin,
};
pub use error::{Error, Result};
pub use simulator::{integrate, integrate_from, CoiState, Trajectory};
pub use system::{load_scenario, Machine, NetworkStage, Overrides, Scenario, StageLabel};
