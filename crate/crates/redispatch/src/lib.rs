//! Redispatch cost allocation for congested transmission grids.
//!
//! The crate solves DC and AC optimal power flow over coalitions of congested
//! lines and attributes the total redispatch cost to individual congestions
//! with the Shapley value. The pipeline follows the usual sequence: load a
//! MATPOWER case, run a power flow at the market-clearing dispatch, detect
//! overloaded lines, evaluate the coalition cost function with limit-masked
//! OPF solves, and aggregate the marginal contributions.

pub mod case_io;
pub mod congestion;
pub mod grid_model;
pub mod numerics;
pub mod opf;
pub mod pipeline;
pub mod power_flow;
pub mod shapley;

pub use case_io::{builtin_catalog, parse_matpower_case, serialize_case, CaseModification};

pub use congestion::{detect_congestions, CongestionSet};
pub use grid_model::{AdmittanceMatrix, Branch, Bus, BusKind, CostCurve, Generator, Network};
pub use opf::{solve_ac_opf, solve_dc_opf, Formulation, LimitMask, OpfProblem, OpfSolution};
pub use pipeline::{run_pipeline, AllocationReport, RunConfig};
pub use power_flow::{ac_power_flow, dc_power_flow, PowerFlowSolution};
pub use shapley::{shapley_values, Allocation, Game};
