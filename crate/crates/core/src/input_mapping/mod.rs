//! Input-mapping sliding mode control: a sliding window of past data is
//! combined with a jointly solved surface gain and convergence parameter.

mod band;
mod controller;
mod history;
mod objective;

pub use band::{band_policy, band_terms, qsmb_omega, BandDecision, QsmbBand, RunningBand};
pub use controller::{
    co_design_solve, equivalent_control, frozen_solve, imsmc_control, CoDesignSolution,
    ImsmcController, ImsmcSettings, ImsmcStep, ResidualPair, MU0_MAX, MU0_MIN,
};
pub use history::HistoryBuffer;
pub use objective::{
    objective_j, reduced_residual, stationarity_blocks, stationarity_residual, CoDesignContext,
    StationarityBlocks, Unknowns,
};
