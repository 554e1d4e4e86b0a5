//! DIP, PnP-DIP and MCDIP-ADMM reconstruction loops.
//!
//! All three fit generator weights with Adam. The ADMM variants alternate a
//! TV proximal step on the split variable `x`, one Adam step on the
//! augmented Lagrangian in the generator parameters, and a scaled dual
//! update of `u`.

mod adam;
mod admm;

pub use adam::{adam_step, learning_rate, Adam, AdamHyper};
pub use admm::{
    augmented_lagrangian, run_dip, run_dip_observed, run_mcdip_admm, run_mcdip_admm_observed,
    run_pnp_dip, run_pnp_dip_observed, AdmmState, Iterate, Problem, RunOutput, RunTrace, Snapshot,
    SolverConfig, TraceRecord,
};
