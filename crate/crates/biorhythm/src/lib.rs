//! Population biorhythm analytics for daily activity cohorts.
//!
//! Given per-user daily measurements (steps, sleep duration, sleep onset
//! time, heart rate), this crate quantifies how a population's biorhythms
//! change around collective events along three axes:
//!
//! - **volume** — population-average activity levels ([`volume`]);
//! - **synchronicity** — SPIKE-distance between users' nightly sleep-onset
//!   spike trains, and the out-of-sync scores built on it ([`spike_sync`]);
//! - **rhythm** — characteristic periodicities from Welch spectral
//!   estimates, and rhythm-disruption scores via KL divergence
//!   ([`rhythm`]).
//!
//! Every event metric is contrasted against a random-day baseline
//! ([`null_model`]). A seeded cohort simulator ([`simulator`]) generates
//! synthetic populations with injectable event effects, and [`signatures`]
//! assembles per-event metric tables and clusters days in the
//! volume-by-disruption plane.
//!
//! The `examples/` directory demonstrates each capability end to end; the
//! `biorhythm` binary wraps the same pipeline behind `simulate`, `analyze`
//! and `nullmodel` subcommands.

pub mod cli;
pub mod config;
pub mod data_model;
mod error;
pub mod null_model;
pub mod rhythm;
pub mod signatures;
pub mod simulator;
pub mod spike_sync;
pub mod volume;

pub use data_model::{
    Activity, ActivityRecord, Cohort, DailySeries, DateInterval, EventSpec, SpikeTrain,
};
pub use error::{Error, Result};
