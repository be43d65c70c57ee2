//! Reconstruction of linear-optical unitaries from single-photon transition
//! probabilities and two-photon interference visibilities.
//!
//! The search space is the Reck parameterization ([`reck`]): every candidate
//! is a list of beam-splitter genes whose product is unitary by construction.
//! [`ga`] evolves a population of such lists against the χ² of [`fitness`],
//! optionally seeded by closed-form inversions from [`analytic`]. [`forward`]
//! predicts and simulates measurements; [`metrics`] scores results.

pub mod analytic;
pub mod error;
pub mod fitness;
pub mod forward;
pub mod ga;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod reck;
pub mod rng;

pub use analytic::{
    analytic_reconstruct, best_analytic, rank_candidates, seed_pool, AnalyticEstimate, Candidate,
    InversionFlags, MinimalSubset, SeedPool, SeedStatus,
};
pub use error::{Error, Result};
pub use fitness::{chi_square, fitness, ChiSquare, Evaluator, Fitness};
pub use forward::{
    coincidence, predict_single, predict_visibilities, simulate_measurements, Measured,
    MeasurementSet, NoiseConfig, SinglePhotonTable, VisibilityTable,
};
pub use ga::{evolve, Checkpoint, Evolution, GaConfig, RunResult, RunTrace, Selection, StopReason};
pub use linalg::{
    align_gauge, haar_random_unitary, nearest_unitary, ComplexMatrix, GaugeAlignment,
    UnitaryMatrix,
};
pub use metrics::{
    evaluate, gate_fidelity, monte_carlo_uncertainty, similarity, EvaluationReport, GateFidelity,
    McMethod, McOptions,
};
pub use num_complex::Complex64;
pub use reck::{dna_to_unitary, unitary_to_dna, Dna, Gene, TriangleSchedule};
