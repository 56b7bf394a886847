//! Affine phase retrieval: certify whether magnitude measurements
//! |<a_j, x> + b_j| determine a signal exactly, construct minimal and generic
//! retrievable ensembles, produce explicit counterexamples showing the
//! retrievable set is not open, recover signals from magnitude data, and
//! quantify stability — for real and complex signals, including the
//! sparse-signal variant.
//!
//! The crate is organized by concern:
//!
//! * [`core`] — ensembles, signals, the measurement maps, lifting, JSON forms;
//! * [`certify`] — exact real certification, structured certificates, the
//!   complex falsifier, collision oracles, Jacobian tests;
//! * [`construct`] — minimal/generic/subminimal constructions and the
//!   perturbation counterexamples;
//! * [`recover`] — coordinatewise closed forms, spectral initialization,
//!   damped Gauss-Newton;
//! * [`sparse`] — exact sparse certification and the restricted falsifier;
//! * [`stability`] — empirical bi-Lipschitz estimates and anisotropy ratios;
//! * [`experiment`] — the reproducible experiment harness behind the CLI.

pub mod certify;
pub mod construct;
pub mod core;
mod error;
pub mod experiment;
mod linalg;
mod optim;
mod rational;
pub mod recover;
pub mod sparse;
pub mod stability;

pub use crate::core::{
    collinearity_margin, lift_signal, validate_ensemble, LiftedEnsemble, MagnitudeVector,
    MeasurementEnsemble, RawEnsemble, RawSignal, ScalarField, Signal, Violation,
};
pub use certify::{
    brute_force_collision_search, certify_real_exact, certify_real_exact_with, certify_structured,
    falsify_complex, jacobian, jacobian_rank_deficit, violates_condition_c, Certificate,
    CollisionSearchConfig, FalsifyConfig, InconclusiveReason, RankDecisions, RankTolerance,
    SearchStats, UVWitness, Verdict, WitnessPair,
};
pub use construct::{
    build_complex_minimal, build_real_minimal, perturb_complex, perturb_real, sample_generic,
    witness_subminimal_complex, witness_subminimal_real, PerturbationReport, ShiftPairSpec,
    ShiftTripleSpec,
};
pub use error::{Error, Result};
pub use recover::{
    recover_auto, recover_coordinatewise_complex, recover_coordinatewise_real,
    recover_gauss_newton, spectral_init, ExactRecovery, GaussNewtonConfig, RecoveryResult,
    SpectralInit,
};
pub use sparse::{
    certify_sparse_real_exact, falsify_sparse_complex, sample_sparse_signal, SparseVerdict,
    SupportPair,
};
pub use stability::{
    anisotropy_ratio, estimate_lipschitz, lipschitz_from_pairs, lipschitz_ratios,
    sample_ball_pairs, AttainingPair, LipschitzEstimate, LipschitzRatios,
};
