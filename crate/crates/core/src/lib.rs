//! Noise-induced dephasing of adiabatic geometric phases, geometric
//! controlled-phase gates and a noisy Shor amplitude model.
//!
//! Units: ħ = 1, times in seconds, fields in the units of `1/γ` per second.

pub mod adiabatic;
pub mod ensemble;
pub mod error;
pub mod gate;
pub mod linalg;
pub mod mc;
pub mod noise;
pub mod shor;

pub use adiabatic::{
    adiabatic_phases, eigenframe, evolve_exact, propagator_exact, AdiabaticLimits, ControlSchedule,
    Direction, EigenFrame, Level, NoiseCoupling, PhaseModel, PhaseRecord, QubitHamiltonian,
};
pub use ensemble::{
    decoherence_factor_analytic, onset_ratio, overlap_integral, run_ensemble,
    transverse_magnetization, variance_analytic, AveragedDensity, DecoherenceReport, Engine,
    EnsembleConfig, EnsembleOutcome,
};
pub use error::{Error, Result};
pub use gate::{
    bell_gate_run, gate_onset_ratio, gate_phases, level_index_map, GateConfig, GateResult,
    PairHamiltonian, PairLevel, PulseSequence, Qubit,
};
pub use linalg::{Mat2, Spinor, C64};
pub use mc::{split_seed, ComplexEstimate, Estimate};
pub use noise::{estimate_autocorrelation, make_noise_path, Kernel, NoisePath, NoiseSpec};
pub use shor::{
    choose_q, euler_phi, find_period, gqc_onset, success_probability, AmplitudeMode,
    NoisyAmplitudeModel, Regime, ShorInstance, SuccessReport,
};
