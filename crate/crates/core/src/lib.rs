//! Ternary pseudo-random excitation sequences (QRT and DST) that are
//! eigenvectors of the unitary DFT, and the impedance estimators built on
//! them: steady-state division, distortion readout and single-period operando
//! reconstruction with drift and transient suppression.

pub mod battery_sim;
pub mod error;
pub mod estimator;
pub mod excitation;
pub mod io;
pub mod sequences;
pub mod spectral;

pub use battery_sim::{
    impedance_model, simulate_response, Distortion, EcmParams, InitialState, OcvCurve, SimMode, SimScenario,
    SlowCurrent,
};
pub use error::{Error, Result};
pub use estimator::{
    nonlinearity_levels, operando_reconstruct, recover_slow_current, repeated_experiment_combine,
    steady_state_impedance, ImpedancePoint, ImpedanceSpectrum, NonlinearityReport, OperandoOptions, OperandoResult,
    Provenance,
};
pub use excitation::{synthesize_excitation, MeasurementConfig, TimeSeriesRecord};
pub use sequences::{generate_dst, generate_qrt, harmonic_sets, Family, HarmonicSets, TernarySequence};
pub use spectral::{dft, idft, ComplexSpectrum};
