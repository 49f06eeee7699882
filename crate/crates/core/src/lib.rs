//! Simulation and signal reconstruction for force sensing with pairs of
//! mechanical oscillators whose measurement back-action cancels.
//!
//! * [`langevin`] integrates the measured oscillators in the time domain.
//! * [`transfer`] maps a force spectrum to measured-signal spectra.
//! * [`reconstruct`] inverts those maps.
//! * [`spectral`] estimates spectra and lines from simulated records.
//! * [`budget`] evaluates the output noise budget.

pub mod budget;
pub mod error;
pub mod langevin;
pub mod model;
pub mod reconstruct;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use langevin::{
    Channel, EnsembleMoments, InitialState, MeasuredObservable, Scenario, SimulationPlan,
    TrajectoryEnsemble, VarianceEstimate,
};
pub use model::{
    ForceDescriptor, ForceKind, MeasurementConfig, OscillatorParams, Spectrum, Symmetry,
};
pub use reconstruct::{DeltaRange, ReconstructionReport, ReconstructionScheme, Truncation};
pub use spectral::{PsdEstimate, Window};
pub use transfer::{Scheme, TransferContext};

pub use num_complex::Complex64;
