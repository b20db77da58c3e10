//! Local-oscillator phase noise mapped onto Bloch-vector noise.
//!
//! A resonant pulse whose drive phase wobbles rotates the Bloch vector about
//! a slightly wrong axis; to first order the result is the ideal rotation
//! followed by a small rigid rotation. This crate computes that deflection for
//! coherent modulation, its second moments for a phase-noise spectrum, and the
//! accumulated noise of whole pulse sequences under white noise.
//!
//! - [`rotations`]: SO(3) helpers, the small-rotation form and the `D` matrix.
//! - [`deflection`]: closed-form deflection for a single sinusoidal tone.
//! - [`spectra`]: SSB phase-noise spectra and datasheet ingestion.
//! - [`covariance`]: transfer matrices `T̃` and noise matrices `Ṽ`.
//! - [`sequences`]: multi-pulse propagation and composite π-pulses.
//! - [`static_errors`]: amplitude and detuning errors and their cancellation orders.
//! - [`montecarlo`]: stochastic time-domain oracle.
//!
//! Angles are in radians, frequencies in Hz and spectral densities in rad²/Hz.

pub mod covariance;
pub mod deflection;
pub mod error;
pub mod montecarlo;
pub mod quadrature;
pub mod rotations;
pub mod sequences;
pub mod spectra;
pub mod static_errors;

pub use covariance::{CovarianceMatrix, NoiseMatrix, NoiseOptions, Warning};
pub use error::{Error, Result};
pub use rotations::{BlochVector, DeflectionVector, RotationMatrix};
pub use sequences::{CompositeKind, PulseSequence, SequenceKind};
pub use spectra::PhaseNoiseSpectrum;
