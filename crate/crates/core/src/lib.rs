//! Quasi-synchronous visible light positioning: Cramér-Rao bounds for hybrid
//! TDOA/RSS localization, received waveform synthesis, and the direct and
//! two-step maximum-likelihood position estimators.
//!
//! ```
//! use vlp_core::{crlb, default_scenario};
//!
//! let s = default_scenario();
//! let bound = crlb::crlb(&s).unwrap();
//! assert!(bound.sqrt_mse() < 0.2);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crlb;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod montecarlo;
pub mod scenario;
pub mod signal;

pub use crlb::{CrlbResult, FimResult};
pub use error::{Error, Result, Violation};
pub use estimators::{
    FirstStepEstimates, FusionModel, PositionEstimate, ReceivedSignalSet, ReceiverKnowledge, SearchConfig,
};
pub use geometry::{ChannelGeometry, ClockOffset, LedTransmitter, VlcReceiver, SPEED_OF_LIGHT};
pub use montecarlo::{Estimator, SweepAxis, SweepResult};
pub use scenario::{default_scenario, tilted_scenario, LoadedScenario, Mode, Room, Scenario};
pub use signal::{EnergyIntegrals, NoiseSpec, ObservationWindow, PulseSpec, SampledSignal, TabulatedPulse};

pub use nalgebra;
