//! Simulation, design and fitting of piezoelectric ladder filters built from
//! MBVD-modelled resonators.
//!
//! * [`netcore`]: two-port ABCD/S algebra and group delay
//! * [`resonator`]: MBVD element synthesis and admittance
//! * [`ladder`]: ladder assembly and the reference designs
//! * [`calibration`]: placement/order scan behind the reference designs
//! * [`metrics`]: IL, bandwidths, rejection, ripple, delay variation
//! * [`dispersion`]: electrode gap to resonance mapping
//! * [`fitting`]: fs/fp/kt2/Q extraction and circuit fitting
//! * [`tsio`]: Touchstone v1 and CSV I/O

pub mod calibration;
pub mod dispersion;
pub mod error;
pub mod fitting;
pub mod ladder;
pub mod metrics;
pub mod netcore;
pub mod report;
pub mod resonator;
pub mod tsio;

pub use error::{Error, Result};
pub use netcore::{FrequencyGrid, SMatrix, TwoPortAbcd, C64};
