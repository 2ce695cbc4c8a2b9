//! Behavioral simulator for ultra-thin HfZrO₄ ferroelectric memristors.
//!
//! The crate models a two-terminal TiN/WOx/HZO/TiN junction as an ensemble of
//! ferroelectric domains with distributed coercive voltages. Programming
//! pulses switch domains with first-order kinetics whose time constant drops
//! one decade per `b_slope` volts of overdrive, the conductance follows the
//! switched fraction, and the I-V law is a sinh that stays nearly ohmic at
//! read biases. On top of the device model sit a virtual pulse bench
//! ([`pulse_lab`]), crossbar arrays ([`crossbar`]), parameter fitting
//! ([`calibration`]) and a batch runner ([`cli`]).
//!
//! ```
//! use ferrosim::{Device, DeviceParams, PulseSpec};
//!
//! let mut device = Device::hrs(DeviceParams::golden())?;
//! let report = device.apply_pulse(PulseSpec::new(-1.0, 20e-9)?)?;
//! assert!(report.delta_s > 0.15 && report.delta_s < 0.25);
//! # Ok::<(), ferrosim::Error>(())
//! ```

pub mod calibration;
pub mod cli;
pub mod crossbar;
pub mod device;
pub mod ensemble;
mod error;
pub mod kv;
pub mod params;
pub mod pulse_lab;

pub use crossbar::{Crossbar, UpdateScheme, WeightMapping, WriteVerify};
pub use device::{Device, PulseSpec, ReadResult, SweepSpec, SwitchReport};
pub use ensemble::DomainEnsemble;
pub use error::{Error, Result};
pub use params::{DeviceParams, RetentionParams};
