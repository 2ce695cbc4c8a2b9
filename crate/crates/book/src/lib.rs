//! Compiles every listing in the guide under `book/src` as a doc-test.
//! One module per chapter, so a failing listing points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/device-model.md")]
pub mod device_model {}
#[doc = include_str!("../../../book/src/reading.md")]
pub mod reading {}
#[doc = include_str!("../../../book/src/retention-fatigue.md")]
pub mod retention_fatigue {}
#[doc = include_str!("../../../book/src/pulse-experiments.md")]
pub mod pulse_experiments {}
#[doc = include_str!("../../../book/src/crossbar.md")]
pub mod crossbar {}
#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
