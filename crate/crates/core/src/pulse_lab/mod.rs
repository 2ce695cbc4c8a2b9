//! Virtual characterization bench.
//!
//! Runs pulse sequences against a [`Device`], reading it after every pulse,
//! and turns the resulting traces into coercive voltages and log-width fits.

mod merz;
mod trace;

pub use merz::{extract_coercive, merz_fit, MerzFit, MIN_BRANCH_SPAN};
pub use trace::{fmt_sig17, ExperimentTrace, TraceRecord, TRACE_HEADER};

use crate::device::{Device, PulseSpec};
use crate::error::{Error, Result};
use crate::params::DeviceParams;

/// Read bias used by every experiment unless configured otherwise.
pub const DEFAULT_V_READ: f64 = 0.1;
/// Integration time charged to each read in a trace, s.
pub const READ_INTEGRATION: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 0.1;
pub const SHORT_PULSE: f64 = 2e-8;

/// Which quantity varies along a staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StaircaseMode {
    /// Fixed width, stepped amplitudes.
    Amplitude { width: f64 },
    /// Fixed amplitude, stepped widths.
    Width { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopKind {
    /// Traverses to both saturation amplitudes.
    Full,
    /// Stays inside a sub-range.
    Minor,
    /// Arbitrary sequence.
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseSpec {
    pub mode: StaircaseMode,
    pub values: Vec<f64>,
    pub v_read: f64,
    pub kind: LoopKind,
}

/// Amplitudes of a loop 0 -> +v_pos -> -v_neg -> 0 on an integer grid of `step`.
fn loop_amplitudes(v_pos: f64, v_neg: f64, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain("step", format!("must be finite and > 0, got {step}")));
    }
    let grid = |v: f64, name: &str| -> Result<i64> {
        let n = (v / step).round();
        if !(v.is_finite() && v >= 0.0) || (n * step - v).abs() > 1e-9 * step.max(v) {
            return Err(Error::domain(name, format!("{v} V is not a non-negative multiple of step {step} V")));
        }
        Ok(n as i64)
    };
    let (n_pos, n_neg) = (grid(v_pos, "v_max_pos")?, grid(v_neg, "v_max_neg")?);
    let ks = (1..=n_pos).chain((-n_neg..n_pos).rev()).chain(-n_neg + 1..=0);
    Ok(ks.map(|k| k as f64 * step).collect())
}

impl StaircaseSpec {
    pub fn full_loop(width: f64, v_max_pos: f64, v_max_neg: f64, step: f64, v_read: f64) -> Result<Self> {
        Ok(Self {
            mode: StaircaseMode::Amplitude { width },
            values: loop_amplitudes(v_max_pos, v_max_neg, step)?,
            v_read,
            kind: LoopKind::Full,
        })
    }

    pub fn minor_loop(width: f64, v_hi: f64, v_lo: f64, step: f64, v_read: f64) -> Result<Self> {
        Ok(Self { kind: LoopKind::Minor, ..Self::full_loop(width, v_hi, v_lo, step, v_read)? })
    }

    /// Single-polarity ramp `step, 2 step, ..., v_max` with the sign of `polarity`.
    pub fn ramp(width: f64, v_max: f64, step: f64, polarity: f64, v_read: f64) -> Result<Self> {
        let n = (v_max / step).round() as i64;
        if !(step > 0.0 && v_max >= step) {
            return Err(Error::domain("step", format!("ramp needs 0 < step <= v_max, got {step}, {v_max}")));
        }
        let sign = polarity.signum();
        Ok(Self {
            mode: StaircaseMode::Amplitude { width },
            values: (1..=n).map(|k| sign * k as f64 * step).collect(),
            v_read,
            kind: LoopKind::Open,
        })
    }

    pub fn width_sequence(amplitude: f64, widths: Vec<f64>, v_read: f64) -> Self {
        Self { mode: StaircaseMode::Width { amplitude }, values: widths, v_read, kind: LoopKind::Open }
    }

    pub fn pulses(&self) -> impl Iterator<Item = PulseSpec> + '_ {
        self.values.iter().map(move |&v| match self.mode {
            StaircaseMode::Amplitude { width } => PulseSpec { amplitude: v, width },
            StaircaseMode::Width { amplitude } => PulseSpec { amplitude, width: v },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::domain("values", "staircase sequence is empty"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain("values", format!("non-finite entry {v}")));
        }
        self.pulses().try_for_each(|p| p.validate())
    }
}

/// Saturating preconditioning applied before each staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetProtocol {
    pub saturate: PulseSpec,
    pub start: Option<PulseSpec>,
}

impl Default for ResetProtocol {
    fn default() -> Self {
        Self { saturate: PulseSpec { amplitude: -3.0, width: 1e-3 }, start: None }
    }
}

impl ResetProtocol {
    pub fn apply(&self, device: &mut Device) -> Result<()> {
        device.apply_pulse(self.saturate)?;
        if let Some(p) = self.start {
            device.apply_pulse(p)?;
        }
        Ok(())
    }
}

fn baseline(device: &Device, v_read: f64) -> Result<TraceRecord> {
    let read = device.read(v_read, READ_INTEGRATION)?;
    Ok(TraceRecord { index: 0, amplitude: 0.0, width: 0.0, resistance: read.chord_resistance, energy: 0.0 })
}

/// Applies `pulses` in order, reading at `v_read` after each.
pub fn run_pulses(device: &mut Device, pulses: impl IntoIterator<Item = PulseSpec>, v_read: f64) -> Result<ExperimentTrace> {
    let mut records = vec![baseline(device, v_read)?];
    let mut energy = 0.0;
    for (k, pulse) in pulses.into_iter().enumerate() {
        energy += device.apply_pulse(pulse)?.energy;
        let read = device.read(v_read, READ_INTEGRATION)?;
        records.push(TraceRecord {
            index: k + 1,
            amplitude: pulse.amplitude,
            width: pulse.width,
            resistance: read.chord_resistance,
            energy,
        });
    }
    Ok(ExperimentTrace { records })
}

pub fn run_staircase(device: &mut Device, spec: &StaircaseSpec) -> Result<ExperimentTrace> {
    spec.validate()?;
    run_pulses(device, spec.pulses(), spec.v_read)
}

/// Extent of an amplitude hysteresis loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeLoop {
    pub v_max_pos: f64,
    pub v_max_neg: f64,
    pub step: f64,
    pub v_read: f64,
}

impl Default for AmplitudeLoop {
    fn default() -> Self {
        Self { v_max_pos: 2.8, v_max_neg: 2.8, step: DEFAULT_STEP, v_read: DEFAULT_V_READ }
    }
}

/// One full amplitude loop per width, each from a freshly reset device.
pub fn run_amplitude_staircase(
    device: &mut Device,
    widths: &[f64],
    extent: &AmplitudeLoop,
    reset: &ResetProtocol,
) -> Result<Vec<ExperimentTrace>> {
    if extent.v_read.abs() > device.params().read_guard {
        return Err(Error::ReadDisturb { v_read: extent.v_read, guard: device.params().read_guard });
    }
    widths
        .iter()
        .map(|&width| {
            let spec = StaircaseSpec::full_loop(width, extent.v_max_pos, extent.v_max_neg, extent.step, extent.v_read)?;
            reset.apply(device)?;
            run_staircase(device, &spec)
        })
        .collect()
}

/// Log-spaced widths from 20 ns to 2 ms, 60 entries.
pub fn default_width_schedule() -> Vec<f64> {
    log_spaced(SHORT_PULSE, 2e-3, 60)
}

pub fn log_spaced(start: f64, end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let (a, b) = (start.log10(), end.log10());
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

/// Constant-amplitude, growing-width train: `widths` at `+amplitude`, then
/// `widths` at `-amplitude`, repeating until `n_pulses` have been applied.
pub fn run_width_train(device: &mut Device, amplitude: f64, widths: &[f64], n_pulses: usize, v_read: f64) -> Result<ExperimentTrace> {
    if widths.is_empty() {
        return Err(Error::domain("widths", "width schedule is empty"));
    }
    let half = widths.len();
    let pulses: Vec<PulseSpec> = (0..n_pulses)
        .map(|k| {
            let phase = k % (2 * half);
            if phase < half {
                PulseSpec { amplitude, width: widths[phase] }
            } else {
                PulseSpec { amplitude: -amplitude, width: widths[phase - half] }
            }
        })
        .collect();
    pulses.iter().try_for_each(|p| p.validate())?;
    run_pulses(device, pulses, v_read)
}

/// Coercive voltages of both polarities across a set of widths.
#[derive(Debug, Clone, PartialEq)]
pub struct CoerciveSweep {
    pub widths: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl CoerciveSweep {
    pub fn positive_pairs(&self) -> Vec<(f64, f64)> {
        self.widths.iter().copied().zip(self.positive.iter().copied()).collect()
    }

    pub fn negative_pairs(&self) -> Vec<(f64, f64)> {
        self.widths.iter().copied().zip(self.negative.iter().copied()).collect()
    }

    pub fn fits(&self) -> Result<(MerzFit, MerzFit)> {
        Ok((merz_fit(&self.positive_pairs())?, merz_fit(&self.negative_pairs())?))
    }
}

pub fn coercive_vs_width(device: &mut Device, widths: &[f64], extent: &AmplitudeLoop, reset: &ResetProtocol) -> Result<CoerciveSweep> {
    let traces = run_amplitude_staircase(device, widths, extent, reset)?;
    let ratio = device.on_off_ratio();
    let mut sweep = CoerciveSweep { widths: widths.to_vec(), positive: Vec::new(), negative: Vec::new() };
    for trace in &traces {
        let missing = || Error::InsufficientSwitching { span: 0.0, required: MIN_BRANCH_SPAN };
        sweep.positive.push(extract_coercive(&trace.branch(true).ok_or_else(missing)?, ratio)?);
        sweep.negative.push(extract_coercive(&trace.branch(false).ok_or_else(missing)?, ratio)?);
    }
    Ok(sweep)
}

/// Amplitude at which a single-polarity staircase from the opposite
/// saturated state has switched `threshold` of the dynamic range.
///
/// Amplitudes step by `step` up to 10 V; the crossing is linearly
/// interpolated between the bracketing steps. Returns NaN when the threshold
/// is never reached.
pub fn switching_onset(params: &DeviceParams, positive: bool, width: f64, step: f64, threshold: f64) -> Result<f64> {
    let mut device = Device::new(*params, if positive { 1.0 } else { 0.0 })?;
    let s0 = device.polarization();
    let sign = if positive { 1.0 } else { -1.0 };
    let n_max = (10.0 / step).ceil() as usize;
    let (mut v_prev, mut f_prev) = (0.0, 0.0);
    for k in 1..=n_max {
        let v = k as f64 * step;
        device.apply_pulse(PulseSpec::new(sign * v, width)?)?;
        let f = (device.polarization() - s0).abs();
        if f >= threshold {
            return Ok(v_prev + step * (threshold - f_prev) / (f - f_prev));
        }
        (v_prev, f_prev) = (v, f);
    }
    Ok(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loop_shape() {
        let s = StaircaseSpec::full_loop(2e-8, 0.3, 0.2, 0.1, 0.1).unwrap();
        let v: Vec<f64> = s.values.iter().map(|v| (v * 10.0).round()).collect();
        assert_eq!(v, [1.0, 2.0, 3.0, 2.0, 1.0, 0.0, -1.0, -2.0, -1.0, 0.0]);
        assert!(StaircaseSpec::full_loop(2e-8, 0.25, 0.2, 0.1, 0.1).is_err());
        assert!(StaircaseSpec::full_loop(2e-8, 0.3, 0.2, 0.0, 0.1).is_err());
    }

    #[test]
    fn empty_spec_rejected() {
        let spec = StaircaseSpec::width_sequence(1.0, vec![], 0.1);
        let mut d = Device::lrs(DeviceParams::golden()).unwrap();
        assert!(run_staircase(&mut d, &spec).is_err());
        assert!(run_width_train(&mut d, 1.0, &[], 10, 0.1).is_err());
    }

    #[test]
    fn zero_amplitude_train_is_flat() {
        let mut d = Device::new(DeviceParams::golden(), 0.6).unwrap();
        let t = run_width_train(&mut d, 0.0, &default_width_schedule(), 240, 0.1).unwrap();
        let r0 = t.records[0].resistance;
        assert!(t.records.iter().all(|r| r.resistance == r0));
    }

    #[test]
    fn read_guard_checked_up_front() {
        let mut d = Device::lrs(DeviceParams::golden()).unwrap();
        let extent = AmplitudeLoop { v_read: 0.5, ..AmplitudeLoop::default() };
        assert!(matches!(
            run_amplitude_staircase(&mut d, &[2e-8], &extent, &ResetProtocol::default()),
            Err(Error::ReadDisturb { .. })
        ));
    }

    #[test]
    fn schedule_endpoints() {
        let w = default_width_schedule();
        assert_eq!(w.len(), 60);
        assert!((w[0] - 2e-8).abs() < 1e-22);
        assert!((w[59] / 2e-3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_indices_increase() {
        let mut d = Device::lrs(DeviceParams::golden()).unwrap();
        let s = StaircaseSpec::full_loop(2e-8, 2.8, 2.8, 0.1, 0.1).unwrap();
        let t = run_staircase(&mut d, &s).unwrap();
        assert!(t.records.windows(2).all(|w| w[1].index == w[0].index + 1));
        assert!(t.records.iter().all(|r| r.resistance > 0.0));
        assert!(t.records.windows(2).all(|w| w[1].energy >= w[0].energy));
    }
}
