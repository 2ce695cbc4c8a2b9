//! Single-device compact model.
//!
//! A [`Device`] couples a parameter card with a [`DomainEnsemble`]. The
//! ensemble's polarization fraction `S` maps linearly onto the small-signal
//! conductance between `g_hrs` and `g_lrs`; programming pulses move `S`,
//! reads never do. Retention drift and cycling fatigue act as multiplicative
//! factors on the conductance and leave the ensemble alone.

use crate::ensemble::DomainEnsemble;
use crate::error::{Error, Result};
use crate::params::DeviceParams;

/// A rectangular programming pulse. The sign of `amplitude` selects polarity:
/// positive depresses (resistance up), negative potentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub amplitude: f64,
    pub width: f64,
}

impl PulseSpec {
    pub fn new(amplitude: f64, width: f64) -> Result<Self> {
        let pulse = Self { amplitude, width };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::domain("amplitude", format!("must be finite, got {}", self.amplitude)));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::domain("width", format!("must be finite and > 0, got {}", self.width)));
        }
        Ok(())
    }
}

/// Quasi-static DC ramp: `n_steps` equally spaced voltages from `v_start` to
/// `v_end` inclusive, each held for `dwell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub v_start: f64,
    pub v_end: f64,
    pub n_steps: usize,
    pub dwell: f64,
}

impl SweepSpec {
    pub fn new(v_start: f64, v_end: f64, n_steps: usize, dwell: f64) -> Self {
        Self { v_start, v_end, n_steps, dwell }
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        let span = self.v_end - self.v_start;
        let last = (self.n_steps.max(2) - 1) as f64;
        (0..self.n_steps).map(move |k| self.v_start + span * k as f64 / last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadResult {
    pub current: f64,
    /// `v_read / current`; the small-signal resistance when `v_read` is zero.
    pub chord_resistance: f64,
    pub small_signal_conductance: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchReport {
    pub delta_s: f64,
    /// Conduction energy at the pre-pulse state, J.
    pub energy: f64,
}

/// Current through a junction of small-signal conductance `g` at bias `v`.
///
/// `g * v_nl * sinh(v / v_nl)`, limited smoothly at `j_sat * area`. The limit
/// is a fourth-power soft minimum, so the read regime is untouched to better
/// than one part in 1e9 on the golden card.
pub fn iv_current(params: &DeviceParams, g: f64, v: f64) -> f64 {
    let raw = g * params.v_nl * (v / params.v_nl).sinh();
    let limit = params.j_sat * params.area;
    if !limit.is_finite() || raw == 0.0 {
        return raw;
    }
    let r = raw.abs() / limit;
    if r <= 1.0 {
        raw / (1.0 + r.powi(4)).powf(0.25)
    } else {
        raw.signum() * limit / (1.0 + r.powi(4).recip()).powf(0.25)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    params: DeviceParams,
    ensemble: DomainEnsemble,
    cycles: u64,
    t_since_program: f64,
    s_prog: f64,
    fatigue_scale: f64,
}

impl Device {
    pub fn new(params: DeviceParams, s_init: f64) -> Result<Self> {
        let ensemble = DomainEnsemble::build(&params, s_init)?;
        let s_prog = ensemble.polarization();
        Ok(Self { params, ensemble, cycles: 0, t_since_program: 0.0, s_prog, fatigue_scale: 1.0 })
    }

    /// Fully potentiated (LRS).
    pub fn lrs(params: DeviceParams) -> Result<Self> {
        Self::new(params, 1.0)
    }

    /// Fully depressed (HRS).
    pub fn hrs(params: DeviceParams) -> Result<Self> {
        Self::new(params, 0.0)
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn ensemble(&self) -> &DomainEnsemble {
        &self.ensemble
    }

    pub fn polarization(&self) -> f64 {
        self.ensemble.polarization()
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn t_since_program(&self) -> f64 {
        self.t_since_program
    }

    pub fn s_prog(&self) -> f64 {
        self.s_prog
    }

    /// Product of all fatigue factors applied so far.
    pub fn fatigue_scale(&self) -> f64 {
        self.fatigue_scale
    }

    /// Change of log10(R) accumulated since the last programming event.
    pub fn retention_shift(&self) -> f64 {
        let r = &self.params.retention;
        let t = self.t_since_program;
        r.a_relax * (1.0 - (-t / r.tau_relax).exp()) - r.a_drift * (1.0 - (-t / r.tau_drift).exp())
    }

    fn scale(&self) -> f64 {
        self.fatigue_scale * 10f64.powf(-self.retention_shift())
    }

    fn conductance_at(&self, s: f64) -> f64 {
        let p = &self.params;
        (p.g_hrs + (p.g_lrs - p.g_hrs) * s) * self.scale()
    }

    /// Small-signal conductance of the present state.
    pub fn conductance(&self) -> f64 {
        self.conductance_at(self.polarization())
    }

    /// Reachable conductance window `(HRS, LRS)` right after programming.
    pub fn window(&self) -> (f64, f64) {
        (self.params.g_hrs * self.fatigue_scale, self.params.g_lrs * self.fatigue_scale)
    }

    /// Position of `g` inside [`Self::window`], 0 at HRS and 1 at LRS.
    pub fn window_fraction(&self, g: f64) -> f64 {
        let (lo, hi) = self.window();
        (g - lo) / (hi - lo)
    }

    /// On/Off conductance ratio of the card. Fatigue scales both states alike
    /// and cancels here.
    pub fn on_off_ratio(&self) -> f64 {
        self.params.on_off_ratio()
    }

    /// DC current at bias `v` in the present state. No guard, no side effects.
    pub fn current(&self, v: f64) -> f64 {
        iv_current(&self.params, self.conductance(), v)
    }

    pub fn read(&self, v_read: f64, t_integrate: f64) -> Result<ReadResult> {
        if !v_read.is_finite() {
            return Err(Error::domain("v_read", format!("must be finite, got {v_read}")));
        }
        if !(t_integrate.is_finite() && t_integrate >= 0.0) {
            return Err(Error::domain("t_integrate", format!("must be finite and >= 0, got {t_integrate}")));
        }
        if v_read.abs() > self.params.read_guard {
            return Err(Error::ReadDisturb { v_read, guard: self.params.read_guard });
        }
        let g = self.conductance();
        let current = iv_current(&self.params, g, v_read);
        let chord_resistance = if v_read == 0.0 { 1.0 / g } else { v_read / current };
        Ok(ReadResult { current, chord_resistance, small_signal_conductance: g, energy: (current * v_read).abs() * t_integrate })
    }

    fn mark_programmed_if_changed(&mut self, delta_s: f64) {
        if delta_s != 0.0 {
            self.t_since_program = 0.0;
            self.s_prog = self.polarization();
        }
    }

    pub fn apply_pulse(&mut self, pulse: PulseSpec) -> Result<SwitchReport> {
        pulse.validate()?;
        if pulse.amplitude == 0.0 {
            return Ok(SwitchReport { delta_s: 0.0, energy: 0.0 });
        }
        let energy = self.current(pulse.amplitude).abs() * pulse.amplitude.abs() * pulse.width;
        let before = self.polarization();
        self.ensemble.switch(&self.params, pulse.amplitude, pulse.width);
        let delta_s = self.polarization() - before;
        self.mark_programmed_if_changed(delta_s);
        Ok(SwitchReport { delta_s, energy })
    }

    /// Steps through `sweep`, holding each voltage for the dwell time and then
    /// sampling the current at that voltage. Returns `(V, I)` pairs.
    pub fn dc_sweep(&mut self, sweep: &SweepSpec) -> Result<Vec<(f64, f64)>> {
        if sweep.n_steps < 2 {
            return Err(Error::domain("n_steps", format!("must be >= 2, got {}", sweep.n_steps)));
        }
        if !(sweep.dwell.is_finite() && sweep.dwell > 0.0) {
            return Err(Error::domain("dwell", format!("must be finite and > 0, got {}", sweep.dwell)));
        }
        if !(sweep.v_start.is_finite() && sweep.v_end.is_finite()) {
            return Err(Error::domain("v_start", "sweep endpoints must be finite"));
        }
        let mut trace = Vec::with_capacity(sweep.n_steps);
        for v in sweep.voltages() {
            self.apply_pulse(PulseSpec { amplitude: v, width: sweep.dwell })?;
            trace.push((v, self.current(v)));
        }
        Ok(trace)
    }

    /// Lets the device sit unbiased for `delta_t` seconds.
    pub fn retention_evolve(&mut self, delta_t: f64) -> Result<()> {
        if !(delta_t.is_finite() && delta_t >= 0.0) {
            return Err(Error::domain("delta_t", format!("must be finite and >= 0, got {delta_t}")));
        }
        self.t_since_program += delta_t;
        Ok(())
    }

    /// Applies `n_cycles` bipolar square-wave cycles (+amplitude then
    /// -amplitude, each half lasting `1 / (2 frequency)`) in closed form.
    pub fn endurance_cycle(&mut self, n_cycles: u64, amplitude: f64, frequency: f64) -> Result<()> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::domain("frequency", format!("must be finite and > 0, got {frequency}")));
        }
        if !amplitude.is_finite() {
            return Err(Error::domain("amplitude", format!("must be finite, got {amplitude}")));
        }
        if n_cycles == 0 {
            return Ok(());
        }
        let before = self.polarization();
        self.ensemble.cycle_square_wave(&self.params, amplitude, 0.5 / frequency, n_cycles);
        self.mark_programmed_if_changed(self.polarization() - before);

        let old = self.cycles;
        self.cycles = old.saturating_add(n_cycles);
        let decades = (1.0 + self.cycles as f64).log10() - (1.0 + old as f64).log10();
        self.fatigue_scale *= 1.0 + self.params.fatigue_kappa * decades;
        Ok(())
    }
}
