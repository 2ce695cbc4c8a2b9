//! Crossbar arrays of ferroelectric memristors.
//!
//! Rows carry input voltages, columns sit at virtual ground and collect
//! current. Wires are ideal, so every device sees exactly its row voltage
//! and devices never couple.

use std::path::Path;

use crate::device::{iv_current, Device, PulseSpec};
use crate::error::{Error, Result};
use crate::params::DeviceParams;
use crate::pulse_lab::{fmt_sig17, switching_onset, SHORT_PULSE};

/// Largest |delta S| a half-selected device may see during an update.
pub const HALF_SELECT_LIMIT: f64 = 1e-3;

/// How a signed logical weight maps onto device conductances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMapping {
    /// Columns pair up: weight (i, k) is G(i, 2k) - G(i, 2k + 1).
    DifferentialPair,
    /// Weight (i, j) is G(i, j) - g_ref.
    SingleWithReference { g_ref: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    devices: Vec<Device>,
    mapping: WeightMapping,
    v_read: f64,
}

/// Row-major conductance matrix, S.
pub type Matrix = Vec<Vec<f64>>;

impl Crossbar {
    pub fn new(rows: usize, cols: usize, params: DeviceParams, s_init: f64, mapping: WeightMapping) -> Result<Self> {
        let device = Device::new(params, s_init)?;
        Self::from_devices(rows, cols, vec![device; rows * cols], mapping)
    }

    /// Builds an array from explicit devices in row-major order, e.g. with
    /// perturbed parameter cards.
    pub fn from_devices(rows: usize, cols: usize, devices: Vec<Device>, mapping: WeightMapping) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain("rows", format!("dimensions must be >= 1, got {rows}x{cols}")));
        }
        if devices.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, got: devices.len() });
        }
        if mapping == WeightMapping::DifferentialPair && !cols.is_multiple_of(2) {
            return Err(Error::domain("cols", format!("differential pairs need an even column count, got {cols}")));
        }
        if let WeightMapping::SingleWithReference { g_ref } = mapping {
            if !(g_ref.is_finite() && g_ref > 0.0) {
                return Err(Error::domain("g_ref", format!("must be finite and > 0, got {g_ref}")));
            }
        }
        Ok(Self { rows, cols, devices, mapping, v_read: crate::pulse_lab::DEFAULT_V_READ })
    }

    /// Array whose devices start at the given conductances, each of which
    /// must lie inside the card's window.
    pub fn from_conductances(params: DeviceParams, g: &Matrix, mapping: WeightMapping) -> Result<Self> {
        let rows = g.len();
        let cols = g.first().map_or(0, Vec::len);
        check_shape(g, rows, cols)?;
        let mut devices = Vec::with_capacity(rows * cols);
        for (i, row) in g.iter().enumerate() {
            for (j, &target) in row.iter().enumerate() {
                let s = (target - params.g_hrs) / (params.g_lrs - params.g_hrs);
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::TargetDomain { row: i, col: j, target, g_min: params.g_hrs, g_max: params.g_lrs });
                }
                devices.push(Device::new(params, s)?);
            }
        }
        Self::from_devices(rows, cols, devices, mapping)
    }

    pub fn with_v_read(mut self, v_read: f64) -> Self {
        self.v_read = v_read;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mapping(&self) -> WeightMapping {
        self.mapping
    }

    pub fn v_read(&self) -> f64 {
        self.v_read
    }

    pub fn device(&self, row: usize, col: usize) -> &Device {
        &self.devices[row * self.cols + col]
    }

    pub fn device_mut(&mut self, row: usize, col: usize) -> &mut Device {
        &mut self.devices[row * self.cols + col]
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn conductances(&self) -> Matrix {
        self.devices.chunks(self.cols).map(|row| row.iter().map(Device::conductance).collect()).collect()
    }

    /// Column currents for row voltages `v_in`, accumulated row by row.
    pub fn mvm(&self, v_in: &[f64]) -> Result<Vec<f64>> {
        if v_in.len() != self.rows {
            return Err(Error::Dimension { expected: self.rows, got: v_in.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &v) in v_in.iter().enumerate() {
            for (j, acc) in out.iter_mut().enumerate() {
                let d = self.device(i, j);
                if !v.is_finite() || v.abs() > d.params().read_guard {
                    return Err(Error::ReadDisturb { v_read: v, guard: d.params().read_guard });
                }
                *acc += iv_current(d.params(), d.conductance(), v);
            }
        }
        Ok(out)
    }

    /// Signed logical weights under the array's mapping, S.
    pub fn weights(&self) -> Matrix {
        let g = self.conductances();
        match self.mapping {
            WeightMapping::DifferentialPair => {
                g.iter().map(|row| row.chunks(2).map(|p| p[0] - p[1]).collect()).collect()
            }
            WeightMapping::SingleWithReference { g_ref } => {
                g.iter().map(|row| row.iter().map(|x| x - g_ref).collect()).collect()
            }
        }
    }

    /// Logical output currents: pair differences, or column current minus the
    /// reference column `g_ref * sum(v)`.
    pub fn weighted_output(&self, v_in: &[f64]) -> Result<Vec<f64>> {
        let raw = self.mvm(v_in)?;
        Ok(match self.mapping {
            WeightMapping::DifferentialPair => raw.chunks(2).map(|p| p[0] - p[1]).collect(),
            WeightMapping::SingleWithReference { g_ref } => {
                let reference = g_ref * v_in.iter().sum::<f64>();
                raw.iter().map(|i| i - reference).collect()
            }
        })
    }

    /// Conductance targets realizing `weights` (in units of the full window
    /// g_lrs - g_hrs, each entry in [-1, 1]) under the array's mapping.
    pub fn map_weights(&self, weights: &Matrix) -> Result<Matrix> {
        let params = self.device(0, 0).params();
        let (lo, hi) = (params.g_hrs, params.g_lrs);
        let span = hi - lo;
        let logical_cols = match self.mapping {
            WeightMapping::DifferentialPair => self.cols / 2,
            WeightMapping::SingleWithReference { .. } => self.cols,
        };
        check_shape(weights, self.rows, logical_cols)?;
        if let Some(w) = weights.iter().flatten().find(|w| !(w.abs() <= 1.0)) {
            return Err(Error::domain("weight", format!("must lie in [-1, 1], got {w}")));
        }
        Ok(match self.mapping {
            WeightMapping::DifferentialPair => weights
                .iter()
                .map(|row| row.iter().flat_map(|&w| [lo + span * w.max(0.0), lo + span * (-w).max(0.0)]).collect())
                .collect(),
            WeightMapping::SingleWithReference { g_ref } => weights
                .iter()
                .map(|row| row.iter().map(|&w| (g_ref + 0.5 * span * w).clamp(lo, hi)).collect())
                .collect(),
        })
    }

    /// Closed-loop write-verify of every device toward `g_target`.
    pub fn program_weights(&mut self, g_target: &Matrix, tol: f64, max_pulses: usize, cfg: &WriteVerify) -> Result<ProgramReport> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::domain("tol", format!("must be finite and > 0, got {tol}")));
        }
        check_shape(g_target, self.rows, self.cols)?;
        for (i, row) in g_target.iter().enumerate() {
            for (j, &target) in row.iter().enumerate() {
                let (g_min, g_max) = self.device(i, j).window();
                if !(target >= g_min && target <= g_max) {
                    return Err(Error::TargetDomain { row: i, col: j, target, g_min, g_max });
                }
            }
        }

        let mut report = ProgramReport {
            pulses: vec![vec![0; self.cols]; self.rows],
            residuals: vec![vec![0.0; self.cols]; self.rows],
            converged: vec![vec![false; self.cols]; self.rows],
            iterations: 0,
        };
        let v_read = self.v_read;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let target = g_target[i][j];
                let device = self.device_mut(i, j);
                let starts = cfg.start_amplitudes(device.params())?;
                let outcome = write_verify(device, target, tol, max_pulses, cfg, starts, v_read)?;
                report.pulses[i][j] = outcome.pulses;
                report.residuals[i][j] = outcome.residual;
                report.converged[i][j] = outcome.converged;
                report.iterations = report.iterations.max(outcome.pulses);
            }
        }
        Ok(report)
    }

    /// Pre/post-synaptic coincidence update. Device (i, j) sees
    /// `v_post * post[j] - v_pre * pre[i]` for `scheme.width`.
    pub fn outer_product_update(&mut self, pre_active: &[bool], post_active: &[bool], scheme: &UpdateScheme) -> Result<()> {
        if pre_active.len() != self.rows {
            return Err(Error::Dimension { expected: self.rows, got: pre_active.len() });
        }
        if post_active.len() != self.cols {
            return Err(Error::Dimension { expected: self.cols, got: post_active.len() });
        }
        for (i, &pre) in pre_active.iter().enumerate() {
            for (j, &post) in post_active.iter().enumerate() {
                let v = scheme.device_voltage(pre, post);
                if v != 0.0 {
                    self.device_mut(i, j).apply_pulse(PulseSpec { amplitude: v, width: scheme.width })?;
                }
            }
        }
        Ok(())
    }
}

fn check_shape(m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::Dimension { expected: rows, got: m.len() });
    }
    match m.iter().find(|r| r.len() != cols) {
        Some(r) => Err(Error::Dimension { expected: cols, got: r.len() }),
        None => Ok(()),
    }
}

/// Staircase settings for write-verify programming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteVerify {
    /// Starting magnitude for depressing pulses; `None` uses the 1 % onset.
    pub start_pos: Option<f64>,
    /// Starting magnitude for potentiating pulses; `None` uses the 1 % onset.
    pub start_neg: Option<f64>,
    pub step: f64,
    pub width: f64,
    pub v_max: f64,
}

impl Default for WriteVerify {
    fn default() -> Self {
        Self { start_pos: None, start_neg: None, step: 0.05, width: SHORT_PULSE, v_max: 3.5 }
    }
}

impl WriteVerify {
    fn start_amplitudes(&self, params: &DeviceParams) -> Result<(f64, f64)> {
        let onset = |positive| switching_onset(params, positive, self.width, crate::pulse_lab::DEFAULT_STEP, 0.01);
        let pos = match self.start_pos {
            Some(v) => v,
            None => onset(true)?,
        };
        let neg = match self.start_neg {
            Some(v) => v,
            None => onset(false)?,
        };
        if !(pos.is_finite() && neg.is_finite() && self.step > 0.0) {
            return Err(Error::domain("start", "write-verify start amplitudes and step must be finite and positive"));
        }
        Ok((pos.min(self.v_max), neg.min(self.v_max)))
    }
}

struct VerifyOutcome {
    pulses: usize,
    residual: f64,
    converged: bool,
}

fn write_verify(
    device: &mut Device,
    target: f64,
    tol: f64,
    max_pulses: usize,
    cfg: &WriteVerify,
    (start_pos, start_neg): (f64, f64),
    v_read: f64,
) -> Result<VerifyOutcome> {
    let mut pulses = 0;
    let mut direction = 0.0;
    let mut amplitude = 0.0;
    loop {
        let g = device.read(v_read, 0.0)?.small_signal_conductance;
        let residual = (g - target) / target;
        if residual.abs() <= tol {
            return Ok(VerifyOutcome { pulses, residual, converged: true });
        }
        if pulses >= max_pulses {
            return Ok(VerifyOutcome { pulses, residual, converged: false });
        }
        // too conductive -> depress with a positive pulse
        let wanted = if residual > 0.0 { 1.0 } else { -1.0 };
        if wanted != direction {
            direction = wanted;
            amplitude = if wanted > 0.0 { start_pos } else { start_neg };
        } else {
            amplitude = (amplitude + cfg.step).min(cfg.v_max);
        }
        device.apply_pulse(PulseSpec::new(direction * amplitude, cfg.width)?)?;
        pulses += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramReport {
    pub pulses: Vec<Vec<usize>>,
    /// Signed relative error (G - target) / target after programming.
    pub residuals: Matrix,
    pub converged: Vec<Vec<bool>>,
    /// Pulse count of the slowest device.
    pub iterations: usize,
}

impl ProgramReport {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().flatten().all(|&c| c)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().flatten().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Row/column voltages for a coincidence update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateScheme {
    /// Applied on active rows.
    pub v_pre: f64,
    /// Applied on active columns.
    pub v_post: f64,
    pub width: f64,
}

impl UpdateScheme {
    /// Accepts the scheme only if a half-selected device moves by less than
    /// [`HALF_SELECT_LIMIT`] of its window from the most susceptible state
    /// while a fully selected one moves by more.
    pub fn new(v_pre: f64, v_post: f64, width: f64, params: &DeviceParams) -> Result<Self> {
        PulseSpec::new(v_pre, width)?;
        PulseSpec::new(v_post, width)?;
        if v_pre == 0.0 || v_post == 0.0 || v_pre.signum() == v_post.signum() {
            return Err(Error::HalfSelect(format!("v_pre ({v_pre} V) and v_post ({v_post} V) must be non-zero with opposite signs")));
        }
        let scheme = Self { v_pre, v_post, width };
        for (label, v) in [("row-only", scheme.device_voltage(true, false)), ("column-only", scheme.device_voltage(false, true))] {
            let moved = worst_case_shift(params, v, width)?;
            if moved >= HALF_SELECT_LIMIT {
                return Err(Error::HalfSelect(format!("{label} device at {v} V moves {moved:.2e} of the window")));
            }
        }
        let full = scheme.device_voltage(true, true);
        let moved = worst_case_shift(params, full, width)?;
        if moved < HALF_SELECT_LIMIT {
            return Err(Error::HalfSelect(format!("selected device at {full} V moves only {moved:.2e} of the window")));
        }
        Ok(scheme)
    }

    pub fn device_voltage(&self, pre: bool, post: bool) -> f64 {
        let post_v = if post { self.v_post } else { 0.0 };
        let pre_v = if pre { self.v_pre } else { 0.0 };
        post_v - pre_v
    }
}

fn worst_case_shift(params: &DeviceParams, v: f64, width: f64) -> Result<f64> {
    let mut probe = Device::new(*params, if v > 0.0 { 1.0 } else { 0.0 })?;
    Ok(probe.apply_pulse(PulseSpec::new(v, width)?)?.delta_s.abs())
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::BufWriter::new(file));
    for row in m {
        w.write_record(row.iter().map(|&x| fmt_sig17(x)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut m = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let parsed = row
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: line + 1,
                    message: format!("not a number: `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        m.push(parsed);
    }
    if let Some(first) = m.first() {
        check_shape(&m, m.len(), first.len())?;
    }
    Ok(m)
}
