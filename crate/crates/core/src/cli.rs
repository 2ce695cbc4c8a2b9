//! Batch experiment runner.
//!
//! A run reads one experiment config (flat `name = value` lines, SI units),
//! an optional parameter card, executes the experiment and writes CSV data
//! plus `summary.txt` into the output directory. The summary lists named
//! metrics and checks them against `expect_min.<metric>` /
//! `expect_max.<metric>` bounds declared in the config.

use std::path::{Path, PathBuf};

use clap::Parser;

use crate::calibration::{self, AnchorSet, KERNEL_FREE};
use crate::crossbar::{read_matrix_csv, write_matrix_csv, Crossbar, WeightMapping, WriteVerify};
use crate::device::{Device, PulseSpec};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::params::DeviceParams;
use crate::pulse_lab::{self, fmt_sig17, AmplitudeLoop, ResetProtocol};

#[derive(Debug, Clone, Parser)]
#[command(name = "ferrosim", about = "Run a ferroelectric memristor experiment from a config file")]
pub struct Args {
    /// Experiment config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parameter card; overrides `card` in the config. Defaults to the golden card.
    #[arg(long)]
    pub card: Option<PathBuf>,
}

pub const EXPERIMENTS: [&str; 8] = ["staircase", "width-train", "retention", "endurance", "merz", "mvm", "program", "calibrate"];

const COMMON_KEYS: [&str; 3] = ["experiment", "output_dir", "card"];

/// Exit code when the run completed but a declared expectation failed.
pub const EXIT_EXPECTATION: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub metric: String,
    pub is_min: bool,
    pub bound: f64,
    pub value: Option<f64>,
}

impl Check {
    pub fn passed(&self) -> bool {
        match self.value {
            Some(v) if self.is_min => v >= self.bound,
            Some(v) => v <= self.bound,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub experiment: String,
    pub metrics: Vec<(String, f64)>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

impl Summary {
    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("experiment = {}\n\n[metrics]\n", self.experiment);
        for (name, value) in &self.metrics {
            out.push_str(&format!("{name} = {}\n", fmt_sig17(*value)));
        }
        if !self.notes.is_empty() {
            out.push_str("\n[notes]\n");
            for note in &self.notes {
                out.push_str(&format!("{note}\n"));
            }
        }
        if !self.checks.is_empty() {
            out.push_str("\n[expectations]\n");
            for c in &self.checks {
                let op = if c.is_min { ">=" } else { "<=" };
                let value = c.value.map_or("missing".to_string(), fmt_sig17);
                let verdict = if c.passed() { "PASS" } else { "FAIL" };
                out.push_str(&format!("{verdict} {} {op} {} (got {value})\n", c.metric, fmt_sig17(c.bound)));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

struct Ctx<'a> {
    kv: &'a KvFile,
    base: PathBuf,
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.kv.get(key).map(|p| self.base.join(p)))
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.output(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

fn allowed_keys(experiment: &str) -> &'static [&'static str] {
    match experiment {
        "staircase" => &["widths", "v_max_pos", "v_max_neg", "step", "v_read"],
        "width-train" => &["amplitude", "widths", "width_start", "width_end", "n_widths", "n_pulses", "v_read"],
        "retention" => &["states", "times"],
        "endurance" => &["n_cycles", "amplitude", "frequency"],
        "merz" => &["widths", "v_max_pos", "v_max_neg", "step", "v_read"],
        "mvm" => &["rows", "cols", "s_init", "conductances", "v_in"],
        "program" => &["rows", "cols", "s_init", "targets", "target_fraction", "tol", "max_pulses", "step", "width"],
        "calibrate" => &["anchors", "free", "on_off", "initial_card", "solve_iv"],
        _ => &[],
    }
}

/// Loads the config, runs the experiment and writes all outputs.
pub fn run(args: &Args) -> Result<RunOutcome> {
    let kv = KvFile::load(&args.config)?;
    let experiment = kv.require("experiment")?.to_string();
    if !EXPERIMENTS.contains(&experiment.as_str()) {
        return Err(Error::key("experiment", format!("unknown experiment `{experiment}`; expected one of {}", EXPERIMENTS.join(", "))));
    }
    let allowed = allowed_keys(&experiment);
    for key in kv.keys() {
        let is_expect = key.starts_with("expect_min.") || key.starts_with("expect_max.");
        if !(is_expect || COMMON_KEYS.contains(&key) || allowed.contains(&key)) {
            return Err(Error::key(key, format!("not recognised for experiment `{experiment}`")));
        }
    }

    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&args.out, kv.get("output_dir")) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let card_path = args.card.clone().or_else(|| kv.get("card").map(|c| base.join(c)));
    let params = match &card_path {
        Some(p) => DeviceParams::load(p)?,
        None => DeviceParams::golden(),
    };

    let mut ctx = Ctx { kv: &kv, base, out: out.clone(), files: Vec::new() };
    let mut summary = Summary { experiment: experiment.clone(), ..Summary::default() };
    match experiment.as_str() {
        "staircase" => staircase(&mut ctx, &params, &mut summary)?,
        "width-train" => width_train(&mut ctx, &params, &mut summary)?,
        "retention" => retention(&mut ctx, &params, &mut summary)?,
        "endurance" => endurance(&mut ctx, &params, &mut summary)?,
        "merz" => merz(&mut ctx, &params, &mut summary)?,
        "mvm" => mvm(&mut ctx, &params, &mut summary)?,
        "program" => program(&mut ctx, &params, &mut summary)?,
        "calibrate" => calibrate(&mut ctx, &params, &mut summary)?,
        _ => unreachable!(),
    }

    for key in kv.keys() {
        let (is_min, metric) = match (key.strip_prefix("expect_min."), key.strip_prefix("expect_max.")) {
            (Some(m), _) => (true, m),
            (_, Some(m)) => (false, m),
            _ => continue,
        };
        let bound: f64 = kv.parsed(key)?.expect("key present");
        summary.checks.push(Check { metric: metric.to_string(), is_min, bound, value: summary.get(metric) });
    }
    ctx.write("summary.txt", &summary.render())?;
    Ok(RunOutcome { out_dir: out, files: ctx.files, summary })
}

fn extent(kv: &KvFile) -> Result<AmplitudeLoop> {
    let d = AmplitudeLoop::default();
    Ok(AmplitudeLoop {
        v_max_pos: kv.parsed_or("v_max_pos", d.v_max_pos)?,
        v_max_neg: kv.parsed_or("v_max_neg", d.v_max_neg)?,
        step: kv.parsed_or("step", d.step)?,
        v_read: kv.parsed_or("v_read", d.v_read)?,
    })
}

fn staircase(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let widths = ctx.kv.list("widths")?.unwrap_or_else(|| vec![pulse_lab::SHORT_PULSE]);
    let extent = extent(ctx.kv)?;
    let mut device = Device::lrs(*params)?;
    let traces = pulse_lab::run_amplitude_staircase(&mut device, &widths, &extent, &ResetProtocol::default())?;
    for (k, (trace, width)) in traces.iter().zip(&widths).enumerate() {
        trace.save_csv(&ctx.output(&format!("staircase_{k}.csv")))?;
        summary.metric(format!("width_{k}"), *width);
        for (positive, label) in [(true, "pos"), (false, "neg")] {
            let vc = trace
                .branch(positive)
                .ok_or(Error::InsufficientSwitching { span: 0.0, required: pulse_lab::MIN_BRANCH_SPAN })
                .and_then(|b| pulse_lab::extract_coercive(&b, params.on_off_ratio()));
            match vc {
                Ok(v) => summary.metric(format!("vc_{label}_{k}"), v),
                Err(e) => summary.notes.push(format!("width {k}: no {label} coercive voltage ({e})")),
            }
        }
    }
    Ok(())
}

fn width_train(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let kv = ctx.kv;
    let widths = match kv.list("widths")? {
        Some(w) => w,
        None => pulse_lab::log_spaced(
            kv.parsed_or("width_start", pulse_lab::SHORT_PULSE)?,
            kv.parsed_or("width_end", 2e-3)?,
            kv.parsed_or("n_widths", 60usize)?,
        ),
    };
    let amplitude = kv.parsed_or("amplitude", 1.0)?;
    let n_pulses = kv.parsed_or("n_pulses", 4 * widths.len())?;
    let v_read = kv.parsed_or("v_read", pulse_lab::DEFAULT_V_READ)?;
    let mut device = Device::lrs(*params)?;
    ResetProtocol::default().apply(&mut device)?;
    let trace = pulse_lab::run_width_train(&mut device, amplitude, &widths, n_pulses, v_read)?;
    trace.save_csv(&ctx.output("width_train.csv"))?;

    let period = 2 * widths.len();
    let r = trace.resistances();
    let (r_min, r_max) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    summary.metric("r_min", r_min);
    summary.metric("r_max", r_max);
    if let Some(first) = r.get(1) {
        let window = r_max - r_min;
        if window > 0.0 {
            summary.metric("first_pulse_range_fraction", (first - r[0]).abs() / window);
        }
    }
    if n_pulses >= 2 * period {
        let dev = (1..=period).map(|k| (r[k + period] / r[k] - 1.0).abs()).fold(0.0, f64::max);
        summary.metric("cycle_repeat_max_dev", dev);
    }
    Ok(())
}

fn retention(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let states = ctx.kv.list("states")?.unwrap_or_else(|| vec![1.0, 0.5, 0.0]);
    let week = 7.0 * 86400.0;
    let times = ctx.kv.list("times")?.unwrap_or_else(|| vec![0.0, 60.0, 600.0, 1800.0, 3600.0, week, 2.0 * week, 3.0 * week]);
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::key("times", "must be non-decreasing"));
    }
    let mut devices = states.iter().map(|&s| Device::new(*params, s)).collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut clock = 0.0;
    for &t in &times {
        let mut row = vec![t];
        for d in devices.iter_mut() {
            d.retention_evolve(t - clock)?;
            row.push(d.read(pulse_lab::DEFAULT_V_READ * 0.8, 0.0)?.chord_resistance);
        }
        clock = t;
        rows.push(row);
    }
    let mut csv = String::from("time_s");
    for k in 0..states.len() {
        csv.push_str(&format!(",resistance_{k}_ohm"));
    }
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.iter().map(|&x| fmt_sig17(x)).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    ctx.write("retention.csv", &csv)?;

    let dlog = |row: &Vec<f64>| -> Vec<f64> { row[1..].iter().zip(&rows[0][1..]).map(|(r, r0)| (r / r0).log10()).collect() };
    if let Some(row) = rows.iter().find(|r| r[0] >= 600.0) {
        let d = dlog(row);
        let spread = d.iter().copied().fold(f64::NEG_INFINITY, f64::max) - d.iter().copied().fold(f64::INFINITY, f64::min);
        summary.metric("relax_dlog_r", d[0]);
        summary.metric("relax_dlog_spread", spread);
    }
    if let Some(anchor) = rows.iter().find(|r| r[0] >= week) {
        let dev = rows
            .iter()
            .filter(|r| r[0] > anchor[0])
            .flat_map(|r| r[1..].iter().zip(&anchor[1..]).map(|(a, b)| (a / b - 1.0).abs()))
            .fold(0.0, f64::max);
        summary.metric("late_stability_max_dev", dev);
    }
    let order = |row: &Vec<f64>| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..states.len()).collect();
        idx.sort_by(|&a, &b| row[a + 1].total_cmp(&row[b + 1]));
        idx
    };
    let preserved = rows.iter().all(|r| order(r) == order(&rows[0]));
    summary.metric("ordering_preserved", if preserved { 1.0 } else { 0.0 });
    Ok(())
}

fn endurance(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let n_total: f64 = ctx.kv.parsed_or("n_cycles", 1e8)?;
    if !(n_total.is_finite() && n_total >= 0.0 && n_total.fract() == 0.0) {
        return Err(Error::key("n_cycles", format!("must be a non-negative integer, got {n_total}")));
    }
    let n_total = n_total as u64;
    let amplitude = ctx.kv.parsed_or("amplitude", 1.0)?;
    let frequency = ctx.kv.parsed_or("frequency", 1e5)?;
    let set_hrs = PulseSpec::new(3.0, 1e-3)?;
    let set_lrs = PulseSpec::new(-3.0, 1e-3)?;
    let v_read = pulse_lab::DEFAULT_V_READ;

    let mut device = Device::lrs(*params)?;
    let mut done = 0u64;
    let mut csv = String::from("cycles,resistance_hrs_ohm,resistance_lrs_ohm,on_off\n");
    let mut first = None;
    let mut last = (0.0, 0.0);
    let mut checkpoints = vec![0u64];
    let mut c = 1u64;
    while c < n_total {
        checkpoints.push(c);
        c = c.saturating_mul(10);
    }
    if n_total > 0 {
        checkpoints.push(n_total);
    }
    for cp in checkpoints {
        device.endurance_cycle(cp - done, amplitude, frequency)?;
        done = cp;
        device.apply_pulse(set_hrs)?;
        let r_hrs = device.read(v_read, 0.0)?.chord_resistance;
        device.apply_pulse(set_lrs)?;
        let r_lrs = device.read(v_read, 0.0)?.chord_resistance;
        csv.push_str(&format!("{cp},{},{},{}\n", fmt_sig17(r_hrs), fmt_sig17(r_lrs), fmt_sig17(r_hrs / r_lrs)));
        first.get_or_insert((r_hrs, r_lrs));
        last = (r_hrs, r_lrs);
    }
    ctx.write("endurance.csv", &csv)?;
    let (h0, l0) = first.expect("at least one checkpoint");
    let ratio0 = params.on_off_ratio();
    let ratio = device.on_off_ratio();
    summary.metric("cycles", device.cycles() as f64);
    summary.metric("on_off_ratio", ratio);
    summary.metric("on_off_rel_change", (ratio / ratio0 - 1.0).abs());
    summary.metric("on_off_measured_initial", h0 / l0);
    summary.metric("on_off_measured_final", last.0 / last.1);
    summary.metric("hrs_rel_change", last.0 / h0 - 1.0);
    summary.metric("lrs_rel_change", last.1 / l0 - 1.0);
    if ratio.to_bits() == ratio0.to_bits() {
        summary.notes.push("On/Off ratio unchanged".to_string());
    }
    Ok(())
}

fn merz(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let widths = ctx.kv.list("widths")?.unwrap_or_else(|| vec![2e-8, 2e-6, 2e-4, 2e-2, 2.0]);
    let extent = extent(ctx.kv)?;
    let mut device = Device::lrs(*params)?;
    let sweep = pulse_lab::coercive_vs_width(&mut device, &widths, &extent, &ResetProtocol::default())?;
    let mut csv = String::from("t_write_s,vc_pos_V,vc_neg_V\n");
    for ((t, p), n) in sweep.widths.iter().zip(&sweep.positive).zip(&sweep.negative) {
        csv.push_str(&format!("{},{},{}\n", fmt_sig17(*t), fmt_sig17(*p), fmt_sig17(*n)));
    }
    ctx.write("merz.csv", &csv)?;
    let (pos, neg) = sweep.fits()?;
    for (label, fit) in [("pos", pos), ("neg", neg)] {
        summary.metric(format!("slope_{label}"), fit.slope);
        summary.metric(format!("intercept_{label}"), fit.intercept);
        summary.metric(format!("r_squared_{label}"), fit.r_squared);
        summary.metric(format!("normalized_slope_{label}"), fit.normalized(params.t_ref).slope);
    }
    Ok(())
}

fn array_from(ctx: &Ctx, params: &DeviceParams) -> Result<Crossbar> {
    let kv = ctx.kv;
    if let Some(path) = ctx.path("conductances")? {
        let g = read_matrix_csv(&path)?;
        let cols = g.first().map_or(0, Vec::len);
        return Crossbar::from_conductances(*params, &g, default_mapping(params, cols));
    }
    let rows = kv.parsed_or("rows", 4usize)?;
    let cols = kv.parsed_or("cols", 4usize)?;
    let s_init = kv.parsed_or("s_init", 0.5)?;
    Crossbar::new(rows, cols, *params, s_init, default_mapping(params, cols))
}

fn default_mapping(params: &DeviceParams, cols: usize) -> WeightMapping {
    if cols.is_multiple_of(2) {
        WeightMapping::DifferentialPair
    } else {
        WeightMapping::SingleWithReference { g_ref: 0.5 * (params.g_lrs + params.g_hrs) }
    }
}

fn mvm(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let xbar = array_from(ctx, params)?;
    let v_in = ctx.kv.list("v_in")?.unwrap_or_else(|| vec![0.05; xbar.rows()]);
    let currents = xbar.mvm(&v_in).map_err(|e| match e {
        Error::Dimension { expected, got } => Error::key("v_in", format!("expected {expected} entries, got {got}")),
        Error::ReadDisturb { v_read, guard } => Error::key("v_in", format!("{v_read} V exceeds the read guard {guard} V")),
        other => other,
    })?;
    let mut csv = String::from("column,current_A\n");
    for (j, i) in currents.iter().enumerate() {
        csv.push_str(&format!("{j},{}\n", fmt_sig17(*i)));
    }
    ctx.write("mvm.csv", &csv)?;
    write_matrix_csv(&ctx.output("conductances.csv"), &xbar.conductances())?;
    summary.metric("total_current", currents.iter().sum());
    summary.metric("max_current", currents.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    Ok(())
}

fn program(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let kv = ctx.kv;
    let rows = kv.parsed_or("rows", 4usize)?;
    let cols = kv.parsed_or("cols", 4usize)?;
    let mut xbar = Crossbar::new(rows, cols, *params, kv.parsed_or("s_init", 0.0)?, default_mapping(params, cols))?;
    let targets = match ctx.path("targets")? {
        Some(p) => read_matrix_csv(&p)?,
        None => {
            let f: f64 = kv.parsed_or("target_fraction", 0.5)?;
            vec![vec![params.g_hrs + f * (params.g_lrs - params.g_hrs); cols]; rows]
        }
    };
    let d = WriteVerify::default();
    let cfg = WriteVerify { step: kv.parsed_or("step", d.step)?, width: kv.parsed_or("width", d.width)?, ..d };
    let report = xbar.program_weights(&targets, kv.parsed_or("tol", 0.05)?, kv.parsed_or("max_pulses", 200usize)?, &cfg)?;
    write_matrix_csv(&ctx.output("programmed_conductances.csv"), &xbar.conductances())?;
    let mut csv = String::from("row,col,pulses,residual,converged\n");
    for i in 0..rows {
        for j in 0..cols {
            csv.push_str(&format!("{i},{j},{},{},{}\n", report.pulses[i][j], fmt_sig17(report.residuals[i][j]), report.converged[i][j]));
        }
    }
    ctx.write("program_report.csv", &csv)?;
    let converged = report.converged.iter().flatten().filter(|&&c| c).count();
    summary.metric("max_abs_residual", report.max_abs_residual());
    summary.metric("converged_fraction", converged as f64 / (rows * cols) as f64);
    summary.metric("iterations", report.iterations as f64);
    Ok(())
}

fn calibrate(ctx: &mut Ctx, params: &DeviceParams, summary: &mut Summary) -> Result<()> {
    let kv = ctx.kv;
    let anchors = match ctx.path("anchors")? {
        Some(p) => AnchorSet::load_csv(&p)?,
        None => AnchorSet::paper(),
    };
    let initial = match ctx.path("initial_card")? {
        Some(p) => DeviceParams::load(&p)?,
        None => *params,
    };
    let free: Vec<String> = match kv.get("free") {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => KERNEL_FREE.iter().map(|s| s.to_string()).collect(),
    };
    let free_refs: Vec<&str> = free.iter().map(String::as_str).collect();
    let solve_iv: bool = kv.parsed_or("solve_iv", true)?;
    let report = if solve_iv {
        let on_off = kv.parsed_or("on_off", initial.on_off_ratio())?;
        let mut start = initial;
        let target = |q| anchors.anchors.iter().find(|a| a.quantity == q).map(|a| a.target);
        if let (Some(jr), Some(j1)) = (target(calibration::Quantity::JRead), target(calibration::Quantity::J1v)) {
            let (v_nl, g_lrs) = calibration::solve_iv(&start, jr, j1)?;
            start.v_nl = v_nl;
            start.g_lrs = g_lrs;
            start.g_hrs = g_lrs / on_off;
        }
        calibration::fit(&anchors, &free_refs, &start)?
    } else {
        calibration::fit(&anchors, &free_refs, &initial)?
    };
    let card = ctx.output("fitted.card");
    report.params.save(&card)?;
    let mut csv = String::from("quantity,target,weight,simulated,residual\n");
    for r in &report.residuals {
        csv.push_str(&format!("{},{},{},{},{}\n", r.quantity, fmt_sig17(r.target), fmt_sig17(r.weight), fmt_sig17(r.simulated), fmt_sig17(r.residual)));
    }
    ctx.write("residuals.csv", &csv)?;
    summary.metric("objective", report.objective);
    summary.metric("sweeps", report.sweeps as f64);
    let worst = report.residuals.iter().filter(|r| r.weight > 0.0).fold(0.0, |m: f64, r| m.max(r.residual.abs()));
    summary.metric("max_weighted_residual", worst);
    for r in &report.residuals {
        summary.metric(format!("residual.{}", r.quantity), r.residual);
    }
    Ok(())
}
