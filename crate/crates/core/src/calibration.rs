//! Fitting parameter cards to measured anchors.
//!
//! Each anchor names a scalar the model can measure on itself (a switching
//! onset, a current density, an energy) together with a target and weight.
//! [`fit`] adjusts a chosen subset of card fields by derivative-free
//! coordinate descent: each sweep runs a golden-section line search along one
//! field at a time inside a relative bracket that shrinks whenever a sweep
//! stops paying off. Anchors with a `_max` suffix are ceilings and only
//! contribute when exceeded.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::device::{iv_current, Device, PulseSpec};
use crate::error::{Error, Result};
use crate::params::{DeviceParams, CARD_KEYS};
use crate::pulse_lab::{switching_onset, DEFAULT_STEP, SHORT_PULSE};

pub const MAX_SWEEPS: usize = 200;
pub const REL_TOL: f64 = 1e-4;
/// Share of the dynamic range that marks a switching onset.
pub const ONSET_THRESHOLD: f64 = 0.01;
/// Pulse width standing in for a DC measurement step, s.
pub const DC_WIDTH: f64 = 1.0;
/// Bias of the low-voltage current-density anchor, V.
pub const J_READ_BIAS: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// Positive amplitude at which a 20 ns staircase from LRS has switched 1 %.
    OnsetPos20ns,
    /// Negative amplitude magnitude at which a 20 ns staircase from HRS has switched 1 %.
    OnsetNeg20ns,
    /// Positive 1 % onset of a staircase of 1 s steps.
    VcDc,
    /// Share of the range switched by one (-1 V, 20 ns) pulse from HRS.
    FirstPulseFraction,
    /// LRS current density at 80 mV, A/cm².
    JRead,
    /// LRS current density at 1 V, A/cm².
    J1v,
    /// Energy of a (0.1 V, 1 μs) read on LRS, J.
    ReadEnergyMax,
    /// Energy of a (2.8 V, 20 ns) pulse on LRS, J.
    WriteEnergyMax,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::OnsetPos20ns,
        Quantity::OnsetNeg20ns,
        Quantity::VcDc,
        Quantity::FirstPulseFraction,
        Quantity::JRead,
        Quantity::J1v,
        Quantity::ReadEnergyMax,
        Quantity::WriteEnergyMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::OnsetPos20ns => "onset_pos_20ns",
            Quantity::OnsetNeg20ns => "onset_neg_20ns",
            Quantity::VcDc => "vc_dc",
            Quantity::FirstPulseFraction => "first_pulse_fraction",
            Quantity::JRead => "j_read",
            Quantity::J1v => "j_1v",
            Quantity::ReadEnergyMax => "read_energy_max",
            Quantity::WriteEnergyMax => "write_energy_max",
        }
    }

    pub fn is_ceiling(&self) -> bool {
        matches!(self, Quantity::ReadEnergyMax | Quantity::WriteEnergyMax)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL.into_iter().find(|q| q.as_str() == s).ok_or_else(|| Error::UnknownQuantity(s.to_string()))
    }
}

pub fn simulate_anchor(params: &DeviceParams, quantity: Quantity) -> Result<f64> {
    params.validate()?;
    let lrs = || Device::lrs(*params);
    Ok(match quantity {
        Quantity::OnsetPos20ns => switching_onset(params, true, SHORT_PULSE, DEFAULT_STEP, ONSET_THRESHOLD)?,
        Quantity::OnsetNeg20ns => switching_onset(params, false, SHORT_PULSE, DEFAULT_STEP, ONSET_THRESHOLD)?,
        Quantity::VcDc => switching_onset(params, true, DC_WIDTH, DEFAULT_STEP, ONSET_THRESHOLD)?,
        Quantity::FirstPulseFraction => {
            let mut d = Device::hrs(*params)?;
            d.apply_pulse(PulseSpec::new(-1.0, SHORT_PULSE)?)?.delta_s.abs()
        }
        Quantity::JRead => lrs()?.current(J_READ_BIAS) / params.area_cm2(),
        Quantity::J1v => lrs()?.current(1.0) / params.area_cm2(),
        Quantity::ReadEnergyMax => lrs()?.read(0.1, 1e-6)?.energy,
        Quantity::WriteEnergyMax => lrs()?.apply_pulse(PulseSpec::new(2.8, SHORT_PULSE)?)?.energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub quantity: Quantity,
    pub target: f64,
    pub weight: f64,
}

impl Anchor {
    /// Relative miss; ceilings only count when exceeded.
    pub fn residual(&self, simulated: f64) -> f64 {
        let miss = simulated - self.target;
        let miss = if self.quantity.is_ceiling() { miss.max(0.0) } else { miss };
        miss / self.target.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self> {
        let set = Self { anchors };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 3 {
            return Err(Error::domain("anchors", format!("need at least 3, got {}", self.anchors.len())));
        }
        for a in &self.anchors {
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::domain(a.quantity.as_str(), format!("weight must be finite and >= 0, got {}", a.weight)));
            }
            if !(a.target.is_finite() && a.target != 0.0) {
                return Err(Error::domain(a.quantity.as_str(), format!("target must be finite and non-zero, got {}", a.target)));
            }
        }
        Ok(())
    }

    /// Anchor values quoted for the reference device. The read-energy ceiling
    /// is listed with zero weight: no 20 μm card that meets `j_read` can meet
    /// it, so it is reported but not fitted.
    pub fn paper() -> Self {
        let a = |quantity, target, weight| Anchor { quantity, target, weight };
        Self {
            anchors: vec![
                a(Quantity::OnsetPos20ns, 0.8, 1.0),
                a(Quantity::OnsetNeg20ns, 0.4, 1.0),
                a(Quantity::VcDc, 0.15, 1.0),
                a(Quantity::FirstPulseFraction, 0.2, 1.0),
                a(Quantity::JRead, 0.01, 1.0),
                a(Quantity::J1v, 1.0, 1.0),
                a(Quantity::ReadEnergyMax, 1e-15, 0.0),
                a(Quantity::WriteEnergyMax, 1e-12, 1.0),
            ],
        }
    }

    /// Anchors measured on `params` itself, each with unit weight.
    pub fn measured_on(params: &DeviceParams, quantities: &[Quantity]) -> Result<Self> {
        let anchors = quantities
            .iter()
            .map(|&quantity| Ok(Anchor { quantity, target: simulate_anchor(params, quantity)?, weight: 1.0 }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(anchors)
    }

    /// CSV with header `quantity,target,weight`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn read_csv<R: std::io::Read>(input: R, origin: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().ne(["quantity", "target", "weight"]) {
            return Err(Error::Parse { path: origin.into(), line: 1, message: format!("expected header quantity,target,weight, got {headers:?}") });
        }
        let mut anchors = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let bad = |m: String| Error::Parse { path: origin.into(), line: line + 2, message: m };
            let quantity: Quantity = row[0].parse()?;
            let target = row[1].parse::<f64>().map_err(|_| bad(format!("bad target `{}`", &row[1])))?;
            let weight = row[2].parse::<f64>().map_err(|_| bad(format!("bad weight `{}`", &row[2])))?;
            anchors.push(Anchor { quantity, target, weight });
        }
        Self::new(anchors)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("quantity,target,weight\n");
        for a in &self.anchors {
            out.push_str(&format!("{},{:e},{:e}\n", a.quantity, a.target, a.weight));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorResidual {
    pub quantity: Quantity,
    pub target: f64,
    pub weight: f64,
    pub simulated: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: DeviceParams,
    pub residuals: Vec<AnchorResidual>,
    pub objective: f64,
    /// Objective after each completed sweep, starting with the initial value.
    pub history: Vec<f64>,
    pub sweeps: usize,
}

impl FitReport {
    pub fn residual(&self, quantity: Quantity) -> Option<&AnchorResidual> {
        self.residuals.iter().find(|r| r.quantity == quantity)
    }
}

pub fn residuals(anchors: &AnchorSet, params: &DeviceParams) -> Result<Vec<AnchorResidual>> {
    anchors
        .anchors
        .iter()
        .map(|a| {
            let simulated = simulate_anchor(params, a.quantity)?;
            Ok(AnchorResidual { quantity: a.quantity, target: a.target, weight: a.weight, simulated, residual: a.residual(simulated) })
        })
        .collect()
}

fn objective(anchors: &AnchorSet, params: &DeviceParams) -> f64 {
    if params.validate().is_err() {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for a in anchors.anchors.iter().filter(|a| a.weight > 0.0) {
        match simulate_anchor(params, a.quantity) {
            Ok(sim) => total += a.weight * a.residual(sim).powi(2),
            Err(_) => return f64::INFINITY,
        }
    }
    if total.is_nan() {
        f64::INFINITY
    } else {
        total
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` on `[lo, hi]` by golden-section search, returning the best
/// abscissa seen.
fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc <= fd {
            hi = d;
            (d, fd) = (c, fc);
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            (c, fc) = (d, fd);
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Fits the card fields named in `free` to `anchors`, starting from `initial`.
pub fn fit(anchors: &AnchorSet, free: &[&str], initial: &DeviceParams) -> Result<FitReport> {
    anchors.validate()?;
    initial.validate()?;
    for &key in free {
        if !CARD_KEYS.contains(&key) || key == "n_bins" {
            return Err(Error::key(key, "not a continuous card parameter"));
        }
    }

    let mut params = *initial;
    let mut best = objective(anchors, &params);
    if !best.is_finite() {
        let offender = residuals(anchors, &params)?
            .into_iter()
            .find(|r| r.weight > 0.0 && !r.residual.is_finite())
            .map(|r| (r.quantity.to_string(), r.simulated))
            .unwrap_or_else(|| ("<objective>".to_string(), best));
        return Err(Error::NonFiniteObjective { anchor: offender.0, value: offender.1 });
    }

    let mut history = vec![best];
    let mut bracket = 0.25;
    let mut sweeps = 0;
    while !free.is_empty() && sweeps < MAX_SWEEPS && best > 0.0 && bracket >= REL_TOL {
        let start = best;
        for &key in free {
            let x0 = params.get(key).expect("checked key");
            let half = bracket * if x0 != 0.0 { x0.abs() } else { 1.0 };
            let trial = |x: f64| {
                let mut p = params;
                p.set(key, x).expect("checked key");
                objective(anchors, &p)
            };
            let (x, fx) = golden_section(x0 - half, x0 + half, half * 1e-3, trial);
            if fx < best {
                params.set(key, x)?;
                best = fx;
            }
        }
        sweeps += 1;
        assert!(best <= start, "objective increased during a sweep");
        history.push(best);
        if start - best <= REL_TOL * start {
            bracket *= 0.25;
        }
    }

    params.validate()?;
    Ok(FitReport { residuals: residuals(anchors, &params)?, params, objective: best, history, sweeps })
}

/// Solves for `(v_nl, g_lrs)` such that the LRS device draws `j_read` A/cm²
/// at 80 mV and `j_1v` A/cm² at 1 V, keeping the card's area and `j_sat`.
pub fn solve_iv(params: &DeviceParams, j_read: f64, j_1v: f64) -> Result<(f64, f64)> {
    if !(j_read > 0.0 && j_1v > j_read * (1.0 / J_READ_BIAS)) {
        return Err(Error::domain("j_1v", "current densities must be positive and superlinear in bias"));
    }
    let area_cm2 = params.area_cm2();
    let i_read = j_read * area_cm2;
    let limit = params.j_sat * params.area;
    // undo the high-field limiter at the read point
    let raw_read = if limit.is_finite() {
        let r = i_read / limit;
        if r >= 1.0 {
            return Err(Error::domain("j_sat", "read current exceeds the saturation ceiling"));
        }
        i_read / (1.0 - r.powi(4)).powf(0.25)
    } else {
        i_read
    };
    let g_for = |v_nl: f64| raw_read / (v_nl * (J_READ_BIAS / v_nl).sinh());
    let ratio_gap = |v_nl: f64| {
        let mut p = *params;
        p.v_nl = v_nl;
        iv_current(&p, g_for(v_nl), 1.0) / i_read - j_1v / j_read
    };
    // the ratio falls monotonically as v_nl grows
    let (mut lo, mut hi) = (0.02, 20.0);
    if ratio_gap(lo) < 0.0 || ratio_gap(hi) > 0.0 {
        return Err(Error::domain("j_1v", "current-density ratio unreachable with this j_sat"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio_gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v_nl = 0.5 * (lo + hi);
    Ok((v_nl, g_for(v_nl)))
}

/// Card fields adjusted when fitting the switching kernel.
pub const KERNEL_FREE: [&str; 4] = ["mu_pos", "mu_neg", "sigma_neg", "b_slope"];

/// Produces the reference card from the paper anchors: the I-V shape is
/// solved directly, the switching kernel is fitted.
pub fn calibrate_reference(initial: &DeviceParams, anchors: &AnchorSet, on_off: f64) -> Result<FitReport> {
    let target = |q| anchors.anchors.iter().find(|a| a.quantity == q).map(|a| a.target);
    let mut start = *initial;
    if let (Some(j_read), Some(j_1v)) = (target(Quantity::JRead), target(Quantity::J1v)) {
        let (v_nl, g_lrs) = solve_iv(&start, j_read, j_1v)?;
        start.v_nl = v_nl;
        start.g_lrs = g_lrs;
        start.g_hrs = g_lrs / on_off;
    }
    fit(anchors, &KERNEL_FREE, &start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantity_names_round_trip() {
        for q in Quantity::ALL {
            assert_eq!(q.as_str().parse::<Quantity>().unwrap(), q);
        }
        assert!(matches!("onset_mid".parse::<Quantity>(), Err(Error::UnknownQuantity(_))));
    }

    #[test]
    fn pure_sinh_root_matches_bisection_oracle() {
        // independent oracle: bisection on sinh(1/v)/sinh(0.08/v) = 100
        let f = |v: f64| (1.0 / v).sinh() / (0.08 / v).sinh() - 100.0;
        let (mut lo, mut hi) = (0.05, 5.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if f(m) > 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - 0.235).abs() < 2e-3, "{oracle}");

        let mut p = DeviceParams::golden();
        p.j_sat = f64::INFINITY;
        let (v_nl, g) = solve_iv(&p, 0.01, 1.0).unwrap();
        assert!((v_nl - oracle).abs() < 1e-10);
        p.v_nl = v_nl;
        p.g_lrs = g;
        p.g_hrs = g / 3.0;
        let j = simulate_anchor(&p, Quantity::JRead).unwrap();
        assert!((j - 0.01).abs() < 1e-12);
    }

    #[test]
    fn first_pulse_fraction_is_a_fraction() {
        let f = simulate_anchor(&DeviceParams::golden(), Quantity::FirstPulseFraction).unwrap();
        assert!(f > 0.0 && f < 1.0);
    }

    #[test]
    fn onset_on_golden_card() {
        let v = simulate_anchor(&DeviceParams::golden(), Quantity::OnsetPos20ns).unwrap();
        assert!((v - 0.8).abs() <= 0.05, "{v}");
    }

    #[test]
    fn empty_free_set_returns_initial() {
        let p = DeviceParams::golden();
        let report = fit(&AnchorSet::paper(), &[], &p).unwrap();
        assert_eq!(report.params, p);
        assert_eq!(report.sweeps, 0);
        assert_eq!(report.residuals.len(), 8);
    }

    #[test]
    fn rejects_bad_free_keys_and_anchor_sets() {
        let p = DeviceParams::golden();
        assert!(fit(&AnchorSet::paper(), &["n_bins"], &p).is_err());
        assert!(fit(&AnchorSet::paper(), &["colour"], &p).is_err());
        let two = AnchorSet { anchors: AnchorSet::paper().anchors[..2].to_vec() };
        assert!(fit(&two, &["mu_pos"], &p).is_err());
    }

    #[test]
    fn non_finite_objective_names_anchor() {
        let mut p = DeviceParams::golden();
        // onset unreachable below 10 V
        p.mu_pos = 40.0;
        match fit(&AnchorSet::paper(), &["mu_pos"], &p) {
            Err(Error::NonFiniteObjective { anchor, .. }) => assert_eq!(anchor, "onset_pos_20ns"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn anchors_csv() {
        let text = AnchorSet::paper().to_csv_string();
        let back = AnchorSet::read_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, AnchorSet::paper());
        let err = AnchorSet::read_csv("quantity,target,weight\nbogus,1,1\nj_read,1,1\nj_1v,1,1\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::UnknownQuantity(_)));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(-3.0, 5.0, 1e-9, |x| (x - 1.25).powi(2) + 2.0);
        // a parabola is flat to rounding within ~sqrt(eps) of its minimum
        assert!((x - 1.25).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }
}
