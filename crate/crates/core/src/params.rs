//! Device parameter card.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{fmt_exact, KvFile};

/// Two-term log-resistance drift after programming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionParams {
    /// Fast relaxation step in log10(R), positive means resistance rises.
    pub a_relax: f64,
    pub tau_relax: f64,
    /// Slow drift step in log10(R), positive means resistance falls.
    pub a_drift: f64,
    pub tau_drift: f64,
}

/// All calibratable parameters of one device. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    /// Electrode area, m².
    pub area: f64,
    /// Ferroelectric layer thickness, m.
    pub thickness_fe: f64,
    /// Small-signal conductance, fully potentiated.
    pub g_lrs: f64,
    /// Small-signal conductance, fully depressed.
    pub g_hrs: f64,
    /// Voltage scale of the sinh I-V shape.
    pub v_nl: f64,
    /// High-field current-density ceiling, A/m². `inf` disables it.
    pub j_sat: f64,
    /// Median coercive voltage at `t_ref`, positive (depressing) polarity.
    pub mu_pos: f64,
    /// Median coercive voltage magnitude at `t_ref`, negative (potentiating) polarity.
    pub mu_neg: f64,
    pub sigma_pos: f64,
    pub sigma_neg: f64,
    /// Coercive-voltage shift per decade of pulse width, V/decade.
    pub b_slope: f64,
    pub t_ref: f64,
    pub n_bins: usize,
    /// Largest |V| accepted by side-effect-free reads.
    pub read_guard: f64,
    pub retention: RetentionParams,
    /// Fractional conductance change per decade of cycles.
    pub fatigue_kappa: f64,
}

/// Diameter of the reference device used for calibration, m.
pub const REFERENCE_DIAMETER: f64 = 20e-6;

/// Key names of the parameter card, in rendering order.
pub const CARD_KEYS: [&str; 19] = [
    "area",
    "thickness_fe",
    "g_lrs",
    "g_hrs",
    "v_nl",
    "j_sat",
    "mu_pos",
    "mu_neg",
    "sigma_pos",
    "sigma_neg",
    "b_slope",
    "t_ref",
    "n_bins",
    "read_guard",
    "a_relax",
    "tau_relax",
    "a_drift",
    "tau_drift",
    "fatigue_kappa",
];

pub fn area_from_diameter(diameter: f64) -> f64 {
    PI * 0.25 * diameter * diameter
}

impl DeviceParams {
    /// The shipped calibrated card for a 20 μm device (`cards/golden.card`).
    pub fn golden() -> Self {
        Self {
            area: area_from_diameter(REFERENCE_DIAMETER),
            thickness_fe: 2.7e-9,
            g_lrs: 3.852550249180508e-7,
            g_hrs: 1.2841834163935026e-7,
            v_nl: 2.356324051113327e-1,
            j_sat: 2.5e4,
            mu_pos: 1.7709353202273415,
            mu_neg: 1.274897971476655,
            sigma_pos: 0.2,
            sigma_neg: 1.8012692375876205e-1,
            b_slope: 8.566179575434563e-2,
            t_ref: 2e-8,
            n_bins: 64,
            read_guard: 0.3,
            retention: RetentionParams { a_relax: 0.05, tau_relax: 100.0, a_drift: 0.1, tau_drift: 1.728e5 },
            fatigue_kappa: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("area", self.area),
            ("thickness_fe", self.thickness_fe),
            ("g_hrs", self.g_hrs),
            ("v_nl", self.v_nl),
            ("mu_pos", self.mu_pos),
            ("mu_neg", self.mu_neg),
            ("sigma_pos", self.sigma_pos),
            ("sigma_neg", self.sigma_neg),
            ("b_slope", self.b_slope),
            ("t_ref", self.t_ref),
            ("read_guard", self.read_guard),
            ("tau_relax", self.retention.tau_relax),
            ("tau_drift", self.retention.tau_drift),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(name, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.g_lrs.is_finite() && self.g_lrs > self.g_hrs) {
            return Err(Error::domain("g_lrs", format!("must be finite and exceed g_hrs ({}), got {}", self.g_hrs, self.g_lrs)));
        }
        if self.j_sat.is_nan() || self.j_sat <= 0.0 {
            return Err(Error::domain("j_sat", format!("must be > 0 (inf disables), got {}", self.j_sat)));
        }
        if self.n_bins < 2 {
            return Err(Error::domain("n_bins", format!("must be >= 2, got {}", self.n_bins)));
        }
        for (name, value) in [("a_relax", self.retention.a_relax), ("a_drift", self.retention.a_drift)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::domain(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        if !(self.fatigue_kappa.is_finite() && self.fatigue_kappa > -1.0) {
            return Err(Error::domain("fatigue_kappa", format!("must be finite and > -1, got {}", self.fatigue_kappa)));
        }
        Ok(())
    }

    /// Same stack at another diameter. Conductances scale with area so the
    /// current density, and every field-driven quantity, is unchanged.
    pub fn with_diameter(mut self, diameter: f64) -> Self {
        let area = area_from_diameter(diameter);
        let scale = area / self.area;
        self.g_lrs *= scale;
        self.g_hrs *= scale;
        self.area = area;
        self
    }

    pub fn diameter(&self) -> f64 {
        (4.0 * self.area / PI).sqrt()
    }

    pub fn area_cm2(&self) -> f64 {
        self.area * 1e4
    }

    pub fn on_off_ratio(&self) -> f64 {
        self.g_lrs / self.g_hrs
    }

    /// Median coercive fields at `t_ref`, V/m, for (positive, negative) polarity.
    pub fn coercive_fields(&self) -> (f64, f64) {
        (self.mu_pos / self.thickness_fe, self.mu_neg / self.thickness_fe)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let r = &self.retention;
        Some(match key {
            "area" => self.area,
            "thickness_fe" => self.thickness_fe,
            "g_lrs" => self.g_lrs,
            "g_hrs" => self.g_hrs,
            "v_nl" => self.v_nl,
            "j_sat" => self.j_sat,
            "mu_pos" => self.mu_pos,
            "mu_neg" => self.mu_neg,
            "sigma_pos" => self.sigma_pos,
            "sigma_neg" => self.sigma_neg,
            "b_slope" => self.b_slope,
            "t_ref" => self.t_ref,
            "n_bins" => self.n_bins as f64,
            "read_guard" => self.read_guard,
            "a_relax" => r.a_relax,
            "tau_relax" => r.tau_relax,
            "a_drift" => r.a_drift,
            "tau_drift" => r.tau_drift,
            "fatigue_kappa" => self.fatigue_kappa,
            _ => return None,
        })
    }

    /// Sets a scalar field by card key. `n_bins` must be integral.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "area" => &mut self.area,
            "thickness_fe" => &mut self.thickness_fe,
            "g_lrs" => &mut self.g_lrs,
            "g_hrs" => &mut self.g_hrs,
            "v_nl" => &mut self.v_nl,
            "j_sat" => &mut self.j_sat,
            "mu_pos" => &mut self.mu_pos,
            "mu_neg" => &mut self.mu_neg,
            "sigma_pos" => &mut self.sigma_pos,
            "sigma_neg" => &mut self.sigma_neg,
            "b_slope" => &mut self.b_slope,
            "t_ref" => &mut self.t_ref,
            "read_guard" => &mut self.read_guard,
            "a_relax" => &mut self.retention.a_relax,
            "tau_relax" => &mut self.retention.tau_relax,
            "a_drift" => &mut self.retention.a_drift,
            "tau_drift" => &mut self.retention.tau_drift,
            "fatigue_kappa" => &mut self.fatigue_kappa,
            "n_bins" => {
                if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
                    return Err(Error::key(key, format!("must be a non-negative integer, got {value}")));
                }
                self.n_bins = value as usize;
                return Ok(());
            }
            _ => return Err(Error::key(key, "unknown parameter")),
        };
        *slot = value;
        Ok(())
    }

    /// Builds a card from key-value entries layered over the golden card.
    /// Unknown keys are rejected, as are cards that fail validation.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut params = Self::golden();
        for key in kv.keys() {
            if !CARD_KEYS.contains(&key) {
                return Err(Error::key(key, "unknown parameter"));
            }
            let raw = kv.require(key)?;
            if key == "n_bins" {
                let n: usize = raw.parse().map_err(|e| Error::key(key, format!("cannot parse `{raw}`: {e}")))?;
                params.n_bins = n;
            } else {
                let value: f64 = raw.parse().map_err(|e| Error::key(key, format!("cannot parse `{raw}`: {e}")))?;
                params.set(key, value)?;
            }
        }
        params.validate()?;
        Ok(params)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        for key in CARD_KEYS {
            let value = if key == "n_bins" { self.n_bins.to_string() } else { fmt_exact(self.get(key).unwrap()) };
            kv.insert(key, value);
        }
        kv
    }

    pub fn parse_card(text: &str, origin: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(text, origin)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::load(path)?)
    }

    pub fn render_card(&self) -> String {
        let mut out = String::from("# ferroelectric memristor parameter card, SI units\n");
        out.push_str(&self.to_kv().render());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render_card()).map_err(|e| Error::io(path, e))
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::golden()
    }
}
