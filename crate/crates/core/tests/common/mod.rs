//! Brute-force reference implementations, written without touching the
//! library's numerics, used to cross-check it.

#![allow(dead_code)]

use ferrosim::DeviceParams;

/// Per-domain state machine: every bin tracked by hand.
#[derive(Debug, Clone)]
pub struct OracleDevice {
    pub p: DeviceParams,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    pub u: Vec<f64>,
}

impl OracleDevice {
    pub fn new(p: DeviceParams, s: f64) -> Self {
        let n = p.n_bins;
        let mut up = Vec::new();
        let mut down = Vec::new();
        for k in 0..n {
            let q = (2 * k + 1) as f64 / (2 * n) as f64;
            up.push(p.mu_pos - p.sigma_pos * ((1.0 - q) / q).ln());
            down.push(p.mu_neg - p.sigma_neg * ((1.0 - q) / q).ln());
        }
        Self { p, up, down, u: vec![s; n] }
    }

    fn rate(&self, vc: f64, v: f64) -> f64 {
        let tau = self.p.t_ref * (std::f64::consts::LN_10 * (vc - v) / self.p.b_slope).exp();
        1.0 / tau
    }

    pub fn pulse(&mut self, amplitude: f64, width: f64) {
        for k in 0..self.u.len() {
            if amplitude > 0.0 {
                let keep = (-width * self.rate(self.up[k], amplitude)).exp();
                self.u[k] *= keep;
            } else if amplitude < 0.0 {
                let keep = (-width * self.rate(self.down[k], -amplitude)).exp();
                self.u[k] = 1.0 - (1.0 - self.u[k]) * keep;
            }
        }
    }

    pub fn s(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.u.len() as f64
    }

    pub fn conductance(&self) -> f64 {
        let s = self.s();
        self.p.g_hrs * (1.0 - s) + self.p.g_lrs * s
    }
}

/// Static I-V law: sinh conduction with a smooth fourth-power current ceiling.
pub fn oracle_current(p: &DeviceParams, g: f64, v: f64) -> f64 {
    let i0 = g * p.v_nl * (v / p.v_nl).sinh();
    let ceiling = p.j_sat * p.area;
    i0 / (1.0 + (i0 / ceiling).powi(4)).powf(0.25)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
