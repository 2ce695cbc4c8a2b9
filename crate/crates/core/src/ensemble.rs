//! Binned population of ferroelectric domains.
//!
//! Each bin carries a pair of switching thresholds at the reference width
//! and the fraction of its domains polarized in the low-resistance
//! orientation. Thresholds are mid-quantiles of a logistic distribution, so
//! construction is deterministic and needs no sampling.

use crate::error::Result;
use crate::params::DeviceParams;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainEnsemble {
    pub(crate) v_pos: Vec<f64>,
    pub(crate) v_neg: Vec<f64>,
    pub(crate) weight: Vec<f64>,
    pub(crate) u: Vec<f64>,
}

/// Logistic quantile `mu + sigma * ln(q / (1 - q))`.
pub fn logistic_quantile(mu: f64, sigma: f64, q: f64) -> f64 {
    mu + sigma * (q / (1.0 - q)).ln()
}

impl DomainEnsemble {
    pub fn build(params: &DeviceParams, s_init: f64) -> Result<Self> {
        params.validate()?;
        if !(0.0..=1.0).contains(&s_init) {
            return Err(crate::Error::domain("s_init", format!("must lie in [0, 1], got {s_init}")));
        }
        let n = params.n_bins;
        let quantiles = (0..n).map(|k| (k as f64 + 0.5) / n as f64);
        let v_pos = quantiles.clone().map(|q| logistic_quantile(params.mu_pos, params.sigma_pos, q)).collect();
        let v_neg = quantiles.map(|q| logistic_quantile(params.mu_neg, params.sigma_neg, q)).collect();
        Ok(Self { v_pos, v_neg, weight: vec![1.0 / n as f64; n], u: vec![s_init; n] })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Polarization fraction S, the weighted share of domains in the LRS orientation.
    pub fn polarization(&self) -> f64 {
        self.weight.iter().zip(&self.u).map(|(w, u)| w * u).sum::<f64>().clamp(0.0, 1.0)
    }

    pub fn v_pos(&self) -> &[f64] {
        &self.v_pos
    }

    pub fn v_neg(&self) -> &[f64] {
        &self.v_neg
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn fractions(&self) -> &[f64] {
        &self.u
    }

    /// Sets every bin to the same fraction.
    pub fn fill(&mut self, s: f64) {
        self.u.iter_mut().for_each(|u| *u = s.clamp(0.0, 1.0));
    }
}

/// First-order switching time of a bin with threshold `v_c` at pulse magnitude
/// `v_abs`: coercive voltage drops by `b_slope` per decade of width.
#[inline]
pub(crate) fn switching_time(params: &DeviceParams, v_c: f64, v_abs: f64) -> f64 {
    params.t_ref * 10f64.powf((v_c - v_abs) / params.b_slope)
}

/// Survival factor exp(-width / tau) for one bin.
#[inline]
pub(crate) fn survival(params: &DeviceParams, v_c: f64, v_abs: f64, width: f64) -> f64 {
    (-width / switching_time(params, v_c, v_abs)).exp()
}

/// Switched share 1 - exp(-width / tau), accurate when it is tiny.
#[inline]
pub(crate) fn switched(params: &DeviceParams, v_c: f64, v_abs: f64, width: f64) -> f64 {
    -(-width / switching_time(params, v_c, v_abs)).exp_m1()
}

impl DomainEnsemble {
    /// Applies a rectangular pulse to every bin. Positive amplitudes drive bins
    /// toward the HRS orientation, negative ones toward the LRS orientation.
    pub(crate) fn switch(&mut self, params: &DeviceParams, amplitude: f64, width: f64) {
        if amplitude > 0.0 {
            for (u, &vc) in self.u.iter_mut().zip(&self.v_pos) {
                *u = (*u * survival(params, vc, amplitude, width)).clamp(0.0, 1.0);
            }
        } else if amplitude < 0.0 {
            let mag = -amplitude;
            for (u, &vc) in self.u.iter_mut().zip(&self.v_neg) {
                // written as an increment so rounding can never lower u
                *u = (*u + (1.0 - *u) * switched(params, vc, mag, width)).clamp(0.0, 1.0);
            }
        }
    }

    /// Result of `n` repetitions of (+amplitude, width) followed by
    /// (-amplitude, width), in closed form per bin.
    pub(crate) fn cycle_square_wave(&mut self, params: &DeviceParams, amplitude: f64, width: f64, n: u64) {
        if n == 0 || amplitude == 0.0 {
            return;
        }
        let mag = amplitude.abs();
        for ((u, &vp), &vn) in self.u.iter_mut().zip(&self.v_pos).zip(&self.v_neg) {
            let a = survival(params, vp, mag, width);
            let p = switched(params, vn, mag, width);
            let b = 1.0 - p;
            let ab = a * b;
            // u_{k+1} = (1 - b) + a b u_k
            let next = if ab >= 1.0 {
                *u
            } else {
                let fixed = p / (1.0 - ab);
                let decay = (n as f64 * ab.ln()).exp();
                fixed + decay * (*u - fixed)
            };
            *u = next.clamp(0.0, 1.0);
        }
    }
}
