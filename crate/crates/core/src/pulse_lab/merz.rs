//! Coercive-voltage extraction and the log-width regression.

use crate::error::{Error, Result};

use super::trace::ExperimentTrace;

/// Minimum share of the log-resistance window a branch must cover.
pub const MIN_BRANCH_SPAN: f64 = 0.8;

/// Amplitude magnitude at which log10(R) crosses the midpoint between the
/// branch's extremes, linearly interpolated between samples.
///
/// `on_off_ratio` sets the full dynamic range the branch span is compared
/// against. Only log-resistance differences enter, so the result does not
/// change when all resistances are scaled by a common factor.
pub fn extract_coercive(branch: &ExperimentTrace, on_off_ratio: f64) -> Result<f64> {
    if !(on_off_ratio.is_finite() && on_off_ratio > 1.0) {
        return Err(Error::domain("on_off_ratio", format!("must be finite and > 1, got {on_off_ratio}")));
    }
    let x: Vec<f64> = branch.records.iter().map(|r| r.amplitude.abs()).collect();
    let y: Vec<f64> = branch.records.iter().map(|r| r.resistance.log10()).collect();
    if y.len() < 2 {
        return Err(Error::InsufficientSwitching { span: 0.0, required: MIN_BRANCH_SPAN });
    }
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let span = (hi - lo) / on_off_ratio.log10();
    if !(span >= MIN_BRANCH_SPAN) {
        return Err(Error::InsufficientSwitching { span, required: MIN_BRANCH_SPAN });
    }

    let rising = y[y.len() - 1] >= y[0];
    // rounding in the polarization sum may leave sub-ulp wiggles
    let slack = 1e-9 * (hi - lo);
    let monotone = y.windows(2).all(|w| if rising { w[1] - w[0] >= -slack } else { w[0] - w[1] >= -slack });
    if !monotone {
        return Err(Error::NonMonotoneBranch);
    }

    let mid = 0.5 * (hi + lo);
    for k in 1..y.len() {
        let (a, b) = (y[k - 1] - mid, y[k] - mid);
        if a == 0.0 {
            return Ok(x[k - 1]);
        }
        if a * b <= 0.0 {
            return Ok(x[k - 1] + (x[k] - x[k - 1]) * a / (a - b));
        }
    }
    unreachable!("midpoint lies between the extremes of a monotone sequence")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MerzFit {
    /// V per decade of pulse width.
    pub slope: f64,
    /// Coercive voltage extrapolated to a 1 s pulse.
    pub intercept: f64,
    pub r_squared: f64,
}

impl MerzFit {
    pub fn predict(&self, width: f64) -> f64 {
        self.intercept + self.slope * width.log10()
    }

    /// Same line expressed relative to its value at `t_norm`.
    pub fn normalized(&self, t_norm: f64) -> MerzFit {
        let scale = self.predict(t_norm);
        MerzFit { slope: self.slope / scale, intercept: self.intercept / scale, r_squared: self.r_squared }
    }
}

/// Ordinary least squares of coercive voltage against log10(width).
pub fn merz_fit(pairs: &[(f64, f64)]) -> Result<MerzFit> {
    for &(t, v) in pairs {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::domain("t_write", format!("must be finite and > 0, got {t}")));
        }
        if !v.is_finite() {
            return Err(Error::domain("v_c", format!("must be finite, got {v}")));
        }
    }
    let mut widths: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    widths.sort_by(f64::total_cmp);
    widths.dedup();
    if widths.len() < 3 {
        return Err(Error::Fit { required: 3, got: widths.len() });
    }

    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, &(_, y)) in xs.iter().zip(pairs) {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs.iter().zip(pairs).map(|(x, &(_, y))| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(MerzFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse_lab::trace::TraceRecord;

    fn trace(points: &[(f64, f64)]) -> ExperimentTrace {
        ExperimentTrace {
            records: points
                .iter()
                .enumerate()
                .map(|(index, &(amplitude, resistance))| TraceRecord { index, amplitude, width: 2e-8, resistance, energy: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn ideal_step_midpoint() {
        let t = trace(&[(0.0, 1.0), (0.6, 1.0), (1.2, 1.0), (1.4, 3.0), (2.0, 3.0)]);
        assert!((extract_coercive(&t, 3.0).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn falling_branch_uses_magnitude() {
        let t = trace(&[(0.0, 3.0), (-0.5, 3.0), (-0.7, 1.0)]);
        assert!((extract_coercive(&t, 3.0).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn insufficient_span() {
        let t = trace(&[(0.0, 1.0), (1.0, 1.5), (2.0, 2.0)]);
        match extract_coercive(&t, 3.0) {
            Err(Error::InsufficientSwitching { span, .. }) => assert!(span < 0.8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_branch() {
        let t = trace(&[(0.0, 1.0), (1.0, 3.0), (2.0, 1.5), (3.0, 3.0)]);
        assert!(matches!(extract_coercive(&t, 3.0), Err(Error::NonMonotoneBranch)));
    }

    #[test]
    fn synthetic_merz_line() {
        let pairs: Vec<(f64, f64)> = [2e-8, 2e-6, 2e-4, 2e-2, 2.0]
            .iter()
            .map(|&t: &f64| (t, 0.8 - 0.084 * (t / 2e-8).log10()))
            .collect();
        let fit = merz_fit(&pairs).unwrap();
        assert!((fit.slope + 0.084).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.predict(2e-8) - 0.8).abs() < 1e-9);
        let norm = fit.normalized(2e-8);
        assert!((norm.predict(2e-8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_collinear_points() {
        let fit = merz_fit(&[(1e-3, 2.0), (1e-2, 1.5), (1e-1, 1.0)]).unwrap();
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(merz_fit(&[(1e-3, 2.0), (1e-2, 1.5)]), Err(Error::Fit { got: 2, .. })));
        assert!(matches!(merz_fit(&[(1e-3, 2.0), (1e-3, 1.9), (1e-2, 1.5)]), Err(Error::Fit { got: 2, .. })));
        assert!(merz_fit(&[(0.0, 2.0), (1e-2, 1.5), (1.0, 1.0)]).is_err());
    }
}
