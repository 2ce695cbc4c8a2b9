//! Acceptance run: every criterion is evaluated, one verdict line each, and
//! the process fails if any criterion fails.

mod common;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{oracle_current, rel_diff, OracleDevice};
use ferrosim::calibration::{self, AnchorSet, Quantity, KERNEL_FREE};
use ferrosim::crossbar::WeightMapping;
use ferrosim::device::iv_current;
use ferrosim::pulse_lab::{self, AmplitudeLoop, ResetProtocol, StaircaseSpec};
use ferrosim::{Crossbar, Device, DeviceParams, PulseSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Verdict = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn golden() -> DeviceParams {
    DeviceParams::golden()
}

fn read_calibration() -> Verdict {
    let start = Instant::now();
    let d = Device::lrs(golden()).unwrap();
    let area_cm2 = d.params().area_cm2();
    let j_read = d.current(0.08) / area_cm2;
    let j_1v = d.current(1.0) / area_cm2;
    let elapsed = start.elapsed();
    ensure!((d.params().diameter() - 20e-6).abs() < 1e-12, "golden diameter is {}", d.params().diameter());
    ensure!(rel_diff(j_read, 0.01) <= 0.05, "J(80 mV) = {j_read:.4e} A/cm2");
    ensure!(rel_diff(j_1v, 1.0) <= 0.05, "J(1 V) = {j_1v:.4e} A/cm2");
    ensure!(elapsed < Duration::from_millis(100), "took {elapsed:?}");
    Ok(format!("J(80 mV) = {j_read:.4e} A/cm2, J(1 V) = {j_1v:.4e} A/cm2"))
}

fn switching_window() -> Verdict {
    let p = golden();
    let on_pos = pulse_lab::switching_onset(&p, true, 2e-8, 0.1, 0.01).unwrap();
    let on_neg = pulse_lab::switching_onset(&p, false, 2e-8, 0.1, 0.01).unwrap();
    ensure!((on_pos - 0.8).abs() <= 0.05, "positive onset {on_pos:.4} V");
    ensure!((on_neg - 0.4).abs() <= 0.05, "negative onset {on_neg:.4} V");

    let mut d = Device::lrs(p).unwrap();
    let traces = pulse_lab::run_amplitude_staircase(&mut d, &[2e-8], &AmplitudeLoop::default(), &ResetProtocol::default()).unwrap();
    let v = pulse_lab::DEFAULT_V_READ;
    let (i_hrs, i_lrs) = (iv_current(&p, p.g_hrs, v), iv_current(&p, p.g_lrs, v));
    let frac = |r: f64| (v / r - i_hrs) / (i_lrs - i_hrs);

    let pos = traces[0].branch(true).unwrap();
    let s0 = frac(pos.records[0].resistance);
    let mut last_r = pos.records[0].resistance;
    for rec in &pos.records[1..] {
        let switched = s0 - frac(rec.resistance);
        if rec.amplitude < 0.8 - 0.05 {
            ensure!(switched < 0.01, "positive {:.2} V already switched {switched:.4}", rec.amplitude);
        }
        if rec.amplitude >= 0.8 {
            ensure!(rec.resistance >= last_r, "depression not monotone at {:.2} V", rec.amplitude);
        }
        last_r = rec.resistance;
    }
    ensure!(pos.records.last().unwrap().amplitude >= 2.8 - 1e-9, "positive branch stops early");

    let neg = traces[0].branch(false).unwrap();
    let h0 = frac(neg.records[0].resistance);
    for rec in &neg.records[1..] {
        if rec.amplitude.abs() < 0.4 - 0.05 {
            let switched = frac(rec.resistance) - h0;
            ensure!(switched < 0.01, "negative {:.2} V already switched {switched:.4}", rec.amplitude);
        }
    }
    Ok(format!("onsets +{on_pos:.4} V / -{on_neg:.4} V, depression monotone to 2.8 V"))
}

fn merz_linearity() -> Verdict {
    let widths = [2e-8, 2e-6, 2e-4, 2e-2, 2.0];
    let mut d = Device::lrs(golden()).unwrap();
    let sweep = pulse_lab::coercive_vs_width(&mut d, &widths, &AmplitudeLoop::default(), &ResetProtocol::default()).unwrap();
    let (pos, neg) = sweep.fits().unwrap();
    for (label, fit) in [("positive", pos), ("negative", neg)] {
        ensure!(fit.r_squared >= 0.99, "{label} R2 = {}", fit.r_squared);
        ensure!(fit.slope < 0.0, "{label} slope = {}", fit.slope);
    }
    Ok(format!(
        "slopes {:.4} / {:.4} V/decade, R2 {:.6} / {:.6}",
        pos.slope, neg.slope, pos.r_squared, neg.r_squared
    ))
}

fn first_pulse_fraction() -> Verdict {
    let mut d = Device::hrs(golden()).unwrap();
    let g0 = d.conductance();
    let report = d.apply_pulse(PulseSpec::new(-1.0, 2e-8).unwrap()).unwrap();
    let moved = d.window_fraction(d.conductance()) - d.window_fraction(g0);
    ensure!((report.delta_s - 0.2).abs() <= 0.05, "delta S = {}", report.delta_s);
    ensure!((moved - 0.2).abs() <= 0.05, "conductance moved {moved} of the window");
    Ok(format!("delta S = {:.4}", report.delta_s))
}

fn energy() -> Verdict {
    let mut d = Device::lrs(golden()).unwrap();
    let read = d.read(0.1, 1e-6).unwrap().energy;
    let write = d.apply_pulse(PulseSpec::new(2.8, 2e-8).unwrap()).unwrap().energy;
    let detail = format!("write {write:.3e} J (< 1e-12), read {read:.3e} J (< 1e-15)");
    ensure!(write < 1e-12, "{detail}");
    ensure!(read < 1e-15, "{detail}");
    Ok(detail)
}

fn retention() -> Verdict {
    let p = golden();
    let week = 7.0 * 86400.0;
    let mut devices: Vec<Device> = [1.0, 0.5, 0.0].iter().map(|&s| Device::new(p, s).unwrap()).collect();
    let r = |d: &Device| d.read(0.08, 0.0).unwrap().chord_resistance;
    let r0: Vec<f64> = devices.iter().map(r).collect();
    let mut clock = 0.0;
    let mut samples: Vec<(f64, Vec<f64>)> = vec![(0.0, r0.clone())];
    let times: Vec<f64> = (1..=60).map(|k| k as f64 * 10.0).chain((1..=21).map(|day| day as f64 * 86400.0)).collect();
    for t in times {
        for d in devices.iter_mut() {
            d.retention_evolve(t - clock).unwrap();
        }
        clock = t;
        samples.push((t, devices.iter().map(r).collect()));
    }
    for (t, rs) in samples.iter().filter(|(t, _)| *t <= 600.0) {
        let shifts: Vec<f64> = rs.iter().zip(&r0).map(|(a, b)| (a / b).log10()).collect();
        let spread = shifts.iter().copied().fold(f64::MIN, f64::max) - shifts.iter().copied().fold(f64::MAX, f64::min);
        ensure!(spread < 1e-9, "log10 R shifts differ by {spread} at {t} s");
    }
    let at = |t: f64| &samples.iter().find(|(s, _)| *s == t).unwrap().1;
    let w1 = at(week);
    let mut worst: f64 = 0.0;
    for wk in [2.0 * week, 3.0 * week] {
        for (a, b) in at(wk).iter().zip(w1) {
            worst = worst.max((a / b - 1.0).abs());
        }
    }
    ensure!(worst <= 0.02, "week 2/3 deviate {worst:.4} from week 1");
    for (t, rs) in &samples {
        ensure!(rs[0] < rs[1] && rs[1] < rs[2], "ordering lost at {t} s");
    }
    Ok(format!("10 min shifts equal, weeks 2-3 within {:.3}% of week 1, ordering kept", worst * 100.0))
}

fn endurance() -> Verdict {
    let p = golden();
    let mut d = Device::lrs(p).unwrap();
    let ratio0 = d.on_off_ratio();
    let (h0, l0) = d.window();
    let start = Instant::now();
    d.endurance_cycle(100_000_000, 1.0, 1e5).unwrap();
    let elapsed = start.elapsed();
    let (h1, l1) = d.window();
    let ratio1 = d.on_off_ratio();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    ensure!(ratio1.to_bits() == ratio0.to_bits(), "On/Off {ratio0} -> {ratio1}");
    let dr_hrs = 1.0 - h0 / h1;
    let dr_lrs = 1.0 - l0 / l1;
    for (label, dr) in [("HRS", dr_hrs), ("LRS", dr_lrs)] {
        ensure!(dr > 0.0 && dr < 0.2, "{label} resistance fell by {dr}");
    }
    Ok(format!("On/Off bit-identical, resistances down {:.2}% / {:.2}% in {elapsed:?}", dr_hrs * 100.0, dr_lrs * 100.0))
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn oracle_equivalence() -> Verdict {
    let mut p = golden();
    p.n_bins = 4;
    let worst = Cell::new(0.0f64);
    let bump = |x: f64| worst.set(worst.get().max(x));
    runner(200)
        .run(&sequence_strategy(), |(s0, seq)| {
            let mut dev = Device::new(p, s0).unwrap();
            let mut oracle = OracleDevice::new(p, s0);
            for &(amplitude, lw) in &seq {
                let width = 10f64.powf(lw);
                dev.apply_pulse(PulseSpec::new(amplitude, width).unwrap()).unwrap();
                oracle.pulse(amplitude, width);
                bump(rel_diff(dev.conductance(), oracle.conductance()));
                bump((dev.polarization() - oracle.s()).abs());
                for (a, b) in dev.ensemble().fractions().iter().zip(&oracle.u) {
                    bump((a - b).abs());
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let worst = worst.get();
    ensure!(worst <= 1e-12, "pulse mismatch {worst:e}");

    let worst_mvm = Cell::new(0.0f64);
    let states = proptest::collection::vec(0.0..=1.0f64, 16);
    let inputs = proptest::collection::vec(-0.3..=0.3f64, 4);
    runner(200)
        .run(&(states, inputs), |(s, v)| {
            let q = golden();
            let devices = s.iter().map(|&x| Device::new(q, x).unwrap()).collect();
            let xbar = Crossbar::from_devices(4, 4, devices, WeightMapping::DifferentialPair).unwrap();
            let got = xbar.mvm(&v).unwrap();
            for j in 0..4 {
                let terms: Vec<f64> = (0..4)
                    .map(|i| oracle_current(&q, q.g_hrs * (1.0 - s[i * 4 + j]) + q.g_lrs * s[i * 4 + j], v[i]))
                    .collect();
                let want: f64 = terms.iter().sum();
                let scale: f64 = terms.iter().map(|t| t.abs()).sum();
                worst_mvm.set(worst_mvm.get().max((got[j] - want).abs() / scale));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let worst_mvm = worst_mvm.get();
    ensure!(worst_mvm <= 1e-12, "mvm mismatch {worst_mvm:e}");
    Ok(format!("max pulse deviation {worst:.2e}, max mvm deviation {worst_mvm:.2e}"))
}

fn sequence_strategy() -> impl Strategy<Value = (f64, Vec<(f64, f64)>)> {
    (0.0..=1.0f64, proptest::collection::vec((-3.5..3.5f64, -9.0..0.0f64), 1..30))
}

fn play(p: DeviceParams, s0: f64, seq: &[(f64, f64)]) -> (Device, Vec<f64>) {
    let mut d = Device::new(p, s0).unwrap();
    let deltas = seq.iter().map(|&(a, lw)| d.apply_pulse(PulseSpec::new(a, 10f64.powf(lw)).unwrap()).unwrap().delta_s).collect();
    (d, deltas)
}

fn property_suite() -> Verdict {
    let start = Instant::now();
    let wide = golden().with_diameter(140e-6);
    runner(1000)
        .run(&sequence_strategy(), |(s0, seq)| {
            let mut d = Device::new(golden(), s0).unwrap();
            for &(a, lw) in &seq {
                let before = d.ensemble().fractions().to_vec();
                let s_before = d.polarization();
                d.apply_pulse(PulseSpec::new(a, 10f64.powf(lw)).unwrap()).unwrap();
                let s = d.polarization();
                prop_assert!((0.0..=1.0).contains(&s));
                for (&u, &u0) in d.ensemble().fractions().iter().zip(&before) {
                    prop_assert!((0.0..=1.0).contains(&u));
                    if a > 0.0 {
                        prop_assert!(u <= u0);
                    } else {
                        prop_assert!(u >= u0);
                    }
                }
                if a > 0.0 {
                    prop_assert!(s <= s_before);
                } else {
                    prop_assert!(s >= s_before);
                }
            }
            let (again, deltas) = play(golden(), s0, &seq);
            let (big, big_deltas) = play(wide, s0, &seq);
            prop_assert!(again.ensemble().fractions().iter().zip(d.ensemble().fractions()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(deltas.iter().zip(&big_deltas).all(|(a, b)| a.to_bits() == b.to_bits()));
            let j_small = again.current(0.1) / again.params().area;
            let j_big = big.current(0.1) / big.params().area;
            prop_assert!(rel_diff(j_small, j_big) < 1e-12);
            Ok(())
        })
        .map_err(|e| format!("random sequences: {e}"))?;

    let mut d = Device::lrs(golden()).unwrap();
    let minor = StaircaseSpec::minor_loop(2e-8, 1.6, 1.6, 0.1, 0.1).unwrap();
    pulse_lab::run_staircase(&mut d, &minor).unwrap();
    let a = pulse_lab::run_staircase(&mut d, &minor).unwrap().resistances();
    let b = pulse_lab::run_staircase(&mut d, &minor).unwrap().resistances();
    let closure = (a.last().unwrap() / a[0] - 1.0).abs();
    let repeat = a.iter().zip(&b).map(|(x, y)| (x / y - 1.0).abs()).fold(0.0, f64::max);
    ensure!(closure <= 0.01 && repeat <= 0.01, "minor loop closure {closure:e}, repeat {repeat:e}");

    let widths = pulse_lab::default_width_schedule();
    let mut d = Device::lrs(golden()).unwrap();
    ResetProtocol::default().apply(&mut d).unwrap();
    let r = pulse_lab::run_width_train(&mut d, 1.0, &widths, 4 * widths.len(), 0.1).unwrap().resistances();
    let period = 2 * widths.len();
    let c2c = (1..=period).map(|k| (r[k + period] / r[k] - 1.0).abs()).fold(0.0, f64::max);
    ensure!(c2c <= 0.02, "cycle-to-cycle deviation {c2c}");

    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("1000 sequences, minor loop closes to {closure:.1e}, cycle repeat {c2c:.1e}, {elapsed:.2?}"))
}

fn calibration_round_trip() -> Verdict {
    let truth = {
        let mut p = golden();
        p.mu_pos *= 1.04;
        p.mu_neg *= 0.96;
        p.sigma_neg *= 1.05;
        p.b_slope *= 0.95;
        p
    };
    let quantities = [Quantity::OnsetPos20ns, Quantity::OnsetNeg20ns, Quantity::VcDc, Quantity::FirstPulseFraction];
    let anchors = AnchorSet::measured_on(&truth, &quantities).unwrap();
    let report = calibration::fit(&anchors, &KERNEL_FREE, &golden()).unwrap();
    let mut worst: f64 = 0.0;
    for key in KERNEL_FREE {
        let err = rel_diff(report.params.get(key).unwrap(), truth.get(key).unwrap());
        ensure!(err <= 0.01, "{key} recovered {} vs {}", report.params.get(key).unwrap(), truth.get(key).unwrap());
        worst = worst.max(err);
    }
    Ok(format!("worst relative error {worst:.2e} after {} sweeps", report.sweeps))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("read calibration", read_calibration),
        ("switching window", switching_window),
        ("merz linearity", merz_linearity),
        ("first-pulse fraction", first_pulse_fraction),
        ("energy", energy),
        ("retention", retention),
        ("endurance", endurance),
        ("oracle equivalence", oracle_equivalence),
        ("property suite", property_suite),
        ("calibration round-trip", calibration_round_trip),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        match verdict {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
