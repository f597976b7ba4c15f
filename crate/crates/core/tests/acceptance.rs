//! End-to-end acceptance: one PASS/FAIL line per criterion, then the
//! decay and scattering criteria again on klein_gordon and kdv_like.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dispersim::campaign::{run_scenario, RunOptions, RunOutcome};
use dispersim::config::Scenario;
use dispersim::dispersion::PRESET_NAMES;
use dispersim::fit::fit_exponent;
use dispersim::stationary::stationary_phase_compare;
use dispersim::suites::{division_suite, fast_path_suite, gaussian_exactness, ks_suite, linear_decay, packet_suite};
use dispersim::wavepacket::ChiKind;
use dispersim::{make_preset, DispersionSymbol, Grid};

struct Ledger {
    lines: Vec<(bool, String)>,
}

impl Ledger {
    fn record(&mut self, id: &str, passed: bool, detail: String) {
        let line = format!("{} [{id}] {detail}", if passed { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((passed, line));
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn preset(name: &str) -> DispersionSymbol {
    make_preset(name, &[]).unwrap()
}

fn scenario(file: &str) -> RunOutcome {
    let sc = Scenario::from_file(&configs().join(file)).unwrap();
    sc.validate().unwrap();
    run_scenario(&sc, &RunOptions::default()).unwrap()
}

fn slope(out: &RunOutcome, quantity: &str, window: (f64, f64)) -> f64 {
    let (t, v) = out.series(quantity).unwrap_or_else(|| panic!("{quantity} missing"));
    fit_exponent(quantity, &t, &v, window).unwrap().slope
}

fn metric(out: &RunOutcome, name: &str) -> f64 {
    out.scalar(name).unwrap_or(f64::NAN)
}

fn linear_decay_check(led: &mut Ledger, id: &str, sym: &str) {
    let width = if sym == "kdv_like" { 2.0 } else { 1.0 };
    let clock = Instant::now();
    let d = linear_decay(&preset(sym), 8192, 2400.0, width, (10.0, 200.0)).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let ok = (d.fit.slope + 0.5).abs() <= 0.05 && secs < 60.0;
    led.record(id, ok, format!("{sym}: linear sup slope {:.4} (target -0.50 ± 0.05), {secs:.1}s", d.fit.slope));
}

fn scattering_checks(led: &mut Ledger, tag: &str, out: &RunOutcome) {
    let sup = slope(out, "sup", (10.0, 200.0));
    led.record(&format!("2{tag}"), (sup + 0.5).abs() <= 0.05, format!("{}: nonlinear sup slope {sup:.4}", out.scenario));

    let amp = metric(out, "amp_rsd_max");
    let drift = metric(out, "corrected_phase_drift_max");
    let mismatch = metric(out, "phase_drift_mismatch_max");
    let ok = amp <= 0.05 && drift <= 0.1 && mismatch <= 0.2 && out.runtime_s <= 600.0;
    led.record(
        &format!("6{tag}"),
        ok,
        format!(
            "{}: |γ| rsd {amp:.2e} (≤ 0.05), corrected drift {drift:.3e} rad (≤ 0.1), log-rate mismatch {mismatch:.3} (≤ 0.2), {:.0}s",
            out.scenario, out.runtime_s
        ),
    );

    let f = slope(out, "f_sup", (50.0, 1000.0));
    led.record(&format!("7{tag}"), f <= -1.1, format!("{}: sup|f| slope {f:.3} (≤ -1.1)", out.scenario));

    let linf = slope(out, "r_linf", (50.0, 1000.0));
    let l2 = slope(out, "r_l2", (50.0, 1000.0));
    led.record(
        &format!("8{tag}"),
        linf <= -0.65 && l2 <= -0.40,
        format!("{}: r slopes L∞ {linf:.3} (≤ -0.65), L² {l2:.3} (≤ -0.40)", out.scenario),
    );

    let x = slope(out, "x_norm", (10.0, 1000.0));
    let (_, tc) = out.series("tc_ratio").unwrap();
    let tc_max = tc.iter().copied().fold(0.0, f64::max);
    led.record(
        &format!("9{tag}"),
        x <= 0.05 && tc_max <= 0.1,
        format!("{}: ‖u‖_X slope {x:.2e} (≤ 0.05), max ‖tC‖/‖Lu‖ {tc_max:.2e} (≤ 0.1)", out.scenario),
    );
}

#[test]
fn acceptance_criteria() {
    let mut led = Ledger { lines: Vec::new() };

    let clock = Instant::now();
    let err = gaussian_exactness(&preset("nls"), 2048, 400.0, 10.0, 0.05).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    led.record("1", err <= 1e-8 && secs < 5.0, format!("free Gaussian max error {err:.2e} (≤ 1e-8), {secs:.2}s"));

    for sym in PRESET_NAMES {
        linear_decay_check(&mut led, "2", sym);
    }

    let t_list = [50.0, 80.0, 125.0, 200.0, 320.0, 500.0, 800.0];
    for sym in PRESET_NAMES {
        let rep = stationary_phase_compare(&preset(sym), &t_list, &[-0.4, 0.3]).unwrap();
        let at200 = rep.rows.iter().filter(|r| r.in_cone && r.t == 200.0).map(|r| r.error).fold(0.0, f64::max);
        let worst = rep.rows.iter().filter(|r| r.in_cone).map(|r| r.error).fold(0.0, f64::max);
        let max_slope = rep.fits.iter().map(|f| f.slope).fold(f64::NEG_INFINITY, f64::max);
        let (ok, how) = if worst <= 1e-10 {
            (true, format!("exact (max error {worst:.1e})"))
        } else {
            (at200 <= 0.05 && max_slope <= -0.4, format!("error slope {max_slope:.3} (≤ -0.4)"))
        };
        led.record("3", ok, format!("{sym}: relative error at t=200 {at200:.2e} (≤ 0.05), {how}"));
    }

    let ks = ks_suite(
        &[preset("nls"), preset("klein_gordon")],
        &[(8192, 1600.0), (16384, 1600.0), (32768, 1600.0)],
        &[1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
        1.0,
        (-6.0, 6.0),
    )
    .unwrap();
    led.record(
        "4",
        ks.max_deviation <= 0.5,
        format!("vector-field ratio deviation {:.3} over {} samples (≤ 0.5)", ks.max_deviation, ks.samples.len()),
    );

    let mass = scenario("mass.toml");
    let drift = metric(&mass, "l2_drift_max");
    led.record("5", drift <= 1e-9, format!("relative L² drift {drift:.2e} (≤ 1e-9) to T=100"));

    let nls = scenario("scatter_nls.toml");
    scattering_checks(&mut led, "", &nls);
    let s_dir = metric(&nls, "s_dir");
    println!("      sign resolution: s_dir = {s_dir:+}, resolved = {}", metric(&nls, "sign_resolved") == 1.0);

    for (name, sym) in PRESET_NAMES.iter().map(|&n| (n, preset(n))) {
        let rep = division_suite(&sym, 1000, 3.0, 0.05, 7);
        let ok = rep.factorized_vs_quotient <= 1e-8 && rep.diagonal <= 1e-6 && rep.identity <= 1e-8;
        led.record(
            "10",
            ok,
            format!(
                "{name}: factorized/quotient {:.1e}, diagonal {:.1e}, identity {:.1e}",
                rep.factorized_vs_quotient, rep.diagonal, rep.identity
            ),
        );
    }

    let grid = Grid::new(16384, 1600.0).unwrap();
    let times = [10.0, 15.0, 20.0, 30.0, 45.0, 70.0, 100.0, 150.0, 220.0, 300.0];
    for sym in ["nls", "klein_gordon"] {
        let p = packet_suite(&preset(sym), &grid, 0.0, &times, ChiKind::Gaussian).unwrap();
        let ok = (p.raw_fit.slope + 1.0).abs() <= 0.15 && p.structured_below_raw;
        led.record(
            "11",
            ok,
            format!("{sym}: raw residual slope {:.3} (-1.0 ± 0.15), structured < raw: {}", p.raw_fit.slope, p.structured_below_raw),
        );
    }

    let wave = scenario("waveop_nls.toml");
    let rt = metric(&wave, "roundtrip_error");
    led.record(
        "12",
        rt <= 0.1 && wave.runtime_s <= 900.0,
        format!("‖W_rec − W‖∞/ε {rt:.2e} (≤ 0.1), {:.0}s", wave.runtime_s),
    );

    let gap = fast_path_suite(64, 20.0, 0..20).unwrap();
    led.record("13", gap <= 1e-11, format!("dense vs fast paths, 20 seeds: {gap:.2e} (≤ 1e-11)"));

    for (file, sym) in [("scatter_klein_gordon.toml", "klein_gordon"), ("scatter_kdv_like.toml", "kdv_like")] {
        let out = scenario(file);
        scattering_checks(&mut led, &format!("/{sym}"), &out);
    }

    let failed: Vec<&String> = led.lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    assert!(failed.is_empty(), "failed criteria:\n{failed:#?}");
}
