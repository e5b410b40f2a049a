use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccsqz_core::FitResult;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ccsqz(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccsqz"))
        .arg("--out")
        .arg(out)
        .args(args)
        .current_dir(workspace())
        .env_remove("SQZ_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fit_result(dir: &Path) -> FitResult {
    FitResult::from_toml(&fs::read_to_string(dir.join("fit.toml")).unwrap()).unwrap()
}

fn small_campaign(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join("campaign.toml");
    fs::write(
        &path,
        format!(
            "seed = {seed}\nn_spectra = 40\ndark_clearance_db = 12.7\n\n\
             [model]\nkind = \"single\"\nchi_hz = 704e3\ngamma_hz = 868e3\ncenter_hz = 54.67e6\n\n\
             [detection]\neta = 0.851\ndelta_phi = 0.04\n\n\
             [grid]\nstart_hz = 49.67e6\nstop_hz = 59.67e6\npoints = 81\n\n\
             [phase]\nmodel = \"free-running-uniform\"\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn shipped_single_trace_fit() {
    let out = tempfile::tempdir().unwrap();
    let o = ccsqz(out.path(), &["fit", "data/single_traces.csv", "--model", "single"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = fit_result(out.path());
    assert!((r.params.eta - 0.851).abs() < 0.01, "eta {}", r.params.eta);
    assert!((r.params.delta_phi - 0.040).abs() < 0.004, "dphi {}", r.params.delta_phi);
    assert!(stdout(&o).contains("eta"));
    let plot = fs::read_to_string(out.path().join("fit_plot.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frequency_hz,upper_db,lower_db,fit_upper_db,fit_lower_db,fit_lower_no_phase_noise_db"
    );
    assert_eq!(lines.count(), 401);
    assert!(out.path().join("fit.run.toml").exists());
}

#[test]
fn shipped_coupled_trace_fit() {
    let out = tempfile::tempdir().unwrap();
    let o = ccsqz(out.path(), &["fit", "data/coupled_traces.csv", "--model", "coupled"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = fit_result(out.path());
    assert!((r.params.center_hz - 7.47e6).abs() < 0.01e6, "splitting {}", r.params.center_hz);
    assert!((r.params.eta - 0.632).abs() < 0.01, "eta {}", r.params.eta);
    assert!((r.params.delta_phi - 0.079).abs() < 0.008, "dphi {}", r.params.delta_phi);

    let rep = ccsqz(out.path(), &["report", out.path().join("fit.toml").to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0), "{}", stderr(&rep));
    let text = stdout(&rep);
    assert!(text.contains("splitting") && text.contains("profile eta"), "{text}");
    assert!(!text.contains("changed since"));
}

#[test]
fn flat_trace_exits_with_fit_code() {
    let out = tempfile::tempdir().unwrap();
    let flat = out.path().join("flat.csv");
    let mut s = String::from("frequency_hz,upper_db,lower_db\n");
    for k in 0..50 {
        s.push_str(&format!("{},0,0\n", 1e6 + 1e4 * k as f64));
    }
    fs::write(&flat, s).unwrap();
    let o = ccsqz(out.path(), &["fit", flat.to_str().unwrap(), "--model", "single"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn pins_and_weighting_are_applied() {
    let out = tempfile::tempdir().unwrap();
    let o = ccsqz(
        out.path(),
        &["fit", "data/single_traces.csv", "--model", "single", "--pin", "chi=704e3", "--weighting", "linear"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = fit_result(out.path());
    assert_eq!(r.params.chi_hz, 704e3);
    assert!(!r.free.contains(&ccsqz_core::Param::Chi));
    assert_eq!(r.weighting, ccsqz_core::Weighting::Linear);

    let bad = ccsqz(out.path(), &["fit", "data/single_traces.csv", "--model", "single", "--pin", "zeta=1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_campaign(dir.path(), 9);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = ccsqz(d, &["simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let files = |d: &Path| {
        let mut v: Vec<PathBuf> = fs::read_dir(d.join("spectra")).unwrap().map(|e| e.unwrap().path()).collect();
        v.extend(["dark.csv", "shot.csv", "truth.csv", "ensemble.manifest", "simulate.run.toml"].map(|f| d.join(f)));
        v.sort();
        v
    };
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 45);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    let c = dir.path().join("c");
    ccsqz(&c, &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(fs::read(a.join("truth.csv")).unwrap(), fs::read(c.join("truth.csv")).unwrap());
}

#[test]
fn single_noiseless_spectrum_equals_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.toml");
    fs::write(
        &cfg,
        "seed = 1\nn_spectra = 1\naverages_per_bin = 0\n\n\
         [model]\nkind = \"single\"\nchi_hz = 704e3\ngamma_hz = 868e3\ncenter_hz = 54.67e6\n\n\
         [detection]\neta = 0.851\ndelta_phi = 0.04\n\n\
         [grid]\nstart_hz = 50e6\nstop_hz = 59e6\npoints = 10\n\n\
         [phase]\nmodel = \"gaussian-jitter\"\nsigma = 0.0\n",
    )
    .unwrap();
    let o = ccsqz(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let spectra: Vec<_> = fs::read_dir(dir.path().join("spectra")).unwrap().collect();
    assert_eq!(spectra.len(), 1);
    let text = fs::read_to_string(spectra[0].as_ref().unwrap().path()).unwrap();

    let tau = std::f64::consts::TAU;
    let (chi, gamma, center) = (tau * 704e3, tau * 868e3, tau * 54.67e6);
    let (eta, dphi): (f64, f64) = (0.851, 0.04);
    for line in text.lines().skip(1) {
        let mut cols = line.split(',').map(|c| c.parse::<f64>().unwrap());
        let (f, p) = (cols.next().unwrap(), cols.next().unwrap());
        let d = tau * f - center;
        let vp = ((gamma + chi).powi(2) + d * d) / ((gamma - chi).powi(2) + d * d);
        let vm = ((gamma - chi).powi(2) + d * d) / ((gamma + chi).powi(2) + d * d);
        let expect = (vp * dphi.cos().powi(2) + vm * dphi.sin().powi(2)) * eta + 1.0 - eta;
        assert!((p - expect).abs() < 1e-12 * expect, "{f}: {p} vs {expect}");
    }
}

#[test]
fn reduce_prints_dark_clearance_and_handles_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_campaign(dir.path(), 4);
    let camp = dir.path().join("camp");
    ccsqz(&camp, &["simulate", "--config", cfg.to_str().unwrap()]);
    let manifest = camp.join("ensemble.manifest");

    let o = ccsqz(&camp, &["reduce", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("dark clearance: 12.70 dB"), "{}", stdout(&o));
    let run = fs::read_to_string(camp.join("reduce.run.toml")).unwrap();
    assert!(run.contains("traces.csv"));

    // whole ensemble: both traces are the same average
    let all = ccsqz(&camp, &["reduce", manifest.to_str().unwrap(), "--n-select", "40"]);
    assert_eq!(all.status.code(), Some(0), "{}", stderr(&all));
    for line in fs::read_to_string(camp.join("traces.csv")).unwrap().lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], cols[2]);
    }

    let empty = ccsqz(&camp, &["reduce"]);
    assert_eq!(empty.status.code(), Some(2));

    // explicit file list, with a shot reference on a different grid
    let shot = dir.path().join("shot.csv");
    fs::write(&shot, "frequency_hz,power\n1,1\n2,1\n").unwrap();
    let s0 = camp.join("spectra/spectrum_0000.csv");
    let dark = camp.join("dark.csv");
    let o = ccsqz(
        &camp,
        &["reduce", s0.to_str().unwrap(), "--dark", dark.to_str().unwrap(), "--shot", shot.to_str().unwrap(), "--n-select", "1"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bad_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n\n[model]\nkind = \"single\"\nchi_hz = \"fast\"\n").unwrap();
    let o = ccsqz(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line "), "{}", stderr(&o));

    let ledger = dir.path().join("bad.kv");
    fs::write(&ledger, "eta_esc = 0.9\neta_qe = lots\n").unwrap();
    let o = ccsqz(dir.path(), &["budget", "--config", ledger.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

fn kv_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing in\n{text}"))
        .parse()
        .unwrap()
}

#[test]
fn shipped_budgets() {
    let out = tempfile::tempdir().unwrap();
    let o = ccsqz(out.path(), &["budget", "--config", "configs/single_ledger.kv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = fs::read_to_string(out.path().join("budget.kv")).unwrap();
    assert!((kv_value(&kv, "eta_qe") - 0.982).abs() < 1e-3);
    assert!((kv_value(&kv, "total") - 0.851).abs() < 1e-9);
    assert!(stdout(&o).contains("(inferred)"));

    let o = ccsqz(out.path(), &["budget", "--config", "configs/coupled_ledger.kv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = fs::read_to_string(out.path().join("budget.kv")).unwrap();
    assert!((kv_value(&kv, "eta_hd") - 0.891).abs() < 1e-3);
    assert!((kv_value(&kv, "splitting_hz") - 7.47e6).abs() < 0.02e6);

    let o = ccsqz(out.path(), &["forecast", "--config", "configs/improved_ledger.kv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = fs::read_to_string(out.path().join("forecast.kv")).unwrap();
    assert!((kv_value(&kv, "forecast_db") + 6.9).abs() < 0.1);

    // a larger phase error can only cost squeezing
    ccsqz(out.path(), &["forecast", "--config", "configs/improved_ledger.kv", "--delta-phi", "0.08"]);
    let worse = kv_value(&fs::read_to_string(out.path().join("forecast.kv")).unwrap(), "forecast_db");
    assert!(worse > -6.9);
}

#[test]
fn inconsistent_budget_exits_with_budget_code() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("l.kv");
    fs::write(&ledger, "eta_esc = 0.5\neta_qe = inferred\ntotal = 0.8\n").unwrap();
    let o = ccsqz(dir.path(), &["budget", "--config", ledger.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));

    fs::write(&ledger, "eta_esc = 0.5\neta_qe = inferred\n").unwrap();
    let o = ccsqz(dir.path(), &["budget", "--config", ledger.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ccsqz"))
        .args(["budget", "--config", "configs/improved_ledger.kv"])
        .current_dir(workspace())
        .env("SQZ_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("budget.kv").exists());
    assert!(dir.path().join("budget.run.toml").exists());
}
