//! Acceptance criteria, one line per criterion. Runs as a plain binary so the
//! summary is printed on every `cargo test`.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use ccsqz_core::budget::{decay_rate, forecast_best_squeezing, free_spectral_range};
use ccsqz_core::fit::{profile_identifiability, solve, FitProblem, ModelKind, Param, TraceSelection};
use ccsqz_core::noise::{
    detected_spectrum, extreme_detected, splitting_frequency, threshold_power, transfer_coupled, v_coupled, v_single,
    CoupledParams, DetectionParams, Model, Quadrature, SqueezerParams,
};
use ccsqz_core::presets::{coupled, improved, single};
use ccsqz_core::spectra::{reduce_campaign, ReduceOptions, TracePair};
use ccsqz_core::synth::{generate_campaign, CampaignConfig, PhaseModel};
use ccsqz_core::units::angular_from_hz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Detected variance written out from scratch: `1 ± 4γχ/((γ∓χ)² + x²)` with
/// `x` the detuning (single) or `(ω² − ω_s²)/ω` (coupled), then loss and
/// readout-angle mixing.
fn oracle_detected(chi: f64, gamma: f64, x: f64, eta: f64, dphi: f64, plus_readout: bool) -> f64 {
    let plus = 1.0 + 4.0 * gamma * chi / ((gamma - chi).powi(2) + x * x);
    let minus = 1.0 - 4.0 * gamma * chi / ((gamma + chi).powi(2) + x * x);
    let (own, other) = if plus_readout { (plus, minus) } else { (minus, plus) };
    (own * dphi.cos().powi(2) + other * dphi.sin().powi(2)) * eta + 1.0 - eta
}

/// Dense scan of `f` over `[lo, hi]`, returning (arg, value) of the extreme.
fn dense_scan(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize, maximize: bool) -> (f64, f64) {
    let mut best = (lo, f(lo));
    for i in 1..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let v = f(x);
        if (maximize && v > best.1) || (!maximize && v < best.1) {
            best = (x, v);
        }
    }
    best
}

fn ac1() -> Outcome {
    let hz = splitting_frequency(&coupled::geometry()).map_err(|e| e.to_string())? / TAU;
    // independent: c·sqrt(T/(4 L1 L2)) / 2π
    let oracle = 299_792_458.0 * (0.19f64 / (4.0 * 1.415 * 1.372)).sqrt() / TAU;
    let rel = (hz - 7.47e6).abs() / 7.47e6;
    check(
        rel <= 0.003 && (hz - oracle).abs() <= 1e-9 * oracle,
        format!("splitting {:.4} MHz vs 7.47 MHz ({:.3}% off)", hz / 1e6, 100.0 * rel),
    )
}

fn ac2() -> Outcome {
    let model = single::model();
    let det = single::detection();
    let centre = angular_from_hz(single::CENTER_HZ);
    let half_span = angular_from_hz(single::SPAN_HZ / 2.0);
    let ex = extreme_detected(&model, &det, (centre - half_span, centre + half_span)).map_err(|e| e.to_string())?;
    let (chi, gamma) = (TAU * single::CHI_HZ, TAU * single::GAMMA_HZ);
    let (eta, dphi) = (single::ETA, single::DELTA_PHI);
    let (_, max_oracle) = dense_scan(|x| oracle_detected(chi, gamma, x, eta, dphi, true), -half_span, half_span, 200_001, true);
    let (arg_min, min_oracle) =
        dense_scan(|x| oracle_detected(chi, gamma, x, eta, dphi, false), -half_span, half_span, 200_001, false);
    let up = db(ex.max_plus.variance);
    let lo = db(ex.min_minus.variance);
    let offset_mhz = (ex.min_minus.omega - centre).abs() / TAU / 1e6;
    let ok = (up - 18.9).abs() <= 0.1
        && (lo + 6.6).abs() <= 0.1
        && (up - db(max_oracle)).abs() < 1e-3
        && (lo - db(min_oracle)).abs() < 1e-3
        && (ex.max_plus.omega - centre).abs() < TAU * 1e3
        && (offset_mhz - 0.28).abs() <= 0.05
        && (offset_mhz - arg_min.abs() / TAU / 1e6).abs() < 0.005;
    check(ok, format!("+{up:.2} dB at centre, {lo:.2} dB at |δ| = 2π·{offset_mhz:.3} MHz"))
}

fn ac3() -> Outcome {
    let model = coupled::model();
    let det = coupled::detection();
    let ws = angular_from_hz(coupled::SPLITTING_HZ);
    let half_span = angular_from_hz(coupled::SPAN_HZ / 2.0);
    let ex = extreme_detected(&model, &det, (ws - half_span, ws + half_span)).map_err(|e| e.to_string())?;
    let (chi, gamma) = (TAU * coupled::CHI_HZ, TAU * coupled::GAMMA_HZ);
    let (eta, dphi) = (coupled::ETA, coupled::DELTA_PHI);
    let x = |w: f64| (w * w - ws * ws) / w;
    let (_, max_oracle) =
        dense_scan(|w| oracle_detected(chi, gamma, x(w), eta, dphi, true), ws - half_span, ws + half_span, 200_001, true);
    let (arg_min, min_oracle) =
        dense_scan(|w| oracle_detected(chi, gamma, x(w), eta, dphi, false), ws - half_span, ws + half_span, 200_001, false);
    let up = db(ex.max_plus.variance);
    let lo = db(ex.min_minus.variance);
    let offset_mhz = (ex.min_minus.omega - ws).abs() / TAU / 1e6;
    let minus_at = |w: f64| oracle_detected(chi, gamma, x(w), eta, dphi, false);
    let bump = minus_at(ws) > minus_at(ws + TAU * 20e3) && minus_at(ws) > minus_at(ws - TAU * 20e3);
    let ok = (up - 14.8).abs() <= 0.1
        && (lo + 3.3).abs() <= 0.1
        && (up - db(max_oracle)).abs() < 1e-3
        && (lo - db(min_oracle)).abs() < 1e-3
        && (ex.max_plus.omega - ws).abs() < TAU * 1e3
        && (offset_mhz - 0.25).abs() <= 0.05
        && (offset_mhz - (arg_min - ws).abs() / TAU / 1e6).abs() < 0.005
        && bump;
    check(
        ok,
        format!("+{up:.2} dB at ω_s, {lo:.2} dB at |ω−ω_s| = 2π·{offset_mhz:.3} MHz, local max of squeezed readout at ω_s: {bump}"),
    )
}

fn ac4() -> Outcome {
    let a = threshold_power(55.0, 868e3, 704e3).map_err(|e| e.to_string())?;
    let b = threshold_power(74.0, 1100e3, 820e3).map_err(|e| e.to_string())?;
    let ra = (a - 83.7).abs() / 83.7;
    let rb = (b - 133.1).abs() / 133.1;
    check(
        ra <= 0.003 && rb <= 0.003 && (a - 55.0 * (868.0f64 / 704.0).powi(2)).abs() < 1e-9,
        format!("{a:.2} mW vs 83.7 ({:.2}%), {b:.2} mW vs 133.1 ({:.2}%)", 100.0 * ra, 100.0 * rb),
    )
}

fn ac5() -> Outcome {
    let product = |v: &[f64]| -> Result<f64, String> {
        ccsqz_core::EfficiencyLedger::measured(&[("esc", v[0]), ("prop", v[1]), ("hd", v[2]), ("qe", v[3])])
            .and_then(|l| l.total_efficiency())
            .map_err(|e| e.to_string())
    };
    let single_total = product(&[0.975, 0.940, 0.945, 0.982])?;
    let coupled_total = product(&[0.768, 0.940, 0.891, 0.982])?;
    let inferred = |ledger: ccsqz_core::EfficiencyLedger, total: f64| -> Result<f64, String> {
        let l = ledger.infer_factor(total).map_err(|e| e.to_string())?;
        let name = l.inferred().ok_or("no inferred factor")?.name.clone();
        l.get(&name).ok_or_else(|| "inferred value missing".to_string())
    };
    let qe = inferred(single::ledger(), 0.851)?;
    let hd = inferred(coupled::ledger(), 0.632)?;
    let ok = (single_total - 0.851).abs() <= 0.001
        && (coupled_total - 0.632).abs() <= 0.001
        && (qe - 0.982).abs() <= 0.002
        && (hd - 0.891).abs() <= 0.002;
    check(
        ok,
        format!(
            "totals {:.2}% / {:.2}%, inferred qe {:.2}%, hd {:.2}%",
            100.0 * single_total,
            100.0 * coupled_total,
            100.0 * qe,
            100.0 * hd
        ),
    )
}

fn ac6() -> Outcome {
    let gs = decay_rate(&single::loss_sheet()).map_err(|e| e.to_string())? / TAU;
    let gc = decay_rate(&coupled::loss_sheet()).map_err(|e| e.to_string())? / TAU;
    let fsr = free_spectral_range(single::LENGTH_M).map_err(|e| e.to_string())?;
    let (rs, rc, rf) = ((gs - 868e3).abs() / 868e3, (gc - 1.1e6).abs() / 1.1e6, (fsr - 109.34e6).abs() / 109.34e6);
    check(
        rs <= 0.01 && rc <= 0.03 && rf <= 0.001,
        format!(
            "γ 2π·{:.1} kHz ({:.2}%), coupled 2π·{:.1} kHz ({:.2}%), FSR {:.3} MHz ({:.3}%)",
            gs / 1e3,
            100.0 * rs,
            gc / 1e3,
            100.0 * rc,
            fsr / 1e6,
            100.0 * rf
        ),
    )
}

fn ac7() -> Outcome {
    let f = forecast_best_squeezing(&improved::ledger(), improved::DELTA_PHI).map_err(|e| e.to_string())?;
    let eta = 0.90 * 0.99 * 0.95 * 0.982;
    let dphi = improved::DELTA_PHI;
    let best = (1..10_000)
        .map(|i| {
            let x = i as f64 / 10_000.0;
            let vm = ((1.0 - x) / (1.0 + x)).powi(2);
            (vm * dphi.cos().powi(2) + dphi.sin().powi(2) / vm) * eta + 1.0 - eta
        })
        .fold(f64::INFINITY, f64::min);
    let brute = db(best);
    check(
        (f.squeezing_db + 6.9).abs() <= 0.1 && (f.squeezing_db - brute).abs() <= 0.02,
        format!("forecast {:.3} dB, brute-force scan {brute:.3} dB", f.squeezing_db),
    )
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples = 20_000;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let gamma = 10f64.powf(rng.gen_range(3.0..8.0));
        let chi = gamma * rng.gen_range(0.0..0.9999);
        let ws = 10f64.powf(rng.gen_range(3.0..9.0));
        let w = rng.gen_range(0.0..3.0) * ws;
        let s = v_single(&SqueezerParams::new(chi, gamma, 0.0).unwrap(), rng.gen_range(-1e9..1e9)).unwrap();
        let p = CoupledParams::new(chi, gamma, ws).unwrap();
        let c = v_coupled(&p, w).unwrap();
        let tp = transfer_coupled(&p, w, Quadrature::Plus).unwrap();
        let tm = transfer_coupled(&p, w, Quadrature::Minus).unwrap();
        worst = worst
            .max((s.plus * s.minus - 1.0).abs())
            .max((c.plus * c.minus - 1.0).abs())
            .max((tp * tm - 1.0).norm());
    }
    check(worst <= 1e-10, format!("{samples} samples, worst deviation {worst:.2e}"))
}

fn noiseless_traces(model: &Model, det: &DetectionParams, grid_hz: &[f64]) -> TracePair {
    let grid: Vec<f64> = grid_hz.iter().map(|&f| angular_from_hz(f)).collect();
    let up = detected_spectrum(model, det, &grid, Quadrature::Plus).unwrap();
    let lo = detected_spectrum(model, det, &grid, Quadrature::Minus).unwrap();
    TracePair::new(grid_hz.to_vec(), up, lo).unwrap()
}

fn ac9() -> Outcome {
    // noiseless recovery for both configurations
    let mut worst_noiseless: f64 = 0.0;
    for (kind, model, det, grid) in [
        (ModelKind::Single, single::model(), single::detection(), single::grid_hz(401)),
        (ModelKind::Coupled, coupled::model(), coupled::detection(), coupled::grid_hz(401)),
    ] {
        let r = solve(&FitProblem::new(noiseless_traces(&model, &det, &grid), kind)).map_err(|e| e.to_string())?;
        let truth = ccsqz_core::ParamSet::from_model(&model, &det);
        for p in Param::ALL {
            worst_noiseless = worst_noiseless.max(((r.params.get(p) - truth.get(p)) / truth.get(p)).abs());
        }
    }

    let seeds = 50;
    let truth = ccsqz_core::ParamSet::from_model(&coupled::model(), &coupled::detection());
    let covered: Vec<bool> = (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = CampaignConfig {
                model: coupled::model(),
                detection: coupled::detection(),
                grid_hz: coupled::grid_hz(301),
                n_spectra: 1000,
                averages_per_bin: Some(CampaignConfig::DEFAULT_AVERAGES),
                seed,
                phase_model: PhaseModel::FreeRunningUniform,
                dark_clearance_db: Some(coupled::DARK_CLEARANCE_DB),
                noisy_references: false,
            };
            let campaign = generate_campaign(&cfg).unwrap();
            let red = reduce_campaign(&campaign.ensemble, &campaign.dark, &campaign.shot, 5, &ReduceOptions::default())
                .unwrap();
            let Ok(fit) = solve(&FitProblem::new(red.traces, ModelKind::Coupled)) else {
                return false;
            };
            let mut expected = truth;
            expected.delta_phi = campaign.truth.effective_delta_phi(&red.lower_indices, Quadrature::Minus);
            fit.converged
                && Param::ALL
                    .iter()
                    .all(|&p| (fit.params.get(p) - expected.get(p)).abs() <= 3.0 * fit.sigma.get(p))
        })
        .collect();
    let hits = covered.iter().filter(|c| **c).count();
    check(
        worst_noiseless <= 1e-3 && hits * 10 >= seeds * 9,
        format!("{hits}/{seeds} seeds within 3σ on all five; noiseless worst error {:.1e}", worst_noiseless),
    )
}

fn ac10() -> Outcome {
    let traces = noiseless_traces(&single::model(), &single::detection(), &single::grid_hz(201));
    let mut joint = FitProblem::new(traces, ModelKind::Single);
    let joint_fit = solve(&joint).map_err(|e| e.to_string())?;
    let joint_report = profile_identifiability(&joint, &joint_fit);
    joint.selection = TraceSelection::LowerOnly;
    let lower_fit = solve(&joint).map_err(|e| e.to_string())?;
    let lower_report = profile_identifiability(&joint, &lower_fit);
    let ratios = |r: &ccsqz_core::IdentifiabilityReport| {
        r.entries.iter().map(|e| format!("{} {:.3}", e.param, e.ratio)).collect::<Vec<_>>().join(", ")
    };
    let finite = joint_report.entries.iter().all(|e| e.profile_curvature > 0.0 && e.profile_curvature.is_finite());
    check(
        lower_report.degenerate() && !joint_report.degenerate() && finite && joint_report.entries.len() == 2,
        format!(
            "lower-only warns: {} [{}]; joint warns: {} [{}]",
            lower_report.degenerate(),
            ratios(&lower_report),
            joint_report.degenerate(),
            ratios(&joint_report)
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("AC1", "splitting frequency", ac1),
        ("AC2", "single-squeezer levels", ac2),
        ("AC3", "coupled levels", ac3),
        ("AC4", "threshold powers", ac4),
        ("AC5", "efficiency table algebra", ac5),
        ("AC6", "decay rates and FSR", ac6),
        ("AC7", "squeezing forecast", ac7),
        ("AC8", "purity invariants", ac8),
        ("AC9", "pipeline and fit round trip", ac9),
        ("AC10", "eta/delta_phi identifiability", ac10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id:<5} PASS  {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                failed += 1;
                println!("{id:<5} FAIL  {name}: {detail} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
