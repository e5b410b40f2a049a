//! Human-readable fit summaries.

use std::fmt::Write;

use ccsqz_core::noise::NEAR_THRESHOLD_RATIO;
use ccsqz_core::units::{angular_from_hz, db_from_linear, hz_from_angular};
use ccsqz_core::{extreme_detected, FitResult, IdentifiabilityReport, ModelKind, Param};

/// Half-width of the extremum search band around the feature, in decay rates.
const BAND_GAMMAS: f64 = 5.0;

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Single => "single",
        ModelKind::Coupled => "coupled",
    }
}

fn value_line(s: &mut String, label: &str, value: f64, sigma: f64, pinned: bool, p: Param) {
    let (v, e, unit) = match p {
        Param::Chi | Param::Gamma | Param::Center => (value / 1e6, sigma / 1e6, "MHz"),
        Param::Eta => (100.0 * value, 100.0 * sigma, "%"),
        Param::DeltaPhi => (1e3 * value, 1e3 * sigma, "mrad"),
    };
    let prefix = if unit == "MHz" { "2pi x " } else { "" };
    if pinned {
        writeln!(s, "  {label:<16}{prefix}{v:.4} {unit} (pinned)").unwrap();
    } else {
        writeln!(s, "  {label:<16}{prefix}{v:.4} +/- {e:.4} {unit}").unwrap();
    }
}

pub fn describe(result: &FitResult, identifiability: Option<&IdentifiabilityReport>) -> String {
    let mut s = String::new();
    let status = if result.converged { "converged" } else { "NOT converged" };
    writeln!(
        s,
        "{} model fit, {status} ({:?}, {} iterations, {} points)",
        kind_name(result.model),
        result.termination,
        result.iterations,
        result.points
    )
    .unwrap();
    for p in Param::ALL {
        let label = match (p, result.model) {
            (Param::Center, ModelKind::Coupled) => "splitting",
            (Param::Center, ModelKind::Single) => "center",
            _ => p.name(),
        };
        let pinned = !result.free.contains(&p);
        value_line(&mut s, label, result.params.get(p), result.sigma.get(p), pinned, p);
    }
    writeln!(s, "  residual rms    {:.4} dB", result.residual_rms_db).unwrap();
    writeln!(s, "  condition       {:.3e}", result.condition).unwrap();

    if let Ok((model, det)) = result.model_params() {
        let c = result.params.center_hz;
        let half = BAND_GAMMAS * result.params.gamma_hz;
        let band = (angular_from_hz((c - half).max(0.0)), angular_from_hz(c + half));
        if let Ok(ex) = extreme_detected(&model, &det, band) {
            for (label, e) in [("anti-squeezing", ex.max_plus), ("squeezing", ex.min_minus)] {
                if let Ok(db) = db_from_linear(e.variance) {
                    writeln!(s, "  {label:<16}{db:+.2} dB at {:.4} MHz", hz_from_angular(e.omega) / 1e6).unwrap();
                }
            }
        }
        if result.params.chi_hz / result.params.gamma_hz > NEAR_THRESHOLD_RATIO {
            writeln!(s, "warning: chi/gamma exceeds {NEAR_THRESHOLD_RATIO}; the fit sits at threshold").unwrap();
        }
    }
    if let Some(report) = identifiability {
        for e in &report.entries {
            writeln!(
                s,
                "  profile {:<10}curvature ratio {:.3}{}",
                e.param.name(),
                e.ratio,
                if e.degenerate { " (degenerate)" } else { "" }
            )
            .unwrap();
        }
        if let Some(w) = &report.warning {
            writeln!(s, "warning: {w}").unwrap();
        }
    }
    s
}
