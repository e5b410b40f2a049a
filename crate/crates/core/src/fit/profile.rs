//! One-dimensional profile scans of the detection parameters.
//!
//! For each of `η` and `Δφ` the objective is sampled at five offsets around
//! the optimum twice: with every other parameter held at its fitted value
//! (conditional) and with the others re-fitted (profile). If the profile
//! curvature is a small fraction of the conditional one, the data trade
//! that parameter off against the others and cannot pin it down.

use serde::{Deserialize, Serialize};

use super::lm::LmOptions;
use super::{solve_from, FitProblem, FitResult, Param};

/// Profile/conditional curvature ratio below which a parameter is flagged.
pub const DEGENERACY_RATIO: f64 = 0.1;

const SCANNED: [Param; 2] = [Param::Eta, Param::DeltaPhi];
const OFFSETS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub param: Param,
    pub step: f64,
    /// Second derivative of the objective with the other parameters fixed.
    pub conditional_curvature: f64,
    /// Second derivative of the objective with the other parameters re-fitted.
    pub profile_curvature: f64,
    pub ratio: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub entries: Vec<ProfileEntry>,
    pub warning: Option<String>,
}

impl IdentifiabilityReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn degenerate(&self) -> bool {
        self.warning.is_some()
    }
}

/// Least-squares curvature `2c` of `a + b t + c t²` through the samples at [`OFFSETS`].
fn curvature(values: &[f64; 5], step: f64) -> f64 {
    // Σ(t² − 2)·y / Σ(t² − 2)² for t = −2..2
    let c: f64 = OFFSETS.iter().zip(values).map(|(t, y)| (t * t - 2.0) * y).sum::<f64>() / 14.0;
    2.0 * c / (step * step)
}

fn cost(problem: &FitProblem, p: &super::ParamSet) -> f64 {
    problem
        .residuals(p)
        .map(|r| 0.5 * r.iter().map(|v| v * v).sum::<f64>())
        .unwrap_or(f64::INFINITY)
}

/// Scan `η` and `Δφ` (when free) around `result`.
pub fn profile_identifiability(problem: &FitProblem, result: &FitResult) -> IdentifiabilityReport {
    let mut report = IdentifiabilityReport::default();
    for param in SCANNED {
        if problem.fixed.contains_key(&param) {
            continue;
        }
        let best = result.params.get(param);
        let (lo, hi) = problem.bound(param);
        let step = (0.01 * best.abs()).max(1e-4);
        // keep the stencil inside the bounds
        let centre = best.clamp(lo + 2.0 * step, hi - 2.0 * step);
        let mut conditional = [0.0; 5];
        let mut profile = [0.0; 5];
        for (i, t) in OFFSETS.iter().enumerate() {
            let v = centre + t * step;
            let mut at = result.params;
            at.set(param, v);
            conditional[i] = cost(problem, &at);
            let pinned = problem.clone().pin(param, v);
            let refit = solve_from(&pinned, &at, LmOptions::default());
            profile[i] = cost(problem, &refit.params).min(conditional[i]);
        }
        let conditional_curvature = curvature(&conditional, step);
        let profile_curvature = curvature(&profile, step);
        let ratio = profile_curvature / conditional_curvature;
        report.entries.push(ProfileEntry {
            param,
            step,
            conditional_curvature,
            profile_curvature,
            ratio,
            degenerate: !(ratio >= DEGENERACY_RATIO),
        });
    }
    let flagged: Vec<String> = report
        .entries
        .iter()
        .filter(|e| e.degenerate)
        .map(|e| format!("{} (curvature ratio {:.3})", e.param, e.ratio))
        .collect();
    if !flagged.is_empty() {
        report.warning = Some(format!(
            "eta and delta_phi are degenerate: flat profile for {}; fit both traces to separate them",
            flagged.join(", ")
        ));
    }
    report
}
