use super::{ModelKind, ParamSet};
use crate::error::{Error, Result};
use crate::spectra::TracePair;
use crate::noise::{v_detected, Quadrature};
use crate::optimize::scan_minimize;
use crate::units::angular_from_hz;

/// Smallest anti-squeezing peak (dB) treated as a feature.
const MIN_FEATURE_DB: f64 = 1.0;

/// Distance from `origin` to where `excess` first falls to half of
/// `excess[k]` walking away from `k`, linearly interpolated. With `side`
/// unset both directions are tried and the shorter wins.
fn half_width(freq: &[f64], excess: &[f64], k: usize, origin: f64, side: Option<isize>) -> Option<f64> {
    let half = 0.5 * excess[k];
    let walk = |step: isize| -> Option<f64> {
        let mut i = k as isize;
        loop {
            let j = i + step;
            if j < 0 || j as usize >= freq.len() {
                return None;
            }
            let (a, b) = (i as usize, j as usize);
            if excess[b] <= half {
                let t = (excess[a] - half) / (excess[a] - excess[b]);
                return Some((freq[a] + t * (freq[b] - freq[a]) - origin).abs());
            }
            i = j;
        }
    };
    match side {
        Some(step) => walk(step),
        None => match (walk(-1), walk(1)) {
            (Some(l), Some(r)) => Some(l.min(r)),
            (l, r) => l.or(r),
        },
    }
}

/// Starting point for [`super::solve`] read off the trace shapes.
///
/// The feature sits at the arg-max of the upper trace. The half-width of the
/// anti-squeezing peak gives `γ−χ` and that of the squeezing dip gives
/// `γ+χ` (halved in frequency for the coupled system). `η` and `Δφ` then
/// follow from a linear fit of both traces with those widths, and `γ+χ` is
/// refined by a one-dimensional scan of the dB misfit.
pub fn initial_guess(traces: &TracePair, kind: ModelKind) -> Result<ParamSet> {
    let freq = &traces.frequencies;
    let k = (0..traces.len())
        .max_by(|&a, &b| traces.upper[a].total_cmp(&traces.upper[b]))
        .expect("trace pair is never empty");
    let peak = traces.upper[k];
    if 10.0 * peak.log10() < MIN_FEATURE_DB {
        return Err(Error::NoFeature(format!(
            "upper trace peaks at {:.3} dB, below {MIN_FEATURE_DB} dB",
            10.0 * peak.log10()
        )));
    }
    let center_hz = freq[k];

    let upper_excess: Vec<f64> = traces.upper.iter().map(|v| v - 1.0).collect();
    let lower_depth: Vec<f64> = traces.lower.iter().map(|v| 1.0 - v).collect();
    let kmin = (0..traces.len())
        .max_by(|&a, &b| lower_depth[a].total_cmp(&lower_depth[b]))
        .unwrap();
    if lower_depth[kmin] <= 0.0 {
        return Err(Error::NoFeature("lower trace never drops below shot noise".into()));
    }
    let factor = match kind {
        ModelKind::Single => 1.0,
        ModelKind::Coupled => 2.0,
    };
    let span = freq[freq.len() - 1] - freq[0];
    let hw_upper = half_width(freq, &upper_excess, k, center_hz, None).unwrap_or(span / 4.0);
    // walk away from the phase-noise bump at the centre
    let side = match kmin.cmp(&k) {
        std::cmp::Ordering::Less => Some(-1),
        std::cmp::Ordering::Greater => Some(1),
        std::cmp::Ordering::Equal => None,
    };
    let hw_lower = half_width(freq, &lower_depth, kmin, center_hz, side).unwrap_or(span / 4.0);
    let diff = factor * hw_upper;
    let sum = (factor * hw_lower).max(diff * (1.0 + 1e-3));

    let with_sum = |sum: f64| {
        let mut g = ParamSet {
            chi_hz: 0.5 * (sum - diff),
            gamma_hz: 0.5 * (sum + diff),
            center_hz,
            eta: 1.0,
            delta_phi: 0.0,
        };
        let (eta, delta_phi) = detection_guess(traces, &g, kind).unwrap_or_else(|| {
            let ratio = (sum / diff).powi(2);
            (((peak - 1.0) / (ratio - 1.0)).clamp(0.05, 1.0), 0.0)
        });
        g.eta = eta;
        g.delta_phi = delta_phi;
        g
    };
    // The dip width is distorted by the phase-noise bump; refine it on the dB misfit.
    let misfit = |log_sum: f64| db_misfit(traces, &with_sum(log_sum.exp()), kind);
    let lo = (sum / 2.0).max(diff * 1.01).ln();
    let hi = (2.0 * sum).ln().max(lo + 1e-6);
    let best = scan_minimize(misfit, lo, hi, 41, 1e-4);
    Ok(with_sum(best.x.exp()))
}

fn db_misfit(traces: &TracePair, p: &ParamSet, kind: ModelKind) -> f64 {
    let (Ok(model), Ok(det)) = (p.model(kind), p.detection()) else {
        return f64::INFINITY;
    };
    let mut total = 0.0;
    for i in 0..traces.len() {
        let Ok(v) = model.variances(angular_from_hz(traces.frequencies[i])) else {
            return f64::INFINITY;
        };
        let up = v_detected(v, &det, Quadrature::Plus);
        let lo = v_detected(v, &det, Quadrature::Minus);
        total += (10.0 * (up / traces.upper[i]).log10()).powi(2) + (10.0 * (lo / traces.lower[i]).log10()).powi(2);
    }
    total
}

/// With the cavity parameters fixed, `V − 1 = a·(V_r − 1) + b·(V_¬r − 1)`
/// where `a = η cos²Δφ` and `b = η sin²Δφ`, so both follow from a linear
/// least-squares fit weighted by the inverse measured level.
fn detection_guess(traces: &TracePair, cavity: &ParamSet, kind: ModelKind) -> Option<(f64, f64)> {
    let model = cavity.model(kind).ok()?;
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..traces.len() {
        let v = model.variances(angular_from_hz(traces.frequencies[i])).ok()?;
        for (meas, own, other) in [(traces.upper[i], v.plus, v.minus), (traces.lower[i], v.minus, v.plus)] {
            let w = 1.0 / (meas * meas);
            let (x1, x2, y) = (own - 1.0, other - 1.0, meas - 1.0);
            saa += w * x1 * x1;
            sab += w * x1 * x2;
            sbb += w * x2 * x2;
            say += w * x1 * y;
            sby += w * x2 * y;
        }
    }
    let det = saa * sbb - sab * sab;
    if !(det.abs() > 0.0) {
        return None;
    }
    let a = ((say * sbb - sby * sab) / det).max(0.0);
    let b = ((sby * saa - say * sab) / det).max(0.0);
    let eta = a + b;
    if !(eta > 0.0) {
        return None;
    }
    Some((eta.clamp(0.05, 1.0), (b / eta).min(0.5).sqrt().asin()))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::tests::synthetic;
    use crate::fit::Param;
    use crate::presets;

    #[test]
    fn close_to_truth_on_model_curves() {
        for (kind, model, det, grid) in [
            (ModelKind::Single, presets::single::model(), presets::single::detection(), presets::single::grid_hz(401)),
            (ModelKind::Coupled, presets::coupled::model(), presets::coupled::detection(), presets::coupled::grid_hz(401)),
        ] {
            let traces = synthetic(&model, &det, &grid);
            let g = initial_guess(&traces, kind).unwrap();
            let truth = ParamSet::from_model(&model, &det);
            for p in Param::ALL {
                let rel = (g.get(p) - truth.get(p)).abs() / truth.get(p);
                assert!(rel < 0.2, "{kind:?} {p}: {} vs {}", g.get(p), truth.get(p));
            }
        }
    }

    #[test]
    fn flat_traces_have_no_feature() {
        let t = TracePair::new(vec![1.0, 2.0, 3.0], vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(initial_guess(&t, ModelKind::Single), Err(Error::NoFeature(_))));
    }

    #[test]
    fn centre_is_the_upper_arg_max() {
        let t = TracePair::new(
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![1.2, 3.0, 9.0, 2.0, 1.1],
            vec![0.9, 0.5, 0.6, 0.7, 0.95],
        )
        .unwrap();
        assert_eq!(initial_guess(&t, ModelKind::Single).unwrap().center_hz, 3.0);
    }
}
