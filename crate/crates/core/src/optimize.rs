//! One-dimensional minimisation helpers: dense scan followed by golden-section refinement.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a bounded 1-D minimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Minimum {
    pub x: f64,
    pub value: f64,
    /// Index of the best grid point of the initial scan.
    pub scan_index: usize,
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
///
/// Stops when the bracket is narrower than `x_tol`.
pub(crate) fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, x_tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= x_tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Scan `points` equally spaced samples over `[lo, hi]` and refine around the
/// smallest one. Ties go to the lowest abscissa.
pub(crate) fn scan_minimize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize, x_tol: f64) -> Minimum {
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let at = |i: usize| if i == points - 1 { hi } else { lo + step * i as f64 };

    let mut best = 0;
    let mut best_value = f(lo);
    for i in 1..points {
        let v = f(at(i));
        if v < best_value {
            best = i;
            best_value = v;
        }
    }

    let a = at(best.saturating_sub(1));
    let b = at((best + 1).min(points - 1));
    let (x, value) = golden_section(&f, a, b, x_tol);
    if value < best_value {
        Minimum { x, value, scan_index: best }
    } else {
        Minimum { x: at(best), value: best_value, scan_index: best }
    }
}
