//! Box-constrained Levenberg–Marquardt on a residual closure.
//!
//! Coordinates are expected to be pre-scaled to order one by the caller.
//! Coordinates sitting on a bound with the gradient pushing outward are
//! frozen for that step; trial points are projected back into the box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LmOptions {
    pub gtol: f64,
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { gtol: 1e-8, xtol: 1e-10, max_iter: 500 }
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Projected gradient cosine below tolerance.
    Gradient,
    /// Relative step below tolerance.
    Step,
    /// Nothing left to fit.
    NoFreeParameters,
    MaxIterations,
    /// The damping saturated without finding a decrease.
    Stalled,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::Step | Termination::NoFreeParameters)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub gradient_cosine: f64,
    /// Objective `½‖r‖²` after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Central-difference Jacobian with step `1e-6·max(|x|, 1)`, falling back to
/// a one-sided difference where the central stencil would leave the box.
pub(crate) fn fd_jacobian<F>(f: &F, x: &[f64], r0: &[f64], lo: &[f64], hi: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = r0.len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        let (a, b) = (x[j] - h, x[j] + h);
        let column: Vec<f64> = if a >= lo[j] && b <= hi[j] {
            probe[j] = b;
            let rp = f(&probe);
            probe[j] = a;
            let rm = f(&probe);
            rp.iter().zip(&rm).map(|(p, q)| (p - q) / (2.0 * h)).collect()
        } else if b <= hi[j] {
            probe[j] = b;
            f(&probe).iter().zip(r0).map(|(p, q)| (p - q) / h).collect()
        } else {
            probe[j] = a;
            r0.iter().zip(f(&probe)).map(|(p, q)| (p - q) / h).collect()
        };
        probe[j] = x[j];
        jac.set_column(j, &DVector::from_vec(column));
    }
    jac
}

/// Coordinates free to move: not pinned against a bound by the gradient.
fn free_mask(x: &[f64], g: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
        .collect()
}

fn gradient_cosine(jac: &DMatrix<f64>, r: &[f64], g: &DVector<f64>, free: &[bool]) -> f64 {
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm == 0.0 {
        return 0.0;
    }
    (0..g.len())
        .filter(|&j| free[j])
        .map(|j| {
            let cn = jac.column(j).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[j].abs() / (cn * rnorm)
            }
        })
        .fold(0.0, f64::max)
}

pub(crate) fn minimize<F>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut r = f(&x);
    let mut c = cost(&r);
    let mut history = vec![c];

    if n == 0 {
        return LmOutcome {
            x,
            jacobian: DMatrix::zeros(r.len(), 0),
            residuals: r,
            iterations: 0,
            termination: Termination::NoFreeParameters,
            gradient_cosine: 0.0,
            history,
        };
    }

    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut jac = fd_jacobian(&f, &x, &r, lo, hi);
    let termination = loop {
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let free = free_mask(&x, &g, lo, hi);
        if gradient_cosine(&jac, &r, &g, &free) <= opts.gtol {
            break Termination::Gradient;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        let jtj = jac.transpose() * &jac;
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);

        let mut accepted = false;
        let mut small_step = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            let mut rhs = -g.clone();
            for i in 0..n {
                if free[i] {
                    a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
                } else {
                    a.row_mut(i).fill(0.0);
                    a.column_mut(i).fill(0.0);
                    a[(i, i)] = 1.0;
                    rhs[i] = 0.0;
                }
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let delta = chol.solve(&rhs);
            let mut trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial, lo, hi);
            let step: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            small_step = step <= opts.xtol * (xnorm + opts.xtol);
            let rt = f(&trial);
            let ct = cost(&rt);
            if ct < c {
                x = trial;
                r = rt;
                c = ct;
                history.push(c);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            if small_step {
                break;
            }
            lambda *= 4.0;
        }
        if accepted {
            iterations += 1;
            jac = fd_jacobian(&f, &x, &r, lo, hi);
        }
        if small_step {
            break Termination::Step;
        }
        if !accepted {
            break Termination::Stalled;
        }
    };

    let rv = DVector::from_column_slice(&r);
    let g = jac.transpose() * &rv;
    let free = free_mask(&x, &g, lo, hi);
    let gradient_cosine = gradient_cosine(&jac, &r, &g, &free);
    LmOutcome { x, residuals: r, jacobian: jac, iterations, termination, gradient_cosine, history }
}
