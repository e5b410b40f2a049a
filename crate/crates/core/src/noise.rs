//! Closed-form quantum-noise spectra of a single squeezer and of a squeezer
//! coupled to a passive test cavity, plus the lossy, phase-noisy readout.
//!
//! All variances are in shot-noise units and all frequencies are angular
//! (rad/s). The single-squeezer spectrum is evaluated in detuning from
//! [`SqueezerParams::center`]; the coupled spectrum is evaluated at absolute
//! sideband frequency with its features at `±omega_s`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::scan_minimize;
use crate::units::{angular_from_hz, SPEED_OF_LIGHT};

/// Pump-to-decay ratios above this are flagged in reports.
pub const NEAR_THRESHOLD_RATIO: f64 = 0.999;

/// Readout quadrature: `Plus` is amplitude (anti-squeezed), `Minus` is phase (squeezed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Plus,
    Minus,
}

impl Quadrature {
    pub fn opposite(self) -> Self {
        match self {
            Quadrature::Plus => Quadrature::Minus,
            Quadrature::Minus => Quadrature::Plus,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Quadrature::Plus => 1.0,
            Quadrature::Minus => -1.0,
        }
    }
}

/// Variances of the amplitude (`plus`) and phase (`minus`) quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraturePair {
    pub plus: f64,
    pub minus: f64,
}

impl QuadraturePair {
    pub const SHOT_NOISE: QuadraturePair = QuadraturePair { plus: 1.0, minus: 1.0 };

    pub fn get(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::Plus => self.plus,
            Quadrature::Minus => self.minus,
        }
    }
}

fn check_coupling(chi: f64, gamma: f64) -> Result<()> {
    if !(chi.is_finite() && chi >= 0.0) {
        return Err(Error::domain(format!("chi must be finite and >= 0, got {chi}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain(format!("gamma must be finite and > 0, got {gamma}")));
    }
    if chi >= gamma {
        return Err(Error::domain(format!(
            "chi = {chi} rad/s is at or above threshold (gamma = {gamma} rad/s)"
        )));
    }
    Ok(())
}

/// Single squeezing cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezerParams {
    /// Down-conversion coupling strength, rad/s.
    pub chi: f64,
    /// Cavity decay rate, rad/s.
    pub gamma: f64,
    /// Operating point the detuning is measured from, rad/s.
    pub center: f64,
}

impl SqueezerParams {
    pub fn new(chi: f64, gamma: f64, center: f64) -> Result<Self> {
        let p = SqueezerParams { chi, gamma, center };
        p.validate()?;
        Ok(p)
    }

    pub fn from_hz(chi_hz: f64, gamma_hz: f64, center_hz: f64) -> Result<Self> {
        Self::new(angular_from_hz(chi_hz), angular_from_hz(gamma_hz), angular_from_hz(center_hz))
    }

    pub fn validate(&self) -> Result<()> {
        check_coupling(self.chi, self.gamma)?;
        if !self.center.is_finite() {
            return Err(Error::domain("center frequency must be finite"));
        }
        Ok(())
    }
}

/// Squeezing cavity coupled to a test cavity, both on resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledParams {
    pub chi: f64,
    /// Decay rate of the coupled system, rad/s.
    pub gamma: f64,
    /// Normal-mode splitting frequency, rad/s.
    pub omega_s: f64,
}

impl CoupledParams {
    pub fn new(chi: f64, gamma: f64, omega_s: f64) -> Result<Self> {
        let p = CoupledParams { chi, gamma, omega_s };
        p.validate()?;
        Ok(p)
    }

    pub fn from_hz(chi_hz: f64, gamma_hz: f64, splitting_hz: f64) -> Result<Self> {
        Self::new(angular_from_hz(chi_hz), angular_from_hz(gamma_hz), angular_from_hz(splitting_hz))
    }

    pub fn validate(&self) -> Result<()> {
        check_coupling(self.chi, self.gamma)?;
        if !(self.omega_s.is_finite() && self.omega_s > 0.0) {
            return Err(Error::domain(format!(
                "splitting frequency must be finite and > 0, got {}",
                self.omega_s
            )));
        }
        Ok(())
    }
}

/// Readout chain: total efficiency and detection phase offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub eta: f64,
    /// Radians.
    pub delta_phi: f64,
}

impl DetectionParams {
    pub const IDEAL: DetectionParams = DetectionParams { eta: 1.0, delta_phi: 0.0 };

    pub fn new(eta: f64, delta_phi: f64) -> Result<Self> {
        let d = DetectionParams { eta, delta_phi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::domain(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !self.delta_phi.is_finite() {
            return Err(Error::domain("delta_phi must be finite"));
        }
        Ok(())
    }
}

/// Optical lengths of the two sub-cavities and the coupling-mirror transmissivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry {
    /// Meters.
    pub l_test: f64,
    /// Meters.
    pub l_sqz: f64,
    /// Power transmissivity `1 - R_c`.
    pub t_c: f64,
}

impl CavityGeometry {
    pub fn new(l_test: f64, l_sqz: f64, t_c: f64) -> Result<Self> {
        let g = CavityGeometry { l_test, l_sqz, t_c };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_test > 0.0 && self.l_test.is_finite() && self.l_sqz > 0.0 && self.l_sqz.is_finite()) {
            return Err(Error::domain("cavity lengths must be positive and finite"));
        }
        if !(self.t_c > 0.0 && self.t_c < 1.0) {
            return Err(Error::domain(format!("coupling transmissivity must lie in (0, 1), got {}", self.t_c)));
        }
        Ok(())
    }
}

/// Either variance model, as consumed by the detection chain, the simulator and the fitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Single(SqueezerParams),
    Coupled(CoupledParams),
}

impl Model {
    pub fn variances(&self, omega: f64) -> Result<QuadraturePair> {
        match self {
            Model::Single(p) => v_single(p, omega),
            Model::Coupled(p) => v_coupled(p, omega),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Single(p) => p.validate(),
            Model::Coupled(p) => p.validate(),
        }
    }

    pub fn chi(&self) -> f64 {
        match self {
            Model::Single(p) => p.chi,
            Model::Coupled(p) => p.chi,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Model::Single(p) => p.gamma,
            Model::Coupled(p) => p.gamma,
        }
    }

    /// Where the squeezing feature sits: the centre for a single squeezer, `omega_s` when coupled.
    pub fn feature_frequency(&self) -> f64 {
        match self {
            Model::Single(p) => p.center,
            Model::Coupled(p) => p.omega_s,
        }
    }

    pub fn near_threshold(&self) -> bool {
        self.chi() / self.gamma() > NEAR_THRESHOLD_RATIO
    }
}

/// Output variances of a single squeezer at angular frequency `omega`, i.e. at
/// detuning `omega - center`.
///
/// Evaluated as the ratio `((γ±χ)² + δ²) / ((γ∓χ)² + δ²)`, which is
/// algebraically `1 ± 4γχ / ((γ∓χ)² + δ²)` but keeps `plus * minus == 1` to
/// rounding even close to threshold.
pub fn v_single(params: &SqueezerParams, omega: f64) -> Result<QuadraturePair> {
    params.validate()?;
    let detuning = omega - params.center;
    let d2 = detuning * detuning;
    let above = (params.gamma + params.chi).powi(2) + d2;
    let below = (params.gamma - params.chi).powi(2) + d2;
    Ok(QuadraturePair {
        plus: above / below,
        minus: below / above,
    })
}

/// Complex amplitude-noise transfer function of the coupled system,
/// labelled so that `|T±|² = V±`.
pub fn transfer_coupled(params: &CoupledParams, omega: f64, quadrature: Quadrature) -> Result<Complex64> {
    params.validate()?;
    if !(omega >= 0.0) {
        return Err(Error::argument(format!("sideband frequency must be >= 0, got {omega}")));
    }
    let s = quadrature.sign();
    let detune = (omega - params.omega_s) * (omega + params.omega_s);
    let num = Complex64::new((params.gamma + s * params.chi) * omega, detune);
    let den = Complex64::new((params.gamma - s * params.chi) * omega, detune);
    Ok(num / den)
}

/// Output variances of the coupled system, `|T±(ω)|²`.
pub fn v_coupled(params: &CoupledParams, omega: f64) -> Result<QuadraturePair> {
    params.validate()?;
    let w2 = omega * omega;
    let detune = (omega - params.omega_s) * (omega + params.omega_s);
    let d2 = detune * detune;
    let above = (params.gamma + params.chi).powi(2) * w2 + d2;
    let below = (params.gamma - params.chi).powi(2) * w2 + d2;
    Ok(QuadraturePair {
        plus: above / below,
        minus: below / above,
    })
}

/// Variance seen by the homodyne detector after loss `1 - eta` and readout
/// angle error `delta_phi`.
pub fn v_detected(underlying: QuadraturePair, det: &DetectionParams, readout: Quadrature) -> f64 {
    let (s, c) = det.delta_phi.sin_cos();
    mix_detected(underlying, c * c, s * s, det.eta, readout)
}

/// `(V_r · w_r + V_¬r · w_¬r) · η + 1 − η`, shared by the detection model and the simulator.
#[inline]
pub(crate) fn mix_detected(
    underlying: QuadraturePair,
    own_weight: f64,
    other_weight: f64,
    eta: f64,
    readout: Quadrature,
) -> f64 {
    let own = underlying.get(readout);
    let other = underlying.get(readout.opposite());
    (own * own_weight + other * other_weight) * eta + 1.0 - eta
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|w| !w.is_finite()) {
        return Err(Error::argument("frequency grid contains non-finite values"));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::argument(format!(
            "frequency grid is not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Detected variance over a grid of angular frequencies.
pub fn detected_spectrum(model: &Model, det: &DetectionParams, grid: &[f64], readout: Quadrature) -> Result<Vec<f64>> {
    check_grid(grid)?;
    det.validate()?;
    model.validate()?;
    grid.iter()
        .map(|&w| Ok(v_detected(model.variances(w)?, det, readout)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    /// rad/s.
    pub omega: f64,
    pub variance: f64,
}

/// Largest anti-squeezing and deepest squeezing within a search band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub max_plus: Extremum,
    pub min_minus: Extremum,
}

const EXTREME_SCAN_POINTS: usize = 4001;

/// Locate the extremes of the detected spectrum in `[band.0, band.1]`.
///
/// A dense scan brackets the extremum and golden-section search refines it.
/// With two symmetric minima the lower-frequency one is returned.
pub fn extreme_detected(model: &Model, det: &DetectionParams, band: (f64, f64)) -> Result<Extremes> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::argument(format!("empty or invalid search band [{lo}, {hi}]")));
    }
    model.validate()?;
    det.validate()?;
    if matches!(model, Model::Coupled(_)) && lo < 0.0 {
        return Err(Error::argument("coupled-model search band must be non-negative"));
    }

    // Validated above, so evaluation cannot fail inside the closures.
    let eval = |w: f64, q: Quadrature| v_detected(model.variances(w).expect("validated model"), det, q);
    let x_tol = (hi - lo) * 1e-12;

    let max = scan_minimize(|w| -eval(w, Quadrature::Plus), lo, hi, EXTREME_SCAN_POINTS, x_tol);
    let min = scan_minimize(|w| eval(w, Quadrature::Minus), lo, hi, EXTREME_SCAN_POINTS, x_tol);
    Ok(Extremes {
        max_plus: Extremum { omega: max.x, variance: -max.value },
        min_minus: Extremum { omega: min.x, variance: min.value },
    })
}

/// Normal-mode splitting frequency (rad/s) in the weak-coupling approximation.
pub fn splitting_frequency(geom: &CavityGeometry) -> Result<f64> {
    geom.validate()?;
    Ok(SPEED_OF_LIGHT * (geom.t_c / (4.0 * geom.l_test * geom.l_sqz)).sqrt())
}

/// Pump power at which the squeezer reaches oscillation threshold, given the
/// coupling `chi` observed at `pump_power`. Same unit as `pump_power`.
pub fn threshold_power(pump_power: f64, gamma: f64, chi: f64) -> Result<f64> {
    if !(chi > 0.0 && chi.is_finite()) {
        return Err(Error::domain(format!("threshold is undefined for chi = {chi}")));
    }
    if !(gamma > 0.0 && pump_power >= 0.0) {
        return Err(Error::domain("gamma must be > 0 and pump power >= 0"));
    }
    Ok(pump_power * (gamma / chi).powi(2))
}
