//! Joint least-squares fit of a trace pair to the detection model.
//!
//! The upper trace is compared with the plus readout and the lower trace with
//! the minus readout of one shared parameter set. Residuals are taken in dB
//! unless linear weighting is requested. Coupling strength and decay rate are
//! fitted as the widths `γ+χ` and `γ−χ`, which keeps the cavity below
//! threshold with plain box bounds.

mod guess;
mod lm;
mod profile;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{v_detected, CoupledParams, DetectionParams, Model, Quadrature, SqueezerParams};
use crate::spectra::TracePair;
use crate::units::angular_from_hz;

pub use guess::initial_guess;
pub use lm::Termination;
pub use profile::{profile_identifiability, IdentifiabilityReport, ProfileEntry, DEGENERACY_RATIO};

use lm::{fd_jacobian, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Single,
    Coupled,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ModelKind::Single),
            "coupled" => Ok(ModelKind::Coupled),
            _ => Err(Error::argument(format!("unknown model `{s}` (expected single or coupled)"))),
        }
    }
}

/// Fit parameter. `Center` is the operating point of a single squeezer or
/// the splitting frequency of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Chi,
    Gamma,
    Center,
    Eta,
    DeltaPhi,
}

impl Param {
    pub const ALL: [Param; 5] = [Param::Chi, Param::Gamma, Param::Center, Param::Eta, Param::DeltaPhi];

    pub fn name(self) -> &'static str {
        match self {
            Param::Chi => "chi",
            Param::Gamma => "gamma",
            Param::Center => "center",
            Param::Eta => "eta",
            Param::DeltaPhi => "delta_phi",
        }
    }

    /// Unit of the value as stored in [`ParamSet`].
    pub fn unit(self) -> &'static str {
        match self {
            Param::Chi | Param::Gamma | Param::Center => "Hz",
            Param::Eta => "",
            Param::DeltaPhi => "rad",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi" | "chi_hz" => Ok(Param::Chi),
            "gamma" | "gamma_hz" => Ok(Param::Gamma),
            "center" | "center_hz" | "omega_s" | "splitting" | "splitting_hz" => Ok(Param::Center),
            "eta" => Ok(Param::Eta),
            "delta_phi" | "dphi" => Ok(Param::DeltaPhi),
            _ => Err(Error::argument(format!(
                "unknown parameter `{s}` (expected chi, gamma, center, eta or delta_phi)"
            ))),
        }
    }
}

/// One value per parameter. Frequencies are in hertz (not rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub chi_hz: f64,
    pub gamma_hz: f64,
    /// Single-squeezer centre or coupled splitting frequency.
    pub center_hz: f64,
    pub eta: f64,
    pub delta_phi: f64,
}

impl ParamSet {
    pub fn from_model(model: &Model, det: &DetectionParams) -> Self {
        use crate::units::hz_from_angular;
        ParamSet {
            chi_hz: hz_from_angular(model.chi()),
            gamma_hz: hz_from_angular(model.gamma()),
            center_hz: hz_from_angular(model.feature_frequency()),
            eta: det.eta,
            delta_phi: det.delta_phi,
        }
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Chi => self.chi_hz,
            Param::Gamma => self.gamma_hz,
            Param::Center => self.center_hz,
            Param::Eta => self.eta,
            Param::DeltaPhi => self.delta_phi,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Chi => self.chi_hz = v,
            Param::Gamma => self.gamma_hz = v,
            Param::Center => self.center_hz = v,
            Param::Eta => self.eta = v,
            Param::DeltaPhi => self.delta_phi = v,
        }
    }

    pub fn model(&self, kind: ModelKind) -> Result<Model> {
        Ok(match kind {
            ModelKind::Single => Model::Single(SqueezerParams::from_hz(self.chi_hz, self.gamma_hz, self.center_hz)?),
            ModelKind::Coupled => Model::Coupled(CoupledParams::from_hz(self.chi_hz, self.gamma_hz, self.center_hz)?),
        })
    }

    pub fn detection(&self) -> Result<DetectionParams> {
        DetectionParams::new(self.eta, self.delta_phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Residuals in dB.
    #[default]
    Db,
    Linear,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db" => Ok(Weighting::Db),
            "linear" => Ok(Weighting::Linear),
            _ => Err(Error::argument(format!("unknown weighting `{s}` (expected db or linear)"))),
        }
    }
}

/// Which traces enter the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceSelection {
    #[default]
    Both,
    LowerOnly,
    UpperOnly,
}

impl TraceSelection {
    fn upper(self) -> bool {
        self != TraceSelection::LowerOnly
    }

    fn lower(self) -> bool {
        self != TraceSelection::UpperOnly
    }
}

/// Closed intervals per parameter, in the units of [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub chi_hz: (f64, f64),
    pub gamma_hz: (f64, f64),
    /// `None` means the span of the trace grid.
    pub center_hz: Option<(f64, f64)>,
    pub eta: (f64, f64),
    pub delta_phi: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            chi_hz: (0.0, f64::INFINITY),
            gamma_hz: (0.0, f64::INFINITY),
            center_hz: None,
            eta: (1e-6, 1.0),
            delta_phi: (0.0, FRAC_PI_4),
        }
    }
}

impl Bounds {
    pub fn get(&self, p: Param, grid_hz: &[f64]) -> (f64, f64) {
        match p {
            Param::Chi => self.chi_hz,
            Param::Gamma => self.gamma_hz,
            Param::Center => self.center_hz.unwrap_or((grid_hz[0], grid_hz[grid_hz.len() - 1])),
            Param::Eta => self.eta,
            Param::DeltaPhi => self.delta_phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub traces: TracePair,
    pub kind: ModelKind,
    pub fixed: BTreeMap<Param, f64>,
    pub bounds: Bounds,
    pub weighting: Weighting,
    pub selection: TraceSelection,
    pub init: Option<ParamSet>,
}

/// Serializable settings of a [`FitProblem`] (everything except the data).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    #[serde(default)]
    pub fixed: BTreeMap<Param, f64>,
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub selection: TraceSelection,
    #[serde(default)]
    pub init: Option<ParamSet>,
}

impl FitProblem {
    pub fn new(traces: TracePair, kind: ModelKind) -> Self {
        FitProblem {
            traces,
            kind,
            fixed: BTreeMap::new(),
            bounds: Bounds::default(),
            weighting: Weighting::Db,
            selection: TraceSelection::Both,
            init: None,
        }
    }

    pub fn with_settings(traces: TracePair, kind: ModelKind, settings: FitSettings) -> Self {
        FitProblem {
            traces,
            kind,
            fixed: settings.fixed,
            bounds: settings.bounds.unwrap_or_default(),
            weighting: settings.weighting,
            selection: settings.selection,
            init: settings.init,
        }
    }

    pub fn settings(&self) -> FitSettings {
        FitSettings {
            fixed: self.fixed.clone(),
            bounds: Some(self.bounds),
            weighting: self.weighting,
            selection: self.selection,
            init: self.init,
        }
    }

    pub fn pin(mut self, p: Param, value: f64) -> Self {
        self.fixed.insert(p, value);
        self
    }

    pub fn bound(&self, p: Param) -> (f64, f64) {
        self.bounds.get(p, &self.traces.frequencies)
    }

    pub fn free_params(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|p| !self.fixed.contains_key(p)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let (lo, hi) = self.bound(p);
            if !(lo < hi) || lo.is_nan() || hi.is_nan() {
                return Err(Error::argument(format!("bounds for {p} must satisfy lo < hi, got ({lo}, {hi})")));
            }
            if let Some(&v) = self.fixed.get(&p) {
                if !(lo..=hi).contains(&v) {
                    return Err(Error::argument(format!("{p} pinned to {v}, outside its bounds ({lo}, {hi})")));
                }
            }
        }
        if let (Some(chi), Some(gamma)) = (self.fixed.get(&Param::Chi), self.fixed.get(&Param::Gamma)) {
            if chi >= gamma {
                return Err(Error::argument(format!("pinned chi = {chi} Hz is not below pinned gamma = {gamma} Hz")));
            }
        }
        if let Some(&eta) = self.fixed.get(&Param::Eta) {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::argument(format!("pinned eta = {eta} is outside (0, 1]")));
            }
        }
        if self.kind == ModelKind::Coupled {
            if let Some(&c) = self.fixed.get(&Param::Center) {
                if !(c > 0.0) {
                    return Err(Error::argument("pinned splitting frequency must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Model values at every grid point in the order they enter the residual.
    pub fn model_traces(&self, p: &ParamSet) -> Result<(Vec<f64>, Vec<f64>)> {
        let model = p.model(self.kind)?;
        let det = p.detection()?;
        let mut upper = Vec::with_capacity(self.traces.len());
        let mut lower = Vec::with_capacity(self.traces.len());
        for &f in &self.traces.frequencies {
            let v = model.variances(angular_from_hz(f))?;
            upper.push(v_detected(v, &det, Quadrature::Plus));
            lower.push(v_detected(v, &det, Quadrature::Minus));
        }
        Ok((upper, lower))
    }

    /// Weighted residual `model − data`, upper block first.
    pub fn residuals(&self, p: &ParamSet) -> Result<Vec<f64>> {
        self.residuals_with(p, self.weighting)
    }

    fn residuals_with(&self, p: &ParamSet, weighting: Weighting) -> Result<Vec<f64>> {
        let (mu, ml) = self.model_traces(p)?;
        let transform = |v: f64| match weighting {
            Weighting::Db => 10.0 * v.log10(),
            Weighting::Linear => v,
        };
        let mut r = Vec::with_capacity(self.residual_len());
        if self.selection.upper() {
            r.extend(mu.iter().zip(&self.traces.upper).map(|(m, d)| transform(*m) - transform(*d)));
        }
        if self.selection.lower() {
            r.extend(ml.iter().zip(&self.traces.lower).map(|(m, d)| transform(*m) - transform(*d)));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("model produced a non-finite residual"));
        }
        Ok(r)
    }

    fn residual_len(&self) -> usize {
        self.traces.len() * (self.selection.upper() as usize + self.selection.lower() as usize)
    }
}

/// Free coordinate of the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// `γ + χ`
    Sum,
    /// `γ − χ`
    Diff,
    Plain(Param),
}

/// Mapping between the solver's scaled coordinates and a [`ParamSet`].
#[derive(Debug, Clone)]
struct Layout {
    coords: Vec<Coord>,
    scale: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    base: ParamSet,
}

impl Layout {
    fn new(problem: &FitProblem, start: &ParamSet) -> Self {
        let fixed = |p| problem.fixed.contains_key(&p);
        let mut base = *start;
        for (&p, &v) in &problem.fixed {
            base.set(p, v);
        }
        let mut coords = Vec::new();
        let mut bounds = Vec::new();
        let (cl, ch) = problem.bound(Param::Chi);
        let (gl, gh) = problem.bound(Param::Gamma);
        match (fixed(Param::Chi), fixed(Param::Gamma)) {
            (false, false) => {
                let d0 = base.gamma_hz - base.chi_hz;
                coords.push(Coord::Sum);
                bounds.push((cl + gl, ch + gh));
                coords.push(Coord::Diff);
                bounds.push(((gl - ch).max(1e-6 * d0.abs().max(1.0)), gh - cl));
            }
            (true, false) => {
                coords.push(Coord::Plain(Param::Gamma));
                bounds.push((gl.max(base.chi_hz * (1.0 + 1e-9)), gh));
            }
            (false, true) => {
                coords.push(Coord::Plain(Param::Chi));
                bounds.push((cl, ch.min(base.gamma_hz * (1.0 - 1e-9))));
            }
            (true, true) => {}
        }
        for p in [Param::Center, Param::Eta, Param::DeltaPhi] {
            if !fixed(p) {
                coords.push(Coord::Plain(p));
                bounds.push(problem.bound(p));
            }
        }
        let raw: Vec<f64> = coords.iter().map(|c| Self::raw_of(*c, &base)).collect();
        let scale: Vec<f64> = coords
            .iter()
            .zip(&raw)
            .map(|(c, v)| {
                let floor = match c {
                    Coord::Plain(Param::Eta) => 0.1,
                    Coord::Plain(Param::DeltaPhi) => 0.01,
                    _ => 1.0,
                };
                v.abs().max(floor)
            })
            .collect();
        let lo = bounds.iter().zip(&scale).map(|(b, s)| b.0 / s).collect();
        let hi = bounds.iter().zip(&scale).map(|(b, s)| b.1 / s).collect();
        Layout { coords, scale, lo, hi, base }
    }

    fn raw_of(c: Coord, p: &ParamSet) -> f64 {
        match c {
            Coord::Sum => p.gamma_hz + p.chi_hz,
            Coord::Diff => p.gamma_hz - p.chi_hz,
            Coord::Plain(q) => p.get(q),
        }
    }

    fn encode(&self, p: &ParamSet) -> Vec<f64> {
        self.coords.iter().zip(&self.scale).map(|(c, s)| Self::raw_of(*c, p) / s).collect()
    }

    fn decode(&self, z: &[f64]) -> ParamSet {
        let mut p = self.base;
        let (mut sum, mut diff) = (None, None);
        for ((c, s), v) in self.coords.iter().zip(&self.scale).zip(z) {
            let v = v * s;
            match c {
                Coord::Sum => sum = Some(v),
                Coord::Diff => diff = Some(v),
                Coord::Plain(q) => p.set(*q, v),
            }
        }
        if let (Some(s), Some(d)) = (sum, diff) {
            p.chi_hz = 0.5 * (s - d);
            p.gamma_hz = 0.5 * (s + d);
        }
        p
    }

    /// `∂(param)/∂z`, rows in [`Param::ALL`] order.
    fn linear_map(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(Param::ALL.len(), self.coords.len());
        let row = |p: Param| Param::ALL.iter().position(|q| *q == p).unwrap();
        for (j, (c, s)) in self.coords.iter().zip(&self.scale).enumerate() {
            match c {
                Coord::Sum => {
                    m[(row(Param::Chi), j)] = 0.5 * s;
                    m[(row(Param::Gamma), j)] = 0.5 * s;
                }
                Coord::Diff => {
                    m[(row(Param::Chi), j)] = -0.5 * s;
                    m[(row(Param::Gamma), j)] = 0.5 * s;
                }
                Coord::Plain(q) => m[(row(*q), j)] = *s,
            }
        }
        m
    }

    fn free_params(&self) -> Vec<Param> {
        let mut out: Vec<Param> = Vec::new();
        for c in &self.coords {
            match c {
                Coord::Sum | Coord::Diff => {
                    for p in [Param::Chi, Param::Gamma] {
                        if !out.contains(&p) {
                            out.push(p);
                        }
                    }
                }
                Coord::Plain(p) => out.push(*p),
            }
        }
        out.sort();
        out
    }
}

/// Residual value used for every bin when the model cannot be evaluated.
const PENALTY: f64 = 1e3;

fn objective<'a>(problem: &'a FitProblem, layout: &'a Layout) -> impl Fn(&[f64]) -> Vec<f64> + 'a {
    let m = problem.residual_len();
    move |z: &[f64]| problem.residuals(&layout.decode(z)).unwrap_or_else(|_| vec![PENALTY; m])
}

/// SHA-256 digest of an input file, recorded for provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    /// RMS of the residual in dB, whatever the weighting.
    pub residual_rms_db: f64,
    /// Sum of squared weighted residuals.
    pub rss: f64,
    pub points: usize,
    /// Largest projected gradient cosine at the optimum.
    pub gradient_cosine: f64,
    /// Ratio of extreme singular values of the scaled Jacobian.
    pub condition: f64,
    pub weighting: Weighting,
    pub selection: TraceSelection,
    pub free: Vec<Param>,
    pub params: ParamSet,
    /// Standard errors from the Jacobian; zero for pinned parameters.
    pub sigma: ParamSet,
    #[serde(default)]
    pub inputs: Vec<InputDigest>,
    /// Objective after each accepted step.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn model_params(&self) -> Result<(Model, DetectionParams)> {
        Ok((self.params.model(self.model)?, self.params.detection()?))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fit result serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| crate::synth::line_of(text, s.start));
            crate::kv::parse_error(None, line, e.message().to_string())
        })
    }
}

/// Fit the problem, starting from `init` or from [`initial_guess`].
pub fn solve(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let start = match problem.init {
        Some(p) => p,
        None => {
            let mut g = initial_guess(&problem.traces, problem.kind)?;
            for p in Param::ALL {
                let (lo, hi) = problem.bound(p);
                g.set(p, g.get(p).clamp(lo, hi));
            }
            g
        }
    };
    Ok(solve_from(problem, &start, LmOptions::default()))
}

pub(crate) fn solve_from(problem: &FitProblem, start: &ParamSet, opts: LmOptions) -> FitResult {
    let layout = Layout::new(problem, start);
    let f = objective(problem, &layout);
    let z0 = layout.encode(&layout.base);
    let out = lm::minimize(&f, &z0, &layout.lo, &layout.hi, opts);
    let params = layout.decode(&out.x);

    let m = out.residuals.len();
    let n = out.x.len();
    let rss: f64 = out.residuals.iter().map(|v| v * v).sum();
    let (sigma_vec, condition) = if n == 0 {
        (vec![0.0; Param::ALL.len()], 1.0)
    } else {
        let svd = out.jacobian.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let s2 = rss / (m.saturating_sub(n)).max(1) as f64;
        let vt = svd.v_t.as_ref().expect("requested");
        let tol = smax * 1e-14 * m.max(n) as f64;
        let mut inv = DMatrix::zeros(n, n);
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if sv > tol {
                let v = vt.row(k).transpose();
                inv += (&v * v.transpose()) / (sv * sv);
            }
        }
        let map = layout.linear_map();
        let cov = &map * (inv * s2) * map.transpose();
        (cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(), condition)
    };
    let mut sigma = ParamSet { chi_hz: 0.0, gamma_hz: 0.0, center_hz: 0.0, eta: 0.0, delta_phi: 0.0 };
    for (p, s) in Param::ALL.iter().zip(&sigma_vec) {
        sigma.set(*p, *s);
    }
    let residual_rms_db = match problem.weighting {
        Weighting::Db => (rss / m as f64).sqrt(),
        Weighting::Linear => problem
            .residuals_with(&params, Weighting::Db)
            .map(|r| (r.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt())
            .unwrap_or(f64::INFINITY),
    };
    FitResult {
        model: problem.kind,
        converged: out.termination.converged(),
        termination: out.termination,
        iterations: out.iterations,
        residual_rms_db,
        rss,
        points: m,
        gradient_cosine: out.gradient_cosine,
        condition,
        weighting: problem.weighting,
        selection: problem.selection,
        free: layout.free_params(),
        params,
        sigma,
        inputs: Vec::new(),
        history: out.history,
    }
}

/// Finite-difference Jacobian of the residual with respect to the free
/// physical parameters (in [`FitProblem::free_params`] order, frequencies in Hz).
pub fn residual_jacobian(problem: &FitProblem, at: &ParamSet) -> Result<DMatrix<f64>> {
    problem.validate()?;
    let free = problem.free_params();
    let mut base = *at;
    for (&p, &v) in &problem.fixed {
        base.set(p, v);
    }
    let f = |x: &[f64]| {
        let mut q = base;
        for (p, v) in free.iter().zip(x) {
            q.set(*p, *v);
        }
        problem.residuals(&q).unwrap_or_else(|_| vec![PENALTY; problem.residual_len()])
    };
    let x: Vec<f64> = free.iter().map(|p| base.get(*p)).collect();
    // step relative to each value via a per-coordinate scale
    let scale: Vec<f64> = x.iter().map(|v| v.abs().max(1e-3)).collect();
    let g = |z: &[f64]| f(&z.iter().zip(&scale).map(|(a, s)| a * s).collect::<Vec<_>>());
    let z: Vec<f64> = x.iter().zip(&scale).map(|(a, s)| a / s).collect();
    let r0 = problem.residuals(&base)?;
    let inf = vec![f64::INFINITY; z.len()];
    let ninf = vec![f64::NEG_INFINITY; z.len()];
    let mut jac = fd_jacobian(&g, &z, &r0, &ninf, &inf);
    for (j, s) in scale.iter().enumerate() {
        jac.column_mut(j).unscale_mut(*s);
    }
    Ok(jac)
}
