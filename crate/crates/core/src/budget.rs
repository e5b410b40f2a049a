//! Efficiency ledgers, cavity loss sheets and the best-squeezing forecast.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, parse_error};
use crate::noise::{
    splitting_frequency, threshold_power, v_detected, v_single, CavityGeometry, DetectionParams, Quadrature,
    SqueezerParams,
};
use crate::optimize::scan_minimize;
use crate::units::{angular_from_hz, db_from_linear, hz_from_angular, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorStatus {
    Measured,
    /// Solved from the overall loss budget.
    Inferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    /// `None` only for an inferred factor that has not been solved yet.
    pub value: Option<f64>,
    pub status: FactorStatus,
}

impl Factor {
    pub fn measured(name: impl Into<String>, value: f64) -> Self {
        Factor { name: name.into(), value: Some(value), status: FactorStatus::Measured }
    }

    pub fn inferred(name: impl Into<String>) -> Self {
        Factor { name: name.into(), value: None, status: FactorStatus::Inferred }
    }
}

/// Ordered product of named efficiencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyLedger {
    factors: Vec<Factor>,
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::argument(format!("efficiency `{name}` must lie in (0, 1], got {v}")));
    }
    Ok(())
}

impl EfficiencyLedger {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let inferred = factors.iter().filter(|f| f.status == FactorStatus::Inferred).count();
        if inferred > 1 {
            return Err(Error::argument("at most one factor can be inferred per ledger"));
        }
        for f in &factors {
            match (f.status, f.value) {
                (_, Some(v)) => check_fraction(&f.name, v)?,
                (FactorStatus::Measured, None) => {
                    return Err(Error::argument(format!("measured factor `{}` has no value", f.name)))
                }
                (FactorStatus::Inferred, None) => {}
            }
        }
        Ok(EfficiencyLedger { factors })
    }

    /// Ledger of measured factors only.
    pub fn measured<S: AsRef<str>>(values: &[(S, f64)]) -> Result<Self> {
        Self::new(values.iter().map(|(n, v)| Factor::measured(n.as_ref(), *v)).collect())
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.factors.iter().find(|f| f.name == name).and_then(|f| f.value)
    }

    pub fn inferred(&self) -> Option<&Factor> {
        self.factors.iter().find(|f| f.status == FactorStatus::Inferred)
    }

    /// Product of all factors. Every factor must carry a value.
    pub fn total_efficiency(&self) -> Result<f64> {
        if self.factors.is_empty() {
            return Err(Error::argument("empty efficiency ledger"));
        }
        self.factors.iter().try_fold(1.0, |acc, f| match f.value {
            Some(v) => Ok(acc * v),
            None => Err(Error::argument(format!(
                "factor `{}` is marked inferred and has not been solved",
                f.name
            ))),
        })
    }

    /// Solve the single inferred factor so that the ledger multiplies to `total`.
    pub fn infer_factor(&self, total: f64) -> Result<Self> {
        let idx = self
            .factors
            .iter()
            .position(|f| f.status == FactorStatus::Inferred)
            .ok_or_else(|| Error::argument("ledger has no factor marked inferred"))?;
        if !(total > 0.0 && total <= 1.0) {
            return Err(Error::argument(format!("total efficiency must lie in (0, 1], got {total}")));
        }
        let others: f64 = self
            .factors
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, f)| f.value.expect("only the inferred factor may be unset"))
            .product();
        let mut value = total / others;
        if value > 1.0 && value <= 1.0 + 1e-12 {
            value = 1.0;
        }
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::InconsistentBudget(format!(
                "`{}` would have to be {value:.6}: the other factors multiply to {others:.6}, below the total {total:.6}",
                self.factors[idx].name
            )));
        }
        let mut factors = self.factors.clone();
        factors[idx].value = Some(value);
        Ok(EfficiencyLedger { factors })
    }
}

/// Output-coupler transmission and intracavity round-trip losses of one cavity.
///
/// Double-pass elements are entered as twice their single-pass loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityLossSheet {
    pub t_out: f64,
    pub intra_losses: Vec<(String, f64)>,
    /// One-way optical length in meters.
    pub length: f64,
}

impl CavityLossSheet {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.t_out) {
            return Err(Error::domain(format!("t_out must lie in [0, 1), got {}", self.t_out)));
        }
        for (name, l) in &self.intra_losses {
            if !(0.0..1.0).contains(l) {
                return Err(Error::domain(format!("loss `{name}` must lie in [0, 1), got {l}")));
            }
        }
        if self.t_out + self.total_loss() >= 1.0 {
            return Err(Error::domain("transmission plus losses must stay below 1"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::domain(format!("cavity length must be positive, got {}", self.length)));
        }
        Ok(())
    }

    pub fn total_loss(&self) -> f64 {
        self.intra_losses.iter().map(|(_, l)| l).sum()
    }

    pub fn with_loss(mut self, name: impl Into<String>, loss: f64) -> Self {
        self.intra_losses.push((name.into(), loss));
        self
    }
}

/// Intracavity loss that yields escape efficiency `eta_esc` through an output
/// coupler of transmission `t_out`.
pub fn residual_loss_for_escape(t_out: f64, eta_esc: f64) -> f64 {
    t_out / eta_esc - t_out
}

/// `T_out / (T_out + ΣL)`.
pub fn escape_efficiency(sheet: &CavityLossSheet) -> Result<f64> {
    sheet.validate()?;
    if sheet.t_out == 0.0 {
        return Err(Error::domain("escape efficiency is undefined without output coupling"));
    }
    Ok(sheet.t_out / (sheet.t_out + sheet.total_loss()))
}

/// Amplitude decay rate `c (T_out + ΣL) / (4 L)` in rad/s.
pub fn decay_rate(sheet: &CavityLossSheet) -> Result<f64> {
    sheet.validate()?;
    Ok(SPEED_OF_LIGHT * (sheet.t_out + sheet.total_loss()) / (4.0 * sheet.length))
}

/// Free spectral range in hertz for a one-way optical length in meters.
pub fn free_spectral_range(length: f64) -> Result<f64> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::domain(format!("cavity length must be positive, got {length}")));
    }
    Ok(SPEED_OF_LIGHT / (2.0 * length))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimum {
    /// A finite pump level minimises the squeezed variance.
    Interior,
    /// The variance keeps falling toward threshold; the reported value is the
    /// supremum approached as `chi/gamma -> 1`, not an attainable optimum.
    ThresholdLimit,
    /// No pump level produces squeezing (the readout never drops below shot noise).
    NoSqueezing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    /// Optimal `chi/gamma`.
    pub ratio: f64,
    pub variance: f64,
    pub squeezing_db: f64,
    pub eta: f64,
    pub optimum: Optimum,
}

const FORECAST_SCAN_POINTS: usize = 2001;
const RATIO_CEILING: f64 = 1.0 - 1e-9;

/// Best squeezed-quadrature level on resonance over pump strength `chi/gamma`
/// in (0, 1), for the ledger's total efficiency and readout phase error.
pub fn forecast_best_squeezing(ledger: &EfficiencyLedger, delta_phi: f64) -> Result<Forecast> {
    let eta = ledger.total_efficiency()?;
    forecast_for_efficiency(eta, delta_phi)
}

pub fn forecast_for_efficiency(eta: f64, delta_phi: f64) -> Result<Forecast> {
    let det = DetectionParams::new(eta, delta_phi)?;
    let squeezed = |x: f64| {
        let p = SqueezerParams { chi: x, gamma: 1.0, center: 0.0 };
        v_detected(v_single(&p, 0.0).expect("x below threshold"), &det, Quadrature::Minus)
    };
    let best = scan_minimize(squeezed, 0.0, RATIO_CEILING, FORECAST_SCAN_POINTS, 1e-13);

    if best.value >= 1.0 {
        return Ok(Forecast { ratio: 0.0, variance: 1.0, squeezing_db: 0.0, eta, optimum: Optimum::NoSqueezing });
    }
    if best.scan_index == FORECAST_SCAN_POINTS - 1 {
        // Anti-squeezing is never mixed in, so the variance falls monotonically
        // to the loss floor as the squeezed quadrature vanishes at threshold.
        let (s, c) = delta_phi.sin_cos();
        if s * s == 0.0 {
            let limit = 1.0 - eta * c * c;
            let squeezing_db = if limit > 0.0 { db_from_linear(limit)? } else { f64::NEG_INFINITY };
            return Ok(Forecast { ratio: 1.0, variance: limit, squeezing_db, eta, optimum: Optimum::ThresholdLimit });
        }
    }
    Ok(Forecast {
        ratio: best.x,
        variance: best.value,
        squeezing_db: db_from_linear(best.value)?,
        eta,
        optimum: Optimum::Interior,
    })
}

/// Pump power and the coupling/decay rates observed at that power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpPoint {
    /// Milliwatts.
    pub power_mw: f64,
    /// rad/s.
    pub chi: f64,
    /// rad/s.
    pub gamma: f64,
}

/// Everything a budget file can describe. Sections are optional; the report
/// includes whatever can be derived from what is present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BudgetSheet {
    pub ledger: Option<EfficiencyLedger>,
    pub total: Option<f64>,
    pub delta_phi: Option<f64>,
    pub loss_sheet: Option<CavityLossSheet>,
    pub geometry: Option<CavityGeometry>,
    pub pump: Option<PumpPoint>,
}

const FACTOR_PREFIX: &str = "eta_";
const LOSS_PREFIX: &str = "loss_";

impl BudgetSheet {
    /// Parse the key-value budget format.
    ///
    /// ```text
    /// eta_esc = 0.975        # efficiency factor, kept in file order
    /// eta_qe = inferred      # solved from `total`
    /// total = 0.851
    /// delta_phi = 0.020      # rad
    /// t_out = 0.097          # loss sheet
    /// loss_qwp = 0.016
    /// length = 1.372         # m
    /// l_test = 1.415         # geometry, m
    /// l_sqz = 1.372
    /// t_c = 0.19
    /// pump_mw = 55           # threshold estimate
    /// chi_hz = 704e3
    /// gamma_hz = 868e3
    /// ```
    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let entries = kv::parse(text, path)?;
        let mut factors = Vec::new();
        let mut losses = Vec::new();
        let mut scalars = std::collections::HashMap::new();
        let mut first_line = std::collections::HashMap::new();

        for e in &entries {
            if let Some(name) = e.key.strip_prefix(FACTOR_PREFIX) {
                if e.value.eq_ignore_ascii_case("inferred") {
                    factors.push(Factor::inferred(name));
                } else {
                    let v = e.number(path)?;
                    check_fraction(&e.key, v).map_err(|err| parse_error(path, e.line, err.to_string()))?;
                    factors.push(Factor::measured(name, v));
                }
                continue;
            }
            if let Some(name) = e.key.strip_prefix(LOSS_PREFIX) {
                losses.push((name.to_string(), e.number(path)?));
                first_line.entry("loss").or_insert(e.line);
                continue;
            }
            match e.key.as_str() {
                "total" | "delta_phi" | "t_out" | "length" | "l_test" | "l_sqz" | "t_c" | "pump_mw" | "chi_hz"
                | "gamma_hz" => {
                    scalars.insert(e.key.clone(), e.number(path)?);
                    first_line.insert(key_group(&e.key), e.line);
                }
                other => return Err(parse_error(path, e.line, format!("unknown key `{other}`"))),
            }
        }

        let group_error = |group: &str, msg: String| parse_error(path, *first_line.get(group).unwrap_or(&0), msg);
        let take = |k: &str| scalars.get(k).copied();

        let ledger = if factors.is_empty() {
            None
        } else {
            Some(EfficiencyLedger::new(factors).map_err(|e| parse_error(path, entries[0].line, e.to_string()))?)
        };

        let loss_sheet = match (take("t_out"), take("length")) {
            (Some(t_out), Some(length)) => {
                let sheet = CavityLossSheet { t_out, intra_losses: losses, length };
                sheet.validate().map_err(|e| group_error("sheet", e.to_string()))?;
                Some(sheet)
            }
            (None, None) if losses.is_empty() => None,
            _ => return Err(group_error("sheet", "loss sheet needs both `t_out` and `length`".into())),
        };

        let geometry = match (take("l_test"), take("l_sqz"), take("t_c")) {
            (Some(a), Some(b), Some(t)) => {
                Some(CavityGeometry::new(a, b, t).map_err(|e| group_error("geometry", e.to_string()))?)
            }
            (None, None, None) => None,
            _ => return Err(group_error("geometry", "geometry needs `l_test`, `l_sqz` and `t_c`".into())),
        };

        let pump = match (take("pump_mw"), take("chi_hz"), take("gamma_hz")) {
            (Some(p), Some(c), Some(g)) => Some(PumpPoint {
                power_mw: p,
                chi: angular_from_hz(c),
                gamma: angular_from_hz(g),
            }),
            (None, None, None) => None,
            _ => return Err(group_error("pump", "pump point needs `pump_mw`, `chi_hz` and `gamma_hz`".into())),
        };

        Ok(BudgetSheet {
            ledger,
            total: take("total"),
            delta_phi: take("delta_phi"),
            loss_sheet,
            geometry,
            pump,
        })
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        if let Some(ledger) = &self.ledger {
            for f in ledger.factors() {
                match (f.status, f.value) {
                    (FactorStatus::Inferred, _) => writeln!(s, "{FACTOR_PREFIX}{} = inferred", f.name),
                    (_, Some(v)) => writeln!(s, "{FACTOR_PREFIX}{} = {v}", f.name),
                    (_, None) => Ok(()),
                }
                .unwrap();
            }
        }
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                writeln!(s, "{k} = {v}").unwrap();
            }
        };
        put("total", self.total);
        put("delta_phi", self.delta_phi);
        if let Some(sheet) = &self.loss_sheet {
            put("t_out", Some(sheet.t_out));
            for (name, l) in &sheet.intra_losses {
                put(&format!("{LOSS_PREFIX}{name}"), Some(*l));
            }
            put("length", Some(sheet.length));
        }
        if let Some(g) = &self.geometry {
            put("l_test", Some(g.l_test));
            put("l_sqz", Some(g.l_sqz));
            put("t_c", Some(g.t_c));
        }
        if let Some(p) = &self.pump {
            put("pump_mw", Some(p.power_mw));
            put("chi_hz", Some(hz_from_angular(p.chi)));
            put("gamma_hz", Some(hz_from_angular(p.gamma)));
        }
        s
    }

    /// Derive every quantity the sheet supports.
    pub fn evaluate(&self) -> Result<BudgetReport> {
        let mut notes = Vec::new();
        let mut report = BudgetReport::default();

        if let Some(ledger) = &self.ledger {
            let solved = match ledger.inferred() {
                Some(f) if f.value.is_none() => {
                    let total = self.total.ok_or_else(|| {
                        Error::InconsistentBudget(format!("`{}` is marked inferred but no `total` is given", f.name))
                    })?;
                    let solved = ledger.infer_factor(total)?;
                    report.inferred = Some((f.name.clone(), solved.get(&f.name).unwrap()));
                    solved
                }
                _ => ledger.clone(),
            };
            let total = solved.total_efficiency()?;
            if let (Some(given), None) = (self.total, &report.inferred) {
                if (given - total).abs() > 5e-4 {
                    notes.push(format!(
                        "stated total {given:.4} differs from the factor product {total:.4}"
                    ));
                }
            }
            report.factors = solved
                .factors()
                .iter()
                .map(|f| (f.name.clone(), f.value.unwrap(), f.status))
                .collect();
            report.total = Some(total);
            if let Some(dphi) = self.delta_phi {
                report.forecast = Some(forecast_best_squeezing(&solved, dphi)?);
            }
        }

        if let Some(sheet) = &self.loss_sheet {
            report.escape_efficiency = Some(escape_efficiency(sheet)?);
            report.decay_rate_hz = Some(hz_from_angular(decay_rate(sheet)?));
            report.fsr_hz = Some(free_spectral_range(sheet.length)?);
            notes.push("decay rate uses gamma = c (T_out + sum L) / (4 L); compare against fitted rates".into());
        }
        if let Some(g) = &self.geometry {
            report.splitting_hz = Some(hz_from_angular(splitting_frequency(g)?));
            if g.t_c > 0.1 {
                notes.push(format!(
                    "splitting frequency assumes weak coupling; t_c = {} is not small",
                    g.t_c
                ));
            }
        }
        if let Some(p) = &self.pump {
            report.threshold_mw = Some(threshold_power(p.power_mw, p.gamma, p.chi)?);
            if p.chi / p.gamma > crate::noise::NEAR_THRESHOLD_RATIO {
                notes.push("chi/gamma exceeds 0.999: operating point is at threshold".into());
            }
        }
        report.notes = notes;
        Ok(report)
    }
}

fn key_group(key: &str) -> &'static str {
    match key {
        "t_out" | "length" => "sheet",
        "l_test" | "l_sqz" | "t_c" => "geometry",
        "pump_mw" | "chi_hz" | "gamma_hz" => "pump",
        _ => "scalar",
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BudgetReport {
    pub factors: Vec<(String, f64, FactorStatus)>,
    pub total: Option<f64>,
    pub inferred: Option<(String, f64)>,
    pub escape_efficiency: Option<f64>,
    pub decay_rate_hz: Option<f64>,
    pub fsr_hz: Option<f64>,
    pub splitting_hz: Option<f64>,
    pub threshold_mw: Option<f64>,
    pub forecast: Option<Forecast>,
    pub notes: Vec<String>,
}

impl BudgetReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.factors.is_empty() {
            writeln!(s, "efficiency ledger").unwrap();
            for (name, v, status) in &self.factors {
                let mark = if *status == FactorStatus::Inferred { " (inferred)" } else { "" };
                writeln!(s, "  eta_{name:<10} {:>7.2} %{mark}", 100.0 * v).unwrap();
            }
        }
        if let Some(t) = self.total {
            writeln!(s, "  total          {:>7.2} %", 100.0 * t).unwrap();
        }
        if let Some(f) = &self.forecast {
            match f.optimum {
                Optimum::Interior => writeln!(
                    s,
                    "forecast: {:.2} dB squeezing at chi/gamma = {:.3}",
                    f.squeezing_db, f.ratio
                ),
                Optimum::ThresholdLimit => writeln!(
                    s,
                    "forecast: no finite optimum; squeezing approaches {:.2} dB as chi/gamma -> 1",
                    f.squeezing_db
                ),
                Optimum::NoSqueezing => writeln!(s, "forecast: no squeezing at any pump level"),
            }
            .unwrap();
        }
        let mut line = |label: &str, v: Option<String>| {
            if let Some(v) = v {
                writeln!(s, "{label:<22}{v}").unwrap();
            }
        };
        line("escape efficiency", self.escape_efficiency.map(|v| format!("{:.2} %", 100.0 * v)));
        line("decay rate", self.decay_rate_hz.map(|v| format!("2pi x {:.1} kHz", v / 1e3)));
        line("free spectral range", self.fsr_hz.map(|v| format!("{:.3} MHz", v / 1e6)));
        line("splitting frequency", self.splitting_hz.map(|v| format!("2pi x {:.3} MHz", v / 1e6)));
        line("threshold power", self.threshold_mw.map(|v| format!("{v:.1} mW")));
        for n in &self.notes {
            writeln!(s, "note: {n}").unwrap();
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (name, v, status) in &self.factors {
            writeln!(s, "eta_{name} = {v}").unwrap();
            if *status == FactorStatus::Inferred {
                writeln!(s, "inferred = eta_{name}").unwrap();
            }
        }
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                writeln!(s, "{k} = {v}").unwrap();
            }
        };
        put("total", self.total);
        put("escape_efficiency", self.escape_efficiency);
        put("decay_rate_hz", self.decay_rate_hz);
        put("fsr_hz", self.fsr_hz);
        put("splitting_hz", self.splitting_hz);
        put("threshold_mw", self.threshold_mw);
        if let Some(f) = &self.forecast {
            put("forecast_ratio", Some(f.ratio));
            put("forecast_db", Some(f.squeezing_db));
            let kind = match f.optimum {
                Optimum::Interior => "interior",
                Optimum::ThresholdLimit => "threshold_limit",
                Optimum::NoSqueezing => "none",
            };
            writeln!(s, "forecast_optimum = {kind}").unwrap();
        }
        s
    }
}
