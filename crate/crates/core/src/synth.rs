//! Seeded simulation of a spectrum-analyser measurement campaign with
//! free-running readout phase.
//!
//! Each spectrum sees one slow readout angle `theta` (redrawn per spectrum)
//! on top of fast phase noise whose strength is the detection `delta_phi`.
//! The fast noise is symmetric, so it mixes a fraction `sin²(delta_phi)` of
//! the conjugate quadrature into the readout; with `theta` at 0 or π/2 the
//! expected spectrum is exactly the detection model's plus or minus readout.
//! Spectrum-analyser averaging is modelled as multiplicative Gaussian noise
//! with relative standard deviation `1/sqrt(averages_per_bin)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_spectrum, EnsembleManifest};
use crate::kv::parse_error;
use crate::noise::{mix_detected, CoupledParams, DetectionParams, Model, Quadrature, QuadraturePair, SqueezerParams};
use crate::presets::linspace;
use crate::spectra::{RecordMeta, SpectrumRecord};
use crate::units::{angular_from_hz, hz_from_angular};

/// Per-spectrum slow phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseModel {
    /// Uniform on `[0, π)`.
    FreeRunningUniform,
    /// Gaussian with standard deviation `sigma` (rad) about the nominal quadrature.
    GaussianJitter { sigma: f64 },
}

/// Draw the readout angle of one spectrum. `nominal` only matters for jitter:
/// `Plus` centres the draw on 0, `Minus` on π/2.
pub fn sample_phase<R: Rng + ?Sized>(model: &PhaseModel, nominal: Quadrature, rng: &mut R) -> f64 {
    match *model {
        PhaseModel::FreeRunningUniform => rng.gen_range(0.0..PI),
        PhaseModel::GaussianJitter { sigma } => {
            let z: f64 = rng.sample(StandardNormal);
            let centre = match nominal {
                Quadrature::Plus => 0.0,
                Quadrature::Minus => FRAC_PI_2,
            };
            centre + sigma * z
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub model: Model,
    /// `eta` is the fixed loss; `delta_phi` is the fast phase-noise scale.
    pub detection: DetectionParams,
    pub grid_hz: Vec<f64>,
    pub n_spectra: usize,
    /// `None` disables estimator noise.
    pub averages_per_bin: Option<u64>,
    pub seed: u64,
    pub phase_model: PhaseModel,
    /// Shot-noise level above detector dark noise; `None` means no dark noise.
    pub dark_clearance_db: Option<f64>,
    /// Apply estimator noise to the dark and shot references too.
    pub noisy_references: bool,
}

impl CampaignConfig {
    pub const DEFAULT_AVERAGES: u64 = 1000;

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.detection.validate()?;
        if self.n_spectra == 0 {
            return Err(Error::argument("n_spectra must be at least 1"));
        }
        if self.averages_per_bin == Some(0) {
            return Err(Error::argument("averages_per_bin must be at least 1"));
        }
        if let PhaseModel::GaussianJitter { sigma } = self.phase_model {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::argument(format!("phase jitter sigma must be >= 0, got {sigma}")));
            }
        }
        if let Some(db) = self.dark_clearance_db {
            if !db.is_finite() {
                return Err(Error::argument("dark clearance must be finite"));
            }
        }
        // reuse the record invariants for the grid
        SpectrumRecord::new(self.grid_hz.clone(), vec![0.0; self.grid_hz.len()], RecordMeta::default())?;
        Ok(())
    }

    fn dark_level(&self) -> f64 {
        self.dark_clearance_db.map_or(0.0, |db| 10f64.powf(-db / 10.0))
    }
}

/// Sampled phases of every spectrum in a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignTruth {
    pub phases: Vec<f64>,
    /// Fraction of the amplitude-quadrature variance in each spectrum's readout.
    pub plus_weights: Vec<f64>,
}

impl CampaignTruth {
    /// Readout angle of the fixed-angle detection model that matches the
    /// average of the given spectra, measured from the nearer quadrature
    /// `q` (`Minus` for a squeezed group, `Plus` for an anti-squeezed one).
    pub fn effective_delta_phi(&self, indices: &[usize], q: Quadrature) -> f64 {
        let mix: f64 = indices
            .iter()
            .map(|&i| match q {
                Quadrature::Minus => self.plus_weights[i],
                Quadrature::Plus => 1.0 - self.plus_weights[i],
            })
            .sum::<f64>()
            / indices.len() as f64;
        mix.clamp(0.0, 1.0).sqrt().asin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub ensemble: Vec<SpectrumRecord>,
    pub dark: SpectrumRecord,
    pub shot: SpectrumRecord,
    pub truth: CampaignTruth,
}

const DARK_STREAM: u64 = u64::MAX;
const SHOT_STREAM: u64 = u64::MAX - 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn apply_estimator_noise(power: &mut [f64], averages: Option<u64>, rng: &mut ChaCha8Rng) {
    if let Some(m) = averages {
        let rel = 1.0 / (m as f64).sqrt();
        for p in power.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *p *= (1.0 + rel * z).max(0.0);
        }
    }
}

/// Weight of the amplitude quadrature for slow angle `theta` and fast noise `delta_phi`.
fn quadrature_weights(theta: f64, delta_phi: f64) -> (f64, f64) {
    let (st, ct) = theta.sin_cos();
    let (sd, cd) = delta_phi.sin_cos();
    let (st2, ct2, sd2, cd2) = (st * st, ct * ct, sd * sd, cd * cd);
    (ct2 * cd2 + st2 * sd2, st2 * cd2 + ct2 * sd2)
}

/// Generate the ensemble, dark and shot references and the phase record.
///
/// Spectrum `k` draws from its own random stream derived from `(seed, k)`,
/// so the output does not depend on how generation is scheduled.
pub fn generate_campaign(cfg: &CampaignConfig) -> Result<Campaign> {
    cfg.validate()?;
    let underlying: Vec<QuadraturePair> = cfg
        .grid_hz
        .iter()
        .map(|&f| cfg.model.variances(angular_from_hz(f)))
        .collect::<Result<_>>()?;
    let dark_level = cfg.dark_level();
    let eta = cfg.detection.eta;

    let spectra: Vec<(SpectrumRecord, f64, f64)> = (0..cfg.n_spectra)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(cfg.seed, k as u64);
            let nominal = if k % 2 == 0 { Quadrature::Plus } else { Quadrature::Minus };
            let theta = sample_phase(&cfg.phase_model, nominal, &mut rng);
            let (w_plus, w_minus) = quadrature_weights(theta, cfg.detection.delta_phi);
            let mut power: Vec<f64> = underlying
                .iter()
                .map(|v| mix_detected(*v, w_plus, w_minus, eta, Quadrature::Plus) + dark_level)
                .collect();
            apply_estimator_noise(&mut power, cfg.averages_per_bin, &mut rng);
            let rec = SpectrumRecord::new(cfg.grid_hz.clone(), power, RecordMeta::new(format!("spectrum_{k}"), k))?;
            Ok((rec, theta, w_plus))
        })
        .collect::<Result<_>>()?;

    let reference = |level: f64, label: &str, stream: u64| {
        let mut power = vec![level; cfg.grid_hz.len()];
        if cfg.noisy_references {
            apply_estimator_noise(&mut power, cfg.averages_per_bin, &mut stream_rng(cfg.seed, stream));
        }
        SpectrumRecord::new(cfg.grid_hz.clone(), power, RecordMeta::new(label, 0))
    };
    let dark = reference(dark_level, "dark", DARK_STREAM)?;
    let shot = reference(1.0 + dark_level, "shot", SHOT_STREAM)?;

    let mut ensemble = Vec::with_capacity(spectra.len());
    let mut phases = Vec::with_capacity(spectra.len());
    let mut plus_weights = Vec::with_capacity(spectra.len());
    for (rec, theta, w) in spectra {
        ensemble.push(rec);
        phases.push(theta);
        plus_weights.push(w);
    }
    Ok(Campaign { ensemble, dark, shot, truth: CampaignTruth { phases, plus_weights } })
}

pub const TRUTH_HEADER: &str = "index,phase_rad,plus_weight";

/// Write the campaign as spectrum files, a manifest and a truth sidecar.
/// Returns the manifest path.
pub fn write_campaign(dir: &Path, campaign: &Campaign) -> Result<PathBuf> {
    let spectra_dir = dir.join("spectra");
    fs::create_dir_all(&spectra_dir).map_err(|e| Error::io(&spectra_dir, e))?;
    let width = campaign.ensemble.len().saturating_sub(1).to_string().len().max(4);
    let signals: Vec<PathBuf> = (0..campaign.ensemble.len())
        .map(|k| spectra_dir.join(format!("spectrum_{k:0width$}.csv")))
        .collect();
    signals
        .par_iter()
        .zip(&campaign.ensemble)
        .try_for_each(|(p, rec)| write_spectrum(p, rec))?;
    let manifest = EnsembleManifest { signals, dark: dir.join("dark.csv"), shot: dir.join("shot.csv") };
    write_spectrum(&manifest.dark, &campaign.dark)?;
    write_spectrum(&manifest.shot, &campaign.shot)?;

    let mut truth = String::from(TRUTH_HEADER);
    truth.push('\n');
    for (k, (phase, w)) in campaign.truth.phases.iter().zip(&campaign.truth.plus_weights).enumerate() {
        truth.push_str(&format!("{k},{phase},{w}\n"));
    }
    let truth_path = dir.join("truth.csv");
    fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;

    let manifest_path = dir.join("ensemble.manifest");
    fs::write(&manifest_path, manifest.render(dir)).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Read a truth sidecar written by [`write_campaign`].
pub fn read_truth(path: &Path) -> Result<CampaignTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TRUTH_HEADER) {
        return Err(Error::Data { path: path.into(), message: format!("expected header `{TRUTH_HEADER}`") });
    }
    let mut truth = CampaignTruth { phases: vec![], plus_weights: vec![] };
    for (i, line) in lines.enumerate() {
        let cols: Vec<f64> = line.split(',').filter_map(|c| c.trim().parse().ok()).collect();
        if cols.len() != 3 {
            return Err(Error::Data { path: path.into(), message: format!("row {} is malformed", i + 1) });
        }
        truth.phases.push(cols[1]);
        truth.plus_weights.push(cols[2]);
    }
    Ok(truth)
}

/// On-disk campaign description (TOML). Frequencies are in hertz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub seed: u64,
    #[serde(default = "default_n_spectra")]
    pub n_spectra: usize,
    /// `0` disables estimator noise.
    #[serde(default = "default_averages")]
    pub averages_per_bin: u64,
    #[serde(default)]
    pub dark_clearance_db: Option<f64>,
    #[serde(default)]
    pub noisy_references: bool,
    pub model: ModelSpec,
    pub detection: DetectionParams,
    pub grid: GridSpec,
    pub phase: PhaseModel,
}

fn default_n_spectra() -> usize {
    1000
}

fn default_averages() -> u64 {
    CampaignConfig::DEFAULT_AVERAGES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Single { chi_hz: f64, gamma_hz: f64, center_hz: f64 },
    Coupled { chi_hz: f64, gamma_hz: f64, splitting_hz: f64 },
}

impl ModelSpec {
    pub fn to_model(self) -> Result<Model> {
        Ok(match self {
            ModelSpec::Single { chi_hz, gamma_hz, center_hz } => {
                Model::Single(SqueezerParams::from_hz(chi_hz, gamma_hz, center_hz)?)
            }
            ModelSpec::Coupled { chi_hz, gamma_hz, splitting_hz } => {
                Model::Coupled(CoupledParams::from_hz(chi_hz, gamma_hz, splitting_hz)?)
            }
        })
    }

    pub fn from_model(model: &Model) -> Self {
        match model {
            Model::Single(p) => ModelSpec::Single {
                chi_hz: hz_from_angular(p.chi),
                gamma_hz: hz_from_angular(p.gamma),
                center_hz: hz_from_angular(p.center),
            },
            Model::Coupled(p) => ModelSpec::Coupled {
                chi_hz: hz_from_angular(p.chi),
                gamma_hz: hz_from_angular(p.gamma),
                splitting_hz: hz_from_angular(p.omega_s),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

/// Byte offset to 1-based line number.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl CampaignFile {
    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of(text, s.start));
            parse_error(path, line, e.message().to_string())
        })
    }

    pub fn to_config(&self) -> Result<CampaignConfig> {
        let cfg = CampaignConfig {
            model: self.model.to_model()?,
            detection: self.detection,
            grid_hz: linspace(self.grid.start_hz, self.grid.stop_hz, self.grid.points),
            n_spectra: self.n_spectra,
            averages_per_bin: (self.averages_per_bin > 0).then_some(self.averages_per_bin),
            seed: self.seed,
            phase_model: self.phase,
            dark_clearance_db: self.dark_clearance_db,
            noisy_references: self.noisy_references,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
