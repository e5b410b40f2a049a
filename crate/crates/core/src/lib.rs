//! Quantum-noise spectra, efficiency budgets, campaign simulation and trace
//! fitting for optical parametric squeezers, alone or coupled to a second
//! cavity.

pub mod budget;
pub mod error;
pub mod fit;
pub mod io;
pub mod kv;
pub mod noise;
mod optimize;
pub mod presets;
pub mod spectra;
pub mod synth;
pub mod units;

pub use budget::{BudgetReport, BudgetSheet, EfficiencyLedger, Factor, FactorStatus, Forecast};
pub use error::{Error, Result};
pub use fit::{
    initial_guess, profile_identifiability, solve, FitProblem, FitResult, FitSettings, IdentifiabilityReport,
    ModelKind, Param, ParamSet, TraceSelection, Weighting,
};
pub use noise::{
    detected_spectrum, extreme_detected, v_coupled, v_detected, v_single, CavityGeometry, CoupledParams,
    DetectionParams, Model, Quadrature, QuadraturePair, SqueezerParams,
};
pub use spectra::{reduce_campaign, ReduceOptions, Reduction, SpectrumRecord, TracePair};
pub use synth::{generate_campaign, Campaign, CampaignConfig, CampaignFile, PhaseModel};
