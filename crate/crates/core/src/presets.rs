//! Measured operating points of the two squeezer configurations, used by the
//! shipped example configs, the tests and the benchmarks.

/// Squeezer alone, operated at half its free spectral range.
pub mod single {
    use crate::budget::{residual_loss_for_escape, CavityLossSheet, EfficiencyLedger, Factor};
    use crate::noise::{DetectionParams, Model, SqueezerParams};

    pub const CHI_HZ: f64 = 704e3;
    pub const GAMMA_HZ: f64 = 868e3;
    pub const CENTER_HZ: f64 = 54.67e6;
    pub const ETA: f64 = 0.851;
    pub const DELTA_PHI: f64 = 0.040;
    pub const SPAN_HZ: f64 = 10e6;
    pub const PUMP_MW: f64 = 55.0;
    pub const DARK_CLEARANCE_DB: f64 = 12.7;
    pub const ANTI_SQUEEZING_DB: f64 = 18.9;
    pub const SQUEEZING_DB: f64 = -6.6;

    pub const OUTPUT_COUPLER_T: f64 = 1.0 - 0.903;
    pub const LENGTH_M: f64 = 1.372;
    pub const ESCAPE_EFFICIENCY: f64 = 0.975;

    pub fn model() -> Model {
        Model::Single(SqueezerParams::from_hz(CHI_HZ, GAMMA_HZ, CENTER_HZ).expect("valid preset"))
    }

    pub fn detection() -> DetectionParams {
        DetectionParams { eta: ETA, delta_phi: DELTA_PHI }
    }

    pub fn grid_hz(points: usize) -> Vec<f64> {
        super::linspace(CENTER_HZ - SPAN_HZ / 2.0, CENTER_HZ + SPAN_HZ / 2.0, points)
    }

    /// Round-trip loss that reproduces the measured escape efficiency.
    pub fn residual_loss() -> f64 {
        residual_loss_for_escape(OUTPUT_COUPLER_T, ESCAPE_EFFICIENCY)
    }

    pub fn loss_sheet() -> CavityLossSheet {
        CavityLossSheet {
            t_out: OUTPUT_COUPLER_T,
            intra_losses: vec![("residual".into(), residual_loss())],
            length: LENGTH_M,
        }
    }

    /// Escape, propagation, homodyne and (inferred) quantum efficiency.
    pub fn ledger() -> EfficiencyLedger {
        EfficiencyLedger::new(vec![
            Factor::measured("esc", 0.975),
            Factor::measured("prop", 0.940),
            Factor::measured("hd", 0.945),
            Factor::inferred("qe"),
        ])
        .expect("valid preset")
    }
}

/// Squeezer coupled to the test cavity, observed around the splitting frequency.
pub mod coupled {
    use crate::budget::{CavityLossSheet, EfficiencyLedger, Factor};
    use crate::noise::{CavityGeometry, CoupledParams, DetectionParams, Model};

    pub const CHI_HZ: f64 = 820e3;
    pub const GAMMA_HZ: f64 = 1.100e6;
    pub const SPLITTING_HZ: f64 = 7.47e6;
    pub const ETA: f64 = 0.632;
    pub const DELTA_PHI: f64 = 0.079;
    pub const SPAN_HZ: f64 = 3e6;
    pub const PUMP_MW: f64 = 74.0;
    pub const DARK_CLEARANCE_DB: f64 = 13.2;
    pub const ANTI_SQUEEZING_DB: f64 = 14.8;
    pub const SQUEEZING_DB: f64 = -3.3;

    pub const L_TEST_M: f64 = 1.415;
    pub const T_COUPLING: f64 = 1.0 - 0.810;
    /// Quarter-wave plate, double pass.
    pub const LOSS_QWP: f64 = 2.0 * 0.008;
    /// Test-cavity input mirror, double pass.
    pub const LOSS_INPUT_MIRROR: f64 = 2.0 * 0.004;
    pub const LOSS_REMAINING: f64 = 0.003;

    pub fn model() -> Model {
        Model::Coupled(CoupledParams::from_hz(CHI_HZ, GAMMA_HZ, SPLITTING_HZ).expect("valid preset"))
    }

    pub fn detection() -> DetectionParams {
        DetectionParams { eta: ETA, delta_phi: DELTA_PHI }
    }

    pub fn grid_hz(points: usize) -> Vec<f64> {
        super::linspace(SPLITTING_HZ - SPAN_HZ / 2.0, SPLITTING_HZ + SPAN_HZ / 2.0, points)
    }

    pub fn geometry() -> CavityGeometry {
        CavityGeometry { l_test: L_TEST_M, l_sqz: super::single::LENGTH_M, t_c: T_COUPLING }
    }

    pub fn loss_sheet() -> CavityLossSheet {
        super::single::loss_sheet()
            .with_loss("qwp", LOSS_QWP)
            .with_loss("input_mirror", LOSS_INPUT_MIRROR)
            .with_loss("remaining", LOSS_REMAINING)
    }

    pub fn ledger() -> EfficiencyLedger {
        EfficiencyLedger::new(vec![
            Factor::measured("esc", 0.768),
            Factor::measured("prop", 0.940),
            Factor::inferred("hd"),
            Factor::measured("qe", 0.982),
        ])
        .expect("valid preset")
    }
}

/// Realistic upgrade of the coupled setup: better escape, propagation and homodyne efficiency.
pub mod improved {
    use crate::budget::EfficiencyLedger;

    pub const DELTA_PHI: f64 = 0.020;

    pub fn ledger() -> EfficiencyLedger {
        EfficiencyLedger::measured(&[("esc", 0.90), ("prop", 0.99), ("hd", 0.95), ("qe", 0.982)]).expect("valid preset")
    }
}

/// `points` equally spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points)
                .map(|i| if i == points - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}
