//! Reduction of spectrum ensembles: dark-noise subtraction, extreme-trace
//! selection, averaging and shot-noise normalisation.
//!
//! All arithmetic is in linear power. Decibels only appear when traces are
//! exported.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordMeta {
    pub label: String,
    /// Acquisition index, used to break ranking ties.
    pub index: usize,
    pub rbw_hz: Option<f64>,
}

impl RecordMeta {
    pub fn new(label: impl Into<String>, index: usize) -> Self {
        RecordMeta { label: label.into(), index, rbw_hz: None }
    }
}

/// One spectrum on a frequency grid in hertz.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    frequencies: Vec<f64>,
    power: Vec<f64>,
    pub meta: RecordMeta,
}

fn check_grid(frequencies: &[f64]) -> Result<()> {
    if frequencies.len() < 2 {
        return Err(Error::argument("a spectrum needs at least two bins"));
    }
    if frequencies.iter().any(|f| !f.is_finite()) {
        return Err(Error::argument("frequency grid contains non-finite values"));
    }
    if let Some(i) = frequencies.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::argument(format!("frequency grid is not strictly increasing at bin {}", i + 1)));
    }
    Ok(())
}

impl SpectrumRecord {
    pub fn new(frequencies: Vec<f64>, power: Vec<f64>, meta: RecordMeta) -> Result<Self> {
        check_grid(&frequencies)?;
        if power.len() != frequencies.len() {
            return Err(Error::argument(format!(
                "{} power values for {} frequencies",
                power.len(),
                frequencies.len()
            )));
        }
        if let Some(i) = power.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::argument(format!("power at bin {i} is negative or non-finite: {}", power[i])));
        }
        Ok(SpectrumRecord { frequencies, power, meta })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn with_meta(mut self, meta: RecordMeta) -> Self {
        self.meta = meta;
        self
    }

    fn same_grid(&self, other: &SpectrumRecord) -> Result<()> {
        if self.frequencies != other.frequencies {
            return Err(Error::Grid(format!(
                "`{}` and `{}` are on different frequency grids",
                self.meta.label, other.meta.label
            )));
        }
        Ok(())
    }

    fn with_power(&self, power: Vec<f64>) -> SpectrumRecord {
        SpectrumRecord { frequencies: self.frequencies.clone(), power, meta: self.meta.clone() }
    }

    fn mean_power(&self) -> f64 {
        self.power.iter().sum::<f64>() / self.power.len() as f64
    }

    fn median_power(&self) -> f64 {
        let mut v = self.power.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    fn nearest_bin(&self, frequency_hz: f64) -> usize {
        match self.frequencies.binary_search_by(|f| f.total_cmp(&frequency_hz)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.frequencies.len() => self.frequencies.len() - 1,
            Err(i) => {
                if frequency_hz - self.frequencies[i - 1] <= self.frequencies[i] - frequency_hz {
                    i - 1
                } else {
                    i
                }
            }
        }
    }
}

/// Averaged anti-squeezing (`upper`) and squeezing (`lower`) traces in shot-noise units.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    pub frequencies: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl TracePair {
    pub fn new(frequencies: Vec<f64>, upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        check_grid(&frequencies)?;
        if upper.len() != frequencies.len() || lower.len() != frequencies.len() {
            return Err(Error::argument("trace lengths differ from the frequency grid"));
        }
        let bad = |v: &[f64]| v.iter().position(|x| !(x.is_finite() && *x > 0.0));
        if let Some(i) = bad(&upper).or(bad(&lower)) {
            return Err(Error::argument(format!("trace variance at bin {i} is not positive")));
        }
        Ok(TracePair { frequencies, upper, lower })
    }

    /// Build from `(frequency, upper, lower)` rows in any order.
    pub fn from_rows(mut rows: Vec<(f64, f64, f64)>) -> Result<Self> {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let frequencies = rows.iter().map(|r| r.0).collect();
        let upper = rows.iter().map(|r| r.1).collect();
        let lower = rows.iter().map(|r| r.2).collect();
        Self::new(frequencies, upper, lower)
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Dark-subtracted record plus the number of bins raised to the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkCorrected {
    pub record: SpectrumRecord,
    pub clamped: usize,
}

/// Subtract detector dark noise bin by bin; results below `floor` are raised to it.
pub fn subtract_dark(signal: &SpectrumRecord, dark: &SpectrumRecord, floor: f64) -> Result<DarkCorrected> {
    signal.same_grid(dark)?;
    if !(floor > 0.0) {
        return Err(Error::argument(format!("dark clamp floor must be positive, got {floor}")));
    }
    let mut clamped = 0;
    let power = signal
        .power
        .iter()
        .zip(&dark.power)
        .map(|(s, d)| {
            let v = s - d;
            if v < floor {
                clamped += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    Ok(DarkCorrected { record: signal.with_power(power), clamped })
}

/// Divide by the shot-noise reference; the result is in shot-noise units.
pub fn normalize_shot(signal: &SpectrumRecord, shot: &SpectrumRecord) -> Result<SpectrumRecord> {
    signal.same_grid(shot)?;
    if let Some(bin) = shot.power.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::Normalization {
            bin,
            frequency_hz: shot.frequencies[bin],
            value: shot.power[bin],
        });
    }
    let power = signal.power.iter().zip(&shot.power).map(|(s, r)| s / r).collect();
    Ok(signal.with_power(power))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Highest,
    Lowest,
}

/// Per-record noise level used for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankStatistic {
    /// Mean linear power over the full grid.
    #[default]
    Mean,
    Median,
    /// Power in the bin nearest to this frequency (Hz).
    AtFrequency(f64),
}

impl RankStatistic {
    pub fn evaluate(&self, record: &SpectrumRecord) -> f64 {
        match *self {
            RankStatistic::Mean => record.mean_power(),
            RankStatistic::Median => record.median_power(),
            RankStatistic::AtFrequency(f) => record.power[record.nearest_bin(f)],
        }
    }
}

fn common_grid(records: &[SpectrumRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        for r in &records[1..] {
            first.same_grid(r)?;
        }
    }
    Ok(())
}

/// Positions in `ensemble` of the `n` records with the highest or lowest
/// statistic, in ranked order. Ties go to the lower acquisition index.
pub fn rank_indices(ensemble: &[SpectrumRecord], n: usize, mode: RankMode, statistic: RankStatistic) -> Result<Vec<usize>> {
    if n == 0 || n > ensemble.len() {
        return Err(Error::argument(format!(
            "cannot select {n} records from an ensemble of {}",
            ensemble.len()
        )));
    }
    common_grid(ensemble)?;
    let stats: Vec<f64> = ensemble.par_iter().map(|r| statistic.evaluate(r)).collect();
    let mut order: Vec<usize> = (0..ensemble.len()).collect();
    order.sort_by(|&a, &b| {
        let by_level = match mode {
            RankMode::Highest => stats[b].total_cmp(&stats[a]),
            RankMode::Lowest => stats[a].total_cmp(&stats[b]),
        };
        by_level
            .then(ensemble[a].meta.index.cmp(&ensemble[b].meta.index))
            .then(a.cmp(&b))
    });
    order.truncate(n);
    Ok(order)
}

pub fn rank_select(
    ensemble: &[SpectrumRecord],
    n: usize,
    mode: RankMode,
    statistic: RankStatistic,
) -> Result<Vec<SpectrumRecord>> {
    Ok(rank_indices(ensemble, n, mode, statistic)?
        .into_iter()
        .map(|i| ensemble[i].clone())
        .collect())
}

/// Bin-wise arithmetic mean.
pub fn average(records: &[SpectrumRecord]) -> Result<SpectrumRecord> {
    let refs: Vec<&SpectrumRecord> = records.iter().collect();
    average_refs(&refs)
}

fn average_refs(records: &[&SpectrumRecord]) -> Result<SpectrumRecord> {
    let first = *records.first().ok_or_else(|| Error::argument("cannot average an empty list of spectra"))?;
    for r in &records[1..] {
        first.same_grid(r)?;
    }
    let mut sum = vec![0.0; first.len()];
    for r in records {
        for (acc, p) in sum.iter_mut().zip(&r.power) {
            *acc += p;
        }
    }
    let n = records.len() as f64;
    let power = sum.into_iter().map(|s| s / n).collect();
    Ok(SpectrumRecord {
        frequencies: first.frequencies.clone(),
        power,
        meta: RecordMeta { label: format!("mean of {}", records.len()), index: first.meta.index, rbw_hz: first.meta.rbw_hz },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOptions {
    pub statistic: RankStatistic,
    /// Dark-clamp floor as a fraction of the mean dark-subtracted shot level.
    pub floor_fraction: f64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { statistic: RankStatistic::Mean, floor_fraction: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub traces: TracePair,
    /// Positions in the ensemble of the averaged records, ranked.
    pub upper_indices: Vec<usize>,
    pub lower_indices: Vec<usize>,
    /// Bins raised to the floor during dark subtraction, over all records.
    pub clamped_bins: usize,
    /// Shot-noise level above dark noise at the centre bin, dB.
    pub dark_clearance_db: f64,
}

/// Dark-subtract everything, average the `n` noisiest and `n` quietest
/// records separately and normalise both to shot noise.
pub fn reduce_campaign(
    ensemble: &[SpectrumRecord],
    dark: &SpectrumRecord,
    shot: &SpectrumRecord,
    n: usize,
    opts: &ReduceOptions,
) -> Result<Reduction> {
    if ensemble.is_empty() {
        return Err(Error::argument("empty spectrum ensemble"));
    }
    common_grid(ensemble)?;
    ensemble[0].same_grid(dark)?;
    ensemble[0].same_grid(shot)?;

    let raw_shot_level: Vec<f64> = shot.power.iter().zip(&dark.power).map(|(s, d)| s - d).collect();
    let mean_shot = raw_shot_level.iter().sum::<f64>() / raw_shot_level.len() as f64;
    if !(mean_shot > 0.0) {
        return Err(Error::argument("shot-noise reference does not exceed the dark noise"));
    }
    let floor = opts.floor_fraction * mean_shot;

    let centre = shot.len() / 2;
    let dark_clearance_db = 10.0 * (raw_shot_level[centre] / dark.power[centre]).log10();

    let shot_corr = subtract_dark(shot, dark, floor)?;
    let corrected: Vec<DarkCorrected> = ensemble
        .par_iter()
        .map(|r| subtract_dark(r, dark, floor))
        .collect::<Result<_>>()?;
    let clamped_bins = shot_corr.clamped + corrected.iter().map(|c| c.clamped).sum::<usize>();
    let records: Vec<SpectrumRecord> = corrected.into_iter().map(|c| c.record).collect();

    let upper_indices = rank_indices(&records, n, RankMode::Highest, opts.statistic)?;
    let lower_indices = rank_indices(&records, n, RankMode::Lowest, opts.statistic)?;
    // Sum in ensemble order so identical selections give bit-identical traces.
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &records[i]).collect::<Vec<_>>()
    };
    let upper = normalize_shot(&average_refs(&pick(&upper_indices))?, &shot_corr.record)?;
    let lower = normalize_shot(&average_refs(&pick(&lower_indices))?, &shot_corr.record)?;

    let traces = TracePair::new(upper.frequencies.clone(), upper.power, lower.power)?;
    Ok(Reduction { traces, upper_indices, lower_indices, clamped_bins, dark_clearance_db })
}
