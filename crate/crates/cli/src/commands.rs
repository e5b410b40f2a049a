use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ccsqz_core::fit::InputDigest;
use ccsqz_core::io::{read_spectrum, read_trace_pair, write_trace_pair, EnsembleManifest};
use ccsqz_core::units::db_from_linear;
use ccsqz_core::{
    generate_campaign, profile_identifiability, reduce_campaign, solve, BudgetSheet, CampaignFile, FitProblem,
    FitResult, FitSettings, IdentifiabilityReport, ModelKind, Param, ReduceOptions, Weighting,
};

use crate::failure::{CmdResult, Failure};
use crate::manifest::{digest_file, RunManifest};
use crate::summary::describe;

pub const TRACES_FILE: &str = "traces.csv";
pub const FIT_FILE: &str = "fit.toml";
pub const PLOT_FILE: &str = "fit_plot.csv";
pub const PLOT_HEADER: &str =
    "frequency_hz,upper_db,lower_db,fit_upper_db,fit_lower_db,fit_lower_no_phase_noise_db";
pub const BUDGET_FILE: &str = "budget.kv";
pub const FORECAST_FILE: &str = "forecast.kv";
pub const REPORT_FILE: &str = "report.txt";

fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult<()> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_failure(path: &Path, text: &str, e: toml::de::Error) -> Failure {
    let line = e.span().map_or(1, |s| line_of(text, s.start));
    Failure::config(format!("{}: line {line}: {}", path.display(), e.message()))
}

pub fn simulate(out: &Path, config: &Path, seed: Option<u64>) -> CmdResult {
    let text = read_text(config)?;
    let mut file = CampaignFile::parse(&text, Some(config))?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    let cfg = file.to_config()?;
    let campaign = generate_campaign(&cfg)?;
    ensure_dir(out)?;
    let manifest_path = ccsqz_core::synth::write_campaign(out, &campaign)?;

    let mut run = RunManifest::new("simulate", config)?;
    run.input(config)?;
    let written = EnsembleManifest::read(&manifest_path)?;
    for p in written.signals.iter().chain([&written.dark, &written.shot]) {
        run.output(out, p)?;
    }
    run.output(out, &out.join("truth.csv"))?;
    run.output(out, &manifest_path)?;
    run.write(out)?;

    println!(
        "simulated {} spectra on {} bins (seed {})",
        campaign.ensemble.len(),
        cfg.grid_hz.len(),
        file.seed
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

pub fn reduce(out: &Path, inputs: &[PathBuf], dark: Option<&Path>, shot: Option<&Path>, n: usize) -> CmdResult {
    if inputs.is_empty() {
        return Err(Failure::config("reduce needs a manifest or at least one spectrum file"));
    }
    let is_manifest = inputs.len() == 1 && inputs[0].extension().is_some_and(|e| e == "manifest");
    let (ensemble, dark_rec, shot_rec, listed) = if is_manifest {
        if dark.is_some() || shot.is_some() {
            return Err(Failure::config("--dark and --shot come from the manifest; do not pass them too"));
        }
        let m = EnsembleManifest::read(&inputs[0])?;
        let (e, d, s) = m.load()?;
        let mut listed = vec![inputs[0].clone()];
        listed.extend(m.signals.iter().cloned());
        listed.push(m.dark.clone());
        listed.push(m.shot.clone());
        (e, d, s, listed)
    } else {
        let (Some(dark), Some(shot)) = (dark, shot) else {
            return Err(Failure::config("spectrum files need --dark and --shot references"));
        };
        let ensemble = inputs
            .iter()
            .enumerate()
            .map(|(i, p)| read_spectrum(p, i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut listed = inputs.to_vec();
        listed.push(dark.to_path_buf());
        listed.push(shot.to_path_buf());
        (ensemble, read_spectrum(dark, 0)?, read_spectrum(shot, 0)?, listed)
    };

    let red = reduce_campaign(&ensemble, &dark_rec, &shot_rec, n, &ReduceOptions::default())?;
    ensure_dir(out)?;
    let traces = out.join(TRACES_FILE);
    write_trace_pair(&traces, &red.traces)?;

    let mut run = RunManifest::new("reduce", &inputs[0])?;
    for p in &listed {
        run.input(p)?;
    }
    run.output(out, &traces)?;
    run.write(out)?;

    println!("averaged {n} of {} spectra per trace", ensemble.len());
    println!("dark clearance: {:.2} dB below shot noise", red.dark_clearance_db);
    if red.clamped_bins > 0 {
        println!("note: {} bins clamped after dark subtraction", red.clamped_bins);
    }
    println!("traces: {}", traces.display());
    Ok(())
}

fn parse_pin(s: &str) -> CmdResult<(Param, f64)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("--pin expects PARAM=VALUE, got `{s}`")))?;
    let p: Param = name.trim().parse()?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Failure::config(format!("--pin {}: `{}` is not a number", p.name(), value.trim())))?;
    Ok((p, v))
}

fn plot_data(problem: &FitProblem, result: &FitResult) -> CmdResult<String> {
    let (fu, fl) = problem.model_traces(&result.params)?;
    let mut clean = result.params;
    clean.delta_phi = 0.0;
    let (_, fl0) = problem.model_traces(&clean)?;
    let t = &problem.traces;
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for i in 0..t.len() {
        let row = [t.upper[i], t.lower[i], fu[i], fl[i], fl0[i]]
            .iter()
            .map(|v| db_from_linear(*v))
            .collect::<Result<Vec<_>, _>>()?;
        write!(s, "{}", t.frequencies[i]).unwrap();
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn fit(
    out: &Path,
    traces_path: &Path,
    kind: ModelKind,
    pins: &[String],
    weighting: Option<Weighting>,
    config: Option<&Path>,
) -> CmdResult {
    let mut settings = match config {
        Some(path) => {
            let text = read_text(path)?;
            toml::from_str::<FitSettings>(&text).map_err(|e| toml_failure(path, &text, e))?
        }
        None => FitSettings::default(),
    };
    for s in pins {
        let (p, v) = parse_pin(s)?;
        settings.fixed.insert(p, v);
    }
    if let Some(w) = weighting {
        settings.weighting = w;
    }
    let traces = read_trace_pair(traces_path)?;
    let problem = FitProblem::with_settings(traces, kind, settings);
    let mut result = solve(&problem)?;

    let mut inputs = vec![traces_path.to_path_buf()];
    inputs.extend(config.map(Path::to_path_buf));
    for p in &inputs {
        result.inputs.push(InputDigest { path: p.display().to_string(), sha256: digest_file(p)? });
    }

    let identifiability = result.converged.then(|| profile_identifiability(&problem, &result));
    let mut text = result.to_toml();
    if let Some(report) = &identifiability {
        let mut wrapper = toml::Table::new();
        wrapper.insert("identifiability".into(), toml::Value::try_from(report).expect("report serializes"));
        text.push('\n');
        text.push_str(&toml::to_string(&wrapper).expect("report serializes"));
    }

    ensure_dir(out)?;
    let fit_path = out.join(FIT_FILE);
    let plot_path = out.join(PLOT_FILE);
    write_text(&fit_path, &text)?;
    write_text(&plot_path, &plot_data(&problem, &result)?)?;
    let mut run = RunManifest::new("fit", config.unwrap_or(traces_path))?;
    for p in &inputs {
        run.input(p)?;
    }
    run.output(out, &fit_path)?;
    run.output(out, &plot_path)?;
    run.write(out)?;

    print!("{}", describe(&result, identifiability.as_ref()));
    println!("fit: {}", fit_path.display());
    println!("plot data: {}", plot_path.display());
    if !result.converged {
        return Err(Failure::fit(format!(
            "fit did not converge ({:?} after {} iterations, gradient cosine {:.3e})",
            result.termination, result.iterations, result.gradient_cosine
        )));
    }
    Ok(())
}

fn load_sheet(config: &Path) -> CmdResult<BudgetSheet> {
    let text = read_text(config)?;
    Ok(BudgetSheet::parse(&text, Some(config))?)
}

fn finish_kv(out: &Path, command: &str, config: &Path, file: &str, kv: &str) -> CmdResult<PathBuf> {
    ensure_dir(out)?;
    let path = out.join(file);
    write_text(&path, kv)?;
    let mut run = RunManifest::new(command, config)?;
    run.input(config)?;
    run.output(out, &path)?;
    run.write(out)?;
    Ok(path)
}

pub fn budget(out: &Path, config: &Path) -> CmdResult {
    let report = load_sheet(config)?.evaluate()?;
    let path = finish_kv(out, "budget", config, BUDGET_FILE, &report.to_kv())?;
    print!("{}", report.to_text());
    println!("budget: {}", path.display());
    Ok(())
}

pub fn forecast(out: &Path, config: &Path, delta_phi: Option<f64>) -> CmdResult {
    let mut sheet = load_sheet(config)?;
    if let Some(d) = delta_phi {
        sheet.delta_phi = Some(d);
    }
    if sheet.ledger.is_none() {
        return Err(Failure::config(format!("{}: no efficiency factors (eta_*) to forecast from", config.display())));
    }
    if sheet.delta_phi.is_none() {
        return Err(Failure::config("no phase error: set delta_phi in the budget or pass --delta-phi"));
    }
    let report = sheet.evaluate()?;
    let f = report.forecast.expect("ledger and phase error present");
    let mut kv = String::new();
    writeln!(kv, "total = {}", f.eta).unwrap();
    writeln!(kv, "delta_phi = {}", sheet.delta_phi.unwrap()).unwrap();
    writeln!(kv, "forecast_ratio = {}", f.ratio).unwrap();
    writeln!(kv, "forecast_db = {}", f.squeezing_db).unwrap();
    let path = finish_kv(out, "forecast", config, FORECAST_FILE, &kv)?;
    print!("{}", report.to_text());
    println!("forecast: {}", path.display());
    Ok(())
}

pub fn report(out: &Path, fit_path: &Path) -> CmdResult {
    let text = read_text(fit_path)?;
    let result = FitResult::from_toml(&text).map_err(|e| Failure::config(format!("{}: {e}", fit_path.display())))?;
    let identifiability = text
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("identifiability"))
        .map(|v| v.try_into::<IdentifiabilityReport>())
        .transpose()
        .map_err(|e| Failure::config(format!("{}: identifiability: {e}", fit_path.display())))?;
    let mut summary = describe(&result, identifiability.as_ref());
    for input in &result.inputs {
        match digest_file(Path::new(&input.path)) {
            Ok(d) if d == input.sha256 => {}
            Ok(_) => writeln!(summary, "note: {} changed since the fit", input.path).unwrap(),
            Err(_) => writeln!(summary, "note: {} is no longer readable", input.path).unwrap(),
        }
    }
    ensure_dir(out)?;
    let path = out.join(REPORT_FILE);
    write_text(&path, &summary)?;
    let mut run = RunManifest::new("report", fit_path)?;
    run.input(fit_path)?;
    run.output(out, &path)?;
    run.write(out)?;
    print!("{summary}");
    Ok(())
}
