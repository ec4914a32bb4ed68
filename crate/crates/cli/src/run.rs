//! Command dispatch: resolve parameters, run the experiment or fit, write
//! tables and `run.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rydres_core::analytic::{rabi_population, RabiParams};
use rydres_core::bloch::AtomParams;
use rydres_core::experiment::{
    drive_for, fringe_fwhm, simulate_rabi_trace, simulate_ramsey_spectrum, RabiTrace, RamseyConfig, Spectrum,
    DEFAULT_GAP, DEFAULT_PULSE_DURATION,
};
use rydres_core::fitting::{
    fit_rabi, fit_ramsey_spectrum, generate_synthetic_rabi, generate_synthetic_spectrum, initial_guess, FitResult,
    LmOptions, RamseyGuess,
};
use rydres_core::resonator::{
    lorentzian_power_response, max_field_step, pulse_spectral_width, simulate_field, uniform_grid, PulseSequence,
    ResonatorMode, DEFAULT_TAIL_RING_DOWNS,
};
use rydres_core::units::{hz, to_hz};
use rydres_core::Error as CoreError;
use serde_json::{json, Map, Value as Json};

use crate::config::{Resolver, RunConfig};
use crate::dataset::{format_dataset, read_dataset, Dataset};
use crate::CliError;

const DEFAULT_SIGMA: f64 = 0.03;
const DEFAULT_NOISE: f64 = 0.03;
const DEFAULT_Q_REFERENCE: f64 = 2500.0;
const MAX_GRID_POINTS: usize = 1_000_000;
const RESPONSE_POINTS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateRabi,
    SimulateRamsey,
    FitRabi,
    FitRamsey,
    ResonatorResponse,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateRabi => "simulate-rabi",
            Command::SimulateRamsey => "simulate-ramsey",
            Command::FitRabi => "fit-rabi",
            Command::FitRamsey => "fit-ramsey",
            Command::ResonatorResponse => "resonator-response",
            Command::Synth => "synth",
        }
    }
}

pub struct RunRequest<'a> {
    pub command: Command,
    pub config: &'a RunConfig,
    pub data: Option<&'a Path>,
    /// Overrides `output.dir`.
    pub out_dir: Option<&'a Path>,
    /// Overrides `synth.seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    /// Files written, relative to `out_dir`.
    pub files: Vec<String>,
    /// `Some(false)` when a fit stopped without converging.
    pub converged: Option<bool>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.converged == Some(false) {
            crate::EXIT_NOT_CONVERGED
        } else {
            0
        }
    }
}

fn config_error(context: &str) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| CliError::Config(format!("{context}: {e}"))
}

fn mode(r: &mut Resolver) -> Result<ResonatorMode, CliError> {
    let w = r.positive("mode.omega_res_hz")?;
    let q = r.positive("mode.q_factor")?;
    ResonatorMode::new(hz(w), q).map_err(config_error("mode"))
}

fn atom(r: &mut Resolver, g_star_hz: f64) -> Result<AtomParams, CliError> {
    let w = r.positive("atom.omega_atom_hz")?;
    let t2 = r.positive("atom.t2_s")?;
    AtomParams::pure_dephasing(hz(w), hz(g_star_hz), t2).map_err(config_error("atom"))
}

fn coupled_atom(r: &mut Resolver) -> Result<AtomParams, CliError> {
    let g = r.number("atom.g_star_hz")?;
    if g < 0.0 {
        return Err(CliError::Config(format!("key `atom.g_star_hz` must be non-negative, got {g}")));
    }
    atom(r, g)
}

/// `start, start + step, …` up to `stop` inclusive (within rounding).
fn stepped(r: &mut Resolver, start_key: &str, stop_key: &str, step_key: &str, start_default: Option<f64>) -> Result<Vec<f64>, CliError> {
    let step = r.positive(step_key)?;
    let start = match start_default {
        Some(d) => r.number_or(start_key, d)?,
        None => r.number(start_key)?,
    };
    let stop = r.number(stop_key)?;
    if stop < start {
        return Err(CliError::Config(format!("`{stop_key}` ({stop}) is below `{start_key}` ({start})")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > MAX_GRID_POINTS {
        return Err(CliError::Config(format!("grid from `{start_key}` to `{stop_key}` has {n} points")));
    }
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

fn scan_grid(r: &mut Resolver) -> Result<Vec<f64>, CliError> {
    Ok(stepped(r, "scan.start_hz", "scan.stop_hz", "scan.step_hz", None)?.into_iter().map(hz).collect())
}

fn rabi_durations(r: &mut Resolver) -> Result<Vec<f64>, CliError> {
    let step = r.positive("rabi.step_s")?;
    let d = stepped(r, "rabi.start_s", "rabi.stop_s", "rabi.step_s", Some(step))?;
    if d[0] <= 0.0 {
        return Err(CliError::Config("`rabi.start_s` must be positive".into()));
    }
    Ok(d)
}

/// Pulse duration, gap and ring-down tail.
fn timing(r: &mut Resolver, tail_default: f64) -> Result<(f64, f64, f64), CliError> {
    Ok((
        r.positive_or("sequence.pulse_duration_s", DEFAULT_PULSE_DURATION)?,
        r.number_or("sequence.gap_s", DEFAULT_GAP)?,
        r.number_or("sequence.ring_down_tail_s", tail_default)?,
    ))
}

fn ramsey_config(r: &mut Resolver, tail_default: f64, grid: Vec<f64>) -> Result<RamseyConfig, CliError> {
    let (pulse_duration, gap, ring_down_tail) = timing(r, tail_default)?;
    let cfg = RamseyConfig {
        pulse_duration,
        gap,
        drive_amplitude: r.number("sequence.drive_amplitude")?,
        frequency_grid: grid,
        ring_down_tail,
    };
    cfg.validate().map_err(config_error("sequence"))?;
    Ok(cfg)
}

fn lm_options(r: &mut Resolver) -> Result<LmOptions, CliError> {
    let d = LmOptions::default();
    let iters = r.integer_or("fit.max_iterations", d.max_iterations as i64)?;
    if iters < 1 {
        return Err(CliError::Config("`fit.max_iterations` must be at least 1".into()));
    }
    Ok(LmOptions {
        max_iterations: iters as usize,
        ftol: r.positive_or("fit.ftol", d.ftol)?,
        gtol: r.positive_or("fit.gtol", d.gtol)?,
        fd_step: d.fd_step,
    })
}

/// Collects output files in memory so nothing is written if a later step fails.
struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn write(self, dir: &Path) -> Result<Vec<String>, CliError> {
        let mut names = Vec::new();
        for (name, contents) in self.files {
            let path = dir.join(&name);
            std::fs::write(&path, contents).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
            info!("wrote {}", path.display());
            names.push(name);
        }
        Ok(names)
    }
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Parameter name, value and uncertainty in file units (Hz for frequencies).
struct ExternalFit {
    names: Vec<String>,
    values: Vec<f64>,
    sigmas: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

fn external(fit: &FitResult, renames: &[(&str, &str, f64)]) -> ExternalFit {
    let factor: Vec<f64> = fit
        .names
        .iter()
        .map(|n| renames.iter().find(|r| r.0 == n).map_or(1.0, |r| r.2))
        .collect();
    let names = fit
        .names
        .iter()
        .map(|n| renames.iter().find(|r| r.0 == n).map_or(n.clone(), |r| r.1.to_string()))
        .collect();
    let n = fit.values.len();
    ExternalFit {
        names,
        values: (0..n).map(|i| fit.values[i] * factor[i]).collect(),
        sigmas: fit.uncertainties().iter().zip(&factor).map(|(s, f)| s * f).collect(),
        covariance: (0..n).map(|i| (0..n).map(|j| fit.covariance[(i, j)] * factor[i] * factor[j]).collect()).collect(),
    }
}

fn fit_outputs(out: &mut Outputs, results: &mut Map<String, Json>, fit: &FitResult, ext: &ExternalFit) {
    let mut s = String::from("name,value,uncertainty\n");
    for i in 0..ext.names.len() {
        let _ = writeln!(s, "{},{},{}", ext.names[i], ext.values[i], ext.sigmas[i]);
    }
    out.add("fit_params.csv", s);
    let params: Map<String, Json> = ext
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), json!({"value": ext.values[i], "uncertainty": ext.sigmas[i]})))
        .collect();
    results.insert("parameters".into(), Json::Object(params));
    results.insert("parameter_order".into(), json!(ext.names));
    results.insert("covariance".into(), json!(ext.covariance));
    results.insert("chi_square".into(), json!(fit.chi_square));
    results.insert("reduced_chi_square".into(), json!(fit.reduced_chi_square));
    results.insert("iterations".into(), json!(fit.n_iterations));
    results.insert("converged".into(), json!(fit.converged));
    results.insert("gradient_norm".into(), json!(fit.gradient_norm));
    results.insert("notes".into(), json!(fit.notes));
}

fn fit_failure(e: CoreError) -> CliError {
    match e {
        CoreError::FlatSpectrum { .. } | CoreError::InvalidArgument(_) => CliError::Data(e.to_string()),
        other => CliError::Fit(other.to_string()),
    }
}

fn load_data(r: &mut Resolver, data: Option<&Path>, warnings: &mut Vec<String>) -> Result<Dataset, CliError> {
    let path = data.ok_or_else(|| CliError::Config("this command needs input data (--data <path>)".into()))?;
    let default_sigma = r.positive_or("fit.default_sigma", DEFAULT_SIGMA)?;
    let loaded = read_dataset(path, default_sigma)?;
    for w in &loaded.warnings {
        warn!("{}: {w}", path.display());
    }
    warnings.extend(loaded.warnings);
    Ok(loaded.dataset)
}

fn spectrum_rows(s: &Spectrum) -> impl Iterator<Item = Vec<f64>> + '_ {
    s.omega_grid.iter().zip(&s.population).map(|(&w, &p)| vec![to_hz(w), p])
}

fn spectrum_summary(results: &mut Map<String, Json>, s: &Spectrum, warnings: &mut Vec<String>) {
    results.insert("peak_population".into(), json!(s.peak()));
    match fringe_fwhm(s) {
        Ok(w) => {
            results.insert("central_fringe_fwhm_hz".into(), json!(to_hz(w)));
        }
        Err(e) => {
            warnings.push(format!("central fringe width unavailable: {e}"));
            results.insert("central_fringe_fwhm_hz".into(), Json::Null);
        }
    }
}

/// Half-power full width of the mode's response, found by bisection on
/// each side of the peak.
fn response_fwhm(mode: &ResonatorMode) -> f64 {
    let w0 = mode.omega_res();
    let reach = 10.0 * mode.linewidth();
    let crossing = |sign: f64| {
        let (mut lo, mut hi) = (0.0, reach);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if lorentzian_power_response(mode, w0 + sign * mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    crossing(1.0) + crossing(-1.0)
}

pub fn run(req: &RunRequest<'_>) -> Result<RunReport, CliError> {
    let mut r = req.config.resolver();
    let label = r.text_or("label", "")?;
    let out_dir = match req.out_dir {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from(r.text_or("output.dir", "out")?),
    };
    let mut out = Outputs { files: Vec::new() };
    let mut results = Map::new();
    let mut warnings = Vec::new();
    let mut converged = None;
    let mut seed_used = None;

    match req.command {
        Command::SimulateRabi => {
            let mode = mode(&mut r)?;
            let atom = coupled_atom(&mut r)?;
            let amp = r.number("sequence.drive_amplitude")?;
            let carrier = r.number_or("rabi.carrier_hz", to_hz(mode.omega_res()))?;
            let durations = rabi_durations(&mut r)?;
            let trace = simulate_rabi_trace(&atom, &mode, hz(carrier), &durations, amp).map_err(config_error("rabi"))?;
            out.add("rabi.csv", format_dataset(&Dataset::Rabi(trace.clone())));
            let peak = trace.population.iter().copied().fold(0.0, f64::max);
            results.insert("peak_population".into(), json!(peak));
        }
        Command::SimulateRamsey => {
            let mode = mode(&mut r)?;
            let atom = coupled_atom(&mut r)?;
            let grid = scan_grid(&mut r)?;
            let cfg = ramsey_config(&mut r, DEFAULT_TAIL_RING_DOWNS * mode.ring_down_time(), grid)?;
            let s = simulate_ramsey_spectrum(&atom, &mode, &cfg).map_err(config_error("ramsey"))?;
            out.add("spectrum.csv", format_dataset(&Dataset::Spectrum(s.clone())));
            spectrum_summary(&mut results, &s, &mut warnings);
        }
        Command::FitRabi => {
            let trace = match load_data(&mut r, req.data, &mut warnings)? {
                Dataset::Rabi(t) => t,
                Dataset::Spectrum(_) => return Err(CliError::Data("fit-rabi needs a duration_s dataset".into())),
            };
            let guess = RabiParams {
                omega0: hz(r.positive("fit.guess.omega0_hz")?),
                delta: hz(r.number("fit.guess.delta_hz")?),
                t2: r.positive("fit.guess.t2_s")?,
            };
            guess.validate().map_err(config_error("fit.guess"))?;
            let opts = lm_options(&mut r)?;
            let fit = fit_rabi(&trace, &guess, &opts).map_err(fit_failure)?;
            let tau = std::f64::consts::TAU;
            let ext = external(&fit, &[("omega0", "omega0_hz", 1.0 / tau), ("delta", "delta_hz", 1.0 / tau), ("t2", "t2_s", 1.0)]);
            fit_outputs(&mut out, &mut results, &fit, &ext);
            let best = RabiParams { omega0: fit.values[0], delta: fit.values[1], t2: fit.values[2] };
            let curve = trace.durations.iter().map(|&t| vec![t, rabi_population(t, &best)]);
            out.add("fit_curve.csv", table(&["duration_s", "population"], curve));
            converged = Some(fit.converged);
        }
        Command::FitRamsey => {
            let spectrum = match load_data(&mut r, req.data, &mut warnings)? {
                Dataset::Spectrum(s) => s,
                Dataset::Rabi(_) => return Err(CliError::Data("fit-ramsey needs a frequency_hz dataset".into())),
            };
            let atom_base = atom(&mut r, 0.0)?;
            let given = [
                r.optional_number("fit.guess.omega_res_hz")?,
                r.optional_number("fit.guess.q_factor")?,
                r.optional_number("fit.guess.g_star_hz")?,
            ];
            let grid = spectrum.omega_grid.clone();
            let center = 0.5 * (grid[0] + grid[grid.len() - 1]);
            let q_ref = given[1].unwrap_or(DEFAULT_Q_REFERENCE);
            let cfg = ramsey_config(&mut r, DEFAULT_TAIL_RING_DOWNS * 2.0 * q_ref / center, grid)?;
            let guess = match given {
                [Some(w), Some(q), Some(g)] => RamseyGuess { omega_res: hz(w), q_factor: q, g_star: hz(g) },
                [None, None, None] => {
                    let g = initial_guess(&spectrum, &cfg, &atom_base).map_err(fit_failure)?;
                    r.set("fit.guess.omega_res_hz", json!(to_hz(g.omega_res)));
                    r.set("fit.guess.q_factor", json!(g.q_factor));
                    r.set("fit.guess.g_star_hz", json!(to_hz(g.g_star)));
                    g
                }
                _ => {
                    let keys = ["fit.guess.omega_res_hz", "fit.guess.q_factor", "fit.guess.g_star_hz"];
                    let missing = keys.iter().zip(&given).find(|(_, v)| v.is_none()).map(|(k, _)| *k).unwrap_or("");
                    return Err(CliError::Config(format!(
                        "give all of the fit.guess keys or none; missing required key `{missing}`"
                    )));
                }
            };
            let opts = lm_options(&mut r)?;
            let fit = fit_ramsey_spectrum(&spectrum, &cfg, &atom_base, &guess, &opts).map_err(fit_failure)?;
            let tau = std::f64::consts::TAU;
            let ext = external(&fit, &[("omega_res", "omega_res_hz", 1.0 / tau), ("g_star", "g_star_hz", 1.0 / tau)]);
            fit_outputs(&mut out, &mut results, &fit, &ext);
            let best_mode = ResonatorMode::new(fit.values[0], fit.values[1]).map_err(fit_failure)?;
            let best = simulate_ramsey_spectrum(&atom_base.with_g_star(fit.values[2]), &best_mode, &cfg).map_err(fit_failure)?;
            out.add("fit_curve.csv", table(&["frequency_hz", "population"], spectrum_rows(&best)));
            converged = Some(fit.converged);
        }
        Command::ResonatorResponse => {
            let mode = mode(&mut r)?;
            let w0 = mode.omega_res();
            let grid = if has_scan(req.config) {
                scan_grid(&mut r)?
            } else {
                let half = 5.0 * mode.linewidth();
                let step = 2.0 * half / (RESPONSE_POINTS - 1) as f64;
                (0..RESPONSE_POINTS).map(|k| w0 - half + k as f64 * step).collect()
            };
            let rows = grid.iter().map(|&w| vec![to_hz(w), lorentzian_power_response(&mode, w)]);
            out.add("response.csv", table(&["frequency_hz", "power_response"], rows));

            let carrier = hz(r.number_or("sequence.carrier_hz", to_hz(w0))?);
            let amp = r.number_or("sequence.drive_amplitude", 1.0)?;
            let (pulse, gap, tail) = timing(&mut r, DEFAULT_TAIL_RING_DOWNS * mode.ring_down_time())?;
            if !(gap >= 0.0 && tail >= 0.0) {
                return Err(CliError::Config("`sequence.gap_s` and `sequence.ring_down_tail_s` must be non-negative".into()));
            }
            let seq = PulseSequence::ramsey(carrier, pulse, gap, drive_for(amp, carrier)).map_err(config_error("sequence"))?;
            let end = 2.0 * pulse + gap + tail;
            let times = uniform_grid(0.0, end, max_field_step(&mode)).map_err(config_error("sequence"))?;
            let field = simulate_field(&mode, &seq, &times).map_err(config_error("sequence"))?;
            let rows = field.times().iter().zip(field.envelope()).map(|(&t, a)| vec![t, a.re, a.im, a.norm()]);
            out.add("field_trace.csv", table(&["time_s", "envelope_re", "envelope_im", "envelope_abs"], rows));

            results.insert("linewidth_hz".into(), json!(to_hz(mode.linewidth())));
            results.insert("response_fwhm_hz".into(), json!(to_hz(response_fwhm(&mode))));
            results.insert("ring_down_time_s".into(), json!(mode.ring_down_time()));
            let pw = pulse_spectral_width(pulse).map_err(config_error("sequence"))?;
            results.insert("pulse_spectral_width_hz".into(), json!(to_hz(pw)));
        }
        Command::Synth => {
            let kind = r.text_or("synth.kind", "ramsey")?;
            let noise = r.number_or("synth.noise_sigma", DEFAULT_NOISE)?;
            if noise < 0.0 {
                return Err(CliError::Config(format!("key `synth.noise_sigma` must be non-negative, got {noise}")));
            }
            let seed = match req.seed {
                Some(s) => s,
                None => {
                    let s = r.integer_or("synth.seed", 0)?;
                    u64::try_from(s).map_err(|_| CliError::Config("`synth.seed` must be non-negative".into()))?
                }
            };
            r.set("synth.seed", json!(seed));
            seed_used = Some(seed);
            match kind.as_str() {
                "ramsey" => {
                    let mode = mode(&mut r)?;
                    let atom = coupled_atom(&mut r)?;
                    let grid = scan_grid(&mut r)?;
                    let cfg = ramsey_config(&mut r, DEFAULT_TAIL_RING_DOWNS * mode.ring_down_time(), grid)?;
                    let s = generate_synthetic_spectrum(&atom, &mode, &cfg, noise, seed).map_err(config_error("synth"))?;
                    out.add("spectrum.csv", format_dataset(&Dataset::Spectrum(s)));
                }
                "rabi" => {
                    let params = RabiParams {
                        omega0: hz(r.positive("synth.omega0_hz")?),
                        delta: hz(r.number("synth.delta_hz")?),
                        t2: r.positive("atom.t2_s")?,
                    };
                    let durations = rabi_durations(&mut r)?;
                    let t: RabiTrace =
                        generate_synthetic_rabi(&params, &durations, noise, seed).map_err(config_error("synth"))?;
                    out.add("rabi.csv", format_dataset(&Dataset::Rabi(t)));
                }
                other => {
                    return Err(CliError::Config(format!("key `synth.kind` must be \"ramsey\" or \"rabi\", got {other:?}")))
                }
            }
        }
    }

    if let Some(false) = converged {
        warnings.push("fit did not converge; results are the best point found".into());
    }
    let mut record = Map::new();
    record.insert("command".into(), json!(req.command.name()));
    record.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    record.insert("label".into(), json!(label));
    record.insert("seed".into(), json!(seed_used));
    record.insert("data".into(), json!(req.data.map(|p| p.display().to_string())));
    record.insert("config".into(), Json::Object(r.into_resolved().into_iter().collect()));
    record.insert("results".into(), Json::Object(results));
    record.insert("warnings".into(), json!(warnings));
    let mut names: Vec<String> = out.files.iter().map(|f| f.0.clone()).collect();
    names.push("run.json".into());
    record.insert("outputs".into(), json!(names));
    let text = serde_json::to_string_pretty(&Json::Object(record)).map_err(|e| CliError::Other(e.to_string()))? + "\n";
    out.add("run.json", text);

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", out_dir.display())))?;
    let files = out.write(&out_dir)?;
    Ok(RunReport { out_dir, files, converged, warnings })
}

fn has_scan(cfg: &RunConfig) -> bool {
    cfg.contains("scan.start_hz") || cfg.contains("scan.stop_hz") || cfg.contains("scan.step_hz")
}
