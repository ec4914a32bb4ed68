use crate::bloch::AtomParams;
use crate::experiment::{simulate_ramsey_spectrum, RamseyConfig, Spectrum};
use crate::resonator::ResonatorMode;
use crate::units::mhz;
use crate::{Error, Result};

use super::lm::{least_squares, FitProblem, FitResult, LmOptions, Parameter};

/// Allowed quality-factor range.
pub const Q_BOUNDS: (f64, f64) = (100.0, 1e6);

/// Half-width of the window (rad/s) around the scan center in which the
/// resonance may be placed: 2π × 50 MHz.
pub const OMEGA_RES_WINDOW: f64 = 50.0e6 * std::f64::consts::TAU;

const DEFAULT_Q_GUESS: f64 = 2500.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyGuess {
    pub omega_res: f64,
    pub q_factor: f64,
    pub g_star: f64,
}

fn scan_center(grid: &[f64]) -> f64 {
    0.5 * (grid[0] + grid[grid.len() - 1])
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits resonance frequency, quality factor and coupling of the full
/// Ramsey simulation to `spectrum`.
///
/// The scan grid is taken from `spectrum`; everything else about the sequence
/// comes from `cfg`. Dephasing and the atomic line are held at `atom_base`.
pub fn fit_ramsey_spectrum(
    spectrum: &Spectrum,
    cfg: &RamseyConfig,
    atom_base: &AtomParams,
    guess: &RamseyGuess,
    options: &LmOptions,
) -> Result<FitResult> {
    let sigma = spectrum
        .sigma
        .as_ref()
        .ok_or_else(|| Error::invalid("Ramsey fit needs per-point uncertainties"))?;
    let threshold = 3.0 * median(sigma);
    let max = spectrum.peak();
    if max < threshold {
        return Err(Error::FlatSpectrum { max, threshold });
    }

    let center = scan_center(&spectrum.omega_grid);
    let mut cfg = cfg.clone();
    cfg.frequency_grid = spectrum.omega_grid.clone();
    cfg.validate()?;

    let params = vec![
        Parameter::linear("omega_res", guess.omega_res, mhz(1.0))
            .bounded(center - OMEGA_RES_WINDOW, center + OMEGA_RES_WINDOW),
        Parameter::log("q_factor", guess.q_factor).bounded(Q_BOUNDS.0, Q_BOUNDS.1),
        Parameter::log("g_star", guess.g_star),
    ];
    let atom = *atom_base;
    let model_cfg = cfg.clone();
    let problem = FitProblem {
        model: Box::new(move |p: &[f64]| {
            let mode = ResonatorMode::new(p[0], p[1])?;
            let spectrum = simulate_ramsey_spectrum(&atom.with_g_star(p[2]), &mode, &model_cfg)?;
            Ok(spectrum.population)
        }),
        data: spectrum.population.clone(),
        weights: sigma.iter().map(|s| 1.0 / (s * s)).collect(),
        params,
    };
    let mut fit = least_squares(&problem, options)?;
    let gamma = atom_base.gamma();
    fit.notes.push(format!(
        "dephasing held fixed at gamma = ({:.6e}, {:.6e}, {:.6e}) 1/s",
        gamma.x, gamma.y, gamma.z
    ));
    Ok(fit)
}

/// Data-derived starting point: resonance at the population-weighted
/// centroid of the scan, `Q = 2500`, and a coupling whose simulated peak
/// population matches the measured one.
pub fn initial_guess(spectrum: &Spectrum, cfg: &RamseyConfig, atom_base: &AtomParams) -> Result<RamseyGuess> {
    let weights: Vec<f64> = match &spectrum.sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; spectrum.len()],
    };
    let (mut num, mut den) = (0.0, 0.0);
    for ((w, p), x) in weights.iter().zip(&spectrum.population).zip(&spectrum.omega_grid) {
        num += w * p * x;
        den += w * p;
    }
    if !(den > 0.0) {
        return Err(Error::FlatSpectrum { max: spectrum.peak(), threshold: 0.0 });
    }
    let omega_res = num / den;
    let q_factor = DEFAULT_Q_GUESS;
    let mode = ResonatorMode::new(omega_res, q_factor)?;
    let mut cfg = cfg.clone();
    cfg.frequency_grid = spectrum.omega_grid.clone();

    // Start from a π/2 area per pulse at the cavity peak, then refine using
    // the weak-drive scaling P ∝ g*².
    let field = q_factor * cfg.drive_amplitude;
    let mut g_star = std::f64::consts::FRAC_PI_2 / (cfg.pulse_duration * field * field);
    let target = spectrum.peak();
    for _ in 0..4 {
        let sim = simulate_ramsey_spectrum(&atom_base.with_g_star(g_star), &mode, &cfg)?;
        let peak = sim.peak();
        if peak <= 0.0 {
            break;
        }
        g_star *= (target / peak).sqrt().clamp(0.5, 2.0);
    }
    Ok(RamseyGuess { omega_res, q_factor, g_star })
}
