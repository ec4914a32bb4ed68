//! The two measurements: Rabi pulse-length scans and cavity-enhanced Ramsey
//! frequency scans.
//!
//! Drive amplitudes here are expressed as a field scale `E`: the sequence
//! injected into the resonator has `Π = E·ω_μ²`, so that on resonance the
//! intracavity envelope settles at `|A| ≈ Q·E`. Only `g*·|A|²` is physical;
//! `E` absorbs the unknown source-to-cavity calibration.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bloch::{evolve, AtomParams, BlochState};
use crate::resonator::{
    max_field_step, simulate_field, uniform_grid, PulseSequence, ResonatorMode, DEFAULT_TAIL_RING_DOWNS,
};
use crate::units::{mhz, NS};
use crate::{Error, Result};

pub const DEFAULT_PULSE_DURATION: f64 = 50.0 * NS;
pub const DEFAULT_GAP: f64 = 100.0 * NS;

/// Half-span of the default Ramsey scan around the two-photon line.
pub fn default_scan_half_span() -> f64 {
    mhz(6.0)
}

/// Step of the default Ramsey scan.
pub fn default_scan_step() -> f64 {
    mhz(0.05)
}

/// Resonator drive `Π` for field scale `amplitude` at carrier `omega_mu`.
pub fn drive_for(amplitude: f64, omega_mu: f64) -> Complex64 {
    Complex64::new(amplitude * omega_mu * omega_mu, 0.0)
}

/// Ring-down tail long enough for the field to fall below 1e-4 of its driven value.
pub fn default_tail(mode: &ResonatorMode) -> f64 {
    DEFAULT_TAIL_RING_DOWNS * mode.ring_down_time()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyConfig {
    pub pulse_duration: f64,
    /// Edge-to-edge separation of the two pulses.
    pub gap: f64,
    pub drive_amplitude: f64,
    /// Carrier frequencies `ω_μ` to scan (rad/s), strictly increasing.
    pub frequency_grid: Vec<f64>,
    pub ring_down_tail: f64,
}

impl RamseyConfig {
    /// 50 ns pulses, 100 ns gap, scanning `center ± 2π×6 MHz` in 2π×50 kHz steps,
    /// with the default ring-down tail of `mode`.
    pub fn standard(center: f64, drive_amplitude: f64, mode: &ResonatorMode) -> Self {
        let half = default_scan_half_span();
        let step = default_scan_step();
        let n = (2.0 * half / step).round() as usize;
        let frequency_grid = (0..=n).map(|k| center - half + k as f64 * step).collect();
        Self {
            pulse_duration: DEFAULT_PULSE_DURATION,
            gap: DEFAULT_GAP,
            drive_amplitude,
            frequency_grid,
            ring_down_tail: default_tail(mode),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_duration.is_finite() && self.pulse_duration > 0.0) {
            return Err(Error::invalid(format!("pulse duration must be positive, got {}", self.pulse_duration)));
        }
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return Err(Error::invalid(format!("gap must be non-negative, got {}", self.gap)));
        }
        if !(self.ring_down_tail.is_finite() && self.ring_down_tail >= 0.0) {
            return Err(Error::invalid("ring-down tail must be non-negative"));
        }
        if !self.drive_amplitude.is_finite() {
            return Err(Error::invalid("drive amplitude must be finite"));
        }
        check_abscissa(&self.frequency_grid, "frequency grid")?;
        if self.frequency_grid[0] <= 0.0 {
            return Err(Error::invalid("frequency grid must be positive"));
        }
        Ok(())
    }

    pub fn sequence_length(&self) -> f64 {
        2.0 * self.pulse_duration + self.gap
    }
}

fn check_abscissa(x: &[f64], what: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!("{what} is not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

fn check_populations(p: &[f64], sigma: Option<&[f64]>, n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::invalid(format!("{} populations for {n} abscissa values", p.len())));
    }
    if let Some(i) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!("population {} at index {i} outside [0, 1]", p[i])));
    }
    if let Some(s) = sigma {
        if s.len() != n {
            return Err(Error::invalid(format!("{} sigmas for {n} abscissa values", s.len())));
        }
        if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("sigma {} at index {i} is not positive", s[i])));
        }
    }
    Ok(())
}

/// Upper-state population versus carrier frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega_grid: Vec<f64>,
    pub population: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Spectrum {
    pub fn new(omega_grid: Vec<f64>, population: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        check_abscissa(&omega_grid, "frequency grid")?;
        check_populations(&population, sigma.as_deref(), omega_grid.len())?;
        Ok(Self { omega_grid, population, sigma })
    }

    pub fn len(&self) -> usize {
        self.omega_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_grid.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.population.iter().copied().fold(0.0, f64::max)
    }
}

/// Upper-state population versus pulse length.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiTrace {
    pub durations: Vec<f64>,
    pub population: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl RabiTrace {
    pub fn new(durations: Vec<f64>, population: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        check_abscissa(&durations, "durations")?;
        check_populations(&population, sigma.as_deref(), durations.len())?;
        Ok(Self { durations, population, sigma })
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }
}

/// Runs `drive` through the cavity (plus `tail`) and returns the final
/// upper-state population.
fn final_population(atom: &AtomParams, mode: &ResonatorMode, drive: &PulseSequence, tail: f64) -> Result<f64> {
    let end = drive.end_time().unwrap_or(0.0) + tail;
    let grid = uniform_grid(0.0, end.max(max_field_step(mode)), max_field_step(mode))?;
    let field = simulate_field(mode, drive, &grid)?;
    let traj = evolve(atom, &field, BlochState::ground())?;
    Ok(traj.final_state().population_upper())
}

/// One single-pulse experiment per entry of `durations`; each records the
/// population once the field has rung down.
pub fn simulate_rabi_trace(
    atom: &AtomParams,
    mode: &ResonatorMode,
    omega_mu: f64,
    durations: &[f64],
    amplitude: f64,
) -> Result<RabiTrace> {
    check_abscissa(durations, "durations")?;
    if durations[0] <= 0.0 {
        return Err(Error::invalid("durations must be positive"));
    }
    let drive = drive_for(amplitude, omega_mu);
    let tail = default_tail(mode);
    let population = durations
        .par_iter()
        .map(|&d| {
            let seq = PulseSequence::single(omega_mu, 0.0, d, drive)?;
            final_population(atom, mode, &seq, tail)
        })
        .collect::<Result<Vec<_>>>()?;
    RabiTrace::new(durations.to_vec(), population, None)
}

/// Population left after the two-pulse sequence and its ring-down, for every
/// carrier in `cfg.frequency_grid`.
pub fn simulate_ramsey_spectrum(atom: &AtomParams, mode: &ResonatorMode, cfg: &RamseyConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let population = cfg
        .frequency_grid
        .par_iter()
        .map(|&w| {
            let seq = PulseSequence::ramsey(w, cfg.pulse_duration, cfg.gap, drive_for(cfg.drive_amplitude, w))?;
            final_population(atom, mode, &seq, cfg.ring_down_tail)
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(cfg.frequency_grid.clone(), population, None)
}

/// Full width at half maximum of the tallest fringe.
///
/// The half level sits midway between the peak and the higher of the two
/// local minima flanking it; crossings are located by linear interpolation.
pub fn fringe_fwhm(spectrum: &Spectrum) -> Result<f64> {
    let (x, y) = (&spectrum.omega_grid, &spectrum.population);
    let n = y.len();
    if n < 3 {
        return Err(Error::NoResolvablePeak);
    }
    let (ipk, &peak) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoResolvablePeak)?;
    let baseline = y.iter().copied().fold(f64::INFINITY, f64::min);
    if peak - baseline <= f64::EPSILON || peak < 2.0 * baseline {
        return Err(Error::NoResolvablePeak);
    }

    let mut left = ipk;
    while left > 0 && y[left - 1] <= y[left] {
        left -= 1;
    }
    let mut right = ipk;
    while right + 1 < n && y[right + 1] <= y[right] {
        right += 1;
    }
    let floor = y[left].max(y[right]);
    let half = 0.5 * (peak + floor);

    let cross = |i: usize, j: usize| {
        // y[i] >= half > y[j] or the reverse; interpolate between x[i] and x[j].
        let w = (half - y[i]) / (y[j] - y[i]);
        x[i] + w * (x[j] - x[i])
    };
    let lo = (left..ipk).rev().find(|&i| y[i] < half).map(|i| cross(i, i + 1));
    let hi = (ipk + 1..=right).find(|&i| y[i] < half).map(|i| cross(i - 1, i));
    match (lo, hi) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(Error::NoResolvablePeak),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz, mhz};

    #[test]
    fn fwhm_of_cos_squared_fringe() {
        // cos²(π x / P) has maxima every P and FWHM P/2.
        let period = mhz(2.0);
        let step = mhz(0.01);
        let x: Vec<f64> = (0..=400).map(|k| ghz(19.5) - mhz(2.0) + k as f64 * step).collect();
        let center = ghz(19.5) + mhz(0.013);
        let y: Vec<f64> = x
            .iter()
            .map(|&w| {
                let env = (-((w - center) / mhz(3.0)).powi(2)).exp();
                env * (std::f64::consts::PI * (w - center) / period).cos().powi(2)
            })
            .collect();
        let s = Spectrum::new(x, y, None).unwrap();
        let fwhm = fringe_fwhm(&s).unwrap();
        // The Gaussian envelope barely distorts the central fringe.
        assert!((fwhm - period / 2.0).abs() < 0.02 * period, "{}", fwhm / mhz(1.0));
    }

    #[test]
    fn fwhm_rejects_flat_and_monotone() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let flat = Spectrum::new(x.clone(), vec![0.3; 10], None).unwrap();
        assert_eq!(fringe_fwhm(&flat), Err(Error::NoResolvablePeak));
        let rising = Spectrum::new(x.clone(), (1..=10).map(|k| k as f64 / 10.0).collect(), None).unwrap();
        assert_eq!(fringe_fwhm(&rising), Err(Error::NoResolvablePeak));
        let pedestal: Vec<f64> = (0..10).map(|k| if k == 5 { 0.5 } else { 0.3 }).collect();
        let s = Spectrum::new(x, pedestal, None).unwrap();
        assert_eq!(fringe_fwhm(&s), Err(Error::NoResolvablePeak));
    }

    #[test]
    fn dataset_validation() {
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.1, 1.7], None).is_err());
        assert!(Spectrum::new(vec![2.0, 1.0], vec![0.1, 0.2], None).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.1, 0.2], Some(vec![0.1, 0.0])).is_err());
        assert!(RabiTrace::new(vec![1.0, 2.0], vec![0.1, 0.2], Some(vec![0.1, 0.1])).is_ok());
    }

    #[test]
    fn config_validation() {
        let mode = ResonatorMode::new(ghz(19.556), 2470.0).unwrap();
        let mut cfg = RamseyConfig::standard(ghz(19.5565), 1.0, &mode);
        assert_eq!(cfg.frequency_grid.len(), 241);
        assert!(cfg.validate().is_ok());
        cfg.gap = -1.0;
        assert!(cfg.validate().is_err());
        cfg.gap = 0.0;
        cfg.frequency_grid.clear();
        assert!(cfg.validate().is_err());
    }
}
