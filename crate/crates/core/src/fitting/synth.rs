use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analytic::{rabi_population, RabiParams};
use crate::bloch::AtomParams;
use crate::experiment::{simulate_ramsey_spectrum, RabiTrace, RamseyConfig, Spectrum};
use crate::resonator::ResonatorMode;
use crate::{Error, Result};

fn add_noise(clean: &[f64], noise_sigma: f64, seed: u64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    if noise_sigma == 0.0 {
        return Ok((clean.to_vec(), None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let noisy = clean.iter().map(|&p| (p + normal.sample(&mut rng)).clamp(0.0, 1.0)).collect();
    Ok((noisy, Some(vec![noise_sigma; clean.len()])))
}

/// Simulated Ramsey spectrum plus independent Gaussian noise per point,
/// clipped to `[0, 1]`. Deterministic for a given `seed`.
pub fn generate_synthetic_spectrum(
    atom: &AtomParams,
    mode: &ResonatorMode,
    cfg: &RamseyConfig,
    noise_sigma: f64,
    seed: u64,
) -> Result<Spectrum> {
    let clean = simulate_ramsey_spectrum(atom, mode, cfg)?;
    let (population, sigma) = add_noise(&clean.population, noise_sigma, seed)?;
    Spectrum::new(clean.omega_grid, population, sigma)
}

/// Closed-form Rabi trace at `durations` with Gaussian noise, clipped to `[0, 1]`.
pub fn generate_synthetic_rabi(
    params: &RabiParams,
    durations: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<RabiTrace> {
    params.validate()?;
    let clean: Vec<f64> = durations.iter().map(|&t| rabi_population(t, params)).collect();
    let (population, sigma) = add_noise(&clean, noise_sigma, seed)?;
    RabiTrace::new(durations.to_vec(), population, sigma)
}
