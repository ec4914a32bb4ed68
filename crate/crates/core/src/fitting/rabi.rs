use crate::analytic::{rabi_population, RabiParams};
use crate::experiment::RabiTrace;
use crate::units::mhz;
use crate::{Error, Result};

use super::lm::{least_squares, FitProblem, FitResult, LmOptions, Parameter};

const MIN_POINTS: usize = 6;

/// Fits the damped Rabi model to `trace`, starting from `guess`.
///
/// The model is even in the detuning, so the detuning is fitted as a
/// non-negative magnitude; its sign is left to the caller. Points without a
/// stated uncertainty are weighted equally.
pub fn fit_rabi(trace: &RabiTrace, guess: &RabiParams, options: &LmOptions) -> Result<FitResult> {
    guess.validate()?;
    if trace.len() < MIN_POINTS {
        return Err(Error::invalid(format!(
            "need at least {MIN_POINTS} points for a Rabi fit, got {}",
            trace.len()
        )));
    }
    let weights = match &trace.sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; trace.len()],
    };
    let times = trace.durations.clone();
    let problem = FitProblem {
        model: Box::new(move |p: &[f64]| {
            let params = RabiParams { omega0: p[0], delta: p[1], t2: p[2] };
            Ok(times.iter().map(|&t| rabi_population(t, &params)).collect())
        }),
        data: trace.population.clone(),
        weights,
        params: vec![
            Parameter::linear("omega0", guess.omega0, mhz(1.0)).bounded(0.0, f64::INFINITY),
            Parameter::linear("delta", guess.delta.abs(), mhz(1.0)).bounded(0.0, f64::INFINITY),
            Parameter::log("t2", guess.t2),
        ],
    };
    let mut fit = least_squares(&problem, options)?;
    fit.notes.push("delta is a magnitude: the model is even in the detuning, so its sign is not determined".into());
    Ok(fit)
}
