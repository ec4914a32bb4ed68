//! Closed-form population of a two-level atom driven at constant strength and
//! frequency, with the coherent oscillation damped on a time scale `T2`.

use crate::{Error, Result};

/// Parameters of the damped, detuned Rabi model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiParams {
    /// Resonant Rabi frequency Ω₀ (rad/s).
    pub omega0: f64,
    /// Detuning Δ of the drive from half the two-photon splitting (rad/s).
    pub delta: f64,
    /// Coherence time (s).
    pub t2: f64,
}

impl RabiParams {
    pub fn new(omega0: f64, delta: f64, t2: f64) -> Result<Self> {
        let p = Self { omega0, delta, t2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 >= 0.0) {
            return Err(Error::invalid(format!("omega0 must be non-negative, got {}", self.omega0)));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        if !(self.t2 > 0.0) {
            return Err(Error::invalid(format!("t2 must be positive, got {}", self.t2)));
        }
        Ok(())
    }
}

/// `Ω = √(Ω₀² + (2Δ)²)`.
pub fn generalized_rabi(params: &RabiParams) -> f64 {
    params.omega0.hypot(2.0 * params.delta)
}

/// `P(t) = Ω₀²/(2Ω²) [1 − e^{−t/T2} cos(Ωt)]`.
///
/// Returns 0 when the atom is neither driven nor detuned.
pub fn rabi_population(t: f64, params: &RabiParams) -> f64 {
    let omega = generalized_rabi(params);
    if omega == 0.0 {
        return 0.0;
    }
    let contrast = (params.omega0 / omega).powi(2);
    0.5 * contrast * (1.0 - (-t / params.t2).exp() * (omega * t).cos())
}
