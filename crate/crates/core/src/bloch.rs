//! Two-level Bloch dynamics under a two-photon drive.
//!
//! The drive couples to the square of the cavity field. In the frame rotating
//! at twice the carrier, and dropping the terms oscillating at `4ω_μ`, the
//! Bloch vector obeys
//!
//! ```text
//! dr/dt = T(t) × r − Γ ∘ r,     T = (g* Re[A²], g* Im[A²], ω_atom − 2ω_μ)
//! ```
//!
//! where `A` is the cavity envelope and `Γ ∘ r` is elementwise damping.
//! Convention: `r_z = +1` is the lower state, so the upper-state population is
//! `(1 − r_z)/2`.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::resonator::FieldTrace;
use crate::{Error, Result};

/// Largest rotation angle (rad) of one RK4 substep.
pub const MAX_SUBSTEP_ANGLE: f64 = 0.01;

/// Largest rotation angle (rad) the Bloch vector may sweep between two samples
/// of the field grid.
pub const MAX_SAMPLE_ANGLE: f64 = 1.0;

const NORM_SLACK: f64 = 1e-9;

/// Two-photon transition and coupling of the ensemble-average atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomParams {
    omega_atom: f64,
    g_star: f64,
    gamma: Vector3<f64>,
}

impl AtomParams {
    /// `omega_atom` is the full two-photon splitting; `g_star` converts the
    /// squared envelope into a Rabi rate; `gamma` holds `(Γx, Γy, Γz)`.
    pub fn new(omega_atom: f64, g_star: f64, gamma: [f64; 3]) -> Result<Self> {
        if !(omega_atom.is_finite() && omega_atom > 0.0) {
            return Err(Error::invalid(format!("omega_atom must be positive, got {omega_atom}")));
        }
        if !g_star.is_finite() {
            return Err(Error::invalid("g_star must be finite"));
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::invalid(format!("decay rates must be non-negative, got {gamma:?}")));
        }
        Ok(Self { omega_atom, g_star, gamma: Vector3::from(gamma) })
    }

    /// Pure dephasing: `Γ = (1/T2, 1/T2, 0)`. An infinite `t2` means no decay.
    pub fn pure_dephasing(omega_atom: f64, g_star: f64, t2: f64) -> Result<Self> {
        if !(t2 > 0.0) {
            return Err(Error::invalid(format!("t2 must be positive, got {t2}")));
        }
        let rate = 1.0 / t2;
        Self::new(omega_atom, g_star, [rate, rate, 0.0])
    }

    pub fn omega_atom(&self) -> f64 {
        self.omega_atom
    }

    pub fn g_star(&self) -> f64 {
        self.g_star
    }

    pub fn gamma(&self) -> Vector3<f64> {
        self.gamma
    }

    pub fn with_g_star(&self, g_star: f64) -> Self {
        Self { g_star, ..*self }
    }

    /// Two-photon detuning `ω_atom − 2ω_μ`.
    pub fn two_photon_detuning(&self, omega_mu: f64) -> f64 {
        self.omega_atom - 2.0 * omega_mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub r: Vector3<f64>,
}

impl BlochState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { r: Vector3::new(x, y, z) }
    }

    /// All population in the lower state.
    pub fn ground() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn norm(&self) -> f64 {
        self.r.norm()
    }

    pub fn population_upper(&self) -> f64 {
        population_upper(self)
    }
}

/// Bloch states on the field's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochTrajectory {
    t_grid: Vec<f64>,
    states: Vec<BlochState>,
}

impl BlochTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn states(&self) -> &[BlochState] {
        &self.states
    }

    pub fn final_state(&self) -> BlochState {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn populations(&self) -> Vec<f64> {
        self.states.iter().map(population_upper).collect()
    }
}

/// `T × r − Γ ∘ r`.
pub fn bloch_rhs(state: &BlochState, torque: &Vector3<f64>, gamma: &Vector3<f64>) -> Vector3<f64> {
    torque.cross(&state.r) - gamma.component_mul(&state.r)
}

/// `(1 − r_z)/2`, clamped to `[0, 1]`.
pub fn population_upper(state: &BlochState) -> f64 {
    (0.5 * (1.0 - state.r.z)).clamp(0.0, 1.0)
}

fn torque(g_star: f64, detuning: f64, envelope: Complex64) -> Vector3<f64> {
    let sq = envelope * envelope;
    Vector3::new(g_star * sq.re, g_star * sq.im, detuning)
}

/// Integrates the rotating-frame Bloch equations through `field`, starting
/// from `initial` at the first grid time.
///
/// Each grid interval is split at pulse edges and then into equal RK4
/// substeps short enough that no substep rotates the vector by more than
/// [`MAX_SUBSTEP_ANGLE`].
pub fn evolve(atom: &AtomParams, field: &FieldTrace, initial: BlochState) -> Result<BlochTrajectory> {
    if !initial.r.iter().all(|c| c.is_finite()) || initial.norm() > 1.0 + NORM_SLACK {
        return Err(Error::invalid(format!("initial Bloch vector has norm {}", initial.norm())));
    }
    let detuning = atom.two_photon_detuning(field.carrier());
    let g_star = atom.g_star;
    let gamma = atom.gamma;
    let decay = gamma.max();
    let rate_bound = |a: f64, b: f64| {
        let amp = field.amplitude_bound(a, b);
        (g_star.abs() * amp * amp).hypot(detuning) + decay
    };

    let grid = field.times();
    let breaks = field.breakpoints();
    let mut states = Vec::with_capacity(grid.len());
    states.push(initial);
    let mut r = initial.r;
    let mut buf = Vec::new();

    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let step = t1 - t0;
        let rate = rate_bound(t0, t1);
        if step * rate > MAX_SAMPLE_ANGLE {
            return Err(Error::GridTooCoarse { step, limit: MAX_SAMPLE_ANGLE / rate });
        }

        let lo = breaks.partition_point(|&b| b <= t0);
        let hi = breaks.partition_point(|&b| b < t1);
        let mut a = t0;
        for b in breaks[lo..hi].iter().copied().chain(std::iter::once(t1)) {
            let span = b - a;
            let n = ((rate_bound(a, b) * span / MAX_SUBSTEP_ANGLE).ceil() as usize).max(1);
            let h = span / n as f64;
            field.half_step_values(a, b, n, &mut buf);
            for j in 0..n {
                let t_start = torque(g_star, detuning, buf[2 * j]);
                let t_mid = torque(g_star, detuning, buf[2 * j + 1]);
                let t_end = torque(g_star, detuning, buf[2 * j + 2]);
                let f = |tq: &Vector3<f64>, v: &Vector3<f64>| tq.cross(v) - gamma.component_mul(v);
                let k1 = f(&t_start, &r);
                let k2 = f(&t_mid, &(r + k1 * (0.5 * h)));
                let k3 = f(&t_mid, &(r + k2 * (0.5 * h)));
                let k4 = f(&t_end, &(r + k3 * h));
                r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            a = b;
        }
        states.push(BlochState { r });
    }

    Ok(BlochTrajectory { t_grid: grid.to_vec(), states })
}
