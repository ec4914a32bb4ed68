//! Damped, driven resonator mode.
//!
//! The intracavity field obeys
//!
//! ```text
//! F'' + (ω_res/Q) F' + ω_res² F = Π(t) e^{-iω_μ t}
//! ```
//!
//! Writing `F = A(t) e^{-iω_μ t}` and dropping `A''` leaves a first-order
//! linear equation for the envelope,
//!
//! ```text
//! A' (ω_res/Q − 2iω_μ) + (ω_res² − ω_μ² − iω_μ ω_res/Q) A = Π(t),
//! ```
//!
//! whose solution for a piecewise-constant `Π` is a chain of exact
//! exponential relaxations toward each segment's steady state. No stepper is
//! involved, so the envelope carries no discretization error.

use num_complex::Complex64;

use crate::{Error, Result};

/// Largest grid step accepted by [`simulate_field`], in seconds.
pub const MAX_FIELD_STEP: f64 = 1e-9;

/// Ring-down tail appended after the last pulse, in units of the amplitude
/// ring-down time `2Q/ω_res`.
pub const DEFAULT_TAIL_RING_DOWNS: f64 = 10.0;

// Relative slack when comparing grid steps against their bound.
const STEP_SLACK: f64 = 1e-9;

/// A single resonator mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorMode {
    omega_res: f64,
    q_factor: f64,
}

impl ResonatorMode {
    pub fn new(omega_res: f64, q_factor: f64) -> Result<Self> {
        if !(omega_res.is_finite() && omega_res > 0.0) {
            return Err(Error::invalid(format!("omega_res must be positive, got {omega_res}")));
        }
        if !(q_factor.is_finite() && q_factor > 0.0) {
            return Err(Error::invalid(format!("q_factor must be positive, got {q_factor}")));
        }
        Ok(Self { omega_res, q_factor })
    }

    pub fn omega_res(&self) -> f64 {
        self.omega_res
    }

    pub fn q_factor(&self) -> f64 {
        self.q_factor
    }

    /// Amplitude ring-down time `2Q/ω_res`.
    pub fn ring_down_time(&self) -> f64 {
        2.0 * self.q_factor / self.omega_res
    }

    /// Power FWHM `ω_res/Q`.
    pub fn linewidth(&self) -> f64 {
        self.omega_res / self.q_factor
    }

    /// Coefficient of `A` in the envelope equation.
    fn restoring(&self, omega_mu: f64) -> Complex64 {
        // (ω_r − ω)(ω_r + ω) avoids cancelling two ~1e22 numbers.
        let detuned = (self.omega_res - omega_mu) * (self.omega_res + omega_mu);
        Complex64::new(detuned, -omega_mu * self.omega_res / self.q_factor)
    }

    /// Coefficient of `A'` in the envelope equation.
    fn inertia(&self, omega_mu: f64) -> Complex64 {
        Complex64::new(self.omega_res / self.q_factor, -2.0 * omega_mu)
    }

    /// Complex relaxation rate `λ` of the envelope at carrier `omega_mu`:
    /// the homogeneous solution is `A(t) ∝ e^{-λ t}`.
    pub fn envelope_rate(&self, omega_mu: f64) -> Complex64 {
        self.restoring(omega_mu) / self.inertia(omega_mu)
    }
}

/// One constant-amplitude stretch of the drive envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub amplitude: Complex64,
}

impl Segment {
    pub fn new(start: f64, duration: f64, amplitude: Complex64) -> Self {
        Self { start, duration, amplitude }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Piecewise-constant drive envelope `Π(t)` on a carrier `ω_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    carrier: f64,
    segments: Vec<Segment>,
}

impl PulseSequence {
    pub fn new(carrier: f64, segments: Vec<Segment>) -> Result<Self> {
        if !(carrier.is_finite() && carrier > 0.0) {
            return Err(Error::invalid(format!("carrier must be positive, got {carrier}")));
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.start.is_finite() && seg.duration.is_finite()) {
                return Err(Error::invalid(format!("segment {i} has non-finite timing")));
            }
            if seg.duration <= 0.0 {
                return Err(Error::invalid(format!(
                    "segment {i} has non-positive duration {}",
                    seg.duration
                )));
            }
            if !(seg.amplitude.re.is_finite() && seg.amplitude.im.is_finite()) {
                return Err(Error::invalid(format!("segment {i} has non-finite amplitude")));
            }
        }
        for (i, pair) in segments.windows(2).enumerate() {
            if pair[1].start < pair[0].end() {
                return Err(Error::invalid(format!(
                    "segments {i} and {} overlap or are out of order",
                    i + 1
                )));
            }
        }
        Ok(Self { carrier, segments })
    }

    /// One rectangular pulse.
    pub fn single(carrier: f64, start: f64, duration: f64, amplitude: Complex64) -> Result<Self> {
        Self::new(carrier, vec![Segment::new(start, duration, amplitude)])
    }

    /// Two identical rectangular pulses starting at `t = 0`, separated
    /// edge-to-edge by `gap`.
    pub fn ramsey(carrier: f64, duration: f64, gap: f64, amplitude: Complex64) -> Result<Self> {
        if gap < 0.0 {
            return Err(Error::invalid(format!("gap must be non-negative, got {gap}")));
        }
        Self::new(
            carrier,
            vec![
                Segment::new(0.0, duration, amplitude),
                Segment::new(duration + gap, duration, amplitude),
            ],
        )
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.segments.first().map(|s| s.start)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.segments.last().map(Segment::end)
    }

    /// `Π(t)`; zero outside every segment. Segments are half-open `[start, end)`.
    pub fn envelope(&self, t: f64) -> Complex64 {
        self.segments
            .iter()
            .find(|s| t >= s.start && t < s.end())
            .map_or(Complex64::new(0.0, 0.0), |s| s.amplitude)
    }

    /// The same sequence with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            carrier: self.carrier,
            segments: self
                .segments
                .iter()
                .map(|s| Segment { amplitude: s.amplitude * factor, ..*s })
                .collect(),
        }
    }
}

/// Exponential relaxation `A(t) = target + (initial − target) e^{-rate (t − start)}`,
/// valid from `start` until the next piece begins.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    start: f64,
    initial: Complex64,
    target: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    /// Only the samples are known; values in between are interpolated linearly.
    Sampled,
    /// Exact piecewise-exponential envelope sharing one relaxation rate.
    Piecewise { rate: Complex64, pieces: Vec<Piece> },
}

/// Intracavity field envelope `A(t)` sampled on a time grid, with
/// `F_μ(t) = A(t) e^{-iω_μ t}`.
///
/// Traces produced by [`simulate_field`] also remember their exact analytic
/// form, so [`FieldTrace::envelope_at`] is exact between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrace {
    t_grid: Vec<f64>,
    envelope: Vec<Complex64>,
    carrier: f64,
    profile: Profile,
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid contains non-finite values"));
    }
    if let Some(i) = t_grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!("time grid not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

fn validate_carrier(carrier: f64) -> Result<()> {
    if carrier.is_finite() && carrier > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("carrier must be positive, got {carrier}")))
    }
}

impl FieldTrace {
    /// Wraps raw samples. Values between samples are linearly interpolated.
    pub fn from_samples(t_grid: Vec<f64>, envelope: Vec<Complex64>, carrier: f64) -> Result<Self> {
        validate_grid(&t_grid)?;
        validate_carrier(carrier)?;
        if envelope.len() != t_grid.len() {
            return Err(Error::invalid(format!(
                "envelope has {} samples but grid has {}",
                envelope.len(),
                t_grid.len()
            )));
        }
        Ok(Self { t_grid, envelope, carrier, profile: Profile::Sampled })
    }

    /// A field of constant envelope over the whole grid.
    pub fn constant(t_grid: Vec<f64>, amplitude: Complex64, carrier: f64) -> Result<Self> {
        validate_grid(&t_grid)?;
        validate_carrier(carrier)?;
        let pieces = vec![Piece { start: t_grid[0], initial: amplitude, target: amplitude }];
        Ok(Self::from_pieces(t_grid, carrier, Complex64::new(0.0, 0.0), pieces))
    }

    /// The drive envelope itself, without filtering through a cavity: the
    /// envelope equals each segment amplitude while the segment is on and zero
    /// elsewhere.
    pub fn bare(drive: &PulseSequence, t_grid: Vec<f64>) -> Result<Self> {
        validate_grid(&t_grid)?;
        let zero = Complex64::new(0.0, 0.0);
        let mut pieces = Vec::with_capacity(2 * drive.segments().len());
        for seg in drive.segments() {
            pieces.push(Piece { start: seg.start, initial: seg.amplitude, target: seg.amplitude });
            pieces.push(Piece { start: seg.end(), initial: zero, target: zero });
        }
        // Back-to-back segments leave a zero-length off piece; drop it.
        pieces.dedup_by(|later, earlier| {
            if later.start == earlier.start {
                *earlier = *later;
                true
            } else {
                false
            }
        });
        Ok(Self::from_pieces(t_grid, drive.carrier(), zero, pieces))
    }

    fn from_pieces(t_grid: Vec<f64>, carrier: f64, rate: Complex64, pieces: Vec<Piece>) -> Self {
        let profile = Profile::Piecewise { rate, pieces };
        let envelope = t_grid.iter().map(|&t| profile_value(&profile, &[], &[], t)).collect();
        Self { t_grid, envelope, carrier, profile }
    }

    pub fn times(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn envelope(&self) -> &[Complex64] {
        &self.envelope
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    /// Whether values between grid points are exact rather than interpolated.
    pub fn is_exact(&self) -> bool {
        matches!(self.profile, Profile::Piecewise { .. })
    }

    /// Envelope at an arbitrary time.
    pub fn envelope_at(&self, t: f64) -> Complex64 {
        profile_value(&self.profile, &self.t_grid, &self.envelope, t)
    }

    /// Full complex field `A(t) e^{-iω_μ t}`.
    pub fn field_at(&self, t: f64) -> Complex64 {
        self.envelope_at(t) * Complex64::from_polar(1.0, -self.carrier * t)
    }

    /// Times at which the envelope's analytic form changes (pulse edges).
    /// Empty for sampled traces.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Sampled => Vec::new(),
            Profile::Piecewise { pieces, .. } => pieces.iter().map(|p| p.start).collect(),
        }
    }

    /// Upper bound on `|A(t)|` for `t ∈ [a, b]`.
    pub fn amplitude_bound(&self, a: f64, b: f64) -> f64 {
        match &self.profile {
            Profile::Sampled => {
                let lo = self.t_grid.partition_point(|&t| t < a).saturating_sub(1);
                let hi = self.t_grid.partition_point(|&t| t <= b).min(self.t_grid.len() - 1);
                self.envelope[lo..=hi].iter().map(|z| z.norm()).fold(0.0, f64::max)
            }
            Profile::Piecewise { pieces, .. } => {
                // |target + (A0 − target) e^{-λτ}| ≤ |target| + |A(a) − target| when Re λ ≥ 0.
                let first = pieces.partition_point(|p| p.start <= a);
                let mut bound = 0.0_f64;
                if first > 0 {
                    let p = &pieces[first - 1];
                    let now = self.envelope_at(a);
                    bound = bound.max(p.target.norm() + (now - p.target).norm());
                }
                for p in pieces[first..].iter().take_while(|p| p.start < b) {
                    bound = bound.max(p.target.norm() + (p.initial - p.target).norm());
                }
                bound
            }
        }
    }

    /// Envelope values at `a + k·h/2` for `k = 0..=2n` with `h = (b − a)/n`.
    ///
    /// `[a, b]` must not straddle a breakpoint. Values are accumulated
    /// multiplicatively, which keeps dense Bloch substepping cheap.
    pub(crate) fn half_step_values(&self, a: f64, b: f64, n: usize, out: &mut Vec<Complex64>) {
        out.clear();
        let h2 = (b - a) / (2 * n) as f64;
        match &self.profile {
            Profile::Piecewise { rate, pieces } => {
                let idx = pieces.partition_point(|p| p.start <= a);
                if idx == 0 {
                    out.resize(2 * n + 1, Complex64::new(0.0, 0.0));
                    return;
                }
                let p = &pieces[idx - 1];
                let mut transient = (p.initial - p.target) * (-rate * (a - p.start)).exp();
                let ratio = (-rate * h2).exp();
                for _ in 0..=2 * n {
                    out.push(p.target + transient);
                    transient *= ratio;
                }
            }
            Profile::Sampled => {
                for k in 0..=2 * n {
                    out.push(self.envelope_at(a + k as f64 * h2));
                }
            }
        }
    }

    /// Sum of two traces on the same grid and carrier.
    pub fn superpose(&self, other: &FieldTrace) -> Result<FieldTrace> {
        if self.carrier != other.carrier {
            return Err(Error::MismatchedCarrier { left: self.carrier, right: other.carrier });
        }
        if self.t_grid != other.t_grid {
            return Err(Error::invalid("traces are sampled on different grids"));
        }
        match (&self.profile, &other.profile) {
            (Profile::Piecewise { rate: ra, pieces: pa }, Profile::Piecewise { rate: rb, pieces: pb })
                if ra == rb =>
            {
                let mut starts: Vec<f64> = pa.iter().chain(pb.iter()).map(|p| p.start).collect();
                starts.sort_by(f64::total_cmp);
                starts.dedup();
                let pieces = starts
                    .into_iter()
                    .map(|s| Piece {
                        start: s,
                        initial: self.envelope_at(s) + other.envelope_at(s),
                        target: active_target(pa, s) + active_target(pb, s),
                    })
                    .collect();
                Ok(Self::from_pieces(self.t_grid.clone(), self.carrier, *ra, pieces))
            }
            _ => {
                let envelope =
                    self.envelope.iter().zip(&other.envelope).map(|(a, b)| a + b).collect();
                FieldTrace::from_samples(self.t_grid.clone(), envelope, self.carrier)
            }
        }
    }
}

fn active_target(pieces: &[Piece], t: f64) -> Complex64 {
    match pieces.partition_point(|p| p.start <= t) {
        0 => Complex64::new(0.0, 0.0),
        i => pieces[i - 1].target,
    }
}

fn profile_value(profile: &Profile, grid: &[f64], samples: &[Complex64], t: f64) -> Complex64 {
    match profile {
        Profile::Piecewise { rate, pieces } => match pieces.partition_point(|p| p.start <= t) {
            0 => Complex64::new(0.0, 0.0),
            i => {
                let p = &pieces[i - 1];
                if p.initial == p.target {
                    p.target
                } else {
                    p.target + (p.initial - p.target) * (-rate * (t - p.start)).exp()
                }
            }
        },
        Profile::Sampled => {
            let n = grid.len();
            if t <= grid[0] {
                return samples[0];
            }
            if t >= grid[n - 1] {
                return samples[n - 1];
            }
            let i = grid.partition_point(|&g| g <= t);
            let (t0, t1) = (grid[i - 1], grid[i]);
            let w = (t - t0) / (t1 - t0);
            samples[i - 1] * (1.0 - w) + samples[i] * w
        }
    }
}

/// Stationary envelope `Π₀ / (ω_res² − ω_μ² − iω_res ω_μ/Q)` for a constant drive.
pub fn steady_state_amplitude(mode: &ResonatorMode, omega_mu: f64, drive: Complex64) -> Result<Complex64> {
    validate_carrier(omega_mu)?;
    Ok(drive / mode.restoring(omega_mu))
}

/// Largest grid step [`simulate_field`] accepts for `mode`.
pub fn max_field_step(mode: &ResonatorMode) -> f64 {
    MAX_FIELD_STEP.min(mode.ring_down_time() / 20.0)
}

/// Propagates `drive` through `mode`, starting from an empty cavity at the
/// first pulse edge, and samples the envelope on `t_grid`.
pub fn simulate_field(mode: &ResonatorMode, drive: &PulseSequence, t_grid: &[f64]) -> Result<FieldTrace> {
    validate_grid(t_grid)?;
    let limit = max_field_step(mode);
    let step = t_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if step > limit * (1.0 + STEP_SLACK) {
        return Err(Error::GridTooCoarse { step, limit });
    }

    let carrier = drive.carrier();
    let rate = mode.envelope_rate(carrier);
    let restoring = mode.restoring(carrier);
    let zero = Complex64::new(0.0, 0.0);
    let advance = |p: &Piece, t: f64| p.target + (p.initial - p.target) * (-rate * (t - p.start)).exp();

    let mut pieces: Vec<Piece> = Vec::with_capacity(2 * drive.segments().len() + 1);
    let mut prev_end: Option<f64> = None;
    for seg in drive.segments() {
        let initial = match (prev_end, pieces.last().copied()) {
            (Some(end), Some(last)) if seg.start > end => {
                // Free ring-down between the previous segment and this one.
                let off = Piece { start: end, initial: advance(&last, end), target: zero };
                pieces.push(off);
                advance(&off, seg.start)
            }
            (Some(_), Some(last)) => advance(&last, seg.start),
            _ => zero,
        };
        pieces.push(Piece { start: seg.start, initial, target: seg.amplitude / restoring });
        prev_end = Some(seg.end());
    }
    if let (Some(end), Some(last)) = (prev_end, pieces.last().copied()) {
        pieces.push(Piece { start: end, initial: advance(&last, end), target: zero });
    }

    Ok(FieldTrace::from_pieces(t_grid.to_vec(), carrier, rate, pieces))
}

/// `|A_ss(ω)|² / |A_ss(ω_res)|²`: the mode's power response, unity at `ω_res`.
pub fn lorentzian_power_response(mode: &ResonatorMode, omega: f64) -> f64 {
    let at = mode.restoring(omega).norm_sqr();
    let peak = mode.restoring(mode.omega_res).norm_sqr();
    peak / at
}

/// Power-spectrum FWHM (rad/s) of a rectangular pulse of length `duration`.
///
/// The spectrum is `sinc²(ωT/2)`; the half-power point solves
/// `sin x / x = 1/√2`, giving `FWHM ≈ 2π × 0.886 / T`.
pub fn pulse_spectral_width(duration: f64) -> Result<f64> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!("pulse duration must be positive, got {duration}")));
    }
    let target = std::f64::consts::FRAC_1_SQRT_2;
    // sin(x)/x decreases monotonically on (0, π).
    let (mut lo, mut hi) = (1e-6_f64, std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.sin() / mid > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x_half = 0.5 * (lo + hi);
    Ok(4.0 * x_half / duration)
}

/// Uniform grid from `start` to at least `stop`, with the given maximal step.
/// The last point is exactly `stop`.
pub fn uniform_grid(start: f64, stop: f64, max_step: f64) -> Result<Vec<f64>> {
    if !(stop > start) || !(max_step > 0.0) {
        return Err(Error::invalid(format!(
            "cannot build grid from {start} to {stop} with step {max_step}"
        )));
    }
    let n = ((stop - start) / max_step).ceil().max(1.0) as usize;
    let h = (stop - start) / n as f64;
    let mut grid: Vec<f64> = (0..n).map(|k| start + k as f64 * h).collect();
    grid.push(stop);
    Ok(grid)
}
