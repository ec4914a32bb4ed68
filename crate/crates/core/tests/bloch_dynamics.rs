use nalgebra::Vector3;
use proptest::prelude::*;
use rydres_core::bloch::*;
use rydres_core::resonator::*;
use rydres_core::units::{mhz, NS, US};
use rydres_core::Complex64;
use std::f64::consts::PI;

const OMEGA_ATOM: f64 = 2.0 * 19.556_499e9 * std::f64::consts::TAU;

fn cavity_trace(det_mhz: f64, carrier_offset_mhz: f64, amp: f64) -> FieldTrace {
    let mode = ResonatorMode::new(OMEGA_ATOM / 2.0 + mhz(det_mhz), 2470.0).unwrap();
    let w = OMEGA_ATOM / 2.0 + mhz(carrier_offset_mhz);
    let seq = PulseSequence::ramsey(w, 50.0 * NS, 100.0 * NS, Complex64::new(amp * w * w, 0.0)).unwrap();
    simulate_field(&mode, &seq, &uniform_grid(0.0, 1.0 * US, 0.5 * NS).unwrap()).unwrap()
}

fn unit_vector(theta: f64, phi: f64) -> BlochState {
    BlochState::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_conserved_without_damping(
        theta in 0.0..PI, phi in 0.0..(2.0 * PI),
        det in -6.0..6.0f64, offset in -6.0..6.0f64, g in 2.0..12.0f64,
    ) {
        let field = cavity_trace(det, offset, 1.0);
        let atom = AtomParams::new(OMEGA_ATOM, g, [0.0; 3]).unwrap();
        let start = unit_vector(theta, phi);
        let traj = evolve(&atom, &field, start).unwrap();
        for s in traj.states() {
            prop_assert!((s.norm() - start.norm()).abs() < 1e-9, "norm {}", s.norm());
        }
    }

    #[test]
    fn damping_never_increases_purity(
        theta in 0.0..PI, phi in 0.0..(2.0 * PI),
        gx in 0.0..5e6f64, gy in 0.0..5e6f64, gz in 0.0..5e6f64,
        offset in -4.0..4.0f64,
    ) {
        let field = cavity_trace(-0.38, offset, 1.0);
        let atom = AtomParams::new(OMEGA_ATOM, 6.0, [gx, gy, gz]).unwrap();
        let traj = evolve(&atom, &field, unit_vector(theta, phi)).unwrap();
        for w in traj.states().windows(2) {
            prop_assert!(w[1].norm() <= w[0].norm() + 1e-9);
        }
    }
}

/// `r` rotated about `axis` (not normalized) by `|axis|·t`, i.e. the exact
/// solution of `dr/dt = axis × r`.
fn rotate(r: Vector3<f64>, axis: Vector3<f64>, t: f64) -> Vector3<f64> {
    let w = axis.norm();
    if w == 0.0 {
        return r;
    }
    let k = axis / w;
    let (s, c) = (w * t).sin_cos();
    r * c + k.cross(&r) * s + k * k.dot(&r) * (1.0 - c)
}

#[test]
fn bare_ramsey_sequence_matches_exact_rotations() {
    let tau = 50.0 * NS;
    let gap = 100.0 * NS;
    let amp = Complex64::from_polar(1.0, 0.3);
    let omega0 = PI / 2.0 / tau;
    let atom = AtomParams::new(OMEGA_ATOM, omega0, [0.0; 3]).unwrap();
    let t = uniform_grid(0.0, 2.0 * tau + gap, 0.25 * NS).unwrap();
    let sq = amp * amp;

    for k in -40..=40 {
        let w = OMEGA_ATOM / 2.0 + mhz(0.2 * k as f64);
        let seq = PulseSequence::ramsey(w, tau, gap, amp).unwrap();
        let field = FieldTrace::bare(&seq, t.clone()).unwrap();
        let sim = evolve(&atom, &field, BlochState::ground()).unwrap().final_state();

        let delta = OMEGA_ATOM - 2.0 * w;
        let on = Vector3::new(omega0 * sq.re, omega0 * sq.im, delta);
        let off = Vector3::new(0.0, 0.0, delta);
        let r = rotate(rotate(rotate(Vector3::z(), on, tau), off, gap), on, tau);
        assert!((sim.r - r).norm() < 1e-6, "ω_μ offset {} MHz: {:?} vs {:?}", 0.2 * k as f64, sim.r, r);
    }
}

fn local_maxima(x: &[f64], y: &[f64]) -> Vec<f64> {
    (1..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .map(|i| {
            let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
            x[i] + 0.5 * (a - c) / (a - 2.0 * b + c) * (x[i + 1] - x[i])
        })
        .collect()
}

fn central_spacing(x: &[f64], y: &[f64], center: f64) -> f64 {
    let m = local_maxima(x, y);
    let c = (0..m.len()).min_by(|&a, &b| (m[a] - center).abs().total_cmp(&(m[b] - center).abs())).unwrap();
    0.5 * (m[c + 1] - m[c - 1])
}

#[test]
fn fringes_are_twice_as_fine_in_carrier_frequency() {
    let tau = 20.0 * NS;
    let gap = 300.0 * NS;
    let omega0 = PI / 2.0 / tau;
    let atom = AtomParams::new(OMEGA_ATOM, omega0, [0.0; 3]).unwrap();
    let t = uniform_grid(0.0, 2.0 * tau + gap, 0.5 * NS).unwrap();
    let one = Complex64::new(1.0, 0.0);

    let offsets: Vec<f64> = (-300..=300).map(|k| mhz(0.01 * k as f64)).collect();
    let pops: Vec<f64> = offsets
        .iter()
        .map(|&d| {
            let seq = PulseSequence::ramsey(OMEGA_ATOM / 2.0 + d, tau, gap, one).unwrap();
            let field = FieldTrace::bare(&seq, t.clone()).unwrap();
            evolve(&atom, &field, BlochState::ground()).unwrap().final_state().population_upper()
        })
        .collect();

    // Same data against the two-photon detuning 2(ω_μ − ω_atom/2).
    let two_photon: Vec<f64> = offsets.iter().map(|d| 2.0 * d).collect();
    let in_carrier = central_spacing(&offsets, &pops, 0.0);
    let in_two_photon = central_spacing(&two_photon, &pops, 0.0);

    // Ramsey fringes of π/2 pulses repeat every 2π/(gap + 4τ/π) in the
    // detuning that drives the phase.
    let period = 2.0 * PI / (gap + 4.0 * tau / PI);
    assert!((in_two_photon - period).abs() < 0.02 * period, "{in_two_photon} vs {period}");
    assert!((in_carrier - 0.5 * period).abs() < 0.02 * period, "{in_carrier} vs {}", 0.5 * period);
}

#[test]
fn rotating_frame_matches_lab_frame_on_short_window() {
    let g_amp = mhz(20.0);
    let amp = Complex64::from_polar(1.0, 0.4);
    let w = OMEGA_ATOM / 2.0 - mhz(5.0);
    let window = 1.0 * NS;
    let atom = AtomParams::new(OMEGA_ATOM, g_amp, [0.0; 3]).unwrap();
    let grid = uniform_grid(0.0, window, 0.05 * NS).unwrap();
    let field = FieldTrace::constant(grid, amp, w).unwrap();
    let start = BlochState::new(0.6, 0.0, 0.8);
    let rot = evolve(&atom, &field, start).unwrap().final_state().r;

    // Lab frame: linear drive about x, bare precession about z.
    let sq = amp * amp;
    let torque = |t: f64| {
        let phase = Complex64::from_polar(1.0, 2.0 * w * t);
        Vector3::new(2.0 * g_amp * (sq * phase).re, 0.0, OMEGA_ATOM)
    };
    let h = 0.005 / OMEGA_ATOM;
    let n = (window / h).ceil() as usize;
    let h = window / n as f64;
    let mut r = start.r;
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = torque(t).cross(&r);
        let k2 = torque(t + 0.5 * h).cross(&(r + k1 * (0.5 * h)));
        let k3 = torque(t + 0.5 * h).cross(&(r + k2 * (0.5 * h)));
        let k4 = torque(t + h).cross(&(r + k3 * h));
        r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    // Back into the frame rotating at 2ω_μ.
    let lab_in_rot = rotate(r, Vector3::new(0.0, 0.0, -2.0 * w), window);
    assert!((lab_in_rot - rot).norm() < 1e-3, "{lab_in_rot:?} vs {rot:?}");
    // The window must actually move the vector.
    assert!((rot - start.r).norm() > 0.05);
}

fn constant_field_populations(atom: &AtomParams, omega0: f64, stop: f64) -> (Vec<f64>, Vec<f64>) {
    let grid = uniform_grid(0.0, stop, 2.0 * NS).unwrap();
    let amp = Complex64::new((omega0 / atom.g_star()).sqrt(), 0.0);
    let field = FieldTrace::constant(grid, amp, OMEGA_ATOM / 2.0).unwrap();
    let traj = evolve(atom, &field, BlochState::ground()).unwrap();
    (traj.times().to_vec(), traj.populations())
}

#[test]
fn resonant_dephasing_follows_damped_oscillator() {
    // With Γ = (γ, γ, 0) and a resonant x drive, r_z obeys z'' + γ z' + Ω0² z = 0.
    let t2 = 0.84 * US;
    let gamma = 1.0 / t2;
    for omega0 in [mhz(1.57), mhz(0.3), 0.4 * gamma] {
        let atom = AtomParams::pure_dephasing(OMEGA_ATOM, 1.0, t2).unwrap();
        let (t, p) = constant_field_populations(&atom, omega0, 3.0 * US);
        let wp2 = omega0 * omega0 - 0.25 * gamma * gamma;
        for (&tk, &pk) in t.iter().zip(&p) {
            let decay = (-0.5 * gamma * tk).exp();
            let z = if wp2 > 0.0 {
                let wp = wp2.sqrt();
                decay * ((wp * tk).cos() + 0.5 * gamma / wp * (wp * tk).sin())
            } else {
                let k = (-wp2).sqrt();
                decay * ((k * tk).cosh() + 0.5 * gamma / k * (k * tk).sinh())
            };
            assert!((pk - 0.5 * (1.0 - z)).abs() < 1e-6, "Ω0 = {omega0:e}, t = {tk:e}");
        }
    }
}

#[test]
fn damped_fit_model_matches_bloch_for_strong_drive() {
    // The fit model's e^{-t/T2} envelope on the population corresponds to a
    // transverse decay rate of 2/T2 when Ω0·T2 ≫ 1.
    let t2 = 0.84 * US;
    let omega0 = mhz(10.0);
    let atom = AtomParams::new(OMEGA_ATOM, 1.0, [2.0 / t2, 2.0 / t2, 0.0]).unwrap();
    let (t, p) = constant_field_populations(&atom, omega0, 1.0 * US);
    let params = rydres_core::analytic::RabiParams::new(omega0, 0.0, t2).unwrap();
    for (&tk, &pk) in t.iter().zip(&p) {
        let model = rydres_core::analytic::rabi_population(tk, &params);
        assert!((pk - model).abs() < 2e-2, "t = {tk:e}: {pk} vs {model}");
    }
}

#[test]
fn undamped_constant_field_matches_closed_form() {
    let params = [(mhz(1.57), mhz(-0.54)), (mhz(2.0), mhz(1.5)), (mhz(0.5), 0.0)];
    for (omega0, delta) in params {
        let atom = AtomParams::new(OMEGA_ATOM, 1.0, [0.0; 3]).unwrap();
        let grid = uniform_grid(0.0, 2.0 * US, 2.0 * NS).unwrap();
        // Δ is the one-photon-scale detuning; the two-photon detuning is 2Δ.
        let w = OMEGA_ATOM / 2.0 + delta;
        let field = FieldTrace::constant(grid, Complex64::new(omega0.sqrt(), 0.0), w).unwrap();
        let traj = evolve(&atom, &field, BlochState::ground()).unwrap();
        let omega = omega0.hypot(2.0 * delta);
        for (&tk, pk) in traj.times().iter().zip(traj.populations()) {
            let exact = omega0 * omega0 / (omega * omega) * (0.5 * omega * tk).sin().powi(2);
            assert!((pk - exact).abs() < 1e-6);
        }
    }
}
