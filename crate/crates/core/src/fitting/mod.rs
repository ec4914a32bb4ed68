//! Parameter extraction by error-weighted nonlinear least squares, and seeded
//! synthetic data for checking that the fits recover what generated the data.

mod lm;
mod rabi;
mod ramsey;
mod synth;

pub use lm::{least_squares, FitProblem, FitResult, LmOptions, Model, Parameter, Scale};
pub use rabi::fit_rabi;
pub use ramsey::{fit_ramsey_spectrum, initial_guess, RamseyGuess, Q_BOUNDS, OMEGA_RES_WINDOW};
pub use synth::{generate_synthetic_rabi, generate_synthetic_spectrum};
