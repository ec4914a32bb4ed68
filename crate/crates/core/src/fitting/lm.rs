//! Error-weighted damped least squares (Levenberg–Marquardt).
//!
//! Parameters are mapped to internal coordinates of order unity before the
//! optimizer sees them: linear parameters are shifted and divided by a
//! characteristic scale, positive parameters are log-transformed. Jacobians
//! are forward differences in those internal coordinates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::{Error, Result};

/// Mapping between a physical parameter and its internal coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    /// `p = p₀ + scale·u`.
    Linear(f64),
    /// `p = p₀·e^u`; keeps the parameter strictly positive.
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Parameter {
    pub fn linear(name: &str, initial: f64, scale: f64) -> Self {
        Self {
            name: name.to_owned(),
            initial,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            scale: Scale::Linear(scale),
        }
    }

    pub fn log(name: &str, initial: f64) -> Self {
        Self { name: name.to_owned(), initial, lower: 0.0, upper: f64::INFINITY, scale: Scale::Log }
    }

    pub fn bounded(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn to_physical(&self, u: f64) -> f64 {
        let p = match self.scale {
            Scale::Linear(s) => self.initial + s * u,
            Scale::Log => self.initial * u.exp(),
        };
        p.clamp(self.lower, self.upper)
    }

    fn to_internal(&self, p: f64) -> f64 {
        match self.scale {
            Scale::Linear(s) => (p - self.initial) / s,
            Scale::Log => (p / self.initial).ln(),
        }
    }

    /// `dp/du` at physical value `p`.
    fn derivative(&self, p: f64) -> f64 {
        match self.scale {
            Scale::Linear(s) => s,
            Scale::Log => p,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.initial.is_finite() {
            return Err(Error::invalid(format!("initial value of {} is not finite", self.name)));
        }
        if !(self.lower <= self.initial && self.initial <= self.upper) {
            return Err(Error::invalid(format!(
                "initial value {} of {} outside bounds [{}, {}]",
                self.initial, self.name, self.lower, self.upper
            )));
        }
        match self.scale {
            Scale::Linear(s) if !(s.is_finite() && s > 0.0) => {
                Err(Error::invalid(format!("scale of {} must be positive", self.name)))
            }
            Scale::Log if !(self.initial > 0.0) => {
                Err(Error::invalid(format!("log-scaled {} must start positive", self.name)))
            }
            _ => Ok(()),
        }
    }
}

pub type Model<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a;

/// Weighted least-squares problem: minimize `Σ wᵢ (dataᵢ − modelᵢ(p))²`.
pub struct FitProblem<'a> {
    pub model: Box<Model<'a>>,
    pub data: Vec<f64>,
    pub weights: Vec<f64>,
    pub params: Vec<Parameter>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop once every scaled gradient component is below this.
    pub gtol: f64,
    /// Forward-difference step in internal coordinates.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, ftol: 1e-10, gtol: 1e-8, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Covariance of the physical parameters, scaled by the reduced chi-square.
    pub covariance: DMatrix<f64>,
    pub chi_square: f64,
    pub reduced_chi_square: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Largest scaled gradient component at the returned point.
    pub gradient_norm: f64,
    /// Cost after the initial evaluation and after every accepted step.
    pub cost_history: Vec<f64>,
    pub notes: Vec<String>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    /// One-sigma uncertainty: square root of the covariance diagonal.
    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }

    pub fn uncertainties(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.covariance[(i, i)].max(0.0).sqrt()).collect()
    }
}

struct State {
    u: DVector<f64>,
    p: Vec<f64>,
    model: Vec<f64>,
    residual: DVector<f64>,
    cost: f64,
}

impl FitProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::invalid("no free parameters"));
        }
        if self.data.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "{} data points but {} weights",
                self.data.len(),
                self.weights.len()
            )));
        }
        if self.data.len() <= self.params.len() {
            return Err(Error::invalid(format!(
                "{} data points cannot constrain {} parameters",
                self.data.len(),
                self.params.len()
            )));
        }
        if let Some(i) = self.weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!("weight {} at index {i} is not positive", self.weights[i])));
        }
        if self.data.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("data contains non-finite values"));
        }
        self.params.iter().try_for_each(Parameter::validate)
    }

    fn physical(&self, u: &DVector<f64>) -> Vec<f64> {
        self.params.iter().zip(u.iter()).map(|(p, &v)| p.to_physical(v)).collect()
    }

    fn evaluate(&self, p: &[f64]) -> Result<Vec<f64>> {
        let m = (self.model)(p)?;
        if m.len() != self.data.len() {
            return Err(Error::ModelEvaluation(format!(
                "model returned {} values for {} data points",
                m.len(),
                self.data.len()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelEvaluation(format!("non-finite model output at {p:?}")));
        }
        Ok(m)
    }

    fn state_at(&self, u: DVector<f64>) -> Result<State> {
        let p = self.physical(&u);
        // Re-derive u from the clamped physical values so bounds act as projections.
        let u = DVector::from_iterator(u.len(), self.params.iter().zip(&p).map(|(par, &v)| par.to_internal(v)));
        let model = self.evaluate(&p)?;
        let residual = DVector::from_iterator(
            model.len(),
            self.data.iter().zip(&model).zip(&self.weights).map(|((d, m), w)| w.sqrt() * (d - m)),
        );
        let cost = residual.norm_squared();
        Ok(State { u, p, model, residual, cost })
    }

    /// Jacobian of the weighted residual with respect to internal coordinates.
    fn jacobian(&self, state: &State, fd_step: f64) -> Result<DMatrix<f64>> {
        let n = self.params.len();
        let columns = (0..n)
            .into_par_iter()
            .map(|j| {
                let par = &self.params[j];
                let mut h = fd_step * state.u[j].abs().max(1.0);
                // Step backwards when a forward step would leave the bounds.
                if par.to_physical(state.u[j] + h) == state.p[j] {
                    h = -h;
                }
                let mut u = state.u.clone();
                u[j] += h;
                let p = self.physical(&u);
                let m = self.evaluate(&p)?;
                let actual = u[j] - state.u[j];
                Ok(m.iter()
                    .zip(&state.model)
                    .zip(&self.weights)
                    .map(|((a, b), w)| -w.sqrt() * (a - b) / actual)
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.data.len(), n, |i, j| columns[j][i]))
    }
}

fn scaled_gradient(jt_r: &DVector<f64>, normal: &DMatrix<f64>, cost: f64) -> f64 {
    jt_r.iter()
        .enumerate()
        .map(|(j, g)| {
            let denom = (normal[(j, j)] * cost).sqrt();
            if denom > 0.0 {
                g.abs() / denom
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes the weighted cost of `problem`.
///
/// Hitting `max_iterations` is not an error: the best point found is returned
/// with `converged = false`. A normal matrix that cannot be inverted at the
/// optimum is reported as [`Error::SingularNormalMatrix`].
pub fn least_squares(problem: &FitProblem<'_>, options: &LmOptions) -> Result<FitResult> {
    problem.validate()?;
    let n = problem.params.len();
    let m = problem.data.len();
    let data_scale: f64 = problem.data.iter().zip(&problem.weights).map(|(d, w)| w * d * d).sum();
    let floor = f64::EPSILON * f64::EPSILON * data_scale.max(f64::MIN_POSITIVE);

    let mut state = problem.state_at(DVector::zeros(n))?;
    let mut history = vec![state.cost];
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        if state.cost <= floor {
            converged = true;
            break;
        }
        let jac = problem.jacobian(&state, options.fd_step)?;
        let normal = jac.transpose() * &jac;
        let jt_r = jac.transpose() * &state.residual;
        if scaled_gradient(&jt_r, &normal, state.cost) < options.gtol {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * normal.diagonal().max().max(f64::MIN_POSITIVE);

        loop {
            let mut damped = normal.clone();
            for j in 0..n {
                damped[(j, j)] += damping * normal[(j, j)].max(diag_floor);
            }
            // Gauss–Newton step on r + Jδ with Marquardt damping: (JᵀJ + λD) δ = −Jᵀr.
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&jt_r),
                None => {
                    damping *= 10.0;
                    if damping > 1e16 {
                        break 'outer;
                    }
                    continue;
                }
            };
            if step.amax() <= 1e-15 * (1.0 + state.u.amax()) {
                converged = true;
                break 'outer;
            }
            let trial = problem.state_at(&state.u + &step);
            match trial {
                Ok(trial) if trial.cost < state.cost => {
                    let relative = (state.cost - trial.cost) / state.cost;
                    state = trial;
                    history.push(state.cost);
                    damping = (damping / 10.0).max(1e-12);
                    if relative < options.ftol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    damping *= 10.0;
                    if damping > 1e16 {
                        // No descent left at working precision.
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    let jac = problem.jacobian(&state, options.fd_step)?;
    let normal = jac.transpose() * &jac;
    let jt_r = jac.transpose() * &state.residual;
    let gradient_norm = scaled_gradient(&jt_r, &normal, state.cost);

    let eig = normal.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > 0.0) || lo <= 1e-13 * hi {
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(Error::SingularNormalMatrix { condition });
    }
    let inv_vals = DVector::from_iterator(n, eig.eigenvalues.iter().map(|v| 1.0 / v));
    let internal_cov = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();

    let dof = (m - n) as f64;
    let reduced = state.cost / dof;
    let jac_diag = DVector::from_iterator(n, problem.params.iter().zip(&state.p).map(|(par, &p)| par.derivative(p)));
    let d = DMatrix::from_diagonal(&jac_diag);
    let mut covariance = &d * internal_cov * &d * reduced;
    // Symmetrize away rounding.
    covariance = (&covariance + covariance.transpose()) * 0.5;

    Ok(FitResult {
        names: problem.params.iter().map(|p| p.name.clone()).collect(),
        values: state.p,
        covariance,
        chi_square: state.cost,
        reduced_chi_square: reduced,
        n_iterations: iterations,
        converged,
        gradient_norm,
        cost_history: history,
        notes: Vec::new(),
    })
}
