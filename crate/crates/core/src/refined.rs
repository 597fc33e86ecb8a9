//! The `1/N` refinement of the mean-field approximation.
//!
//! Along the mean-field trajectory `mu(t)`, with `A_t` and `B_t` the Jacobian
//! and Hessian of the drift at `mu(t)`:
//!
//! ```text
//! V_{t+1} = A_t V_t + 1/2 B_t . W_t
//! W_{t+1} = Gamma(mu(t)) + A_t W_t A_t^T,        V_0 = 0, W_0 = 0
//! ```
//!
//! so that `E[M(t)] = mu(t) + V_t / N + o(1/N)` and
//! `Cov(M(t)) = W_t / N + o(1/N)`. For a smooth functional `h`,
//! `E[h(M(t))] ~ h(mu(t)) + (Dh V_t + 1/2 D^2h . W_t) / N`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::derivatives::{contract, fd_hessian, fd_jacobian, hessian_at, jacobian_at, Tensor3, HESSIAN_STEP, JACOBIAN_STEP};
use crate::error::{Error, Result};
use crate::population::{check_dim, phi1, OccupancyVector, PopulationModel};

/// Outcome of evaluating a functional or one of its derivatives; the error
/// string describes why the point is outside the functional's domain.
pub type FunctionalResult<T> = std::result::Result<T, String>;

type EvalFn = dyn Fn(&DVector<f64>) -> FunctionalResult<DVector<f64>> + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>) -> FunctionalResult<DMatrix<f64>> + Send + Sync;
type FnHessianFn = dyn Fn(&DVector<f64>) -> FunctionalResult<Tensor3> + Send + Sync;

/// A reward `h: R^n -> R^p` with optional closed-form derivatives.
#[derive(Clone)]
pub struct Functional {
    name: String,
    arity: usize,
    outputs: usize,
    eval: Arc<EvalFn>,
    gradient: Option<Arc<GradientFn>>,
    hessian: Option<Arc<FnHessianFn>>,
}

impl Functional {
    pub fn new<F>(name: &str, arity: usize, outputs: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> FunctionalResult<DVector<f64>> + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            arity,
            outputs,
            eval: Arc::new(eval),
            gradient: None,
            hessian: None,
        }
    }

    /// `p x n` gradient, row `i` is `D h_i`.
    pub fn with_gradient<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> FunctionalResult<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(f));
        self
    }

    /// `p x n x n` Hessian.
    pub fn with_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> FunctionalResult<Tensor3> + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(f));
        self
    }

    pub fn without_analytic_derivatives(&self) -> Self {
        Self {
            gradient: None,
            hessian: None,
            ..self.clone()
        }
    }

    /// `h(x) = x`.
    pub fn identity(n: usize) -> Self {
        Self::new("identity", n, n, |m| Ok(m.clone()))
            .with_gradient(move |_| Ok(DMatrix::identity(n, n)))
            .with_hessian(move |_| Ok(Tensor3::zeros(n, n, n)))
    }

    /// `h(x) = x_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        Self::new("coordinate", n, 1, move |m| Ok(DVector::from_element(1, m[i])))
            .with_gradient(move |_| Ok(DMatrix::from_fn(1, n, |_, k| if k == i { 1.0 } else { 0.0 })))
            .with_hessian(move |_| Ok(Tensor3::zeros(1, n, n)))
    }

    /// `h(x) = sum_i x_i`.
    pub fn total_mass(n: usize) -> Self {
        Self::new("total-mass", n, 1, |m| Ok(DVector::from_element(1, m.sum())))
            .with_gradient(move |_| Ok(DMatrix::from_element(1, n, 1.0)))
            .with_hessian(move |_| Ok(Tensor3::zeros(1, n, n)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// `h(x)`; fails on domain errors and non-finite values.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.arity, x.len())?;
        let v = (self.eval)(x).map_err(|reason| Error::FunctionalEvaluation { t: None, reason })?;
        check_dim(self.outputs, v.len())?;
        finite(v.iter(), "value")?;
        Ok(v)
    }

    /// Raw evaluation without the finiteness check, used by the simulator.
    pub(crate) fn eval_raw(&self, x: &DVector<f64>) -> FunctionalResult<DVector<f64>> {
        (self.eval)(x)
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.arity, x.len())?;
        let g = match &self.gradient {
            Some(f) => f(x).map_err(|reason| Error::FunctionalEvaluation { t: None, reason })?,
            None => fd_jacobian(|y| self.eval_or_nan(y), x, JACOBIAN_STEP),
        };
        if g.shape() != (self.outputs, self.arity) {
            return Err(Error::DimensionMismatch {
                expected: self.outputs * self.arity,
                found: g.len(),
            });
        }
        finite(g.iter(), "gradient")?;
        Ok(g)
    }

    pub fn hessian_at(&self, x: &DVector<f64>) -> Result<Tensor3> {
        check_dim(self.arity, x.len())?;
        let h = match &self.hessian {
            Some(f) => f(x).map_err(|reason| Error::FunctionalEvaluation { t: None, reason })?,
            None => fd_hessian(|y| self.eval_or_nan(y), x, HESSIAN_STEP),
        };
        if h.dims() != (self.outputs, self.arity, self.arity) {
            return Err(Error::InvalidArgument(format!(
                "functional Hessian has dims {:?}, expected {:?}",
                h.dims(),
                (self.outputs, self.arity, self.arity)
            )));
        }
        for i in 0..self.outputs {
            finite(h.slice(i).iter(), "hessian")?;
        }
        Ok(h)
    }

    // Domain errors inside a finite-difference stencil surface as NaN and
    // are rejected by the finiteness check.
    fn eval_or_nan(&self, y: &DVector<f64>) -> DVector<f64> {
        (self.eval)(y).unwrap_or_else(|_| DVector::from_element(self.outputs, f64::NAN))
    }
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("outputs", &self.outputs)
            .finish()
    }
}

fn finite<'a>(mut xs: impl Iterator<Item = &'a f64>, what: &str) -> Result<()> {
    if xs.any(|x| !x.is_finite()) {
        return Err(Error::FunctionalEvaluation {
            t: None,
            reason: format!("non-finite {what}"),
        });
    }
    Ok(())
}

/// Noise matrix: `N` times the covariance of the one-step increment of the
/// occupancy from `m`.
///
/// `Gamma_jj = sum_i m_i K_ij (1 - K_ij)` and `Gamma_jk = -sum_i m_i K_ij K_ik`.
pub fn gamma(model: &PopulationModel, m: &OccupancyVector) -> Result<DMatrix<f64>> {
    let k = model.kernel().eval_checked(m)?;
    let n = model.dim();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        let mi = m[i];
        if mi == 0.0 {
            continue;
        }
        for j in 0..n {
            let kij = k[(i, j)];
            g[(j, j)] += mi * kij * (1.0 - kij);
            for l in (j + 1)..n {
                let c = mi * kij * k[(i, l)];
                g[(j, l)] -= c;
                g[(l, j)] -= c;
            }
        }
    }
    Ok(g)
}

/// `(t, mu(t), V_t, W_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementState {
    pub t: usize,
    pub mu: OccupancyVector,
    pub v: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl RefinementState {
    /// Starting point with `V = 0` and `W = 0`.
    pub fn initial(m0: OccupancyVector) -> Self {
        let n = m0.dim();
        Self {
            t: 0,
            mu: m0,
            v: DVector::zeros(n),
            w: DMatrix::zeros(n, n),
        }
    }
}

/// Runs the `(mu, V, W)` recursion from `m0` with `V_0 = W_0 = 0`.
pub fn refine(model: &PopulationModel, m0: &OccupancyVector, t_max: usize) -> Result<Vec<RefinementState>> {
    refine_from(model, RefinementState::initial(m0.clone()), t_max)
}

/// Runs the recursion from an arbitrary starting state.
///
/// A nonzero initial `v`/`w` is accepted as-is; the theory behind the
/// expansion assumes a deterministic start, so interpreting such states is
/// left to the caller.
pub fn refine_from(model: &PopulationModel, start: RefinementState, t_max: usize) -> Result<Vec<RefinementState>> {
    let n = model.dim();
    check_dim(n, start.mu.dim())?;
    check_dim(n, start.v.len())?;
    if start.w.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n * n, found: start.w.len() });
    }
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(start);
    for _ in 0..t_max {
        let cur = out.last().expect("non-empty");
        let next = step(model, cur)?;
        out.push(next);
    }
    Ok(out)
}

fn step(model: &PopulationModel, cur: &RefinementState) -> Result<RefinementState> {
    let a = jacobian_at(model, &cur.mu)?;
    let b = hessian_at(model, &cur.mu)?;
    let g = gamma(model, &cur.mu)?;
    let v = &a * &cur.v + 0.5 * contract(&b, &cur.w)?;
    let w = g + &a * &cur.w * a.transpose();
    Ok(RefinementState {
        t: cur.t + 1,
        mu: phi1(model, &cur.mu)?,
        v,
        w,
    })
}

/// `mu(t) + V_t / N`.
pub fn refined_mean(state: &RefinementState, n_objects: u64) -> Result<DVector<f64>> {
    if n_objects == 0 {
        return Err(Error::InvalidArgument("population size must be positive".into()));
    }
    Ok(state.mu.as_vector() + &state.v / n_objects as f64)
}

/// `W_t / N`.
pub fn refined_covariance(state: &RefinementState, n_objects: u64) -> Result<DMatrix<f64>> {
    if n_objects == 0 {
        return Err(Error::InvalidArgument("population size must be positive".into()));
    }
    Ok(&state.w / n_objects as f64)
}

/// `h(mu) + (Dh(mu) V + 1/2 D^2h(mu) . W) / N` for one state.
pub fn functional_correction(h: &Functional, state: &RefinementState, n_objects: u64) -> Result<DVector<f64>> {
    if n_objects == 0 {
        return Err(Error::InvalidArgument("population size must be positive".into()));
    }
    check_dim(h.arity(), state.mu.dim())?;
    let at_t = |e: Error| match e {
        Error::FunctionalEvaluation { reason, .. } => Error::FunctionalEvaluation { t: Some(state.t), reason },
        other => other,
    };
    let value = h.eval(&state.mu).map_err(at_t)?;
    let grad = h.gradient_at(&state.mu).map_err(at_t)?;
    let hess = h.hessian_at(&state.mu).map_err(at_t)?;
    let correction = grad * &state.v + 0.5 * contract(&hess, &state.w)?;
    Ok(value + correction / n_objects as f64)
}

/// Refined approximation of `E[h(M(t))]` for `t = 0..=t_max`.
pub fn refine_functional(
    model: &PopulationModel,
    h: &Functional,
    m0: &OccupancyVector,
    t_max: usize,
    n_objects: u64,
) -> Result<Vec<DVector<f64>>> {
    check_dim(model.dim(), h.arity())?;
    refine(model, m0, t_max)?
        .iter()
        .map(|s| functional_correction(h, s, n_objects))
        .collect()
}
