//! Occupancy vectors, transition kernels and the mean-field drift map.
//!
//! A population of `N` synchronous objects, each in one of `n` local states,
//! is summarised by its occupancy vector `m` (the fraction of objects in each
//! state). At every step each object in state `i` jumps to state `j` with
//! probability `K(m)[i][j]`, independently of the others. The deterministic
//! mean-field map is `phi1(m) = m K(m)`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::derivatives::Tensor3;
use crate::error::{Error, Result};

/// Absolute tolerance used when validating simplex points and kernel rows.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point of the unit simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyVector(DVector<f64>);

impl OccupancyVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(entries))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::NotOnSimplex("empty vector".into()));
        }
        for (i, &x) in v.iter().enumerate() {
            if !x.is_finite() || x < -SIMPLEX_TOL || x > 1.0 + SIMPLEX_TOL {
                return Err(Error::NotOnSimplex(format!("entry {i} = {x} outside [0, 1]")));
            }
        }
        let sum = v.sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self(v))
    }

    /// Empirical occupancy of integer counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidCountState("counts sum to zero".into()));
        }
        Self::from_vector(DVector::from_iterator(
            counts.len(),
            counts.iter().map(|&c| c as f64 / total as f64),
        ))
    }

    /// Clamps negative entries to zero and rescales to unit mass.
    ///
    /// Never applied implicitly.
    pub fn renormalize(v: &DVector<f64>) -> Result<Self> {
        let clamped = v.map(|x| x.max(0.0));
        let sum = clamped.sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::NotOnSimplex(format!("cannot renormalize, mass {sum}")));
        }
        Self::from_vector(clamped / sum)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for OccupancyVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

pub type KernelFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
pub type HessianFn = dyn Fn(&DVector<f64>) -> Tensor3 + Send + Sync;

/// `m -> K(m)`, an `n x n` matrix whose rows are probability distributions.
///
/// The formula must be defined on a neighbourhood of the simplex with rows
/// summing to one identically in `m`, so that derivatives can be taken by
/// perturbing coordinates independently.
#[derive(Clone)]
pub struct TransitionKernel {
    dim: usize,
    eval: Arc<KernelFn>,
}

impl TransitionKernel {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self { dim, eval: Arc::new(eval) }
    }

    /// A kernel that does not depend on the occupancy.
    pub fn constant(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "constant kernel must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_stochastic(&matrix)?;
        Ok(Self::new(matrix.nrows(), move |_| matrix.clone()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw evaluation, valid off the simplex.
    pub fn eval(&self, m: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(m)
    }

    /// Evaluation at a simplex point with row-stochasticity enforced.
    pub fn eval_checked(&self, m: &OccupancyVector) -> Result<DMatrix<f64>> {
        check_dim(self.dim, m.dim())?;
        let k = self.eval(m);
        if k.nrows() != self.dim || k.ncols() != self.dim {
            return Err(Error::KernelNotStochastic(format!(
                "kernel returned a {}x{} matrix for dimension {}",
                k.nrows(),
                k.ncols(),
                self.dim
            )));
        }
        check_stochastic(&k)?;
        Ok(k)
    }
}

impl fmt::Debug for TransitionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransitionKernel").field("dim", &self.dim).finish()
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_stochastic(k: &DMatrix<f64>) -> Result<()> {
    for (i, row) in k.row_iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if !p.is_finite() || p < -SIMPLEX_TOL || p > 1.0 + SIMPLEX_TOL {
                return Err(Error::KernelNotStochastic(format!("K[{i}][{j}] = {p}")));
            }
        }
        let sum = row.sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::KernelNotStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// A population model: kernel, state labels and optional closed-form
/// derivatives of the drift map.
#[derive(Clone)]
pub struct PopulationModel {
    name: String,
    kernel: TransitionKernel,
    labels: Vec<String>,
    jacobian: Option<Arc<JacobianFn>>,
    hessian: Option<Arc<HessianFn>>,
}

impl PopulationModel {
    pub fn new<S: Into<String>>(name: S, labels: Vec<String>, kernel: TransitionKernel) -> Result<Self> {
        check_dim(kernel.dim(), labels.len())?;
        Ok(Self {
            name: name.into(),
            kernel,
            labels,
            jacobian: None,
            hessian: None,
        })
    }

    /// Attaches a closed-form Jacobian of the drift map, entry `(j, k) = d phi1_j / d m_k`.
    pub fn with_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(f));
        self
    }

    /// Attaches a closed-form Hessian, entry `(j, k, l) = d^2 phi1_j / d m_k d m_l`.
    pub fn with_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Tensor3 + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(f));
        self
    }

    /// Same model with derivatives always computed by finite differences.
    pub fn without_analytic_derivatives(&self) -> Self {
        Self {
            jacobian: None,
            hessian: None,
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn analytic_jacobian(&self) -> Option<&JacobianFn> {
        self.jacobian.as_deref()
    }

    pub fn analytic_hessian(&self) -> Option<&HessianFn> {
        self.hessian.as_deref()
    }

    /// `m K(m)` without validation; `m` may lie off the simplex.
    pub fn drift(&self, m: &DVector<f64>) -> DVector<f64> {
        self.kernel.eval(m).tr_mul(m)
    }
}

impl fmt::Debug for PopulationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PopulationModel")
            .field("name", &self.name)
            .field("labels", &self.labels)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

/// One step of the mean-field recursion, `(phi1(m))_j = sum_i m_i K_ij(m)`.
pub fn phi1(model: &PopulationModel, m: &OccupancyVector) -> Result<OccupancyVector> {
    let k = model.kernel().eval_checked(m)?;
    OccupancyVector::from_vector(k.tr_mul(m.as_vector()))
}

/// `[m0, phi1(m0), ..., phi_tmax(m0)]`.
pub fn trajectory(model: &PopulationModel, m0: &OccupancyVector, t_max: usize) -> Result<Vec<OccupancyVector>> {
    check_dim(model.dim(), m0.dim())?;
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(m0.clone());
    for t in 0..t_max {
        let next = phi1(model, &out[t])?;
        out.push(next);
    }
    Ok(out)
}
