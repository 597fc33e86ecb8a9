//! Steady-state refinement around an exponentially stable fixed point.
//!
//! `W_inf` solves the discrete Lyapunov equation `A W A^T - W + Gamma = 0`
//! and `V_inf = 1/2 (I - A)^{-1} (B . W_inf)`, where `A`, `B` are the drift
//! derivatives at the fixed point. Because the drift conserves mass, `A` has
//! the left eigenvector `1` with eigenvalue 1, so both equations are solved on
//! the mean-zero subspace `{x : sum x = 0}` where all iterates live.

use nalgebra::{DMatrix, DVector};

use crate::derivatives::{contract, hessian_at, jacobian_at, Hessian, Jacobian};
use crate::error::{Error, Result};
use crate::population::{check_dim, phi1, OccupancyVector, PopulationModel};
use crate::refined::{functional_correction, gamma, Functional, RefinementState};

/// Tangent spectral radius below `1 - STABILITY_MARGIN` counts as
/// exponentially stable.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Tangent spectral radius within this distance of 1 (and not stable) counts
/// as marginal.
pub const MARGINAL_BAND: f64 = 1e-6;
/// Stopping threshold on the update of the Lyapunov iteration.
pub const LYAPUNOV_TOL: f64 = 1e-13;
/// Maximum allowed disagreement between the iterative and direct Lyapunov solutions.
pub const LYAPUNOV_CROSS_CHECK_TOL: f64 = 1e-9;
const LYAPUNOV_MAX_ITER: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    ExponentiallyStable,
    MarginallyStable,
    NotAttracting,
}

impl Stability {
    pub fn from_spectral_radius(rho: f64) -> Self {
        if rho < 1.0 - STABILITY_MARGIN {
            Stability::ExponentiallyStable
        } else if rho <= 1.0 + MARGINAL_BAND {
            Stability::MarginallyStable
        } else {
            Stability::NotAttracting
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::ExponentiallyStable => "ExponentiallyStable",
            Stability::MarginallyStable => "MarginallyStable",
            Stability::NotAttracting => "NotAttracting",
        }
    }
}

/// How the fixed point was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointMethod {
    /// Plain iteration of `phi1`.
    Iteration,
    /// Averaged iteration `m <- (m + phi1(m)) / 2`, used when plain iteration
    /// stalls (e.g. a tangent eigenvalue at `-1`).
    Averaged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub mu_inf: OccupancyVector,
    pub iterations: usize,
    /// `|mu - phi1(mu)|_inf` at the reported point.
    pub residual: f64,
    pub spectral_radius_tangent: f64,
    pub classification: Stability,
    pub method: FixedPointMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

/// Orthonormal basis (as columns) of the mean-zero subspace of `R^n`.
pub fn tangent_basis(n: usize) -> DMatrix<f64> {
    // Helmert contrasts
    DMatrix::from_fn(n, n.saturating_sub(1), |i, k| {
        let k1 = (k + 1) as f64;
        let norm = (k1 * (k1 + 1.0)).sqrt();
        if i <= k {
            1.0 / norm
        } else if i == k + 1 {
            -k1 / norm
        } else {
            0.0
        }
    })
}

/// `Q^T A Q` for the tangent basis `Q`: the action of `A` on mean-zero vectors.
fn restrict(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    q.transpose() * a * q
}

/// Largest eigenvalue modulus of `a` restricted to the mean-zero subspace.
pub fn tangent_spectral_radius(a: &Jacobian) -> f64 {
    let n = a.nrows();
    if n < 2 {
        return 0.0;
    }
    let q = tangent_basis(n);
    let r = restrict(a, &q);
    r.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Locates an attractor of the mean-field map starting from `m0` and
/// classifies it from the Jacobian there.
pub fn find_fixed_point(model: &PopulationModel, m0: &OccupancyVector, options: FixedPointOptions) -> Result<FixedPointReport> {
    check_dim(model.dim(), m0.dim())?;
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", options.tol)));
    }
    let (mu, iterations, method) = match iterate(model, m0.clone(), options, false)? {
        Ok((mu, it)) => (mu, it, FixedPointMethod::Iteration),
        Err((last, it)) => match iterate(model, last, options, true)? {
            Ok((mu, it2)) => (mu, it + it2, FixedPointMethod::Averaged),
            Err((last, it2)) => {
                let next = phi1(model, &last)?;
                return Err(Error::MaxIterationsExceeded {
                    iterations: it + it2,
                    residual: (next.as_vector() - last.as_vector()).amax(),
                });
            }
        },
    };
    let residual = (phi1(model, &mu)?.as_vector() - mu.as_vector()).amax();
    let a = jacobian_at(model, &mu)?;
    let rho = tangent_spectral_radius(&a);
    Ok(FixedPointReport {
        mu_inf: mu,
        iterations,
        residual,
        spectral_radius_tangent: rho,
        classification: Stability::from_spectral_radius(rho),
        method,
    })
}

type IterOutcome = std::result::Result<(OccupancyVector, usize), (OccupancyVector, usize)>;

fn iterate(model: &PopulationModel, start: OccupancyVector, options: FixedPointOptions, averaged: bool) -> Result<IterOutcome> {
    let mut m = start;
    for it in 1..=options.max_iter {
        let image = phi1(model, &m)?;
        let next = if averaged {
            OccupancyVector::from_vector((m.as_vector() + image.as_vector()) * 0.5)?
        } else {
            image
        };
        let step = (next.as_vector() - m.as_vector()).amax();
        m = next;
        if step < options.tol {
            return Ok(Ok((m, it)));
        }
    }
    Ok(Err((m, options.max_iter)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LyapunovMethod {
    /// `W <- Gamma + A W A^T` from `W = 0`.
    #[default]
    Iterative,
    /// Direct solve of the vectorised equation on the mean-zero subspace.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LyapunovOptions {
    pub method: LyapunovMethod,
    /// Solve with the other method too and fail if the two disagree.
    pub cross_check: bool,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            method: LyapunovMethod::Iterative,
            cross_check: true,
        }
    }
}

/// Solves `A W A^T - W + Gamma = 0` for the unique `W` with `W 1 = 0`.
pub fn lyapunov_w(a: &Jacobian, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lyapunov_w_with(a, gamma, LyapunovOptions::default())
}

pub fn lyapunov_w_with(a: &Jacobian, gamma: &DMatrix<f64>, options: LyapunovOptions) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || gamma.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: gamma.len(),
        });
    }
    if (gamma - gamma.transpose()).amax() > 1e-12 || gamma.column_sum().amax() > 1e-9 {
        return Err(Error::InvalidArgument("Gamma must be symmetric with zero row sums".into()));
    }
    let rho = tangent_spectral_radius(a);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NonConvergent { spectral_radius: rho });
    }
    let solve = |method| match method {
        LyapunovMethod::Iterative => lyapunov_iterative(a, gamma, rho),
        LyapunovMethod::Direct => lyapunov_direct(a, gamma),
    };
    let w = solve(options.method)?;
    if options.cross_check {
        let other = match options.method {
            LyapunovMethod::Iterative => LyapunovMethod::Direct,
            LyapunovMethod::Direct => LyapunovMethod::Iterative,
        };
        let discrepancy = (&w - solve(other)?).amax();
        if discrepancy > LYAPUNOV_CROSS_CHECK_TOL {
            return Err(Error::LyapunovCrossCheck { discrepancy });
        }
    }
    Ok(w)
}

fn lyapunov_iterative(a: &DMatrix<f64>, gamma: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    let at = a.transpose();
    let mut w = DMatrix::zeros(a.nrows(), a.nrows());
    for _ in 0..LYAPUNOV_MAX_ITER {
        let next = gamma + a * &w * &at;
        let update = (&next - &w).amax();
        w = next;
        if update < LYAPUNOV_TOL {
            return Ok(w);
        }
    }
    Err(Error::NonConvergent { spectral_radius: rho })
}

fn lyapunov_direct(a: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n < 2 {
        return Ok(DMatrix::zeros(n, n));
    }
    let q = tangent_basis(n);
    let ar = restrict(a, &q);
    let g = q.transpose() * gamma * &q;
    let d = n - 1;
    // vec(Ar X Ar^T) = (Ar kron Ar) vec(X) for column-major vec
    let op = DMatrix::identity(d * d, d * d) - ar.kronecker(&ar);
    let rhs = DVector::from_column_slice(g.as_slice());
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("Lyapunov operator is singular on the tangent subspace".into()))?;
    let x = DMatrix::from_column_slice(d, d, x.as_slice());
    let w = &q * x * q.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

/// Unique mean-zero solution of `(I - A) V = 1/2 B . W`.
pub fn v_infinity(a: &Jacobian, b: &Hessian, w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if b.dims() != (n, n, n) {
        return Err(Error::DimensionMismatch {
            expected: n * n * n,
            found: b.dims().0 * b.dims().1 * b.dims().2,
        });
    }
    let rhs = 0.5 * contract(b, w)?;
    let sum = rhs.sum();
    if sum.abs() > 1e-8 {
        return Err(Error::InconsistentRhs { sum });
    }
    if n < 2 {
        return Ok(DVector::zeros(n));
    }
    let rho = tangent_spectral_radius(a);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NonConvergent { spectral_radius: rho });
    }
    let q = tangent_basis(n);
    let op = DMatrix::identity(n - 1, n - 1) - restrict(a, &q);
    let y = op
        .lu()
        .solve(&(q.transpose() * rhs))
        .ok_or_else(|| Error::SingularSystem("I - A is singular on the tangent subspace".into()))?;
    Ok(q * y)
}

/// `(mu_inf, V_inf, W_inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyRefinement {
    pub mu_inf: OccupancyVector,
    pub v_inf: DVector<f64>,
    pub w_inf: DMatrix<f64>,
}

impl SteadyRefinement {
    /// `mu_inf + V_inf / N`.
    pub fn refined_mean(&self, n_objects: u64) -> Result<DVector<f64>> {
        crate::refined::refined_mean(&self.as_state(), n_objects)
    }

    fn as_state(&self) -> RefinementState {
        RefinementState {
            t: 0,
            mu: self.mu_inf.clone(),
            v: self.v_inf.clone(),
            w: self.w_inf.clone(),
        }
    }
}

/// Fixed point, `W_inf` and `V_inf` for an exponentially stable attractor.
pub fn steady_refinement(model: &PopulationModel, m0: &OccupancyVector) -> Result<(FixedPointReport, SteadyRefinement)> {
    let report = find_fixed_point(model, m0, FixedPointOptions::default())?;
    let steady = steady_refinement_at(model, &report)?;
    Ok((report, steady))
}

pub fn steady_refinement_at(model: &PopulationModel, report: &FixedPointReport) -> Result<SteadyRefinement> {
    if report.classification != Stability::ExponentiallyStable {
        return Err(Error::NonConvergent {
            spectral_radius: report.spectral_radius_tangent,
        });
    }
    let mu = &report.mu_inf;
    let a = jacobian_at(model, mu)?;
    let b = hessian_at(model, mu)?;
    let g = gamma(model, mu)?;
    let w = lyapunov_w(&a, &g)?;
    let v = v_infinity(&a, &b, &w)?;
    Ok(SteadyRefinement {
        mu_inf: mu.clone(),
        v_inf: v,
        w_inf: w,
    })
}

/// `h(mu_inf) + (Dh V_inf + 1/2 D^2h . W_inf) / N`.
pub fn steady_functional(model: &PopulationModel, h: &Functional, steady: &SteadyRefinement, n_objects: u64) -> Result<DVector<f64>> {
    check_dim(model.dim(), h.arity())?;
    functional_correction(h, &steady.as_state(), n_objects)
}

/// `|A W A^T - W + Gamma|_inf`.
pub fn lyapunov_residual(a: &DMatrix<f64>, w: &DMatrix<f64>, gamma: &DMatrix<f64>) -> f64 {
    (a * w * a.transpose() - w + gamma).amax()
}
