//! First and second derivatives of the drift map, and the tensor-matrix
//! contraction `(P . Q)_i = sum_{j,k} P_ijk Q_jk`.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::population::{check_dim, OccupancyVector, PopulationModel};

/// Central-difference step for Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-5;
/// Central-difference step for Hessians.
pub const HESSIAN_STEP: f64 = 1e-4;

/// `n x n` Jacobian, entry `(j, k) = d phi1_j / d m_k`.
pub type Jacobian = DMatrix<f64>;
/// `n x n x n` Hessian, entry `(j, k, l) = d^2 phi1_j / d m_k d m_l`.
pub type Hessian = Tensor3;

/// Dense rank-3 tensor stored as `dims.0` row-major matrices of shape
/// `dims.1 x dims.2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Self {
            dims: (d0, d1, d2),
            data: vec![0.0; d0 * d1 * d2],
        }
    }

    /// Builds from one matrix per leading index; all slices must share a shape.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let (d1, d2) = slices.first().map_or((0, 0), |s| s.shape());
        let mut t = Self::zeros(slices.len(), d1, d2);
        for (i, s) in slices.iter().enumerate() {
            if s.shape() != (d1, d2) {
                return Err(Error::InvalidArgument(format!(
                    "slice {i} has shape {:?}, expected {:?}",
                    s.shape(),
                    (d1, d2)
                )));
            }
            for k in 0..d1 {
                for l in 0..d2 {
                    t[(i, k, l)] = s[(k, l)];
                }
            }
        }
        Ok(t)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        let (_, d1, d2) = self.dims;
        DMatrix::from_row_slice(d1, d2, &self.data[i * d1 * d2..(i + 1) * d1 * d2])
    }

    /// Sum over the leading index.
    pub fn leading_sum(&self) -> DMatrix<f64> {
        let (d0, d1, d2) = self.dims;
        DMatrix::from_fn(d1, d2, |k, l| (0..d0).map(|i| self[(i, k, l)]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    fn offset(&self, (i, j, k): (usize, usize, usize)) -> usize {
        let (d0, d1, d2) = self.dims;
        assert!(i < d0 && j < d1 && k < d2, "index {:?} out of bounds {:?}", (i, j, k), self.dims);
        (i * d1 + j) * d2 + k
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    fn index(&self, idx: (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(idx)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, idx: (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(idx);
        &mut self.data[o]
    }
}

/// `(P . Q)_i = sum_{j,k} P_ijk Q_jk`.
pub fn contract(tensor: &Tensor3, matrix: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (d0, d1, d2) = tensor.dims();
    if matrix.shape() != (d1, d2) {
        return Err(Error::DimensionMismatch {
            expected: d1 * d2,
            found: matrix.nrows() * matrix.ncols(),
        });
    }
    Ok(DVector::from_fn(d0, |i, _| {
        let mut acc = 0.0;
        for j in 0..d1 {
            for k in 0..d2 {
                acc += tensor[(i, j, k)] * matrix[(j, k)];
            }
        }
        acc
    }))
}

/// Central-difference Jacobian of an arbitrary map `R^n -> R^p`.
pub fn fd_jacobian<F>(f: F, m: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = m.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut plus = m.clone();
        let mut minus = m.clone();
        plus[k] += step;
        minus[k] -= step;
        cols.push((f(&plus) - f(&minus)) / (2.0 * step));
    }
    DMatrix::from_columns(&cols)
}

/// Second-order central-difference Hessian of a map `R^n -> R^p`, as a
/// `p x n x n` tensor.
pub fn fd_hessian<F>(f: F, m: &DVector<f64>, step: f64) -> Tensor3
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = m.len();
    let shifted = |dk: (usize, f64), dl: (usize, f64)| {
        let mut x = m.clone();
        x[dk.0] += dk.1;
        x[dl.0] += dl.1;
        f(&x)
    };
    let centre = f(m);
    let p = centre.len();
    let mut t = Tensor3::zeros(p, n, n);
    let h2 = step * step;
    for k in 0..n {
        let diag = (shifted((k, step), (k, 0.0)) - 2.0 * &centre + shifted((k, -step), (k, 0.0))) / h2;
        for i in 0..p {
            t[(i, k, k)] = diag[i];
        }
        for l in (k + 1)..n {
            let mixed = (shifted((k, step), (l, step)) - shifted((k, step), (l, -step)) - shifted((k, -step), (l, step))
                + shifted((k, -step), (l, -step)))
                / (4.0 * h2);
            for i in 0..p {
                t[(i, k, l)] = mixed[i];
                t[(i, l, k)] = mixed[i];
            }
        }
    }
    t
}

/// `D phi1` at `m`: closed form if the model has one, central differences otherwise.
pub fn jacobian_phi1(model: &PopulationModel, m: &OccupancyVector) -> Result<Jacobian> {
    jacobian_at(model, m.as_vector())
}

/// `D^2 phi1` at `m`: closed form if the model has one, central differences otherwise.
pub fn hessian_phi1(model: &PopulationModel, m: &OccupancyVector) -> Result<Hessian> {
    hessian_at(model, m.as_vector())
}

pub(crate) fn jacobian_at(model: &PopulationModel, m: &DVector<f64>) -> Result<Jacobian> {
    let n = model.dim();
    check_dim(n, m.len())?;
    let a = match model.analytic_jacobian() {
        Some(f) => f(m),
        None => fd_jacobian(|x| model.drift(x), m, JACOBIAN_STEP),
    };
    if a.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n * n, found: a.len() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::KernelNotStochastic("non-finite Jacobian entry".into()));
    }
    Ok(a)
}

pub(crate) fn hessian_at(model: &PopulationModel, m: &DVector<f64>) -> Result<Hessian> {
    let n = model.dim();
    check_dim(n, m.len())?;
    let b = match model.analytic_hessian() {
        Some(f) => f(m),
        None => fd_hessian(|x| model.drift(x), m, HESSIAN_STEP),
    };
    if b.dims() != (n, n, n) {
        let (d0, d1, d2) = b.dims();
        return Err(Error::DimensionMismatch { expected: n * n * n, found: d0 * d1 * d2 });
    }
    if b.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::KernelNotStochastic("non-finite Hessian entry".into()));
    }
    Ok(b)
}
