use nalgebra::{DMatrix, DVector};

use crate::derivatives::Tensor3;
use crate::error::Result;
use crate::population::{PopulationModel, TransitionKernel};

/// A model whose kernel does not depend on the occupancy; `phi1` is linear.
pub fn constant(matrix: DMatrix<f64>) -> Result<PopulationModel> {
    let n = matrix.nrows();
    let transposed = matrix.transpose();
    let kernel = TransitionKernel::constant(matrix)?;
    let labels = (0..n).map(|i| format!("s{i}")).collect();
    Ok(PopulationModel::new("constant", labels, kernel)?
        .with_jacobian(move |_: &DVector<f64>| transposed.clone())
        .with_hessian(move |_: &DVector<f64>| Tensor3::zeros(n, n, n)))
}
