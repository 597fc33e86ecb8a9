use nalgebra::{DMatrix, DVector};

use super::labels;
use crate::derivatives::Tensor3;
use crate::error::{Error, Result};
use crate::population::{PopulationModel, TransitionKernel};

/// Two-state model: `0 -> 1` with probability `alpha * m_0`, `1 -> 0` surely.
///
/// The unique fixed point has first component `(sqrt(1 + 4 alpha) - 1) / (2 alpha)`
/// and is exponentially stable iff `alpha < 0.75`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateParams {
    pub alpha: f64,
}

impl Default for TwoStateParams {
    fn default() -> Self {
        Self { alpha: 0.6 }
    }
}

impl TwoStateParams {
    pub fn fixed_point(&self) -> f64 {
        ((1.0 + 4.0 * self.alpha).sqrt() - 1.0) / (2.0 * self.alpha)
    }
}

pub fn two_state(params: &TwoStateParams) -> Result<PopulationModel> {
    let alpha = params.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha".into(),
            reason: format!("{alpha} is not in (0, 1)"),
        });
    }
    let kernel = TransitionKernel::new(2, move |m: &DVector<f64>| {
        let p = alpha * m[0];
        DMatrix::from_row_slice(2, 2, &[1.0 - p, p, 1.0, 0.0])
    });
    // phi_0 = m_0 - alpha m_0^2 + m_1, phi_1 = alpha m_0^2
    let jacobian = move |m: &DVector<f64>| {
        let d = 2.0 * alpha * m[0];
        DMatrix::from_row_slice(2, 2, &[1.0 - d, 1.0, d, 0.0])
    };
    let hessian = move |_: &DVector<f64>| {
        let mut b = Tensor3::zeros(2, 2, 2);
        b[(0, 0, 0)] = -2.0 * alpha;
        b[(1, 0, 0)] = 2.0 * alpha;
        b
    };
    Ok(PopulationModel::new("two-state", labels(&["0", "1"]), kernel)?
        .with_jacobian(jacobian)
        .with_hessian(hessian))
}
