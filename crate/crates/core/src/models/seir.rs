use nalgebra::{DMatrix, DVector};

use super::{check_probability, labels};
use crate::derivatives::Tensor3;
use crate::error::{Error, Result};
use crate::population::{PopulationModel, TransitionKernel};

/// Computer-epidemic SEIR model with external and internal infection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeirParams {
    /// External infection probability.
    pub alpha_e: f64,
    /// Internal infection probability, scaled by the infected fraction.
    pub alpha_i: f64,
    /// Activation probability E -> I.
    pub alpha_a: f64,
    /// Recovery probability I -> R.
    pub alpha_r: f64,
    /// Loss of protection R -> S.
    pub alpha_l: f64,
}

impl Default for SeirParams {
    fn default() -> Self {
        Self {
            alpha_e: 0.01,
            alpha_i: 0.08,
            alpha_a: 0.04,
            alpha_r: 0.02,
            alpha_l: 0.01,
        }
    }
}

impl SeirParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha_e", self.alpha_e)?;
        check_probability("alpha_i", self.alpha_i)?;
        check_probability("alpha_a", self.alpha_a)?;
        check_probability("alpha_r", self.alpha_r)?;
        check_probability("alpha_l", self.alpha_l)?;
        if self.alpha_e + self.alpha_i > 1.0 {
            return Err(Error::InvalidParameter {
                name: "alpha_e + alpha_i".into(),
                reason: format!("{} exceeds 1", self.alpha_e + self.alpha_i),
            });
        }
        Ok(())
    }
}

pub fn seir(params: &SeirParams) -> Result<PopulationModel> {
    params.validate()?;
    let SeirParams { alpha_e, alpha_i, alpha_a, alpha_r, alpha_l } = *params;

    let kernel = TransitionKernel::new(4, move |m: &DVector<f64>| {
        let infect = alpha_e + alpha_i * m[2];
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0 - infect, infect, 0.0, 0.0,
                0.0, 1.0 - alpha_a, alpha_a, 0.0,
                0.0, 0.0, 1.0 - alpha_r, alpha_r,
                alpha_l, 0.0, 0.0, 1.0 - alpha_l,
            ],
        )
    });

    let jacobian = move |m: &DVector<f64>| {
        let (s, i) = (m[0], m[2]);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0 - (alpha_e + alpha_i * i), 0.0, -alpha_i * s, alpha_l,
                alpha_e + alpha_i * i, 1.0 - alpha_a, alpha_i * s, 0.0,
                0.0, alpha_a, 1.0 - alpha_r, 0.0,
                0.0, 0.0, alpha_r, 1.0 - alpha_l,
            ],
        )
    };

    let hessian = move |_: &DVector<f64>| {
        let mut b = Tensor3::zeros(4, 4, 4);
        b[(0, 0, 2)] = -alpha_i;
        b[(0, 2, 0)] = -alpha_i;
        b[(1, 0, 2)] = alpha_i;
        b[(1, 2, 0)] = alpha_i;
        b
    };

    Ok(PopulationModel::new("seir", labels(&["S", "E", "I", "R"]), kernel)?
        .with_jacobian(jacobian)
        .with_hessian(hessian))
}
