use nalgebra::{DMatrix, DVector};

use super::labels;
use crate::derivatives::Tensor3;
use crate::error::{Error, Result};
use crate::population::{PopulationModel, TransitionKernel};
use crate::refined::Functional;

/// Discrete-time majority rule with differential latency. States are
/// latent/non-latent with opinion A or B, ordered `LA, NA, LB, NB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrdlParams {
    /// Discretisation factor; latent agents activate with probability `1/q`.
    pub q: f64,
    /// Relative activation rate of opinion B, in `(0, 1]`.
    pub lambda: f64,
}

impl Default for MrdlParams {
    fn default() -> Self {
        Self { q: 10.0, lambda: 1.0 }
    }
}

impl MrdlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 3.0) {
            return Err(Error::InvalidParameter {
                name: "q".into(),
                reason: format!("{} is below 3, so 3/q exceeds 1", self.q),
            });
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lambda".into(),
                reason: format!("{} is not in (0, 1]", self.lambda),
            });
        }
        Ok(())
    }
}

pub fn mrdl(params: &MrdlParams) -> Result<PopulationModel> {
    params.validate()?;
    let MrdlParams { q, lambda } = *params;
    let r = 3.0 / q;

    let kernel = TransitionKernel::new(4, move |m: &DVector<f64>| {
        let (na, nb) = (m[1], m[3]);
        let team = na * na + na * nb + nb * nb;
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0 - 1.0 / q, 1.0 / q, 0.0, 0.0,
                r * (na * na + na * nb), 1.0 - r * team, r * nb * nb, 0.0,
                0.0, 0.0, 1.0 - lambda / q, lambda / q,
                r * na * na, 0.0, r * (nb * nb + na * nb), 1.0 - r * team,
            ],
        )
    });

    let jacobian = move |m: &DVector<f64>| {
        let (na, nb) = (m[1], m[3]);
        let jna = 1.0 - (9.0 * na * na + 6.0 * na * nb + 3.0 * nb * nb) / q;
        let jnb = 1.0 - (3.0 * na * na + 9.0 * nb * nb + 6.0 * na * nb) / q;
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0 - 1.0 / q, (9.0 * na * na + 12.0 * na * nb) / q, 0.0, 6.0 * na * na / q,
                1.0 / q, jna, 0.0, -(3.0 * na * na + 6.0 * na * nb) / q,
                0.0, 6.0 * nb * nb / q, 1.0 - lambda / q, (12.0 * nb * na + 9.0 * nb * nb) / q,
                0.0, -(3.0 * nb * nb + 6.0 * na * nb) / q, lambda / q, jnb,
            ],
        )
    };

    let hessian = move |m: &DVector<f64>| {
        let (na, nb) = (m[1], m[3]);
        let mut b = Tensor3::zeros(4, 4, 4);
        let mut set = |j: usize, nana: f64, nanb: f64, nbnb: f64| {
            b[(j, 1, 1)] = nana / q;
            b[(j, 1, 3)] = nanb / q;
            b[(j, 3, 1)] = nanb / q;
            b[(j, 3, 3)] = nbnb / q;
        };
        set(0, 18.0 * na + 12.0 * nb, 12.0 * na, 0.0);
        set(1, -18.0 * na - 6.0 * nb, -6.0 * na - 6.0 * nb, -6.0 * na);
        set(2, 0.0, 12.0 * nb, 18.0 * nb + 12.0 * na);
        set(3, -6.0 * nb, -6.0 * na - 6.0 * nb, -18.0 * nb - 6.0 * na);
        b
    };

    Ok(PopulationModel::new("mrdl", labels(&["LA", "NA", "LB", "NB"]), kernel)?
        .with_jacobian(jacobian)
        .with_hessian(hessian))
}

/// Fraction of the population holding opinion A, `x_LA + x_NA`.
pub fn consensus_functional() -> Functional {
    Functional::new("consensus", 4, 1, |m: &DVector<f64>| Ok(DVector::from_element(1, m[0] + m[1])))
        .with_gradient(|_: &DVector<f64>| Ok(DMatrix::from_row_slice(1, 4, &[1.0, 1.0, 0.0, 0.0])))
        .with_hessian(|_: &DVector<f64>| Ok(Tensor3::zeros(1, 4, 4)))
}
