use nalgebra::{DMatrix, DVector};

use super::{check_probability, labels};
use crate::derivatives::Tensor3;
use crate::error::{Error, Result};
use crate::population::{PopulationModel, TransitionKernel};
use crate::refined::Functional;

/// Below this magnitude the response-time denominator `lambda * m_e` is
/// treated as singular.
pub const RESPONSE_TIME_MIN_DENOMINATOR: f64 = 1e-12;

/// Wireless sensor network: gateways in states `a` (available) and `b`
/// (busy), sensors in `c` (communicating), `d` (delayed) and `e` (idle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsnParams {
    /// Gateway becomes available again.
    pub alpha: f64,
    /// Communication between a gateway and a sensor.
    pub beta: f64,
    /// Sensor becomes ready to send.
    pub lambda: f64,
    /// Sensor times out.
    pub gamma: f64,
    /// Delayed sensor retries.
    pub eta: f64,
    /// Cap applied per run to the simulated response time.
    pub clamp: f64,
}

impl Default for WsnParams {
    fn default() -> Self {
        Self {
            alpha: 0.09,
            beta: 0.9,
            lambda: 0.09,
            gamma: 0.01,
            eta: 0.01,
            clamp: 100.0,
        }
    }
}

impl WsnParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha", self.alpha)?;
        check_probability("beta", self.beta)?;
        check_probability("lambda", self.lambda)?;
        check_probability("gamma", self.gamma)?;
        check_probability("eta", self.eta)?;
        if self.beta + self.gamma > 1.0 {
            return Err(Error::InvalidParameter {
                name: "beta + gamma".into(),
                reason: format!("{} exceeds 1, so 1 - gamma - beta m_a can be negative", self.beta + self.gamma),
            });
        }
        if !(self.clamp > 0.0) {
            return Err(Error::InvalidParameter {
                name: "clamp".into(),
                reason: format!("{} is not positive", self.clamp),
            });
        }
        Ok(())
    }
}

pub fn wsn(params: &WsnParams) -> Result<PopulationModel> {
    params.validate()?;
    let WsnParams { alpha, beta, lambda, gamma, eta, .. } = *params;

    let kernel = TransitionKernel::new(5, move |m: &DVector<f64>| {
        let (ma, mc) = (m[0], m[2]);
        DMatrix::from_row_slice(
            5,
            5,
            &[
                1.0 - beta * mc, beta * mc, 0.0, 0.0, 0.0,
                alpha, 1.0 - alpha, 0.0, 0.0, 0.0,
                0.0, 0.0, 1.0 - gamma - beta * ma, gamma, beta * ma,
                0.0, 0.0, eta, 1.0 - eta, 0.0,
                0.0, 0.0, lambda, 0.0, 1.0 - lambda,
            ],
        )
    });

    let jacobian = move |m: &DVector<f64>| {
        let (ma, mc) = (m[0], m[2]);
        DMatrix::from_row_slice(
            5,
            5,
            &[
                1.0 - beta * mc, alpha, -beta * ma, 0.0, 0.0,
                beta * mc, 1.0 - alpha, beta * ma, 0.0, 0.0,
                -beta * mc, 0.0, 1.0 - gamma - beta * ma, eta, lambda,
                0.0, 0.0, gamma, 1.0 - eta, 0.0,
                beta * mc, 0.0, beta * ma, 0.0, 1.0 - lambda,
            ],
        )
    };

    let hessian = move |_: &DVector<f64>| {
        let mut b = Tensor3::zeros(5, 5, 5);
        for (j, sign) in [(0, -1.0), (2, -1.0), (1, 1.0), (4, 1.0)] {
            b[(j, 0, 2)] = sign * beta;
            b[(j, 2, 0)] = sign * beta;
        }
        b
    };

    Ok(PopulationModel::new("wsn", labels(&["a", "b", "c", "d", "e"]), kernel)?
        .with_jacobian(jacobian)
        .with_hessian(hessian))
}

/// Expected sensor response time `h(x) = (x_c + x_d) / (lambda x_e)`.
///
/// Evaluation fails when `|lambda x_e| < 1e-12`.
pub fn response_time_functional(params: &WsnParams) -> Functional {
    let lambda = params.lambda;
    let denominator = move |m: &DVector<f64>| {
        let d = lambda * m[4];
        if d.abs() < RESPONSE_TIME_MIN_DENOMINATOR {
            Err(format!("response time undefined: lambda * m_e = {d:e}"))
        } else {
            Ok(d)
        }
    };
    Functional::new("response-time", 5, 1, move |m: &DVector<f64>| {
        let d = denominator(m)?;
        Ok(DVector::from_element(1, (m[2] + m[3]) / d))
    })
    .with_gradient(move |m: &DVector<f64>| {
        let d = denominator(m)?;
        let e = m[4];
        Ok(DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 1.0 / d, 1.0 / d, -(m[2] + m[3]) / (d * e)]))
    })
    .with_hessian(move |m: &DVector<f64>| {
        let d = denominator(m)?;
        let e = m[4];
        let cross = -1.0 / (d * e);
        let mut h = Tensor3::zeros(1, 5, 5);
        for k in [2, 3] {
            h[(0, k, 4)] = cross;
            h[(0, 4, k)] = cross;
        }
        h[(0, 4, 4)] = 2.0 * (m[2] + m[3]) / (d * e * e);
        Ok(h)
    })
}
