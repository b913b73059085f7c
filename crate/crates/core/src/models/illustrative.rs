use std::sync::Arc;

use crate::error::Result;
use crate::linalg::Vector;
use crate::problem::{Linearization, Problem, Regularization, ScaledIdentity};

/// `J(m, theta) = (m - theta)^6 + 0.01 m^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Illustrative1D;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarDerivatives {
    pub j: f64,
    pub djdm: f64,
    pub d2jdm2: f64,
    pub d2jdmdtheta: f64,
}

pub fn illustrative_derivatives(m: f64, theta: f64) -> ScalarDerivatives {
    let d = m - theta;
    let d4 = d.powi(4);
    ScalarDerivatives {
        j: d.powi(6) + 0.01 * m * m,
        djdm: 6.0 * d.powi(5) + 0.02 * m,
        d2jdm2: 30.0 * d4 + 0.02,
        d2jdmdtheta: -30.0 * d4,
    }
}

struct ScalarLin {
    d: ScalarDerivatives,
    g: Vector,
}

impl Linearization for ScalarLin {
    fn objective(&self) -> f64 {
        self.d.j
    }
    fn gradient(&self) -> &Vector {
        &self.g
    }
    fn mixed_apply(&self, dtheta: &Vector) -> Result<Vector> {
        dtheta.check_dim(1)?;
        Ok(Vector::from_raw(vec![self.d.d2jdmdtheta * dtheta[0]]))
    }
    fn hess_apply(&self, p: &Vector) -> Result<Vector> {
        p.check_dim(1)?;
        Ok(Vector::from_raw(vec![self.d.d2jdm2 * p[0]]))
    }
    fn misfit_hess_apply(&self, p: &Vector) -> Result<Vector> {
        p.check_dim(1)?;
        Ok(Vector::from_raw(vec![(self.d.d2jdm2 - 0.02) * p[0]]))
    }
}

impl Problem for Illustrative1D {
    fn dim(&self) -> usize {
        1
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn linearize(&self, m: &Vector, theta: &Vector) -> Result<Box<dyn Linearization + '_>> {
        m.check_dim(1)?;
        theta.check_dim(1)?;
        let d = illustrative_derivatives(m[0], theta[0]);
        Ok(Box::new(ScalarLin {
            d,
            g: Vector::new(vec![d.djdm])?,
        }))
    }
    fn regularization(&self) -> Arc<dyn Regularization> {
        Arc::new(ScaledIdentity { dim: 1, scale: 0.02 })
    }
}
