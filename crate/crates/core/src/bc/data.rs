use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::gram::{gram_matrix, Gram};
use crate::error::{Error, Result};
use crate::geometry::BoundaryGeometry;
use crate::wave::{BasisElement, ResponseOperator, TimeGrid};

/// Response operator plus the boundary it was measured on.
#[derive(Debug)]
pub struct BoundaryDataSet {
    response: ResponseOperator,
    boundary: BoundaryGeometry,
    horizon: f64,
    elements: Vec<BasisElement>,
    grams: Mutex<HashMap<usize, Arc<Gram>>>,
}

impl BoundaryDataSet {
    pub fn new(response: ResponseOperator, boundary: BoundaryGeometry, horizon: f64) -> Result<Self> {
        let available = response.header.horizon;
        if horizon > available * (1.0 + 1e-12) || !(horizon > 0.0) {
            return Err(Error::HorizonExceeded { requested: horizon, horizon: available });
        }
        let hash = boundary.hash();
        if hash != response.header.boundary_hash {
            return Err(Error::HashMismatch { expected: response.header.boundary_hash.clone(), found: hash });
        }
        let elements = response.elements();
        if elements.len() != response.n_basis() {
            return Err(Error::BasisMismatch("header basis does not match matrix width".into()));
        }
        Ok(BoundaryDataSet { response, boundary, horizon, elements, grams: Mutex::new(HashMap::new()) })
    }

    /// Uses the boundary description stored with the operator and its full horizon.
    pub fn from_response(response: ResponseOperator) -> Result<Self> {
        let boundary = response.header.boundary.clone();
        let horizon = response.header.horizon;
        Self::new(response, boundary, horizon)
    }

    pub fn response(&self) -> &ResponseOperator {
        &self.response
    }

    pub fn boundary(&self) -> &BoundaryGeometry {
        &self.boundary
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.response.time_grid()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn n_basis(&self) -> usize {
        self.elements.len()
    }

    /// Step index of time `t`, checked against the horizon.
    pub fn step(&self, t: f64) -> Result<usize> {
        if t > self.horizon * (1.0 + 1e-12) + 1e-15 || t < 0.0 {
            return Err(Error::HorizonExceeded { requested: t, horizon: self.horizon });
        }
        Ok(self.time_grid().step_of(t))
    }

    pub fn check_source(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_basis() {
            return Err(Error::BasisMismatch(format!(
                "source has {} coefficients, basis has {}",
                f.len(),
                self.n_basis()
            )));
        }
        Ok(())
    }

    /// Gram matrix of the wave states at time `t`, cached per step.
    pub fn gram(&self, t: f64) -> Result<Arc<Gram>> {
        let n = self.step(t)?;
        if let Some(g) = self.grams.lock().unwrap().get(&n) {
            return Ok(g.clone());
        }
        let g = Arc::new(gram_matrix(self, n));
        self.grams.lock().unwrap().insert(n, g.clone());
        Ok(g)
    }
}
