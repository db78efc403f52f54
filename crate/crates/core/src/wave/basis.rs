use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary source values `F(z, t_m)`, step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySource {
    dt: f64,
    nb: usize,
    values: Vec<f64>,
}

impl BoundarySource {
    pub fn zeros(dt: f64, steps: usize, nb: usize) -> Self {
        BoundarySource { dt, nb, values: vec![0.0; steps * nb] }
    }

    pub fn new(dt: f64, nb: usize, values: Vec<f64>) -> Result<Self> {
        if nb == 0 || values.len() % nb != 0 || values.is_empty() {
            return Err(Error::BasisMismatch("source length is not a multiple of boundary size".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BasisMismatch("non-finite source value".into()));
        }
        if values[..nb].iter().any(|&v| v != 0.0) {
            return Err(Error::BasisMismatch("source must vanish at t = 0".into()));
        }
        Ok(BoundarySource { dt, nb, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn boundary_len(&self) -> usize {
        self.nb
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.nb
    }

    pub fn at(&self, m: usize) -> &[f64] {
        &self.values[m * self.nb..(m + 1) * self.nb]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Nodal spike at one boundary node times a temporal hat of half-width
/// `stride` steps centred at `center`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisElement {
    pub node: usize,
    pub center: usize,
}

/// Tensor-product source basis: hats at every `stride`-th step whose support
/// lies in `(0, T]`, on the listed boundary nodes (all of them by default).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub stride: usize,
    #[serde(default)]
    pub nodes: Option<Vec<usize>>,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec { stride: 4, nodes: None }
    }
}

impl BasisSpec {
    pub fn with_stride(stride: usize) -> Self {
        BasisSpec { stride, nodes: None }
    }

    /// Elements ordered node-major, then by centre. `n` is the step count to `T`.
    pub fn elements(&self, nb: usize, n: usize) -> Vec<BasisElement> {
        let s = self.stride.max(1);
        let nodes: Vec<usize> = match &self.nodes {
            Some(v) => v.clone(),
            None => (0..nb).collect(),
        };
        let mut out = Vec::new();
        for node in nodes {
            let mut k = 1;
            while (k + 1) * s <= n {
                out.push(BasisElement { node, center: k * s });
                k += 1;
            }
        }
        out
    }

    pub fn hat(&self, e: &BasisElement, m: usize) -> f64 {
        let s = self.stride.max(1) as f64;
        (1.0 - (m as f64 - e.center as f64).abs() / s).max(0.0)
    }

    /// Steps where the element is nonzero.
    pub fn support(&self, e: &BasisElement) -> std::ops::Range<usize> {
        let s = self.stride.max(1);
        e.center + 1 - s..e.center + s
    }

    /// Dense source `sum_i coeffs[i] * element_i` on steps `0..steps`.
    pub fn synthesize(
        &self,
        elements: &[BasisElement],
        coeffs: &[f64],
        dt: f64,
        nb: usize,
        steps: usize,
    ) -> Result<BoundarySource> {
        if coeffs.len() != elements.len() {
            return Err(Error::BasisMismatch(format!(
                "{} coefficients for {} basis elements",
                coeffs.len(),
                elements.len()
            )));
        }
        let mut values = vec![0.0; steps * nb];
        for (e, &a) in elements.iter().zip(coeffs) {
            if a == 0.0 {
                continue;
            }
            for m in self.support(e).filter(|&m| m < steps) {
                values[m * nb + e.node] += a * self.hat(e, m);
            }
        }
        BoundarySource::new(dt, nb, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elements_fit_inside_horizon() {
        let b = BasisSpec::with_stride(2);
        let els = b.elements(80, 60);
        assert_eq!(els.len(), 80 * 29);
        for e in &els {
            let sup = b.support(e);
            assert!(sup.start >= 1 && sup.end - 1 <= 60);
        }
        let b4 = BasisSpec::default();
        assert_eq!(b4.elements(2, 640).len(), 2 * 159);
    }

    #[test]
    fn hat_values() {
        let b = BasisSpec::with_stride(4);
        let e = BasisElement { node: 0, center: 8 };
        assert_eq!(b.hat(&e, 8), 1.0);
        assert_eq!(b.hat(&e, 6), 0.5);
        assert_eq!(b.hat(&e, 4), 0.0);
        assert_eq!(b.hat(&e, 12), 0.0);
        assert_eq!(b.support(&e), 5..12);
    }

    #[test]
    fn source_must_start_at_zero() {
        assert!(BoundarySource::new(0.1, 2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(BoundarySource::new(0.1, 2, vec![0.0, 0.0, 1.0, 0.0]).is_ok());
        assert!(BoundarySource::new(0.1, 2, vec![0.0, 0.0, f64::NAN, 0.0]).is_err());
    }
}
