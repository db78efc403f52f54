use nalgebra::{DMatrix, DVector};

use super::data::BoundaryDataSet;
use super::gram::Gram;
use crate::error::{Error, Result};
use crate::geometry::BoundaryPatch;

pub const DEFAULT_ALPHA_LADDER: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    /// Basis indices of `B = Gamma x [T - T1, T]`.
    pub support: Vec<usize>,
    /// Full-length coefficient vector, zero outside `support`.
    pub coeffs: Vec<f64>,
    /// `|u^F(T) - u^H(T)|^2`.
    pub objective: f64,
    /// `|u^F(T)|^2`.
    pub target_energy: f64,
    pub alpha: f64,
    pub iterations: usize,
}

impl ControlSolution {
    /// `|u^F(T)|^2 - objective`, the energy captured by the control.
    pub fn captured(&self) -> f64 {
        self.target_energy - self.objective
    }
}

/// Basis elements on `patch` whose temporal support lies in `[n - n1, n]`.
pub(crate) fn control_support(d: &BoundaryDataSet, patch: &BoundaryPatch, n1: usize, n: usize) -> Vec<usize> {
    let s = d.response().header.basis.stride;
    let lo = n.saturating_sub(n1);
    d.elements()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            patch.nodes.binary_search(&e.node).is_ok() && e.center >= lo + s && e.center + s <= n
        })
        .map(|(i, _)| i)
        .collect()
}

/// Conjugate gradients for `(A + shift I) x = b` with `A` symmetric.
pub(crate) fn conjugate_gradient(
    a: &DMatrix<f64>,
    shift: f64,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let scale = a.diagonal().amax().max(shift);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        let ap = a * &p + &p * shift;
        let curv = p.dot(&ap);
        if curv <= 0.0 || !curv.is_finite() {
            return Err(Error::GramNotPsd { value: curv / (p.dot(&p) * scale) });
        }
        let step = rr / curv;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    if rr.sqrt() <= tol * bnorm {
        return Ok((x, max_iter));
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rr.sqrt() / bnorm })
}

pub(crate) fn solve_on_support(
    gram: &Gram,
    f: &[f64],
    support: &[usize],
    alpha: f64,
) -> Result<(Vec<f64>, f64, f64, usize)> {
    let nbas = f.len();
    let gff = gram.inner(f, f);
    if support.is_empty() || f.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; nbas], gff.max(0.0), gff, 0));
    }
    let gbb = gram.block(support, support);
    let rhs = DVector::from_iterator(
        support.len(),
        support.iter().map(|&i| {
            let col = gram.matrix.column(i);
            col.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
        }),
    );
    let shift = alpha * gbb.diagonal().amax();
    let max_iter = 20 * support.len() + 100;
    let (c, iters) = conjugate_gradient(&gbb, shift, &rhs, 1e-12, max_iter)?;
    let objective = gff - 2.0 * c.dot(&rhs) + c.dot(&(&gbb * &c));
    let mut coeffs = vec![0.0; nbas];
    for (k, &i) in support.iter().enumerate() {
        coeffs[i] = c[k];
    }
    Ok((coeffs, objective.max(0.0), gff, iters))
}

/// Regularized best approximation of `u^F(T)` by waves from
/// `B = Gamma x [T - T1, T]`: minimizes `|u^F(T) - u^H(T)|^2 + alpha_eff |H|^2`
/// over coefficients on `B`, with `alpha_eff = alpha * max diag G_BB`. Every
/// inner product comes from the boundary-data Gram matrix.
pub fn control_projection(
    d: &BoundaryDataSet,
    f: &[f64],
    patch: &BoundaryPatch,
    t1: f64,
    t: f64,
    alpha: f64,
) -> Result<ControlSolution> {
    d.check_source(f)?;
    if !(alpha > 0.0) {
        return Err(Error::ConfigInvalid(format!("regularization must be positive, got {alpha}")));
    }
    let n = d.step(t)?;
    let n1 = d.time_grid().step_of(t1.max(0.0)).min(n);
    let support = control_support(d, patch, n1, n);
    if support.is_empty() {
        return Err(Error::BasisMismatch(format!(
            "no basis element supported in the control window (T1 = {t1}, T = {t})"
        )));
    }
    let gram = d.gram(t)?;
    let (coeffs, objective, gff, iterations) = solve_on_support(&gram, f, &support, alpha)?;
    Ok(ControlSolution { support, coeffs, objective, target_energy: gff, alpha, iterations })
}

/// Index of the L-curve corner: maximal Menger curvature of
/// `(log residual, log |coeffs|)` over consecutive triples.
pub fn choose_alpha(residuals: &[f64], norms: &[f64]) -> usize {
    let n = residuals.len();
    if n < 3 {
        return n.saturating_sub(1);
    }
    let tiny = 1e-300;
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .zip(norms)
        .map(|(&r, &c)| (r.max(tiny).ln(), c.max(tiny).ln()))
        .collect();
    let mut best = (n - 1, f64::NEG_INFINITY);
    for k in 1..n - 1 {
        let (a, b, c) = (pts[k - 1], pts[k], pts[k + 1]);
        let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        let la = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let lb = ((c.0 - b.0).powi(2) + (c.1 - b.1).powi(2)).sqrt();
        let lc = ((c.0 - a.0).powi(2) + (c.1 - a.1).powi(2)).sqrt();
        let denom = la * lb * lc;
        let kappa = if denom > 0.0 { 2.0 * cross.abs() / denom } else { 0.0 };
        if kappa > best.1 {
            best = (k, kappa);
        }
    }
    best.0
}

/// Control solutions over an alpha ladder, plus the index of the L-curve corner.
pub fn control_lcurve(
    d: &BoundaryDataSet,
    f: &[f64],
    patch: &BoundaryPatch,
    t1: f64,
    t: f64,
    ladder: &[f64],
) -> Result<(usize, Vec<ControlSolution>)> {
    let sols = ladder
        .iter()
        .map(|&a| control_projection(d, f, patch, t1, t, a))
        .collect::<Result<Vec<_>>>()?;
    let res: Vec<f64> = sols.iter().map(|s| s.objective).collect();
    let norms: Vec<f64> = sols
        .iter()
        .map(|s| s.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt())
        .collect();
    Ok((choose_alpha(&res, &norms), sols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_spd_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, _) = conjugate_gradient(&a, 0.0, &b, 1e-14, 50).unwrap();
        assert!((&a * &x - &b).norm() < 1e-12);
    }

    #[test]
    fn cg_flags_indefinite_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(conjugate_gradient(&a, 0.0, &b, 1e-14, 50), Err(Error::GramNotPsd { .. })));
    }

    #[test]
    fn corner_of_synthetic_l_curve() {
        // flat then steep: the corner sits at the bend
        let res = [1.0, 0.5, 0.1, 0.09, 0.089];
        let norms = [1.0, 1.1, 1.2, 10.0, 100.0];
        assert_eq!(choose_alpha(&res, &norms), 2);
        assert_eq!(choose_alpha(&[1.0], &[1.0]), 0);
    }
}
