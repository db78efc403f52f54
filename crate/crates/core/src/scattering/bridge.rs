//! Interior Neumann-to-Dirichlet maps at the interface and their
//! correspondence with the S-matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::profile::{EndProfile, Perturbation, INTERFACE};
use super::radial::{exterior_basis, wall_solutions, SMatrix, ScatterOptions};

/// Neumann-to-Dirichlet map over all channels at `r = INTERFACE`.
#[derive(Debug, Clone)]
pub struct NDMap {
    pub k: f64,
    pub matrix: DMatrix<Complex64>,
}

/// Either side of the bridge at one wavenumber.
#[derive(Debug, Clone)]
pub enum BridgeData {
    S(SMatrix),
    Nd(NDMap),
}

const SINGULAR: f64 = 1e-10;

/// Largest singular value of the stacked traces `[y; n]` over the smallest of `n`.
fn condition(y: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let stacked = DMatrix::from_fn(y.nrows() + n.nrows(), y.ncols(), |i, j| {
        if i < y.nrows() {
            y[(i, j)]
        } else {
            n[(i - y.nrows(), j)]
        }
    });
    let hi = stacked.svd(false, false).singular_values.max();
    let lo = n.clone().svd(false, false).singular_values.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn smallest_relative_singular(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Solves the interior problem on `[wall, INTERFACE]` with unit Neumann data
/// in each channel and returns the Dirichlet traces.
pub fn nd_map_interior(profile: &EndProfile, k: f64, pert: &Perturbation, opts: &ScatterOptions) -> Result<NDMap> {
    profile.validate()?;
    pert.validate(profile)?;
    let (y, yp) = wall_solutions(profile, pert, k, INTERFACE, &opts.ode)?;
    let lp = profile.kind.log_rho_prime(INTERFACE) / 4.0;
    let neumann = &yp - &y * lp;
    let cond = condition(&y, &neumann);
    if !(cond < 1.0 / SINGULAR) {
        return Err(Error::InteriorEigenvalue { condition: cond });
    }
    let inv = neumann.try_inverse().ok_or(Error::InteriorEigenvalue { condition: cond })?;
    let lam = &y * inv;
    Ok(NDMap { k, matrix: lam.map(|x| Complex64::new(x, 0.0)) })
}

/// Exterior basis at the interface in the `u` variable.
struct InterfaceBasis {
    open: Vec<usize>,
    e_in: DMatrix<Complex64>,
    de_in: DMatrix<Complex64>,
    e_out: DMatrix<Complex64>,
    de_out: DMatrix<Complex64>,
}

fn interface_basis(profile: &EndProfile, k: f64, opts: &ScatterOptions) -> Result<InterfaceBasis> {
    let ext = exterior_basis(profile, k, INTERFACE, &opts.ode)?;
    for (col, &m) in ext.open.iter().enumerate() {
        let w = ext.w_in[(m, col)] * ext.dw_out[(m, m)] - ext.dw_in[(m, col)] * ext.w_out[(m, m)];
        if w.norm() < SINGULAR {
            return Err(Error::DegenerateMatching("exterior basis is degenerate".into()));
        }
    }
    let q = profile.kind.rho(INTERFACE).powf(-0.25);
    let lp = profile.kind.log_rho_prime(INTERFACE) / 4.0;
    let to_u = |w: &DMatrix<Complex64>, dw: &DMatrix<Complex64>| (w.map(|z| z * q), (dw - w.map(|z| z * lp)).map(|z| z * q));
    let (e_in, de_in) = to_u(&ext.w_in, &ext.dw_in);
    let (e_out, de_out) = to_u(&ext.w_out, &ext.dw_out);
    Ok(InterfaceBasis { open: ext.open, e_in, de_in, e_out, de_out })
}

/// S-matrix from the interior ND map, by matching to the radiating exterior
/// solutions at the interface.
pub fn ndmap_to_smatrix(profile: &EndProfile, nd: &NDMap, opts: &ScatterOptions) -> Result<SMatrix> {
    profile.validate()?;
    profile.check_energy(nd.k, opts.threshold_tol)?;
    let b = interface_basis(profile, nd.k, opts)?;
    let lhs = &b.e_out - &nd.matrix * &b.de_out;
    if smallest_relative_singular(&lhs) < SINGULAR {
        return Err(Error::DegenerateMatching("exterior basis is degenerate".into()));
    }
    let rhs = &nd.matrix * &b.de_in - &b.e_in;
    let x = lhs.lu().solve(&rhs).ok_or_else(|| Error::DegenerateMatching("singular matching system".into()))?;
    let no = b.open.len();
    let mut s = DMatrix::zeros(no, no);
    for (row, &m) in b.open.iter().enumerate() {
        for c in 0..no {
            s[(row, c)] = x[(m, c)];
        }
    }
    Ok(SMatrix { k: nd.k, channels: b.open, matrix: s })
}

/// ND map from the S-matrix; every channel must be open.
pub fn smatrix_to_ndmap(profile: &EndProfile, s: &SMatrix, opts: &ScatterOptions) -> Result<NDMap> {
    profile.validate()?;
    profile.check_energy(s.k, opts.threshold_tol)?;
    let b = interface_basis(profile, s.k, opts)?;
    if b.open.len() != profile.channels() || s.size() != profile.channels() {
        return Err(Error::InvalidSpec("the S-matrix determines the ND map only when every channel is open".into()));
    }
    let u = &b.e_in + &b.e_out * &s.matrix;
    let du = &b.de_in + &b.de_out * &s.matrix;
    if smallest_relative_singular(&du) < SINGULAR {
        return Err(Error::DegenerateMatching("exterior basis is degenerate".into()));
    }
    let inv = du.try_inverse().ok_or_else(|| Error::DegenerateMatching("singular matching system".into()))?;
    Ok(NDMap { k: s.k, matrix: u * inv })
}

/// Maps each sample to the other side of the bridge.
pub fn smatrix_ndmap_bridge(
    profile: &EndProfile,
    samples: &[BridgeData],
    opts: &ScatterOptions,
) -> Result<Vec<BridgeData>> {
    samples
        .iter()
        .map(|d| match d {
            BridgeData::S(s) => smatrix_to_ndmap(profile, s, opts).map(BridgeData::Nd),
            BridgeData::Nd(nd) => ndmap_to_smatrix(profile, nd, opts).map(BridgeData::S),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::profile::{Bump, ProfileKind};
    use crate::scattering::radial::compute_smatrix;
    use std::f64::consts::PI;

    fn opts() -> ScatterOptions {
        ScatterOptions::default()
    }

    #[test]
    fn constant_segment_closed_forms() {
        let p = EndProfile::new(ProfileKind::Cylindrical, vec![0.0, 9.0]).unwrap();
        let k = 1.3;
        let nd = nd_map_interior(&p, k, &Perturbation::none(), &opts()).unwrap();
        // Open channel: u = cos(k r); closed: u = cosh(kappa r).
        let open = -1.0 / (k * (2.0 * k).tan());
        let kappa = (9.0 - k * k).sqrt();
        let closed = 1.0 / (kappa * (2.0 * kappa).tanh());
        assert!((nd.matrix[(0, 0)].re - open).abs() < 1e-8 * open.abs().max(1.0));
        assert!((nd.matrix[(1, 1)].re - closed).abs() < 1e-8);
        assert!(nd.matrix[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn interior_eigenvalue_is_reported() {
        let p = EndProfile::new(ProfileKind::Cylindrical, vec![0.0]).unwrap();
        let err = nd_map_interior(&p, PI / 2.0, &Perturbation::none(), &opts()).unwrap_err();
        assert!(matches!(err, Error::InteriorEigenvalue { condition } if condition > 1e10));
    }

    #[test]
    fn nd_to_s_agrees_with_direct_smatrix() {
        let pert = Perturbation { potential: Some(Bump { amp: 3.0, center: 1.0, width: 0.8 }), ..Default::default() };
        for kind in ProfileKind::ALL {
            let p = EndProfile::new(kind, vec![0.0]).unwrap();
            let pert = if kind == ProfileKind::Euclidean {
                Perturbation { potential: Some(Bump { amp: 3.0, center: 1.5, width: 0.4 }), ..Default::default() }
            } else {
                pert.clone()
            };
            let k = 1.1;
            let nd = nd_map_interior(&p, k, &pert, &opts()).unwrap();
            let via = ndmap_to_smatrix(&p, &nd, &opts()).unwrap();
            let direct = compute_smatrix(&p, k, &pert, &opts()).unwrap();
            assert!((via.entry(0, 0) - direct.entry(0, 0)).norm() < 1e-8, "{kind:?}");
        }
    }

    #[test]
    fn bridge_round_trip() {
        let p = EndProfile::new(ProfileKind::Cylindrical, vec![0.0, 1.0]).unwrap();
        let pert = Perturbation { index: Some(Bump { amp: 0.5, center: 1.0, width: 0.9 }), ..Default::default() };
        let nd = nd_map_interior(&p, 1.7, &pert, &opts()).unwrap();
        let s = smatrix_ndmap_bridge(&p, &[BridgeData::Nd(nd.clone())], &opts()).unwrap();
        let back = smatrix_ndmap_bridge(&p, &s, &opts()).unwrap();
        let BridgeData::Nd(back) = &back[0] else { panic!("expected an ND map") };
        let err = (&back.matrix - &nd.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "round trip error {err}");
    }

    #[test]
    fn closed_channels_block_the_inverse_direction() {
        let p = EndProfile::new(ProfileKind::Cylindrical, vec![0.0, 25.0]).unwrap();
        let s = compute_smatrix(&p, 1.0, &Perturbation::none(), &opts()).unwrap();
        assert!(matches!(smatrix_to_ndmap(&p, &s, &opts()), Err(Error::InvalidSpec(_))));
    }
}
