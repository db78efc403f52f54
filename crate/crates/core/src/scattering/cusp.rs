//! Generalized S-matrix of a model cusp with a Neumann wall at `y = 1`.
//!
//! Mode `n` of the cusp with cross-section period `P` has `kappa = 2 pi |n| / P`.
//! For `n != 0` the exterior basis is the growing solution
//! `G = sqrt(2 pi kappa y) I_{-ik}(kappa y) ~ e^{kappa y}` and the decaying
//! solution `D = sqrt(2 kappa y / pi) K_{ik}(kappa y) ~ e^{-kappa y}`. The
//! entry `b_n / a_n` of `u = a_n G + b_n D` is of size `e^{2 kappa}`; entries
//! are stored rescaled by `e^{-2 kappa}` and the exponent is kept separately.
//! `n = 0` uses `y^{1/2 -+ ik}` and reproduces the ordinary S-matrix.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ode::integrate;
use super::profile::{gamma, k_bessel_series, EndProfile, Perturbation, ProfileKind};
use super::radial::ScatterOptions;

/// Largest exponent for which raw (unscaled) entries are representable.
pub const RAW_EXPONENT_CAP: f64 = 700.0;
/// Largest growth exponent across the perturbed region that still leaves
/// about six significant digits in the decaying coefficient.
pub const CONDITIONING_CAP: f64 = 23.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspModel {
    pub period: f64,
    pub y_max: f64,
    pub perturbation: Perturbation,
}

impl Default for CuspModel {
    fn default() -> Self {
        Self { period: 1.0, y_max: 40.0, perturbation: Perturbation::none() }
    }
}

#[derive(Debug, Clone)]
pub struct GeneralizedSMatrix {
    pub k: f64,
    pub modes: Vec<i64>,
    /// Rescaled entries (diagonal for radial interiors).
    pub entries: DMatrix<Complex64>,
    /// Per-mode exponent `2 kappa`: raw entry = rescaled entry * e^{exponent}.
    pub exponents: Vec<f64>,
}

impl GeneralizedSMatrix {
    pub fn index_of(&self, n: i64) -> Option<usize> {
        self.modes.iter().position(|&m| m == n)
    }

    pub fn raw_entry(&self, i: usize, j: usize) -> Result<Complex64> {
        let e = 0.5 * (self.exponents[i] + self.exponents[j]);
        if e > RAW_EXPONENT_CAP {
            return Err(Error::OverflowGuard { scale: e, cap: RAW_EXPONENT_CAP });
        }
        Ok(self.entries[(i, j)] * e.exp())
    }
}

/// Truncated generalized S-matrix for modes `|n| <= n_modes`.
pub fn cusp_generalized_smatrix(
    model: &CuspModel,
    k: f64,
    n_modes: usize,
    opts: &ScatterOptions,
) -> Result<GeneralizedSMatrix> {
    if !(model.period > 0.0 && model.y_max > 1.0) {
        return Err(Error::InvalidSpec("cusp period must be positive and y_max > 1".into()));
    }
    if !model.perturbation.is_radial() {
        return Err(Error::InvalidSpec("the generalized S-matrix needs a radial interior".into()));
    }
    let kappas: Vec<f64> = (0..=n_modes).map(|n| 2.0 * PI * n as f64 / model.period).collect();
    let profile = EndProfile::new(ProfileKind::Cusp, kappas.iter().map(|k| k * k).collect())?;
    model.perturbation.validate(&profile)?;
    profile.check_energy(k, opts.threshold_tol)?;
    let r_max = model.y_max.ln();
    let r_s = model.perturbation.support_end(profile.wall);
    if r_max <= r_s {
        return Err(Error::InvalidSpec(format!("y_max must lie beyond the perturbation (y = {})", r_s.exp())));
    }

    let per_mode: Vec<(Complex64, f64)> = (0..=n_modes)
        .map(|n| {
            if n == 0 {
                zero_mode(&profile, &model.perturbation, k, r_s, opts).map(|s| (s, 0.0))
            } else {
                growing_mode(&profile, &model.perturbation, n, kappas[n], k, r_s, r_max, opts)
            }
        })
        .collect::<Result<_>>()?;

    let modes: Vec<i64> = (-(n_modes as i64)..=n_modes as i64).collect();
    let mut entries = DMatrix::zeros(modes.len(), modes.len());
    let mut exponents = Vec::with_capacity(modes.len());
    for (i, &n) in modes.iter().enumerate() {
        let (s, e) = per_mode[n.unsigned_abs() as usize];
        entries[(i, i)] = s;
        exponents.push(e);
    }
    Ok(GeneralizedSMatrix { k, modes, entries, exponents })
}

/// Neumann condition for `u = e^{r/2} v` at `r = 0`: `v' + v/2`.
fn neumann<T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Copy>(v: T, dv: T) -> T {
    dv + v * 0.5
}

fn zero_mode(profile: &EndProfile, pert: &Perturbation, k: f64, r_s: f64, opts: &ScatterOptions) -> Result<Complex64> {
    let i = Complex64::i();
    let r0 = r_s.max(profile.wall);
    let g = (-i * k * r0).exp();
    let d = (i * k * r0).exp();
    let dg = -i * k * g;
    let dd = i * k * d;
    let mut y = [g.re, dg.re, g.im, dg.im, d.re, dd.re, d.im, dd.im];
    integrate(
        |t, y, dy| {
            let p = pert.channel_scalar(profile, 0, k, t);
            for c in 0..4 {
                dy[2 * c] = y[2 * c + 1];
                dy[2 * c + 1] = p * y[2 * c];
            }
        },
        r0,
        profile.wall,
        &mut y,
        &opts.ode,
    )?;
    let (g, dg) = (Complex64::new(y[0], y[2]), Complex64::new(y[1], y[3]));
    let (d, dd) = (Complex64::new(y[4], y[6]), Complex64::new(y[5], y[7]));
    Ok(-neumann(g, dg) / neumann(d, dd))
}

#[allow(clippy::too_many_arguments)]
fn growing_mode(
    profile: &EndProfile,
    pert: &Perturbation,
    n: usize,
    kappa: f64,
    k: f64,
    r_s: f64,
    r_max: f64,
    opts: &ScatterOptions,
) -> Result<(Complex64, f64)> {
    let wall = profile.wall;
    // Decaying solution, scaled by e^{z}; inward integration is stable.
    let (w0, dw0) = decaying_seed(k, kappa, r_max);
    let mut wd = [w0, dw0];
    integrate(
        |t, y, dy| {
            let z = kappa * t.exp();
            let p = pert.channel_scalar(profile, n, k, t);
            dy[0] = y[1];
            dy[1] = 2.0 * z * y[1] + (z + p - z * z) * y[0];
        },
        r_max,
        wall,
        &mut wd,
        &opts.ode,
    )?;

    // Growing solution, scaled by e^{-z}, continued through the perturbation.
    let r0 = r_s.max(wall);
    let growth = 2.0 * kappa * (r0.exp() - wall.exp());
    if growth > CONDITIONING_CAP {
        return Err(Error::OverflowGuard { scale: growth, cap: CONDITIONING_CAP });
    }
    let z0 = kappa * r0.exp();
    let (val, dval) = growing_series(k, kappa, z0)?;
    let dg = (dval - val) * z0;
    let mut wg = [val.re, dg.re, val.im, dg.im];
    integrate(
        |t, y, dy| {
            let z = kappa * t.exp();
            let c = pert.channel_scalar(profile, n, k, t) - z * z - z;
            for part in 0..2 {
                dy[2 * part] = y[2 * part + 1];
                dy[2 * part + 1] = -2.0 * z * y[2 * part + 1] + c * y[2 * part];
            }
        },
        r0,
        wall,
        &mut wg,
        &opts.ode,
    )?;
    let zw = kappa * wall.exp();
    let (g, dg) = (Complex64::new(wg[0], wg[2]), Complex64::new(wg[1], wg[3]));
    let ng = neumann(g, dg) + g * zw;
    let nd = neumann(wd[0], wd[1]) - zw * wd[0];
    if nd == 0.0 {
        return Err(Error::DegenerateMatching("exterior basis is degenerate".into()));
    }
    Ok((-ng / nd, 2.0 * zw))
}

/// `sqrt(2 pi kappa) I_{-ik}(z)` and its `z`-derivative, each multiplied by
/// `e^{-z}`.
fn growing_series(k: f64, kappa: f64, z: f64) -> Result<(Complex64, Complex64)> {
    if z > RAW_EXPONENT_CAP {
        return Err(Error::OverflowGuard { scale: z, cap: RAW_EXPONENT_CAP });
    }
    let nu = Complex64::new(0.0, -k);
    let x = z * z / 4.0;
    let mut t = Complex64::new(1.0, 0.0);
    let mut sum = t;
    let mut dsum = Complex64::new(0.0, 0.0);
    for j in 1..2000 {
        let jf = j as f64;
        t *= x / (jf * (nu + jf));
        sum += t;
        dsum += t * (2.0 * jf / z);
        if t.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    // (z/2)^nu e^{-z} / Gamma(1 + nu), with the exponential folded in.
    let pre = (nu * (z / 2.0).ln() - z).exp() / gamma(nu + 1.0) * (2.0 * PI * kappa).sqrt();
    let val = pre * sum;
    let dval = pre * (sum * (nu / z) + dsum);
    Ok((val, dval))
}

/// Seed of the decaying solution in the scaled variable `w = e^{z} D_v` at
/// `r`, with `y = e^r`, `z = kappa y`: `(w, dw/dr)`.
fn decaying_seed(k: f64, kappa: f64, r: f64) -> (f64, f64) {
    let y = r.exp();
    let z = kappa * y;
    let (s, ds) = k_bessel_series(k, z);
    let w = y.powf(-0.5) * s;
    let dw = -0.5 * w + y.sqrt() * kappa * ds;
    (w, dw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growing_series_matches_asymptotics() {
        // sqrt(2 pi kappa) I(z) e^{-z} -> sqrt(kappa / z) for large z.
        let (k, kappa, z) = (0.7, 2.0 * PI, 60.0);
        let (v, _) = growing_series(k, kappa, z).unwrap();
        let approx = (kappa / z).sqrt() * (1.0 - (4.0 * -k * k - 1.0) / (8.0 * z));
        assert!((v.re - approx).abs() < 1e-4 && v.im.abs() < 1e-4, "{v}");
    }

    #[test]
    fn decaying_seed_is_normalised() {
        let (w, _) = decaying_seed(0.5, 2.0 * PI, 40.0f64.ln());
        assert!((w * 40.0f64.sqrt() - 1.0).abs() < 1e-2);
    }

    fn opts() -> ScatterOptions {
        ScatterOptions::default()
    }

    /// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
    fn simpson<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, n: usize) -> Complex64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for j in 1..n {
            s += f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * (h / 3.0)
    }

    /// `K_{ik}(z)` and `K'_{ik}(z)` from `int_0^inf e^{-z cosh t} cos(kt) dt`.
    fn k_oracle(k: f64, z: f64) -> (f64, f64) {
        let end = ((z + 60.0) / z).acosh();
        let kv = simpson(|t| Complex64::new((-z * t.cosh()).exp() * (k * t).cos(), 0.0), 0.0, end, 20_000);
        let dk = simpson(|t| Complex64::new(-t.cosh() * (-z * t.cosh()).exp() * (k * t).cos(), 0.0), 0.0, end, 20_000);
        (kv.re, dk.re)
    }

    /// `I_{-ik}(z)` and its derivative from Schlaefli's integral.
    fn i_oracle(k: f64, z: f64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        let a = simpson(|th| Complex64::new((z * th.cos()).exp() * (k * th).cosh(), 0.0), 0.0, PI, 20_000) / PI;
        let da = simpson(|th| Complex64::new(th.cos() * (z * th.cos()).exp() * (k * th).cosh(), 0.0), 0.0, PI, 20_000) / PI;
        let end = ((z + 60.0) / z).acosh();
        let tail = simpson(|t| (-z * t.cosh()).exp() * (i * k * t).exp(), 0.0, end, 20_000);
        let dtail = simpson(|t| t.cosh() * (-z * t.cosh()).exp() * (i * k * t).exp(), 0.0, end, 20_000);
        let c = i * (k * PI).sinh() / PI;
        (a + c * tail, da - c * dtail)
    }

    #[test]
    fn free_modes_match_bessel_integrals() {
        let k = 0.7;
        let g = cusp_generalized_smatrix(&CuspModel::default(), k, 2, &opts()).unwrap();
        for n in 1..=2i64 {
            let kappa = 2.0 * PI * n as f64;
            let (iv, di) = i_oracle(k, kappa);
            let (kv, dk) = k_oracle(k, kappa);
            let dg = (2.0 * PI * kappa).sqrt() * (iv * 0.5 + di * kappa);
            let dd = (2.0 * kappa / PI).sqrt() * (0.5 * kv + kappa * dk);
            let expect = -dg / dd * (-2.0 * kappa).exp();
            for m in [n, -n] {
                let idx = g.index_of(m).unwrap();
                let got = g.entries[(idx, idx)];
                assert!((got - expect).norm() < 1e-8 * expect.norm(), "n = {m}: {got} vs {expect}");
                assert_eq!(g.exponents[idx], 2.0 * kappa);
            }
        }
        let s0 = g.entries[(g.index_of(0).unwrap(), g.index_of(0).unwrap())];
        let ik = Complex64::new(0.0, k);
        let closed = -(0.5 - ik) / (0.5 + ik);
        assert!((s0 - closed).norm() < 1e-8, "{s0} vs {closed}");
    }

    fn perturbed(y_max: f64) -> CuspModel {
        CuspModel {
            y_max,
            perturbation: Perturbation { potential: Some(super::super::profile::Bump { amp: 2.5, center: 0.2, width: 0.15 }), ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn entries_are_stable_in_the_truncation_height() {
        let a = cusp_generalized_smatrix(&perturbed(20.0), 1.1, 3, &opts()).unwrap();
        let b = cusp_generalized_smatrix(&perturbed(40.0), 1.1, 3, &opts()).unwrap();
        for i in 0..a.modes.len() {
            let (x, y) = (a.entries[(i, i)], b.entries[(i, i)]);
            assert!((x - y).norm() <= 1e-6 * y.norm(), "mode {}: {x} vs {y}", a.modes[i]);
        }
    }

    #[test]
    fn radial_interior_gives_diagonal_matrix_and_standard_zero_mode() {
        let model = perturbed(40.0);
        let g = cusp_generalized_smatrix(&model, 1.1, 3, &opts()).unwrap();
        for i in 0..g.modes.len() {
            for j in 0..g.modes.len() {
                if i != j {
                    assert!(g.entries[(i, j)].norm() <= 1e-10);
                }
            }
        }
        let p = EndProfile::new(ProfileKind::Cusp, vec![0.0]).unwrap();
        let s = super::super::radial::compute_smatrix(&p, 1.1, &model.perturbation, &opts()).unwrap();
        let i0 = g.index_of(0).unwrap();
        assert!((g.entries[(i0, i0)] - s.entry(0, 0)).norm() < 1e-8);
        // Mirror modes agree.
        let (p3, m3) = (g.index_of(3).unwrap(), g.index_of(-3).unwrap());
        assert_eq!(g.entries[(p3, p3)], g.entries[(m3, m3)]);
    }

    #[test]
    fn overflow_guards() {
        let wide = CuspModel {
            perturbation: Perturbation { potential: Some(super::super::profile::Bump { amp: 1.0, center: 1.0, width: 0.9 }), ..Default::default() },
            ..Default::default()
        };
        assert!(matches!(cusp_generalized_smatrix(&wide, 1.0, 1, &opts()), Err(Error::OverflowGuard { .. })));

        let g = cusp_generalized_smatrix(&CuspModel { y_max: 3.0, ..Default::default() }, 1.0, 56, &opts()).unwrap();
        let top = g.index_of(56).unwrap();
        assert!(g.entries[(top, top)].is_finite());
        assert!(matches!(g.raw_entry(top, top), Err(Error::OverflowGuard { .. })));
        let one = g.index_of(1).unwrap();
        let raw = g.raw_entry(one, one).unwrap();
        assert!((raw * (-g.exponents[one]).exp() - g.entries[(one, one)]).norm() < 1e-12 * raw.norm() * (-g.exponents[one]).exp());
    }

    #[test]
    fn rejects_non_radial_interiors_and_bad_models() {
        let coupled = CuspModel {
            perturbation: Perturbation {
                coupling: Some(super::super::profile::Coupling {
                    bump: super::super::profile::Bump { amp: 1.0, center: 0.5, width: 0.3 },
                    matrix: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                }),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(cusp_generalized_smatrix(&coupled, 1.0, 1, &opts()), Err(Error::InvalidSpec(_))));
        let flat = CuspModel { y_max: 1.0, ..Default::default() };
        assert!(matches!(cusp_generalized_smatrix(&flat, 1.0, 1, &opts()), Err(Error::InvalidSpec(_))));
    }
}
