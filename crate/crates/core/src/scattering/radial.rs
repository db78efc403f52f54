//! Channel solves from the wall outwards, matching to model waves, and the
//! stationary S-matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

use super::ode::{integrate, OdeOptions};
use super::profile::{EndProfile, Perturbation};

/// Numerical settings shared by the scattering solvers.
#[derive(Debug, Clone, Copy)]
pub struct ScatterOptions {
    pub ode: OdeOptions,
    /// Guard band around channel thresholds, in units of `k^2`.
    pub threshold_tol: f64,
    /// Largest allowed change of the coefficients when the matching radius
    /// is doubled.
    pub drift_tol: f64,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), threshold_tol: 1e-3, drift_tol: 1e-7 }
    }
}

/// Wall-regular solution space `(Y, Y')` at `r_to` in the `v` variable, with
/// columns re-orthonormalised along the way.
pub(crate) fn wall_solutions(
    profile: &EndProfile,
    pert: &Perturbation,
    k: f64,
    r_to: f64,
    opts: &OdeOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = profile.channels();
    let r0 = profile.wall;
    let mut state = vec![0.0; 2 * n * n];
    let slope = profile.kind.log_rho_prime(r0) / 4.0;
    for m in 0..n {
        state[m * n + m] = 1.0;
        state[n * n + m * n + m] = slope;
    }
    let mut r = r0;
    while r < r_to {
        let growth = (0..n)
            .map(|m| pert.channel_scalar(profile, m, k, (r + 0.5).min(r_to)).max(0.0).sqrt())
            .fold(0.0, f64::max);
        let step = (3.0 / growth.max(1e-3)).min(0.5);
        let next = (r + step).min(r_to);
        integrate(
            |t, y, d| {
                let p = pert.channel_matrix(profile, k, t);
                let (ys, yps) = y.split_at(n * n);
                d[..n * n].copy_from_slice(yps);
                for c in 0..n {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += p[(i, j)] * ys[c * n + j];
                        }
                        d[n * n + c * n + i] = acc;
                    }
                }
            },
            r,
            next,
            &mut state,
            opts,
        )?;
        orthonormalize(&mut state, n);
        r = next;
    }
    let y = DMatrix::from_column_slice(n, n, &state[..n * n]);
    let yp = DMatrix::from_column_slice(n, n, &state[n * n..]);
    Ok((y, yp))
}

/// Replaces the `2n x n` stack `[Y; Y']` by an orthonormal basis of its span.
fn orthonormalize(state: &mut [f64], n: usize) {
    let mut stack = DMatrix::zeros(2 * n, n);
    for c in 0..n {
        for i in 0..n {
            stack[(i, c)] = state[c * n + i];
            stack[(n + i, c)] = state[n * n + c * n + i];
        }
    }
    let q = stack.qr().q();
    for c in 0..n {
        for i in 0..n {
            state[c * n + i] = q[(i, c)];
            state[n * n + c * n + i] = q[(n + i, c)];
        }
    }
}

/// Exterior basis at radius `r` in the `v` variable: incoming waves of the
/// open channels, and outgoing waves (open) or decaying solutions (closed).
pub(crate) struct ExteriorBasis {
    pub open: Vec<usize>,
    /// `(N x n_open)` incoming values and derivatives.
    pub w_in: DMatrix<Complex64>,
    pub dw_in: DMatrix<Complex64>,
    /// `(N x N)` diagonal outgoing/decaying values and derivatives.
    pub w_out: DMatrix<Complex64>,
    pub dw_out: DMatrix<Complex64>,
}

pub(crate) fn exterior_basis(profile: &EndProfile, k: f64, r: f64, opts: &OdeOptions) -> Result<ExteriorBasis> {
    let n = profile.channels();
    let open = profile.open_channels(k);
    let mut w_in = DMatrix::zeros(n, open.len());
    let mut dw_in = DMatrix::zeros(n, open.len());
    let mut w_out = DMatrix::zeros(n, n);
    let mut dw_out = DMatrix::zeros(n, n);
    for (col, &m) in open.iter().enumerate() {
        let (w, dw) = free_wave(profile, m, k, false, r, opts)?;
        w_in[(m, col)] = w;
        dw_in[(m, col)] = dw;
    }
    for m in 0..n {
        if profile.is_open(m, k) {
            let (w, dw) = free_wave(profile, m, k, true, r, opts)?;
            w_out[(m, m)] = w;
            dw_out[(m, m)] = dw;
        } else {
            w_out[(m, m)] = Complex64::new(1.0, 0.0);
            dw_out[(m, m)] = Complex64::new(profile.decaying_log_derivative(m, k, r, opts)?, 0.0);
        }
    }
    Ok(ExteriorBasis { open, w_in, dw_in, w_out, dw_out })
}

/// Model wave at `r`, continued inwards with the free channel equation when
/// `r` lies inside the region where the profile's expansion is accurate.
fn free_wave(
    profile: &EndProfile,
    m: usize,
    k: f64,
    outgoing: bool,
    r: f64,
    opts: &OdeOptions,
) -> Result<(Complex64, Complex64)> {
    let r_ok = match profile.kind {
        super::profile::ProfileKind::Euclidean => profile.matching_radius(k),
        _ => return profile.model_wave(m, k, outgoing, r),
    };
    if r >= r_ok {
        return profile.model_wave(m, k, outgoing, r);
    }
    let (w, dw) = profile.model_wave(m, k, outgoing, r_ok)?;
    let mut y = [w.re, dw.re, w.im, dw.im];
    integrate(
        |t, y, d| {
            let p = profile.potential(m, t) - k * k;
            d[0] = y[1];
            d[1] = p * y[0];
            d[2] = y[3];
            d[3] = p * y[2];
        },
        r_ok,
        r,
        &mut y,
        opts,
    )?;
    Ok((Complex64::new(y[0], y[2]), Complex64::new(y[1], y[3])))
}

/// Stationary scattering matrix over the open channels.
#[derive(Debug, Clone, Serialize)]
pub struct SMatrix {
    pub k: f64,
    pub channels: Vec<usize>,
    #[serde(skip)]
    pub matrix: DMatrix<Complex64>,
}

impl SMatrix {
    pub fn size(&self) -> usize {
        self.channels.len()
    }

    /// `max |(S* S - I)_{ij}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.size();
        let p = self.matrix.adjoint() * &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - e).norm());
            }
        }
        worst
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }
}

/// Coefficients `X` of the outgoing/decaying basis for unit incoming data in
/// each open channel, from matching at `r`.
fn match_at(profile: &EndProfile, pert: &Perturbation, k: f64, r: f64, opts: &OdeOptions) -> Result<SMatrix> {
    let n = profile.channels();
    let (y, yp) = wall_solutions(profile, pert, k, r, opts)?;
    let ext = exterior_basis(profile, k, r, opts)?;
    let no = ext.open.len();
    let mut a = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    let mut rhs = DMatrix::<Complex64>::zeros(2 * n, no);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = Complex64::new(y[(i, j)], 0.0);
            a[(n + i, j)] = Complex64::new(yp[(i, j)], 0.0);
            a[(i, n + j)] = -ext.w_out[(i, j)];
            a[(n + i, n + j)] = -ext.dw_out[(i, j)];
        }
        for c in 0..no {
            rhs[(i, c)] = ext.w_in[(i, c)];
            rhs[(n + i, c)] = ext.dw_in[(i, c)];
        }
    }
    let sol = a.lu().solve(&rhs).ok_or_else(|| Error::DegenerateMatching("singular matching system".into()))?;
    let mut s = DMatrix::zeros(no, no);
    for (row, &m) in ext.open.iter().enumerate() {
        for c in 0..no {
            s[(row, c)] = sol[(n + m, c)];
        }
    }
    Ok(SMatrix { k, channels: ext.open, matrix: s })
}

/// S-matrix of the perturbed end at wavenumber `k`, checked for stability
/// under doubling of the matching radius.
pub fn compute_smatrix(profile: &EndProfile, k: f64, pert: &Perturbation, opts: &ScatterOptions) -> Result<SMatrix> {
    profile.validate()?;
    pert.validate(profile)?;
    profile.check_energy(k, opts.threshold_tol)?;
    let r = profile.matching_radius(k).max(pert.support_end(profile.wall));
    let s = match_at(profile, pert, k, r, &opts.ode)?;
    let s2 = match_at(profile, pert, k, 2.0 * r, &opts.ode)?;
    let drift = (&s.matrix - &s2.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(drift <= opts.drift_tol) {
        return Err(Error::NonConvergedMatching { drift });
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveClass {
    Outgoing,
    Incoming,
    Standing,
}

/// One channel of a radial scattering solution with unit incoming amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct RadialSolution {
    pub channel: usize,
    pub k: f64,
    /// Sample radii on `[wall, r_match]`.
    pub r: Vec<f64>,
    /// `u(r)` (not the Liouville variable).
    #[serde(skip)]
    pub u: Vec<Complex64>,
    #[serde(skip)]
    pub du: Vec<Complex64>,
    /// Incoming and outgoing amplitudes.
    #[serde(skip)]
    pub a: Complex64,
    #[serde(skip)]
    pub b: Complex64,
    pub class: WaveClass,
}

impl RadialSolution {
    /// The exterior model `a w_- + b w_+` at the sample radii, in `u`.
    pub fn model(&self, profile: &EndProfile) -> Result<Vec<Complex64>> {
        self.r
            .iter()
            .map(|&r| {
                let (wm, _) = profile.model_wave(self.channel, self.k, false, r)?;
                let (wp, _) = profile.model_wave(self.channel, self.k, true, r)?;
                Ok((self.a * wm + self.b * wp) * profile.kind.rho(r).powf(-0.25))
            })
            .collect()
    }
}

/// Radiation-condition averages `<|(d/dr -+ i k_m) v|^2>` over the sample
/// radii beyond `r_from`, as `(outgoing residual, incoming residual)`.
pub fn radiation_residuals(
    profile: &EndProfile,
    m: usize,
    k: f64,
    r: &[f64],
    u: &[Complex64],
    du: &[Complex64],
    r_from: f64,
) -> (f64, f64) {
    let km = profile.channel_k(m, k);
    let i = Complex64::i();
    let (mut out, mut inc, mut cnt) = (0.0, 0.0, 0.0);
    for ((&rr, &uu), &dd) in r.iter().zip(u).zip(du) {
        if rr < r_from {
            continue;
        }
        let q = profile.kind.rho(rr).powf(0.25);
        let v = uu * q;
        let dv = (dd + uu * profile.kind.log_rho_prime(rr) / 4.0) * q;
        out += (dv - i * km * v).norm_sqr();
        inc += (dv + i * km * v).norm_sqr();
        cnt += 1.0;
    }
    if cnt == 0.0 {
        return (0.0, 0.0);
    }
    (out / cnt, inc / cnt)
}

fn classify(out: f64, inc: f64) -> WaveClass {
    let total = out + inc;
    if out <= 1e-6 * total {
        WaveClass::Outgoing
    } else if inc <= 1e-6 * total {
        WaveClass::Incoming
    } else {
        WaveClass::Standing
    }
}

/// Solves one open channel of a radially perturbed end with unit incoming
/// data and samples `u` on `[wall, r_match]` with spacing about `dr`.
pub fn solve_radial(
    profile: &EndProfile,
    m: usize,
    k: f64,
    pert: &Perturbation,
    dr: f64,
    opts: &ScatterOptions,
) -> Result<RadialSolution> {
    profile.validate()?;
    pert.validate(profile)?;
    if !pert.is_radial() {
        return Err(Error::InvalidSpec("channel solves need a radial perturbation".into()));
    }
    if m >= profile.channels() || !profile.is_open(m, k) {
        return Err(Error::InvalidSpec(format!("channel {m} is not open at k = {k}")));
    }
    profile.check_energy(k, opts.threshold_tol)?;
    // Radial perturbations decouple the channels: solve channel `m` alone.
    let single = EndProfile { lambdas: vec![profile.lambdas[m]], ..profile.clone() };
    let r_end = profile.matching_radius(k).max(pert.support_end(profile.wall));
    let s = match_at(&single, pert, k, r_end, &opts.ode)?;
    let s2 = match_at(&single, pert, k, 2.0 * r_end, &opts.ode)?;
    let drift = (s.matrix[(0, 0)] - s2.matrix[(0, 0)]).norm();
    if !(drift <= opts.drift_tol) {
        return Err(Error::NonConvergedMatching { drift });
    }
    let b = s.matrix[(0, 0)];
    let a = Complex64::new(1.0, 0.0);

    // Integrate the wall solution on the sample grid and scale it to the
    // matched amplitude at the far end.
    let samples = ((r_end - profile.wall) / dr).ceil().max(1.0) as usize;
    let h = (r_end - profile.wall) / samples as f64;
    let mut rs = Vec::with_capacity(samples + 1);
    let mut vs = Vec::with_capacity(samples + 1);
    let slope = profile.kind.log_rho_prime(profile.wall) / 4.0;
    let mut y = [1.0, slope];
    rs.push(profile.wall);
    vs.push((y[0], y[1]));
    for j in 1..=samples {
        let (t0, t1) = (profile.wall + (j - 1) as f64 * h, profile.wall + j as f64 * h);
        integrate(
            |t, y, d| {
                d[0] = y[1];
                d[1] = pert.channel_scalar(profile, m, k, t) * y[0];
            },
            t0,
            t1,
            &mut y,
            &opts.ode,
        )?;
        rs.push(t1);
        vs.push((y[0], y[1]));
    }
    let (wm, dwm) = profile.model_wave(m, k, false, r_end)?;
    let (wp, dwp) = profile.model_wave(m, k, true, r_end)?;
    let target = (a * wm + b * wp, a * dwm + b * dwp);
    let (ye, dye) = *vs.last().expect("at least one sample");
    // Least-squares scale matching both value and derivative.
    let scale = (target.0 * ye + target.1 * dye) / (ye * ye + dye * dye);
    let (mut u, mut du) = (Vec::with_capacity(rs.len()), Vec::with_capacity(rs.len()));
    for (&r, &(v, dv)) in rs.iter().zip(&vs) {
        let q = profile.kind.rho(r).powf(-0.25);
        let lp = profile.kind.log_rho_prime(r) / 4.0;
        u.push(scale * v * q);
        du.push(scale * (dv - lp * v) * q);
    }
    let (out, inc) = radiation_residuals(profile, m, k, &rs, &u, &du, pert.support_end(profile.wall));
    Ok(RadialSolution { channel: m, k, r: rs, u, du, a, b, class: classify(out, inc) })
}

/// `(1/R) int_{wall}^{R} |u|^2 rho^{1/2} dr` over the sampled radii.
pub fn b_star_seminorm(profile: &EndProfile, r: &[f64], u: &[Complex64], radius: f64) -> f64 {
    let mut acc = 0.0;
    for j in 1..r.len() {
        if r[j] > radius + 1e-12 {
            break;
        }
        let f0 = u[j - 1].norm_sqr() * profile.kind.rho(r[j - 1]).sqrt();
        let f1 = u[j].norm_sqr() * profile.kind.rho(r[j]).sqrt();
        acc += 0.5 * (f0 + f1) * (r[j] - r[j - 1]);
    }
    acc / radius
}
