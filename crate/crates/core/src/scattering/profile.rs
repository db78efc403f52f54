//! Warped-product end profiles, radial perturbations and exterior model waves.
//!
//! Channel `m` of an end `dr^2 + rho(r) h` reduces, after the substitution
//! `u = rho^{-1/4} v`, to `-v'' + V_m(r) v = k^2 v` with
//! `V_m = lambda_m / rho + (rho^{1/4})'' / rho^{1/4} - E_0` outside the
//! perturbation. All model waves below are expressed in the `v` variable and
//! carry unit flux.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ode::{integrate, OdeOptions};

/// Radius of the interface between the interior model and the exterior end.
pub const INTERFACE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// `rho = e^{2r}`.
    HyperbolicRegular,
    /// `rho = r^2`.
    Euclidean,
    /// `rho = 1`.
    Cylindrical,
    /// `rho = e^{-2r}`.
    Cusp,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] =
        [ProfileKind::HyperbolicRegular, ProfileKind::Euclidean, ProfileKind::Cylindrical, ProfileKind::Cusp];

    pub fn rho(self, r: f64) -> f64 {
        match self {
            Self::HyperbolicRegular => (2.0 * r).exp(),
            Self::Euclidean => r * r,
            Self::Cylindrical => 1.0,
            Self::Cusp => (-2.0 * r).exp(),
        }
    }

    /// `rho' / rho`.
    pub fn log_rho_prime(self, r: f64) -> f64 {
        match self {
            Self::HyperbolicRegular => 2.0,
            Self::Euclidean => 2.0 / r,
            Self::Cylindrical => 0.0,
            Self::Cusp => -2.0,
        }
    }

    /// `(rho^{1/4})'' / rho^{1/4}`.
    pub fn liouville(self, r: f64) -> f64 {
        match self {
            Self::HyperbolicRegular | Self::Cusp => 0.25,
            Self::Euclidean => -0.25 / (r * r),
            Self::Cylindrical => 0.0,
        }
    }

    pub fn default_e0(self) -> f64 {
        match self {
            Self::HyperbolicRegular | Self::Cusp => 0.25,
            Self::Euclidean | Self::Cylindrical => 0.0,
        }
    }

    pub fn default_wall(self) -> f64 {
        match self {
            Self::Euclidean => 1.0,
            _ => 0.0,
        }
    }

    pub fn default_r_match(self) -> f64 {
        match self {
            Self::HyperbolicRegular => 8.0,
            Self::Euclidean => 40.0,
            Self::Cylindrical | Self::Cusp => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::HyperbolicRegular => "hyperbolic-regular",
            Self::Euclidean => "euclidean",
            Self::Cylindrical => "cylindrical",
            Self::Cusp => "cusp",
        }
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hyperbolic-regular" | "hyperbolic" => Ok(Self::HyperbolicRegular),
            "euclidean" => Ok(Self::Euclidean),
            "cylindrical" | "cylinder" => Ok(Self::Cylindrical),
            "cusp" => Ok(Self::Cusp),
            other => Err(Error::ConfigInvalid(format!("unknown profile kind `{other}`"))),
        }
    }
}

/// A model end with a Neumann wall at `wall` and the cross-section spectrum
/// `lambdas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndProfile {
    pub kind: ProfileKind,
    pub lambdas: Vec<f64>,
    pub e0: f64,
    pub wall: f64,
    pub r_match: f64,
}

impl EndProfile {
    pub fn new(kind: ProfileKind, lambdas: Vec<f64>) -> Result<Self> {
        let p = Self {
            kind,
            lambdas,
            e0: kind.default_e0(),
            wall: kind.default_wall(),
            r_match: kind.default_r_match(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_r_match(mut self, r_match: f64) -> Result<Self> {
        self.r_match = r_match;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::InvalidSpec("profile needs at least one channel".into()));
        }
        if self.lambdas[0] != 0.0 || self.lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSpec(
                "cross-section eigenvalues must start at 0 and be nondecreasing".into(),
            ));
        }
        if !(self.r_match > 1.0 && self.r_match >= INTERFACE) {
            return Err(Error::InvalidSpec(format!("matching radius {} must exceed max(1, {INTERFACE})", self.r_match)));
        }
        if !(self.wall >= 0.0 && self.wall < INTERFACE) || (self.kind == ProfileKind::Euclidean && self.wall <= 0.0) {
            return Err(Error::InvalidSpec(format!("wall radius {} is not admissible", self.wall)));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.lambdas.len()
    }

    /// Unperturbed channel potential `V_m(r)`.
    pub fn potential(&self, m: usize, r: f64) -> f64 {
        self.lambdas[m] / self.kind.rho(r) + self.kind.liouville(r) - self.e0
    }

    /// Limit of `V_m` at infinity; `None` for channels that are closed at
    /// every energy.
    pub fn threshold(&self, m: usize) -> Option<f64> {
        let lam = self.lambdas[m];
        match self.kind {
            ProfileKind::Cylindrical => Some(lam - self.e0),
            ProfileKind::HyperbolicRegular => Some(0.25 - self.e0),
            ProfileKind::Euclidean => Some(-self.e0),
            ProfileKind::Cusp if lam == 0.0 => Some(0.25 - self.e0),
            ProfileKind::Cusp => None,
        }
    }

    pub fn is_open(&self, m: usize, k: f64) -> bool {
        self.threshold(m).is_some_and(|t| k * k > t)
    }

    pub fn open_channels(&self, k: f64) -> Vec<usize> {
        (0..self.channels()).filter(|&m| self.is_open(m, k)).collect()
    }

    /// Rejects `k <= 0` and energies within `tol` of a channel threshold.
    pub fn check_energy(&self, k: f64, tol: f64) -> Result<()> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidSpec(format!("wavenumber must be positive, got {k}")));
        }
        for m in 0..self.channels() {
            if let Some(t) = self.threshold(m) {
                if (k * k - t).abs() < tol {
                    return Err(Error::ThresholdProximity { k2: k * k, threshold: t, guard: tol });
                }
            }
        }
        Ok(())
    }

    /// Local channel wavenumber at infinity, `sqrt(k^2 - threshold)`.
    pub fn channel_k(&self, m: usize, k: f64) -> f64 {
        let t = self.threshold(m).unwrap_or(f64::INFINITY);
        (k * k - t).sqrt()
    }

    /// Matching radius actually used at wavenumber `k`.
    pub fn matching_radius(&self, k: f64) -> f64 {
        match self.kind {
            ProfileKind::Euclidean => {
                let lam = self.lambdas.last().copied().unwrap_or(0.0);
                self.r_match.max((20.0 + lam) / k)
            }
            _ => self.r_match,
        }
    }

    /// Unit-flux exterior wave `e^{+-i k_m r}` (with the profile's
    /// correction series) and its derivative, in the `v` variable.
    pub fn model_wave(&self, m: usize, k: f64, outgoing: bool, r: f64) -> Result<(Complex64, Complex64)> {
        if !self.is_open(m, k) {
            return Err(Error::InvalidSpec(format!("channel {m} is closed at k = {k}")));
        }
        let s = if outgoing { 1.0 } else { -1.0 };
        let km = self.channel_k(m, k);
        let norm = 1.0 / km.sqrt();
        let i = Complex64::i();
        let phase = (i * s * km * r).exp();
        let (w, dw) = match self.kind {
            ProfileKind::Cylindrical | ProfileKind::Cusp => (phase, i * s * km * phase),
            ProfileKind::HyperbolicRegular => hyperbolic_series(self.lambdas[m], km, s, r),
            ProfileKind::Euclidean => euclidean_series(self.lambdas[m] - 0.25, km, s, r)?,
        };
        Ok((w * norm, dw * norm))
    }

    /// Log-derivative `v'/v` of the decaying exterior solution of a closed
    /// channel at `r`.
    pub fn decaying_log_derivative(&self, m: usize, k: f64, r: f64, opts: &OdeOptions) -> Result<f64> {
        match self.kind {
            ProfileKind::Cylindrical => Ok(-(self.lambdas[m] - self.e0 - k * k).sqrt()),
            ProfileKind::Cusp => {
                let kappa = self.lambdas[m].sqrt();
                let z_far = 60.0 + k * k;
                let r_far = (z_far / kappa).ln().max(r);
                let mut l = [k_bessel_log_derivative(k, kappa * r_far.exp())];
                let lam = self.lambdas[m];
                let e0 = self.e0;
                integrate(
                    |t, y, d| d[0] = lam * (2.0 * t).exp() + 0.25 - e0 - k * k - y[0] * y[0],
                    r_far,
                    r,
                    &mut l,
                    opts,
                )?;
                Ok(l[0])
            }
            _ => Err(Error::InvalidSpec(format!("{} ends have no closed channels", self.kind.name()))),
        }
    }
}

/// `e^{s i k r} sum_j c_j e^{-2jr}`: the modified Bessel function
/// `I_{-s i k}(sqrt(lambda) e^{-r})` up to a constant.
fn hyperbolic_series(lambda: f64, k: f64, s: f64, r: f64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    let x = (-2.0 * r).exp() * lambda / 4.0;
    let mut c = Complex64::new(1.0, 0.0);
    let mut w = Complex64::new(0.0, 0.0);
    let mut dw = Complex64::new(0.0, 0.0);
    let mut xp = 1.0;
    for j in 0..200 {
        if j > 0 {
            c /= (j as f64) * (j as f64 - s * i * k);
            xp *= x;
        }
        let term = c * xp;
        w += term;
        dw += term * (s * i * k - 2.0 * j as f64);
        if term.norm() < 1e-18 * w.norm() {
            break;
        }
    }
    let phase = (i * s * k * r).exp();
    (w * phase, dw * phase)
}

/// Large-`r` expansion of `e^{s i k r} sum_j c_j r^{-j}` solving
/// `-v'' + mu v / r^2 = k^2 v`, truncated at its smallest term.
fn euclidean_series(mu: f64, k: f64, s: f64, r: f64) -> Result<(Complex64, Complex64)> {
    let i = Complex64::i();
    let ik = i * s * k;
    let mut c = Complex64::new(1.0, 0.0);
    let mut g = Complex64::new(0.0, 0.0);
    let mut dg = Complex64::new(0.0, 0.0);
    let mut last = f64::INFINITY;
    let mut j = 0usize;
    loop {
        let term = c * r.powi(-(j as i32));
        let mag = term.norm();
        if mag > last {
            break;
        }
        g += term;
        dg += term * (-(j as f64) / r);
        last = mag;
        if mag < 1e-17 || j > 400 {
            break;
        }
        let jf = j as f64;
        c *= (jf * (jf + 1.0) - mu) / (2.0 * ik * (jf + 1.0));
        j += 1;
    }
    if last > 1e-12 {
        return Err(Error::NonConvergedMatching { drift: last });
    }
    let phase = (ik * r).exp();
    Ok((g * phase, (dg + ik * g) * phase))
}

/// `d ln K_{ik}(z) / d ln z` from the large-argument expansion.
pub(crate) fn k_bessel_log_derivative(k: f64, z: f64) -> f64 {
    let (s, ds) = k_bessel_series(k, z);
    z * (-0.5 / z - 1.0 + ds / s)
}

/// `sum_j a_j z^{-j}` of `K_{ik}(z) ~ sqrt(pi / 2z) e^{-z} sum_j a_j z^{-j}` and its
/// `z`-derivative.
pub(crate) fn k_bessel_series(k: f64, z: f64) -> (f64, f64) {
    let mu = -4.0 * k * k;
    let mut a = 1.0;
    let mut s = 1.0;
    let mut ds = 0.0;
    let mut last = 1.0f64;
    for j in 1..200 {
        let jf = j as f64;
        a *= (mu - (2.0 * jf - 1.0).powi(2)) / (8.0 * jf);
        let term = a * z.powi(-j);
        if term.abs() > last || term.abs() < 1e-18 {
            break;
        }
        s += term;
        ds += -jf * term / z;
        last = term.abs();
    }
    (s, ds)
}

/// Complex Gamma function (Lanczos, g = 7).
pub(crate) fn gamma(z: Complex64) -> Complex64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z.re < 0.5 {
        let s = (Complex64::new(PI, 0.0) * z).sin();
        return PI / (s * gamma(1.0 - z));
    }
    let z = z - 1.0;
    let mut x = Complex64::new(COEF[0], 0.0);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

/// Smooth bump `amp * exp(1 - 1/(1 - s^2))`, `s = (r - center)/width`,
/// supported on `(center - width, center + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amp: f64,
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn value(&self, r: f64) -> f64 {
        let s = (r - self.center) / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            self.amp * (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }
}

/// Channel coupling `bump(r) * matrix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub bump: Bump,
    pub matrix: Vec<Vec<f64>>,
}

/// Compactly supported perturbation of the end inside `r < INTERFACE`:
/// a potential `q`, a refractive index `1 + index`, and an optional
/// (non-radial) channel coupling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub potential: Option<Bump>,
    pub index: Option<Bump>,
    pub coupling: Option<Coupling>,
}

impl Perturbation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_radial(&self) -> bool {
        self.coupling.is_none()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_none() && self.index.is_none() && self.coupling.is_none()
    }

    fn bumps(&self) -> impl Iterator<Item = &Bump> {
        self.potential.iter().chain(self.index.iter()).chain(self.coupling.iter().map(|c| &c.bump))
    }

    /// Right end of the support (the wall radius when empty).
    pub fn support_end(&self, wall: f64) -> f64 {
        self.bumps().map(|b| b.support().1).fold(wall, f64::max)
    }

    pub fn validate(&self, profile: &EndProfile) -> Result<()> {
        for b in self.bumps() {
            let (lo, hi) = b.support();
            if !(b.width > 0.0 && b.amp.is_finite()) || lo < profile.wall - 1e-12 || hi > INTERFACE + 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "perturbation support [{lo}, {hi}] must lie in [{}, {INTERFACE}]",
                    profile.wall
                )));
            }
        }
        if let Some(b) = &self.index {
            if b.amp <= -1.0 {
                return Err(Error::InvalidSpec("refractive index must stay positive".into()));
            }
        }
        if let Some(c) = &self.coupling {
            let n = profile.channels();
            let ok = c.matrix.len() == n
                && c.matrix.iter().all(|row| row.len() == n)
                && (0..n).all(|i| (0..n).all(|j| c.matrix[i][j] == c.matrix[j][i]));
            if !ok {
                return Err(Error::InvalidSpec(format!("coupling must be a symmetric {n}x{n} matrix")));
            }
        }
        Ok(())
    }

    /// Full channel potential `V(r) - k^2` (the matrix `P` in `v'' = P v`).
    pub fn channel_matrix(&self, profile: &EndProfile, k: f64, r: f64) -> DMatrix<f64> {
        let n = profile.channels();
        let q = self.potential.map_or(0.0, |b| b.value(r));
        let dn = self.index.map_or(0.0, |b| b.value(r));
        let mut p = DMatrix::zeros(n, n);
        for m in 0..n {
            p[(m, m)] = profile.potential(m, r) + q - (k * k + profile.e0) * dn - k * k;
        }
        if let Some(c) = &self.coupling {
            let s = c.bump.value(r);
            if s != 0.0 {
                for i in 0..n {
                    for j in 0..n {
                        p[(i, j)] += s * c.matrix[i][j];
                    }
                }
            }
        }
        p
    }

    /// Diagonal entry `m` of [`Self::channel_matrix`] for radial perturbations.
    pub fn channel_scalar(&self, profile: &EndProfile, m: usize, k: f64, r: f64) -> f64 {
        let q = self.potential.map_or(0.0, |b| b.value(r));
        let dn = self.index.map_or(0.0, |b| b.value(r));
        profile.potential(m, r) + q - (k * k + profile.e0) * dn - k * k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(p: &EndProfile, m: usize, k: f64, out: bool, r: f64) -> f64 {
        // Central second difference of the model wave against the ODE.
        let h = 1e-3;
        let (w0, _) = p.model_wave(m, k, out, r - h).unwrap();
        let (w1, d1) = p.model_wave(m, k, out, r).unwrap();
        let (w2, _) = p.model_wave(m, k, out, r + h).unwrap();
        let (wp, _) = p.model_wave(m, k, out, r + 1e-6).unwrap();
        let (wm, _) = p.model_wave(m, k, out, r - 1e-6).unwrap();
        let dd = (w2 - 2.0 * w1 + w0) / (h * h);
        let lhs = -dd + (p.potential(m, r) - k * k) * w1;
        let dnum = (wp - wm) / 2e-6;
        (lhs.norm() / w1.norm()).max((dnum - d1).norm() / d1.norm() * 1e-2)
    }

    #[test]
    fn model_waves_solve_the_channel_equation() {
        for (kind, lam, r) in [
            (ProfileKind::HyperbolicRegular, 3.0, 0.4),
            (ProfileKind::Euclidean, 4.0, 30.0),
            (ProfileKind::Cylindrical, 2.0, 1.0),
            (ProfileKind::Cusp, 0.0, 1.0),
        ] {
            let p = EndProfile::new(kind, vec![0.0, lam]).unwrap();
            let m = if kind == ProfileKind::Cusp { 0 } else { 1 };
            for out in [true, false] {
                let res = residual(&p, m, 2.3, out, r);
                assert!(res < 1e-5, "{kind:?} residual {res}");
            }
        }
    }

    #[test]
    fn model_waves_have_unit_flux() {
        for kind in ProfileKind::ALL {
            let p = EndProfile::new(kind, vec![0.0, 1.5]).unwrap();
            let r = p.matching_radius(1.7);
            let (wp, dwp) = p.model_wave(0, 1.7, true, r).unwrap();
            let (wm, dwm) = p.model_wave(0, 1.7, false, r).unwrap();
            let wr = wm * dwp - dwm * wp;
            assert!((wr - Complex64::new(0.0, 2.0)).norm() < 1e-10, "{kind:?} wronskian {wr}");
        }
    }

    #[test]
    fn thresholds_and_open_channels() {
        let p = EndProfile::new(ProfileKind::Cylindrical, vec![0.0, PI * PI]).unwrap();
        assert_eq!(p.open_channels(3.0), vec![0]);
        assert_eq!(p.open_channels(3.2), vec![0, 1]);
        assert!(matches!(p.check_energy(PI + 1e-5, 1e-3), Err(Error::ThresholdProximity { .. })));
        let c = EndProfile::new(ProfileKind::Cusp, vec![0.0, 4.0 * PI * PI]).unwrap();
        assert_eq!(c.open_channels(50.0), vec![0]);
        assert!(EndProfile::new(ProfileKind::Cusp, vec![1.0]).is_err());
        assert!(EndProfile::new(ProfileKind::Cusp, vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn gamma_matches_known_values() {
        assert!((gamma(Complex64::new(5.0, 0.0)) - 24.0).norm() < 1e-12);
        assert!((gamma(Complex64::new(0.5, 0.0)) - PI.sqrt()).norm() < 1e-13);
        // |Gamma(1 + i y)|^2 = pi y / sinh(pi y).
        let y = 1.3;
        let g = gamma(Complex64::new(1.0, y));
        assert!((g.norm_sqr() - PI * y / (PI * y).sinh()).abs() < 1e-13);
    }

    #[test]
    fn cusp_decaying_log_derivative_matches_riccati_free_limit() {
        let p = EndProfile::new(ProfileKind::Cusp, vec![0.0, 4.0 * PI * PI]).unwrap();
        let k = 1.2;
        let r: f64 = 3.5;
        let z = 2.0 * PI * r.exp();
        let direct = k_bessel_log_derivative(k, z);
        let integrated = p.decaying_log_derivative(1, k, r, &OdeOptions::default()).unwrap();
        assert!((direct - integrated).abs() < 1e-9 * direct.abs());
    }
}
