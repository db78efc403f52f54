//! Plain-text (TOML) experiment configuration.
//!
//! ```toml
//! kind = "reconstruct"
//! seed = 7
//! out_dir = "runs/square"
//!
//! [grid]
//! dim = 2
//! extent = [1.0, 1.0]
//! nodes = [21, 21]
//! speed = { kind = "constant", c = 1.0 }
//!
//! [tolerances]
//! eps_rel = 1e-3
//! l_max = 4
//! dr = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, SpeedField};
use crate::reconstruction::SearchSpec;
use crate::scattering::{Bump, Coupling, Perturbation, ProfileKind};
use crate::wave::{BasisSpec, DEFAULT_CFL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Response,
    Jtn,
    Reconstruct,
    Scatter,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub alpha_ladder: Vec<f64>,
    /// Positivity threshold relative to the dictionary's largest energy.
    pub eps_rel: f64,
    pub l_max: usize,
    pub dr: f64,
    /// Distance to scattering thresholds below which a wavenumber is refused.
    pub tol_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            alpha_ladder: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            eps_rel: 1e-3,
            l_max: 4,
            dr: 0.1,
            tol_threshold: 1e-3,
        }
    }
}

/// One slice of a localized inner product, by boundary node list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub patch: Vec<usize>,
    pub t_minus: f64,
    pub t_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JtnConfig {
    pub slices: Vec<SliceConfig>,
    /// Basis indices of the two sources; each source is a single basis element.
    #[serde(default)]
    pub sources: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    pub profile: ProfileKind,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// `a:b:n`, `n` evenly spaced wavenumbers from `a` to `b`.
    pub kgrid: String,
    #[serde(default)]
    pub e0: Option<f64>,
    #[serde(default)]
    pub r_match: Option<f64>,
    #[serde(default)]
    pub potential: Option<Bump>,
    #[serde(default)]
    pub index: Option<Bump>,
    #[serde(default)]
    pub coupling: Option<Coupling>,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0]
}

impl ScatterConfig {
    pub fn perturbation(&self) -> Perturbation {
        Perturbation { potential: self.potential, index: self.index, coupling: self.coupling.clone() }
    }
}

/// Parses `a:b:n` into `n` evenly spaced points (`a` alone when `n = 1`).
pub fn parse_kgrid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::ConfigInvalid(format!("k grid `{s}` is not of the form a:b:n"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !(a > 0.0) || !(b >= a) {
        return Err(Error::ConfigInvalid(format!("k grid `{s}` needs 0 < a <= b and n >= 1")));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub grid: Option<DomainSpec>,
    #[serde(default)]
    pub basis: BasisSpec,
    /// Data horizon `T`; traces are recorded on `[0, 2T]`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Existing response operator file, used instead of assembling one.
    #[serde(default)]
    pub response: Option<PathBuf>,
    #[serde(default)]
    pub search: Option<SearchSpec>,
    #[serde(default)]
    pub jtn: Option<JtnConfig>,
    #[serde(default)]
    pub scatter: Option<ScatterConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

impl ExperimentConfig {
    /// Parses and validates; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.message().to_string()))?;
        for p in [Some(&mut cfg.out_dir), cfg.response.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::UpstreamArtifactMissing(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Builtin flat-square preset used by `validate`.
    pub fn flat_square_preset() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Validate,
            seed: 1,
            out_dir: default_out_dir(),
            grid: Some(DomainSpec::square(1.0, 11, SpeedField::Constant { c: 1.0 })),
            basis: BasisSpec::with_stride(2),
            horizon: Some(1.0),
            cfl: DEFAULT_CFL,
            tolerances: Tolerances::default(),
            response: None,
            search: None,
            jtn: None,
            scatter: None,
        }
    }

    /// Search parameters: the `[search]` table when present, otherwise the
    /// defaults with the tolerances applied.
    pub fn search_spec(&self) -> SearchSpec {
        let t = &self.tolerances;
        self.search.clone().unwrap_or(SearchSpec { dr: t.dr, l_max: t.l_max, eps_rel: t.eps_rel, ..Default::default() })
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::ConfigInvalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("eps_rel", t.eps_rel)?;
        positive("dr", t.dr)?;
        positive("tol_threshold", t.tol_threshold)?;
        positive("cfl", self.cfl)?;
        if t.l_max == 0 {
            return Err(Error::ConfigInvalid("l_max must be positive".into()));
        }
        if t.alpha_ladder.is_empty() {
            return Err(Error::ConfigInvalid("alpha_ladder is empty".into()));
        }
        for &a in &t.alpha_ladder {
            positive("alpha_ladder entry", a)?;
        }
        if let Some(h) = self.horizon {
            positive("horizon", h)?;
        }
        if let Some(p) = &self.response {
            if !p.exists() {
                return Err(Error::UpstreamArtifactMissing(p.display().to_string()));
            }
        }
        let needs_data = matches!(self.kind, ExperimentKind::Response | ExperimentKind::Jtn | ExperimentKind::Reconstruct);
        if needs_data && self.response.is_none() && (self.grid.is_none() || self.horizon.is_none()) {
            return Err(Error::ConfigInvalid("need either `response` or both `grid` and `horizon`".into()));
        }
        if self.kind == ExperimentKind::Response && (self.grid.is_none() || self.horizon.is_none()) {
            return Err(Error::ConfigInvalid("response runs need `grid` and `horizon`".into()));
        }
        match self.kind {
            ExperimentKind::Jtn if self.jtn.is_none() => {
                return Err(Error::ConfigInvalid("jtn runs need a [jtn] table".into()));
            }
            ExperimentKind::Scatter => {
                let s = self.scatter.as_ref().ok_or_else(|| Error::ConfigInvalid("scatter runs need a [scatter] table".into()))?;
                parse_kgrid(&s.kgrid)?;
            }
            ExperimentKind::Reconstruct => self.search_spec().validate()?,
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECONSTRUCT: &str = r#"
kind = "reconstruct"
seed = 3
horizon = 1.5

[grid]
dim = 2
extent = [1.0, 1.0]
nodes = [21, 21]
speed = { kind = "linear", c0 = 1.0, gx = 0.2, gy = 0.0 }

[tolerances]
eps_rel = 1e-3
l_max = 4
dr = 0.1
"#;

    #[test]
    fn parses_reconstruct_config() {
        let cfg = ExperimentConfig::from_toml(RECONSTRUCT, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Reconstruct);
        assert_eq!(cfg.out_dir, Path::new("/tmp/."));
        assert_eq!(cfg.search_spec().l_max, 4);
        assert_eq!(cfg.grid.unwrap().speed, SpeedField::Linear { c0: 1.0, gx: 0.2, gy: 0.0 });
    }

    #[test]
    fn negative_threshold_is_rejected() {
        let text = RECONSTRUCT.replace("eps_rel = 1e-3", "eps_rel = -1e-3");
        assert!(matches!(ExperimentConfig::from_toml(&text, Path::new(".")), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn missing_kind_tables_are_rejected() {
        for kind in ["jtn", "scatter"] {
            let text = format!("kind = \"{kind}\"\nhorizon = 1.0\n[grid]\ndim = 1\nextent = [1.0]\nnodes = [11]\nspeed = {{ kind = \"constant\", c = 1.0 }}\n");
            assert!(matches!(ExperimentConfig::from_toml(&text, Path::new(".")), Err(Error::ConfigInvalid(_))), "{kind}");
        }
    }

    #[test]
    fn missing_response_file_is_reported() {
        let text = "kind = \"reconstruct\"\nresponse = \"does-not-exist.bin\"\n";
        assert!(matches!(
            ExperimentConfig::from_toml(text, Path::new("/nonexistent")),
            Err(Error::UpstreamArtifactMissing(_))
        ));
    }

    #[test]
    fn kgrid_parsing() {
        assert_eq!(parse_kgrid("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_kgrid("0.5:0.5:1").unwrap(), vec![0.5]);
        for bad in ["1:2", "a:2:3", "2:1:3", "0:1:3", "1:2:0"] {
            assert!(parse_kgrid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scatter_table() {
        let text = r#"
kind = "scatter"
[scatter]
profile = "cusp"
lambdas = [0.0, 39.47]
kgrid = "0.5:2.0:4"
potential = { amp = 2.0, center = 1.0, width = 0.5 }
"#;
        let cfg = ExperimentConfig::from_toml(text, Path::new(".")).unwrap();
        let s = cfg.scatter.unwrap();
        assert_eq!(s.profile, ProfileKind::Cusp);
        assert!(s.perturbation().potential.is_some());
    }

    #[test]
    fn preset_is_valid() {
        ExperimentConfig::flat_square_preset().validate().unwrap();
    }
}
