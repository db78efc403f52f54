//! Experiment runner: executes one configured stage and writes its artifacts
//! and a JSON run manifest into the output directory.
//!
//! All files go through [`write_atomic`]. Artifacts other than the manifest
//! depend only on the config, so reruns reproduce them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bc::{blago_inner_product, BoundaryDataSet, Dictionary, InfluenceEngine};
use crate::config::{parse_kgrid, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, BoundaryPatch, InfluenceSpec, Slice};
use crate::io::{fmt, write_atomic, write_csv};
use crate::reconstruction::{build_representation, metric_matrix};
use crate::scattering::{
    compute_smatrix, nd_map_interior, ndmap_to_smatrix, smatrix_to_ndmap, EndProfile, Perturbation,
    ProfileKind, ScatterOptions,
};
use crate::wave::{assemble_response, read_response, read_response_for, write_response, WaveSolver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ExperimentKind,
    /// SHA-256 of the canonical JSON form of the config.
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suites: Vec<SuiteResult>,
}

impl Manifest {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

#[derive(Default)]
struct Outputs {
    metrics: BTreeMap<String, f64>,
    artifacts: Vec<PathBuf>,
    suites: Vec<SuiteResult>,
}

/// Runs the configured stage. Returns the manifest, also written to
/// `out_dir/manifest.json`.
pub fn run(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let start = Instant::now();
    fs::create_dir_all(&cfg.out_dir)?;
    let mut out = Outputs::default();
    match cfg.kind {
        ExperimentKind::Response => run_response(cfg, &mut out)?,
        ExperimentKind::Jtn => run_jtn(cfg, &mut out)?,
        ExperimentKind::Reconstruct => run_reconstruct(cfg, &mut out)?,
        ExperimentKind::Scatter => run_scatter(cfg, &mut out)?,
        ExperimentKind::Validate => run_validate(cfg, &mut out)?,
    }
    let manifest = Manifest {
        kind: cfg.kind,
        config_hash: config_hash(cfg),
        versions: BTreeMap::from([
            ("wavebc".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("response_format".to_string(), "1".to_string()),
        ]),
        seed: cfg.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        metrics: out.metrics,
        artifacts: out.artifacts,
        suites: out.suites,
    };
    let path = cfg.out_dir.join(MANIFEST_FILE);
    write_atomic(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(|e| Error::Io(e.into()))?;
        Ok(())
    })?;
    Ok(manifest)
}

/// Boundary data from the configured response file, or assembled from the grid.
pub fn load_data(cfg: &ExperimentConfig) -> Result<BoundaryDataSet> {
    let op = match (&cfg.response, &cfg.grid) {
        (Some(path), Some(grid)) => read_response_for(path, &build_grid(grid)?.hash())?,
        (Some(path), None) => read_response(path)?,
        (None, Some(grid)) => {
            let g = build_grid(grid)?;
            let horizon = cfg.horizon.ok_or_else(|| Error::ConfigInvalid("missing horizon".into()))?;
            assemble_response(&g, &cfg.basis, horizon, cfg.cfl)?
        }
        (None, None) => return Err(Error::ConfigInvalid("need `response` or `grid`".into())),
    };
    let horizon = cfg.horizon.unwrap_or(op.header.horizon);
    let boundary = op.header.boundary.clone();
    BoundaryDataSet::new(op, boundary, horizon)
}

fn run_response(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let d = load_data(cfg)?;
    let path = cfg.out_dir.join("response.bin");
    write_response(&path, d.response())?;
    out.metrics.insert("n_basis".into(), d.n_basis() as f64);
    out.metrics.insert("boundary_nodes".into(), d.boundary().len() as f64);
    out.metrics.insert("dt".into(), d.time_grid().dt);
    out.artifacts.push(path);
    Ok(())
}

fn run_jtn(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let jtn = cfg.jtn.as_ref().expect("validated");
    let d = load_data(cfg)?;
    let nb = d.boundary().len();
    let slices = jtn
        .slices
        .iter()
        .map(|s| Ok(Slice { patch: BoundaryPatch::new(s.patch.clone(), nb)?, t_minus: s.t_minus, t_plus: s.t_plus }))
        .collect::<Result<Vec<_>>>()?;
    let spec = InfluenceSpec::new(slices, d.horizon())?;
    let alpha = cfg.tolerances.alpha_ladder.iter().cloned().fold(f64::INFINITY, f64::min);
    let engine = InfluenceEngine::new(&d, d.horizon(), alpha, Dictionary::full(&d))?;
    let threshold = cfg.tolerances.eps_rel * engine.energy_max();
    let pos = engine.positivity(&spec, threshold)?;
    let mut rows = vec![
        vec!["positivity".to_string(), fmt(pos.value)],
        vec!["threshold".to_string(), fmt(threshold)],
        vec!["argmax".to_string(), pos.argmax.to_string()],
    ];
    if let Some([a, b]) = jtn.sources {
        let unit = |i: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; d.n_basis()];
            *v.get_mut(i).ok_or_else(|| Error::ConfigInvalid(format!("source index {i} out of range")))? = 1.0;
            Ok(v)
        };
        let j = engine.j(&unit(a)?, &unit(b)?, &spec)?;
        rows.push(vec!["j".to_string(), fmt(j)]);
        out.metrics.insert("j".into(), j);
    }
    let path = cfg.out_dir.join("jtn.csv");
    write_csv(&path, &["quantity", "value"], rows)?;
    out.metrics.insert("positivity".into(), pos.value);
    out.metrics.insert("threshold".into(), threshold);
    out.artifacts.push(path);
    Ok(())
}

fn run_reconstruct(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let d = load_data(cfg)?;
    let rep = build_representation(&d, &cfg.search_spec())?;
    let k = rep.sample.len();
    let mut header = vec!["id".to_string()];
    header.extend(rep.sample.iter().map(|z| format!("z{z}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = rep.members.iter().enumerate().map(|(i, m)| {
        std::iter::once(i.to_string()).chain(m.values.iter().map(|&v| fmt(v))).collect::<Vec<_>>()
    });
    let path = cfg.out_dir.join("representation.csv");
    write_csv(&path, &header, rows)?;
    out.artifacts.push(path);

    let metric = metric_matrix(&rep);
    let path = cfg.out_dir.join("metric.csv");
    write_csv(
        &path,
        &["id_a", "id_b", "d_inf"],
        metric.iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().skip(i + 1).map(move |(j, &v)| vec![i.to_string(), j.to_string(), fmt(v)])
        }),
    )?;
    out.artifacts.push(path);
    out.metrics.insert("members".into(), rep.len() as f64);
    out.metrics.insert("sample_points".into(), k as f64);
    out.metrics.insert("tests".into(), rep.tests as f64);
    out.metrics.insert("incomplete".into(), if rep.incomplete { 1.0 } else { 0.0 });
    Ok(())
}

fn run_scatter(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let s = cfg.scatter.as_ref().expect("validated");
    let mut profile = EndProfile::new(s.profile, s.lambdas.clone())?;
    if let Some(e0) = s.e0 {
        profile.e0 = e0;
    }
    if let Some(r) = s.r_match {
        profile = profile.with_r_match(r)?;
    }
    let pert = s.perturbation();
    let opts = ScatterOptions { threshold_tol: cfg.tolerances.tol_threshold, ..Default::default() };
    let mut rows = Vec::new();
    let mut defect = 0.0f64;
    for k in parse_kgrid(&s.kgrid)? {
        let sm = compute_smatrix(&profile, k, &pert, &opts)?;
        defect = defect.max(sm.unitarity_defect());
        for (i, &row) in sm.channels.iter().enumerate() {
            for (j, &col) in sm.channels.iter().enumerate() {
                let z = sm.matrix[(i, j)];
                rows.push(vec![fmt(k), row.to_string(), col.to_string(), fmt(z.re), fmt(z.im)]);
            }
        }
    }
    let path = cfg.out_dir.join("smatrix.csv");
    write_csv(&path, &["k", "row", "col", "re", "im"], rows)?;
    out.artifacts.push(path);
    out.metrics.insert("max_unitarity_defect".into(), defect);
    Ok(())
}

/// Invariant suites on the configured grid (the flat-square preset by
/// default) plus the stationary closed forms.
fn run_validate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let preset = ExperimentConfig::flat_square_preset();
    let cfg = if cfg.grid.is_none() && cfg.response.is_none() {
        ExperimentConfig { out_dir: cfg.out_dir.clone(), seed: cfg.seed, ..preset }
    } else {
        cfg.clone()
    };
    let mut suites = Vec::new();
    let mut push = |name: &str, value: f64, tolerance: f64| {
        suites.push(SuiteResult { name: name.into(), value, tolerance, passed: value <= tolerance });
    };

    let grid = build_grid(cfg.grid.as_ref().ok_or_else(|| Error::ConfigInvalid("validate needs a grid".into()))?)?;
    let d = load_data(&cfg)?;
    let tg = d.time_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let solver = WaveSolver::new(&grid, tg.dt, cfg.cfl)?;
    let basis = &d.response().header.basis;
    let steps = 2 * tg.n + 1;
    let state = |f: &[f64], m: usize| -> Result<Vec<f64>> {
        let src = basis.synthesize(d.elements(), f, tg.dt, grid.boundary.len(), steps)?;
        Ok(solver.state_at(m, |s, o| o.copy_from_slice(src.at(s))))
    };

    // Boundary-only inner product against the volume integral.
    let n = tg.step_of(d.horizon());
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f: Vec<f64> = (0..d.n_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..d.n_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = blago_inner_product(&d, &f, &h, d.horizon())?;
        let direct = solver.mass_inner(&state(&f, n)?, &state(&h, n)?);
        worst = worst.max(((b - direct) / direct.abs().max(f64::MIN_POSITIVE)).abs());
    }
    push("blago_identity", worst, 1e-3);

    // Energy after the source stops.
    let mut f = vec![0.0; d.n_basis()];
    f[0] = 1.0;
    let src = basis.synthesize(d.elements(), &f, tg.dt, grid.boundary.len(), steps)?;
    let off = basis.support(&d.elements()[0]).end + 1;
    let mut energies = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    solver.run(
        steps - 1,
        |m, o| o.copy_from_slice(src.at(m)),
        |m, u| {
            if m > off {
                energies.push(solver.energy(&prev, u));
            }
            prev = u.to_vec();
        },
    );
    let e0 = energies.first().copied().unwrap_or(0.0);
    let span = (energies.len() as f64 * tg.dt).max(tg.dt);
    let drift = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE) / span;
    push("energy_drift_per_time", drift, 1e-6);

    // Stationary side.
    let opts = ScatterOptions::default();
    let mut unit: f64 = 0.0;
    for kind in ProfileKind::ALL {
        let p = EndProfile::new(kind, vec![0.0, 4.0])?;
        let pert = Perturbation { potential: Some(crate::scattering::Bump { amp: 2.0, center: 1.5, width: 0.4 }), ..Default::default() };
        for k in [0.7, 2.3] {
            unit = unit.max(compute_smatrix(&p, k, &pert, &opts)?.unitarity_defect());
        }
    }
    push("smatrix_unitarity", unit, 1e-6);

    let free = EndProfile::new(ProfileKind::Cylindrical, vec![0.0])?;
    let s = compute_smatrix(&free, 1.3, &Perturbation::none(), &opts)?;
    push("half_line_identity", (s.entry(0, 0) - 1.0).norm(), 1e-8);

    let cyl = EndProfile::new(ProfileKind::Cylindrical, vec![0.0, 1.0])?;
    let nd = nd_map_interior(&cyl, 1.7, &Perturbation::none(), &opts)?;
    let back = smatrix_to_ndmap(&cyl, &ndmap_to_smatrix(&cyl, &nd, &opts)?, &opts)?;
    let err = (&back.matrix - &nd.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
    push("bridge_round_trip", err, 1e-6);

    out.metrics.insert("suites".into(), suites.len() as f64);
    out.metrics.insert("failed".into(), suites.iter().filter(|s| !s.passed).count() as f64);
    let path = cfg.out_dir.join("validation.csv");
    write_csv(
        &path,
        &["suite", "value", "tolerance", "passed"],
        suites.iter().map(|s| vec![s.name.clone(), fmt(s.value), fmt(s.tolerance), s.passed.to_string()]),
    )?;
    out.artifacts.push(path);
    out.suites = suites;
    Ok(())
}

/// Reads a manifest back.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptFile(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ScatterConfig, Tolerances};

    fn scatter_cfg(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            kind: ExperimentKind::Scatter,
            out_dir: dir.to_path_buf(),
            scatter: Some(ScatterConfig {
                profile: ProfileKind::Cylindrical,
                lambdas: vec![0.0, 1.0],
                kgrid: "0.5:2.0:5".into(),
                e0: None,
                r_match: None,
                potential: None,
                index: None,
                coupling: None,
            }),
            ..ExperimentConfig::flat_square_preset()
        }
    }

    #[test]
    fn scatter_run_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = scatter_cfg(dir.path());
        let m = run(&cfg).unwrap();
        let first = fs::read(dir.path().join("smatrix.csv")).unwrap();
        run(&cfg).unwrap();
        assert_eq!(first, fs::read(dir.path().join("smatrix.csv")).unwrap());
        assert!(m.metrics["max_unitarity_defect"] < 1e-8);
        assert_eq!(read_manifest(dir.path()).unwrap().config_hash, m.config_hash);
        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("k,row,col,re,im\n0.5,0,0,"));
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = scatter_cfg(&dir.path().join("out"));
        cfg.tolerances = Tolerances { eps_rel: -1.0, ..Default::default() };
        assert!(matches!(run(&cfg), Err(Error::ConfigInvalid(_))));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ExperimentConfig::flat_square_preset();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
