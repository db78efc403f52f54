//! Boundary distance representation from boundary data.
//!
//! A candidate `r` on the boundary sample is accepted at level `L` when the
//! region `{x : |d(x, z_j) - r(z_j)| < 1/L, j = 1..L}` carries wave energy,
//! i.e. the positivity functional of the corresponding slices exceeds its
//! threshold. Sample points are ordered by farthest-point traversal of the
//! boundary and cycled when `L` exceeds their number.
//!
//! The search enumerates values at the leading sample points on a `dr`
//! grid with prefix pruning, keeps local maxima of the positivity score,
//! estimates every sample value of each seed (leading ones included) from
//! the energy profile of the region cut out by the others, and re-tests the
//! completed candidates. Survivors must also leave energy in the thin shells
//! `|d(x, z_n) - r(z_n)| < 1/L_max` taken over the whole sample at once.

mod search;

use serde::{Deserialize, Serialize};

use crate::bc::{BoundaryDataSet, Dictionary, InfluenceEngine};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGeometry, InfluenceSpec, Slice};

pub use search::{build_representation, complete_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Candidate,
    Accepted,
    Oracle,
}

/// Values `r(z_n)` on the boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDistanceFunction {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl BoundaryDistanceFunction {
    pub fn candidate(values: Vec<f64>) -> Self {
        BoundaryDistanceFunction { values, provenance: Provenance::Candidate }
    }

    /// Largest violation of `|r(z) - r(z')| <= d_boundary(z, z')` over the sample.
    pub fn lipschitz_excess(&self, boundary: &BoundaryGeometry, sample: &[usize]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for a in 0..self.values.len() {
            for b in a + 1..self.values.len() {
                let db = boundary.distance(sample[a], sample[b]);
                worst = worst.max((self.values[a] - self.values[b]).abs() - db);
            }
        }
        worst
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Search and acceptance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpec {
    /// Step of the value grid used for enumeration.
    pub dr: f64,
    /// Largest enumerated value; defaults to the horizon.
    pub r_max: Option<f64>,
    pub l_max: usize,
    /// Keep every `sample_stride`-th boundary node in the sample.
    pub sample_stride: usize,
    /// Patch radius around each sample point, in boundary nodes.
    pub patch_radius: usize,
    /// Positivity threshold relative to the largest dictionary energy.
    pub eps_rel: f64,
    /// Relative Tikhonov weight of the projections.
    pub alpha: f64,
    /// Slack of the Lipschitz screen; defaults to `dr`.
    pub lipschitz_tol: Option<f64>,
    /// Maximum number of positivity evaluations.
    pub budget: usize,
    pub dictionary_node_stride: usize,
    pub dictionary_center_stride: usize,
    /// Fraction of the seed-region energy that fixes an estimated value.
    pub crossing_fraction: f64,
    /// Band half-width used when estimating values; defaults to `1/L_max`.
    pub estimate_band: Option<f64>,
    /// Trailing anchor coordinates over which seeds must be local maxima.
    pub seed_window: usize,
    /// Patch radius of the distance sweep that estimates a value.
    pub sweep_radius: usize,
    /// Completed candidates must carry this fraction of the largest
    /// dictionary energy in the intersection of the bands at all sample points.
    pub consistency_rel: f64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            dr: 0.1,
            r_max: None,
            l_max: 4,
            sample_stride: 4,
            patch_radius: 2,
            eps_rel: 1e-3,
            alpha: 1e-6,
            lipschitz_tol: None,
            budget: 200_000,
            dictionary_node_stride: 1,
            dictionary_center_stride: 1,
            crossing_fraction: 0.5,
            estimate_band: None,
            seed_window: 2,
            sweep_radius: 1,
            consistency_rel: 1e-2,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dr > 0.0) || self.l_max == 0 || self.sample_stride == 0 {
            return Err(Error::ConfigInvalid("dr, l_max and sample_stride must be positive".into()));
        }
        if !(self.eps_rel > 0.0) || !(self.alpha > 0.0) {
            return Err(Error::ConfigInvalid("eps_rel and alpha must be positive".into()));
        }
        if !(self.crossing_fraction > 0.0 && self.crossing_fraction < 1.0) {
            return Err(Error::ConfigInvalid("crossing_fraction must lie in (0, 1)".into()));
        }
        // Bands of half-width 1/L_max must not be finer than the value grid.
        if self.dr > 2.0 / self.l_max as f64 + 1e-12 {
            return Err(Error::ConfigInvalid(format!(
                "dr = {} exceeds the band width 2/L_max = {}",
                self.dr,
                2.0 / self.l_max as f64
            )));
        }
        Ok(())
    }

    pub fn lipschitz_slack(&self) -> f64 {
        self.lipschitz_tol.unwrap_or(self.dr)
    }
}

/// Boundary sample in farthest-point order, starting at boundary node 0.
pub fn boundary_sample(boundary: &BoundaryGeometry, stride: usize) -> Vec<usize> {
    let pool: Vec<usize> = (0..boundary.len()).step_by(stride.max(1)).collect();
    let mut order = vec![pool[0]];
    let mut dmin: Vec<f64> = pool.iter().map(|&p| boundary.distance(p, pool[0])).collect();
    while order.len() < pool.len() {
        let (k, _) = dmin
            .iter()
            .enumerate()
            .filter(|(k, _)| !order.contains(&pool[*k]))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (k, &d)| if d > acc.1 { (k, d) } else { acc });
        order.push(pool[k]);
        for (j, &p) in pool.iter().enumerate() {
            dmin[j] = dmin[j].min(boundary.distance(p, pool[k]));
        }
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    /// Rejected by the Lipschitz screen; no wave computation done.
    Screened,
    /// A band starts beyond the horizon, so the region is empty.
    OutOfHorizon,
    /// Accepted without a wave test: the point lies within two cells of the boundary.
    NearBoundary,
    Positivity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    /// Positivity value (0 when no wave test ran).
    pub value: f64,
    pub reason: VerdictReason,
}

/// Shared state for candidate tests on one data set.
pub struct CandidateTester<'a> {
    pub(crate) data: &'a BoundaryDataSet,
    pub(crate) engine: InfluenceEngine<'a>,
    pub(crate) sample: Vec<usize>,
    pub(crate) spec: SearchSpec,
    pub(crate) threshold: f64,
    pub(crate) tests: std::sync::atomic::AtomicUsize,
}

impl<'a> CandidateTester<'a> {
    pub fn new(data: &'a BoundaryDataSet, spec: &SearchSpec) -> Result<Self> {
        spec.validate()?;
        let dictionary = if spec.dictionary_node_stride <= 1 && spec.dictionary_center_stride <= 1 {
            Dictionary::full(data)
        } else {
            Dictionary::subsampled(data, spec.dictionary_node_stride, spec.dictionary_center_stride)
        };
        let engine = InfluenceEngine::new(data, data.horizon(), spec.alpha, dictionary)?;
        let threshold = spec.eps_rel * engine.energy_max();
        let sample = boundary_sample(data.boundary(), spec.sample_stride);
        Ok(CandidateTester {
            data,
            engine,
            sample,
            spec: spec.clone(),
            threshold,
            tests: std::sync::atomic::AtomicUsize::new(0),
        })
    }

    /// Boundary positions of the sample, in test order.
    pub fn sample(&self) -> &[usize] {
        &self.sample
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn engine(&self) -> &InfluenceEngine<'a> {
        &self.engine
    }

    pub fn tests_run(&self) -> usize {
        self.tests.load(std::sync::atomic::Ordering::Relaxed)
    }

    /// Slices `(patch(z_j), r_j - 1/L, r_j + 1/L)`, `j = 1..L`, with sample
    /// points cycled; `None` when some band starts beyond the horizon.
    pub(crate) fn level_spec(&self, values: &[f64], level: usize) -> Option<InfluenceSpec> {
        let horizon = self.data.horizon();
        let half = 1.0 / level as f64;
        let k = values.len().min(self.sample.len());
        let mut slices = Vec::with_capacity(level);
        for j in 0..level {
            let idx = j % k;
            let r = values[idx];
            let lo = (r - half).max(0.0);
            let hi = (r + half).min(horizon);
            if lo >= hi {
                return None;
            }
            let patch = self.data.boundary().ball(self.sample[idx], self.spec.patch_radius);
            slices.push(Slice { patch, t_minus: lo, t_plus: hi });
        }
        InfluenceSpec::new(slices, horizon).ok()
    }

    pub(crate) fn positivity(&self, values: &[f64], level: usize) -> Result<f64> {
        let Some(spec) = self.level_spec(values, level) else { return Ok(0.0) };
        self.tests.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(self.engine.positivity(&spec, self.threshold)?.value)
    }

    /// Positivity of the bands of half-width `1/L_max` at every sample point.
    pub(crate) fn consistency(&self, values: &[f64]) -> Result<f64> {
        let horizon = self.data.horizon();
        let half = self.spec.estimate_band.unwrap_or(1.0 / self.spec.l_max as f64);
        let mut slices = Vec::with_capacity(values.len());
        for (j, &r) in values.iter().enumerate() {
            let lo = (r - half).max(0.0);
            let hi = (r + half).min(horizon);
            if lo >= hi {
                return Ok(0.0);
            }
            let patch = self.data.boundary().ball(self.sample[j], self.spec.patch_radius);
            slices.push(Slice { patch, t_minus: lo, t_plus: hi });
        }
        let spec = InfluenceSpec::new(slices, horizon)?;
        self.tests.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(self.engine.positivity(&spec, 0.0)?.value)
    }

    pub(crate) fn screen(&self, values: &[f64]) -> bool {
        let r = BoundaryDistanceFunction::candidate(values.to_vec());
        r.values.iter().all(|&v| v >= 0.0)
            && r.lipschitz_excess(self.data.boundary(), &self.sample[..values.len()])
                <= self.spec.lipschitz_slack()
    }
}

/// Criterion test of one candidate at level `L`.
///
/// `r` holds values on (a prefix of) the sample. The Lipschitz screen runs
/// first; candidates within two cells of the boundary at a tested point are
/// accepted on the screen alone.
pub fn test_distance_candidate(
    tester: &CandidateTester,
    r: &BoundaryDistanceFunction,
    level: usize,
) -> Result<Verdict> {
    if level == 0 {
        return Err(Error::ConfigInvalid("level must be at least 1".into()));
    }
    if r.values.is_empty() || r.values.len() > tester.sample.len() {
        return Err(Error::ConfigInvalid(format!(
            "candidate has {} values, sample has {}",
            r.values.len(),
            tester.sample.len()
        )));
    }
    if !tester.screen(&r.values) {
        return Ok(Verdict { accepted: false, value: 0.0, reason: VerdictReason::Screened });
    }
    let k = r.values.len();
    let tested = level.min(k);
    let near = 2.0 * tester.data.boundary().h;
    if r.values[..tested].iter().any(|&v| v < near) {
        return Ok(Verdict { accepted: true, value: 0.0, reason: VerdictReason::NearBoundary });
    }
    if tester.level_spec(&r.values, level).is_none() {
        return Ok(Verdict { accepted: false, value: 0.0, reason: VerdictReason::OutOfHorizon });
    }
    let value = tester.positivity(&r.values, level)?;
    Ok(Verdict { accepted: value > tester.threshold, value, reason: VerdictReason::Positivity })
}

/// Accepted boundary distance functions plus the search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRepresentation {
    pub members: Vec<BoundaryDistanceFunction>,
    /// Boundary positions of the sample points, in test order.
    pub sample: Vec<usize>,
    pub dr: f64,
    pub r_max: f64,
    pub threshold: f64,
    pub l_max: usize,
    /// Positivity evaluations spent.
    pub tests: usize,
    /// Set when the search budget ran out before the search finished.
    pub incomplete: bool,
}

impl DistanceRepresentation {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member closest to `values` in sup norm.
    pub fn nearest(&self, values: &[f64]) -> Option<(usize, f64)> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.sup_distance(values)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn member<'r>(rep: &'r DistanceRepresentation, id: usize) -> Result<&'r BoundaryDistanceFunction> {
    rep.members.get(id).ok_or(Error::UnknownId(id))
}

/// `d_inf(r_x, r_y) = max_z |r_x(z) - r_y(z)|`. Equals the interior distance
/// only on geodesically regular metrics; it never exceeds it.
pub fn interior_metric(rep: &DistanceRepresentation, x: usize, y: usize) -> Result<f64> {
    let (a, b) = (member(rep, x)?, member(rep, y)?);
    Ok(a.sup_distance(&b.values))
}

/// Bounded variant `max_z |r_x - r_y| / (1 + |r_x - r_y|)`.
pub fn bounded_metric(rep: &DistanceRepresentation, x: usize, y: usize) -> Result<f64> {
    let d = interior_metric(rep, x, y)?;
    Ok(d / (1.0 + d))
}

/// Pairwise `d_inf` matrix of all members.
pub fn metric_matrix(rep: &DistanceRepresentation) -> Vec<Vec<f64>> {
    let n = rep.len();
    (0..n)
        .map(|i| (0..n).map(|j| rep.members[i].sup_distance(&rep.members[j].values)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec, SpeedField};

    #[test]
    fn farthest_point_order_on_square() {
        let g = build_grid(&DomainSpec::square(1.0, 21, SpeedField::Constant { c: 1.0 })).unwrap();
        let s = boundary_sample(&g.boundary_geometry(), 4);
        assert_eq!(s.len(), 20);
        assert_eq!(&s[..2], &[0, 40]);
        let mut first4 = s[..4].to_vec();
        first4.sort_unstable();
        assert_eq!(first4, vec![0, 20, 40, 60]);
        let mut all = s.clone();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn metric_on_hand_built_set() {
        let rep = DistanceRepresentation {
            members: vec![
                BoundaryDistanceFunction::candidate(vec![0.2, 0.5, 0.9]),
                BoundaryDistanceFunction::candidate(vec![0.4, 0.1, 0.9]),
            ],
            sample: vec![0, 1, 2],
            dr: 0.1,
            r_max: 1.0,
            threshold: 0.0,
            l_max: 2,
            tests: 0,
            incomplete: false,
        };
        assert_eq!(interior_metric(&rep, 0, 0).unwrap(), 0.0);
        assert!((interior_metric(&rep, 0, 1).unwrap() - 0.4).abs() < 1e-15);
        assert!((bounded_metric(&rep, 0, 1).unwrap() - 0.4 / 1.4).abs() < 1e-15);
        assert!(matches!(interior_metric(&rep, 0, 5), Err(Error::UnknownId(5))));
        let m = metric_matrix(&rep);
        assert_eq!(m[0][1], m[1][0]);
    }

    #[test]
    fn search_spec_validation() {
        assert!(SearchSpec::default().validate().is_ok());
        let coarse = SearchSpec { dr: 0.6, ..SearchSpec::default() };
        assert!(coarse.validate().is_err());
        let neg = SearchSpec { eps_rel: -1.0, ..SearchSpec::default() };
        assert!(neg.validate().is_err());
    }

    use crate::wave::{assemble_response, BasisSpec, DEFAULT_CFL};

    fn data(spec: &DomainSpec, stride: usize, horizon: f64) -> (crate::geometry::MetricGrid, BoundaryDataSet) {
        let g = build_grid(spec).unwrap();
        let op = assemble_response(&g, &BasisSpec::with_stride(stride), horizon, DEFAULT_CFL).unwrap();
        let d = BoundaryDataSet::new(op, g.boundary_geometry(), horizon).unwrap();
        (g, d)
    }

    fn oracle_values(g: &crate::geometry::MetricGrid, sample: &[usize], x: usize) -> Vec<f64> {
        let dist = crate::geometry::geodesic_distance_oracle(g, x);
        sample.iter().map(|&b| dist[g.boundary[b]]).collect()
    }

    #[test]
    fn interval_accepts_affine_pairs() {
        let (g, d) = data(&DomainSpec::interval(1.0, 41, SpeedField::Constant { c: 1.0 }), 2, 1.2);
        let spec = SearchSpec {
            dr: 0.1,
            l_max: 8,
            sample_stride: 1,
            patch_radius: 0,
            consistency_rel: 3e-2,
            ..SearchSpec::default()
        };
        let rep = build_representation(&d, &spec).unwrap();
        assert!(!rep.is_empty() && !rep.incomplete);
        let tol = spec.dr + 2.0 * g.h;
        // Sound: every member is close to some (x, 1 - x).
        for m in &rep.members {
            let (a, b) = (m.values[0], m.values[1]);
            let x = (a - b + 1.0) / 2.0;
            let off = (a - x).abs().max((b - (1.0 - x)).abs());
            assert!(off <= tol + 1e-12, "member {:?} is {off} from the curve", m.values);
        }
        // Complete: every interior node has a member within the tolerance.
        for x in 1..g.len() - 1 {
            let o = oracle_values(&g, &rep.sample, x);
            let (_, e) = rep.nearest(&o).unwrap();
            assert!(e <= tol + 1e-12, "node {x} uncovered ({e})");
        }
        assert_eq!(build_representation(&d, &spec).unwrap(), rep);
    }

    #[test]
    fn oracle_distance_functions_pass_the_test() {
        let (g, d) = data(&DomainSpec::square(1.0, 11, SpeedField::Constant { c: 1.0 }), 2, 1.5);
        let spec = SearchSpec::default();
        let tester = CandidateTester::new(&d, &spec).unwrap();
        for x in [g.node(5, 5), g.node(3, 7), g.node(2, 2)] {
            let r = BoundaryDistanceFunction::candidate(oracle_values(&g, tester.sample(), x));
            for l in 1..=spec.l_max {
                let v = test_distance_candidate(&tester, &r, l).unwrap();
                assert!(v.accepted, "x = {x}, L = {l}: {v:?}");
            }
        }
    }

    #[test]
    fn screen_and_argument_errors() {
        let (g, d) = data(&DomainSpec::square(1.0, 11, SpeedField::Constant { c: 1.0 }), 2, 1.5);
        let tester = CandidateTester::new(&d, &SearchSpec::default()).unwrap();
        let mut v = oracle_values(&g, tester.sample(), g.node(5, 5));
        v[1] += 1.5;
        let r = BoundaryDistanceFunction::candidate(v.clone());
        assert!(r.lipschitz_excess(d.boundary(), tester.sample()) > 0.0);
        let verdict = test_distance_candidate(&tester, &r, 2).unwrap();
        assert!(!verdict.accepted && verdict.reason == VerdictReason::Screened);
        assert!(matches!(test_distance_candidate(&tester, &r, 0), Err(Error::ConfigInvalid(_))));
        v.push(0.5);
        v.resize(tester.sample().len() + 1, 0.5);
        let long = BoundaryDistanceFunction::candidate(v);
        assert!(matches!(test_distance_candidate(&tester, &long, 1), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        // Centre point with the value at the second sample point moved far
        // from the truth but still Lipschitz-admissible.
        let (g, d) = data(&DomainSpec::square(1.0, 11, SpeedField::Constant { c: 1.0 }), 2, 1.5);
        let tester = CandidateTester::new(&d, &SearchSpec::default()).unwrap();
        let x = g.node(2, 2);
        let mut v = oracle_values(&g, tester.sample(), x);
        v[1] -= 0.7;
        let r = BoundaryDistanceFunction::candidate(v);
        let rejected = (2..=4).any(|l| !test_distance_candidate(&tester, &r, l).unwrap().accepted);
        assert!(rejected);
    }
}
