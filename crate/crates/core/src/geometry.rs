//! Discrete conformally flat domains.
//!
//! A [`MetricGrid`] is a uniform lattice on an interval or rectangle carrying
//! the metric `G = c^{-2} |dx|^2`. Wave speed is `c`; travel-time density is
//! `1/c`. The boundary is the set of lattice nodes on the topological boundary,
//! listed once in counterclockwise order (2D) or as `[left, right]` (1D).
//!
//! The Dijkstra distance oracle here is ground truth for validation only. The
//! boundary-control pipeline never reads interior speeds or distances.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed field presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedField {
    Constant { c: f64 },
    /// `c0 + amp * sin(2 pi freq x)`
    Sine { c0: f64, amp: f64, freq: f64 },
    /// `c0 + gx x + gy y`
    Linear { c0: f64, gx: f64, gy: f64 },
    /// Sum of `coef * x^px * y^py`.
    Polynomial { terms: Vec<(f64, u32, u32)> },
    /// `c0 + amp * exp(-|x - center|^2 / width^2)`
    Bump { c0: f64, amp: f64, center: [f64; 2], width: f64 },
}

impl SpeedField {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            SpeedField::Constant { c } => *c,
            SpeedField::Sine { c0, amp, freq } => c0 + amp * (2.0 * PI * freq * x).sin(),
            SpeedField::Linear { c0, gx, gy } => c0 + gx * x + gy * y,
            SpeedField::Polynomial { terms } => terms
                .iter()
                .map(|&(a, px, py)| a * x.powi(px as i32) * y.powi(py as i32))
                .sum(),
            SpeedField::Bump { c0, amp, center, width } => {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                c0 + amp * (-r2 / (width * width)).exp()
            }
        }
    }
}

/// Description of a domain: `[0, extent[0]]` (1D) or
/// `[0, extent[0]] x [0, extent[1]]` (2D) with `nodes` lattice points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub nodes: Vec<usize>,
    pub speed: SpeedField,
}

impl DomainSpec {
    pub fn interval(length: f64, nodes: usize, speed: SpeedField) -> Self {
        DomainSpec { dim: 1, extent: vec![length], nodes: vec![nodes], speed }
    }

    pub fn square(side: f64, nodes: usize, speed: SpeedField) -> Self {
        DomainSpec { dim: 2, extent: vec![side, side], nodes: vec![nodes, nodes], speed }
    }
}

#[derive(Debug, Clone)]
pub struct MetricGrid {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub coords: Vec<[f64; 2]>,
    pub c: Vec<f64>,
    /// Riemannian volume weight per node.
    pub dv: Vec<f64>,
    /// Grid indices of boundary nodes, in boundary order.
    pub boundary: Vec<usize>,
    /// Riemannian surface weight per boundary node (aligned with `boundary`).
    pub ds: Vec<f64>,
    pub bbox: [[f64; 2]; 2],
}

pub fn build_grid(spec: &DomainSpec) -> Result<MetricGrid> {
    if spec.dim != 1 && spec.dim != 2 {
        return Err(Error::InvalidGrid(format!("dimension {} unsupported", spec.dim)));
    }
    if spec.extent.len() != spec.dim || spec.nodes.len() != spec.dim {
        return Err(Error::InvalidGrid("extent/nodes length must equal dim".into()));
    }
    if let Some(&n) = spec.nodes.iter().find(|&&n| n < 3) {
        return Err(Error::ResolutionTooCoarse { got: n });
    }
    if spec.extent.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidGrid("extent must be positive".into()));
    }
    let nx = spec.nodes[0];
    let h = spec.extent[0] / (nx - 1) as f64;
    let ny = if spec.dim == 2 { spec.nodes[1] } else { 1 };
    if spec.dim == 2 {
        let hy = spec.extent[1] / (ny - 1) as f64;
        if ((hy - h) / h).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!("anisotropic spacing hx = {h}, hy = {hy}")));
        }
    }

    let mut coords = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            coords.push([i as f64 * h, j as f64 * h]);
        }
    }
    let c: Vec<f64> = coords.iter().map(|p| spec.speed.eval(p[0], p[1])).collect();
    let cmin = c.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(cmin > 0.0) || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonPositiveSpeed { min: cmin });
    }

    let trap = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let dim = spec.dim;
    let mut dv = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let w = if dim == 1 { trap(i, nx) } else { trap(i, nx) * trap(j, ny) };
            dv.push(w * h.powi(dim as i32) / c[i + j * nx].powi(dim as i32));
        }
    }

    let boundary = if dim == 1 { vec![0, nx - 1] } else { rectangle_boundary(nx, ny) };
    // Each 2D boundary node owns half of each adjacent boundary edge (h in
    // total, corners included); the metric length element is ds / c.
    let ds = boundary
        .iter()
        .map(|&k| if dim == 1 { 1.0 } else { h / c[k] })
        .collect();
    let ymax = (ny - 1) as f64 * h;
    Ok(MetricGrid {
        dim,
        nx,
        ny,
        h,
        coords,
        c,
        dv,
        boundary,
        ds,
        bbox: [[0.0, 0.0], [spec.extent[0], ymax]],
    })
}

fn rectangle_boundary(nx: usize, ny: usize) -> Vec<usize> {
    let mut b = Vec::with_capacity(2 * (nx + ny) - 4);
    b.extend((0..nx).map(|i| i));
    b.extend((1..ny).map(|j| nx - 1 + j * nx));
    b.extend((0..nx - 1).rev().map(|i| i + (ny - 1) * nx));
    b.extend((1..ny - 1).rev().map(|j| j * nx));
    b
}

impl MetricGrid {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i + j * self.nx
    }

    pub fn cmax(&self) -> f64 {
        self.c.iter().cloned().fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.dv.iter().sum()
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = (k % self.nx, k / self.nx);
        if self.dim == 1 {
            i == 0 || i == self.nx - 1
        } else {
            i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
        }
    }

    /// Lattice neighbours with their Euclidean edge lengths (8-neighbour in 2D).
    pub fn neighbours(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (i, j) = ((k % self.nx) as isize, (k / self.nx) as isize);
        let offsets: &[(isize, isize)] = if self.dim == 1 {
            &[(-1, 0), (1, 0)]
        } else {
            &[(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)]
        };
        let (nx, ny, h) = (self.nx as isize, self.ny as isize, self.h);
        offsets.iter().filter_map(move |&(di, dj)| {
            let (a, b) = (i + di, j + dj);
            if a < 0 || b < 0 || a >= nx || b >= ny {
                None
            } else {
                let len = if di != 0 && dj != 0 { h * std::f64::consts::SQRT_2 } else { h };
                Some(((a + b * nx) as usize, len))
            }
        })
    }

    /// SHA-256 over lattice shape, spacing and speed values.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update((self.nx as u64).to_le_bytes());
        hasher.update((self.ny as u64).to_le_bytes());
        hasher.update(self.h.to_le_bytes());
        for v in &self.c {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// The part of the grid visible from the boundary.
    pub fn boundary_geometry(&self) -> BoundaryGeometry {
        let nb = self.boundary.len();
        let coords: Vec<[f64; 2]> = self.boundary.iter().map(|&k| self.coords[k]).collect();
        let c: Vec<f64> = self.boundary.iter().map(|&k| self.c[k]).collect();
        let (arclength, perimeter) = if self.dim == 1 {
            (vec![0.0; nb], None)
        } else {
            let mut s = vec![0.0; nb];
            for b in 1..nb {
                s[b] = s[b - 1] + self.h * 0.5 * (1.0 / c[b - 1] + 1.0 / c[b]);
            }
            let closing = self.h * 0.5 * (1.0 / c[nb - 1] + 1.0 / c[0]);
            let total = s[nb - 1] + closing;
            (s, Some(total))
        };
        BoundaryGeometry {
            dim: self.dim,
            h: self.h,
            coords,
            c,
            ds: self.ds.clone(),
            arclength,
            perimeter,
        }
    }
}

/// Boundary nodes with their surface weights and induced metric.
///
/// Positions into this list (not grid indices) are the boundary node ids used
/// by patches, sources and traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGeometry {
    pub dim: usize,
    pub h: f64,
    pub coords: Vec<[f64; 2]>,
    pub c: Vec<f64>,
    pub ds: Vec<f64>,
    /// Cumulative induced arclength along the boundary loop (2D).
    pub arclength: Vec<f64>,
    pub perimeter: Option<f64>,
}

impl BoundaryGeometry {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Intrinsic distance along the boundary. In 1D the two endpoints lie on
    /// different components, so distinct points are infinitely far apart.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        match self.perimeter {
            None => f64::INFINITY,
            Some(p) => {
                let d = (self.arclength[a] - self.arclength[b]).abs();
                d.min(p - d)
            }
        }
    }

    /// Boundary positions within `radius` lattice steps of `center` along the loop.
    pub fn ball(&self, center: usize, radius: usize) -> BoundaryPatch {
        let nb = self.len();
        if self.dim == 1 {
            return BoundaryPatch { nodes: vec![center], connected: true };
        }
        let mut nodes: Vec<usize> = (0..=2 * radius)
            .map(|k| (center + nb + k - radius) % nb)
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        BoundaryPatch { nodes, connected: true }
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update(self.h.to_le_bytes());
        for ((p, c), ds) in self.coords.iter().zip(&self.c).zip(&self.ds) {
            hasher.update(p[0].to_le_bytes());
            hasher.update(p[1].to_le_bytes());
            hasher.update(c.to_le_bytes());
            hasher.update(ds.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryPatch {
    /// Positions into the boundary list, sorted.
    pub nodes: Vec<usize>,
    pub connected: bool,
}

impl BoundaryPatch {
    pub fn new(mut nodes: Vec<usize>, boundary_len: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidSpec("empty boundary patch".into()));
        }
        if let Some(&bad) = nodes.iter().find(|&&b| b >= boundary_len) {
            return Err(Error::InvalidSpec(format!("{bad} is not a boundary node")));
        }
        nodes.sort_unstable();
        nodes.dedup();
        let connected = is_cyclic_run(&nodes, boundary_len);
        Ok(BoundaryPatch { nodes, connected })
    }

    pub fn whole(boundary_len: usize) -> Self {
        BoundaryPatch { nodes: (0..boundary_len).collect(), connected: true }
    }
}

fn is_cyclic_run(sorted: &[usize], n: usize) -> bool {
    let gaps = sorted
        .iter()
        .zip(sorted.iter().cycle().skip(1))
        .filter(|(&a, &b)| (b + n - a) % n != 1)
        .count();
    sorted.len() == n || gaps <= 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub patch: BoundaryPatch,
    pub t_minus: f64,
    pub t_plus: f64,
}

/// Slices `(Gamma_j, T_j^-, T_j^+)` whose intersection defines a region `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSpec {
    slices: Vec<Slice>,
    horizon: f64,
}

impl InfluenceSpec {
    pub fn new(slices: Vec<Slice>, horizon: f64) -> Result<Self> {
        for (j, s) in slices.iter().enumerate() {
            if !(s.t_minus >= 0.0 && s.t_minus < s.t_plus && s.t_plus <= horizon) {
                return Err(Error::InvalidSpec(format!(
                    "slice {j}: need 0 <= T- < T+ <= T, got ({}, {}) with T = {horizon}",
                    s.t_minus, s.t_plus
                )));
            }
            if s.patch.nodes.is_empty() {
                return Err(Error::InvalidSpec(format!("slice {j}: empty patch")));
            }
        }
        Ok(InfluenceSpec { slices, horizon })
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Travel-time distance from a set of source nodes (Dijkstra, 8-neighbour lattice
/// in 2D, edge weight = length x mean of `1/c` at its endpoints).
pub fn distance_from_set(g: &MetricGrid, sources: &[usize]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Reverse((Dist(0.0), s)));
    }
    while let Some(Reverse((Dist(d), k))) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        for (n, len) in g.neighbours(k) {
            let nd = d + len * 0.5 * (1.0 / g.c[k] + 1.0 / g.c[n]);
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(Reverse((Dist(nd), n)));
            }
        }
    }
    dist
}

pub fn geodesic_distance_oracle(g: &MetricGrid, source: usize) -> Vec<f64> {
    distance_from_set(g, &[source])
}

/// Oracle mask of `N`: nodes with `T_j^- <= d(x, Gamma_j) < T_j^+` for every slice.
pub fn domain_of_influence_mask(g: &MetricGrid, spec: &InfluenceSpec) -> Vec<bool> {
    let mut mask = vec![true; g.len()];
    for s in spec.slices() {
        let src: Vec<usize> = s.patch.nodes.iter().map(|&b| g.boundary[b]).collect();
        let d = distance_from_set(g, &src);
        for (m, &dx) in mask.iter_mut().zip(&d) {
            *m &= s.t_minus <= dx && dx < s.t_plus;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(n: usize) -> MetricGrid {
        build_grid(&DomainSpec::square(1.0, n, SpeedField::Constant { c: 1.0 })).unwrap()
    }

    #[test]
    fn unit_interval_volume() {
        let g = build_grid(&DomainSpec::interval(1.0, 101, SpeedField::Constant { c: 1.0 })).unwrap();
        assert!((g.h - 0.01).abs() < 1e-15);
        assert!((g.volume() - 1.0).abs() < 1e-12);
        assert_eq!(g.boundary, vec![0, 100]);
    }

    #[test]
    fn square_volume_with_constant_speed() {
        let g = build_grid(&DomainSpec::square(1.0, 11, SpeedField::Constant { c: 2.0 })).unwrap();
        assert!((g.volume() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn linear_speed_volume_is_log2() {
        let spec = DomainSpec::interval(1.0, 401, SpeedField::Linear { c0: 1.0, gx: 1.0, gy: 0.0 });
        let g = build_grid(&spec).unwrap();
        // trapezoid error bound h^2/12 * max|f''| with f = 1/(1+x), f'' <= 2
        let err = (g.volume() - std::f64::consts::LN_2).abs();
        assert!(err < g.h * g.h / 6.0, "err {err}");
    }

    #[test]
    fn rejects_bad_grids() {
        let neg = DomainSpec::interval(1.0, 11, SpeedField::Linear { c0: 0.5, gx: -1.0, gy: 0.0 });
        assert!(matches!(build_grid(&neg), Err(Error::NonPositiveSpeed { .. })));
        let coarse = DomainSpec::interval(1.0, 2, SpeedField::Constant { c: 1.0 });
        assert!(matches!(build_grid(&coarse), Err(Error::ResolutionTooCoarse { got: 2 })));
    }

    #[test]
    fn boundary_is_exactly_the_lattice_boundary() {
        let g = flat(7);
        let mut expected: Vec<usize> = (0..g.len()).filter(|&k| g.is_boundary(k)).collect();
        let mut got = g.boundary.clone();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert_eq!(g.boundary.len(), 24);
        // consecutive boundary nodes are lattice neighbours, including the wrap
        for w in 0..g.boundary.len() {
            let a = g.coords[g.boundary[w]];
            let b = g.coords[g.boundary[(w + 1) % g.boundary.len()]];
            let step = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((step - g.h).abs() < 1e-12);
        }
        let bg = g.boundary_geometry();
        assert!((bg.perimeter.unwrap() - 4.0).abs() < 1e-12);
        assert!((bg.ds.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_corner_to_corner() {
        let g = flat(21);
        let d = geodesic_distance_oracle(&g, 0);
        let far = d[g.len() - 1];
        let s2 = std::f64::consts::SQRT_2;
        assert!(far >= s2 - 1e-12 && far <= 1.09 * s2);
    }

    #[test]
    fn oracle_1d_constant_speed() {
        let g = build_grid(&DomainSpec::interval(1.0, 51, SpeedField::Constant { c: 2.0 })).unwrap();
        let d = geodesic_distance_oracle(&g, 0);
        assert!((d[50] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_refinement_self_convergence() {
        let lin = SpeedField::Linear { c0: 1.0, gx: 1.0, gy: 0.0 };
        let coarse = build_grid(&DomainSpec::square(1.0, 21, lin.clone())).unwrap();
        let fine = build_grid(&DomainSpec::square(1.0, 81, lin)).unwrap();
        let dc = geodesic_distance_oracle(&coarse, 0)[coarse.node(20, 0)];
        let df = geodesic_distance_oracle(&fine, 0)[fine.node(80, 0)];
        assert!(((dc - df) / df).abs() < 0.02, "{dc} vs {df}");
        // along a straight edge the exact value is ln 2
        assert!((df - std::f64::consts::LN_2).abs() < 1e-3);
    }

    #[test]
    fn whole_boundary_long_horizon_covers_domain() {
        let g = flat(11);
        let spec = InfluenceSpec::new(
            vec![Slice { patch: BoundaryPatch::whole(g.boundary.len()), t_minus: 0.0, t_plus: 2.0 }],
            2.0,
        )
        .unwrap();
        assert!(domain_of_influence_mask(&g, &spec).iter().all(|&m| m));
    }

    #[test]
    fn empty_slice_rejected() {
        let p = BoundaryPatch::whole(4);
        let s = Slice { patch: p, t_minus: 0.3, t_plus: 0.3 };
        assert!(InfluenceSpec::new(vec![s], 1.0).is_err());
    }

    #[test]
    fn left_edge_half_slab() {
        let g = flat(21);
        let left: Vec<usize> = (0..g.boundary.len())
            .filter(|&b| g.coords[g.boundary[b]][0] == 0.0)
            .collect();
        let patch = BoundaryPatch::new(left, g.boundary.len()).unwrap();
        assert!(patch.connected);
        let spec = InfluenceSpec::new(vec![Slice { patch, t_minus: 0.0, t_plus: 0.5 }], 1.0).unwrap();
        let mask = domain_of_influence_mask(&g, &spec);
        for (k, &m) in mask.iter().enumerate() {
            let x = g.coords[k][0];
            if x < 0.5 - g.h {
                assert!(m);
            }
            if x > 0.5 {
                assert!(!m);
            }
        }
    }

    #[test]
    fn patch_connectivity() {
        assert!(BoundaryPatch::new(vec![9, 0, 1], 10).unwrap().connected);
        assert!(!BoundaryPatch::new(vec![0, 2], 10).unwrap().connected);
        assert!(BoundaryPatch::new(vec![], 10).is_err());
        assert!(BoundaryPatch::new(vec![10], 10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn oracle_symmetric_and_triangular(a in 0usize..441, b in 0usize..441, m in 0usize..441, amp in 0.0f64..0.5) {
            let g = build_grid(&DomainSpec::square(1.0, 21, SpeedField::Linear { c0: 1.0, gx: amp, gy: -0.3 * amp })).unwrap();
            let da = geodesic_distance_oracle(&g, a);
            let db = geodesic_distance_oracle(&g, b);
            let dm = geodesic_distance_oracle(&g, m);
            prop_assert!((da[b] - db[a]).abs() < 1e-12);
            prop_assert!(da[b] <= da[m] + dm[b] + 1e-12);
        }

        #[test]
        fn mask_monotone_in_t_plus(t1 in 0.05f64..1.0, extra in 0.0f64..0.5, tm in 0.0f64..0.04, start in 0usize..80) {
            let g = flat(21);
            let nb = g.boundary.len();
            let patch = g.boundary_geometry().ball(start % nb, 2);
            let horizon = 2.0;
            let narrow = InfluenceSpec::new(vec![Slice { patch: patch.clone(), t_minus: tm, t_plus: t1 }], horizon).unwrap();
            let wide = InfluenceSpec::new(vec![Slice { patch, t_minus: 0.0, t_plus: t1 + extra }], horizon).unwrap();
            let a = domain_of_influence_mask(&g, &narrow);
            let b = domain_of_influence_mask(&g, &wide);
            prop_assert!(a.iter().zip(&b).all(|(&x, &y)| !x || y));
        }
    }
}
