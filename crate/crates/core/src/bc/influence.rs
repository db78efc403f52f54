use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::control::control_support;
use super::data::BoundaryDataSet;
use super::gram::Gram;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryPatch, InfluenceSpec, Slice};

/// Relative Tikhonov weight used by the projection engine unless overridden.
pub const DEFAULT_ENGINE_ALPHA: f64 = 1e-6;

/// Finite set of sources over which the positivity functional maximizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Dictionary {
    /// Selected basis elements (the full basis by default).
    Basis(Vec<usize>),
    /// Arbitrary sources, one per column.
    Vectors(DMatrix<f64>),
}

impl Dictionary {
    pub fn full(d: &BoundaryDataSet) -> Self {
        Dictionary::Basis((0..d.n_basis()).collect())
    }

    /// Every `node_stride`-th boundary node and every `center_stride`-th hat.
    pub fn subsampled(d: &BoundaryDataSet, node_stride: usize, center_stride: usize) -> Self {
        let s = d.response().header.basis.stride;
        let (ns, cs) = (node_stride.max(1), center_stride.max(1));
        Dictionary::Basis(
            d.elements()
                .iter()
                .enumerate()
                .filter(|(_, e)| e.node % ns == 0 && (e.center / s) % cs == 0)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        match self {
            Dictionary::Basis(v) => v.len(),
            Dictionary::Vectors(m) => m.ncols(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `D' G[:, cols]` (dictionary rows).
    fn gram_rows(&self, gram: &Gram, cols: &[usize]) -> DMatrix<f64> {
        match self {
            Dictionary::Basis(idx) => gram.block(idx, cols),
            Dictionary::Vectors(m) => {
                let all: Vec<usize> = (0..gram.matrix.nrows()).collect();
                m.transpose() * gram.block(&all, cols)
            }
        }
    }

    fn energies(&self, gram: &Gram) -> Vec<f64> {
        match self {
            Dictionary::Basis(idx) => idx.iter().map(|&i| gram.matrix[(i, i)]).collect(),
            Dictionary::Vectors(m) => (0..m.ncols())
                .map(|c| {
                    let v = m.column(c);
                    v.dot(&(&gram.matrix * v))
                })
                .collect(),
        }
    }
}

/// Result of the positivity test for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Positivity {
    /// `max_f J(f, f)`, clamped at zero.
    pub value: f64,
    pub threshold: f64,
    /// Dictionary index attaining the maximum.
    pub argmax: usize,
}

impl Positivity {
    pub fn positive(&self) -> bool {
        self.value > self.threshold
    }
}

/// Coefficients of a family of sources restricted to a support set.
#[derive(Debug, Clone)]
struct Block {
    support: Vec<usize>,
    vals: DMatrix<f64>,
}

struct Factor {
    support: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
}

struct FirstSlice {
    block: Block,
    /// `Y D' G` where `Y` are the first-slice coefficients (for trace sums).
    z: Option<DMatrix<f64>>,
    /// `Y Y'`.
    yy: Option<DMatrix<f64>>,
}

type SliceKey = (Vec<usize>, usize, usize);

/// Localized inner products by iterated projection.
///
/// For a slice `(Gamma, T-, T+)` let `P+`, `P-` be the regularized
/// projections onto waves from `Gamma x [T - T+, T]` and
/// `Gamma x [T - T-, T]`. Starting from `F_0 = F`, each slice maps
/// `F_{j-1} -> P+ F_{j-1} - P- F_{j-1}`, whose wave approximates the
/// restriction of `u^{F_{j-1}}(T)` to the slice. With `F_J` the result,
/// `J(F, F) = 2 <u^F, u^{F_J}> - |u^{F_J}|^2`; for one slice with `T- = 0`
/// this is exactly `|u^F|^2 - min_H |u^F - u^H|^2`.
///
/// Factorizations of the regularized sub-Gram matrices are cached per
/// (patch, window), as are first-slice projections of the whole dictionary.
pub struct InfluenceEngine<'a> {
    d: &'a BoundaryDataSet,
    gram: Arc<Gram>,
    n: usize,
    alpha: f64,
    dictionary: Dictionary,
    energy_max: f64,
    factors: Mutex<HashMap<(Vec<usize>, usize), Option<Arc<Factor>>>>,
    firsts: Mutex<HashMap<SliceKey, Arc<FirstSlice>>>,
    cache_limit: usize,
}

impl<'a> InfluenceEngine<'a> {
    pub fn new(d: &'a BoundaryDataSet, t: f64, alpha: f64, dictionary: Dictionary) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::ConfigInvalid(format!("regularization must be positive, got {alpha}")));
        }
        if dictionary.is_empty() {
            return Err(Error::ConfigInvalid("empty dictionary".into()));
        }
        let gram = d.gram(t)?;
        let n = d.step(t)?;
        let energy_max = dictionary.energies(&gram).into_iter().fold(0.0, f64::max);
        Ok(InfluenceEngine {
            d,
            gram,
            n,
            alpha,
            dictionary,
            energy_max,
            factors: Mutex::new(HashMap::new()),
            firsts: Mutex::new(HashMap::new()),
            cache_limit: 256,
        })
    }

    pub fn with_defaults(d: &'a BoundaryDataSet, t: f64) -> Result<Self> {
        Self::new(d, t, DEFAULT_ENGINE_ALPHA, Dictionary::full(d))
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// Largest field energy in the dictionary.
    pub fn energy_max(&self) -> f64 {
        self.energy_max
    }

    /// Default positivity threshold: `1e-3` of the largest dictionary energy.
    pub fn default_threshold(&self) -> f64 {
        1e-3 * self.energy_max
    }

    fn steps(&self, s: &Slice) -> (usize, usize) {
        let tg = self.d.time_grid();
        let plus = tg.step_of(s.t_plus).min(self.n);
        let minus = tg.step_of(s.t_minus).min(plus);
        (minus, plus)
    }

    fn factor(&self, patch: &BoundaryPatch, n1: usize) -> Result<Option<Arc<Factor>>> {
        let key = (patch.nodes.clone(), n1);
        if let Some(f) = self.factors.lock().unwrap().get(&key) {
            return Ok(f.clone());
        }
        let support = if n1 == 0 { Vec::new() } else { control_support(self.d, patch, n1, self.n) };
        let f = if support.is_empty() {
            None
        } else {
            let mut gbb = self.gram.block(&support, &support);
            let shift = self.alpha * gbb.diagonal().amax();
            for k in 0..support.len() {
                gbb[(k, k)] += shift;
            }
            let chol = Cholesky::new(gbb).ok_or(Error::GramNotPsd { value: -self.alpha })?;
            Some(Arc::new(Factor { support, chol }))
        };
        let mut cache = self.factors.lock().unwrap();
        if cache.len() >= 4 * self.cache_limit {
            cache.clear();
        }
        cache.insert(key, f.clone());
        Ok(f)
    }

    /// Regularized projection of a block onto waves from `patch x [T - n1 dt, T]`.
    fn project(&self, patch: &BoundaryPatch, n1: usize, v: &Block) -> Result<Option<Block>> {
        let Some(f) = self.factor(patch, n1)? else { return Ok(None) };
        let rhs = self.gram.block(&f.support, &v.support) * &v.vals;
        Ok(Some(Block { support: f.support.clone(), vals: f.chol.solve(&rhs) }))
    }

    fn apply_slice(&self, s: &Slice, v: &Block) -> Result<Block> {
        let (minus, plus) = self.steps(s);
        let ncols = v.vals.ncols();
        let Some(p) = self.project(&s.patch, plus, v)? else {
            return Ok(Block { support: Vec::new(), vals: DMatrix::zeros(0, ncols) });
        };
        let Some(m) = self.project(&s.patch, minus, v)? else { return Ok(p) };
        let mut support = p.support.clone();
        support.extend(m.support.iter().filter(|i| p.support.binary_search(i).is_err()));
        support.sort_unstable();
        let mut vals = DMatrix::zeros(support.len(), ncols);
        for (k, i) in p.support.iter().enumerate() {
            let row = support.binary_search(i).unwrap();
            vals.row_mut(row).copy_from(&p.vals.row(k));
        }
        for (k, i) in m.support.iter().enumerate() {
            let row = support.binary_search(i).unwrap();
            let updated = vals.row(row) - m.vals.row(k);
            vals.row_mut(row).copy_from(&updated);
        }
        Ok(Block { support, vals })
    }

    fn source_block(f: &[f64]) -> Block {
        let support: Vec<usize> = (0..f.len()).filter(|&i| f[i] != 0.0).collect();
        let vals = DMatrix::from_iterator(support.len(), 1, support.iter().map(|&i| f[i]));
        Block { support, vals }
    }

    /// `J(F, F)` for one source.
    pub fn j_diag(&self, f: &[f64], spec: &InfluenceSpec) -> Result<f64> {
        self.d.check_source(f)?;
        let mut v = Self::source_block(f);
        for s in spec.slices() {
            if v.support.is_empty() {
                return Ok(0.0);
            }
            v = self.apply_slice(s, &v)?;
        }
        if v.support.is_empty() {
            return Ok(0.0);
        }
        let all: Vec<usize> = (0..f.len()).collect();
        let gv = self.gram.block(&all, &v.support) * &v.vals;
        let cross: f64 = gv.iter().zip(f).map(|(a, b)| a * b).sum();
        let gss = self.gram.block(&v.support, &v.support);
        let own = v.vals.dot(&(&gss * &v.vals));
        Ok(2.0 * cross - own)
    }

    /// `J(F1, F2)` by polarization.
    pub fn j(&self, f1: &[f64], f2: &[f64], spec: &InfluenceSpec) -> Result<f64> {
        self.d.check_source(f1)?;
        self.d.check_source(f2)?;
        let sum: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a + b).collect();
        let diff: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a - b).collect();
        Ok(0.25 * (self.j_diag(&sum, spec)? - self.j_diag(&diff, spec)?))
    }

    fn first_slice(&self, s: &Slice, with_traces: bool) -> Result<Arc<FirstSlice>> {
        let (minus, plus) = self.steps(s);
        let key = (s.patch.nodes.clone(), minus, plus);
        if let Some(fs) = self.firsts.lock().unwrap().get(&key) {
            if !with_traces || fs.z.is_some() {
                return Ok(fs.clone());
            }
        }
        let block = match &self.dictionary {
            Dictionary::Basis(idx) => self.apply_slice_to_elements(s, idx)?,
            Dictionary::Vectors(m) => {
                let all: Vec<usize> = (0..m.nrows()).collect();
                self.apply_slice(s, &Block { support: all, vals: m.clone() })?
            }
        };
        let (z, yy) = if with_traces && !block.support.is_empty() {
            let all: Vec<usize> = (0..self.gram.matrix.nrows()).collect();
            let dg = self.dictionary.gram_rows(&self.gram, &all);
            (Some(&block.vals * dg), Some(&block.vals * block.vals.transpose()))
        } else {
            (None, None)
        };
        let fs = Arc::new(FirstSlice { block, z, yy });
        let mut cache = self.firsts.lock().unwrap();
        if cache.len() >= self.cache_limit {
            cache.clear();
        }
        cache.insert(key, fs.clone());
        Ok(fs)
    }

    /// Same as `apply_slice` for the sources `e_i`, `i in cols`, without
    /// forming the identity block.
    fn apply_slice_to_elements(&self, s: &Slice, cols: &[usize]) -> Result<Block> {
        let (minus, plus) = self.steps(s);
        let nd = cols.len();
        let proj = |n1: usize| -> Result<Option<Block>> {
            let Some(f) = self.factor(&s.patch, n1)? else { return Ok(None) };
            let rhs = self.gram.block(&f.support, &cols);
            Ok(Some(Block { support: f.support.clone(), vals: f.chol.solve(&rhs) }))
        };
        let Some(p) = proj(plus)? else {
            return Ok(Block { support: Vec::new(), vals: DMatrix::zeros(0, nd) });
        };
        let Some(m) = proj(minus)? else { return Ok(p) };
        let mut vals = p.vals.clone();
        for (k, i) in m.support.iter().enumerate() {
            let row = p.support.binary_search(i).map_err(|_| {
                Error::InvalidSpec("inner window not contained in outer window".into())
            })?;
            let updated = vals.row(row) - m.vals.row(k);
            vals.row_mut(row).copy_from(&updated);
        }
        Ok(Block { support: p.support, vals })
    }

    /// Coefficients `R` with `F_J = R Y` for every dictionary source, where `Y`
    /// is the first-slice block.
    fn reduce(&self, spec: &InfluenceSpec, with_traces: bool) -> Result<Option<(Arc<FirstSlice>, Block)>> {
        let slices = spec.slices();
        let Some(first) = slices.first() else {
            return Err(Error::InvalidSpec("no slices".into()));
        };
        let fs = self.first_slice(first, with_traces)?;
        let k = fs.block.support.len();
        if k == 0 {
            return Ok(None);
        }
        let mut r = Block { support: fs.block.support.clone(), vals: DMatrix::identity(k, k) };
        for s in &slices[1..] {
            r = self.apply_slice(s, &r)?;
            if r.support.is_empty() {
                return Ok(None);
            }
        }
        Ok(Some((fs, r)))
    }

    /// `J(f, f)` for every dictionary source `f`.
    pub fn dictionary_values(&self, spec: &InfluenceSpec) -> Result<Vec<f64>> {
        let nd = self.dictionary.len();
        let Some((fs, r)) = self.reduce(spec, false)? else { return Ok(vec![0.0; nd]) };
        let y = &fs.block.vals;
        let w = self.dictionary.gram_rows(&self.gram, &r.support) * &r.vals;
        let gss = self.gram.block(&r.support, &r.support);
        let c = r.vals.transpose() * (&gss * &r.vals);
        let cy = &c * y;
        Ok((0..nd)
            .map(|f| {
                let yf = y.column(f);
                2.0 * w.row(f).transpose().dot(&yf) - cy.column(f).dot(&yf)
            })
            .collect())
    }

    /// `sum_f J(f, f)` over the dictionary, via trace identities on cached
    /// first-slice products.
    pub fn dictionary_sum(&self, spec: &InfluenceSpec) -> Result<f64> {
        let Some((fs, r)) = self.reduce(spec, true)? else { return Ok(0.0) };
        let z = fs.z.as_ref().expect("trace products requested");
        let yy = fs.yy.as_ref().expect("trace products requested");
        let mut cross = 0.0;
        for (row, &s) in r.support.iter().enumerate() {
            for k in 0..r.vals.ncols() {
                cross += r.vals[(row, k)] * z[(k, s)];
            }
        }
        let gss = self.gram.block(&r.support, &r.support);
        let c = r.vals.transpose() * (&gss * &r.vals);
        Ok(2.0 * cross - c.component_mul(yy).sum())
    }

    /// `max_f J(f, f)` over the dictionary, clamped at zero.
    pub fn positivity(&self, spec: &InfluenceSpec, threshold: f64) -> Result<Positivity> {
        let vals = self.dictionary_values(spec)?;
        let (argmax, best) = vals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        Ok(Positivity { value: best.max(0.0), threshold, argmax })
    }
}

/// `J^T_N(F1, F2)` with the default engine settings at the data set's horizon.
pub fn influence_inner_product(
    d: &BoundaryDataSet,
    f1: &[f64],
    f2: &[f64],
    spec: &InfluenceSpec,
) -> Result<f64> {
    let engine = InfluenceEngine::new(d, spec.horizon(), DEFAULT_ENGINE_ALPHA, Dictionary::Basis(vec![0]))?;
    engine.j(f1, f2, spec)
}

/// Positivity functional over a dictionary, with threshold `1e-3` of the
/// dictionary's largest field energy.
pub fn positivity_functional(
    d: &BoundaryDataSet,
    spec: &InfluenceSpec,
    dictionary: Dictionary,
) -> Result<Positivity> {
    let engine = InfluenceEngine::new(d, spec.horizon(), DEFAULT_ENGINE_ALPHA, dictionary)?;
    let eps = engine.default_threshold();
    engine.positivity(spec, eps)
}
