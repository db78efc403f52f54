use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::{
    test_distance_candidate, BoundaryDistanceFunction, CandidateTester, DistanceRepresentation,
    Provenance, SearchSpec,
};
use crate::bc::BoundaryDataSet;
use crate::error::Result;
use crate::geometry::{InfluenceSpec, Slice};

#[derive(Debug, Clone)]
struct Tuple {
    idx: Vec<usize>,
    score: f64,
}

/// Builds the representation; see the module docs for the strategy.
pub fn build_representation(d: &BoundaryDataSet, spec: &SearchSpec) -> Result<DistanceRepresentation> {
    let tester = CandidateTester::new(d, spec)?;
    let horizon = d.horizon();
    let r_max = spec.r_max.unwrap_or(horizon).min(horizon);
    let mut rep = DistanceRepresentation {
        members: Vec::new(),
        sample: tester.sample.clone(),
        dr: spec.dr,
        r_max,
        threshold: tester.threshold,
        l_max: spec.l_max,
        tests: 0,
        incomplete: false,
    };
    if r_max < 0.0 {
        return Ok(rep);
    }
    let grid: Vec<f64> = (0..=((r_max / spec.dr) + 1e-9).floor() as usize)
        .map(|k| k as f64 * spec.dr)
        .collect();
    let k = tester.sample.len();
    let anchors = spec.l_max.min(k);
    let values = |t: &Tuple| -> Vec<f64> { t.idx.iter().map(|&i| grid[i]).collect() };

    // Prefix enumeration: a prefix of length j must pass at level j.
    let mut level: Vec<Tuple> = vec![Tuple { idx: Vec::new(), score: f64::INFINITY }];
    for j in 1..=anchors {
        let next: Vec<Tuple> = level
            .iter()
            .flat_map(|p| {
                (0..grid.len()).map(move |g| {
                    let mut idx = p.idx.clone();
                    idx.push(g);
                    Tuple { idx, score: 0.0 }
                })
            })
            .filter(|t| tester.screen(&values(t)))
            .collect();
        if tester.tests_run() + next.len() > spec.budget {
            log::warn!("search budget exhausted at anchor level {j}");
            rep.incomplete = true;
            rep.tests = tester.tests_run();
            return Ok(rep);
        }
        let scored: Vec<Tuple> = next
            .into_par_iter()
            .map(|mut t| -> Result<Tuple> {
                t.score = tester.positivity(&values(&t), j)?;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        level = scored.into_iter().filter(|t| t.score > tester.threshold).collect();
        log::debug!("anchor level {j}: {} prefixes survive", level.len());
    }

    if anchors == k {
        // Every sample point is an anchor: test the remaining levels directly.
        for l in anchors + 1..=spec.l_max {
            let scored: Vec<Tuple> = level
                .into_par_iter()
                .map(|mut t| -> Result<Tuple> {
                    t.score = tester.positivity(&values(&t), l)?;
                    Ok(t)
                })
                .collect::<Result<Vec<_>>>()?;
            level = scored.into_iter().filter(|t| t.score > tester.threshold).collect();
        }
        let floor = tester.spec.consistency_rel * tester.engine.energy_max();
        let kept: Vec<bool> = level
            .par_iter()
            .map(|t| Ok(tester.consistency(&values(t))? >= floor))
            .collect::<Result<Vec<_>>>()?;
        rep.members = level
            .iter()
            .zip(kept)
            .filter(|(_, keep)| *keep)
            .map(|(t, _)| BoundaryDistanceFunction { values: values(t), provenance: Provenance::Accepted })
            .collect();
        rep.tests = tester.tests_run();
        return Ok(rep);
    }

    let seeds = local_maxima(&level, anchors, spec.seed_window);
    log::debug!("{} seeds from {} anchor tuples", seeds.len(), level.len());
    let completed: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|s| complete_seed(&tester, &values(s)))
        .collect::<Result<Vec<_>>>()?;

    let mut merged: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    let quantum = spec.dr / 4.0;
    for full in completed.into_iter().flatten() {
        let r = BoundaryDistanceFunction::candidate(full);
        let mut ok = true;
        for l in 1..=spec.l_max {
            if !test_distance_candidate(&tester, &r, l)?.accepted {
                ok = false;
                break;
            }
        }
        if ok && tester.consistency(&r.values)? < tester.spec.consistency_rel * tester.engine.energy_max() {
            ok = false;
        }
        if ok {
            let key = r.values.iter().map(|v| (v / quantum).round() as i64).collect();
            merged.entry(key).or_insert(r.values);
        }
    }
    rep.members = merged
        .into_values()
        .map(|values| BoundaryDistanceFunction { values, provenance: Provenance::Accepted })
        .collect();
    rep.tests = tester.tests_run();
    Ok(rep)
}

/// Tuples whose score is not exceeded by any surviving neighbour that differs
/// by one grid step in the last `window` coordinates (prefix held fixed).
fn local_maxima(tuples: &[Tuple], anchors: usize, window: usize) -> Vec<Tuple> {
    if anchors == 1 {
        return tuples
            .iter()
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .cloned()
            .into_iter()
            .collect();
    }
    let lookup: HashMap<&[usize], f64> = tuples.iter().map(|t| (t.idx.as_slice(), t.score)).collect();
    tuples
        .iter()
        .filter(|t| {
            let free = window.clamp(1, anchors);
            let first = anchors - free;
            let mut probe = t.idx.clone();
            // Odometer over the offsets {-1, 0, 1}^free.
            let mut offs = vec![-1i64; free];
            loop {
                if offs.iter().any(|&o| o != 0) {
                    let mut valid = true;
                    for (c, &o) in offs.iter().enumerate() {
                        let v = t.idx[first + c] as i64 + o;
                        valid &= v >= 0;
                        probe[first + c] = v.max(0) as usize;
                    }
                    if valid && lookup.get(probe.as_slice()).is_some_and(|&s| s > t.score) {
                        return false;
                    }
                }
                let mut c = 0;
                while c < free && offs[c] == 1 {
                    offs[c] = -1;
                    c += 1;
                }
                if c == free {
                    return true;
                }
                offs[c] += 1;
            }
        })
        .cloned()
        .collect()
}

/// Estimates the value at every non-anchor sample point from the seed's
/// bands: the distance `tau` at which `M(patch(z), tau)` holds the crossing
/// fraction of the band region's dictionary energy. Anchors are re-estimated
/// from the other anchors' bands, which removes the grid quantization.
pub fn complete_seed(tester: &CandidateTester, anchor_values: &[f64]) -> Result<Option<Vec<f64>>> {
    let anchors = anchor_values.len();
    let k = tester.sample.len();
    let all: Vec<Slice> = (0..anchors).map(|j| band(tester, j, anchor_values[j])).collect();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let bands: Vec<Slice> = if i < anchors && anchors > 1 {
            all.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| b.clone()).collect()
        } else {
            all.clone()
        };
        match crossing(tester, &bands, i)? {
            Some(v) => out.push(v),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Band slice of half-width at most `1/L_max` around `r` at sample point `j`,
/// kept symmetric where it meets `0` or the horizon.
fn band(tester: &CandidateTester, j: usize, r: f64) -> Slice {
    let d = tester.data;
    let horizon = d.horizon();
    let half = tester.spec.estimate_band.unwrap_or(1.0 / tester.spec.l_max as f64);
    let w = half.min(r).min(horizon - r).max(2.0 * d.boundary().h);
    Slice {
        patch: d.boundary().ball(tester.sample[j], tester.spec.patch_radius),
        t_minus: (r - w).max(0.0),
        t_plus: (r + w).min(horizon),
    }
}

/// Crossing distance of sample point `i` against the given bands.
fn crossing(tester: &CandidateTester, bands: &[Slice], i: usize) -> Result<Option<f64>> {
    let d = tester.data;
    let horizon = d.horizon();
    let tg = d.time_grid();
    let n_max = tg.step_of(horizon);
    let patch = d.boundary().ball(tester.sample[i], tester.spec.sweep_radius);
    let phi = |n: usize| -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let mut s = bands.to_vec();
        s.push(Slice { patch: patch.clone(), t_minus: 0.0, t_plus: n as f64 * tg.dt });
        let spec = InfluenceSpec::new(s, horizon).expect("bands lie inside the horizon");
        tester.engine.dictionary_sum(&spec)
    };
    let total = phi(n_max)?;
    if !(total > tester.threshold) {
        return Ok(None);
    }
    let target = tester.spec.crossing_fraction * total;
    let (mut lo, mut hi) = (0usize, n_max);
    let (mut phi_lo, mut phi_hi) = (0.0, total);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let v = phi(mid)?;
        if v >= target {
            hi = mid;
            phi_hi = v;
        } else {
            lo = mid;
            phi_lo = v;
        }
    }
    let frac = if phi_hi > phi_lo { (target - phi_lo) / (phi_hi - phi_lo) } else { 1.0 };
    Ok(Some((lo as f64 + frac.clamp(0.0, 1.0)) * tg.dt))
}
