//! Transition equilibrium vectors: the index-1 saddles of f = -ln p whose
//! unstable directions flow into two distinct basins.
//!
//! For every pair of component centers a modified quadratic string search
//! relaxes a curve between them toward the lowest-density crossing, Newton
//! refinement polishes the crossing into a critical point, and validation
//! checks the saddle really separates two basins: exactly one negative
//! Hessian eigenvalue, and uphill flows from both sides of the saddle
//! reaching two different centers. Index-1 points whose flows fall into the
//! same basin are not transitions and are dropped, as are higher-index
//! equilibria.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{
    flow_ascend, nearest_with_runner_up, refine_critical, CriticalPoint, Landscape,
    DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER, DEFAULT_STEP,
};
use crate::linalg::{self};

/// Interior samples per string iteration.
pub const DEFAULT_M: usize = 20;
/// String relaxation rounds.
pub const DEFAULT_TAU2: usize = 5;
/// Offset along the unstable eigenvector for validation flows.
pub const DEFAULT_EPS_PERTURB: f64 = 0.05;
/// Records closer than this (in the rescaled unit box) are duplicates.
pub const DEFAULT_DEDUPE_TOL: f64 = 1e-4;

/// A validated saddle between two sub-cluster basins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// Lower center index reached by one validation flow.
    pub a: usize,
    /// Higher center index reached by the other; a < b always.
    pub b: usize,
    /// Saddle location.
    pub t: Vec<f64>,
    /// Barrier height f(t) = -ln p(t); the merge-graph edge weight.
    pub f_value: f64,
    /// p(t), the density at the barrier.
    pub p_value: f64,
    /// Residual gradient norm at t (duplicate resolution keeps the
    /// smallest).
    pub gradient_norm: f64,
}

/// Search parameters for [`find_all_tevs`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TevParams {
    pub m: usize,
    pub tau2: usize,
    pub eps_perturb: f64,
    pub dedupe_tol: f64,
}

impl Default for TevParams {
    fn default() -> Self {
        TevParams {
            m: DEFAULT_M,
            tau2: DEFAULT_TAU2,
            eps_perturb: DEFAULT_EPS_PERTURB,
            dedupe_tol: DEFAULT_DEDUPE_TOL,
        }
    }
}

/// Point of the quadratic string through centers `mu_k`, `mu_l` and the
/// previous interior point `mu_k + v`:
/// `mu_k + s*u + (s - s^2)(4v - 2u)` with `u = mu_l - mu_k`.
///
/// Passes through `mu_k` at s=0, `mu_l` at s=1, and `mu_k + v` at s=1/2.
pub fn quadratic_string_point(mu_k: &[f64], mu_l: &[f64], v: &[f64], s: f64) -> Vec<f64> {
    let d = mu_k.len();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let u = mu_l[j] - mu_k[j];
        out.push(mu_k[j] + s * u + (s - s * s) * (4.0 * v[j] - 2.0 * u));
    }
    out
}

/// Runs the string search between centers `k` and `l` and refines the
/// relaxed minimum-density point into a critical point.
///
/// Returns `Ok(None)` when no candidate can be produced: coincident centers
/// (degenerate noisy fits) or Newton refinement failure. Index and basin
/// checks are [`validate_tev`]'s job, not this one's.
pub fn find_tev_for_pair(
    ls: &Landscape,
    k: usize,
    l: usize,
    m: usize,
    tau2: usize,
    step: f64,
) -> Result<Option<CriticalPoint>> {
    let kk = ls.model().k();
    if k >= kk || l >= kk || k == l {
        return Err(Error::InvalidArgument("pair indices must be distinct and in range"));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("string must sample at least one interior point"));
    }
    let mu_k = ls.model().mean(k).to_vec();
    let mu_l = ls.model().mean(l).to_vec();
    if linalg::dist2(&mu_k, &mu_l) < 1e-24 {
        return Ok(None);
    }
    let d = mu_k.len();

    // Initial guess: lowest-density interior sample of the straight
    // segment (the barrier point of the naive path).
    let mut best = Vec::new();
    let mut best_lp = f64::INFINITY;
    for i in 1..=m {
        let s = i as f64 / (m + 1) as f64;
        let mut p = Vec::with_capacity(d);
        for j in 0..d {
            p.push(mu_k[j] + s * (mu_l[j] - mu_k[j]));
        }
        let lp = ls.log_density(&p);
        if lp < best_lp {
            best_lp = lp;
            best = p;
        }
    }
    // One bounded ascent step from the guess, then tau2 rounds of
    // string evaluation -> minimum-density pick -> one bounded ascent step.
    let mut point = bounded_ascent_step(ls, &best, step);
    for _ in 0..tau2 {
        let v = linalg::sub(&point, &mu_k);
        let mut best = Vec::new();
        let mut best_lp = f64::INFINITY;
        for i in 1..=m {
            let s = i as f64 / (m + 1) as f64;
            let p = quadratic_string_point(&mu_k, &mu_l, &v, s);
            let lp = ls.log_density(&p);
            if lp < best_lp {
                best_lp = lp;
                best = p;
            }
        }
        point = bounded_ascent_step(ls, &best, step);
    }

    match refine_critical(ls, &point, DEFAULT_GRAD_TOL, 200) {
        Ok(cp) => Ok(Some(cp)),
        Err(_) => Ok(None),
    }
}

/// One ascent step with the displacement capped at `step`: forward Euler
/// `x + h*g` with `h = step / max(1, |g|)`, halving on any non-increase of
/// ln p. The cap is what keeps the string iterate inside the saddle's
/// Newton basin; an uncapped step travels `step * |g|`, which for the sharp
/// gradients of fitted mixtures can overshoot clear into a mode's basin.
fn bounded_ascent_step(ls: &Landscape, x: &[f64], step: f64) -> Vec<f64> {
    let g = ls.grad_log_density(x);
    let gn = linalg::norm2(&g);
    if gn <= DEFAULT_GRAD_TOL {
        return x.to_vec();
    }
    let lp = ls.log_density(x);
    let mut h = if gn > 1.0 { step / gn } else { step };
    for _ in 0..60 {
        let cand = linalg::add_scaled(x, h, &g);
        if ls.log_density(&cand) > lp {
            return cand;
        }
        h *= 0.5;
    }
    x.to_vec()
}

/// Checks whether a refined critical point is a transition between two
/// distinct basins, and if so emits the record.
///
/// Requirements, in order: hyperbolic index-1 spectrum; both flows from
/// `t ± eps_perturb * e` (e = the negative-eigenvalue eigenvector of H_f)
/// converge; their endpoints' nearest centers are distinct and within
/// `match_tol` (pass infinity for the pure nearest-center rule). Anything
/// else returns `None`.
pub fn validate_tev(
    ls: &Landscape,
    cp: &CriticalPoint,
    centers: &[Vec<f64>],
    eps_perturb: f64,
    match_tol: f64,
) -> Option<TransitionRecord> {
    if cp.index != 1 || !cp.hyperbolic {
        return None;
    }
    let d = cp.location.len();
    // Unstable direction: eigenvector of the single negative eigenvalue of
    // H_f = -H_lnp, i.e. the largest eigenvalue of H_lnp.
    let h_lnp = ls.hessian_log_density(&cp.location);
    let (vals, vecs) = linalg::sym_eigen(&h_lnp).ok()?;
    let mut top = 0;
    for i in 1..d {
        if vals[i] > vals[top] {
            top = i;
        }
    }
    let e: Vec<f64> = (0..d).map(|j| vecs.at(j, top)).collect();

    let mut hit = [usize::MAX; 2];
    for (side, sign) in [(0usize, 1.0), (1usize, -1.0)] {
        let start = linalg::add_scaled(&cp.location, sign * eps_perturb, &e);
        let flow = flow_ascend(ls, &start, DEFAULT_STEP, DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER);
        if !flow.converged {
            return None;
        }
        let (center, dist, _) = nearest_with_runner_up(&flow.endpoint, centers);
        if dist > match_tol {
            return None;
        }
        hit[side] = center;
    }
    if hit[0] == hit[1] {
        return None;
    }
    let (a, b) = if hit[0] < hit[1] { (hit[0], hit[1]) } else { (hit[1], hit[0]) };
    Some(TransitionRecord {
        a,
        b,
        t: cp.location.clone(),
        f_value: cp.f_value,
        p_value: cp.p_value,
        gradient_norm: cp.gradient_norm,
    })
}

/// Runs the string search over all K(K-1)/2 center pairs, validates every
/// candidate, and canonicalizes the result set.
///
/// Canonicalization is processing-order independent: records are sorted by
/// residual gradient norm before location deduplication (within
/// `dedupe_tol`, the smallest-residual representative survives), duplicate
/// (a,b) edges keep the minimum f_value, and the final list is sorted by
/// (a, b).
pub fn find_all_tevs(ls: &Landscape, params: &TevParams) -> Result<Vec<TransitionRecord>> {
    let k = ls.model().k();
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two components to search for transitions"));
    }
    let centers = ls.model().means().to_vec();
    let mut records: Vec<TransitionRecord> = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            if let Some(cp) =
                find_tev_for_pair(ls, i, j, params.m, params.tau2, DEFAULT_STEP)?
            {
                if let Some(rec) =
                    validate_tev(ls, &cp, &centers, params.eps_perturb, f64::INFINITY)
                {
                    records.push(rec);
                }
            }
        }
    }
    Ok(canonicalize(records, params.dedupe_tol))
}

fn canonicalize(mut records: Vec<TransitionRecord>, dedupe_tol: f64) -> Vec<TransitionRecord> {
    // Canonical processing order: smallest residual first so the survivor
    // of each duplicate group never depends on discovery order.
    records.sort_by(|x, y| {
        x.gradient_norm
            .partial_cmp(&y.gradient_norm)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| x.t.partial_cmp(&y.t).unwrap_or(core::cmp::Ordering::Equal))
            .then_with(|| (x.a, x.b).cmp(&(y.a, y.b)))
    });
    let mut kept: Vec<TransitionRecord> = Vec::new();
    for r in records {
        let dup = kept
            .iter()
            .any(|q| libm::sqrt(linalg::dist2(&q.t, &r.t)) <= dedupe_tol);
        if !dup {
            kept.push(r);
        }
    }
    // One edge per (a,b): keep the lowest barrier.
    let mut out: Vec<TransitionRecord> = Vec::new();
    for r in kept {
        match out.iter_mut().find(|q| q.a == r.a && q.b == r.b) {
            Some(q) => {
                if r.f_value < q.f_value {
                    *q = r;
                }
            }
            None => out.push(r),
        }
    }
    out.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
    out
}
