//! The dynamical layer over a fitted mixture.
//!
//! The clustering geometry lives in the Morse function `f = -ln p` of the
//! mixture density `p`: density modes are minima of `f`, and the saddle
//! structure between them decides which sub-clusters merge. This module
//! provides `ln p`, its analytic gradient and Hessian, a monotone
//! gradient-ascent integrator, Newton refinement of critical points with
//! index classification, and basin assignment by flow.
//!
//! The ascent metric is fixed to the identity: critical-point locations and
//! indices are invariant under any fixed SPD change of metric, so the
//! cheapest choice loses nothing (covered by a test).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};
use crate::model::{responsibilities, MixtureModel};

/// Default Euler step for gradient ascent.
pub const DEFAULT_STEP: f64 = 0.05;
/// Default gradient-norm stopping tolerance.
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
/// Default iteration budget for flows and refinement.
pub const DEFAULT_MAX_ITER: usize = 5000;
/// Eigenvalues of H_f below this magnitude mark a point non-hyperbolic.
pub const HESS_TOL: f64 = 1e-8;

/// Immutable view of a mixture as a smooth landscape.
#[derive(Clone, Debug)]
pub struct Landscape {
    model: MixtureModel,
}

impl Landscape {
    pub fn new(model: MixtureModel) -> Self {
        Landscape { model }
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    /// ln p(x), evaluated in log-space with the cached factorizations.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let logs = self.model.log_component_densities(x);
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| libm::exp(l - m)).sum();
        m + libm::log(sum)
    }

    /// p(x).
    pub fn density(&self, x: &[f64]) -> f64 {
        libm::exp(self.log_density(x))
    }

    /// The Morse function f(x) = -ln p(x).
    pub fn f_value(&self, x: &[f64]) -> f64 {
        -self.log_density(x)
    }

    /// Normalized per-component weights at x (the dynamical weights; same
    /// quantity as the fitting responsibilities).
    pub fn mixture_weights_at(&self, x: &[f64]) -> Vec<f64> {
        responsibilities(&self.model, x)
    }

    /// Analytic gradient of ln p: -Σ_k ω_k(x) Σ_k⁻¹ (x - μ_k).
    pub fn grad_log_density(&self, x: &[f64]) -> Vec<f64> {
        let d = self.model.dim();
        let omega = self.mixture_weights_at(x);
        let mut g = vec![0.0; d];
        for k in 0..self.model.k() {
            let diff = linalg::sub(x, self.model.mean(k));
            let y = self.model.cache(k).inv.mul_vec(&diff);
            for j in 0..d {
                g[j] -= omega[k] * y[j];
            }
        }
        g
    }

    /// ln p(x) and its gradient from one pass over the components.
    ///
    /// Bit-identical to calling [`Self::log_density`] and
    /// [`Self::grad_log_density`] separately (same expressions in the same
    /// order), but shares the per-component work and avoids the per-call
    /// temporaries, which matters when flowing thousands of points.
    pub fn log_density_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.model.dim();
        let kk = self.model.k();
        let mut lc = vec![0.0; kk];
        let mut diff = vec![0.0; d];
        let mut z = vec![0.0; d];
        let dd = d as f64;
        for k in 0..kk {
            let mean = self.model.mean(k);
            for j in 0..d {
                diff[j] = x[j] - mean[j];
            }
            let chol = &self.model.cache(k).chol;
            for i in 0..d {
                let mut s = diff[i];
                for t in 0..i {
                    s -= chol.at(i, t) * z[t];
                }
                z[i] = s / chol.at(i, i);
            }
            let q = linalg::dot(&z, &z);
            lc[k] = libm::log(self.model.weights()[k])
                - 0.5 * (dd * crate::model::LN_2PI + self.model.cache(k).log_det + q);
        }
        let m = lc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in lc.iter_mut() {
            *v = libm::exp(*v - m);
            sum += *v;
        }
        let lp = m + libm::log(sum);
        let mut g = vec![0.0; d];
        for k in 0..kk {
            let omega = lc[k] / sum;
            let mean = self.model.mean(k);
            for j in 0..d {
                diff[j] = x[j] - mean[j];
            }
            let inv = &self.model.cache(k).inv;
            for a in 0..d {
                let row = inv.row(a);
                let mut acc = 0.0;
                for b in 0..d {
                    acc += row[b] * diff[b];
                }
                g[a] -= omega * acc;
            }
        }
        (lp, g)
    }

    /// Analytic Hessian of ln p:
    /// Σ_k ω_k [Σ_k⁻¹(x-μ_k)(x-μ_k)ᵀΣ_k⁻¹ - Σ_k⁻¹] - ∇ln p ∇ln pᵀ.
    /// Symmetric by construction (both off-diagonal halves are the same
    /// stored value).
    pub fn hessian_log_density(&self, x: &[f64]) -> Mat {
        let d = self.model.dim();
        let omega = self.mixture_weights_at(x);
        let g = self.grad_log_density(x);
        let mut h = Mat::zeros(d, d);
        for k in 0..self.model.k() {
            let diff = linalg::sub(x, self.model.mean(k));
            let inv = &self.model.cache(k).inv;
            let y = inv.mul_vec(&diff);
            for a in 0..d {
                for b in a..d {
                    let v = omega[k] * (y[a] * y[b] - inv.at(a, b));
                    h.add_at(a, b, v);
                    if b != a {
                        h.add_at(b, a, v);
                    }
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = g[a] * g[b];
                h.add_at(a, b, -v);
                if b != a {
                    h.add_at(b, a, -v);
                }
            }
        }
        h
    }
}

/// Outcome of a gradient-flow ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub endpoint: Vec<f64>,
    /// Gradient norm fell below the tolerance.
    pub converged: bool,
    /// Accepted Euler steps taken.
    pub steps: usize,
}

/// Newton certification of a stalled ascent: if the refiner converges to a
/// density mode (index 0) within a short hop of the stall point, the flow's
/// limit is that mode and the stall was only the integrator running out of
/// resolution. Near-singular components make modes so sharp that a capped
/// Euler step cannot push the gradient norm under `grad_tol` in any
/// reasonable iteration budget, yet the iterate is already visually at the
/// mode. The hop bound keeps Newton from teleporting a mid-slope stall
/// into a distant critical point; a stall that refines to a saddle stays
/// unconverged.
fn certify_stall(ls: &Landscape, x: &[f64], step: f64, grad_tol: f64) -> Option<Vec<f64>> {
    let cp = refine_critical(ls, x, grad_tol, 50).ok()?;
    if cp.index != 0 {
        return None;
    }
    let hop = 10.0 * step;
    if linalg::dist2(&cp.location, x) > hop * hop {
        return None;
    }
    Some(cp.location)
}

/// Forward-Euler ascent of ln p with backtracking step halving, calling
/// `observe` on every accepted iterate (including the start). ln p is
/// non-decreasing along the observed sequence.
///
/// Stops converged when the gradient norm reaches `grad_tol`, or when the
/// ascent has exhausted floating-point resolution: the update reproduces
/// `x` bitwise, or ln p has not strictly increased for a window of accepted
/// steps. Improvements in ln p below one ulp are invisible to the line
/// search, and that blindness only sets in within ~1e-9 of a critical
/// point, so a resolution-exhausted iterate sits at the flow's attractor
/// for every practical purpose (its distance to the true mode is far below
/// any downstream matching tolerance).
///
/// Every stop except a clean `grad_tol` hit runs [`certify_stall`]; when it
/// certifies, the returned endpoint is the refined mode and the flow counts
/// as converged. The refined endpoint is the flow's limit rather than an
/// Euler iterate, so it is not passed to `observe`.
pub fn flow_ascend_observed(
    ls: &Landscape,
    x0: &[f64],
    step: f64,
    grad_tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[f64]),
) -> FlowResult {
    // Accepted steps without a strict ln p increase before the iterate is
    // declared a fixed point of the discrete dynamics.
    const FLAT_WINDOW: usize = 20;
    let mut x = x0.to_vec();
    let (mut lp, mut g) = ls.log_density_and_grad(&x);
    observe(&x);
    let mut flat_steps = 0usize;
    // Warm start for the backtracking: in stiff regions (a component with
    // near-degenerate covariance) the stable step is orders of magnitude
    // below the cap, and restarting each line search at the cap would pay
    // ~10 rejected evaluations per accepted step. Doubling from the last
    // accepted value recovers the cap within a few steps once the stiff
    // region is left.
    let mut h_accept = f64::INFINITY;
    for it in 0..max_iter {
        let gn = linalg::norm2(&g);
        if gn <= grad_tol {
            return FlowResult { endpoint: x, converged: true, steps: it };
        }
        // Cap the displacement at `step`: near tight components the
        // gradient norm can exceed 50, and an uncapped Euler step h*g
        // would jump across basin boundaries while still increasing
        // ln p, corrupting basin assignment.
        let cap = if gn > 1.0 { step / gn } else { step };
        let mut h = (2.0 * h_accept).min(cap);
        loop {
            let cand = linalg::add_scaled(&x, h, &g);
            if cand == x {
                // Fixed point at floating-point resolution: any smaller
                // step reproduces x as well.
                if let Some(refined) = certify_stall(ls, &x, step, grad_tol) {
                    return FlowResult { endpoint: refined, converged: true, steps: it };
                }
                return FlowResult { endpoint: x, converged: true, steps: it };
            }
            let (lp_cand, g_cand) = ls.log_density_and_grad(&cand);
            if lp_cand >= lp {
                flat_steps = if lp_cand > lp { 0 } else { flat_steps + 1 };
                h_accept = h;
                x = cand;
                lp = lp_cand;
                g = g_cand;
                observe(&x);
                break;
            }
            h *= 0.5;
            if h < 1e-18 {
                // No ascent possible at floating-point resolution.
                if let Some(refined) = certify_stall(ls, &x, step, grad_tol) {
                    return FlowResult { endpoint: refined, converged: true, steps: it };
                }
                return FlowResult { endpoint: x, converged: false, steps: it };
            }
        }
        if flat_steps >= FLAT_WINDOW {
            if let Some(refined) = certify_stall(ls, &x, step, grad_tol) {
                return FlowResult { endpoint: refined, converged: true, steps: it + 1 };
            }
            return FlowResult { endpoint: x, converged: true, steps: it + 1 };
        }
    }
    let converged = linalg::norm2(&g) <= grad_tol;
    if !converged {
        if let Some(refined) = certify_stall(ls, &x, step, grad_tol) {
            return FlowResult { endpoint: refined, converged: true, steps: max_iter };
        }
    }
    FlowResult { endpoint: x, converged, steps: max_iter }
}

/// [`flow_ascend_observed`] without the observer.
pub fn flow_ascend(
    ls: &Landscape,
    x0: &[f64],
    step: f64,
    grad_tol: f64,
    max_iter: usize,
) -> FlowResult {
    flow_ascend_observed(ls, x0, step, grad_tol, max_iter, |_| {})
}

/// A refined equilibrium of the flow, classified by the spectrum of
/// H_f = -H_{ln p}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    /// Number of negative eigenvalues of H_f (0 = density mode, 1 = the
    /// transition case, ... up to D).
    pub index: usize,
    /// f(location) = -ln p.
    pub f_value: f64,
    /// p(location).
    pub p_value: f64,
    pub gradient_norm: f64,
    /// All |eigenvalues| of H_f exceed the hyperbolicity tolerance.
    pub hyperbolic: bool,
}

/// Newton refinement that did not reach the gradient tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineFailure {
    pub last: Vec<f64>,
    pub gradient_norm: f64,
}

/// Newton iteration on ∇ln p = 0 from `x0` using the analytic Hessian.
///
/// The symmetric Newton system is solved through an eigendecomposition;
/// eigenvalues below the regularization floor in magnitude are pushed away
/// from zero with their sign kept (zero counts as positive), which is the
/// Levenberg-style guard for near-singular Hessians. Steps are capped at
/// unit length. Classification happens only after the gradient tolerance is
/// met; otherwise the last iterate is reported as a failure.
pub fn refine_critical(
    ls: &Landscape,
    x0: &[f64],
    grad_tol: f64,
    max_iter: usize,
) -> core::result::Result<CriticalPoint, RefineFailure> {
    let d = x0.len();
    let mut x = x0.to_vec();
    for _ in 0..max_iter {
        let g = ls.grad_log_density(&x);
        let gn = linalg::norm2(&g);
        if gn <= grad_tol {
            return Ok(classify(ls, x, gn));
        }
        let h = ls.hessian_log_density(&x);
        let (vals, vecs) = match linalg::sym_eigen(&h) {
            Ok(e) => e,
            Err(_) => return Err(RefineFailure { last: x, gradient_norm: gn }),
        };
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (scale * 1e-12).max(1e-12);
        // delta = -H⁻¹ g in the eigenbasis, with regularized eigenvalues.
        let mut delta = vec![0.0; d];
        for i in 0..d {
            let mut lam = vals[i];
            if lam.abs() < floor {
                lam = if lam < 0.0 { -floor } else { floor };
            }
            let mut proj = 0.0;
            for j in 0..d {
                proj += vecs.at(j, i) * g[j];
            }
            let coef = -proj / lam;
            for j in 0..d {
                delta[j] += coef * vecs.at(j, i);
            }
        }
        let dn = linalg::norm2(&delta);
        let cap = 1.0;
        if dn > cap {
            for j in 0..d {
                delta[j] *= cap / dn;
            }
        }
        // Damped acceptance: between sharp modes the gradient field is
        // nonlinear enough that full Newton steps leapfrog out of the
        // root's basin, so halve the step until the residual shrinks.
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..40 {
            let cand = linalg::add_scaled(&x, t, &delta);
            if linalg::norm2(&ls.grad_log_density(&cand)) < gn {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(cand) => x = cand,
            None => return Err(RefineFailure { last: x, gradient_norm: gn }),
        }
    }
    let g = ls.grad_log_density(&x);
    let gn = linalg::norm2(&g);
    if gn <= grad_tol {
        return Ok(classify(ls, x, gn));
    }
    Err(RefineFailure { last: x, gradient_norm: gn })
}

fn classify(ls: &Landscape, location: Vec<f64>, gradient_norm: f64) -> CriticalPoint {
    let h_lnp = ls.hessian_log_density(&location);
    let d = location.len();
    let mut h_f = Mat::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            h_f.set(a, b, -h_lnp.at(a, b));
        }
    }
    // H_f is symmetric by construction, so the eigensolve cannot fail.
    let (vals, _) = linalg::sym_eigen(&h_f).expect("symmetric Hessian");
    let index = vals.iter().filter(|&&v| v < 0.0).count();
    let hyperbolic = vals.iter().all(|v| v.abs() > HESS_TOL);
    let lp = ls.log_density(&location);
    CriticalPoint {
        location,
        index,
        f_value: -lp,
        p_value: libm::exp(lp),
        gradient_norm,
        hyperbolic,
    }
}

/// Basin membership of a point, decided by flowing uphill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinAssignment {
    /// Index of the center nearest the flow endpoint (ties to the lowest
    /// index).
    pub center: usize,
    /// Endpoint landed within `match_tol` of the reported center.
    pub confident: bool,
    /// Next-nearest center is essentially as close (symmetry boundary).
    pub boundary: bool,
    /// The flow itself converged.
    pub converged: bool,
}

/// Flows uphill from `x` and reports the nearest center to the endpoint.
pub fn assign_basin(
    ls: &Landscape,
    x: &[f64],
    centers: &[Vec<f64>],
    match_tol: f64,
    step: f64,
    grad_tol: f64,
    max_iter: usize,
) -> BasinAssignment {
    let flow = flow_ascend(ls, x, step, grad_tol, max_iter);
    let (center, dist, runner_up) = nearest_with_runner_up(&flow.endpoint, centers);
    BasinAssignment {
        center,
        confident: dist <= match_tol,
        boundary: (runner_up - dist).abs() <= 1e-9,
        converged: flow.converged,
    }
}

/// Returns (argmin index, its distance, second-smallest distance). Ties go
/// to the lowest index; with a single center the runner-up is infinite.
pub(crate) fn nearest_with_runner_up(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    let mut second = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = libm::sqrt(linalg::dist2(x, c));
        if d < best_d {
            second = best_d;
            best_d = d;
            best = i;
        } else if d < second {
            second = d;
        }
    }
    (best, best_d, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LN_2PI;
    use crate::rng::StreamRng;

    fn single(mean: Vec<f64>, cov: Mat) -> Landscape {
        let d = mean.len();
        assert_eq!(cov.n_rows(), d);
        Landscape::new(MixtureModel::new(vec![1.0], vec![mean], vec![cov]).unwrap())
    }

    fn symmetric_pair() -> Landscape {
        Landscape::new(
            MixtureModel::new(
                vec![0.5, 0.5],
                vec![vec![-0.5, 0.0], vec![0.5, 0.0]],
                vec![Mat::scaled_identity(2, 0.04), Mat::scaled_identity(2, 0.04)],
            )
            .unwrap(),
        )
    }

    /// Random valid model: means in [-1,1]^D, covariances AᵀA + diag floor.
    fn random_model(k: usize, d: usize, rng: &mut StreamRng) -> MixtureModel {
        let mut weights: Vec<f64> = (0..k).map(|_| rng.uniform(0.2, 1.0)).collect();
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
        let means: Vec<Vec<f64>> =
            (0..k).map(|_| (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let covs: Vec<Mat> = (0..k)
            .map(|_| {
                let mut a = Mat::zeros(d, d);
                for r in 0..d {
                    for c in 0..d {
                        a.set(r, c, rng.uniform(-0.3, 0.3));
                    }
                }
                let mut s = a.transpose().mul_mat(&a);
                for i in 0..d {
                    s.add_at(i, i, rng.uniform(0.1, 0.3));
                }
                s.symmetrized()
            })
            .collect();
        MixtureModel::new(weights, means, covs).unwrap()
    }

    #[test]
    fn fused_eval_matches_separate_calls_bitwise() {
        let mut rng = StreamRng::from_seed(77);
        for case in 0..100 {
            let k = 1 + (case % 5);
            let d = 1 + (case % 3);
            let ls = Landscape::new(random_model(k, d, &mut rng));
            let x: Vec<f64> = (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let (lp, g) = ls.log_density_and_grad(&x);
            assert_eq!(lp.to_bits(), ls.log_density(&x).to_bits());
            let g2 = ls.grad_log_density(&x);
            for j in 0..d {
                assert_eq!(g[j].to_bits(), g2[j].to_bits(), "case {case} coord {j}");
            }
        }
    }

    #[test]
    fn log_density_standard_normal_origin() {
        let ls = single(vec![0.0, 0.0], Mat::identity(2));
        assert!((ls.log_density(&[0.0, 0.0]) + LN_2PI).abs() < 1e-15);
        assert!((ls.density(&[0.0, 0.0]) - libm::exp(-LN_2PI)).abs() < 1e-16);
        assert!((ls.f_value(&[0.0, 0.0]) - LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn log_density_translation_equivariance() {
        let mut rng = StreamRng::from_seed(101);
        for _ in 0..20 {
            let model = random_model(3, 2, &mut rng);
            let c = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let shifted = MixtureModel::new(
                model.weights().to_vec(),
                model
                    .means()
                    .iter()
                    .map(|m| vec![m[0] + c[0], m[1] + c[1]])
                    .collect(),
                (0..3).map(|k| model.covariance(k).clone()).collect(),
            )
            .unwrap();
            let x = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let a = Landscape::new(shifted).log_density(&x);
            let b = Landscape::new(model).log_density(&[x[0] - c[0], x[1] - c[1]]);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_density_two_term_hand_sum() {
        let ls = symmetric_pair();
        // Each term: w * (2π)^{-1} |Σ|^{-1/2} exp(-q/2), q = 0.25/0.04.
        let term = 0.5 / (2.0 * core::f64::consts::PI * 0.04) * libm::exp(-0.5 * 0.25 / 0.04);
        let want = libm::log(2.0 * term);
        assert!((ls.log_density(&[0.0, 0.0]) - want).abs() < 1e-13);
    }

    #[test]
    fn gradient_zero_at_single_mode() {
        let ls = single(vec![0.3, -0.2], Mat::scaled_identity(2, 0.05));
        assert_eq!(ls.grad_log_density(&[0.3, -0.2]), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = StreamRng::from_seed(77);
        let mut cases = 0;
        while cases < 200 {
            let k = 1 + (rng.next_f64() * 4.0) as usize;
            let d = 1 + (rng.next_f64() * 3.0) as usize;
            let model = random_model(k, d, &mut rng);
            let ls = Landscape::new(model);
            let x: Vec<f64> = (0..d).map(|_| rng.uniform(-1.5, 1.5)).collect();
            let g = ls.grad_log_density(&x);
            let h = 1e-5;
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (ls.log_density(&xp) - ls.log_density(&xm)) / (2.0 * h);
                let scale = 1.0f64.max(linalg::norm2(&g));
                assert!(
                    (fd - g[j]).abs() <= 1e-6 * scale,
                    "fd {fd} vs analytic {} at k={k} d={d}",
                    g[j]
                );
            }
            cases += 1;
        }
    }

    #[test]
    fn gradient_symmetric_midpoint_axis_component() {
        let ls = symmetric_pair();
        let g = ls.grad_log_density(&[0.0, 0.0]);
        assert!(g[0].abs() < 1e-14);
    }

    #[test]
    fn hessian_standard_normal_is_minus_identity() {
        let ls = single(vec![0.0, 0.0], Mat::identity(2));
        for x in [[0.0, 0.0], [0.7, -0.3], [2.0, 1.5]] {
            let h = ls.hessian_log_density(&x);
            for a in 0..2 {
                for b in 0..2 {
                    let want = if a == b { -1.0 } else { 0.0 };
                    assert!((h.at(a, b) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = StreamRng::from_seed(78);
        for _ in 0..200 {
            let k = 1 + (rng.next_f64() * 4.0) as usize;
            let d = 1 + (rng.next_f64() * 3.0) as usize;
            let model = random_model(k, d, &mut rng);
            let ls = Landscape::new(model);
            let x: Vec<f64> = (0..d).map(|_| rng.uniform(-1.5, 1.5)).collect();
            let hess = ls.hessian_log_density(&x);
            let h = 1e-5;
            let mut scale = 1.0f64;
            for a in 0..d {
                for b in 0..d {
                    scale = scale.max(hess.at(a, b).abs());
                }
            }
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let gp = ls.grad_log_density(&xp);
                let gm = ls.grad_log_density(&xm);
                for i in 0..d {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!(
                        (fd - hess.at(i, j)).abs() <= 1e-5 * scale,
                        "fd {fd} vs analytic {}",
                        hess.at(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_exactly_symmetric() {
        let mut rng = StreamRng::from_seed(79);
        for _ in 0..50 {
            let model = random_model(3, 3, &mut rng);
            let ls = Landscape::new(model);
            let x: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            assert_eq!(ls.hessian_log_density(&x).max_asymmetry(), 0.0);
        }
    }

    #[test]
    fn omega_positive_and_normalized() {
        let mut rng = StreamRng::from_seed(80);
        for _ in 0..50 {
            let model = random_model(4, 2, &mut rng);
            let ls = Landscape::new(model);
            let x = [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
            let w = ls.mixture_weights_at(&x);
            assert!(w.iter().all(|&v| v > 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let r = responsibilities(ls.model(), &x);
            for (a, b) in w.iter().zip(r.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn flow_fixed_point_at_mode() {
        let ls = single(vec![0.1, 0.2], Mat::scaled_identity(2, 0.05));
        let r = flow_ascend(&ls, &[0.1, 0.2], DEFAULT_STEP, DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER);
        assert!(r.converged);
        assert_eq!(r.steps, 0);
        assert_eq!(r.endpoint, vec![0.1, 0.2]);
    }

    #[test]
    fn flow_1d_reaches_bisection_root() {
        let ls = Landscape::new(
            MixtureModel::new(
                vec![0.5, 0.5],
                vec![vec![-2.0], vec![2.0]],
                vec![Mat::identity(1), Mat::identity(1)],
            )
            .unwrap(),
        );
        // Bisection on the 1D gradient over [1.5, 2.5].
        let mut lo = 1.5;
        let mut hi = 2.5;
        assert!(ls.grad_log_density(&[lo])[0] > 0.0);
        assert!(ls.grad_log_density(&[hi])[0] < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ls.grad_log_density(&[mid])[0] > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let r = flow_ascend(&ls, &[1.9], DEFAULT_STEP, DEFAULT_GRAD_TOL, 100000);
        assert!(r.converged);
        assert!((r.endpoint[0] - root).abs() < 1e-6, "{} vs {root}", r.endpoint[0]);
    }

    #[test]
    fn flow_monotone_and_bounded_on_random_starts() {
        let mut rng = StreamRng::from_seed(81);
        let model = random_model(4, 2, &mut rng);
        let ls = Landscape::new(model);
        let mean_envelope = ls
            .model()
            .means()
            .iter()
            .map(|m| linalg::norm2(m))
            .fold(0.0f64, f64::max);
        for _ in 0..100 {
            let x0 = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let envelope = 10.0 * linalg::norm2(&x0).max(mean_envelope).max(1.0);
            let mut lps: Vec<f64> = Vec::new();
            let r = flow_ascend_observed(
                &ls,
                &x0,
                DEFAULT_STEP,
                DEFAULT_GRAD_TOL,
                DEFAULT_MAX_ITER,
                |x| {
                    assert!(linalg::norm2(x) <= envelope, "trajectory escaped");
                    lps.push(ls.log_density(x));
                },
            );
            for w in lps.windows(2) {
                assert!(w[1] >= w[0], "ln p decreased along the flow");
            }
            assert!(r.endpoint.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn refine_at_exact_mode() {
        let ls = single(vec![0.3, -0.2], Mat::scaled_identity(2, 0.05));
        let cp = refine_critical(&ls, &[0.3, -0.2], DEFAULT_GRAD_TOL, 100).unwrap();
        assert_eq!(cp.index, 0);
        assert_eq!(cp.location, vec![0.3, -0.2]);
        assert!(cp.hyperbolic);
        assert_eq!(cp.gradient_norm, 0.0);
        assert!((cp.f_value + libm::log(cp.p_value) as f64).abs() < 1e-12);
    }

    #[test]
    fn refine_finds_midpoint_saddle() {
        let ls = symmetric_pair();
        let cp = refine_critical(&ls, &[0.02, 0.013], DEFAULT_GRAD_TOL, 200).unwrap();
        assert!(linalg::norm2(&cp.location) < 1e-8, "saddle at {:?}", cp.location);
        assert_eq!(cp.index, 1);
        assert!(cp.hyperbolic);
        assert!(cp.gradient_norm <= DEFAULT_GRAD_TOL);
    }

    #[test]
    fn refine_far_tail_postcondition() {
        let ls = symmetric_pair();
        match refine_critical(&ls, &[5.0, 5.0], DEFAULT_GRAD_TOL, 50) {
            Ok(cp) => assert!(cp.gradient_norm <= DEFAULT_GRAD_TOL),
            Err(fail) => assert!(fail.gradient_norm > DEFAULT_GRAD_TOL),
        }
    }

    #[test]
    fn basin_of_a_center_is_itself() {
        let ls = symmetric_pair();
        let centers = ls.model().means().to_vec();
        for (i, c) in centers.iter().enumerate() {
            let a = assign_basin(&ls, c, &centers, 0.1, DEFAULT_STEP, DEFAULT_GRAD_TOL, 5000);
            assert_eq!(a.center, i);
            assert!(a.confident);
            assert!(a.converged);
            assert!(!a.boundary);
        }
    }

    #[test]
    fn basin_boundary_point_ties_low_and_flags() {
        let ls = symmetric_pair();
        let centers = ls.model().means().to_vec();
        // On the symmetry hyperplane the flow stays on x=0 and ends at the
        // on-axis saddle, equidistant from both centers.
        let a = assign_basin(&ls, &[0.0, 0.4], &centers, 0.1, DEFAULT_STEP, DEFAULT_GRAD_TOL, 5000);
        assert_eq!(a.center, 0);
        assert!(a.boundary);
    }

    #[test]
    fn basin_assignment_separates_blobs() {
        let data = crate::dataset::make_blobs(
            &[vec![-0.5, 0.0], vec![0.5, 0.0]],
            0.03,
            40,
            13,
        )
        .unwrap();
        let (model, _) = crate::fit::fit_em(&data, 2, 10, true, 4).unwrap();
        let ls = Landscape::new(model);
        let centers = ls.model().means().to_vec();
        let labels = data.labels.clone().unwrap();
        let mut by_label = [usize::MAX, usize::MAX];
        for i in 0..data.n() {
            let a = assign_basin(
                &ls,
                data.row(i),
                &centers,
                0.1,
                DEFAULT_STEP,
                DEFAULT_GRAD_TOL,
                20000,
            );
            assert!(a.converged && a.confident);
            let l = labels[i];
            if by_label[l] == usize::MAX {
                by_label[l] = a.center;
            }
            assert_eq!(a.center, by_label[l], "row {i} crossed basins");
        }
        assert_ne!(by_label[0], by_label[1]);
    }

    #[test]
    fn metric_change_preserves_critical_locations() {
        let ls = symmetric_pair();
        // Fixed SPD metric R; ascent direction R⁻¹ ∇ln p still increases
        // ln p, and the roots of the premultiplied gradient are unchanged.
        let r = Mat::from_rows(&[vec![2.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let r_chol = linalg::cholesky(&r).unwrap();
        let premult_flow = |x0: &[f64]| -> Vec<f64> {
            let mut x = x0.to_vec();
            let mut lp = ls.log_density(&x);
            for _ in 0..200000 {
                let g = ls.grad_log_density(&x);
                let dir = linalg::spd_solve(&r_chol, &g);
                if linalg::norm2(&dir) <= 1e-10 {
                    break;
                }
                let mut h = DEFAULT_STEP;
                loop {
                    let cand = linalg::add_scaled(&x, h, &dir);
                    let lp_cand = ls.log_density(&cand);
                    if lp_cand >= lp {
                        x = cand;
                        lp = lp_cand;
                        break;
                    }
                    h *= 0.5;
                    if h < 1e-18 {
                        return x;
                    }
                }
            }
            x
        };
        for start in [[-0.3, 0.1], [0.4, -0.2]] {
            let plain = flow_ascend(&ls, &start, DEFAULT_STEP, 1e-10, 200000);
            let tilted = premult_flow(&start);
            let a = refine_critical(&ls, &plain.endpoint, 1e-12, 100).unwrap();
            let b = refine_critical(&ls, &tilted, 1e-12, 100).unwrap();
            for j in 0..2 {
                assert!((a.location[j] - b.location[j]).abs() < 1e-6);
            }
            assert_eq!(a.index, b.index);
        }
    }
}
