//! Gaussian mixture model storage, validation, repair, and responsibilities.
//!
//! Fits produce raw parameters that noise can push outside the valid set
//! (negative weights, indefinite covariances). [`repair_model`] projects
//! them back: it is total, the identity on already-valid input, and every
//! downstream routine may assume its output invariants (weights on the
//! simplex and strictly positive, covariance eigenvalues at least
//! [`EIG_FLOOR`], cache consistent).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rng::{stage, StreamRng};

/// Smallest admissible covariance eigenvalue. Keeps log-densities finite
/// and Cholesky factorizations well-posed after arbitrary noise.
pub const EIG_FLOOR: f64 = 1e-6;

/// Smallest admissible mixture weight before renormalization.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Fraction of N used to clamp noisy cluster counts in the fits.
pub const COUNT_FLOOR_FRAC: f64 = 1e-6;

/// ln(2π), the normalization constant of the Gaussian log-density.
pub const LN_2PI: f64 = 1.837_877_066_409_345_6;

#[derive(Clone, Debug)]
pub struct ComponentCache {
    pub chol: Mat,
    pub inv: Mat,
    pub log_det: f64,
}

/// A K-component Gaussian mixture with cached per-component factors.
#[derive(Clone, Debug)]
pub struct MixtureModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Mat>,
    cache: Vec<ComponentCache>,
}

/// Plain-data mirror of a model for serialization; covariances are stored
/// row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParts {
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl MixtureModel {
    /// Validates parameters and builds the cache. Weights must already sum
    /// to 1 within 1e-9 with every entry positive; covariances must be
    /// symmetric positive definite.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Mat>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::InvalidArgument("component count mismatch"));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("weights must be positive and sum to 1"));
        }
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidArgument("mean dimension mismatch"));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean"));
        }
        let mut cache = Vec::with_capacity(k);
        for cov in &covariances {
            if cov.n_rows() != d || cov.n_cols() != d {
                return Err(Error::InvalidArgument("covariance dimension mismatch"));
            }
            let chol = linalg::cholesky(cov)?;
            let log_det = 2.0 * (0..d).map(|i| libm::log(chol.at(i, i))).sum::<f64>();
            let inv = linalg::spd_inverse(&chol);
            cache.push(ComponentCache { chol, inv, log_det });
        }
        Ok(MixtureModel { weights, means, covariances, cache })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k]
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariance(&self, k: usize) -> &Mat {
        &self.covariances[k]
    }

    pub fn cache(&self, k: usize) -> &ComponentCache {
        &self.cache[k]
    }

    /// Per-component log of (weight × Gaussian density) at `x`.
    pub fn log_component_densities(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim() as f64;
        let mut out = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let diff = linalg::sub(x, &self.means[k]);
            let z = linalg::solve_lower(&self.cache[k].chol, &diff);
            let q = linalg::dot(&z, &z);
            out.push(libm::log(self.weights[k]) - 0.5 * (d * LN_2PI + self.cache[k].log_det + q));
        }
        out
    }

    pub fn to_parts(&self) -> ModelParts {
        ModelParts {
            d: self.dim(),
            weights: self.weights.clone(),
            means: self.means.clone(),
            covariances: self.covariances.iter().map(|c| c.data().to_vec()).collect(),
        }
    }

    pub fn from_parts(parts: &ModelParts) -> Result<Self> {
        let d = parts.d;
        let covs: Result<Vec<Mat>> = parts
            .covariances
            .iter()
            .map(|flat| {
                if flat.len() != d * d {
                    return Err(Error::InvalidArgument("covariance length must be D*D"));
                }
                let mut m = Mat::zeros(d, d);
                for r in 0..d {
                    for c in 0..d {
                        m.set(r, c, flat[r * d + c]);
                    }
                }
                Ok(m)
            })
            .collect();
        MixtureModel::new(parts.weights.clone(), parts.means.clone(), covs?)
    }
}

/// Posterior membership probabilities of `x`, computed in log space.
/// Identical to the dynamics weights ω_k(x); exposed under both names.
pub fn responsibilities(model: &MixtureModel, x: &[f64]) -> Vec<f64> {
    let lc = model.log_component_densities(x);
    let m = lc.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = lc.iter().map(|&v| libm::exp(v - m)).collect();
    let s: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= s;
    }
    out
}

/// Index of the largest responsibility; ties break toward the lowest index.
pub fn argmax_responsibility(model: &MixtureModel, x: &[f64]) -> usize {
    let lc = model.log_component_densities(x);
    let mut best = 0;
    for (k, &v) in lc.iter().enumerate().skip(1) {
        if v > lc[best] {
            best = k;
        }
    }
    best
}

/// What `repair_model` had to do.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairEvents {
    pub weights_clamped: usize,
    pub weights_renormalized: bool,
    pub covariances_symmetrized: usize,
    pub eigenvalues_clipped: usize,
}

impl RepairEvents {
    pub fn any(&self) -> bool {
        self.weights_clamped > 0
            || self.weights_renormalized
            || self.covariances_symmetrized > 0
            || self.eigenvalues_clipped > 0
    }
}

/// Projects raw (possibly noise-corrupted) parameters onto the valid set.
///
/// Weights below [`WEIGHT_FLOOR`] are clamped up and the vector is
/// renormalized; covariances are symmetrized and eigenvalues below
/// [`EIG_FLOOR`] are clipped with the eigenbasis kept. Valid input passes
/// through bit-identical.
pub fn repair_model(
    weights: &[f64],
    means: &[Vec<f64>],
    covariances: &[Mat],
) -> Result<(MixtureModel, RepairEvents)> {
    let mut ev = RepairEvents::default();
    let mut w: Vec<f64> = weights.to_vec();
    for v in w.iter_mut() {
        if !v.is_finite() {
            return Err(Error::NonFinite("weight"));
        }
        if *v < WEIGHT_FLOOR {
            *v = WEIGHT_FLOOR;
            ev.weights_clamped += 1;
        }
    }
    let sum: f64 = w.iter().sum();
    if ev.weights_clamped > 0 || (sum - 1.0).abs() > 1e-9 {
        for v in w.iter_mut() {
            *v /= sum;
        }
        ev.weights_renormalized = true;
    }

    let mut covs = Vec::with_capacity(covariances.len());
    for c in covariances {
        if c.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance"));
        }
        let mut c = if c.max_asymmetry() > 0.0 {
            ev.covariances_symmetrized += 1;
            c.symmetrized()
        } else {
            c.clone()
        };
        let (vals, vecs) = linalg::sym_eigen(&c)?;
        if vals.iter().any(|&v| v < EIG_FLOOR) {
            let n = vals.len();
            for i in 0..n {
                if vals[i] < EIG_FLOOR {
                    ev.eigenvalues_clipped += 1;
                }
            }
            // Rebuilding V diag(max(lambda, floor)) V^T rounds at the scale
            // of lambda_max; when the spread exceeds ~1e16 the nominal floor
            // drowns in that rounding and the rebuilt matrix can still fail
            // a Cholesky. Escalate the floor until the factorization holds.
            let mut floor = EIG_FLOOR;
            loop {
                let mut lam = Mat::zeros(n, n);
                for i in 0..n {
                    lam.set(i, i, vals[i].max(floor));
                }
                let cand = vecs.mul_mat(&lam).mul_mat(&vecs.transpose()).symmetrized();
                if linalg::cholesky(&cand).is_ok() {
                    c = cand;
                    break;
                }
                floor *= 10.0;
                if !floor.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        covs.push(c);
    }

    let model = MixtureModel::new(w, means.to_vec(), covs)?;
    Ok((model, ev))
}

/// Data-independent default initialization shared by every fit: means
/// uniform on [-1,1]^D, covariances 0.2·I, uniform weights. Consumes the
/// FIT_INIT fork of the seed's stream, so noise draws elsewhere never shift
/// the starting point.
pub fn default_init(k: usize, d: usize, seed: u64) -> MixtureModel {
    let mut rng = StreamRng::from_seed(seed).fork(stage::FIT_INIT);
    let weights = vec![1.0 / k as f64; k];
    let means: Vec<Vec<f64>> =
        (0..k).map(|_| (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
    let covs: Vec<Mat> = (0..k).map(|_| Mat::scaled_identity(d, 0.2)).collect();
    MixtureModel::new(weights, means, covs).expect("default init parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat2(a: f64, b: f64, c: f64, d: f64) -> Mat {
        Mat::from_rows(&[vec![a, b], vec![c, d]]).unwrap()
    }

    fn two_component_symmetric() -> MixtureModel {
        MixtureModel::new(
            vec![0.5, 0.5],
            vec![vec![-0.5, 0.0], vec![0.5, 0.0]],
            vec![Mat::scaled_identity(2, 0.04), Mat::scaled_identity(2, 0.04)],
        )
        .unwrap()
    }

    #[test]
    fn cache_consistent_with_covariances() {
        let m = two_component_symmetric();
        for k in 0..2 {
            let c = m.cache(k);
            let recon = c.chol.mul_mat(&c.chol.transpose());
            for r in 0..2 {
                for col in 0..2 {
                    assert!((recon.at(r, col) - m.covariance(k).at(r, col)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn responsibilities_symmetric_midpoint() {
        let m = two_component_symmetric();
        let r = responsibilities(&m, &[0.0, 0.0]);
        assert!((r[0] - 0.5).abs() < 1e-12);
        assert!((r[1] - 0.5).abs() < 1e-12);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_single_component() {
        let m = MixtureModel::new(
            vec![1.0],
            vec![vec![0.0]],
            vec![Mat::scaled_identity(1, 1.0)],
        )
        .unwrap();
        assert_eq!(responsibilities(&m, &[3.0]), vec![1.0]);
    }

    #[test]
    fn responsibilities_far_field_dominated() {
        let m = two_component_symmetric();
        let r = responsibilities(&m, &[5.0, 0.0]);
        assert!(r[1] > 1.0 - 1e-6, "right component should dominate: {r:?}");
    }

    #[test]
    fn argmax_ties_break_low() {
        let m = two_component_symmetric();
        assert_eq!(argmax_responsibility(&m, &[0.0, 0.0]), 0);
        assert_eq!(argmax_responsibility(&m, &[0.6, 0.0]), 1);
    }

    #[test]
    fn repair_identity_on_valid_input() {
        let w = vec![0.25, 0.75];
        let means = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let covs = vec![mat2(1.0, 0.2, 0.2, 1.0), Mat::scaled_identity(2, 0.5)];
        let (m, ev) = repair_model(&w, &means, &covs).unwrap();
        assert!(!ev.any(), "{ev:?}");
        assert_eq!(m.weights(), &w[..]);
        assert_eq!(m.covariance(0), &covs[0]);
        assert_eq!(m.covariance(1), &covs[1]);
    }

    #[test]
    fn repair_clips_indefinite_covariance() {
        // [[1,2],[2,1]] has eigenvalues {3, -1}; clipping -1 to the floor
        // reconstructs [[1.5+f/2, 1.5-f/2], ...] with f = EIG_FLOOR
        let covs = vec![mat2(1.0, 2.0, 2.0, 1.0)];
        let (m, ev) = repair_model(&[1.0], &[vec![0.0, 0.0]], &covs).unwrap();
        assert_eq!(ev.eigenvalues_clipped, 1);
        let c = m.covariance(0);
        let want_diag = 1.5 + EIG_FLOOR / 2.0;
        let want_off = 1.5 - EIG_FLOOR / 2.0;
        assert!((c.at(0, 0) - want_diag).abs() < 1e-12, "{}", c.at(0, 0));
        assert!((c.at(0, 1) - want_off).abs() < 1e-12);
        let (vals, _) = linalg::sym_eigen(c).unwrap();
        assert!(vals[0] >= EIG_FLOOR * (1.0 - 1e-9));
    }

    #[test]
    fn repair_clamps_and_renormalizes_weights() {
        let covs = vec![Mat::identity(1), Mat::identity(1), Mat::identity(1)];
        let (m, ev) = repair_model(
            &[0.5, -0.1, 0.6],
            &[vec![0.0], vec![1.0], vec![2.0]],
            &covs,
        )
        .unwrap();
        assert_eq!(ev.weights_clamped, 1);
        assert!(ev.weights_renormalized);
        let s: f64 = m.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(m.weights().iter().all(|&w| w > 0.0));
        // relative order of the valid entries is preserved
        assert!(m.weights()[2] > m.weights()[0]);
        assert!(m.weights()[1] < m.weights()[0]);
    }

    #[test]
    fn default_init_is_deterministic_and_in_box() {
        let a = default_init(6, 2, 42);
        let b = default_init(6, 2, 42);
        for k in 0..6 {
            assert_eq!(a.mean(k), b.mean(k));
            assert!(a.mean(k).iter().all(|v| (-1.0..1.0).contains(v)));
            assert_eq!(a.covariance(k), &Mat::scaled_identity(2, 0.2));
        }
        assert_eq!(a.weights(), &[1.0 / 6.0; 6][..]);
    }

    #[test]
    fn parts_roundtrip() {
        let m = two_component_symmetric();
        let parts = m.to_parts();
        let back = MixtureModel::from_parts(&parts).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.mean(0), m.mean(0));
        assert_eq!(back.covariance(1), m.covariance(1));
    }
}
