//! Noise calibration, noise sampling, symmetric packing, and a sensitivity
//! auditor.
//!
//! Budget accounting: each fit iteration releases, per cluster, a noisy
//! count, a noisy coordinate sum, and a noisy packed second moment. Over τ
//! iterations the zero-concentrated-DP cost is ρ = r·τ/(2σ²) with r the
//! per-iteration sensitivity weight; the (ε, δ) guarantee follows from
//! ρ + 2·sqrt(ρ·ln(1/δ)) ≤ ε. [`calibrate_sigma`] inverts that relation in
//! closed form, which is why the identity holds to floating-point accuracy
//! rather than approximately.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::StreamRng;

/// Mechanism family: per-iteration Gaussian releases for the hard-EM fit,
/// or the Lloyd-style mix (Laplace per iteration, Gaussian final pass).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    GaussianMogHard,
    LloydMixed,
}

/// Privacy budget and iteration count for one fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub tau: usize,
    pub mechanism: Mechanism,
}

impl PrivacySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be positive and finite"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument("delta must lie in (0, 1)"));
        }
        if self.tau == 0 {
            return Err(Error::InvalidArgument("tau must be at least 1"));
        }
        Ok(())
    }
}

/// Calibrated noise scale together with its accounting certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub sigma: f64,
    /// Per-release sensitivity weight (integer by construction).
    pub r: u64,
    /// Total zCDP budget actually spent at this sigma.
    pub rho: f64,
}

/// Sensitivity weight of one hard-EM iteration across all per-cluster
/// statistics: 1 (count) + 2²·D (sum, width-2 coordinates) + 1·D (squared
/// diagonal) + 2²·D(D−1)/2 (off-diagonal pairs) = 1 + 3D + 2D².
pub fn r_mog_hard(d: usize) -> u64 {
    debug_assert!(d >= 1);
    let d = d as u64;
    1 + 3 * d + 2 * d * d
}

/// Sensitivity weight of the whole Lloyd-style run: τ Laplace iterations of
/// count+sum cost (2D+1)²τ² after pure-DP-to-zCDP conversion, plus the one
/// Gaussian second-moment pass costing D(2D−1).
pub fn r_lloyd(d: usize, tau: usize) -> u64 {
    debug_assert!(d >= 1 && tau >= 1);
    let d = d as u64;
    let t = tau as u64;
    (2 * d + 1) * (2 * d + 1) * t * t + d * (2 * d - 1)
}

/// Closed-form noise scale meeting the (ε, δ) target.
///
/// σ = sqrt(w/2) · (sqrt(ln(1/δ)+ε) + sqrt(ln(1/δ))) / ε, where w = r·τ for
/// the Gaussian mechanism and w = r for the Lloyd mix (τ already inside r).
/// Because sqrt(ρ) = sqrt(ln(1/δ)+ε) − sqrt(ln(1/δ)) algebraically, the
/// reported ρ satisfies ρ + 2·sqrt(ρ·ln(1/δ)) = ε up to rounding.
pub fn calibrate_sigma(spec: &PrivacySpec, d: usize) -> Result<NoiseScale> {
    spec.validate()?;
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1"));
    }
    let (r, w) = match spec.mechanism {
        Mechanism::GaussianMogHard => {
            let r = r_mog_hard(d);
            (r, (r as f64) * spec.tau as f64)
        }
        Mechanism::LloydMixed => {
            let r = r_lloyd(d, spec.tau);
            (r, r as f64)
        }
    };
    let l = libm::log(1.0 / spec.delta);
    let sigma = libm::sqrt(w / 2.0) * (libm::sqrt(l + spec.epsilon) + libm::sqrt(l)) / spec.epsilon;
    let rho = w / (2.0 * sigma * sigma);
    Ok(NoiseScale { sigma, r, rho })
}

/// `count` i.i.d. zero-mean Gaussian draws at std-dev `sigma`. A zero scale
/// returns exact zeros without consuming the stream, so zero-noise test
/// harnesses reduce to the non-private code path.
pub fn sample_gaussian(sigma: f64, count: usize, rng: &mut StreamRng) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; count];
    }
    (0..count).map(|_| rng.normal(sigma)).collect()
}

/// `count` i.i.d. zero-mean Laplace draws at scale `b`; zero scale returns
/// exact zeros without consuming the stream.
pub fn sample_laplace(b: f64, count: usize, rng: &mut StreamRng) -> Vec<f64> {
    if b == 0.0 {
        return vec![0.0; count];
    }
    (0..count).map(|_| rng.laplace(b)).collect()
}

/// Unpacks a length-D(D+1)/2 vector into a symmetric D×D matrix: upper
/// triangle row-major, mirrored below the diagonal.
pub fn sym_pack(v: &[f64], d: usize) -> Result<Mat> {
    if v.len() != d * (d + 1) / 2 {
        return Err(Error::InvalidArgument("vector length must be D(D+1)/2"));
    }
    let mut m = Mat::zeros(d, d);
    let mut idx = 0;
    for r in 0..d {
        for c in r..d {
            m.set(r, c, v[idx]);
            m.set(c, r, v[idx]);
            idx += 1;
        }
    }
    Ok(m)
}

/// Worst-case per-cluster statistic changes between two neighboring
/// datasets under a fixed row-value assignment rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub count_delta: f64,
    pub sum_coord_delta: f64,
    pub second_moment_diag_delta: f64,
    pub second_moment_offdiag_delta: f64,
}

impl SensitivityReport {
    /// The bounds the calibration assumes (unit box, one differing row).
    pub fn within_bounds(&self) -> bool {
        self.count_delta <= 1.0
            && self.sum_coord_delta <= 2.0
            && self.second_moment_diag_delta <= 1.0
            && self.second_moment_offdiag_delta <= 2.0
    }
}

/// Measures how much each per-cluster statistic (count, coordinate sums,
/// uncentered second-moment entries) can change between two neighboring
/// datasets, with rows assigned to clusters by `assign` (a pure function of
/// the row value, so unchanged rows keep their cluster).
pub fn audit_sensitivity<F>(
    d1: &Dataset,
    d2: &Dataset,
    n_clusters: usize,
    assign: F,
) -> Result<SensitivityReport>
where
    F: Fn(&[f64]) -> usize,
{
    if d1.n() != d2.n() || d1.dim() != d2.dim() {
        return Err(Error::InvalidArgument("neighboring datasets must share shape"));
    }
    if d1.max_abs_coord() > 1.0 || d2.max_abs_coord() > 1.0 {
        return Err(Error::InvalidArgument("audit requires unit-box data"));
    }
    let differing = (0..d1.n()).filter(|&i| d1.row(i) != d2.row(i)).count();
    if differing != 1 {
        return Err(Error::InvalidArgument("datasets must differ in exactly one row"));
    }

    let d = d1.dim();
    let stats = |data: &Dataset| -> (Vec<f64>, Vec<Vec<f64>>, Vec<Mat>) {
        let mut counts = vec![0.0; n_clusters];
        let mut sums = vec![vec![0.0; d]; n_clusters];
        let mut moments = vec![Mat::zeros(d, d); n_clusters];
        for i in 0..data.n() {
            let row = data.row(i);
            let k = assign(row).min(n_clusters - 1);
            counts[k] += 1.0;
            for j in 0..d {
                sums[k][j] += row[j];
            }
            for a in 0..d {
                for b in 0..d {
                    moments[k].add_at(a, b, row[a] * row[b]);
                }
            }
        }
        (counts, sums, moments)
    };

    let (c1, s1, m1) = stats(d1);
    let (c2, s2, m2) = stats(d2);

    let mut rep = SensitivityReport::default();
    for k in 0..n_clusters {
        rep.count_delta = rep.count_delta.max((c1[k] - c2[k]).abs());
        for j in 0..d {
            rep.sum_coord_delta = rep.sum_coord_delta.max((s1[k][j] - s2[k][j]).abs());
        }
        for a in 0..d {
            for b in 0..d {
                let delta = (m1[k].at(a, b) - m2[k].at(a, b)).abs();
                if a == b {
                    rep.second_moment_diag_delta = rep.second_moment_diag_delta.max(delta);
                } else {
                    rep.second_moment_offdiag_delta = rep.second_moment_offdiag_delta.max(delta);
                }
            }
        }
    }
    Ok(rep)
}
