//! Mixture-model fitting: noisy and noise-free routes.
//!
//! Four entry points, all returning a repaired [`MixtureModel`] plus a
//! [`FitTrace`]:
//!
//! * [`fit_em`] — classical soft EM or hard EM, no noise;
//! * [`fit_lloyd`] — Lloyd center iterations plus one covariance pass;
//! * [`fit_dpmog_hard`] — hard EM with Gaussian noise added to every
//!   per-cluster count, sum, and centered second moment;
//! * [`fit_dplloyd_mog`] — Lloyd with Laplace-noised counts and sums and a
//!   final Gaussian-noised covariance pass.
//!
//! The noisy routes reduce bit-for-bit to their noise-free counterparts when
//! the scales are forced to zero; the `_with_sigma(s)` variants exist so
//! harnesses can do exactly that without touching calibration. To keep the
//! reduction exact, the noise-free routes repeat the same arithmetic
//! (including the count clamp and the division order) rather than calling
//! into the noisy code.
//!
//! Conventions shared by every route:
//! * initialization is [`default_init`] on the fit's own seed unless an
//!   explicit model is supplied, so noise draws never shift the start;
//! * assignments are synchronous: one full pass over the data against the
//!   previous iteration's parameters, ties broken toward the lowest index;
//! * counts are clamped to `COUNT_FLOOR_FRAC * N` before any division, and
//!   weights are computed from the clamped counts;
//! * noise is drawn from the `NOISE` fork of the seed's stream in a fixed
//!   order per cluster: count, then sum, then packed second moment.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{
    argmax_responsibility, default_init, repair_model, responsibilities, MixtureModel,
    RepairEvents, COUNT_FLOOR_FRAC,
};
use crate::privacy::{calibrate_sigma, sample_gaussian, sample_laplace, sym_pack, Mechanism,
    PrivacySpec};
use crate::rng::{stage, StreamRng};

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStat {
    /// Cluster occupancy. For hard assignments this is the exact partition
    /// (sums to N); for soft EM it is the argmax-responsibility histogram.
    pub sizes: Vec<usize>,
    /// Repairs applied when the iteration's parameters were projected back
    /// onto the valid set. The Lloyd routes repair once, after the final
    /// covariance pass; those events are recorded on the last entry.
    pub repairs: RepairEvents,
}

/// Everything a fit did besides the model itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub iterations: Vec<IterationStat>,
    /// Final-iteration weights before repair.
    pub raw_final_weights: Vec<f64>,
    /// Final-iteration covariances before repair, row-major per cluster.
    pub raw_final_covariances: Vec<Vec<f64>>,
    /// Random values actually consumed from the noise stream (zero scales
    /// consume nothing).
    pub noise_draws: usize,
}

fn validate_common(data: &Dataset, k: usize, tau: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1"));
    }
    if k > data.n() {
        return Err(Error::InvalidArgument("more clusters than data rows"));
    }
    if tau == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1"));
    }
    Ok(())
}

fn require_unit_box(data: &Dataset) -> Result<()> {
    if data.max_abs_coord() > 1.0 {
        return Err(Error::InvalidArgument("data must lie in [-1,1]^D"));
    }
    Ok(())
}

fn all_rows_identical(data: &Dataset) -> bool {
    let first = data.row(0);
    (1..data.n()).all(|i| data.row(i) == first)
}

/// Index of the nearest center in squared Euclidean distance, ties toward
/// the lowest index.
fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = linalg::dist2(x, &centers[0]);
    for (k, c) in centers.iter().enumerate().skip(1) {
        let d = linalg::dist2(x, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn partition_sizes(assign: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a] += 1;
    }
    sizes
}

/// Elementwise division; both the noisy and noise-free routes divide (never
/// multiply by a reciprocal) so their results agree bit-for-bit.
fn mat_div(m: &Mat, c: f64) -> Mat {
    let d = m.n_rows();
    let mut out = Mat::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            out.set(a, b, m.at(a, b) / c);
        }
    }
    out
}

fn covs_row_major(covs: &[Mat]) -> Vec<Vec<f64>> {
    covs.iter().map(|c| c.data().to_vec()).collect()
}

/// Classical EM (soft responsibilities) or hard EM (argmax assignment).
///
/// Both variants run `tau` iterations from the shared default
/// initialization and apply the same repair policy as the noisy fits, so
/// baseline and noisy runs differ only in the injected noise.
pub fn fit_em(
    data: &Dataset,
    k: usize,
    tau: usize,
    hard: bool,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    validate_common(data, k, tau)?;
    if k > 1 && all_rows_identical(data) {
        return Err(Error::DegenerateFit("all rows identical with more than one cluster"));
    }
    let n = data.n();
    let d = data.dim();
    let count_floor = COUNT_FLOOR_FRAC * n as f64;
    let mut model = default_init(k, d, seed);
    let mut iterations = Vec::with_capacity(tau);
    let mut raw_w = Vec::new();
    let mut raw_covs = Vec::new();

    for _ in 0..tau {
        let (weights, means, covs, sizes) = if hard {
            let assign: Vec<usize> =
                (0..n).map(|i| argmax_responsibility(&model, data.row(i))).collect();
            let sizes = partition_sizes(&assign, k);
            let mut weights = Vec::with_capacity(k);
            let mut means = Vec::with_capacity(k);
            let mut covs = Vec::with_capacity(k);
            for c in 0..k {
                let count = (sizes[c] as f64).max(count_floor);
                let mut s = vec![0.0; d];
                for i in 0..n {
                    if assign[i] == c {
                        for (j, v) in data.row(i).iter().enumerate() {
                            s[j] += v;
                        }
                    }
                }
                let mu: Vec<f64> = s.iter().map(|v| v / count).collect();
                let mut m = Mat::zeros(d, d);
                for i in 0..n {
                    if assign[i] == c {
                        let x = data.row(i);
                        for a in 0..d {
                            for b in 0..d {
                                m.add_at(a, b, (x[a] - mu[a]) * (x[b] - mu[b]));
                            }
                        }
                    }
                }
                weights.push(count / n as f64);
                means.push(mu);
                covs.push(mat_div(&m, count));
            }
            (weights, means, covs, sizes)
        } else {
            let mut gamma = vec![0.0; n * k];
            let mut mass = vec![0.0; k];
            let mut sizes = vec![0usize; k];
            for i in 0..n {
                let g = responsibilities(&model, data.row(i));
                let mut best = 0;
                for c in 1..k {
                    if g[c] > g[best] {
                        best = c;
                    }
                }
                sizes[best] += 1;
                for c in 0..k {
                    mass[c] += g[c];
                }
                gamma[i * k..(i + 1) * k].copy_from_slice(&g);
            }
            let mut weights = Vec::with_capacity(k);
            let mut means = Vec::with_capacity(k);
            let mut covs = Vec::with_capacity(k);
            for c in 0..k {
                let count = mass[c].max(count_floor);
                let mut s = vec![0.0; d];
                for i in 0..n {
                    let g = gamma[i * k + c];
                    for (j, v) in data.row(i).iter().enumerate() {
                        s[j] += g * v;
                    }
                }
                let mu: Vec<f64> = s.iter().map(|v| v / count).collect();
                let mut m = Mat::zeros(d, d);
                for i in 0..n {
                    let g = gamma[i * k + c];
                    let x = data.row(i);
                    for a in 0..d {
                        for b in 0..d {
                            m.add_at(a, b, g * (x[a] - mu[a]) * (x[b] - mu[b]));
                        }
                    }
                }
                weights.push(count / n as f64);
                means.push(mu);
                covs.push(mat_div(&m, count));
            }
            (weights, means, covs, sizes)
        };
        raw_w = weights.clone();
        raw_covs = covs_row_major(&covs);
        let (next, repairs) = repair_model(&weights, &means, &covs)?;
        iterations.push(IterationStat { sizes, repairs });
        model = next;
    }

    Ok((
        model,
        FitTrace {
            iterations,
            raw_final_weights: raw_w,
            raw_final_covariances: raw_covs,
            noise_draws: 0,
        },
    ))
}

/// Lloyd iterations (nearest-center assignment, mean update) followed by one
/// covariance pass over the last assignment about the final centers. This is
/// the exact zero-noise image of [`fit_dplloyd_mog`].
pub fn fit_lloyd(
    data: &Dataset,
    k: usize,
    tau: usize,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    validate_common(data, k, tau)?;
    let n = data.n();
    let d = data.dim();
    let count_floor = COUNT_FLOOR_FRAC * n as f64;
    let mut centers: Vec<Vec<f64>> = default_init(k, d, seed).means().to_vec();
    let mut iterations: Vec<IterationStat> = Vec::with_capacity(tau);
    let mut assign = vec![0usize; n];
    let mut counts = vec![count_floor; k];

    for _ in 0..tau {
        for (i, a) in assign.iter_mut().enumerate() {
            *a = nearest_center(data.row(i), &centers);
        }
        let sizes = partition_sizes(&assign, k);
        for c in 0..k {
            let count = (sizes[c] as f64).max(count_floor);
            counts[c] = count;
            let mut s = vec![0.0; d];
            for i in 0..n {
                if assign[i] == c {
                    for (j, v) in data.row(i).iter().enumerate() {
                        s[j] += v;
                    }
                }
            }
            centers[c] = s.iter().map(|v| v / count).collect();
        }
        iterations.push(IterationStat { sizes, repairs: RepairEvents::default() });
    }

    let mut weights = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        weights.push(counts[c] / n as f64);
        let mut m = Mat::zeros(d, d);
        for i in 0..n {
            if assign[i] == c {
                let x = data.row(i);
                for a in 0..d {
                    for b in 0..d {
                        m.add_at(a, b, (x[a] - centers[c][a]) * (x[b] - centers[c][b]));
                    }
                }
            }
        }
        covs.push(mat_div(&m, counts[c]));
    }
    let raw_w = weights.clone();
    let raw_covs = covs_row_major(&covs);
    let (model, repairs) = repair_model(&weights, &centers, &covs)?;
    if let Some(last) = iterations.last_mut() {
        last.repairs = repairs;
    }

    Ok((
        model,
        FitTrace {
            iterations,
            raw_final_weights: raw_w,
            raw_final_covariances: raw_covs,
            noise_draws: 0,
        },
    ))
}

/// Hard EM with calibrated Gaussian noise on every released statistic.
///
/// Each iteration assigns every row to its argmax-responsibility cluster,
/// then per cluster adds N(0, sigma^2) noise to the count, the coordinate
/// sums, and the packed centered second moment (centered at the new noisy
/// mean), clamps the noisy count, and divides. Parameters are repaired each
/// iteration.
pub fn fit_dpmog_hard(
    data: &Dataset,
    k: usize,
    spec: &PrivacySpec,
    init: Option<&MixtureModel>,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    spec.validate()?;
    if spec.mechanism != Mechanism::GaussianMogHard {
        return Err(Error::InvalidArgument("privacy spec mechanism does not match this fit"));
    }
    let scale = calibrate_sigma(spec, data.dim())?;
    fit_dpmog_hard_with_sigma(data, k, spec.tau, scale.sigma, init, seed)
}

/// [`fit_dpmog_hard`] with the noise scale supplied directly (test harness
/// entry point; `sigma = 0` reduces bit-for-bit to hard EM).
pub fn fit_dpmog_hard_with_sigma(
    data: &Dataset,
    k: usize,
    tau: usize,
    sigma: f64,
    init: Option<&MixtureModel>,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    validate_common(data, k, tau)?;
    require_unit_box(data)?;
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidArgument("noise scale must be finite and nonnegative"));
    }
    let n = data.n();
    let d = data.dim();
    let count_floor = COUNT_FLOOR_FRAC * n as f64;
    let mut model = match init {
        Some(m) => {
            if m.k() != k || m.dim() != d {
                return Err(Error::InvalidArgument("init model shape does not match"));
            }
            m.clone()
        }
        None => default_init(k, d, seed),
    };
    let mut noise = StreamRng::from_seed(seed).fork(stage::NOISE);
    let mut noise_draws = 0usize;
    let mut iterations = Vec::with_capacity(tau);
    let mut raw_w = Vec::new();
    let mut raw_covs = Vec::new();

    for _ in 0..tau {
        let assign: Vec<usize> =
            (0..n).map(|i| argmax_responsibility(&model, data.row(i))).collect();
        let sizes = partition_sizes(&assign, k);
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for c in 0..k {
            let noise_count = sample_gaussian(sigma, 1, &mut noise);
            let noise_sum = sample_gaussian(sigma, d, &mut noise);
            let noise_moment = sample_gaussian(sigma, d * (d + 1) / 2, &mut noise);
            if sigma > 0.0 {
                noise_draws += 1 + d + d * (d + 1) / 2;
            }
            let count = (sizes[c] as f64 + noise_count[0]).max(count_floor);
            let mut s = vec![0.0; d];
            for i in 0..n {
                if assign[i] == c {
                    for (j, v) in data.row(i).iter().enumerate() {
                        s[j] += v;
                    }
                }
            }
            let mu: Vec<f64> =
                s.iter().zip(noise_sum.iter()).map(|(v, e)| (v + e) / count).collect();
            let mut m = Mat::zeros(d, d);
            for i in 0..n {
                if assign[i] == c {
                    let x = data.row(i);
                    for a in 0..d {
                        for b in 0..d {
                            m.add_at(a, b, (x[a] - mu[a]) * (x[b] - mu[b]));
                        }
                    }
                }
            }
            let noise_mat = sym_pack(&noise_moment, d)?;
            for a in 0..d {
                for b in 0..d {
                    m.add_at(a, b, noise_mat.at(a, b));
                }
            }
            weights.push(count / n as f64);
            means.push(mu);
            covs.push(mat_div(&m, count));
        }
        raw_w = weights.clone();
        raw_covs = covs_row_major(&covs);
        let (next, repairs) = repair_model(&weights, &means, &covs)?;
        iterations.push(IterationStat { sizes, repairs });
        model = next;
    }

    Ok((
        model,
        FitTrace {
            iterations,
            raw_final_weights: raw_w,
            raw_final_covariances: raw_covs,
            noise_draws,
        },
    ))
}

/// Lloyd iterations with Laplace-noised counts and sums, then one final pass
/// that reuses the last noisy counts for the weights and adds Gaussian noise
/// to the centered second moments.
pub fn fit_dplloyd_mog(
    data: &Dataset,
    k: usize,
    spec: &PrivacySpec,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    spec.validate()?;
    if spec.mechanism != Mechanism::LloydMixed {
        return Err(Error::InvalidArgument("privacy spec mechanism does not match this fit"));
    }
    let scale = calibrate_sigma(spec, data.dim())?;
    fit_dplloyd_mog_with_sigmas(data, k, spec.tau, scale.sigma, scale.sigma, seed)
}

/// [`fit_dplloyd_mog`] with both noise scales supplied directly (test
/// harness entry point; zero scales reduce bit-for-bit to [`fit_lloyd`]).
pub fn fit_dplloyd_mog_with_sigmas(
    data: &Dataset,
    k: usize,
    tau: usize,
    laplace_b: f64,
    gauss_sigma: f64,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    validate_common(data, k, tau)?;
    require_unit_box(data)?;
    if !laplace_b.is_finite() || laplace_b < 0.0 || !gauss_sigma.is_finite() || gauss_sigma < 0.0
    {
        return Err(Error::InvalidArgument("noise scale must be finite and nonnegative"));
    }
    let n = data.n();
    let d = data.dim();
    let count_floor = COUNT_FLOOR_FRAC * n as f64;
    let mut centers: Vec<Vec<f64>> = default_init(k, d, seed).means().to_vec();
    let mut noise = StreamRng::from_seed(seed).fork(stage::NOISE);
    let mut noise_draws = 0usize;
    let mut iterations: Vec<IterationStat> = Vec::with_capacity(tau);
    let mut assign = vec![0usize; n];
    let mut counts = vec![count_floor; k];

    for _ in 0..tau {
        for (i, a) in assign.iter_mut().enumerate() {
            *a = nearest_center(data.row(i), &centers);
        }
        let sizes = partition_sizes(&assign, k);
        for c in 0..k {
            let noise_count = sample_laplace(laplace_b, 1, &mut noise);
            let noise_sum = sample_laplace(laplace_b, d, &mut noise);
            if laplace_b > 0.0 {
                noise_draws += 1 + d;
            }
            let count = (sizes[c] as f64 + noise_count[0]).max(count_floor);
            counts[c] = count;
            let mut s = vec![0.0; d];
            for i in 0..n {
                if assign[i] == c {
                    for (j, v) in data.row(i).iter().enumerate() {
                        s[j] += v;
                    }
                }
            }
            centers[c] =
                s.iter().zip(noise_sum.iter()).map(|(v, e)| (v + e) / count).collect();
        }
        iterations.push(IterationStat { sizes, repairs: RepairEvents::default() });
    }

    let mut weights = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let noise_moment = sample_gaussian(gauss_sigma, d * (d + 1) / 2, &mut noise);
        if gauss_sigma > 0.0 {
            noise_draws += d * (d + 1) / 2;
        }
        weights.push(counts[c] / n as f64);
        let mut m = Mat::zeros(d, d);
        for i in 0..n {
            if assign[i] == c {
                let x = data.row(i);
                for a in 0..d {
                    for b in 0..d {
                        m.add_at(a, b, (x[a] - centers[c][a]) * (x[b] - centers[c][b]));
                    }
                }
            }
        }
        let noise_mat = sym_pack(&noise_moment, d)?;
        for a in 0..d {
            for b in 0..d {
                m.add_at(a, b, noise_mat.at(a, b));
            }
        }
        covs.push(mat_div(&m, counts[c]));
    }
    let raw_w = weights.clone();
    let raw_covs = covs_row_major(&covs);
    let (model, repairs) = repair_model(&weights, &centers, &covs)?;
    if let Some(last) = iterations.last_mut() {
        last.repairs = repairs;
    }

    Ok((
        model,
        FitTrace {
            iterations,
            raw_final_weights: raw_w,
            raw_final_covariances: raw_covs,
            noise_draws,
        },
    ))
}
