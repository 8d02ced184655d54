//! Dataset container, unit-box rescaling, and synthetic generators.
//!
//! Every fitting routine in this crate assumes coordinates in `[-1, 1]`:
//! the privacy sensitivity bounds are derived from that box, so rescaling
//! is a correctness requirement, not cosmetics. Where the bounds came from
//! is tracked because data-derived bounds leak information and downgrade
//! any differential-privacy claim.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stage, StreamRng};

/// Where rescaling bounds came from. Only `User` keeps DP claims intact;
/// `Data` means min/max were read off the private data; `Generator` marks
/// synthetic data born inside the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsSource {
    User,
    Data,
    Generator,
}

/// N×D data matrix in row-major storage with optional ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    xs: Vec<f64>,
    pub labels: Option<Vec<usize>>,
    pub feature_names: Option<Vec<String>>,
    pub bounds_source: Option<BoundsSource>,
    /// Per-feature (lo, hi) used by the last rescale, if any.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("dataset must have at least one row"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("dataset must have at least one column"));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged rows"));
        }
        if let Some(ref l) = labels {
            if l.len() != rows.len() {
                return Err(Error::InvalidArgument("label length differs from row count"));
            }
        }
        let mut xs = Vec::with_capacity(rows.len() * d);
        for r in &rows {
            xs.extend_from_slice(r);
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset cell"));
        }
        Ok(Dataset { d, xs, labels, feature_names: None, bounds_source: None, bounds: None })
    }

    pub fn n(&self) -> usize {
        self.xs.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn rows_flat(&self) -> &[f64] {
        &self.xs
    }

    pub fn max_abs_coord(&self) -> f64 {
        self.xs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Affine per-feature map sending `[lo, hi]` to `[-1, 1]`.
///
/// Without explicit bounds the per-feature min/max of the data are used and
/// the result is tagged [`BoundsSource::Data`]. Constant features (zero
/// width) map to 0. With user bounds, values outside `[lo, hi]` are clamped
/// to the box edge: the privacy accounting elsewhere assumes the box, so
/// out-of-bounds rows must not escape it.
pub fn rescale_unit_box(data: &Dataset, bounds: Option<&[(f64, f64)]>) -> Result<Dataset> {
    let d = data.dim();
    let resolved: Vec<(f64, f64)> = match bounds {
        Some(b) => {
            if b.len() != d {
                return Err(Error::InvalidArgument("bounds length differs from dimension"));
            }
            for &(lo, hi) in b {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidArgument("bounds must satisfy lo < hi"));
                }
            }
            b.to_vec()
        }
        None => (0..d)
            .map(|j| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..data.n() {
                    let v = data.row(i)[j];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            })
            .collect(),
    };

    let mut out = data.clone();
    for i in 0..data.n() {
        for j in 0..d {
            let (lo, hi) = resolved[j];
            let v = data.row(i)[j];
            let mapped = if hi > lo { (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0) } else { 0.0 };
            out.xs[i * d + j] = mapped;
        }
    }
    out.bounds_source = Some(if bounds.is_some() { BoundsSource::User } else { BoundsSource::Data });
    out.bounds = Some(resolved);
    Ok(out)
}

fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![a];
    }
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}

/// Two interleaving half-circles with Gaussian jitter, `n/2` points in the
/// lower moon, rescaled into the unit box from its own extent. Labels: 0
/// for the upper arc, 1 for the lower.
pub fn make_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("two moons needs n >= 2"));
    }
    if noise < 0.0 {
        return Err(Error::InvalidArgument("noise must be nonnegative"));
    }
    let n_inner = n / 2;
    let n_outer = n - n_inner;
    let mut rng = StreamRng::from_seed(seed).fork(stage::DATA);

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for t in linspace(0.0, core::f64::consts::PI, n_outer) {
        rows.push(vec![libm::cos(t), libm::sin(t)]);
        labels.push(0);
    }
    for t in linspace(0.0, core::f64::consts::PI, n_inner) {
        rows.push(vec![1.0 - libm::cos(t), 1.0 - libm::sin(t) - 0.5]);
        labels.push(1);
    }
    for row in rows.iter_mut() {
        for v in row.iter_mut() {
            *v += rng.normal(noise);
        }
    }
    let raw = Dataset::from_rows(rows, Some(labels))?;
    let mut scaled = rescale_unit_box(&raw, None)?;
    scaled.bounds_source = Some(BoundsSource::Generator);
    Ok(scaled)
}

/// Three half-circle arcs with Gaussian jitter: the classic interlocked
/// up/down pair plus a third upward arc below them. The layout keeps the
/// bounding box near square (so rescaling distorts distances about equally
/// in each axis) and every inter-arc gap at least 0.4 before jitter;
/// closer placements let arc tips overlap and the class geometry stops
/// being recoverable even without noise.
/// Points split as evenly as n allows, remainder to the earlier arcs.
/// Rescaled into the unit box from its own extent; labels 0, 1, 2 by arc.
pub fn make_three_arcs(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 3 {
        return Err(Error::InvalidArgument("three arcs need n >= 3"));
    }
    if noise < 0.0 {
        return Err(Error::InvalidArgument("noise must be nonnegative"));
    }
    let base = n / 3;
    let counts = [n - 2 * base, base, base];
    let mut rng = StreamRng::from_seed(seed).fork(stage::DATA);

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (arc, &cnt) in counts.iter().enumerate() {
        for t in linspace(0.0, core::f64::consts::PI, cnt) {
            let (c, s) = (libm::cos(t), libm::sin(t));
            let p = match arc {
                0 => vec![c, s],
                1 => vec![1.0 - c, 0.5 - s],
                _ => vec![c + 0.5, s - 1.8],
            };
            rows.push(p);
            labels.push(arc);
        }
    }
    for row in rows.iter_mut() {
        for v in row.iter_mut() {
            *v += rng.normal(noise);
        }
    }
    let raw = Dataset::from_rows(rows, Some(labels))?;
    let mut scaled = rescale_unit_box(&raw, None)?;
    scaled.bounds_source = Some(BoundsSource::Generator);
    Ok(scaled)
}

/// Isotropic Gaussian blobs around the given centers, `n_per` points each,
/// clipped to the unit box. Every center must keep a 3σ margin from the box
/// edge so clipping stays a rare tail event.
pub fn make_blobs(centers: &[Vec<f64>], sigma: f64, n_per: usize, seed: u64) -> Result<Dataset> {
    if centers.is_empty() || n_per == 0 {
        return Err(Error::InvalidArgument("blobs need at least one center and one point"));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidArgument("sigma must be nonnegative"));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidArgument("centers must share one nonzero dimension"));
    }
    for c in centers {
        if c.iter().any(|&v| v.abs() + 3.0 * sigma >= 1.0) {
            return Err(Error::InvalidArgument("center too close to the unit-box edge (3 sigma margin)"));
        }
    }
    let mut rng = StreamRng::from_seed(seed).fork(stage::DATA);
    let mut rows = Vec::with_capacity(centers.len() * n_per);
    let mut labels = Vec::with_capacity(centers.len() * n_per);
    for (b, c) in centers.iter().enumerate() {
        for _ in 0..n_per {
            let row: Vec<f64> = c.iter().map(|&v| (v + rng.normal(sigma)).clamp(-1.0, 1.0)).collect();
            rows.push(row);
            labels.push(b);
        }
    }
    let mut out = Dataset::from_rows(rows, Some(labels))?;
    out.bounds_source = Some(BoundsSource::Generator);
    Ok(out)
}
