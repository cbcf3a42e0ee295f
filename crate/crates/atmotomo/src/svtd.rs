//! Per-frequency decomposition of the periodic tomography operator and the
//! regularized reconstructor built on it.
//!
//! For a single guide-star kind the periodic operator decouples into small
//! `G x L` matrices, one per frequency pair `(j, k)`, with entries
//! `(1 + beta_l |(j,k)|^2)^(-s/2) * sqrt(gamma_l)/c_l *
//!  exp(i (pi/T) (j ax_g + k ay_g) h_l / c_l)`.
//! Their SVDs are precomputed once per system and reused by every
//! reconstruction: analyze the wavefronts, apply a filtered pseudo-inverse
//! per frequency, fold the order-`s` factor back in and synthesize each
//! layer.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DomainTag;
use crate::forward::{LayerStack, WavefrontSet};
use crate::geometry::SystemGeometry;
use crate::spectral::{
    analyze, in_band_indices, sobolev_factor, synthesize, SpectralField,
};
use crate::system::TomoSystem;

/// Relative cut below which singular values are treated as exact zeros when
/// a matrix is decomposed.
const SVD_ZERO_TOL: f64 = 1e-14;

// ---------------------------------------------------------------------------
// Per-frequency matrices and their SVDs
// ---------------------------------------------------------------------------

/// The `G x L` matrix coupling layer coefficients to star coefficients at one
/// frequency pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    pub j: i64,
    pub k: i64,
    pub entries: DMatrix<Complex64>,
}

/// Builds the frequency matrix for a single-kind star set.
pub fn build_matrix(j: i64, k: i64, s: f64, geometry: &SystemGeometry) -> Result<FrequencyMatrix> {
    if !geometry.single_kind() {
        return Err(Error::MixedStarKinds);
    }
    let num_stars = geometry.num_stars();
    let num_layers = geometry.num_layers();
    let omega = std::f64::consts::PI / geometry.extension_half_width;
    let entries = DMatrix::from_fn(num_stars, num_layers, |g, l| {
        let c = geometry.min_cone_factor(l);
        let gamma = geometry.layers[l].weight;
        let h = geometry.layers[l].height;
        let star = &geometry.stars[g];
        let magnitude = sobolev_factor(j, k, s, geometry.sobolev_beta(l)) * gamma.sqrt() / c;
        let phase = omega * (j as f64 * star.alpha_x + k as f64 * star.alpha_y) * h / c;
        Complex64::from_polar(magnitude, phase)
    });
    Ok(FrequencyMatrix { j, k, entries })
}

/// SVD of one frequency matrix with a deterministic phase convention: the
/// first nonzero component of each right vector is real positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySvd {
    pub j: i64,
    pub k: i64,
    pub rank: usize,
    /// Singular values, descending, length `rank`.
    pub sigma: Vec<f64>,
    /// Left singular vectors as columns, `G x rank`.
    pub left: DMatrix<Complex64>,
    /// Right singular vectors as columns, `L x rank`.
    pub right: DMatrix<Complex64>,
}

impl FrequencySvd {
    pub fn from_matrix(matrix: &FrequencyMatrix) -> Self {
        let (g_dim, l_dim) = matrix.entries.shape();
        let svd = matrix.entries.clone().svd(true, true);
        let u_full = svd.u.expect("left vectors requested");
        let vt_full = svd.v_t.expect("right vectors requested");
        let sv = svd.singular_values;

        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let sigma_max = sv[order[0]];
        let rank = order
            .iter()
            .filter(|&&i| sv[i] > SVD_ZERO_TOL * sigma_max)
            .count();

        let mut sigma = Vec::with_capacity(rank);
        let mut left = DMatrix::<Complex64>::zeros(g_dim, rank);
        let mut right = DMatrix::<Complex64>::zeros(l_dim, rank);
        for (col, &src) in order.iter().take(rank).enumerate() {
            sigma.push(sv[src]);
            for g in 0..g_dim {
                left[(g, col)] = u_full[(g, src)];
            }
            for l in 0..l_dim {
                right[(l, col)] = vt_full[(src, l)].conj();
            }
            // phase convention
            let pivot = (0..l_dim).find(|&l| right[(l, col)].norm() > 1e-8);
            if let Some(l) = pivot {
                let phase = right[(l, col)] / right[(l, col)].norm();
                let rot = phase.conj();
                for l in 0..l_dim {
                    right[(l, col)] *= rot;
                }
                for g in 0..g_dim {
                    left[(g, col)] *= rot;
                }
            }
        }
        Self {
            j: matrix.j,
            k: matrix.k,
            rank,
            sigma,
            left,
            right,
        }
    }

    /// `U diag(sigma) V^H`, for verification.
    pub fn reconstruct_matrix(&self) -> DMatrix<Complex64> {
        let (g_dim, l_dim) = (self.left.nrows(), self.right.nrows());
        let mut out = DMatrix::<Complex64>::zeros(g_dim, l_dim);
        for n in 0..self.rank {
            for g in 0..g_dim {
                for l in 0..l_dim {
                    out[(g, l)] += self.left[(g, n)] * self.sigma[n] * self.right[(l, n)].conj();
                }
            }
        }
        out
    }

    /// Filtered solve `sum_n gain(sigma_n) (u_n^H y) v_n`.
    fn apply_filtered(&self, y: &DVector<Complex64>, filter: &FilterSpec) -> DVector<Complex64> {
        let sigma_max = self.sigma.first().copied().unwrap_or(0.0);
        let mut out = DVector::<Complex64>::zeros(self.right.nrows());
        for n in 0..self.rank {
            let gain = filter.gain(self.sigma[n], sigma_max);
            if gain == 0.0 {
                continue;
            }
            let mut proj = Complex64::default();
            for g in 0..self.left.nrows() {
                proj += self.left[(g, n)].conj() * y[g];
            }
            let scale = Complex64::from(gain) * proj;
            for l in 0..self.right.nrows() {
                out[l] += scale * self.right[(l, n)];
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Tikhonov gain `sigma / (sigma^2 + alpha)`, bounded by `1/(2 sqrt(alpha))`.
pub fn tikhonov_gain(sigma: f64, alpha: f64) -> f64 {
    sigma / (sigma * sigma + alpha)
}

/// Spectral filter replacing `1/sigma` in the inversion formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    /// `g(sigma) = sigma / (sigma^2 + alpha)`, `alpha > 0`.
    Tikhonov { alpha: f64 },
    /// `g(sigma) = 1/sigma` for `sigma >= sigma_min`, else 0.
    Truncation { sigma_min: f64 },
    /// `g(sigma) = 1/sigma` for `sigma > rank_tol * sigma_max` per matrix.
    PseudoInverse { rank_tol: f64 },
}

impl FilterSpec {
    /// Pseudo-inverse with the default relative rank cut.
    pub fn pseudo_inverse() -> Self {
        FilterSpec::PseudoInverse { rank_tol: 1e-10 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FilterSpec::Tikhonov { alpha } if !(*alpha > 0.0) => Err(Error::Config(format!(
                "tikhonov filter requires alpha > 0, got {alpha}"
            ))),
            FilterSpec::Truncation { sigma_min } if !(*sigma_min >= 0.0) => Err(Error::Config(
                format!("truncation filter requires sigma_min >= 0, got {sigma_min}"),
            )),
            FilterSpec::PseudoInverse { rank_tol } if !(*rank_tol >= 0.0) => Err(Error::Config(
                format!("pseudo-inverse filter requires rank_tol >= 0, got {rank_tol}"),
            )),
            _ => Ok(()),
        }
    }

    fn gain(&self, sigma: f64, sigma_max: f64) -> f64 {
        match *self {
            FilterSpec::Tikhonov { alpha } => tikhonov_gain(sigma, alpha),
            FilterSpec::Truncation { sigma_min } => {
                if sigma >= sigma_min && sigma > 0.0 {
                    1.0 / sigma
                } else {
                    0.0
                }
            }
            FilterSpec::PseudoInverse { rank_tol } => {
                if sigma > rank_tol * sigma_max {
                    1.0 / sigma
                } else {
                    0.0
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

/// Precomputed SVDs for every in-band frequency of one system, immutable
/// once built and keyed by the geometry hash plus `(s, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvtdCache {
    pub geometry_hash: u64,
    pub s: f64,
    pub n: usize,
    pub num_stars: usize,
    pub num_layers: usize,
    svds: Vec<FrequencySvd>,
}

impl SvtdCache {
    #[inline]
    pub fn get(&self, j: i64, k: i64) -> &FrequencySvd {
        let m = self.n as i64 / 2 - 1;
        debug_assert!(j.abs() <= m && k.abs() <= m);
        let side = 2 * m + 1;
        &self.svds[((k + m) * side + (j + m)) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FrequencySvd> {
        self.svds.iter()
    }

    pub fn matches(&self, geometry: &SystemGeometry, s: f64, n: usize) -> Result<()> {
        let expected = format!("hash {:016x}, s {}, n {}", geometry.content_hash(), s, n);
        let found = format!("hash {:016x}, s {}, n {}", self.geometry_hash, self.s, self.n);
        if expected != found {
            return Err(Error::CacheMismatch { expected, found });
        }
        Ok(())
    }

    /// Writes the versioned binary cache file.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"ATSV")?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u64::<LittleEndian>(self.geometry_hash)?;
        w.write_f64::<LittleEndian>(self.s)?;
        w.write_u32::<LittleEndian>(self.n as u32)?;
        w.write_u32::<LittleEndian>(self.num_stars as u32)?;
        w.write_u32::<LittleEndian>(self.num_layers as u32)?;
        w.write_u32::<LittleEndian>(self.svds.len() as u32)?;
        for svd in &self.svds {
            w.write_i32::<LittleEndian>(svd.j as i32)?;
            w.write_i32::<LittleEndian>(svd.k as i32)?;
            w.write_u32::<LittleEndian>(svd.rank as u32)?;
            for sigma in &svd.sigma {
                w.write_f64::<LittleEndian>(*sigma)?;
            }
            for n in 0..svd.rank {
                for g in 0..self.num_stars {
                    w.write_f64::<LittleEndian>(svd.left[(g, n)].re)?;
                    w.write_f64::<LittleEndian>(svd.left[(g, n)].im)?;
                }
            }
            for n in 0..svd.rank {
                for l in 0..self.num_layers {
                    w.write_f64::<LittleEndian>(svd.right[(l, n)].re)?;
                    w.write_f64::<LittleEndian>(svd.right[(l, n)].im)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a cache file, validating magic and version.
    pub fn read_from(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"ATSV" {
            return Err(Error::Format(format!(
                "{}: bad magic {:?}",
                path.display(),
                magic
            )));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(Error::Format(format!(
                "{}: unsupported cache version {version}",
                path.display()
            )));
        }
        let geometry_hash = r.read_u64::<LittleEndian>()?;
        let s = r.read_f64::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let num_stars = r.read_u32::<LittleEndian>()? as usize;
        let num_layers = r.read_u32::<LittleEndian>()? as usize;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let m = n as i64 / 2 - 1;
        let expected = ((2 * m + 1) * (2 * m + 1)) as usize;
        if count != expected {
            return Err(Error::Format(format!(
                "{}: expected {expected} records, header says {count}",
                path.display()
            )));
        }
        let mut svds = Vec::with_capacity(count);
        for _ in 0..count {
            let j = r.read_i32::<LittleEndian>()? as i64;
            let k = r.read_i32::<LittleEndian>()? as i64;
            let rank = r.read_u32::<LittleEndian>()? as usize;
            let mut sigma = Vec::with_capacity(rank);
            for _ in 0..rank {
                sigma.push(r.read_f64::<LittleEndian>()?);
            }
            let mut left = DMatrix::<Complex64>::zeros(num_stars, rank);
            for nn in 0..rank {
                for g in 0..num_stars {
                    let re = r.read_f64::<LittleEndian>()?;
                    let im = r.read_f64::<LittleEndian>()?;
                    left[(g, nn)] = Complex64::new(re, im);
                }
            }
            let mut right = DMatrix::<Complex64>::zeros(num_layers, rank);
            for nn in 0..rank {
                for l in 0..num_layers {
                    let re = r.read_f64::<LittleEndian>()?;
                    let im = r.read_f64::<LittleEndian>()?;
                    right[(l, nn)] = Complex64::new(re, im);
                }
            }
            svds.push(FrequencySvd {
                j,
                k,
                rank,
                sigma,
                left,
                right,
            });
        }
        Ok(Self {
            geometry_hash,
            s,
            n,
            num_stars,
            num_layers,
            svds,
        })
    }
}

/// Decomposes every in-band frequency matrix of a single-kind system.
pub fn decompose_all(geometry: &SystemGeometry, s: f64, n: usize) -> Result<SvtdCache> {
    if !geometry.single_kind() {
        return Err(Error::MixedStarKinds);
    }
    let indices: Vec<(i64, i64)> = in_band_indices(n).collect();
    let svds: Vec<FrequencySvd> = indices
        .par_iter()
        .map(|&(j, k)| {
            let matrix = build_matrix(j, k, s, geometry).expect("kind checked above");
            FrequencySvd::from_matrix(&matrix)
        })
        .collect();
    Ok(SvtdCache {
        geometry_hash: geometry.content_hash(),
        s,
        n,
        num_stars: geometry.num_stars(),
        num_layers: geometry.num_layers(),
        svds,
    })
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Regularized inversion: spectral analysis of each wavefront, filtered
/// per-frequency solve, order-`s` factor folded back in, synthesis per layer.
pub fn reconstruct(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    cache: &SvtdCache,
    filter: &FilterSpec,
) -> Result<LayerStack> {
    cache.matches(&sys.geometry, cache.s, sys.n())?;
    if cache.geometry_hash != sys.geometry.content_hash() {
        return Err(Error::CacheMismatch {
            expected: format!("{:016x}", sys.geometry.content_hash()),
            found: format!("{:016x}", cache.geometry_hash),
        });
    }
    sys.check_waves(waves)?;
    if !waves.is_finite() {
        return Err(Error::Numerical("non-finite wavefront data".into()));
    }
    filter.validate()?;

    let ap_ctx = sys.aperture_ctx();
    let wave_specs: Vec<SpectralField> = waves
        .waves
        .iter()
        .map(|w| analyze(w, &ap_ctx))
        .collect::<Result<_>>()?;

    let n = sys.n();
    let num_stars = sys.num_stars();
    let num_layers = sys.num_layers();
    let betas: Vec<f64> = (0..num_layers).map(|l| sys.geometry.sobolev_beta(l)).collect();

    let mut layer_specs: Vec<SpectralField> = (0..num_layers)
        .map(|l| SpectralField::zeros(sys.layer_grids[l], DomainTag::Layer(l)))
        .collect();
    let mut y = DVector::<Complex64>::zeros(num_stars);
    for (j, k) in in_band_indices(n) {
        for g in 0..num_stars {
            y[g] = wave_specs[g].get(j, k);
        }
        let svd = cache.get(j, k);
        let d = svd.apply_filtered(&y, filter);
        for l in 0..num_layers {
            let factor = sobolev_factor(j, k, cache.s, betas[l]);
            layer_specs[l].set(j, k, d[l] * factor);
        }
    }

    let layers = (0..num_layers)
        .map(|l| synthesize(&layer_specs[l], &sys.layer_ctx(l)))
        .collect::<Result<_>>()?;
    Ok(LayerStack { layers })
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Plateau verdict when the cumulative sum grows by less than this factor
    /// over the last decade of singular values.
    pub growth_threshold: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            growth_threshold: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PicardVerdict {
    Plateau,
    Diverging,
}

/// Cumulative sums of `|u_n^H data_jk|^2 / sigma_n^2`, ordered by decreasing
/// singular value, plus the last-decade growth verdict.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub sigmas: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub last_decade_growth: f64,
    pub verdict: PicardVerdict,
}

pub fn picard_diagnostic(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    cache: &SvtdCache,
    options: &PicardOptions,
) -> Result<PicardReport> {
    sys.check_waves(waves)?;
    let ap_ctx = sys.aperture_ctx();
    let wave_specs: Vec<SpectralField> = waves
        .waves
        .iter()
        .map(|w| analyze(w, &ap_ctx))
        .collect::<Result<_>>()?;

    let mut terms: Vec<(f64, f64)> = Vec::new();
    for (j, k) in in_band_indices(sys.n()) {
        let svd = cache.get(j, k);
        for n in 0..svd.rank {
            let mut proj = Complex64::default();
            for g in 0..sys.num_stars() {
                proj += svd.left[(g, n)].conj() * wave_specs[g].get(j, k);
            }
            let sigma = svd.sigma[n];
            terms.push((sigma, proj.norm_sqr() / (sigma * sigma)));
        }
    }
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for &(_, t) in &terms {
        acc += t;
        partial_sums.push(acc);
    }
    let sigmas: Vec<f64> = terms.iter().map(|t| t.0).collect();

    let total = acc;
    let growth = if total == 0.0 {
        1.0
    } else {
        let sigma_min = *sigmas.last().expect("nonempty");
        let cutoff = 10.0 * sigma_min;
        // Sum accumulated before entering the last decade of sigma.
        let before = sigmas
            .iter()
            .rposition(|&s| s >= cutoff)
            .map(|i| partial_sums[i])
            .unwrap_or(0.0);
        if before == 0.0 {
            f64::INFINITY
        } else {
            total / before
        }
    };
    let verdict = if growth < options.growth_threshold {
        PicardVerdict::Plateau
    } else {
        PicardVerdict::Diverging
    };
    Ok(PicardReport {
        sigmas,
        partial_sums,
        last_decade_growth: growth,
        verdict,
    })
}

/// Histogram bin over `log10(sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub log10_lo: f64,
    pub count: usize,
}

/// The ratios `alpha_g h_l / T` per star and layer; rational values relate to
/// boundedness of the zero-order pseudo-inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyRatio {
    pub star: usize,
    pub layer: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct WellposednessReport {
    pub min_sigma: f64,
    pub argmin: (i64, i64),
    pub histogram: Vec<HistogramBin>,
    pub shift_ratios: Vec<FrequencyRatio>,
}

/// Scans all in-band frequencies for the smallest nonzero singular value of
/// the order-`s` matrices.
pub fn wellposedness_scan(geometry: &SystemGeometry, s: f64, n: usize) -> Result<WellposednessReport> {
    let cache = decompose_all(geometry, s, n)?;
    let mut min_sigma = f64::INFINITY;
    let mut argmin = (0i64, 0i64);
    let mut all: Vec<f64> = Vec::new();
    for svd in cache.iter() {
        for &sigma in &svd.sigma {
            all.push(sigma);
            if sigma < min_sigma {
                min_sigma = sigma;
                argmin = (svd.j, svd.k);
            }
        }
    }
    // quarter-decade histogram
    let bin_width = 0.25;
    let lo = all
        .iter()
        .map(|s| s.log10())
        .fold(f64::INFINITY, f64::min);
    let lo = (lo / bin_width).floor() * bin_width;
    let hi = all
        .iter()
        .map(|s| s.log10())
        .fold(f64::NEG_INFINITY, f64::max);
    let bins = (((hi - lo) / bin_width).ceil() as usize).max(1);
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            log10_lo: lo + i as f64 * bin_width,
            count: 0,
        })
        .collect();
    for sigma in &all {
        let idx = (((sigma.log10() - lo) / bin_width) as usize).min(bins - 1);
        histogram[idx].count += 1;
    }
    let t = geometry.extension_half_width;
    let shift_ratios = (0..geometry.num_stars())
        .flat_map(|g| (0..geometry.num_layers()).map(move |l| (g, l)))
        .map(|(g, l)| FrequencyRatio {
            star: g,
            layer: l,
            x: geometry.stars[g].alpha_x * geometry.layers[l].height / t,
            y: geometry.stars[g].alpha_y * geometry.layers[l].height / t,
        })
        .collect();
    Ok(WellposednessReport {
        min_sigma,
        argmin,
        histogram,
        shift_ratios,
    })
}
