//! The atmospheric tomography operator, its adjoints, and the periodic
//! spectral forward.
//!
//! The forward operator evaluates each layer at the cone-scaled, shifted
//! aperture points and sums over layers,
//! `(A_g phi)(r) = sum_l phi_l(c(l,g) r + alpha_g h_l)`,
//! masked to the aperture and zero-extended. Off-grid evaluation is bilinear
//! with periodic wrap, which keeps the discrete forward a 4-tap sparse map
//! whose exact transpose is cheap to apply.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{DomainTag, Field2D};
use crate::geometry::GridSpec;
use crate::spectral::{
    analyze, in_band_indices, sobolev_scale, synthesize, SobolevDirection, SpectralField,
};
use crate::svtd::build_matrix;
use crate::system::TomoSystem;

/// One real field per atmospheric layer, each on its scaled square.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Field2D>,
}

impl LayerStack {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|f| f.is_finite())
    }
}

/// One real field per guide star on the aperture-plane grid, plus the sampled
/// aperture mask. Wavefront data is zero outside the mask; the periodic
/// forward (no masking) also uses this container.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefrontSet {
    pub waves: Vec<Field2D>,
    pub mask: Vec<u8>,
}

impl WavefrontSet {
    pub fn is_finite(&self) -> bool {
        self.waves.iter().all(|f| f.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Bilinear interpolation with periodic wrap
// ---------------------------------------------------------------------------

/// Four wrapped taps (flat index, weight) for bilinear interpolation at a
/// physical point of a periodic grid.
#[inline]
pub(crate) fn bilinear_taps(grid: &GridSpec, x: f64, y: f64) -> [(usize, f64); 4] {
    let n = grid.n as i64;
    let inv = 1.0 / grid.spacing();
    let ux = (x + grid.half_width) * inv;
    let uy = (y + grid.half_width) * inv;
    let fx = ux.floor();
    let fy = uy.floor();
    let tx = ux - fx;
    let ty = uy - fy;
    let ix0 = (fx as i64).rem_euclid(n) as usize;
    let iy0 = (fy as i64).rem_euclid(n) as usize;
    let ix1 = (ix0 + 1) % grid.n;
    let iy1 = (iy0 + 1) % grid.n;
    let nn = grid.n;
    [
        (iy0 * nn + ix0, (1.0 - tx) * (1.0 - ty)),
        (iy0 * nn + ix1, tx * (1.0 - ty)),
        (iy1 * nn + ix0, (1.0 - tx) * ty),
        (iy1 * nn + ix1, tx * ty),
    ]
}

impl Field2D {
    /// Bilinear sample at a physical point, wrapping periodically.
    #[inline]
    pub fn sample_periodic(&self, x: f64, y: f64) -> f64 {
        bilinear_taps(&self.grid, x, y)
            .iter()
            .map(|&(idx, w)| w * self.values[idx])
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

/// Applies the tomography operator: layer sums along each guide-star
/// direction, masked to the aperture and zero-extended.
pub fn apply_forward(sys: &TomoSystem, stack: &LayerStack) -> Result<WavefrontSet> {
    sys.check_stack(stack)?;
    let grid = sys.aperture_grid;
    let n = grid.n;
    let waves: Vec<Field2D> = (0..sys.num_stars())
        .into_par_iter()
        .map(|g| {
            let star = &sys.geometry.stars[g];
            let mut out = Field2D::zeros(grid, DomainTag::Aperture);
            for iy in 0..n {
                let y = grid.coord(iy);
                for ix in 0..n {
                    let idx = iy * n + ix;
                    if sys.aperture_mask[idx] == 0 {
                        continue;
                    }
                    let x = grid.coord(ix);
                    let mut acc = 0.0;
                    for l in 0..sys.num_layers() {
                        let c = sys.cone(l, g);
                        let h = sys.geometry.layers[l].height;
                        acc += stack.layers[l]
                            .sample_periodic(c * x + star.alpha_x * h, c * y + star.alpha_y * h);
                    }
                    out.values[idx] = acc;
                }
            }
            out
        })
        .collect();
    Ok(WavefrontSet {
        waves,
        mask: sys.aperture_mask.clone(),
    })
}

// ---------------------------------------------------------------------------
// Adjoints
// ---------------------------------------------------------------------------

/// Which adjoint discretization to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointVariant {
    /// Exact transpose of the discretized forward under the weighted discrete
    /// inner products: scatters interpolation weights from aperture points.
    Transpose,
    /// Grid sampling of the continuum adjoint formula: back-projects each
    /// wavefront onto the indicator of its shifted aperture copy.
    Analytic,
}

/// Applies the adjoint of the tomography operator.
pub fn apply_adjoint(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    variant: AdjointVariant,
) -> Result<LayerStack> {
    backprojection(sys, waves, variant, None, false)
}

/// Adjoint with respect to the overlay-weighted layer inner product: the
/// plain adjoint divided pointwise by the overlay, zero where no star sees
/// the point.
pub fn apply_weighted_adjoint(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    variant: AdjointVariant,
) -> Result<LayerStack> {
    backprojection(sys, waves, variant, None, true)
}

/// Shared back-projection core. `star_weights` scales each star's term
/// (`None` = 1); `overlay_divide` divides the layer result by the overlay.
pub(crate) fn backprojection(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    variant: AdjointVariant,
    star_weights: Option<&[f64]>,
    overlay_divide: bool,
) -> Result<LayerStack> {
    sys.check_waves(waves)?;
    let layers: Vec<Field2D> = (0..sys.num_layers())
        .into_par_iter()
        .map(|l| {
            let grid = sys.layer_grids[l];
            let n = grid.n;
            let gamma = sys.geometry.layers[l].weight;
            let h = sys.geometry.layers[l].height;
            let mut out = Field2D::zeros(grid, DomainTag::Layer(l));
            for g in 0..sys.num_stars() {
                let star = &sys.geometry.stars[g];
                let c = sys.cone(l, g);
                let sw = star_weights.map_or(1.0, |w| w[g]);
                match variant {
                    AdjointVariant::Analytic => {
                        let factor = sw * gamma / (c * c);
                        let ind = sys.masks.indicator(l, g);
                        for iy in 0..n {
                            let y = grid.coord(iy);
                            for ix in 0..n {
                                let idx = iy * n + ix;
                                if ind[idx] == 0 {
                                    continue;
                                }
                                let x = grid.coord(ix);
                                out.values[idx] += factor
                                    * waves.waves[g].sample_periodic(
                                        (x - star.alpha_x * h) / c,
                                        (y - star.alpha_y * h) / c,
                                    );
                            }
                        }
                    }
                    AdjointVariant::Transpose => {
                        // Quadrature-area ratio of the aperture and layer
                        // grids; uses the layer scale c_l, not c(l,g).
                        let c_l = sys.geometry.min_cone_factor(l);
                        let factor = sw * gamma / (c_l * c_l);
                        let ap = sys.aperture_grid;
                        for iy in 0..ap.n {
                            let y = ap.coord(iy);
                            for ix in 0..ap.n {
                                let idx = iy * ap.n + ix;
                                if sys.aperture_mask[idx] == 0 {
                                    continue;
                                }
                                let v = waves.waves[g].values[idx];
                                if v == 0.0 {
                                    continue;
                                }
                                let x = ap.coord(ix);
                                let taps = bilinear_taps(
                                    &grid,
                                    c * x + star.alpha_x * h,
                                    c * y + star.alpha_y * h,
                                );
                                for (tidx, w) in taps {
                                    out.values[tidx] += factor * w * v;
                                }
                            }
                        }
                    }
                }
            }
            if overlay_divide {
                let overlay = sys.masks.overlay(l);
                for (v, o) in out.values.iter_mut().zip(overlay) {
                    if *o > 0 {
                        *v /= *o as f64;
                    } else {
                        *v = 0.0;
                    }
                }
            }
            out
        })
        .collect();
    Ok(LayerStack { layers })
}

// ---------------------------------------------------------------------------
// Periodic spectral forward
// ---------------------------------------------------------------------------

/// Applies the periodic tomography operator through its per-frequency
/// matrices: no aperture masking, defined for a single guide-star kind.
pub fn apply_periodic_forward(sys: &TomoSystem, stack: &LayerStack, s: f64) -> Result<WavefrontSet> {
    if !sys.geometry.single_kind() {
        return Err(Error::MixedStarKinds);
    }
    sys.check_stack(stack)?;
    let n = sys.n();
    let num_layers = sys.num_layers();
    let num_stars = sys.num_stars();

    // Coefficients of each layer against the order-s basis.
    let layer_specs: Vec<SpectralField> = (0..num_layers)
        .map(|l| {
            let raw = analyze(&stack.layers[l], &sys.layer_ctx(l))?;
            Ok(sobolev_scale(
                &raw,
                s,
                sys.geometry.sobolev_beta(l),
                SobolevDirection::Remove,
            ))
        })
        .collect::<Result<_>>()?;

    let mut wave_specs: Vec<SpectralField> = (0..num_stars)
        .map(|_| SpectralField::zeros(sys.aperture_grid, DomainTag::Aperture))
        .collect();
    for (j, k) in in_band_indices(n) {
        let matrix = build_matrix(j, k, s, &sys.geometry)?;
        for g in 0..num_stars {
            let mut acc = Complex64::default();
            for l in 0..num_layers {
                acc += matrix.entries[(g, l)] * layer_specs[l].get(j, k);
            }
            wave_specs[g].set(j, k, acc);
        }
    }

    let ctx = sys.aperture_ctx();
    let waves = wave_specs
        .iter()
        .map(|spec| synthesize(spec, &ctx))
        .collect::<Result<_>>()?;
    Ok(WavefrontSet {
        waves,
        mask: sys.aperture_mask.clone(),
    })
}
