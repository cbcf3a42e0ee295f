//! Frame decomposition of the tomography operator: frame coefficients, the
//! overlay frame operator, explicit dual frames, the explicit frame inverse,
//! its fixed-point refinement, and a steepest-descent baseline.
//!
//! The frame family multiplies each layer basis function (at the star's cone
//! scale) by the indicator of the star's aperture copy. Its frame operator is
//! pointwise multiplication by the overlay count, so the dual frame functions
//! are the frame functions divided by the overlay, and the approximate
//! inverse reduces to a weighted back-projection with no series evaluation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField2D, DomainTag, Grid2};
use crate::forward::{
    apply_forward, backprojection, AdjointVariant, LayerStack, WavefrontSet,
};
use crate::spectral::TransformContext;
use crate::system::TomoSystem;

/// Identifies one frame function: frequency pair, layer and star.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameIndex {
    pub j: i64,
    pub k: i64,
    pub layer: usize,
    pub star: usize,
}

/// Frame coefficients of a layer stack, one complex array per (layer, star)
/// in the in-band frequency layout of [`crate::spectral::SpectralField`].
#[derive(Debug, Clone)]
pub struct FrameCoefficients {
    /// `per_layer[l][g]` holds the coefficients against the (l, g) frame
    /// functions.
    pub per_layer: Vec<Vec<crate::spectral::SpectralField>>,
}

impl FrameCoefficients {
    /// Squared l2 mass over stars and in-band frequencies for one layer.
    pub fn layer_mass(&self, layer: usize) -> f64 {
        self.per_layer[layer]
            .iter()
            .map(|spec| spec.norm_sq_in_band())
            .sum()
    }
}

/// Scale context of the (layer, star) frame functions: the star's cone
/// factor, which equals the layer scale only for single-kind star sets.
pub(crate) fn frame_ctx(sys: &TomoSystem, layer: usize, star: usize) -> TransformContext {
    TransformContext {
        scale: sys.cone(layer, star),
        weight: sys.geometry.layers[layer].weight,
        half_width: sys.geometry.extension_half_width,
        domain: DomainTag::Layer(layer),
    }
}

/// Frame analysis: coefficients of each layer against every star's masked
/// basis, computed as the scaled transform of the indicator-masked field.
pub fn frame_analyze(sys: &TomoSystem, stack: &LayerStack) -> Result<FrameCoefficients> {
    sys.check_stack(stack)?;
    let mut per_layer = Vec::with_capacity(sys.num_layers());
    for l in 0..sys.num_layers() {
        let mut per_star = Vec::with_capacity(sys.num_stars());
        for g in 0..sys.num_stars() {
            let masked = stack.layers[l].masked(sys.masks.indicator(l, g));
            let ctx = frame_ctx(sys, l, g);
            per_star.push(crate::oracle::analyze_scaled_real(&masked, &ctx));
        }
        per_layer.push(per_star);
    }
    Ok(FrameCoefficients { per_layer })
}

/// The frame operator in closed form: pointwise multiplication by the
/// overlay count. Works for real and complex fields.
pub fn frame_operator_apply<T>(sys: &TomoSystem, field: &Grid2<T>, layer: usize) -> Result<Grid2<T>>
where
    T: Copy + Default + std::ops::Mul<f64, Output = T>,
{
    let expected = sys.layer_grids[layer];
    if field.grid != expected || field.domain != DomainTag::Layer(layer) {
        return Err(Error::ShapeMismatch(format!(
            "field does not live on layer {layer}"
        )));
    }
    let overlay = sys.masks.overlay(layer);
    let values = field
        .values
        .iter()
        .zip(overlay)
        .map(|(v, o)| *v * *o as f64)
        .collect();
    Ok(Grid2 {
        grid: field.grid,
        domain: field.domain,
        values,
    })
}

/// Evaluates one dual frame function: the frame function divided by the
/// overlay on the layer footprint, zero outside.
pub fn dual_frame_eval(sys: &TomoSystem, index: FrameIndex) -> Result<ComplexField2D> {
    let FrameIndex { j, k, layer, star } = index;
    if layer >= sys.num_layers() || star >= sys.num_stars() {
        return Err(Error::Config(format!(
            "frame index (layer {layer}, star {star}) out of range"
        )));
    }
    let grid = sys.layer_grids[layer];
    let ctx = frame_ctx(sys, layer, star);
    let ind = sys.masks.indicator(layer, star);
    let overlay = sys.masks.overlay(layer);
    let n = grid.n;
    let mut values = vec![Complex64::default(); n * n];
    for iy in 0..n {
        let y = grid.coord(iy);
        for ix in 0..n {
            let idx = iy * n + ix;
            if ind[idx] == 0 {
                continue;
            }
            if overlay[idx] == 0 {
                return Err(Error::Numerical(format!(
                    "mask inconsistency: overlay vanishes on the support of \
                     indicator (layer {layer}, star {star}) at ({ix},{iy})"
                )));
            }
            values[idx] = ctx.basis_value(j, k, grid.coord(ix), y) / overlay[idx] as f64;
        }
    }
    Ok(Grid2 {
        grid,
        domain: DomainTag::Layer(layer),
        values,
    })
}

/// The explicit frame inverse: the back-projection
/// `sum_g sigma_g^{-2} * weight_l / c(l,g)^2 *
///  data_g((r - alpha_g h_l)/c(l,g)) * indicator / overlay`,
/// i.e. the overlay-weighted adjoint with per-star normalizers. No series
/// are evaluated.
pub fn frame_inverse_apply(sys: &TomoSystem, waves: &WavefrontSet) -> Result<LayerStack> {
    let star_weights: Vec<f64> = (0..sys.num_stars())
        .map(|g| 1.0 / sys.sigma(g).powi(2))
        .collect();
    backprojection(
        sys,
        waves,
        AdjointVariant::Analytic,
        Some(&star_weights),
        true,
    )
}

/// Reference-accuracy frame inverse: evaluates each wavefront's
/// trigonometric interpolant exactly at the shifted, scaled layer points
/// instead of taking bilinear taps, so the back-projection is exact for the
/// sampled data. O(n^3) per (layer, star); the bilinear
/// [`frame_inverse_apply`] is the production path inside the solvers.
pub fn frame_inverse_apply_exact(sys: &TomoSystem, waves: &WavefrontSet) -> Result<LayerStack> {
    use nalgebra::DMatrix;

    sys.check_waves(waves)?;
    let ap_ctx = sys.aperture_ctx();
    let wave_specs: Vec<crate::spectral::SpectralField> = waves
        .waves
        .iter()
        .map(|w| crate::spectral::analyze(w, &ap_ctx))
        .collect::<Result<_>>()?;
    let t = sys.geometry.extension_half_width;
    let omega = std::f64::consts::PI / t;
    let n = sys.n();

    let mut layers = Vec::with_capacity(sys.num_layers());
    for l in 0..sys.num_layers() {
        let grid = sys.layer_grids[l];
        let gamma = sys.geometry.layers[l].weight;
        let h = sys.geometry.layers[l].height;
        let overlay = sys.masks.overlay(l);
        let mut out = crate::field::Field2D::zeros(grid, DomainTag::Layer(l));
        for g in 0..sys.num_stars() {
            let star = &sys.geometry.stars[g];
            let c = sys.cone(l, g);
            let factor = gamma / (c * c * sys.sigma(g).powi(2));
            // Fourier sum of the wavefront at p = (r - alpha h)/c, separable
            // in x and y.
            let coeffs = DMatrix::from_fn(n, n, |bk, bj| wave_specs[g].coeffs[bk * n + bj]);
            let ey = DMatrix::from_fn(n, n, |iy, bk| {
                let freq = crate::spectral::freq_of_bin(bk, n) as f64;
                let py = (grid.coord(iy) - star.alpha_y * h) / c;
                Complex64::from_polar(1.0, omega * freq * py)
            });
            let ext = DMatrix::from_fn(n, n, |bj, ix| {
                let freq = crate::spectral::freq_of_bin(bj, n) as f64;
                let px = (grid.coord(ix) - star.alpha_x * h) / c;
                Complex64::from_polar(1.0, omega * freq * px)
            });
            let values = (ey * coeffs) * ext;
            let ind = sys.masks.indicator(l, g);
            for iy in 0..n {
                for ix in 0..n {
                    let idx = iy * n + ix;
                    if ind[idx] != 0 && overlay[idx] > 0 {
                        out.values[idx] +=
                            factor * values[(iy, ix)].re / (2.0 * t * overlay[idx] as f64);
                    }
                }
            }
        }
        layers.push(out);
    }
    Ok(LayerStack { layers })
}

/// Options for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub iterations: usize,
    /// Multiplies each update; 1 is the plain fixed-point step.
    pub step_scale: f64,
    pub record_residuals: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            iterations: 5,
            step_scale: 1.0,
            record_residuals: true,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.step_scale > 0.0) {
            return Err(Error::Config(format!(
                "step scale must be positive, got {}",
                self.step_scale
            )));
        }
        Ok(())
    }
}

/// Result of an iterative reconstruction: the stack and the data-residual
/// norms, entry 0 being the residual of the zero initial guess.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub stack: LayerStack,
    pub residuals: Vec<f64>,
}

/// Residual `data - A stack` and its norm over the aperture.
fn residual_waves(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    stack: &LayerStack,
) -> Result<(WavefrontSet, f64)> {
    let mut res = apply_forward(sys, stack)?;
    for g in 0..sys.num_stars() {
        res.waves[g].scale(-1.0);
        res.waves[g].add_scaled(&waves.waves[g], 1.0)?;
    }
    let norm = sys.wave_norm(&res);
    Ok((res, norm))
}

/// Divergence guard shared by the iterative solvers.
fn check_divergence(iteration: usize, residual: f64, minimum: f64) -> Result<()> {
    if residual > 10.0 * minimum && residual.is_finite() {
        return Err(Error::Diverged {
            iteration,
            residual,
            minimum,
        });
    }
    if !residual.is_finite() {
        return Err(Error::Numerical(format!(
            "residual is not finite at iteration {iteration}"
        )));
    }
    Ok(())
}

/// Fixed-point refinement of the frame inverse:
/// `stack <- stack + step * Ainv(data - A stack)`, starting from zero.
/// One iteration is the plain frame-decomposition reconstruction.
pub fn iterative_fd(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    options: &SolverOptions,
) -> Result<SolveResult> {
    options.validate()?;
    sys.check_waves(waves)?;
    let mut stack = sys.zero_stack();
    let mut residuals = Vec::with_capacity(options.iterations + 1);
    let mut minimum = f64::INFINITY;
    for iteration in 0..=options.iterations {
        let (res, norm) = residual_waves(sys, waves, &stack)?;
        check_divergence(iteration, norm, minimum)?;
        minimum = minimum.min(norm);
        if options.record_residuals {
            residuals.push(norm);
        }
        if iteration == options.iterations {
            break;
        }
        let update = frame_inverse_apply(sys, &res)?;
        for l in 0..sys.num_layers() {
            stack.layers[l].add_scaled(&update.layers[l], options.step_scale)?;
        }
    }
    Ok(SolveResult { stack, residuals })
}

/// Steepest descent on the data misfit, using the overlay-weighted adjoint
/// as the descent direction with an exact line search along it.
pub fn gradient_solve(
    sys: &TomoSystem,
    waves: &WavefrontSet,
    options: &SolverOptions,
) -> Result<SolveResult> {
    options.validate()?;
    sys.check_waves(waves)?;
    let mut stack = sys.zero_stack();
    let mut residuals = Vec::with_capacity(options.iterations + 1);
    let mut minimum = f64::INFINITY;
    for iteration in 0..=options.iterations {
        let (res, norm) = residual_waves(sys, waves, &stack)?;
        check_divergence(iteration, norm, minimum)?;
        minimum = minimum.min(norm);
        if options.record_residuals {
            residuals.push(norm);
        }
        if iteration == options.iterations {
            break;
        }
        let direction = backprojection(sys, &res, AdjointVariant::Analytic, None, true)?;
        let image = apply_forward(sys, &direction)?;
        let denom = sys.wave_inner(&image, &image);
        if denom == 0.0 {
            break; // direction left the data space; residual cannot move
        }
        let step = sys.wave_inner(&image, &res) / denom;
        for l in 0..sys.num_layers() {
            stack.layers[l].add_scaled(&direction.layers[l], options.step_scale * step)?;
        }
    }
    Ok(SolveResult { stack, residuals })
}
