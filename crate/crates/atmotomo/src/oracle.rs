//! Slow reference implementations used to validate the closed forms.
//!
//! These evaluate the frame-theoretic series directly: scaled basis
//! transforms as dense matrix sandwiches (valid for any cone scale, also
//! when it differs from the grid's own scale), the frame-operator series,
//! the dual-frame expansion, and the series form of the approximate frame
//! inverse. All series are truncated at the grid's full discrete frequency
//! set. None of them share code with the closed-form paths they check.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::field::{ComplexField2D, DomainTag, Field2D, Grid2};
use crate::forward::{LayerStack, WavefrontSet};
use crate::frame::frame_ctx;
use crate::spectral::{analyze, freq_of_bin, SpectralField, TransformContext};
use crate::system::TomoSystem;

/// One-axis table of analysis exponentials, `E[(i, bin)] =
/// exp(-i omega freq(bin) coord(i) / c)`.
fn analysis_table(grid: &crate::geometry::GridSpec, ctx: &TransformContext) -> DMatrix<Complex64> {
    let n = grid.n;
    let omega = std::f64::consts::PI / ctx.half_width;
    DMatrix::from_fn(n, n, |i, bin| {
        let freq = freq_of_bin(bin, n) as f64;
        Complex64::from_polar(1.0, -omega * freq * grid.coord(i) / ctx.scale)
    })
}

fn synthesis_table(grid: &crate::geometry::GridSpec, ctx: &TransformContext) -> DMatrix<Complex64> {
    analysis_table(grid, ctx).map(|c| c.conj())
}

/// Riemann-sum coefficients of a complex field against the scaled basis of
/// `ctx`; the basis scale may differ from the grid's natural scale.
pub fn analyze_scaled(field: &ComplexField2D, ctx: &TransformContext) -> SpectralField {
    let grid = field.grid;
    let n = grid.n;
    let u = DMatrix::from_fn(n, n, |iy, ix| field.values[iy * n + ix]);
    let e = analysis_table(&grid, ctx);
    // coeff(bk, bj) = sum_iy conj-exp(k, iy) sum_ix u(iy, ix) conj-exp(j, ix)
    let m = &u * &e;
    let c = e.transpose() * m;
    let pref = grid.spacing().powi(2)
        / (ctx.weight.sqrt() * 2.0 * ctx.scale * ctx.half_width);
    let mut out = SpectralField::zeros(grid, field.domain);
    for bk in 0..n {
        for bj in 0..n {
            out.coeffs[bk * n + bj] = c[(bk, bj)] * pref;
        }
    }
    out
}

/// [`analyze_scaled`] for real samples.
pub fn analyze_scaled_real(field: &Field2D, ctx: &TransformContext) -> SpectralField {
    let complex = Grid2 {
        grid: field.grid,
        domain: field.domain,
        values: field.values.iter().map(|&v| Complex64::from(v)).collect(),
    };
    analyze_scaled(&complex, ctx)
}

/// Evaluates `sum_jk coeff(j,k) * w_jk` pointwise on the grid, with the basis
/// scaled by `ctx` (dense sandwich, no FFT).
pub fn synthesize_scaled(spec: &SpectralField, grid_domain: DomainTag, ctx: &TransformContext) -> ComplexField2D {
    let grid = spec.grid;
    let n = grid.n;
    let c = DMatrix::from_fn(n, n, |bk, bj| spec.coeffs[bk * n + bj]);
    let s = synthesis_table(&grid, ctx);
    // value(iy, ix) = sum_bk exp(k, iy) sum_bj coeff(bk, bj) exp(j, ix)
    let v = (&s * c) * s.transpose();
    let pref = ctx.weight.sqrt() / (2.0 * ctx.scale * ctx.half_width);
    let mut values = vec![Complex64::default(); n * n];
    let mut vt = v.transpose();
    vt.iter_mut().for_each(|x| *x *= pref);
    for iy in 0..n {
        for ix in 0..n {
            values[iy * n + ix] = vt[(ix, iy)];
        }
    }
    ComplexField2D {
        grid,
        domain: grid_domain,
        values,
    }
}

/// Series form of the frame operator on layer `l`:
/// `sum_g sum_jk <f, w_jk I_g> w_jk I_g`.
pub fn frame_operator_series(sys: &TomoSystem, field: &Field2D, layer: usize) -> Result<Field2D> {
    let grid = sys.layer_grids[layer];
    let mut out = Field2D::zeros(grid, DomainTag::Layer(layer));
    for g in 0..sys.num_stars() {
        let ind = sys.masks.indicator(layer, g);
        let ctx = frame_ctx(sys, layer, g);
        let coeffs = analyze_scaled_real(&field.masked(ind), &ctx);
        let synth = synthesize_scaled(&coeffs, DomainTag::Layer(layer), &ctx);
        for (i, m) in ind.iter().enumerate() {
            if *m != 0 {
                out.values[i] += synth.values[i].re;
            }
        }
    }
    Ok(out)
}

/// Dual-frame expansion `sum_g sum_jk <f, w_jk I_g> w_jk I_g / overlay`,
/// which reproduces `f` on the layer footprint.
pub fn dual_expansion_series(sys: &TomoSystem, field: &Field2D, layer: usize) -> Result<Field2D> {
    let grid = sys.layer_grids[layer];
    let overlay = sys.masks.overlay(layer);
    let mut out = Field2D::zeros(grid, DomainTag::Layer(layer));
    for g in 0..sys.num_stars() {
        let ind = sys.masks.indicator(layer, g);
        let ctx = frame_ctx(sys, layer, g);
        let coeffs = analyze_scaled_real(&field.masked(ind), &ctx);
        let synth = synthesize_scaled(&coeffs, DomainTag::Layer(layer), &ctx);
        for (i, m) in ind.iter().enumerate() {
            if *m != 0 {
                out.values[i] += synth.values[i].re / overlay[i] as f64;
            }
        }
    }
    Ok(out)
}

/// Series form of the approximate frame inverse with the explicit duals:
/// per layer and star, the wavefront coefficients are phase-shifted by the
/// star's layer displacement, synthesized at the star's cone scale, masked
/// and divided by the overlay.
pub fn frame_inverse_series(sys: &TomoSystem, waves: &WavefrontSet) -> Result<LayerStack> {
    sys.check_waves(waves)?;
    let ap_ctx = sys.aperture_ctx();
    let wave_specs: Vec<SpectralField> = waves
        .waves
        .iter()
        .map(|w| analyze(w, &ap_ctx))
        .collect::<Result<_>>()?;

    let omega = std::f64::consts::PI / sys.geometry.extension_half_width;
    let mut layers = Vec::with_capacity(sys.num_layers());
    for l in 0..sys.num_layers() {
        let grid = sys.layer_grids[l];
        let n = grid.n;
        let overlay = sys.masks.overlay(l);
        let gamma = sys.geometry.layers[l].weight;
        let h = sys.geometry.layers[l].height;
        let mut out = Field2D::zeros(grid, DomainTag::Layer(l));
        for g in 0..sys.num_stars() {
            let ctx = frame_ctx(sys, l, g);
            let c = sys.cone(l, g);
            let star = &sys.geometry.stars[g];
            let pref = gamma.sqrt() / (c * sys.sigma(g).powi(2));
            let mut coeffs = SpectralField::zeros(grid, DomainTag::Layer(l));
            for bk in 0..n {
                let k = freq_of_bin(bk, n) as f64;
                for bj in 0..n {
                    let j = freq_of_bin(bj, n) as f64;
                    let phase = -omega * (j * star.alpha_x + k * star.alpha_y) * h / c;
                    coeffs.coeffs[bk * n + bj] = wave_specs[g].coeffs[bk * n + bj]
                        * Complex64::from_polar(pref, phase);
                }
            }
            let synth = synthesize_scaled(&coeffs, DomainTag::Layer(l), &ctx);
            let ind = sys.masks.indicator(l, g);
            for (i, m) in ind.iter().enumerate() {
                if *m != 0 && overlay[i] > 0 {
                    out.values[i] += synth.values[i].re / overlay[i] as f64;
                }
            }
        }
        layers.push(out);
    }
    Ok(LayerStack { layers })
}
