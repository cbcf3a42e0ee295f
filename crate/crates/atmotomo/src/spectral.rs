//! Fourier analysis and synthesis against the scaled periodic bases.
//!
//! The aperture-plane basis over `[-T, T)^2` is
//! `w_jk(x, y) = exp(i (pi/T) (j x + k y)) / (2T)`; the layer-plane basis is
//! `w_jk((x, y)/c) * sqrt(gamma) / c` on `[-cT, cT)^2`. Both are orthonormal
//! under the scaled inner products (the layer one divides by `gamma`), and on
//! the periodic grid the Riemann-sum inner products reproduce exact
//! orthonormality, so analysis reduces to a scaled 2-D FFT.
//!
//! Per-frequency work (the reconstructors, diagnostics) runs over the index
//! band `|j|, |k| <= n/2 - 1`, dropping the Nyquist row and column. The full
//! `n x n` coefficient array is kept so that `synthesize(analyze(f)) == f`
//! holds exactly for every sampled field, not only band-limited ones.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField2D, DomainTag, Field2D, Grid2};
use crate::geometry::{GridSpec, SystemGeometry};

/// Tolerated imaginary residue when truncating a synthesized field to real.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Transform context
// ---------------------------------------------------------------------------

/// Scaling data of one plane: cone scale `c`, turbulence weight `gamma` and
/// extension half-width `T`. The plane's grid covers `[-cT, cT)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformContext {
    pub scale: f64,
    pub weight: f64,
    pub half_width: f64,
    pub domain: DomainTag,
}

impl TransformContext {
    /// Aperture plane: `c = 1`, `gamma = 1`.
    pub fn aperture(half_width: f64) -> Self {
        Self {
            scale: 1.0,
            weight: 1.0,
            half_width,
            domain: DomainTag::Aperture,
        }
    }

    /// Layer plane `l` of a system geometry.
    pub fn layer(geometry: &SystemGeometry, layer: usize) -> Self {
        Self {
            scale: geometry.min_cone_factor(layer),
            weight: geometry.layers[layer].weight,
            half_width: geometry.extension_half_width,
            domain: DomainTag::Layer(layer),
        }
    }

    pub fn for_domain(geometry: &SystemGeometry, domain: DomainTag) -> Self {
        match domain {
            DomainTag::Aperture => Self::aperture(geometry.extension_half_width),
            DomainTag::Layer(l) => Self::layer(geometry, l),
        }
    }

    /// Half-width of the grid this context's plane is sampled on.
    pub fn grid_half_width(&self) -> f64 {
        self.scale * self.half_width
    }

    fn check(&self, grid: &GridSpec, domain: DomainTag) -> Result<()> {
        if domain != self.domain {
            return Err(Error::ShapeMismatch(format!(
                "domain tag {:?} does not match transform context {:?}",
                domain, self.domain
            )));
        }
        let expected = self.grid_half_width();
        if (grid.half_width - expected).abs() > 1e-9 * expected.max(1.0) {
            return Err(Error::ShapeMismatch(format!(
                "grid half-width {} does not match c*T = {}",
                grid.half_width, expected
            )));
        }
        Ok(())
    }

    /// Value of the basis function at frequency pair `(j, k)` and point
    /// `(x, y)` of this plane.
    pub fn basis_value(&self, j: i64, k: i64, x: f64, y: f64) -> Complex64 {
        let omega = std::f64::consts::PI / self.half_width;
        let phase = omega * (j as f64 * x + k as f64 * y) / self.scale;
        Complex64::from_polar(1.0, phase) * self.weight.sqrt()
            / (self.scale * 2.0 * self.half_width)
    }
}

// ---------------------------------------------------------------------------
// Spectral field
// ---------------------------------------------------------------------------

/// Fourier coefficients of a sampled field, `n x n` in FFT bin layout
/// (`coeffs[bin(k) * n + bin(j)]`, frequency `j` along x).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub domain: DomainTag,
    /// Sobolev order already folded into the coefficients (0 = raw).
    pub sobolev_order: f64,
    pub coeffs: Vec<Complex64>,
}

/// FFT bin of a signed frequency.
#[inline]
pub fn bin_of_freq(j: i64, n: usize) -> usize {
    if j >= 0 {
        j as usize
    } else {
        (j + n as i64) as usize
    }
}

/// Signed frequency of an FFT bin; bin `n/2` maps to the Nyquist `-n/2`.
#[inline]
pub fn freq_of_bin(bin: usize, n: usize) -> i64 {
    if bin < n / 2 {
        bin as i64
    } else {
        bin as i64 - n as i64
    }
}

/// All in-band frequency pairs `(j, k)` with `|j|, |k| <= n/2 - 1`, iterated
/// in a fixed row-major order (`k` outer, `j` inner, both ascending). Every
/// per-frequency loop in the crate uses this order.
pub fn in_band_indices(n: usize) -> impl Iterator<Item = (i64, i64)> {
    let m = n as i64 / 2 - 1;
    (-m..=m).flat_map(move |k| (-m..=m).map(move |j| (j, k)))
}

impl SpectralField {
    pub fn zeros(grid: GridSpec, domain: DomainTag) -> Self {
        Self {
            grid,
            domain,
            sobolev_order: 0.0,
            coeffs: vec![Complex64::default(); grid.num_points()],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n
    }

    #[inline]
    pub fn get(&self, j: i64, k: i64) -> Complex64 {
        let n = self.grid.n;
        self.coeffs[bin_of_freq(k, n) * n + bin_of_freq(j, n)]
    }

    #[inline]
    pub fn set(&mut self, j: i64, k: i64, value: Complex64) {
        let n = self.grid.n;
        self.coeffs[bin_of_freq(k, n) * n + bin_of_freq(j, n)] = value;
    }

    /// Squared l2 mass of the in-band coefficients.
    pub fn norm_sq_in_band(&self) -> f64 {
        in_band_indices(self.grid.n)
            .map(|(j, k)| self.get(j, k).norm_sqr())
            .sum()
    }

    /// Largest in-band violation of `c(-j,-k) = conj(c(j,k))`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        in_band_indices(self.grid.n)
            .map(|(j, k)| (self.get(-j, -k) - self.get(j, k).conj()).norm())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// FFT plumbing
// ---------------------------------------------------------------------------

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for iy in 0..n {
        for ix in (iy + 1)..n {
            buf.swap(iy * n + ix, ix * n + iy);
        }
    }
}

fn fft2_inplace(buf: &mut [Complex64], n: usize, direction: FftDirection) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction));
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(buf, n);
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(buf, n);
}

/// Parity sign `(-1)^(j+k)` re-referencing FFT phases from the grid corner
/// to the domain center; bin parity equals frequency parity for even `n`.
#[inline]
fn center_sign(bx: usize, by: usize) -> f64 {
    if (bx + by) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// Analysis / synthesis
// ---------------------------------------------------------------------------

fn analyze_buffer(mut buf: Vec<Complex64>, grid: GridSpec, ctx: &TransformContext) -> SpectralField {
    let n = grid.n;
    fft2_inplace(&mut buf, n, FftDirection::Forward);
    let scale = 2.0 * ctx.grid_half_width() / (n as f64 * n as f64 * ctx.weight.sqrt());
    for by in 0..n {
        for bx in 0..n {
            buf[by * n + bx] *= scale * center_sign(bx, by);
        }
    }
    SpectralField {
        grid,
        domain: ctx.domain,
        sobolev_order: 0.0,
        coeffs: buf,
    }
}

/// Coefficients of a real field against the plane's basis. Exact (to machine
/// precision) for in-band basis functions and exactly inverted by
/// [`synthesize`].
pub fn analyze(field: &Field2D, ctx: &TransformContext) -> Result<SpectralField> {
    ctx.check(&field.grid, field.domain)?;
    let buf = field.values.iter().map(|&v| Complex64::from(v)).collect();
    Ok(analyze_buffer(buf, field.grid, ctx))
}

/// Same as [`analyze`] for complex-valued samples.
pub fn analyze_complex(field: &ComplexField2D, ctx: &TransformContext) -> Result<SpectralField> {
    ctx.check(&field.grid, field.domain)?;
    Ok(analyze_buffer(field.values.clone(), field.grid, ctx))
}

fn synthesize_buffer(spec: &SpectralField, ctx: &TransformContext) -> Vec<Complex64> {
    let n = spec.grid.n;
    let mut buf = spec.coeffs.clone();
    let scale = ctx.weight.sqrt() / (2.0 * ctx.grid_half_width());
    for by in 0..n {
        for bx in 0..n {
            buf[by * n + bx] *= scale * center_sign(bx, by);
        }
    }
    fft2_inplace(&mut buf, n, FftDirection::Inverse);
    buf
}

/// Pointwise sum of `coeff(j,k) * w_jk` on the grid; the exact inverse of
/// [`analyze`]. The result is truncated to its real part; a residue above
/// [`IMAG_RESIDUE_TOL`] (relative) is logged as a warning.
pub fn synthesize(spec: &SpectralField, ctx: &TransformContext) -> Result<Field2D> {
    ctx.check(&spec.grid, spec.domain)?;
    let buf = synthesize_buffer(spec, ctx);
    let max_abs = buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let max_im = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if max_im > IMAG_RESIDUE_TOL * max_abs.max(1.0) {
        log::warn!(
            "synthesize: imaginary residue {:.3e} exceeds {:.1e}; spectrum is not conjugate-symmetric",
            max_im,
            IMAG_RESIDUE_TOL
        );
    }
    Ok(Field2D {
        grid: spec.grid,
        domain: spec.domain,
        values: buf.into_iter().map(|c| c.re).collect(),
    })
}

/// Complex synthesis without the realness truncation.
pub fn synthesize_complex(spec: &SpectralField, ctx: &TransformContext) -> Result<ComplexField2D> {
    ctx.check(&spec.grid, spec.domain)?;
    Ok(Grid2 {
        grid: spec.grid,
        domain: spec.domain,
        values: synthesize_buffer(spec, ctx),
    })
}

// ---------------------------------------------------------------------------
// Sobolev weighting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolevDirection {
    /// Multiply by `(1 + beta |(j,k)|^2)^(-s/2)`.
    Apply,
    /// Divide by the same factor.
    Remove,
}

/// The diagonal Sobolev factor `(1 + beta |(j,k)|^2)^(-s/2)`.
#[inline]
pub fn sobolev_factor(j: i64, k: i64, s: f64, beta: f64) -> f64 {
    let jk2 = (j * j + k * k) as f64;
    (1.0 + beta * jk2).powf(-s / 2.0)
}

/// Applies or removes the order-`s` Sobolev weight on every coefficient.
/// `Apply` followed by `Remove` is the identity; the factors never vanish.
pub fn sobolev_scale(
    spec: &SpectralField,
    s: f64,
    beta: f64,
    direction: SobolevDirection,
) -> SpectralField {
    let n = spec.grid.n;
    let mut out = spec.clone();
    for by in 0..n {
        let k = freq_of_bin(by, n);
        for bx in 0..n {
            let j = freq_of_bin(bx, n);
            let f = sobolev_factor(j, k, s, beta);
            let c = &mut out.coeffs[by * n + bx];
            match direction {
                SobolevDirection::Apply => *c *= f,
                SobolevDirection::Remove => *c /= f,
            }
        }
    }
    out.sobolev_order = match direction {
        SobolevDirection::Apply => spec.sobolev_order + s,
        SobolevDirection::Remove => spec.sobolev_order - s,
    };
    out
}

/// Sobolev norm `sqrt(sum (1 + beta |(j,k)|^2)^s |c_jk|^2)` over the in-band
/// set, taking the coefficients as raw (order-0) basis coefficients.
pub fn sobolev_norm(spec: &SpectralField, s: f64, beta: f64) -> f64 {
    in_band_indices(spec.grid.n)
        .map(|(j, k)| {
            let w = 1.0 + beta * ((j * j + k * k) as f64);
            w.powf(s) * spec.get(j, k).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Samples the basis function at `(j, k)` on the plane's grid.
pub fn sample_basis(grid: GridSpec, ctx: &TransformContext, j: i64, k: i64) -> ComplexField2D {
    Grid2::from_fn(grid, ctx.domain, |x, y| ctx.basis_value(j, k, x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn aperture_ctx() -> (GridSpec, TransformContext) {
        let t = 23.0;
        (GridSpec::new(64, t).unwrap(), TransformContext::aperture(t))
    }

    #[test]
    fn constant_field_hits_zero_frequency() {
        let (grid, ctx) = aperture_ctx();
        let field = Field2D::from_fn(grid, DomainTag::Aperture, |_, _| 1.0 / (2.0 * 23.0));
        let spec = analyze(&field, &ctx).unwrap();
        assert!((spec.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        for (j, k) in in_band_indices(grid.n) {
            if (j, k) != (0, 0) {
                assert!(spec.get(j, k).norm() < 1e-12, "leak at ({j},{k})");
            }
        }
    }

    #[test]
    fn basis_function_analyzes_to_delta() {
        let (grid, ctx) = aperture_ctx();
        let basis = sample_basis(grid, &ctx, 3, -2);
        let spec = analyze_complex(&basis, &ctx).unwrap();
        for (j, k) in in_band_indices(grid.n) {
            let expected = if (j, k) == (3, -2) { 1.0 } else { 0.0 };
            assert!(
                (spec.get(j, k) - Complex64::from(expected)).norm() < 1e-12,
                "coefficient at ({j},{k})"
            );
        }
    }

    #[test]
    fn weighted_layer_basis_analyzes_to_delta() {
        // gamma^(1/2) in the basis cancels the 1/gamma in the inner product.
        let grid = GridSpec::new(64, 23.0).unwrap();
        let ctx = TransformContext {
            scale: 1.0,
            weight: 0.75,
            half_width: 23.0,
            domain: DomainTag::Layer(0),
        };
        let basis = sample_basis(grid, &ctx, 1, 0);
        let spec = analyze_complex(&basis, &ctx).unwrap();
        assert!((spec.get(1, 0) - Complex64::from(1.0)).norm() < 1e-12);
        assert!(spec.get(0, 0).norm() < 1e-12);
    }

    #[test]
    fn scaled_layer_basis_analyzes_to_delta() {
        let grid = GridSpec::new(32, 0.8588888888888889 * 27.0).unwrap();
        let ctx = TransformContext {
            scale: 0.8588888888888889,
            weight: 0.1,
            half_width: 27.0,
            domain: DomainTag::Layer(2),
        };
        let basis = sample_basis(grid, &ctx, -4, 7);
        let spec = analyze_complex(&basis, &ctx).unwrap();
        assert!((spec.get(-4, 7) - Complex64::from(1.0)).norm() < 1e-12);
        assert!(spec.get(3, 3).norm() < 1e-12);
    }

    #[test]
    fn round_trip_is_identity_for_random_fields() {
        let (grid, ctx) = aperture_ctx();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let field = Field2D::from_fn(grid, DomainTag::Aperture, |_, _| rng.gen_range(-1.0..1.0));
        let spec = analyze(&field, &ctx).unwrap();
        let back = synthesize(&spec, &ctx).unwrap();
        for (a, b) in field.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-12);
        }
        // Real input -> conjugate-symmetric in-band spectrum.
        assert!(spec.conjugate_symmetry_defect() < 1e-12);
    }

    #[test]
    fn synthesize_of_zero_and_single_coefficient() {
        let (grid, ctx) = aperture_ctx();
        let spec = SpectralField::zeros(grid, DomainTag::Aperture);
        let zero = synthesize(&spec, &ctx).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));

        let mut spec = SpectralField::zeros(grid, DomainTag::Aperture);
        spec.set(0, 0, Complex64::from(1.0));
        let constant = synthesize(&spec, &ctx).unwrap();
        for v in &constant.values {
            assert!((v - 1.0 / (2.0 * 23.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_with_weights() {
        // Riemann sum of |f|^2 / gamma equals the coefficient mass.
        let gamma = 0.15;
        let c = 1.0;
        let t = 27.0;
        let grid = GridSpec::new(64, c * t).unwrap();
        let ctx = TransformContext {
            scale: c,
            weight: gamma,
            half_width: t,
            domain: DomainTag::Layer(1),
        };
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        // Band-limited random real field.
        let mut spec = SpectralField::zeros(grid, DomainTag::Layer(1));
        for k in -10..=10i64 {
            for j in -10..=10i64 {
                let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                spec.set(j, k, v);
            }
        }
        // Symmetrize so the field is real.
        let sym = {
            let mut s = spec.clone();
            for (j, k) in in_band_indices(grid.n).collect::<Vec<_>>() {
                let v = 0.5 * (spec.get(j, k) + spec.get(-j, -k).conj());
                s.set(j, k, v);
            }
            s.set(0, 0, Complex64::from(spec.get(0, 0).re));
            s
        };
        let field = synthesize(&sym, &ctx).unwrap();
        let cell = grid.spacing() * grid.spacing();
        let riemann: f64 = field.values.iter().map(|v| v * v).sum::<f64>() * cell / gamma;
        let mass = sym.norm_sq_in_band();
        assert!(
            (riemann - mass).abs() <= 1e-10 * mass.max(1.0),
            "riemann {riemann} vs mass {mass}"
        );
    }

    #[test]
    fn sobolev_scale_factors_and_inverse() {
        let (grid, _ctx) = aperture_ctx();
        let mut spec = SpectralField::zeros(grid, DomainTag::Aperture);
        spec.set(1, 0, Complex64::from(1.0));
        spec.set(3, 4, Complex64::from(2.0));

        // s = 0 is the identity.
        let same = sobolev_scale(&spec, 0.0, 1.0, SobolevDirection::Apply);
        assert_eq!(same.coeffs, spec.coeffs);

        // s = 2, beta = 1 at (1,0): factor (1+1)^(-1) = 0.5.
        let scaled = sobolev_scale(&spec, 2.0, 1.0, SobolevDirection::Apply);
        assert!((scaled.get(1, 0) - Complex64::from(0.5)).norm() < 1e-15);

        // s = 11/6, beta = 0.01866 at (3,4).
        let s = 11.0 / 6.0;
        let scaled = sobolev_scale(&spec, s, 0.01866, SobolevDirection::Apply);
        let factor = scaled.get(3, 4).re / 2.0;
        assert!((factor - (1.0f64 + 0.4665).powf(-11.0 / 12.0)).abs() < 1e-12);
        assert!((factor - 0.7043).abs() < 1e-3);

        // apply then remove is the identity; apply contracts off-center modes.
        let back = sobolev_scale(&scaled, s, 0.01866, SobolevDirection::Remove);
        for (a, b) in back.coeffs.iter().zip(&spec.coeffs) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!(scaled.get(3, 4).norm() < spec.get(3, 4).norm());
    }

    #[test]
    fn sobolev_norm_values() {
        let (grid, _) = aperture_ctx();
        let zero = SpectralField::zeros(grid, DomainTag::Aperture);
        assert_eq!(sobolev_norm(&zero, 1.5, 0.02), 0.0);

        let mut spec = SpectralField::zeros(grid, DomainTag::Aperture);
        spec.set(0, 0, Complex64::from(1.0));
        assert!((sobolev_norm(&spec, 3.0, 0.5) - 1.0).abs() < 1e-15);

        let mut spec = SpectralField::zeros(grid, DomainTag::Aperture);
        spec.set(1, 1, Complex64::from(1.0));
        assert!((sobolev_norm(&spec, 1.0, 1.0) - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn mismatched_domain_rejected() {
        let (grid, ctx) = aperture_ctx();
        let field = Field2D::zeros(grid, DomainTag::Layer(0));
        assert!(analyze(&field, &ctx).is_err());
    }
}
