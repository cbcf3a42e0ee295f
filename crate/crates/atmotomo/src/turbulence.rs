//! Synthetic multi-layer turbulence with a Kolmogorov-type power spectrum.
//!
//! Screens are drawn directly as periodic fields on the scaled layer squares
//! by filtering white Gaussian noise in the frequency domain with
//! `amplitude^2 ~ (|kappa|^2 + 1/L_out^2)^(exponent/2)`, `kappa` the physical
//! spatial frequency. The zero mode is removed, the set is rescaled so the
//! total variance follows the `r0^(-5/3)` law (unit variance at the
//! reference seeing of 0.129 m) and the per-layer shares equal the layer
//! weights. Absolute radiometric calibration is out of scope; all quality
//! numbers downstream are relative.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DomainTag, Field2D};
use crate::forward::LayerStack;
use crate::spectral::{analyze, freq_of_bin, in_band_indices};
use crate::system::TomoSystem;

/// Fried parameter at which the generated set has unit total variance.
pub const REFERENCE_FRIED_PARAMETER: f64 = 0.129;

/// Kolmogorov exponent of the phase power spectrum.
pub const KOLMOGOROV_EXPONENT: f64 = -11.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbulenceParams {
    /// Fried parameter in meters; smaller is stronger turbulence.
    pub fried_parameter: f64,
    /// Power-law slope of the phase power spectrum.
    pub spectral_exponent: f64,
    /// Outer scale in meters; large values approximate pure Kolmogorov.
    pub outer_scale: f64,
    pub seed: u64,
}

impl Default for TurbulenceParams {
    fn default() -> Self {
        Self {
            fried_parameter: REFERENCE_FRIED_PARAMETER,
            spectral_exponent: KOLMOGOROV_EXPONENT,
            outer_scale: 1e4,
            seed: 0,
        }
    }
}

impl TurbulenceParams {
    pub fn validate(&self, min_spacing: f64) -> Result<()> {
        if !(self.fried_parameter > 0.0) {
            return Err(Error::Config(format!(
                "Fried parameter must be positive, got {}",
                self.fried_parameter
            )));
        }
        if self.spectral_exponent >= -2.0 {
            return Err(Error::Config(format!(
                "spectral exponent must be below -2 for an integrable tail, got {}",
                self.spectral_exponent
            )));
        }
        if self.outer_scale <= min_spacing {
            return Err(Error::Config(format!(
                "outer scale {} must exceed the grid spacing {min_spacing}",
                self.outer_scale
            )));
        }
        Ok(())
    }
}

/// Generated screens plus the parameters they came from.
#[derive(Debug, Clone)]
pub struct ScreenSet {
    pub stack: LayerStack,
    pub params: TurbulenceParams,
}

/// Draws one screen per layer; deterministic for a fixed seed, with
/// independent per-layer substreams.
pub fn generate_screens(sys: &TomoSystem, params: &TurbulenceParams) -> Result<ScreenSet> {
    let max_spacing = sys
        .layer_grids
        .iter()
        .map(|g| g.spacing())
        .fold(0.0, f64::max);
    params.validate(max_spacing)?;

    let mut layers = Vec::with_capacity(sys.num_layers());
    let mut variances = Vec::with_capacity(sys.num_layers());
    for l in 0..sys.num_layers() {
        let grid = sys.layer_grids[l];
        let n = grid.n;
        let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
        rng.set_stream(l as u64 + 1);

        // White Gaussian noise keeps the spectrum conjugate-symmetric after
        // the real-to-complex transform, so the filtered screen stays real.
        let noise = Field2D::from_fn(grid, DomainTag::Layer(l), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let ctx = sys.layer_ctx(l);
        let mut spec = analyze(&noise, &ctx)?;

        let kappa_unit = std::f64::consts::PI / grid.half_width;
        let cutoff_sq = (1.0 / params.outer_scale).powi(2);
        for by in 0..n {
            let k = freq_of_bin(by, n) as f64;
            for bx in 0..n {
                let j = freq_of_bin(bx, n) as f64;
                let idx = by * n + bx;
                if j == 0.0 && k == 0.0 {
                    spec.coeffs[idx] = Complex64::default();
                    continue;
                }
                let kappa_sq = kappa_unit * kappa_unit * (j * j + k * k);
                spec.coeffs[idx] *= (kappa_sq + cutoff_sq).powf(params.spectral_exponent / 4.0);
            }
        }
        let screen = crate::spectral::synthesize(&spec, &ctx)?;
        let var = screen.values.iter().map(|v| v * v).sum::<f64>() / screen.values.len() as f64;
        variances.push(var);
        layers.push(screen);
    }

    // Normalize: total variance follows r0^(-5/3), shares follow the layer
    // weights.
    let total_target =
        (params.fried_parameter / REFERENCE_FRIED_PARAMETER).powf(-5.0 / 3.0);
    for l in 0..sys.num_layers() {
        let share = sys.geometry.layers[l].weight;
        let target = total_target * share;
        let scale = if variances[l] > 0.0 {
            (target / variances[l]).sqrt()
        } else {
            0.0
        };
        layers[l].scale(scale);
    }

    Ok(ScreenSet {
        stack: LayerStack { layers },
        params: *params,
    })
}

/// Least-squares slope of `log |coefficient|^2` against `log |(j,k)|` over
/// the middle frequency band; recovers the spectral exponent of a generated
/// screen.
pub fn sobolev_regularity_probe(sys: &TomoSystem, screen: &Field2D, layer: usize) -> Result<f64> {
    let ctx = sys.layer_ctx(layer);
    let spec = analyze(screen, &ctx)?;
    let n = sys.n() as i64;
    let lo = 3.0;
    let hi = (n / 4) as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, k) in in_band_indices(sys.n()) {
        let r = ((j * j + k * k) as f64).sqrt();
        if r < lo || r > hi {
            continue;
        }
        let p = spec.get(j, k).norm_sqr();
        if p <= 0.0 {
            continue;
        }
        xs.push(r.ln());
        ys.push(p.ln());
    }
    if xs.len() < 8 {
        return Err(Error::Numerical(
            "not enough in-band modes for a slope fit".into(),
        ));
    }
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    Ok(cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ApertureSpec, GuideStar, LayerSpec, StarKind, SystemGeometry, ARCSEC};

    fn three_layer_system(n: usize) -> TomoSystem {
        let stars: Vec<GuideStar> = (0..6)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 3.0;
                GuideStar::new(
                    30.0 * ARCSEC * a.cos(),
                    30.0 * ARCSEC * a.sin(),
                    StarKind::Ngs,
                )
            })
            .collect();
        let geo = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            stars,
            vec![
                LayerSpec {
                    height: 0.0,
                    weight: 0.75,
                },
                LayerSpec {
                    height: 4000.0,
                    weight: 0.15,
                },
                LayerSpec {
                    height: 12700.0,
                    weight: 0.1,
                },
            ],
            90_000.0,
            27.0,
        )
        .unwrap();
        TomoSystem::new(geo, n).unwrap()
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let sys = three_layer_system(32);
        let params = TurbulenceParams {
            seed: 42,
            ..Default::default()
        };
        let a = generate_screens(&sys, &params).unwrap();
        let b = generate_screens(&sys, &params).unwrap();
        for l in 0..3 {
            assert_eq!(a.stack.layers[l].values, b.stack.layers[l].values);
        }
        let c = generate_screens(
            &sys,
            &TurbulenceParams {
                seed: 43,
                ..params
            },
        )
        .unwrap();
        assert_ne!(a.stack.layers[0].values, c.stack.layers[0].values);
    }

    #[test]
    fn zero_mean_and_weight_shares() {
        let sys = three_layer_system(64);
        let params = TurbulenceParams {
            seed: 7,
            ..Default::default()
        };
        let screens = generate_screens(&sys, &params).unwrap();
        let mut vars = Vec::new();
        for l in 0..3 {
            let values = &screens.stack.layers[l].values;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert!(mean.abs() < 1e-12, "layer {l} mean {mean}");
            vars.push(values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64);
        }
        let total: f64 = vars.iter().sum();
        for (l, expected) in [0.75, 0.15, 0.1].iter().enumerate() {
            let share = vars[l] / total;
            assert!(
                (share - expected).abs() < 0.05 * expected,
                "layer {l} share {share}"
            );
        }
        // Reference seeing gives unit total variance by construction.
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fried_parameter_scaling() {
        let sys = three_layer_system(32);
        let base = generate_screens(
            &sys,
            &TurbulenceParams {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let weaker = generate_screens(
            &sys,
            &TurbulenceParams {
                seed: 3,
                fried_parameter: 2.0 * REFERENCE_FRIED_PARAMETER,
                ..Default::default()
            },
        )
        .unwrap();
        let rms = |s: &ScreenSet, l: usize| {
            (s.stack.layers[l].values.iter().map(|v| v * v).sum::<f64>()
                / s.stack.layers[l].values.len() as f64)
                .sqrt()
        };
        for l in 0..3 {
            let ratio = rms(&weaker, l) / rms(&base, l);
            assert!((ratio - 2f64.powf(-5.0 / 6.0)).abs() < 1e-12, "ratio {ratio}");
        }
    }

    #[test]
    fn spectral_slope_recovered() {
        let sys = three_layer_system(128);
        let kolmo = generate_screens(
            &sys,
            &TurbulenceParams {
                seed: 11,
                ..Default::default()
            },
        )
        .unwrap();
        let slope = sobolev_regularity_probe(&sys, &kolmo.stack.layers[0], 0).unwrap();
        assert!(
            (slope - KOLMOGOROV_EXPONENT).abs() < 0.3,
            "kolmogorov slope {slope}"
        );

        let smooth = generate_screens(
            &sys,
            &TurbulenceParams {
                seed: 11,
                spectral_exponent: -5.0,
                ..Default::default()
            },
        )
        .unwrap();
        let slope = sobolev_regularity_probe(&sys, &smooth.stack.layers[0], 0).unwrap();
        assert!((slope + 5.0).abs() < 0.3, "smooth slope {slope}");

        // White noise has a flat spectrum.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let white = Field2D::from_fn(sys.layer_grids[0], DomainTag::Layer(0), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let slope = sobolev_regularity_probe(&sys, &white, 0).unwrap();
        assert!(slope.abs() < 0.3, "white-noise slope {slope}");
    }

    #[test]
    fn layers_are_uncorrelated() {
        // A Kolmogorov screen is dominated by its few lowest modes, so the
        // raw-field correlation of two independent screens fluctuates at the
        // 0.2 level by chance. Whiten the spectra first: that estimator has
        // n^2 - 1 degrees of freedom and cleanly detects stream reuse.
        let sys = three_layer_system(64);
        let params = TurbulenceParams {
            seed: 19,
            ..Default::default()
        };
        let screens = generate_screens(&sys, &params).unwrap();
        let whitened: Vec<Vec<Complex64>> = (0..3)
            .map(|l| {
                let ctx = sys.layer_ctx(l);
                let spec = analyze(&screens.stack.layers[l], &ctx).unwrap();
                let grid = sys.layer_grids[l];
                let kappa_unit = std::f64::consts::PI / grid.half_width;
                let cutoff_sq = (1.0 / params.outer_scale).powi(2);
                let n = grid.n;
                let mut out = Vec::with_capacity(n * n - 1);
                for by in 0..n {
                    let k = freq_of_bin(by, n) as f64;
                    for bx in 0..n {
                        let j = freq_of_bin(bx, n) as f64;
                        if j == 0.0 && k == 0.0 {
                            continue;
                        }
                        let kappa_sq = kappa_unit * kappa_unit * (j * j + k * k);
                        let amp = (kappa_sq + cutoff_sq).powf(params.spectral_exponent / 4.0);
                        out.push(spec.coeffs[by * n + bx] / amp);
                    }
                }
                out
            })
            .collect();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let dot: Complex64 = whitened[a]
                    .iter()
                    .zip(&whitened[b])
                    .map(|(x, y)| x * y.conj())
                    .sum();
                let na = whitened[a].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                let nb = whitened[b].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                let corr = dot.norm() / (na * nb);
                assert!(corr < 0.1, "layers {a},{b} whitened correlation {corr}");
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let sys = three_layer_system(32);
        assert!(generate_screens(
            &sys,
            &TurbulenceParams {
                spectral_exponent: -1.5,
                ..Default::default()
            }
        )
        .is_err());
        assert!(generate_screens(
            &sys,
            &TurbulenceParams {
                fried_parameter: -0.1,
                ..Default::default()
            }
        )
        .is_err());
        assert!(generate_screens(
            &sys,
            &TurbulenceParams {
                outer_scale: 0.1,
                ..Default::default()
            }
        )
        .is_err());
    }
}
