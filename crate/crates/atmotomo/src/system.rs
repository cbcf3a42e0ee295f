//! Discretized tomography system: geometry plus grids, masks and the
//! quadrature-weighted inner products shared by all operators.

use crate::error::{Error, Result};
use crate::field::{DomainTag, Field2D};
use crate::forward::{LayerStack, WavefrontSet};
use crate::geometry::{aperture_mask, GridSpec, LayerMasks, SystemGeometry};
use crate::spectral::TransformContext;

/// A system geometry sampled on `n x n` periodic grids: the aperture plane on
/// `[-T, T)^2` and each layer on its scaled square `[-c_l T, c_l T)^2`.
#[derive(Debug, Clone)]
pub struct TomoSystem {
    pub geometry: SystemGeometry,
    pub aperture_grid: GridSpec,
    pub layer_grids: Vec<GridSpec>,
    pub masks: LayerMasks,
    pub aperture_mask: Vec<u8>,
    /// Cone coefficients `c(l,g)`, indexed `[layer][star]`.
    cone: Vec<Vec<f64>>,
    /// Back-projection normalizers `sigma_g`.
    sigma: Vec<f64>,
}

impl TomoSystem {
    /// Builds grids and masks; fails fast if the extension condition does not
    /// hold for the geometry.
    pub fn new(geometry: SystemGeometry, n: usize) -> Result<Self> {
        let report = geometry.validate_extent();
        if !report.ok {
            return Err(Error::Extent(report));
        }
        let aperture_grid = GridSpec::new(n, geometry.extension_half_width)?;
        let layer_grids: Vec<GridSpec> = (0..geometry.num_layers())
            .map(|l| GridSpec::new(n, geometry.layer_half_width(l)))
            .collect::<Result<_>>()?;
        let masks = LayerMasks::build(&geometry, &layer_grids)?;
        let ap_mask = aperture_mask(&geometry.aperture, &aperture_grid);
        let cone = (0..geometry.num_layers())
            .map(|l| {
                (0..geometry.num_stars())
                    .map(|g| geometry.cone_factor(l, g))
                    .collect()
            })
            .collect();
        let sigma = (0..geometry.num_stars())
            .map(|g| geometry.backprojection_sigma(g))
            .collect();
        Ok(Self {
            geometry,
            aperture_grid,
            layer_grids,
            masks,
            aperture_mask: ap_mask,
            cone,
            sigma,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.aperture_grid.n
    }

    #[inline]
    pub fn num_stars(&self) -> usize {
        self.geometry.num_stars()
    }

    #[inline]
    pub fn num_layers(&self) -> usize {
        self.geometry.num_layers()
    }

    #[inline]
    pub fn cone(&self, layer: usize, star: usize) -> f64 {
        self.cone[layer][star]
    }

    #[inline]
    pub fn sigma(&self, star: usize) -> f64 {
        self.sigma[star]
    }

    pub fn aperture_ctx(&self) -> TransformContext {
        TransformContext::aperture(self.geometry.extension_half_width)
    }

    pub fn layer_ctx(&self, layer: usize) -> TransformContext {
        TransformContext::layer(&self.geometry, layer)
    }

    pub fn zero_stack(&self) -> LayerStack {
        LayerStack {
            layers: (0..self.num_layers())
                .map(|l| Field2D::zeros(self.layer_grids[l], DomainTag::Layer(l)))
                .collect(),
        }
    }

    pub fn zero_waves(&self) -> WavefrontSet {
        WavefrontSet {
            waves: (0..self.num_stars())
                .map(|_| Field2D::zeros(self.aperture_grid, DomainTag::Aperture))
                .collect(),
            mask: self.aperture_mask.clone(),
        }
    }

    pub fn check_stack(&self, stack: &LayerStack) -> Result<()> {
        if stack.layers.len() != self.num_layers() {
            return Err(Error::ShapeMismatch(format!(
                "stack has {} layers, system has {}",
                stack.layers.len(),
                self.num_layers()
            )));
        }
        for (l, field) in stack.layers.iter().enumerate() {
            if field.domain != DomainTag::Layer(l) || field.grid != self.layer_grids[l] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} field does not match the system grid"
                )));
            }
        }
        Ok(())
    }

    pub fn check_waves(&self, waves: &WavefrontSet) -> Result<()> {
        if waves.waves.len() != self.num_stars() {
            return Err(Error::ShapeMismatch(format!(
                "wavefront set has {} stars, system has {}",
                waves.waves.len(),
                self.num_stars()
            )));
        }
        for field in &waves.waves {
            if field.domain != DomainTag::Aperture || field.grid != self.aperture_grid {
                return Err(Error::ShapeMismatch(
                    "wavefront field does not match the aperture grid".into(),
                ));
            }
        }
        Ok(())
    }

    /// Discrete weighted inner product on the layer planes:
    /// `sum_l (1/gamma_l) * cell_l * sum_points a_l b_l`.
    pub fn layer_inner(&self, a: &LayerStack, b: &LayerStack) -> f64 {
        let mut acc = 0.0;
        for l in 0..self.num_layers() {
            let cell = self.layer_grids[l].spacing().powi(2);
            let dot: f64 = a.layers[l]
                .values
                .iter()
                .zip(&b.layers[l].values)
                .map(|(x, y)| x * y)
                .sum();
            acc += dot * cell / self.geometry.layers[l].weight;
        }
        acc
    }

    pub fn layer_norm(&self, a: &LayerStack) -> f64 {
        self.layer_inner(a, a).sqrt()
    }

    /// Discrete inner product on the aperture plane, summed over stars.
    pub fn wave_inner(&self, a: &WavefrontSet, b: &WavefrontSet) -> f64 {
        let cell = self.aperture_grid.spacing().powi(2);
        let mut acc = 0.0;
        for g in 0..self.num_stars() {
            let dot: f64 = a.waves[g]
                .values
                .iter()
                .zip(&b.waves[g].values)
                .map(|(x, y)| x * y)
                .sum();
            acc += dot * cell;
        }
        acc
    }

    pub fn wave_norm(&self, a: &WavefrontSet) -> f64 {
        self.wave_inner(a, a).sqrt()
    }
}
