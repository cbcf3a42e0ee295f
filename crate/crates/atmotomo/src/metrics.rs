//! Reconstruction quality: layer-wise errors on the visible footprints,
//! residual wavefronts over a grid of view directions, and a Strehl proxy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DomainTag, Field2D};
use crate::forward::LayerStack;
use crate::geometry::ARCSEC;
use crate::system::TomoSystem;

/// Directions over the field of view at which residual wavefronts are
/// evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    /// Direction pairs in radians.
    pub directions: Vec<(f64, f64)>,
}

impl EvaluationGrid {
    /// The 5x5 grid spanning a field of view of the given full width.
    pub fn default_grid(fov_arcsec: f64) -> Self {
        let half = fov_arcsec / 2.0;
        let coords = [-half, -half / 2.0, 0.0, half / 2.0, half];
        let mut directions = Vec::with_capacity(25);
        for &ty in &coords {
            for &tx in &coords {
                directions.push((tx * ARCSEC, ty * ARCSEC));
            }
        }
        Self { directions }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .directions
            .iter()
            .any(|(x, y)| !(x.is_finite() && y.is_finite()))
        {
            return Err(Error::Config("evaluation directions must be finite".into()));
        }
        Ok(())
    }
}

impl Default for EvaluationGrid {
    fn default() -> Self {
        Self::default_grid(120.0)
    }
}

/// Per-layer relative L2 error on the layer footprint (overlay > 0);
/// `0/0` counts as 0.
pub fn layer_error(sys: &TomoSystem, recon: &LayerStack, truth: &LayerStack) -> Result<Vec<f64>> {
    sys.check_stack(recon)?;
    sys.check_stack(truth)?;
    let mut errors = Vec::with_capacity(sys.num_layers());
    for l in 0..sys.num_layers() {
        let overlay = sys.masks.overlay(l);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, o) in overlay.iter().enumerate() {
            if *o > 0 {
                let d = recon.layers[l].values[i] - truth.layers[l].values[i];
                num += d * d;
                den += truth.layers[l].values[i].powi(2);
            }
        }
        errors.push(if den > 0.0 {
            (num / den).sqrt()
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    Ok(errors)
}

/// Residual wavefront seen from direction `theta` (radians): the layer sum of
/// `truth - recon` projected at scale 1 (science targets sit at infinity),
/// masked to the aperture; plus its RMS over the mask.
pub fn directional_residual(
    sys: &TomoSystem,
    recon: &LayerStack,
    truth: &LayerStack,
    theta: (f64, f64),
) -> Result<(Field2D, f64)> {
    sys.check_stack(recon)?;
    sys.check_stack(truth)?;
    // The projection must stay on the layer grids.
    let (tx, ty) = theta;
    let sep = tx.hypot(ty);
    for l in 0..sys.num_layers() {
        let reach = sys.geometry.aperture.outer_radius + sep * sys.geometry.layers[l].height;
        if reach > sys.layer_grids[l].half_width + 1e-12 {
            return Err(Error::Extent(crate::geometry::ExtentReport {
                ok: false,
                worst_margin: sys.layer_grids[l].half_width - reach,
                violations: vec![(l, usize::MAX)],
            }));
        }
    }

    let grid = sys.aperture_grid;
    let n = grid.n;
    let mut out = Field2D::zeros(grid, DomainTag::Aperture);
    let mut sum_sq = 0.0;
    let mut count = 0usize;
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
                let h = sys.geometry.layers[l].height;
                acc += truth.layers[l].sample_periodic(x + tx * h, y + ty * h)
                    - recon.layers[l].sample_periodic(x + tx * h, y + ty * h);
            }
            out.values[idx] = acc;
            sum_sq += acc * acc;
            count += 1;
        }
    }
    let rms = (sum_sq / count.max(1) as f64).sqrt();
    Ok((out, rms))
}

/// Strehl proxy `exp(-rms^2)` for a residual RMS in radians of phase.
pub fn marechal_strehl(rms_phase: f64) -> f64 {
    (-rms_phase * rms_phase).exp()
}

/// Quality summary of one reconstruction against the truth.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub layer_errors: Vec<f64>,
    /// Directions in radians, matching `residual_rms` and `strehl` by index.
    pub directions: Vec<(f64, f64)>,
    pub residual_rms: Vec<f64>,
    pub strehl: Vec<f64>,
    pub mean_residual_rms: f64,
    pub mean_strehl: f64,
    /// Values at the direction closest to the axis.
    pub center_residual_rms: f64,
    pub center_strehl: f64,
    /// The Strehl proxy in use (report metadata).
    pub strehl_model: &'static str,
}

/// Runs the full metric set over an evaluation grid.
pub fn evaluate_quality(
    sys: &TomoSystem,
    recon: &LayerStack,
    truth: &LayerStack,
    grid: &EvaluationGrid,
) -> Result<QualityReport> {
    grid.validate()?;
    let layer_errors = layer_error(sys, recon, truth)?;
    let mut residual_rms = Vec::with_capacity(grid.directions.len());
    let mut strehl = Vec::with_capacity(grid.directions.len());
    for &theta in &grid.directions {
        let (_, rms) = directional_residual(sys, recon, truth, theta)?;
        residual_rms.push(rms);
        strehl.push(marechal_strehl(rms));
    }
    let count = residual_rms.len().max(1) as f64;
    let mean_residual_rms = residual_rms.iter().sum::<f64>() / count;
    let mean_strehl = strehl.iter().sum::<f64>() / count;
    let center = grid
        .directions
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.0.hypot(a.1).total_cmp(&b.0.hypot(b.1))
        })
        .map(|(i, _)| i);
    let (center_residual_rms, center_strehl) = match center {
        Some(i) => (residual_rms[i], strehl[i]),
        None => (0.0, 1.0),
    };
    Ok(QualityReport {
        layer_errors,
        directions: grid.directions.clone(),
        residual_rms,
        strehl,
        mean_residual_rms,
        mean_strehl,
        center_residual_rms,
        center_strehl,
        strehl_model: "exp(-rms^2)",
    })
}
