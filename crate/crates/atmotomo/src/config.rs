//! Declarative experiment configuration: JSON with a strict schema (unknown
//! keys rejected), angles in arcseconds, lengths in meters. Parsing fills
//! every default, so a serialized config is fully explicit and lands in the
//! run manifest as-is.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ApertureSpec, GuideStar, LayerSpec, StarKind, SystemGeometry, ARCSEC,
};
use crate::metrics::EvaluationGrid;
use crate::svtd::FilterSpec;
use crate::system::TomoSystem;
use crate::turbulence::{TurbulenceParams, KOLMOGOROV_EXPONENT, REFERENCE_FRIED_PARAMETER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureConfig {
    pub outer_radius_m: f64,
    #[serde(default)]
    pub inner_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarConfig {
    pub alpha_x_arcsec: f64,
    pub alpha_y_arcsec: f64,
    pub kind: StarKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub height_m: f64,
    pub weight: f64,
}

fn default_lgs_height() -> f64 {
    90_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub aperture: ApertureConfig,
    pub stars: Vec<StarConfig>,
    pub layers: Vec<LayerConfig>,
    #[serde(default = "default_lgs_height")]
    pub lgs_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Samples per axis (even, at least 4).
    pub n: usize,
    /// Half-width of the periodic extension square in meters.
    pub extension_half_width_m: f64,
}

fn default_fried() -> f64 {
    REFERENCE_FRIED_PARAMETER
}
fn default_exponent() -> f64 {
    KOLMOGOROV_EXPONENT
}
fn default_outer_scale() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbulenceConfig {
    #[serde(default = "default_fried")]
    pub fried_parameter_m: f64,
    #[serde(default = "default_exponent")]
    pub spectral_exponent: f64,
    #[serde(default = "default_outer_scale")]
    pub outer_scale_m: f64,
}

impl Default for TurbulenceConfig {
    fn default() -> Self {
        Self {
            fried_parameter_m: default_fried(),
            spectral_exponent: default_exponent(),
            outer_scale_m: default_outer_scale(),
        }
    }
}

fn default_s() -> f64 {
    1.0
}
fn default_iterations() -> usize {
    5
}
fn default_step_scale() -> f64 {
    1.0
}

/// Which reconstructor the pipeline runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    /// Per-frequency singular-value reconstruction with a spectral filter.
    Svtd {
        #[serde(default = "default_s")]
        s: f64,
        filter: FilterSpec,
    },
    /// Plain frame-decomposition reconstruction (one back-projection step).
    Fd,
    /// Fixed-point refinement of the frame inverse.
    IterativeFd {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_step_scale")]
        step_scale: f64,
    },
    /// Steepest descent with the overlay-weighted adjoint direction.
    Gradient {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_step_scale")]
        step_scale: f64,
    },
}

impl SolverConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::Svtd { .. } => "svtd",
            SolverConfig::Fd => "fd",
            SolverConfig::IterativeFd { .. } => "iterative_fd",
            SolverConfig::Gradient { .. } => "gradient",
        }
    }
}

fn default_directions() -> Vec<[f64; 2]> {
    EvaluationGrid::default()
        .directions
        .iter()
        .map(|&(x, y)| [x / ARCSEC, y / ARCSEC])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// View directions in arcseconds; defaults to the 5x5 grid over a
    /// 2-arcmin field of view.
    #[serde(default = "default_directions")]
    pub directions_arcsec: Vec<[f64; 2]>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            directions_arcsec: default_directions(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A full experiment description; see the crate README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub turbulence: TurbulenceConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.to_geometry()?;
        if let SolverConfig::Svtd { s, filter } = &self.solver {
            filter.validate()?;
            if !(*s >= 0.0) {
                return Err(Error::Config(format!(
                    "Sobolev order must be non-negative, got {s}"
                )));
            }
        }
        self.evaluation_grid().validate()?;
        Ok(())
    }

    pub fn to_geometry(&self) -> Result<SystemGeometry> {
        let aperture = ApertureSpec::new(
            self.geometry.aperture.outer_radius_m,
            self.geometry.aperture.inner_radius_m,
        )?;
        let stars = self
            .geometry
            .stars
            .iter()
            .map(|s| GuideStar::new(s.alpha_x_arcsec * ARCSEC, s.alpha_y_arcsec * ARCSEC, s.kind))
            .collect();
        let layers = self
            .geometry
            .layers
            .iter()
            .map(|l| LayerSpec {
                height: l.height_m,
                weight: l.weight,
            })
            .collect();
        SystemGeometry::new(
            aperture,
            stars,
            layers,
            self.geometry.lgs_height_m,
            self.grid.extension_half_width_m,
        )
    }

    /// Builds the discretized system, running the extension gate.
    pub fn build_system(&self) -> Result<TomoSystem> {
        TomoSystem::new(self.to_geometry()?, self.grid.n)
    }

    pub fn turbulence_params(&self) -> TurbulenceParams {
        TurbulenceParams {
            fried_parameter: self.turbulence.fried_parameter_m,
            spectral_exponent: self.turbulence.spectral_exponent,
            outer_scale: self.turbulence.outer_scale_m,
            seed: self.seed,
        }
    }

    pub fn evaluation_grid(&self) -> EvaluationGrid {
        EvaluationGrid {
            directions: self
                .evaluation
                .directions_arcsec
                .iter()
                .map(|d| (d[0] * ARCSEC, d[1] * ARCSEC))
                .collect(),
        }
    }

    /// Stable hash of the fully resolved configuration.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }
}

/// Equally spaced ring of stars, first star at 90 degrees.
pub fn star_ring(count: usize, radius_arcsec: f64, kind: StarKind) -> Vec<StarConfig> {
    (0..count)
        .map(|i| {
            let angle =
                std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            StarConfig {
                alpha_x_arcsec: radius_arcsec * angle.cos(),
                alpha_y_arcsec: radius_arcsec * angle.sin(),
                kind,
            }
        })
        .collect()
}

fn table_layers() -> Vec<LayerConfig> {
    vec![
        LayerConfig {
            height_m: 0.0,
            weight: 0.75,
        },
        LayerConfig {
            height_m: 4000.0,
            weight: 0.15,
        },
        LayerConfig {
            height_m: 12700.0,
            weight: 0.1,
        },
    ]
}

/// Canned configurations.
///
/// `ngs6`: 42 m aperture with 28% obstruction, six NGS on a 1-arcmin
/// diameter ring, the three-layer profile, SVTD with `s = 1`.
/// `mixed`: three NGS on a 160-arcsec diameter ring plus six LGS on the
/// 1-arcmin ring, iterative frame refinement (the per-frequency solver does
/// not apply to mixed kinds).
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "ngs6" => Ok(ExperimentConfig {
            geometry: GeometryConfig {
                aperture: ApertureConfig {
                    outer_radius_m: 21.0,
                    inner_radius_m: 0.28 * 21.0,
                },
                stars: star_ring(6, 30.0, StarKind::Ngs),
                layers: table_layers(),
                lgs_height_m: default_lgs_height(),
            },
            grid: GridConfig {
                n: 64,
                extension_half_width_m: 27.0,
            },
            turbulence: TurbulenceConfig::default(),
            solver: SolverConfig::Svtd {
                s: 1.0,
                filter: FilterSpec::Tikhonov { alpha: 1e-3 },
            },
            evaluation: EvaluationConfig::default(),
            seed: 1,
            output_dir: PathBuf::from("out/ngs6"),
        }),
        "mixed" => {
            let mut stars = star_ring(3, 80.0, StarKind::Ngs);
            stars.extend(star_ring(6, 30.0, StarKind::Lgs));
            Ok(ExperimentConfig {
                geometry: GeometryConfig {
                    aperture: ApertureConfig {
                        outer_radius_m: 21.0,
                        inner_radius_m: 0.28 * 21.0,
                    },
                    stars,
                    layers: table_layers(),
                    lgs_height_m: default_lgs_height(),
                },
                grid: GridConfig {
                    n: 64,
                    extension_half_width_m: 32.0,
                },
                turbulence: TurbulenceConfig::default(),
                solver: SolverConfig::IterativeFd {
                    iterations: 5,
                    step_scale: 1.0,
                },
                evaluation: EvaluationConfig::default(),
                seed: 1,
                output_dir: PathBuf::from("out/mixed"),
            })
        }
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (available: ngs6, mixed)"
        ))),
    }
}
