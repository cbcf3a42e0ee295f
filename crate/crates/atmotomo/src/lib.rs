//! Atmospheric tomography for adaptive optics.
//!
//! Reconstruction of layered atmospheric turbulence from multi-guide-star
//! wavefront data. The crate provides the tomography operator and its
//! adjoints, a per-frequency singular-value reconstructor with regularizing
//! filters, an explicit frame-decomposition inverse with an iterative
//! refinement, a steepest-descent baseline, a Kolmogorov-type turbulence
//! simulator, quality metrics, and a deterministic experiment pipeline
//! exposed through the `atmotomo` CLI.

pub mod config;
pub mod error;
pub mod field;
pub mod forward;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod spectral;
pub mod svtd;
pub mod system;
pub mod turbulence;

pub use error::{Error, Result};
pub use field::{zero_extend, ComplexField2D, DomainTag, Field2D, Grid2};
pub use geometry::{
    aperture_mask, cone_factor, ApertureSpec, ExtentReport, GridSpec, GuideStar, LayerMasks,
    LayerSpec, StarKind, SystemGeometry, ARCSEC,
};
pub use forward::{
    apply_adjoint, apply_forward, apply_periodic_forward, apply_weighted_adjoint, AdjointVariant,
    LayerStack, WavefrontSet,
};
pub use spectral::{
    analyze, analyze_complex, in_band_indices, sample_basis, sobolev_factor, sobolev_norm,
    sobolev_scale, synthesize, synthesize_complex, SobolevDirection, SpectralField,
    TransformContext,
};
pub use system::TomoSystem;
