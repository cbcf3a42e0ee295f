//! Tomography geometry: aperture, guide stars, layers, extension square,
//! cone coefficients, domain masks and overlay functions.
//!
//! The guide stars sit in directions `alpha_g` (radians); layer `l` at height
//! `h_l` sees the aperture copy shifted by `alpha_g * h_l` and shrunk by the
//! cone coefficient `c(l,g)` (1 for NGS, `1 - h_l / h_lgs` for LGS). All
//! layer-plane quantities live on the scaled squares `[-c_l T, c_l T)^2`
//! where `c_l` is the minimum cone coefficient over the stars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radians per arcsecond.
pub const ARCSEC: f64 = std::f64::consts::PI / 648_000.0;

// ---------------------------------------------------------------------------
// Core parameter types
// ---------------------------------------------------------------------------

/// Annular telescope aperture centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    /// Outer radius in meters.
    pub outer_radius: f64,
    /// Central obstruction radius in meters (0 for an unobstructed pupil).
    pub inner_radius: f64,
}

impl ApertureSpec {
    pub fn new(outer_radius: f64, inner_radius: f64) -> Result<Self> {
        if !(outer_radius.is_finite() && inner_radius.is_finite()) {
            return Err(Error::Config("aperture radii must be finite".into()));
        }
        if !(0.0 <= inner_radius && inner_radius < outer_radius) {
            return Err(Error::Config(format!(
                "aperture requires 0 <= inner_radius < outer_radius, got inner {inner_radius}, outer {outer_radius}"
            )));
        }
        Ok(Self {
            outer_radius,
            inner_radius,
        })
    }

    /// Annulus membership; points exactly on either boundary count as inside.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let r2 = x * x + y * y;
        r2 >= self.inner_radius * self.inner_radius && r2 <= self.outer_radius * self.outer_radius
    }
}

/// Natural or laser guide star.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StarKind {
    Ngs,
    Lgs,
}

/// A guide star given by its direction vector components in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuideStar {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub kind: StarKind,
}

impl GuideStar {
    pub fn new(alpha_x: f64, alpha_y: f64, kind: StarKind) -> Self {
        Self {
            alpha_x,
            alpha_y,
            kind,
        }
    }

    /// Euclidean norm of the direction vector.
    #[inline]
    pub fn separation(&self) -> f64 {
        self.alpha_x.hypot(self.alpha_y)
    }
}

/// One turbulent layer: height above the aperture and turbulence weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Height in meters.
    pub height: f64,
    /// Turbulence weight; the weights of a layer list sum to 1.
    pub weight: f64,
}

/// Cone coefficient `c(l,g)`: 1 for NGS, `1 - h_l / h_lgs` for LGS.
pub fn cone_factor(layer: &LayerSpec, star: &GuideStar, lgs_height: f64) -> Result<f64> {
    match star.kind {
        StarKind::Ngs => Ok(1.0),
        StarKind::Lgs => {
            if layer.height >= lgs_height {
                return Err(Error::Config(format!(
                    "layer height {} must lie below the LGS focus height {}",
                    layer.height, lgs_height
                )));
            }
            Ok(1.0 - layer.height / lgs_height)
        }
    }
}

// ---------------------------------------------------------------------------
// System geometry
// ---------------------------------------------------------------------------

/// The full tomography problem description: aperture, guide stars, layers and
/// the half-width `T` of the periodic extension square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub aperture: ApertureSpec,
    pub stars: Vec<GuideStar>,
    pub layers: Vec<LayerSpec>,
    /// Focus height of the laser guide stars in meters.
    pub lgs_height: f64,
    /// Half-width `T` of the extension square in meters.
    pub extension_half_width: f64,
}

impl SystemGeometry {
    pub fn new(
        aperture: ApertureSpec,
        stars: Vec<GuideStar>,
        layers: Vec<LayerSpec>,
        lgs_height: f64,
        extension_half_width: f64,
    ) -> Result<Self> {
        if stars.is_empty() {
            return Err(Error::Config("at least one guide star required".into()));
        }
        if layers.is_empty() {
            return Err(Error::Config("at least one layer required".into()));
        }
        let mut seen_lgs = false;
        for s in &stars {
            if !(s.alpha_x.is_finite() && s.alpha_y.is_finite()) {
                return Err(Error::Config("guide star directions must be finite".into()));
            }
            match s.kind {
                StarKind::Lgs => seen_lgs = true,
                StarKind::Ngs if seen_lgs => {
                    return Err(Error::Config(
                        "NGS entries must precede LGS entries in the star list".into(),
                    ));
                }
                StarKind::Ngs => {}
            }
        }
        let mut weight_sum = 0.0;
        for (i, l) in layers.iter().enumerate() {
            if l.weight <= 0.0 || !l.weight.is_finite() {
                return Err(Error::Config(format!(
                    "layer {i} weight must be positive, got {}",
                    l.weight
                )));
            }
            if i > 0 && layers[i - 1].height >= l.height {
                return Err(Error::Config(
                    "layer heights must be strictly ascending".into(),
                ));
            }
            if l.height >= lgs_height {
                return Err(Error::Config(format!(
                    "layer {i} height {} must lie below the LGS focus height {lgs_height}",
                    l.height
                )));
            }
            weight_sum += l.weight;
        }
        if (weight_sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "layer weights must sum to 1 (got {weight_sum})"
            )));
        }
        if !(extension_half_width > 0.0) {
            return Err(Error::Config("extension half-width must be positive".into()));
        }
        Ok(Self {
            aperture,
            stars,
            layers,
            lgs_height,
            extension_half_width,
        })
    }

    pub fn num_stars(&self) -> usize {
        self.stars.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Cone coefficient for layer `l` as seen from star `g`.
    #[inline]
    pub fn cone_factor(&self, layer: usize, star: usize) -> f64 {
        // Heights were validated against lgs_height at construction.
        cone_factor(&self.layers[layer], &self.stars[star], self.lgs_height)
            .expect("validated at construction")
    }

    /// `c_l = min_g c(l,g)`, the scale of the layer's extension square.
    pub fn min_cone_factor(&self, layer: usize) -> f64 {
        (0..self.num_stars())
            .map(|g| self.cone_factor(layer, g))
            .fold(f64::INFINITY, f64::min)
    }

    /// Half-width of the scaled square of layer `l`, `c_l * T`.
    pub fn layer_half_width(&self, layer: usize) -> f64 {
        self.min_cone_factor(layer) * self.extension_half_width
    }

    /// Sobolev weight scale `pi^2 / (c_l T)^2` of layer `l`.
    pub fn sobolev_beta(&self, layer: usize) -> f64 {
        let ct = self.layer_half_width(layer);
        std::f64::consts::PI.powi(2) / (ct * ct)
    }

    /// True when every star has the same kind, so `c(l,g) = c_l` for all `g`.
    pub fn single_kind(&self) -> bool {
        self.stars.iter().all(|s| s.kind == self.stars[0].kind)
    }

    /// Back-projection normalizer `sigma_g = sqrt(sum_l weight_l / c(l,g)^2)`.
    /// Equals 1 for every NGS since the weights sum to 1.
    pub fn backprojection_sigma(&self, star: usize) -> f64 {
        (0..self.num_layers())
            .map(|l| self.layers[l].weight / self.cone_factor(l, star).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Checks that every shifted aperture copy fits inside its scaled square.
    ///
    /// For a circular aperture the inclusion reduces to the scalar test
    /// `outer_radius + |alpha_g| h_l <= c_l T` per (layer, star) pair.
    pub fn validate_extent(&self) -> ExtentReport {
        let mut worst = f64::INFINITY;
        let mut violations = Vec::new();
        for l in 0..self.num_layers() {
            let ct = self.layer_half_width(l);
            for g in 0..self.num_stars() {
                let reach = self.aperture.outer_radius
                    + self.stars[g].separation() * self.layers[l].height;
                let margin = ct - reach;
                if margin < worst {
                    worst = margin;
                }
                if margin < 0.0 {
                    violations.push((l, g));
                }
            }
        }
        ExtentReport {
            ok: violations.is_empty(),
            worst_margin: worst,
            violations,
        }
    }

    /// Stable content hash of the geometry, used to key precomputed caches.
    pub fn content_hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_le_bytes());
        put(self.aperture.outer_radius);
        put(self.aperture.inner_radius);
        put(self.lgs_height);
        put(self.extension_half_width);
        put(self.stars.len() as f64);
        put(self.layers.len() as f64);
        for s in &self.stars {
            put(s.alpha_x);
            put(s.alpha_y);
            put(match s.kind {
                StarKind::Ngs => 0.0,
                StarKind::Lgs => 1.0,
            });
        }
        for l in &self.layers {
            put(l.height);
            put(l.weight);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

/// Result of the extension check: worst margin in meters and the violating
/// (layer, star) pairs, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtentReport {
    pub ok: bool,
    pub worst_margin: f64,
    pub violations: Vec<(usize, usize)>,
}

impl std::fmt::Display for ExtentReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.ok {
            write!(f, "ok, worst margin {:.4} m", self.worst_margin)
        } else {
            write!(
                f,
                "worst margin {:.4} m, violating (layer, star) pairs: {:?}",
                self.worst_margin, self.violations
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Grids and masks
// ---------------------------------------------------------------------------

/// Equidistant periodic grid over `[-half_width, half_width)^2` with `n`
/// samples per axis; the right/top endpoints are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "grid size must be even and at least 4, got {n}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Config(format!(
                "grid half-width must be positive, got {half_width}"
            )));
        }
        Ok(Self { n, half_width })
    }

    /// Grid spacing `2 * half_width / n`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Physical coordinate of sample `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn num_points(&self) -> usize {
        self.n * self.n
    }
}

/// Per-layer indicator grids of the shifted, scaled aperture copies and their
/// overlay (pointwise count of covering stars).
#[derive(Debug, Clone)]
pub struct LayerMasks {
    pub grids: Vec<GridSpec>,
    /// `indicators[l][g]` is the 0/1 grid of the copy of the aperture seen on
    /// layer `l` through star `g`, row-major.
    indicators: Vec<Vec<Vec<u8>>>,
    /// `overlay[l]` counts covering stars per grid point; the layer footprint
    /// is exactly the set of points with a positive count.
    overlay: Vec<Vec<u32>>,
}

impl LayerMasks {
    /// Samples each indicator at the grid points (cell centers) and sums them
    /// into the overlay. Fails if the extension condition does not hold.
    pub fn build(geometry: &SystemGeometry, grids: &[GridSpec]) -> Result<Self> {
        if grids.len() != geometry.num_layers() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layer grids, got {}",
                geometry.num_layers(),
                grids.len()
            )));
        }
        let report = geometry.validate_extent();
        if !report.ok {
            return Err(Error::Extent(report));
        }
        let mut indicators = Vec::with_capacity(geometry.num_layers());
        let mut overlay = Vec::with_capacity(geometry.num_layers());
        for (l, grid) in grids.iter().enumerate() {
            let n = grid.n;
            let mut layer_ind = Vec::with_capacity(geometry.num_stars());
            let mut ov = vec![0u32; n * n];
            for g in 0..geometry.num_stars() {
                let c = geometry.cone_factor(l, g);
                let sx = geometry.stars[g].alpha_x * geometry.layers[l].height;
                let sy = geometry.stars[g].alpha_y * geometry.layers[l].height;
                let mut ind = vec![0u8; n * n];
                for iy in 0..n {
                    let y = grid.coord(iy);
                    for ix in 0..n {
                        let x = grid.coord(ix);
                        if geometry.aperture.contains((x - sx) / c, (y - sy) / c) {
                            ind[iy * n + ix] = 1;
                            ov[iy * n + ix] += 1;
                        }
                    }
                }
                layer_ind.push(ind);
            }
            indicators.push(layer_ind);
            overlay.push(ov);
        }
        Ok(Self {
            grids: grids.to_vec(),
            indicators,
            overlay,
        })
    }

    #[inline]
    pub fn indicator(&self, layer: usize, star: usize) -> &[u8] {
        &self.indicators[layer][star]
    }

    #[inline]
    pub fn overlay(&self, layer: usize) -> &[u32] {
        &self.overlay[layer]
    }
}

/// Samples the aperture annulus on a grid (1 inside, 0 outside).
pub fn aperture_mask(aperture: &ApertureSpec, grid: &GridSpec) -> Vec<u8> {
    let n = grid.n;
    let mut mask = vec![0u8; n * n];
    for iy in 0..n {
        let y = grid.coord(iy);
        for ix in 0..n {
            if aperture.contains(grid.coord(ix), y) {
                mask[iy * n + ix] = 1;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_ring(count: usize, radius_arcsec: f64, kind: StarKind) -> Vec<GuideStar> {
        (0..count)
            .map(|i| {
                let angle = std::f64::consts::FRAC_PI_2
                    + 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                GuideStar::new(
                    radius_arcsec * ARCSEC * angle.cos(),
                    radius_arcsec * ARCSEC * angle.sin(),
                    kind,
                )
            })
            .collect()
    }

    fn three_layers() -> Vec<LayerSpec> {
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
        ]
    }

    fn ngs6(t: f64) -> SystemGeometry {
        SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            star_ring(6, 30.0, StarKind::Ngs),
            three_layers(),
            90_000.0,
            t,
        )
        .unwrap()
    }

    #[test]
    fn cone_factor_branches() {
        let star_ngs = GuideStar::new(1e-4, 0.0, StarKind::Ngs);
        let star_lgs = GuideStar::new(1e-4, 0.0, StarKind::Lgs);
        let ground = LayerSpec {
            height: 0.0,
            weight: 1.0,
        };
        let high = LayerSpec {
            height: 12700.0,
            weight: 1.0,
        };
        assert_eq!(cone_factor(&high, &star_ngs, 90_000.0).unwrap(), 1.0);
        assert_eq!(cone_factor(&ground, &star_lgs, 90_000.0).unwrap(), 1.0);
        let c = cone_factor(&high, &star_lgs, 90_000.0).unwrap();
        assert!((c - (1.0 - 12_700.0 / 90_000.0)).abs() < 1e-15);
        assert!((c - 0.858_888_888_888_888_9).abs() < 1e-12);
        assert!(cone_factor(
            &LayerSpec {
                height: 90_000.0,
                weight: 1.0
            },
            &star_lgs,
            90_000.0
        )
        .is_err());
    }

    #[test]
    fn min_cone_factor_over_stars() {
        let geo = ngs6(27.0);
        for l in 0..3 {
            assert_eq!(geo.min_cone_factor(l), 1.0);
        }

        let mut stars = star_ring(3, 30.0, StarKind::Ngs);
        stars.extend(star_ring(3, 30.0, StarKind::Lgs));
        let mixed = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            stars,
            three_layers(),
            90_000.0,
            32.0,
        )
        .unwrap();
        assert!((mixed.min_cone_factor(2) - 0.858_888_888_888_888_9).abs() < 1e-12);

        let all_lgs = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            star_ring(6, 30.0, StarKind::Lgs),
            vec![LayerSpec {
                height: 4000.0,
                weight: 1.0,
            }],
            90_000.0,
            32.0,
        )
        .unwrap();
        assert!((all_lgs.min_cone_factor(0) - (1.0 - 4000.0 / 90_000.0)).abs() < 1e-15);
    }

    #[test]
    fn extent_margins() {
        // 30 arcsec ring, 21 m aperture, top layer at 12.7 km.
        let geo = ngs6(23.0);
        let report = geo.validate_extent();
        assert!(report.ok);
        let expected = 23.0 - 21.0 - 30.0 * ARCSEC * 12_700.0;
        assert!((report.worst_margin - expected).abs() < 1e-9);
        assert!((report.worst_margin - 0.1529).abs() < 1e-3);

        let tight = ngs6(22.0);
        let report = tight.validate_extent();
        assert!(!report.ok);
        assert!(!report.violations.is_empty());

        // Single zenith star with T equal to the aperture radius: margin 0.
        let geo = SystemGeometry::new(
            ApertureSpec::new(21.0, 0.0).unwrap(),
            vec![GuideStar::new(0.0, 0.0, StarKind::Ngs)],
            vec![LayerSpec {
                height: 0.0,
                weight: 1.0,
            }],
            90_000.0,
            21.0,
        )
        .unwrap();
        let report = geo.validate_extent();
        assert!(report.ok);
        assert!(report.worst_margin.abs() < 1e-12);
    }

    #[test]
    fn extent_monotone_in_half_width() {
        let mut prev_ok = false;
        for t in [21.0, 22.0, 22.9, 23.0, 25.0, 30.0] {
            let ok = ngs6(t).validate_extent().ok;
            assert!(!prev_ok || ok, "growing T flipped ok -> not ok at T={t}");
            prev_ok = ok;
        }
    }

    #[test]
    fn sobolev_beta_values() {
        let single = SystemGeometry::new(
            ApertureSpec::new(2.0, 0.0).unwrap(),
            vec![GuideStar::new(0.0, 0.0, StarKind::Ngs)],
            vec![LayerSpec {
                height: 0.0,
                weight: 1.0,
            }],
            90_000.0,
            std::f64::consts::PI,
        )
        .unwrap();
        assert!((single.sobolev_beta(0) - 1.0).abs() < 1e-14);

        let geo = ngs6(23.0);
        let expected = std::f64::consts::PI.powi(2) / (23.0 * 23.0);
        assert!((geo.sobolev_beta(0) - expected).abs() < 1e-15);
        assert!((expected - 0.018_657).abs() < 1e-5);
    }

    #[test]
    fn backprojection_sigma_is_one_for_ngs() {
        let geo = ngs6(27.0);
        for g in 0..6 {
            assert!((geo.backprojection_sigma(g) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn star_ordering_enforced() {
        let mut stars = star_ring(2, 30.0, StarKind::Lgs);
        stars.extend(star_ring(2, 30.0, StarKind::Ngs));
        let err = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            stars,
            three_layers(),
            90_000.0,
            32.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn weight_sum_enforced() {
        let mut layers = three_layers();
        layers[0].weight = 0.8;
        let err = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            star_ring(6, 30.0, StarKind::Ngs),
            layers,
            90_000.0,
            27.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn masks_match_membership_count() {
        let geo = ngs6(27.0);
        let grids: Vec<GridSpec> = (0..3)
            .map(|l| GridSpec::new(64, geo.layer_half_width(l)).unwrap())
            .collect();
        let masks = LayerMasks::build(&geo, &grids).unwrap();
        // Brute-force oracle: count stars whose shifted-scaled aperture
        // contains each grid point.
        for l in 0..3 {
            let grid = &grids[l];
            for iy in 0..grid.n {
                for ix in 0..grid.n {
                    let (x, y) = (grid.coord(ix), grid.coord(iy));
                    let mut count = 0u32;
                    for g in 0..6 {
                        let c = geo.cone_factor(l, g);
                        let sx = geo.stars[g].alpha_x * geo.layers[l].height;
                        let sy = geo.stars[g].alpha_y * geo.layers[l].height;
                        if geo.aperture.contains((x - sx) / c, (y - sy) / c) {
                            count += 1;
                        }
                    }
                    assert_eq!(masks.overlay(l)[iy * grid.n + ix], count);
                }
            }
        }
    }

    #[test]
    fn ground_layer_overlay_is_star_count_times_aperture() {
        let geo = ngs6(27.0);
        let grids: Vec<GridSpec> = (0..3)
            .map(|l| GridSpec::new(32, geo.layer_half_width(l)).unwrap())
            .collect();
        let masks = LayerMasks::build(&geo, &grids).unwrap();
        let ap = aperture_mask(&geo.aperture, &grids[0]);
        for (o, a) in masks.overlay(0).iter().zip(&ap) {
            assert_eq!(*o, 6 * *a as u32);
        }
    }

    #[test]
    fn top_layer_overlay_range() {
        let geo = ngs6(27.0);
        let grids: Vec<GridSpec> = (0..3)
            .map(|l| GridSpec::new(128, geo.layer_half_width(l)).unwrap())
            .collect();
        let masks = LayerMasks::build(&geo, &grids).unwrap();
        let ov = masks.overlay(2);
        let max = ov.iter().copied().max().unwrap();
        let min_nonzero = ov.iter().copied().filter(|&v| v > 0).min().unwrap();
        assert_eq!(max, 6, "central overlap should see all six stars");
        assert_eq!(min_nonzero, 1, "petal edges are seen by a single star");
    }

    #[test]
    fn masks_rotate_with_a_four_star_asterism() {
        let geo = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            star_ring(4, 30.0, StarKind::Ngs),
            three_layers(),
            90_000.0,
            27.0,
        )
        .unwrap();
        let grids: Vec<GridSpec> = (0..3)
            .map(|l| GridSpec::new(64, geo.layer_half_width(l)).unwrap())
            .collect();
        let masks = LayerMasks::build(&geo, &grids).unwrap();

        // Rotating the star ring by 90 degrees permutes the stars, so the
        // overlay is invariant; on the grid the quarter turn is the exact
        // index map (ix, iy) -> (n - iy mod n, ix).
        let rotated_stars: Vec<GuideStar> = geo
            .stars
            .iter()
            .map(|s| GuideStar::new(-s.alpha_y, s.alpha_x, s.kind))
            .collect();
        let rot_geo = SystemGeometry::new(
            geo.aperture,
            rotated_stars,
            geo.layers.clone(),
            geo.lgs_height,
            geo.extension_half_width,
        )
        .unwrap();
        let rot_masks = LayerMasks::build(&rot_geo, &grids).unwrap();
        for l in 0..3 {
            let n = grids[l].n;
            let a = masks.overlay(l);
            let b = rot_masks.overlay(l);
            for iy in 0..n {
                for ix in 0..n {
                    // point (x, y) in `a` appears at (-y, x) in `b`
                    let jx = (n - iy) % n;
                    let jy = ix;
                    assert_eq!(a[iy * n + ix], b[jy * n + jx], "layer {l} ({ix},{iy})");
                }
            }
        }
    }

    #[test]
    fn single_zenith_star_mask_is_aperture() {
        let geo = SystemGeometry::new(
            ApertureSpec::new(21.0, 5.88).unwrap(),
            vec![GuideStar::new(0.0, 0.0, StarKind::Ngs)],
            vec![LayerSpec {
                height: 0.0,
                weight: 1.0,
            }],
            90_000.0,
            27.0,
        )
        .unwrap();
        let grid = GridSpec::new(32, 27.0).unwrap();
        let masks = LayerMasks::build(&geo, &[grid]).unwrap();
        let ap = aperture_mask(&geo.aperture, &grid);
        assert_eq!(masks.indicator(0, 0), &ap[..]);
        let ov: Vec<u8> = masks.overlay(0).iter().map(|&v| v as u8).collect();
        assert_eq!(ov, ap);
    }
}
