//! Real and complex sampled fields on periodic square grids.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::GridSpec;

/// Which plane a field lives on: the extension square of the aperture or the
/// scaled square of one atmospheric layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Aperture,
    Layer(usize),
}

impl DomainTag {
    /// Layer index if this is a layer-plane field.
    pub fn layer(&self) -> Option<usize> {
        match self {
            DomainTag::Aperture => None,
            DomainTag::Layer(l) => Some(*l),
        }
    }
}

/// An `n x n` array of samples over `[-R, R)^2`, row-major with index
/// `iy * n + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    pub grid: GridSpec,
    pub domain: DomainTag,
    pub values: Vec<T>,
}

/// Real-valued field (turbulence screens, wavefronts, reconstructions).
pub type Field2D = Grid2<f64>;

/// Complex-valued field (frame and dual-frame functions, test fixtures).
pub type ComplexField2D = Grid2<Complex64>;

impl<T: Copy + Default> Grid2<T> {
    pub fn zeros(grid: GridSpec, domain: DomainTag) -> Self {
        Self {
            grid,
            domain,
            values: vec![T::default(); grid.num_points()],
        }
    }

    /// Builds a field by evaluating `f(x, y)` at every grid point.
    pub fn from_fn(grid: GridSpec, domain: DomainTag, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(n * n);
        for iy in 0..n {
            let y = grid.coord(iy);
            for ix in 0..n {
                values.push(f(grid.coord(ix), y));
            }
        }
        Self {
            grid,
            domain,
            values,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.grid.n + ix]
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.domain != other.domain {
            return Err(Error::ShapeMismatch(format!(
                "fields differ: {:?}/{:?} vs {:?}/{:?}",
                self.grid, self.domain, other.grid, other.domain
            )));
        }
        Ok(())
    }
}

impl Field2D {
    /// `self + scale * other`, shape-checked.
    pub fn add_scaled(&mut self, other: &Field2D, scale: f64) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Euclidean norm of the raw sample vector (no quadrature weights).
    pub fn sample_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Copies values inside the mask, zero outside.
    pub fn masked(&self, mask: &[u8]) -> Field2D {
        assert_eq!(mask.len(), self.values.len(), "mask length mismatch");
        let values = self
            .values
            .iter()
            .zip(mask)
            .map(|(v, m)| if *m != 0 { *v } else { 0.0 })
            .collect();
        Field2D {
            grid: self.grid,
            domain: self.domain,
            values,
        }
    }
}

/// Zero extension from the aperture to the full square: values are kept on
/// mask points and set to 0 elsewhere.
pub fn zero_extend(field: &Field2D, mask: &[u8]) -> Field2D {
    field.masked(mask)
}
