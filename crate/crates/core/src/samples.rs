//! Sample containers shared by the engine, the metrics and the harness.

use nalgebra::{DMatrix, DVector};

use crate::error::{MllError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    Primal,
    Dual,
}

/// Where a sample set came from, for report echoing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub h: f64,
    pub iterations: usize,
    pub chains: usize,
}

/// An `n x d` table of points, all in the same (primal or dual) space.
#[derive(Debug, Clone)]
pub struct SampleSet {
    data: DMatrix<f64>,
    space: SpaceTag,
    provenance: Option<Provenance>,
}

impl SampleSet {
    pub fn new(data: DMatrix<f64>, space: SpaceTag) -> Self {
        SampleSet { data, space, provenance: None }
    }

    pub fn with_provenance(data: DMatrix<f64>, space: SpaceTag, provenance: Provenance) -> Self {
        SampleSet { data, space, provenance: Some(provenance) }
    }

    pub fn from_points(points: &[DVector<f64>], space: SpaceTag) -> Result<Self> {
        if points.is_empty() {
            return Err(MllError::SizeMismatch("empty sample set".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(MllError::SizeMismatch("points have mixed dimensions".into()));
        }
        let mut data = DMatrix::zeros(points.len(), d);
        for (i, p) in points.iter().enumerate() {
            for j in 0..d {
                data[(i, j)] = p[j];
            }
        }
        Ok(SampleSet::new(data, space))
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn space(&self) -> SpaceTag {
        self.space
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flatten a one-dimensional sample set into a plain vector.
    pub fn as_1d(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(MllError::SizeMismatch(format!(
                "expected 1-d samples, got dimension {}",
                self.dim()
            )));
        }
        Ok(self.data.column(0).iter().copied().collect())
    }
}
