use nalgebra::{Point3, Vector3};

/// Largest grid accepted anywhere; decoders refuse to allocate beyond this.
pub const MAX_VOXELS: usize = 1 << 27;

const SPAN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid bounds must be finite with max > min on every axis (min {min:?}, max {max:?})")]
    BadBounds { min: [f64; 3], max: [f64; 3] },
    #[error("voxel size must be finite and > 0 on every axis, got {0:?}")]
    BadVoxelSize([f64; 3]),
    #[error("GridSpec span on axis {axis} is {cells} voxels, not within 1e-9 of an integer")]
    NonIntegralSpan { axis: usize, cells: f64 },
    #[error("grid of {0:?} voxels exceeds the supported size")]
    TooLarge([f64; 3]),
}

/// Axis-aligned voxel grid: `[min, max)` on each axis divided into cubes of `voxel_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    min: Vector3<f64>,
    max: Vector3<f64>,
    voxel_size: Vector3<f64>,
    dims: [usize; 3],
}

impl GridSpec {
    pub fn new(min: [f64; 3], max: [f64; 3], voxel_size: [f64; 3]) -> Result<Self, GridError> {
        for k in 0..3 {
            if !(min[k].is_finite() && max[k].is_finite() && max[k] > min[k]) {
                return Err(GridError::BadBounds { min, max });
            }
            if !(voxel_size[k].is_finite() && voxel_size[k] > 0.0) {
                return Err(GridError::BadVoxelSize(voxel_size));
            }
        }
        let cells = [0, 1, 2].map(|k| (max[k] - min[k]) / voxel_size[k]);
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let rounded = cells[k].round();
            if !cells[k].is_finite() || (cells[k] - rounded).abs() > SPAN_SLACK || rounded < 1.0 {
                return Err(GridError::NonIntegralSpan {
                    axis: k,
                    cells: cells[k],
                });
            }
            if rounded > MAX_VOXELS as f64 {
                return Err(GridError::TooLarge(cells));
            }
            dims[k] = rounded as usize;
        }
        if dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none_or(|n| n > MAX_VOXELS)
        {
            return Err(GridError::TooLarge(cells));
        }
        Ok(Self {
            min: Vector3::from(min),
            max: Vector3::from(max),
            voxel_size: Vector3::from(voxel_size),
            dims,
        })
    }

    /// ±51.2 m in x and y, −5 to 3 m in z, 0.8 m voxels: `[128, 128, 10]`.
    pub fn base() -> Self {
        Self::new([-51.2, -51.2, -5.0], [51.2, 51.2, 3.0], [0.8, 0.8, 0.8])
            .expect("base grid is valid")
    }

    /// Same range with `(0.4, 0.4, 0.5)` voxels: `[256, 256, 16]`.
    pub fn large() -> Self {
        Self::new([-51.2, -51.2, -5.0], [51.2, 51.2, 3.0], [0.4, 0.4, 0.5])
            .expect("large grid is valid")
    }

    pub fn min(&self) -> [f64; 3] {
        self.min.into()
    }

    pub fn max(&self) -> [f64; 3] {
        self.max.into()
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size.into()
    }

    /// `(H, W, Z)` voxel counts along x, y, z.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Height of the center of z slice `k`.
    pub fn slice_center_z(&self, k: usize) -> f64 {
        self.min.z + (k as f64 + 0.5) * self.voxel_size.z
    }

    /// Row-major linear index, z fastest.
    pub fn linear_index(&self, [ix, iy, iz]: [usize; 3]) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    pub fn unravel(&self, linear: usize) -> [usize; 3] {
        let iz = linear % self.dims[2];
        let rest = linear / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], iz]
    }

    /// Voxel containing `p`, or `None` outside `[min, max)` on any axis.
    pub fn voxel_index(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for k in 0..3 {
            if !(p[k] >= self.min[k] && p[k] < self.max[k]) {
                return None;
            }
            let cell = ((p[k] - self.min[k]) / self.voxel_size[k]).floor() as usize;
            idx[k] = cell.min(self.dims[k] - 1);
        }
        Some(idx)
    }

    pub fn linear_voxel_index(&self, p: &Point3<f64>) -> Option<usize> {
        self.voxel_index(p).map(|i| self.linear_index(i))
    }
}

pub fn voxel_index(spec: &GridSpec, p: &Point3<f64>) -> Option<[usize; 3]> {
    spec.voxel_index(p)
}
