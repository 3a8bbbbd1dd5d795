//! Rigid-body transforms and yaw-only oriented boxes.
//!
//! Every frame change in the pipeline (sensor to world, world to box-canonical,
//! and back into the target sensor frame) goes through [`RigidTransform`].

use std::f64::consts::PI;

use nalgebra::{Point3, Quaternion, Translation3, UnitQuaternion, Vector3};

/// Quaternions whose norm is this close to one are stored verbatim.
const UNIT_NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("quaternion must be finite and non-zero, got {0:?}")]
    BadQuaternion([f64; 4]),
    #[error("translation must be finite, got {0:?}")]
    BadTranslation([f64; 3]),
    #[error("box size components must be finite and > 0, got {0:?}")]
    BadBoxSize([f64; 3]),
    #[error("box center must be finite, got {0:?}")]
    BadBoxCenter([f64; 3]),
    #[error("box yaw must be finite, got {0}")]
    BadYaw(f64),
    #[error("transform rotates off the z axis; yaw-only boxes cannot follow it")]
    NotYawOnly,
}

/// A proper rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a `(w, x, y, z)` quaternion and a translation.
    ///
    /// The quaternion is normalized unless it is already unit length to within
    /// `1e-12`, in which case its components are kept bit-for-bit so that
    /// serialized poses round-trip exactly.
    pub fn from_wxyz(wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self, GeometryError> {
        if wxyz.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::BadQuaternion(wxyz));
        }
        if translation.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::BadTranslation(translation));
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GeometryError::BadQuaternion(wxyz));
        }
        let rotation = if (norm - 1.0).abs() <= UNIT_NORM_SLACK {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Self {
            rotation,
            translation: Vector3::from(translation),
        })
    }

    /// Rotation about +z by `yaw` radians followed by `translation`.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
        }
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rotation = self.rotation.inverse();
        RigidTransform {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    pub fn is_identity(&self) -> bool {
        let q = self.rotation.quaternion();
        q.w == 1.0 && q.i == 0.0 && q.j == 0.0 && q.k == 0.0 && self.translation == Vector3::zeros()
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        if self.is_identity() {
            return *p;
        }
        Translation3::from(self.translation) * (self.rotation * p)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotates then translates every point. The identity leaves the input bitwise unchanged.
    pub fn apply(&self, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
        if self.is_identity() {
            return points.to_vec();
        }
        points.iter().map(|p| self.apply_point(p)).collect()
    }

    /// Returns the rotation angle about +z if the rotation has no roll or pitch.
    pub fn yaw_only(&self) -> Option<f64> {
        let q = self.rotation.quaternion();
        if q.i.abs() > UNIT_NORM_SLACK || q.j.abs() > UNIT_NORM_SLACK {
            return None;
        }
        Some(normalize_yaw(2.0 * q.k.atan2(q.w)))
    }
}

/// Maps any finite angle into `(-π, π]`. Angles already in range are returned unchanged.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let wrapped = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        PI
    } else {
        wrapped
    }
}

/// A 3D box rotated about +z only, carrying its tracking identity and class.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBox {
    center: Vector3<f64>,
    size: Vector3<f64>,
    yaw: f64,
    track_id: String,
    label: u16,
}

impl OrientedBox {
    /// `size` is `(length, width, height)` along the box's local x, y, z.
    pub fn new(
        center: [f64; 3],
        size: [f64; 3],
        yaw: f64,
        track_id: impl Into<String>,
        label: u16,
    ) -> Result<Self, GeometryError> {
        if center.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::BadBoxCenter(center));
        }
        if size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(GeometryError::BadBoxSize(size));
        }
        if !yaw.is_finite() {
            return Err(GeometryError::BadYaw(yaw));
        }
        Ok(Self {
            center: Vector3::from(center),
            size: Vector3::from(size),
            yaw: normalize_yaw(yaw),
            track_id: track_id.into(),
            label,
        })
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    pub fn size(&self) -> &Vector3<f64> {
        &self.size
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn track_id(&self) -> &str {
        &self.track_id
    }

    pub fn label(&self) -> u16 {
        self.label
    }

    /// Box-canonical frame to the frame the box is expressed in.
    pub fn pose(&self) -> RigidTransform {
        RigidTransform::from_yaw(self.yaw, self.center)
    }

    /// Expresses `p` in the box-canonical frame: translate by `-center`, rotate by `-yaw`.
    pub fn to_canonical(&self, p: &Point3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let d = p.coords - self.center;
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Closed membership test against `size / 2 + margin` on every canonical axis.
    pub fn contains(&self, p: &Point3<f64>, margin: f64) -> bool {
        let local = self.to_canonical(p);
        local.x.abs() <= 0.5 * self.size.x + margin
            && local.y.abs() <= 0.5 * self.size.y + margin
            && local.z.abs() <= 0.5 * self.size.z + margin
    }

    /// The same box after moving its frame by `t`, which must be a yaw-only transform.
    pub fn transformed(&self, t: &RigidTransform) -> Result<OrientedBox, GeometryError> {
        let dyaw = t.yaw_only().ok_or(GeometryError::NotYawOnly)?;
        let center = t.apply_point(&Point3::from(self.center));
        Ok(OrientedBox {
            center: center.coords,
            size: self.size,
            yaw: normalize_yaw(self.yaw + dyaw),
            track_id: self.track_id.clone(),
            label: self.label,
        })
    }
}

/// Membership mask of `points` in `bbox`, boundary included.
pub fn points_in_box(points: &[Point3<f64>], bbox: &OrientedBox, margin: f64) -> Vec<bool> {
    debug_assert!(margin >= 0.0);
    points.iter().map(|p| bbox.contains(p, margin)).collect()
}
