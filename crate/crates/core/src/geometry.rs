//! Planar and frustum geometry.
//!
//! Everything here works in double precision with meters and radians. Static
//! occluders are vertical prisms standing on the ground plane (z = 0), so a
//! line of sight is blocked only where its 2D projection crosses the
//! footprint *and* the ray is still below the prism roof there.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-9;
const ANGLE_TOLERANCE: f64 = 1e-12;
const PARALLEL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_ground(p: Vec2, z: f64) -> Self {
        Self::new(p.x, p.y, z)
    }

    pub fn ground(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    /// Maps a point given in this pose's body frame (x forward, y left) to the world.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.position + local.rotated(self.heading)
    }
}

/// Rectangle with arbitrary heading; `half_long` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub half_long: f64,
    pub half_lat: f64,
    pub heading: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, half_long: f64, half_lat: f64, heading: f64) -> Result<Self> {
        if !(half_long > 0.0 && half_lat > 0.0) || !half_long.is_finite() || !half_lat.is_finite() {
            return Err(Error::Validation(format!(
                "box half extents must be positive and finite, got {half_long} x {half_lat}"
            )));
        }
        if !center.is_finite() || !heading.is_finite() {
            return Err(Error::Validation("box pose must be finite".into()));
        }
        Ok(Self {
            center,
            half_long,
            half_lat,
            heading: normalize_angle(heading),
        })
    }

    /// Box from full length (along heading) and width.
    pub fn from_dims(center: Vec2, length: f64, width: f64, heading: f64) -> Result<Self> {
        Self::new(center, length / 2.0, width / 2.0, heading)
    }

    pub fn axes(&self) -> [Vec2; 2] {
        let u = Vec2::from_heading(self.heading);
        [u, u.perp()]
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let [u, v] = self.axes();
        let a = u * self.half_long;
        let b = v * self.half_lat;
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    pub fn edges(&self) -> [(Vec2, Vec2); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    /// Inclusive point containment.
    pub fn contains(&self, p: Vec2) -> bool {
        let [u, v] = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.half_long + 1e-12 && d.dot(v).abs() <= self.half_lat + 1e-12
    }

    fn project(&self, axis: Vec2) -> (f64, f64) {
        let corners = self.corners();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in corners {
            let p = c.dot(axis);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    pub fn rotated_about_origin(&self, angle: f64) -> Self {
        Self {
            center: self.center.rotated(angle),
            heading: normalize_angle(self.heading + angle),
            ..*self
        }
    }
}

/// Vertical prism: a footprint extruded from the ground to `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prism {
    pub footprint: OrientedBox,
    pub height: f64,
}

impl Prism {
    pub fn new(footprint: OrientedBox, height: f64) -> Result<Self> {
        if !(height > 0.0) || !height.is_finite() {
            return Err(Error::Validation(format!(
                "prism height must be positive, got {height}"
            )));
        }
        Ok(Self { footprint, height })
    }
}

/// Axis-aligned box, in meters or pixels depending on the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox2 {
    pub min: Vec2,
    pub max: Vec2,
}

impl AxisBox2 {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Validation("box corners must be finite".into()));
        }
        if max.x < min.x || max.y < min.y {
            return Err(Error::Validation(format!(
                "box max ({}, {}) is below min ({}, {})",
                max.x, max.y, min.x, min.y
            )));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Distance along a unit ray to the first point of `segment`, if the ray reaches it.
pub fn ray_segment_intersect(origin: Vec2, direction: Vec2, segment: (Vec2, Vec2)) -> Result<Option<f64>> {
    if (direction.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Contract(format!(
            "ray direction must have unit norm, got {}",
            direction.norm()
        )));
    }
    let (a, b) = segment;
    let edge = b - a;
    let len = edge.norm();
    if len == 0.0 {
        return Err(Error::Contract("segment endpoints must be distinct".into()));
    }

    let to_a = a - origin;
    let denom = direction.cross(edge);
    if denom.abs() <= PARALLEL_TOLERANCE * len {
        // Parallel: only a collinear segment can be hit.
        if to_a.cross(direction).abs() > UNIT_TOLERANCE * len.max(1.0) {
            return Ok(None);
        }
        let ta = to_a.dot(direction);
        let tb = (b - origin).dot(direction);
        let (near, far) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        return Ok(if far < 0.0 {
            None
        } else {
            Some(near.max(0.0))
        });
    }

    let t = to_a.cross(edge) / denom;
    let u = to_a.cross(direction) / denom;
    let eps = 1e-12;
    if t >= -eps && (-eps..=1.0 + eps).contains(&u) {
        Ok(Some(t.max(0.0)))
    } else {
        Ok(None)
    }
}

/// Separating-axis test; touching boundaries count as overlap.
pub fn obb_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    for axis in [a0, a1, b0, b1] {
        let (alo, ahi) = a.project(axis);
        let (blo, bhi) = b.project(axis);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let e = b - a;
    let len2 = e.dot(e);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(e) / len2).clamp(0.0, 1.0)
    };
    p.distance(a + e * t)
}

/// Smallest distance between two boxes; zero when they overlap.
pub fn obb_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if obb_overlap(a, b) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (p, other) in a
        .corners()
        .iter()
        .map(|p| (p, b))
        .chain(b.corners().iter().map(|p| (p, a)))
    {
        for (s0, s1) in other.edges() {
            best = best.min(point_segment_distance(*p, s0, s1));
        }
    }
    best
}

/// Intersection over union of two axis-aligned boxes.
///
/// Zero-area boxes give 0, except two identical boxes which give 1.
pub fn iou_axis_box(a: &AxisBox2, b: &AxisBox2) -> f64 {
    let ix = (a.max.x.min(b.max.x) - a.min.x.max(b.min.x)).max(0.0);
    let iy = (a.max.y.min(b.max.y) - a.min.y.max(b.min.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// World pose of a sensor's optical center. Pitch is positive upwards.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
}

impl SensorPose {
    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Unit vector along the optical axis.
    pub fn axis(&self) -> Vec3 {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        Vec3::new(cp * cy, cp * sy, sp)
    }

    /// Returns (forward, left, up) coordinates of a world point in the sensor frame.
    fn to_sensor_frame(self, p: Vec3) -> (f64, f64, f64) {
        let d = p - self.origin();
        let (sy, cy) = self.yaw.sin_cos();
        let f1 = d.x * cy + d.y * sy;
        let left = -d.x * sy + d.y * cy;
        let (sp, cp) = self.pitch.sin_cos();
        let forward = f1 * cp + d.z * sp;
        let up = -f1 * sp + d.z * cp;
        (forward, left, up)
    }
}

/// Angular field of view truncated at a maximum range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    pub pose: SensorPose,
    pub hfov: f64,
    pub vfov: f64,
    pub range: f64,
}

/// Range and both half-apertures are inclusive.
pub fn in_frustum(frustum: &Frustum, point: Vec3) -> bool {
    let d = point - frustum.pose.origin();
    let dist = d.norm();
    if dist == 0.0 || dist > frustum.range {
        return false;
    }
    let (forward, left, up) = frustum.pose.to_sensor_frame(point);
    let azimuth = left.atan2(forward);
    let elevation = up.atan2(forward.hypot(left));
    azimuth.abs() <= frustum.hfov / 2.0 + ANGLE_TOLERANCE
        && elevation.abs() <= frustum.vfov / 2.0 + ANGLE_TOLERANCE
}

/// Sampled vertical extent of a road user.
///
/// Sample columns are spread along the body's long axis (`heading`), rows
/// along its height, each at the center of its grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub anchor: Vec2,
    pub heading: f64,
    /// Extent along `heading`.
    pub length: f64,
    /// Extent across `heading`.
    pub width: f64,
    pub height: f64,
    pub samples: Vec<Vec3>,
}

impl Silhouette {
    pub const DEFAULT_COLUMNS: usize = 3;
    pub const DEFAULT_ROWS: usize = 3;

    pub fn new(
        anchor: Vec2,
        heading: f64,
        length: f64,
        width: f64,
        height: f64,
        columns: usize,
        rows: usize,
    ) -> Result<Self> {
        if !(length > 0.0 && width > 0.0 && height > 0.0) {
            return Err(Error::Validation(format!(
                "silhouette dimensions must be positive, got {length} x {width} x {height}"
            )));
        }
        if columns * rows < 3 {
            return Err(Error::Validation(format!(
                "silhouette needs at least 3 samples, got {columns} x {rows}"
            )));
        }
        let axis = Vec2::from_heading(heading);
        let mut samples = Vec::with_capacity(columns * rows);
        for c in 0..columns {
            let along = length * ((c as f64 + 0.5) / columns as f64 - 0.5);
            let ground = anchor + axis * along;
            for r in 0..rows {
                let z = height * (r as f64 + 0.5) / rows as f64;
                samples.push(Vec3::from_ground(ground, z));
            }
        }
        Ok(Self {
            anchor,
            heading,
            length,
            width,
            height,
            samples,
        })
    }

    pub fn with_default_grid(anchor: Vec2, heading: f64, length: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            anchor,
            heading,
            length,
            width,
            height,
            Self::DEFAULT_COLUMNS,
            Self::DEFAULT_ROWS,
        )
    }
}

/// Parameter interval along the 2D sight line where it is inside the footprint.
fn footprint_crossing(footprint: &OrientedBox, from: Vec2, to: Vec2) -> Option<(f64, f64)> {
    let delta = to - from;
    let len = delta.norm();
    if len == 0.0 {
        return footprint.contains(from).then_some((0.0, 0.0));
    }
    let dir = delta * (1.0 / len);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for edge in footprint.edges() {
        if let Ok(Some(t)) = ray_segment_intersect(from, dir, edge) {
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    if footprint.contains(from) {
        lo = 0.0;
        hi = hi.max(0.0);
    }
    if !lo.is_finite() || lo > len {
        return None;
    }
    Some((lo / len, (hi / len).min(1.0)))
}

/// True iff the straight line from `eye` to `target` passes through the prism.
pub fn sight_blocked(prism: &Prism, eye: Vec3, target: Vec3) -> bool {
    let Some((t0, t1)) = footprint_crossing(&prism.footprint, eye.ground(), target.ground()) else {
        return false;
    };
    let z_at = |t: f64| eye.z + (target.z - eye.z) * t;
    z_at(t0).min(z_at(t1)) < prism.height
}

/// Fraction of silhouette samples inside the frustum with a clear line of sight.
pub fn visible_fraction(frustum: &Frustum, target: &Silhouette, occluders: &[Prism]) -> f64 {
    if target.samples.is_empty() {
        return 0.0;
    }
    let eye = frustum.pose.origin();
    let visible = target
        .samples
        .iter()
        .filter(|&&p| in_frustum(frustum, p) && !occluders.iter().any(|o| sight_blocked(o, eye, p)))
        .count();
    visible as f64 / target.samples.len() as f64
}
