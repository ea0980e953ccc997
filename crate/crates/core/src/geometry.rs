//! Pinhole projection, back-projection, cuboids, and the 2D/3D center relation.
//!
//! Conventions (KITTI camera frame): x right, y down, z forward. A cuboid is
//! anchored at the center of its bottom face, `yaw` rotates about the camera
//! y axis, and "depth" always means the camera-frame z coordinate of that
//! anchor, not the homogeneous scale of the projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::{cst, Real};

/// 2D point or vector, in pixels unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }
}

impl<T: Real> std::ops::Add for Point2<T> {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y)
    }
}

impl<T: Real> std::ops::Sub for Point2<T> {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y)
    }
}

/// 3D point in the camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl<T: Real> std::ops::Add for Point3<T> {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl<T: Real> std::ops::Sub for Point3<T> {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

/// Object dimensions in meters: height, width, length.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dim3<T> {
    pub h: T,
    pub w: T,
    pub l: T,
}

impl<T: Real> Dim3<T> {
    pub fn new(h: T, w: T, l: T) -> Self {
        Self { h, w, l }
    }

    pub fn volume(&self) -> T {
        self.h * self.w * self.l
    }
}

/// Axis-aligned 2D box, `(x1, y1)` top-left, `(x2, y2)` bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox2<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Real> BBox2<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn from_center_size(center: Point2<T>, width: T, height: T) -> Self {
        let half = cst::<T>(0.5);
        Self::new(
            center.x - width * half,
            center.y - height * half,
            center.x + width * half,
            center.y + height * half,
        )
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn center(&self) -> Point2<T> {
        let half = cst::<T>(0.5);
        Point2::new((self.x1 + self.x2) * half, (self.y1 + self.y2) * half)
    }

    pub fn area(&self) -> T {
        (self.width().max(T::zero())) * (self.height().max(T::zero()))
    }

    /// Intersection area with `other` (0 when disjoint).
    pub fn intersection_area(&self, other: &Self) -> T {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(T::zero());
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(T::zero());
        w * h
    }

    /// Clamp the box to `[0, w-1] x [0, h-1]`.
    pub fn clip_to_image(&self, image_width: u32, image_height: u32) -> Self {
        let max_x = cst::<T>(f64::from(image_width) - 1.0);
        let max_y = cst::<T>(f64::from(image_height) - 1.0);
        Self::new(
            self.x1.max(T::zero()).min(max_x),
            self.y1.max(T::zero()).min(max_y),
            self.x2.max(T::zero()).min(max_x),
            self.y2.max(T::zero()).min(max_y),
        )
    }
}

/// Object pose in the camera frame: bottom-face center, dimensions, yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid3<T> {
    /// Bottom-face center (X, Y, Z), meters.
    pub location: Point3<T>,
    pub dims: Dim3<T>,
    /// Rotation about the camera y axis, wrapped to (-pi, pi].
    pub yaw: T,
}

impl<T: Real> Cuboid3<T> {
    pub fn new(location: Point3<T>, dims: Dim3<T>, yaw: T) -> Self {
        Self {
            location,
            dims,
            yaw: wrap_angle(yaw),
        }
    }

    /// The 8 corners in camera coordinates.
    ///
    /// Order: bottom face counter-clockwise in the x-z plane starting at
    /// (+l/2, +w/2), i.e. `(+,+), (-,+), (-,-), (+,-)`, then the top face in
    /// the same x-z order. Indices 0..4 have y = Y, indices 4..8 have y = Y-h.
    pub fn corners(&self) -> [Point3<T>; 8] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.dims.l * cst::<T>(0.5);
        let hw = self.dims.w * cst::<T>(0.5);
        let plan = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
        let mut out = [Point3::default(); 8];
        for (i, &(x, z)) in plan.iter().enumerate() {
            // R_y(yaw): x' = c*x + s*z, z' = -s*x + c*z
            let rx = c * x + s * z;
            let rz = -s * x + c * z;
            let bottom = Point3::new(
                self.location.x + rx,
                self.location.y,
                self.location.z + rz,
            );
            out[i] = bottom;
            out[i + 4] = Point3::new(bottom.x, bottom.y - self.dims.h, bottom.z);
        }
        out
    }

    /// Volumetric center `(X, Y - h/2, Z)`; equals the mean of [`corners`](Self::corners).
    pub fn center(&self) -> Point3<T> {
        Point3::new(
            self.location.x,
            self.location.y - self.dims.h * cst::<T>(0.5),
            self.location.z,
        )
    }

    /// Bird's-eye-view footprint: the 4 bottom corners as (x, z) pairs,
    /// counter-clockwise with x right and z up.
    pub fn footprint(&self) -> [Point2<T>; 4] {
        let corners = self.corners();
        let mut out = [Point2::default(); 4];
        for (slot, corner) in out.iter_mut().zip(corners.iter()) {
            *slot = Point2::new(corner.x, corner.z);
        }
        out
    }

    /// Vertical extent `[Y - h, Y]` (y points down, so the top has smaller y).
    pub fn y_interval(&self) -> (T, T) {
        (self.location.y - self.dims.h, self.location.y)
    }
}

/// 3x4 projection matrix plus image dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration<T> {
    /// Row-major projection matrix.
    pub p: [[T; 4]; 3],
    pub image_width: u32,
    pub image_height: u32,
}

const DEGENERATE_W: f64 = 1e-12;

impl<T: Real> CameraCalibration<T> {
    pub fn new(p: [[T; 4]; 3], image_width: u32, image_height: u32) -> Self {
        Self {
            p,
            image_width,
            image_height,
        }
    }

    /// Ideal pinhole matrix `[f 0 cx 0; 0 f cy 0; 0 0 1 0]`.
    pub fn pinhole(f: T, cx: T, cy: T, image_width: u32, image_height: u32) -> Self {
        let z = T::zero();
        let one = T::one();
        Self::new(
            [[f, z, cx, z], [z, f, cy, z], [z, z, one, z]],
            image_width,
            image_height,
        )
    }

    fn row_dot(&self, row: usize, p: Point3<T>) -> T {
        let r = &self.p[row];
        r[0] * p.x + r[1] * p.y + r[2] * p.z + r[3]
    }

    /// Project a camera-frame point to pixels.
    pub fn project(&self, point: Point3<T>) -> Result<Point2<T>> {
        let w = self.row_dot(2, point);
        if w.abs() <= cst::<T>(DEGENERATE_W) {
            return Err(Error::DegenerateProjection {
                w: w.to_f64().unwrap_or(0.0),
            });
        }
        Ok(Point2::new(
            self.row_dot(0, point) / w,
            self.row_dot(1, point) / w,
        ))
    }

    /// Invert the projection at a fixed camera-frame depth z.
    ///
    /// Solves the two linear equations `u*w = P_row1 . p` and
    /// `v*w = P_row2 . p` for (X, Y); the returned z equals `depth` exactly,
    /// so `project(backproject(u, v, z)) == (u, v)`.
    pub fn backproject(&self, pixel: Point2<T>, depth: T) -> Result<Point3<T>> {
        let p = &self.p;
        let a11 = p[0][0] - pixel.x * p[2][0];
        let a12 = p[0][1] - pixel.x * p[2][1];
        let a21 = p[1][0] - pixel.y * p[2][0];
        let a22 = p[1][1] - pixel.y * p[2][1];
        let b1 = pixel.x * (p[2][2] * depth + p[2][3]) - (p[0][2] * depth + p[0][3]);
        let b2 = pixel.y * (p[2][2] * depth + p[2][3]) - (p[1][2] * depth + p[1][3]);
        let det = a11 * a22 - a12 * a21;
        if det.abs() <= cst::<T>(DEGENERATE_W) {
            return Err(Error::SingularBackprojection {
                det: det.to_f64().unwrap_or(0.0),
            });
        }
        Ok(Point3::new(
            (b1 * a22 - b2 * a12) / det,
            (a11 * b2 - a21 * b1) / det,
            depth,
        ))
    }
}

/// Bounding box of the full projected cuboid, including parts outside the
/// visible image. With `clip`, the box is intersected with the image.
///
/// Errors when any corner has non-positive homogeneous scale.
pub fn amodal_bbox<T: Real>(
    calib: &CameraCalibration<T>,
    cuboid: &Cuboid3<T>,
    clip: bool,
) -> Result<BBox2<T>> {
    let mut min = Point2::new(T::infinity(), T::infinity());
    let mut max = Point2::new(T::neg_infinity(), T::neg_infinity());
    for corner in cuboid.corners() {
        let w = calib.row_dot(2, corner);
        if w <= cst::<T>(1e-9) {
            return Err(Error::CornerBehindCamera {
                w: w.to_f64().unwrap_or(0.0),
            });
        }
        let px = calib.project(corner)?;
        min.x = min.x.min(px.x);
        min.y = min.y.min(px.y);
        max.x = max.x.max(px.x);
        max.y = max.y.max(px.y);
    }
    let bbox = BBox2::new(min.x, min.y, max.x, max.y);
    Ok(if clip {
        bbox.clip_to_image(calib.image_width, calib.image_height)
    } else {
        bbox
    })
}

/// 2D-box center, projected cuboid center, and the offset between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterPair<T> {
    /// Center of the (visible) 2D bounding box.
    pub c2d: Point2<T>,
    /// Projection of the volumetric cuboid center.
    pub c3d: Point2<T>,
}

impl<T: Real> CenterPair<T> {
    pub fn from_cuboid(
        calib: &CameraCalibration<T>,
        cuboid: &Cuboid3<T>,
        bbox2d: &BBox2<T>,
    ) -> Result<Self> {
        Ok(Self {
            c2d: bbox2d.center(),
            c3d: calib.project(cuboid.center())?,
        })
    }

    /// The regression target: `c3d - c2d`, pixels.
    pub fn offset(&self) -> Point2<T> {
        self.c3d - self.c2d
    }
}

/// Recover the projected 3D center from the 2D center and a regressed offset.
pub fn offset3d_apply<T: Real>(c2d: Point2<T>, offset: Point2<T>) -> Point2<T> {
    c2d + offset
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle<T: Real>(a: T) -> T {
    if !a.is_finite() {
        return a;
    }
    let two_pi = T::PI() + T::PI();
    let mut s = (T::PI() - a) % two_pi;
    if s < T::zero() {
        s = s + two_pi;
    }
    T::PI() - s
}

/// Observation angle -> global yaw: `ry = alpha + atan2(X, Z)`, wrapped.
pub fn alpha_to_ry<T: Real>(alpha: T, x: T, z: T) -> Result<T> {
    Ok(wrap_angle(alpha + bearing(x, z)?))
}

/// Global yaw -> observation angle: `alpha = ry - atan2(X, Z)`, wrapped.
pub fn ry_to_alpha<T: Real>(ry: T, x: T, z: T) -> Result<T> {
    Ok(wrap_angle(ry - bearing(x, z)?))
}

fn bearing<T: Real>(x: T, z: T) -> Result<T> {
    if x == T::zero() && z == T::zero() {
        return Err(Error::ZeroRay);
    }
    Ok(x.atan2(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kitti_like() -> CameraCalibration<f64> {
        // P2 with the usual stereo-baseline terms in rows 1-2 and none in row 3.
        CameraCalibration::new(
            [
                [721.54, 0.0, 609.56, 44.86],
                [0.0, 721.54, 172.85, 0.22],
                [0.0, 0.0, 1.0, 0.0],
            ],
            1242,
            375,
        )
    }

    fn identity_like() -> CameraCalibration<f64> {
        CameraCalibration::pinhole(1.0, 0.0, 0.0, 1242, 375)
    }

    #[test]
    fn project_identity_like() {
        let calib = identity_like();
        let px = calib.project(Point3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!((px.x, px.y), (0.0, 0.0));
        let px = calib.project(Point3::new(2.0, 1.0, 2.0)).unwrap();
        assert_eq!((px.x, px.y), (1.0, 0.5));
    }

    #[test]
    fn project_kitti_like() {
        // Hand-evaluated homogeneous product:
        // u = (609.56*10 + 44.86) / 10, v = (172.85*10 + 0.22) / 10.
        let calib = kitti_like();
        let px = calib.project(Point3::new(0.0, 0.0, 10.0)).unwrap();
        assert!((px.x - 614.046).abs() < 1e-9, "u = {}", px.x);
        assert!((px.y - 172.872).abs() < 1e-9, "v = {}", px.y);
        // Loose anchor on the expected neighborhood.
        assert!((px.x - 614.05).abs() < 0.05 && (px.y - 172.85).abs() < 0.05);
    }

    #[test]
    fn project_rejects_zero_scale() {
        let calib = identity_like();
        let err = calib.project(Point3::new(1.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateProjection { .. }));
    }

    #[test]
    fn backproject_identity_like() {
        let calib = identity_like();
        let p = calib.backproject(Point2::new(0.0, 0.0), 5.0).unwrap();
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 5.0));
    }

    #[test]
    fn backproject_inverts_project() {
        let calib = kitti_like();
        let px = Point2::new(614.046, 172.872);
        let p = calib.backproject(px, 10.0).unwrap();
        assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9);
        assert_eq!(p.z, 10.0);
        let back = calib.project(p).unwrap();
        assert!((back - px).norm() < 1e-6);
    }

    #[test]
    fn corners_axis_aligned() {
        let cuboid = Cuboid3::<f64>::new(
            Point3::new(0.0, 0.0, 10.0),
            Dim3::new(2.0, 1.0, 4.0),
            0.0,
        );
        let corners = cuboid.corners();
        for c in &corners {
            assert!((c.x.abs() - 2.0).abs() < 1e-12);
            assert!(c.y == 0.0 || c.y == -2.0);
            assert!((c.z - 9.5).abs() < 1e-12 || (c.z - 10.5).abs() < 1e-12);
        }
        // Documented order: bottom CCW from (+l/2, +w/2).
        assert_eq!((corners[0].x, corners[0].z), (2.0, 10.5));
        assert_eq!((corners[2].x, corners[2].z), (-2.0, 9.5));
        assert_eq!(corners[4].y, -2.0);
        // Opposite bottom corners span the rectangle diagonal.
        let d = (corners[0] - corners[2]).norm();
        assert!((d - (16.0f64 + 1.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn corners_half_turn_mirrors_plan() {
        let loc = Point3::new(1.0, 2.0, 10.0);
        let dims = Dim3::new(1.5, 1.6, 3.9);
        let base = Cuboid3::new(loc, dims, 0.0).corners();
        let turned = Cuboid3::new(loc, dims, std::f64::consts::PI).corners();
        // yaw = pi mirrors each corner offset in x and z.
        for (b, t) in base.iter().zip(turned.iter()) {
            assert!(((b.x - loc.x) + (t.x - loc.x)).abs() < 1e-12);
            assert!(((b.z - loc.z) + (t.z - loc.z)).abs() < 1e-12);
            assert_eq!(b.y, t.y);
        }
    }

    #[test]
    fn center_matches_corner_mean() {
        let cuboid = Cuboid3::new(
            Point3::new(-3.0, 1.4, 22.0),
            Dim3::new(1.6, 1.7, 4.1),
            0.83,
        );
        let c = cuboid.center();
        assert_eq!(c.y, 1.4 - 0.8);
        let corners = cuboid.corners();
        let n = corners.len() as f64;
        let mean = corners
            .iter()
            .fold(Point3::new(0.0, 0.0, 0.0), |acc, p| acc + *p);
        assert!((mean.x / n - c.x).abs() < 1e-12);
        assert!((mean.y / n - c.y).abs() < 1e-12);
        assert!((mean.z / n - c.z).abs() < 1e-12);
        // Center does not depend on yaw.
        let spun = Cuboid3::new(cuboid.location, cuboid.dims, -2.1).center();
        assert_eq!(spun, c);
    }

    #[test]
    fn amodal_bbox_symmetric_on_axis() {
        let calib = CameraCalibration::<f64>::pinhole(721.54, 609.56, 172.85, 1242, 375);
        let cuboid = Cuboid3::new(
            Point3::new(0.0, 0.9, 15.0),
            Dim3::new(1.8, 1.6, 4.0),
            0.0,
        );
        let bbox = amodal_bbox(&calib, &cuboid, false).unwrap();
        let c = bbox.center();
        assert!((c.x - 609.56).abs() < 1e-6);
    }

    #[test]
    fn amodal_bbox_clip_stays_inside() {
        let calib = CameraCalibration::pinhole(721.54, 609.56, 172.85, 1242, 375);
        let cuboid = Cuboid3::new(
            Point3::new(-8.0, 1.5, 6.0),
            Dim3::new(1.8, 1.7, 4.2),
            1.2,
        );
        let bbox = amodal_bbox(&calib, &cuboid, true).unwrap();
        assert!(bbox.x1 >= 0.0 && bbox.y1 >= 0.0);
        assert!(bbox.x2 <= 1241.0 && bbox.y2 <= 374.0);
    }

    #[test]
    fn amodal_bbox_rejects_corner_behind_camera() {
        let calib = identity_like();
        // Width 4 m at z = 1 m puts the near face behind the camera.
        let cuboid = Cuboid3::new(Point3::new(0.0, 0.0, 1.0), Dim3::new(1.0, 4.0, 1.0), 0.0);
        let err = amodal_bbox(&calib, &cuboid, false).unwrap_err();
        assert!(matches!(err, Error::CornerBehindCamera { .. }));
    }

    #[test]
    fn amodal_bbox_shrinks_with_depth() {
        let calib = CameraCalibration::pinhole(721.54, 609.56, 172.85, 1242, 375);
        let dims = Dim3::new(1.6, 1.7, 4.0);
        let mut prev_area = f64::INFINITY;
        for step in 0..16 {
            let z = 5.0 + 5.0 * f64::from(step);
            // Keep the cuboid on a fixed ray through the camera.
            let cuboid = Cuboid3::new(Point3::new(0.12 * z, 0.05 * z, z), dims, 0.4);
            let bbox = amodal_bbox(&calib, &cuboid, false).unwrap();
            assert!(bbox.area() < prev_area, "area not decreasing at z = {z}");
            prev_area = bbox.area();
        }
    }

    #[test]
    fn offset_apply_is_vector_addition() {
        let c2d = Point2::new(100.0, 50.0);
        assert_eq!(offset3d_apply(c2d, Point2::new(0.0, 0.0)), c2d);
        let moved = offset3d_apply(c2d, Point2::new(3.0, -2.0));
        assert_eq!((moved.x, moved.y), (103.0, 48.0));
    }

    #[test]
    fn center_pair_consistency() {
        let calib = kitti_like();
        let cuboid = Cuboid3::new(
            Point3::new(-6.5, 1.6, 9.0),
            Dim3::new(1.5, 1.7, 4.3),
            -0.7,
        );
        let bbox = amodal_bbox(&calib, &cuboid, true).unwrap();
        let pair = CenterPair::from_cuboid(&calib, &cuboid, &bbox).unwrap();
        let recovered = offset3d_apply(pair.c2d, pair.offset());
        assert!((recovered - pair.c3d).norm() < 1e-12);
    }

    #[test]
    fn offset_grows_as_objects_approach() {
        let calib = CameraCalibration::pinhole(721.54, 609.56, 172.85, 1242, 375);
        let dims = Dim3::new(1.6, 1.7, 4.2);
        let mut prev = 0.0;
        for step in (1..=8).rev() {
            let z = 5.0 * f64::from(step);
            let cuboid = Cuboid3::new(Point3::new(-0.45 * z, 1.5, z), dims, 1.1);
            let bbox = amodal_bbox(&calib, &cuboid, false).unwrap();
            let pair = CenterPair::from_cuboid(&calib, &cuboid, &bbox).unwrap();
            let mag = pair.offset().norm();
            assert!(
                mag > prev,
                "offset magnitude {mag} did not grow at z = {z} (prev {prev})"
            );
            prev = mag;
        }
    }

    #[test]
    fn angle_wrap_convention() {
        let pi = std::f64::consts::PI;
        assert_eq!(wrap_angle(pi), pi);
        assert_eq!(wrap_angle(-pi), pi);
        assert!((wrap_angle(3.0 * pi) - pi).abs() < 1e-12);
        assert!((wrap_angle(-2.5 * pi) + 0.5 * pi).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn alpha_ry_conversions() {
        let pi = std::f64::consts::PI;
        assert_eq!(alpha_to_ry(0.0, 0.0, 10.0).unwrap(), 0.0);
        let ry = alpha_to_ry(0.5, 7.0, 7.0).unwrap();
        assert!((ry - (0.5 + pi / 4.0)).abs() < 1e-12);
        assert!(matches!(alpha_to_ry(0.1, 0.0, 0.0), Err(Error::ZeroRay)));

        for i in 0..100 {
            let alpha = -pi + 2.0 * pi * (f64::from(i) + 0.5) / 100.0;
            let (x, z) = (f64::from(i % 13) - 6.0, 4.0 + f64::from(i % 7));
            let back = ry_to_alpha(alpha_to_ry(alpha, x, z).unwrap(), x, z).unwrap();
            assert!((back - alpha).abs() < 1e-12, "alpha {alpha} -> {back}");
        }
    }

    #[test]
    fn works_in_f32() {
        let calib = CameraCalibration::<f32>::pinhole(721.5, 609.6, 172.9, 1242, 375);
        let p = Point3::new(1.5f32, 0.5, 12.0);
        let px = calib.project(p).unwrap();
        let back = calib.backproject(px, 12.0).unwrap();
        assert!((back.x - 1.5).abs() < 1e-3 && (back.y - 0.5).abs() < 1e-3);
    }
}
