//! Rigid transforms, the pinhole camera and model point sets.
//!
//! Camera convention: +z forward, +x right, +y down. Pixel `(0, 0)` is the
//! top-left pixel and its center sits at continuous image coordinate
//! `(0.5, 0.5)`.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Maximum deviation of `RᵀR` from identity (Frobenius) and of `det R` from 1.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rotations deviating by less than this are projected back onto SO(3) on ingestion.
pub const REORTHONORMALIZE_LIMIT: f64 = 1e-3;

/// Rigid transform `x ↦ R·x + t` from object to camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

fn rotation_deviation(r: &Mat3) -> (f64, f64) {
    let ortho = (r.transpose() * r - Mat3::identity()).norm();
    let det = (r.determinant() - 1.0).abs();
    (ortho, det)
}

impl Pose {
    /// Strict constructor: the rotation must already be a proper rotation
    /// within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let (ortho, det) = rotation_deviation(&rotation);
        if ortho >= ROTATION_TOLERANCE || det > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(format!(
                "|RᵀR - I| = {ortho:e}, |det R - 1| = {det:e}"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Ingestion constructor for rounded matrices read from files.
    ///
    /// Rotations within tolerance are kept bit-for-bit. Rotations that are
    /// off by less than [`REORTHONORMALIZE_LIMIT`] are replaced by the
    /// nearest rotation (polar factor); anything worse is rejected.
    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        let r = Mat3::from_row_slice(&rotation);
        let t = Vec3::from(translation);
        if !r.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let (ortho, det) = rotation_deviation(&r);
        if ortho < ROTATION_TOLERANCE && det <= ROTATION_TOLERANCE {
            return Ok(Self {
                rotation: r,
                translation: t,
            });
        }
        if ortho >= REORTHONORMALIZE_LIMIT || det >= REORTHONORMALIZE_LIMIT {
            return Err(Error::InvalidRotation(format!(
                "|RᵀR - I| = {ortho:e}, |det R - 1| = {det:e} exceeds re-orthonormalization limit"
            )));
        }
        Self::new(nearest_rotation(&r), t)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        let axis = Unit::try_new(axis, 1e-12)
            .ok_or_else(|| Error::InvalidRotation("zero rotation axis".into()))?;
        let r = Rotation3::from_axis_angle(&axis, angle);
        Ok(Self {
            rotation: *r.matrix(),
            translation,
        })
    }

    /// Quaternion in `(w, x, y, z)` order; normalized before use.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vec3) -> Result<Self> {
        let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        if q.norm() < 1e-12 || !q.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation("degenerate quaternion".into()));
        }
        let uq = UnitQuaternion::from_quaternion(q);
        Ok(Self {
            rotation: *uq.to_rotation_matrix().matrix(),
            translation,
        })
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Polar factor of `m` restricted to SO(3).
fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Pinhole intrinsics. Image is `width × height` pixels.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Projection of a camera-frame point in front of the camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite principal point".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point. Points with `z <= 0` are reported as
    /// [`Error::BehindCamera`]; clipping is the caller's business.
    pub fn project(&self, p: &Vec3) -> Result<Projection> {
        if p.z <= 0.0 {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(Projection {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            z: p.z,
        })
    }

    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len();
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&idx| idx >= n))
        {
            return Err(Error::InvalidMesh(format!(
                "triangle {i} {t:?} references a vertex beyond {n}"
            )));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Axis-aligned bounds `(min, max)` over all vertices.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Radius of the smallest origin-centered sphere containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Non-empty set of finite object-frame points.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPoints(Vec<Vec3>);

impl ModelPoints {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidModelPoints("empty point set".into()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidModelPoints("non-finite coordinate".into()));
        }
        Ok(Self(points))
    }

    /// Evaluation point set for a mesh: every vertex followed by
    /// [`Self::SURFACE_SAMPLES`] area-uniform surface samples (fixed seed).
    ///
    /// The vertices make maximum-distance errors exact: the point-wise
    /// displacement norm is convex, so its maximum over a triangle is at a
    /// corner. The samples make mean-distance errors surface-weighted.
    pub fn from_mesh(mesh: &TriangleMesh) -> Result<Self> {
        let mut points = mesh.vertices().to_vec();
        points.extend(sample_model_points(mesh, Self::SURFACE_SAMPLES, 0)?.0);
        Self::new(points)
    }

    pub const SURFACE_SAMPLES: usize = 1000;

    pub fn points(&self) -> &[Vec3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        self.0.iter().sum::<Vec3>() / self.0.len() as f64
    }
}

pub fn transform_points(pose: &Pose, points: &ModelPoints) -> ModelPoints {
    ModelPoints(points.0.iter().map(|p| pose.transform_point(p)).collect())
}

/// Draws `n` points uniformly by area from the mesh surface.
pub fn sample_model_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<ModelPoints> {
    if n == 0 {
        return Err(Error::InvalidModelPoints("sample count must be >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidMesh("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let pick = rng.gen::<f64>() * total;
            let idx = cumulative
                .partition_point(|&c| c <= pick)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(idx);
            let r1 = rng.gen::<f64>().sqrt();
            let r2 = rng.gen::<f64>();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    ModelPoints::new(points)
}
