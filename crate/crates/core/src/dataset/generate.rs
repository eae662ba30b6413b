//! Synthetic desk scenes: objects placed at random in front of the camera,
//! visible-surface masks from a shared z-buffer, and pose estimates made by
//! perturbing the ground truth.
//!
//! Image `i` draws all of its randomness from a ChaCha8 stream seeded with
//! [`image_seed`]`(seed, i)`, so any single image can be regenerated alone.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{SceneRecord, StreamEstimate, PRIMARY_STREAM, SECONDARY_STREAM};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ModelPoints, Pose, TriangleMesh, Vec3};
use crate::maskval::{BinaryMask, PoseEstimate, Segmentation};
use crate::metrics::{mdd, GroundTruthObject};
use crate::renderer::{render_visible_surfaces, Renderer};

/// Noise applied to one object's estimate and segmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Per-axis standard deviation, meters.
    pub translation_sigma: f64,
    /// Standard deviation of the rotation angle, degrees.
    pub rotation_sigma_deg: f64,
    pub outlier_probability: f64,
    /// Length of the extra offset added to outliers, meters.
    pub outlier_translation: f64,
    /// Largest erosion (negative) or dilation (positive) radius, pixels.
    pub mask_radius: usize,
    pub mask_dropout: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        Self {
            translation_sigma: 0.0,
            rotation_sigma_deg: 0.0,
            outlier_probability: 0.0,
            outlier_translation: 0.0,
            mask_radius: 0,
            mask_dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = [
            ("translation_sigma", self.translation_sigma),
            ("rotation_sigma_deg", self.rotation_sigma_deg),
            ("outlier_translation", self.outlier_translation),
        ];
        for (name, v) in finite_nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, p) in [
            ("outlier_probability", self.outlier_probability),
            ("mask_dropout", self.mask_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Same spec with pose noise multiplied by `factor`. Outlier
    /// probability and mask noise are unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            translation_sigma: self.translation_sigma * factor,
            rotation_sigma_deg: self.rotation_sigma_deg * factor,
            outlier_translation: self.outlier_translation * factor,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub camera: CameraIntrinsics,
    pub n_images: usize,
    /// Inclusive range of objects per image.
    pub objects_per_image: (usize, usize),
    /// Each object draws one of these uniformly.
    pub perturbations: Vec<PerturbationSpec>,
    /// Pose-noise factor of the secondary stream relative to the primary.
    /// Zero disables the secondary stream.
    pub secondary_scale: f64,
    /// Range of object-center depths, meters.
    pub depth_range: (f64, f64),
    /// Placement retries per image before giving up.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let level = |t: f64, r: f64| PerturbationSpec {
            translation_sigma: t,
            rotation_sigma_deg: r,
            outlier_probability: 0.05,
            outlier_translation: 0.05,
            mask_radius: 1,
            mask_dropout: 0.02,
        };
        Self {
            camera: CameraIntrinsics {
                fx: 600.0,
                fy: 600.0,
                cx: 320.0,
                cy: 240.0,
                width: 640,
                height: 480,
            },
            n_images: 200,
            objects_per_image: (1, 4),
            perturbations: vec![level(0.002, 1.0), level(0.005, 2.5), level(0.010, 5.0)],
            secondary_scale: 2.0,
            depth_range: (0.45, 0.75),
            max_attempts: 1000,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.n_images == 0 {
            return Err(Error::InvalidConfig("n_images must be >= 1".into()));
        }
        let (lo, hi) = self.objects_per_image;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "objects_per_image ({lo}, {hi}) must satisfy 1 <= min <= max"
            )));
        }
        if self.perturbations.is_empty() {
            return Err(Error::InvalidConfig("at least one perturbation spec is needed".into()));
        }
        for p in &self.perturbations {
            p.validate()?;
        }
        if !(self.secondary_scale.is_finite() && self.secondary_scale >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "secondary_scale must be >= 0, got {}",
                self.secondary_scale
            )));
        }
        let (zmin, zmax) = self.depth_range;
        if !(zmin > 0.0 && zmin <= zmax && zmax.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "depth_range ({zmin}, {zmax}) must satisfy 0 < min <= max"
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of image `index`: `splitmix64(seed ^ splitmix64(index))`.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_rotation_pose(rng: &mut ChaCha8Rng, t: Vec3) -> Pose {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if q.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            return Pose::from_quaternion(q, t).expect("normalized quaternion");
        }
    }
}

/// Random rotation about a uniform axis by `|N(0, σ)|`, applied in the
/// camera frame, plus per-axis Gaussian translation and the optional
/// outlier offset.
fn perturb(gt: &Pose, spec: &PerturbationSpec, rng: &mut ChaCha8Rng) -> Pose {
    let axis = random_unit(rng);
    let z: f64 = rng.sample(StandardNormal);
    let angle = (z * spec.rotation_sigma_deg).abs().to_radians();
    let mut dt = Vec3::new(
        rng.sample::<f64, _>(StandardNormal) * spec.translation_sigma,
        rng.sample::<f64, _>(StandardNormal) * spec.translation_sigma,
        rng.sample::<f64, _>(StandardNormal) * spec.translation_sigma,
    );
    let outlier_dir = random_unit(rng);
    if rng.gen_bool(spec.outlier_probability) {
        dt += outlier_dir * spec.outlier_translation;
    }
    let delta = Pose::from_axis_angle(axis, angle, Vec3::zeros()).expect("unit axis");
    let rotation = delta.rotation() * gt.rotation();
    Pose::new(rotation, gt.translation() + dt).expect("product of rotations")
}

/// Square-element max (dilate) or min (erode) filter over the in-image part
/// of each `(2r+1)²` window.
fn morph(mask: &BinaryMask, r: usize, dilate: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (c, n) = if horizontal { (x, w) } else { (y, h) };
                let lo = c.saturating_sub(r);
                let hi = (c + r).min(n - 1);
                let at = |k: usize| if horizontal { src[y * w + k] } else { src[k * w + x] };
                out[y * w + x] = if dilate {
                    (lo..=hi).any(at)
                } else {
                    (lo..=hi).all(at)
                };
            }
        }
        out
    };
    let rows = pass(mask.data(), true);
    let data = pass(&rows, false);
    BinaryMask::new(w, h, data).expect("same size")
}

/// Random erosion or dilation with radius in `-r..=r`, then each foreground
/// pixel is dropped with probability `dropout`.
pub fn degrade_mask(mask: &BinaryMask, spec: &PerturbationSpec, rng: &mut ChaCha8Rng) -> BinaryMask {
    let r = spec.mask_radius as i64;
    let k = if r > 0 { rng.gen_range(-r..=r) } else { 0 };
    let mut out = match k {
        0 => mask.clone(),
        k if k > 0 => morph(mask, k as usize, true),
        k => morph(mask, (-k) as usize, false),
    };
    if spec.mask_dropout > 0.0 {
        for y in 0..out.height() {
            for x in 0..out.width() {
                if out.get(x, y) && rng.gen_bool(spec.mask_dropout) {
                    out.set(x, y, false);
                }
            }
        }
    }
    out
}

struct Placed {
    class: String,
    pose: Pose,
    radius: f64,
}

fn place_objects(
    classes: &[&String],
    models: &BTreeMap<String, TriangleMesh>,
    cfg: &BenchmarkConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Placed>> {
    let k = &cfg.camera;
    let (zmin, zmax) = cfg.depth_range;
    let mut placed: Vec<Placed> = Vec::with_capacity(n);
    let mut attempts = 0;
    while placed.len() < n {
        attempts += 1;
        if attempts > cfg.max_attempts {
            return Err(Error::Placement {
                requested: n,
                attempts: cfg.max_attempts,
            });
        }
        let class = (*classes.choose(rng).expect("non-empty")).clone();
        let radius = models[&class].bounding_radius();
        let z = if zmax > zmin { rng.gen_range(zmin..zmax) } else { zmin };
        // Center drawn so that at most about half the object leaves the image.
        let margin_u = 0.5 * k.fx * radius / z;
        let margin_v = 0.5 * k.fy * radius / z;
        let span = |n: usize, m: f64, rng: &mut ChaCha8Rng| {
            let (lo, hi) = (m, n as f64 - m);
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                n as f64 / 2.0
            }
        };
        let u = span(k.width, margin_u, rng);
        let v = span(k.height, margin_v, rng);
        let center = k.back_project(u, v, z);
        let pose = random_rotation_pose(rng, center);
        if z - radius <= 0.0 {
            continue;
        }
        let clear = placed
            .iter()
            .all(|p| (p.pose.translation() - center).norm() > p.radius + radius);
        if clear {
            placed.push(Placed { class, pose, radius });
        }
    }
    Ok(placed)
}

fn generate_image(
    index: usize,
    models: &BTreeMap<String, TriangleMesh>,
    points: &BTreeMap<String, ModelPoints>,
    cfg: &BenchmarkConfig,
) -> Result<SceneRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, index));
    let classes: Vec<&String> = models.keys().collect();
    let (lo, hi) = cfg.objects_per_image;
    let n = rng.gen_range(lo..=hi);
    let placed = place_objects(&classes, models, cfg, n, &mut rng)?;

    let mut renderer = Renderer::default();
    let scene: Vec<(Pose, &TriangleMesh)> =
        placed.iter().map(|p| (p.pose, &models[&p.class])).collect();
    let surfaces = render_visible_surfaces(&mut renderer, &scene, &cfg.camera);

    let mut ground_truth = Vec::with_capacity(n);
    let mut segmentations = Vec::new();
    let mut primary = Vec::new();
    let mut secondary = Vec::new();
    for (i, (obj, surf)) in placed.iter().zip(&surfaces).enumerate() {
        let id = i as u64;
        ground_truth.push(GroundTruthObject {
            pose: obj.pose,
            class: obj.class.clone(),
            visible_fraction: surf.visible_fraction.min(1.0),
            instance_id: Some(id),
        });
        let spec = cfg
            .perturbations
            .choose(&mut rng)
            .expect("validated non-empty");
        if surf.mask.count_ones() == 0 {
            continue;
        }
        segmentations.push(Segmentation {
            mask: degrade_mask(&surf.mask, spec, &mut rng),
            class: obj.class.clone(),
            instance_id: Some(id),
        });
        let model = &points[&obj.class];
        let p = perturb(&obj.pose, spec, &mut rng);
        primary.push(StreamEstimate {
            true_mdd: Some(mdd(&p, &obj.pose, model)),
            ..StreamEstimate::new(PoseEstimate {
                pose: p,
                class: obj.class.clone(),
                instance_id: Some(id),
            })
        });
        if cfg.secondary_scale > 0.0 {
            let s = perturb(&obj.pose, &spec.scaled(cfg.secondary_scale), &mut rng);
            secondary.push(StreamEstimate {
                true_mdd: Some(mdd(&s, &obj.pose, model)),
                ..StreamEstimate::new(PoseEstimate {
                    pose: s,
                    class: obj.class.clone(),
                    instance_id: Some(id),
                })
            });
        }
    }

    let mut streams = BTreeMap::from([(PRIMARY_STREAM.to_string(), primary)]);
    if cfg.secondary_scale > 0.0 {
        streams.insert(SECONDARY_STREAM.to_string(), secondary);
    }
    Ok(SceneRecord {
        image_id: format!("{index:06}"),
        camera: cfg.camera,
        ground_truth,
        segmentations,
        streams,
    })
}

/// Generates `cfg.n_images` scenes. Images are produced in parallel and
/// returned in index order.
pub fn generate_benchmark(
    models: &BTreeMap<String, TriangleMesh>,
    cfg: &BenchmarkConfig,
) -> Result<Vec<SceneRecord>> {
    cfg.validate()?;
    if models.is_empty() {
        return Err(Error::Empty("no object models".into()));
    }
    let points = models
        .iter()
        .map(|(c, m)| Ok((c.clone(), ModelPoints::from_mesh(m)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    (0..cfg.n_images)
        .into_par_iter()
        .map(|i| generate_image(i, models, &points, cfg))
        .collect()
}
