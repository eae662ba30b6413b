//! Render-and-compare uncertainty.
//!
//! Each pose estimate is rendered, its silhouette is compared with the
//! instance segmentation masks by IOU, and the IOU of the associated mask
//! becomes the certainty `c`. The uncertainty is `1 - c`, or `1 - c·v` when
//! the rendered object is cut off by the image border (`v < alpha`).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use crate::renderer::{mask_from_depth, Renderer, DEFAULT_PAD_FACTOR};

/// Row-major binary image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMask(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "mask has {} pixels, expected {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    fn check_same_size(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            });
        }
        Ok(())
    }
}

/// Intersection and union pixel counts of two masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IouCounts {
    pub intersection: usize,
    pub union: usize,
}

impl IouCounts {
    pub fn ratio(&self) -> f64 {
        if self.union == 0 {
            0.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

pub fn iou_counts(a: &BinaryMask, b: &BinaryMask) -> Result<IouCounts> {
    a.check_same_size(b)?;
    let (mut intersection, mut union) = (0usize, 0usize);
    for (&p, &q) in a.data.iter().zip(&b.data) {
        intersection += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(IouCounts {
        intersection,
        union,
    })
}

/// `|a ∧ b| / |a ∨ b|`, or 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(iou_counts(a, b)?.ratio())
}

/// `rows × cols` matrix of IOUs: rows are poses, columns are masks.
#[derive(Clone, Debug, PartialEq)]
pub struct IouMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl IouMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "IOU matrix has {} entries, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!("IOU entry {v} outside [0, 1]")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("ragged IOU rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

pub fn iou_matrix(rendered: &[BinaryMask], segmentations: &[BinaryMask]) -> Result<IouMatrix> {
    let mut values = Vec::with_capacity(rendered.len() * segmentations.len());
    for r in rendered {
        for s in segmentations {
            values.push(mask_iou(r, s)?);
        }
    }
    IouMatrix::new(rendered.len(), segmentations.len(), values)
}

/// Result of pose-to-mask matching.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// Matched mask column per pose row.
    pub assignment: Vec<Option<usize>>,
    /// IOU of the matched pair, 0 for unmatched poses.
    pub certainty: Vec<f64>,
}

/// Greedy one-to-one matching: take the largest remaining IOU, retire its
/// row and column, repeat until the largest remaining IOU is below
/// `min_match_iou`. Ties go to the lower row, then the lower column.
pub fn match_greedy(iou: &IouMatrix, min_match_iou: f64) -> Matching {
    let mut entries: Vec<(usize, usize, f64)> = (0..iou.rows)
        .flat_map(|i| (0..iou.cols).map(move |k| (i, k)))
        .map(|(i, k)| (i, k, iou.get(i, k)))
        .filter(|&(_, _, v)| v >= min_match_iou)
        .collect();
    // Stable sort keeps row-major order among equal values.
    entries.sort_by(|a, b| b.2.total_cmp(&a.2));

    let mut assignment = vec![None; iou.rows];
    let mut certainty = vec![0.0; iou.rows];
    let mut col_used = vec![false; iou.cols];
    for (i, k, v) in entries {
        if assignment[i].is_none() && !col_used[k] {
            assignment[i] = Some(k);
            certainty[i] = v;
            col_used[k] = true;
        }
    }
    Matching {
        assignment,
        certainty,
    }
}

/// Certainties when pose `i` was estimated from mask `i`: the diagonal.
pub fn certainty_two_stage(iou: &IouMatrix) -> Result<Vec<f64>> {
    if iou.rows != iou.cols {
        return Err(Error::NotSquare {
            rows: iou.rows,
            cols: iou.cols,
        });
    }
    Ok((0..iou.rows).map(|i| iou.get(i, i)).collect())
}

/// `1 - c·v` if `v < alpha`, else `1 - c`.
///
/// The two branches disagree by `c·(1 - alpha)` at `v = alpha`; that jump is
/// left in place.
pub fn uncertainty(certainty: f64, visibility: f64, alpha: f64) -> f64 {
    let u = if visibility < alpha {
        1.0 - certainty * visibility
    } else {
        1.0 - certainty
    };
    u.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// Greedy IOU matching within each class.
    #[default]
    Greedy,
    /// Pose and mask share an instance id because the pose was estimated
    /// from that mask.
    TwoStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskValConfig {
    pub alpha: f64,
    pub pad_factor: usize,
    pub min_match_iou: f64,
    pub association_mode: AssociationMode,
}

impl Default for MaskValConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            pad_factor: DEFAULT_PAD_FACTOR,
            min_match_iou: 0.01,
            association_mode: AssociationMode::Greedy,
        }
    }
}

impl MaskValConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.min_match_iou) {
            return Err(Error::InvalidConfig(format!(
                "min_match_iou {} outside [0, 1]",
                self.min_match_iou
            )));
        }
        if self.pad_factor == 0 {
            return Err(Error::InvalidConfig("pad_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// A pose hypothesis for one object instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub class: String,
    pub instance_id: Option<u64>,
}

/// An instance segmentation mask with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub mask: BinaryMask,
    pub class: String,
    pub instance_id: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateUncertainty {
    pub certainty: f64,
    pub visibility: f64,
    pub uncertainty: f64,
    /// Index into the scene's segmentation list.
    pub matched_mask: Option<usize>,
    pub truncated: bool,
    pub unmatched: bool,
    /// The pose rendered to zero pixels on the padded canvas.
    pub empty_render: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UncertaintyReport {
    pub estimates: Vec<EstimateUncertainty>,
}

pub type ModelLibrary = BTreeMap<String, TriangleMesh>;

/// Quantifies every estimate of one image with a fresh renderer.
pub fn quantify_scene(
    estimates: &[PoseEstimate],
    segmentations: &[Segmentation],
    models: &ModelLibrary,
    k: &CameraIntrinsics,
    cfg: &MaskValConfig,
) -> Result<UncertaintyReport> {
    cfg.validate()?;
    let mut renderer = Renderer::new(cfg.pad_factor)?;
    quantify_scene_with(&mut renderer, estimates, segmentations, models, k, cfg)
}

/// Same as [`quantify_scene`] but reuses the caller's renderer, whose pad
/// factor must match the config.
pub fn quantify_scene_with(
    renderer: &mut Renderer,
    estimates: &[PoseEstimate],
    segmentations: &[Segmentation],
    models: &ModelLibrary,
    k: &CameraIntrinsics,
    cfg: &MaskValConfig,
) -> Result<UncertaintyReport> {
    cfg.validate()?;
    if renderer.pad_factor() != cfg.pad_factor {
        return Err(Error::InvalidConfig(format!(
            "renderer pad factor {} differs from configured {}",
            renderer.pad_factor(),
            cfg.pad_factor
        )));
    }
    let canvas = BinaryMask::zeros(k.width, k.height);
    for seg in segmentations {
        seg.mask.check_same_size(&canvas)?;
    }
    for est in estimates {
        if !models.contains_key(&est.class) {
            return Err(Error::MissingModel(est.class.clone()));
        }
    }

    let mut rendered = Vec::with_capacity(estimates.len());
    let mut report: Vec<EstimateUncertainty> = Vec::with_capacity(estimates.len());
    for est in estimates {
        let r = renderer.render_depth(&est.pose, &models[&est.class], k);
        report.push(EstimateUncertainty {
            certainty: 0.0,
            visibility: r.visibility,
            uncertainty: 1.0,
            matched_mask: None,
            truncated: r.truncated,
            unmatched: true,
            empty_render: r.canvas_pixels == 0,
        });
        rendered.push(mask_from_depth(&r.depth));
    }

    match cfg.association_mode {
        AssociationMode::Greedy => {
            let mut by_class: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
            for (i, est) in estimates.iter().enumerate() {
                if !report[i].empty_render {
                    by_class.entry(&est.class).or_default().0.push(i);
                }
            }
            for (j, seg) in segmentations.iter().enumerate() {
                by_class.entry(&seg.class).or_default().1.push(j);
            }
            for (poses, masks) in by_class.values() {
                if poses.is_empty() || masks.is_empty() {
                    continue;
                }
                let rows: Vec<BinaryMask> = poses.iter().map(|&i| rendered[i].clone()).collect();
                let cols: Vec<BinaryMask> =
                    masks.iter().map(|&j| segmentations[j].mask.clone()).collect();
                let m = match_greedy(&iou_matrix(&rows, &cols)?, cfg.min_match_iou);
                for (row, &i) in poses.iter().enumerate() {
                    if let Some(col) = m.assignment[row] {
                        report[i].matched_mask = Some(masks[col]);
                        report[i].certainty = m.certainty[row];
                    }
                }
            }
        }
        AssociationMode::TwoStage => {
            let by_id: HashMap<(&str, u64), usize> = segmentations
                .iter()
                .enumerate()
                .filter_map(|(j, s)| s.instance_id.map(|id| ((s.class.as_str(), id), j)))
                .collect();
            for (i, est) in estimates.iter().enumerate() {
                if report[i].empty_render {
                    continue;
                }
                let Some(&j) = est
                    .instance_id
                    .and_then(|id| by_id.get(&(est.class.as_str(), id)))
                else {
                    continue;
                };
                report[i].matched_mask = Some(j);
                report[i].certainty = mask_iou(&rendered[i], &segmentations[j].mask)?;
            }
        }
    }

    for entry in &mut report {
        if entry.matched_mask.is_some() {
            entry.unmatched = false;
            entry.uncertainty = uncertainty(entry.certainty, entry.visibility, cfg.alpha);
        }
    }
    Ok(UncertaintyReport { estimates: report })
}
