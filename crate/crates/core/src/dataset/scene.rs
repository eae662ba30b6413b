//! One JSON document per image.
//!
//! ```json
//! {
//!   "image_id": "000003",
//!   "camera": {"fx": 400.0, "fy": 400.0, "cx": 160.0, "cy": 120.0, "width": 320, "height": 240},
//!   "ground_truth": [{"instance_id": 0, "class": "box", "rotation": [9 values, row-major],
//!                     "translation": [x, y, z], "visible_fraction": 0.93}],
//!   "segmentations": [{"instance_id": 0, "class": "box", "mask_rle": [0-run, 1-run, ...]}],
//!   "estimates": {
//!     "primary": [{"instance_id": 0, "class": "box", "rotation": [...], "translation": [...],
//!                  "true_mdd": 0.004, "maskval": {...}, "ensemble_add": {...}}]
//!   }
//! }
//! ```
//!
//! Units are meters. `true_mdd`, `maskval` and `ensemble_add` are optional.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rle;
use crate::ensemble::EnsembleUncertainty;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::maskval::{EstimateUncertainty, PoseEstimate, Segmentation};
use crate::metrics::GroundTruthObject;

pub const PRIMARY_STREAM: &str = "primary";
pub const SECONDARY_STREAM: &str = "secondary";

#[derive(Clone, Debug, PartialEq)]
pub struct StreamEstimate {
    pub estimate: PoseEstimate,
    /// MDD to the generating ground truth, recorded by the generator.
    pub true_mdd: Option<f64>,
    pub maskval: Option<EstimateUncertainty>,
    pub ensemble_add: Option<EnsembleUncertainty>,
}

impl StreamEstimate {
    pub fn new(estimate: PoseEstimate) -> Self {
        Self {
            estimate,
            true_mdd: None,
            maskval: None,
            ensemble_add: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub image_id: String,
    pub camera: CameraIntrinsics,
    pub ground_truth: Vec<GroundTruthObject>,
    pub segmentations: Vec<Segmentation>,
    pub streams: BTreeMap<String, Vec<StreamEstimate>>,
}

impl SceneRecord {
    pub fn stream(&self, name: &str) -> &[StreamEstimate] {
        self.streams.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn stream_estimates(&self, name: &str) -> Vec<PoseEstimate> {
        self.stream(name).iter().map(|s| s.estimate.clone()).collect()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.ground_truth
            .iter()
            .map(|g| g.class.as_str())
            .chain(self.segmentations.iter().map(|s| s.class.as_str()))
            .chain(self.streams.values().flatten().map(|s| s.estimate.class.as_str()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_id: Option<u64>,
    class: String,
    rotation: [f64; 9],
    translation: [f64; 3],
    visible_fraction: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentationJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_id: Option<u64>,
    class: String,
    mask_rle: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_id: Option<u64>,
    class: String,
    rotation: [f64; 9],
    translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_mdd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maskval: Option<EstimateUncertainty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ensemble_add: Option<EnsembleUncertainty>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneJson {
    image_id: String,
    camera: CameraJson,
    #[serde(default)]
    ground_truth: Vec<GroundTruthJson>,
    #[serde(default)]
    segmentations: Vec<SegmentationJson>,
    #[serde(default)]
    estimates: BTreeMap<String, Vec<EstimateJson>>,
}

pub fn scene_to_json(scene: &SceneRecord) -> String {
    let k = &scene.camera;
    let doc = SceneJson {
        image_id: scene.image_id.clone(),
        camera: CameraJson {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        },
        ground_truth: scene
            .ground_truth
            .iter()
            .map(|g| GroundTruthJson {
                instance_id: g.instance_id,
                class: g.class.clone(),
                rotation: g.pose.rotation_row_major(),
                translation: g.pose.translation_array(),
                visible_fraction: g.visible_fraction,
            })
            .collect(),
        segmentations: scene
            .segmentations
            .iter()
            .map(|s| SegmentationJson {
                instance_id: s.instance_id,
                class: s.class.clone(),
                mask_rle: rle::encode(&s.mask),
            })
            .collect(),
        estimates: scene
            .streams
            .iter()
            .map(|(name, list)| {
                let list = list
                    .iter()
                    .map(|s| EstimateJson {
                        instance_id: s.estimate.instance_id,
                        class: s.estimate.class.clone(),
                        rotation: s.estimate.pose.rotation_row_major(),
                        translation: s.estimate.pose.translation_array(),
                        true_mdd: s.true_mdd,
                        maskval: s.maskval.clone(),
                        ensemble_add: s.ensemble_add.clone(),
                    })
                    .collect();
                (name.clone(), list)
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("scene serializes");
    s.push('\n');
    s
}

fn check_unique_ids(
    ids: impl Iterator<Item = Option<u64>>,
    list: &str,
    source: &str,
) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, id) in ids.enumerate() {
        if let Some(id) = id {
            if !seen.insert(id) {
                return Err(Error::Scene {
                    path: source.into(),
                    message: format!("$.{list}[{i}].instance_id: duplicate instance id {id}"),
                });
            }
        }
    }
    Ok(())
}

pub fn scene_from_json(text: &str, source: &str) -> Result<SceneRecord> {
    let scene_err = |message: String| Error::Scene {
        path: source.into(),
        message,
    };
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: SceneJson = serde_path_to_error::deserialize(de)
        .map_err(|e| scene_err(format!("$.{}: {}", e.path(), e.inner())))?;

    let c = &doc.camera;
    let camera = CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)
        .map_err(|e| scene_err(format!("$.camera: {e}")))?;

    let ground_truth = doc
        .ground_truth
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let pose = Pose::from_row_major(g.rotation, g.translation)
                .map_err(|e| scene_err(format!("$.ground_truth[{i}].rotation: {e}")))?;
            if !(0.0..=1.0).contains(&g.visible_fraction) {
                return Err(scene_err(format!(
                    "$.ground_truth[{i}].visible_fraction: {} outside [0, 1]",
                    g.visible_fraction
                )));
            }
            Ok(GroundTruthObject {
                pose,
                class: g.class,
                visible_fraction: g.visible_fraction,
                instance_id: g.instance_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let segmentations = doc
        .segmentations
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mask = rle::decode(&s.mask_rle, camera.width, camera.height)
                .map_err(|e| scene_err(format!("$.segmentations[{i}].mask_rle: {e}")))?;
            Ok(Segmentation {
                mask,
                class: s.class,
                instance_id: s.instance_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut streams = BTreeMap::new();
    for (name, list) in doc.estimates {
        let list = list
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let pose = Pose::from_row_major(e.rotation, e.translation)
                    .map_err(|err| scene_err(format!("$.estimates.{name}[{i}].rotation: {err}")))?;
                Ok(StreamEstimate {
                    estimate: PoseEstimate {
                        pose,
                        class: e.class,
                        instance_id: e.instance_id,
                    },
                    true_mdd: e.true_mdd,
                    maskval: e.maskval,
                    ensemble_add: e.ensemble_add,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_unique_ids(
            list.iter().map(|s: &StreamEstimate| s.estimate.instance_id),
            &format!("estimates.{name}"),
            source,
        )?;
        streams.insert(name, list);
    }
    check_unique_ids(ground_truth.iter().map(|g| g.instance_id), "ground_truth", source)?;
    check_unique_ids(segmentations.iter().map(|s| s.instance_id), "segmentations", source)?;

    Ok(SceneRecord {
        image_id: doc.image_id,
        camera,
        ground_truth,
        segmentations,
        streams,
    })
}

pub fn save_scene(path: impl AsRef<Path>, scene: &SceneRecord) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scene_to_json(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneRecord> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scene_from_json(&text, &path.display().to_string())
}
