//! Ensemble disagreement baseline: the ADD distance between the primary
//! estimator's pose and a second estimator's pose for the same object,
//! normalized into `[0, 1]`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ModelPoints, Pose};
use crate::maskval::PoseEstimate;

/// Mean point-wise distance between the model transformed by `a` and by `b`.
pub fn add_disagreement(a: &Pose, b: &Pose, model: &ModelPoints) -> f64 {
    let sum: f64 = model
        .points()
        .iter()
        .map(|x| (a.transform_point(x) - b.transform_point(x)).norm())
        .sum();
    sum / model.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AddNormalization {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for AddNormalization {
    fn default() -> Self {
        Self {
            d_min: 0.0,
            d_max: 0.05,
        }
    }
}

impl AddNormalization {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        let n = Self { d_min, d_max };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min >= 0.0 && self.d_min < self.d_max && self.d_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ADD normalization needs 0 <= d_min < d_max, got d_min={} d_max={}",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }

    /// Uses the smallest observed disagreement as `d_min`.
    ///
    /// Calibrating on the evaluation set leaks information into the scores;
    /// prefer a held-out set.
    pub fn calibrated(disagreements: impl IntoIterator<Item = f64>, d_max: f64) -> Result<Self> {
        let d_min = disagreements
            .into_iter()
            .filter(|d| d.is_finite())
            .fold(f64::INFINITY, f64::min);
        if !d_min.is_finite() {
            return Err(Error::Empty("no disagreements to calibrate from".into()));
        }
        Self::new(d_min, d_max)
    }
}

/// `clamp((d - d_min) / (d_max - d_min), 0, 1)`.
pub fn normalize_add(d: f64, norm: &AddNormalization) -> f64 {
    ((d - norm.d_min) / (norm.d_max - norm.d_min)).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleUncertainty {
    /// Raw ADD disagreement in meters; `None` when the second estimator has
    /// no pose for the object.
    pub disagreement: Option<f64>,
    pub uncertainty: f64,
    pub secondary_index: Option<usize>,
}

/// Uncertainty per primary pose given its associated secondary pose.
/// A missing secondary pose yields `u = 1`.
pub fn ensemble_quantify(
    primary: &[PoseEstimate],
    secondary: &[Option<&PoseEstimate>],
    models: &BTreeMap<String, ModelPoints>,
    norm: &AddNormalization,
) -> Result<Vec<EnsembleUncertainty>> {
    norm.validate()?;
    if primary.len() != secondary.len() {
        return Err(Error::InvalidConfig(format!(
            "{} primary poses but {} secondary slots",
            primary.len(),
            secondary.len()
        )));
    }
    primary
        .iter()
        .zip(secondary)
        .map(|(p, s)| {
            let model = models
                .get(&p.class)
                .ok_or_else(|| Error::MissingModel(p.class.clone()))?;
            Ok(match s {
                Some(s) => {
                    let d = add_disagreement(&p.pose, &s.pose, model);
                    EnsembleUncertainty {
                        disagreement: Some(d),
                        uncertainty: normalize_add(d, norm),
                        secondary_index: None,
                    }
                }
                None => EnsembleUncertainty {
                    disagreement: None,
                    uncertainty: 1.0,
                    secondary_index: None,
                },
            })
        })
        .collect()
}

/// Pairs each primary pose with at most one secondary pose.
///
/// Poses sharing class and instance id are paired first. The rest are
/// paired greedily within each class by smallest ADD disagreement, ties to
/// the lower primary then lower secondary index.
pub fn associate_streams(
    primary: &[PoseEstimate],
    secondary: &[PoseEstimate],
    models: &BTreeMap<String, ModelPoints>,
) -> Result<Vec<Option<usize>>> {
    for e in primary.iter().chain(secondary) {
        if !models.contains_key(&e.class) {
            return Err(Error::MissingModel(e.class.clone()));
        }
    }
    let mut out = vec![None; primary.len()];
    let mut used = vec![false; secondary.len()];

    let ids: HashMap<(&str, u64), usize> = secondary
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.instance_id.map(|id| ((s.class.as_str(), id), j)))
        .collect();
    for (i, p) in primary.iter().enumerate() {
        if let Some(&j) = p.instance_id.and_then(|id| ids.get(&(p.class.as_str(), id))) {
            if !used[j] {
                out[i] = Some(j);
                used[j] = true;
            }
        }
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in primary.iter().enumerate() {
        if out[i].is_some() {
            continue;
        }
        for (j, s) in secondary.iter().enumerate() {
            if !used[j] && s.class == p.class {
                candidates.push((add_disagreement(&p.pose, &s.pose, &models[&p.class]), i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, i, j) in candidates {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    Ok(out)
}

/// Associates the two streams and quantifies every primary pose.
pub fn quantify_streams(
    primary: &[PoseEstimate],
    secondary: &[PoseEstimate],
    models: &BTreeMap<String, ModelPoints>,
    norm: &AddNormalization,
) -> Result<Vec<EnsembleUncertainty>> {
    let assoc = associate_streams(primary, secondary, models)?;
    let paired: Vec<Option<&PoseEstimate>> = assoc.iter().map(|a| a.map(|j| &secondary[j])).collect();
    let mut out = ensemble_quantify(primary, &paired, models, norm)?;
    for (o, a) in out.iter_mut().zip(assoc) {
        o.secondary_index = a;
    }
    Ok(out)
}
