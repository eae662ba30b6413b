//! Evaluation of uncertainty-filtered pose sets.
//!
//! An estimate is a true positive when its maximum model-point distance
//! (MDD) to the associated ground truth is at most `e_t`. Filtering keeps
//! estimates with `u <= u_T`. Per-image precision, recall and recall
//! retention (ARU, the share of unfiltered true positives that survive the
//! filter) are averaged over images.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ModelPoints, Pose};

pub const DEFAULT_THETA_V: f64 = 0.85;
pub const DEFAULT_AP_TARGET: f64 = 0.99;
pub const DEFAULT_ET_MAX: f64 = 0.03;
pub const DEFAULT_ET_STEPS: usize = 61;

/// Maximum distance over model points between the two transformed models.
pub fn mdd(estimate: &Pose, truth: &Pose, model: &ModelPoints) -> f64 {
    model
        .points()
        .iter()
        .map(|x| (estimate.transform_point(x) - truth.transform_point(x)).norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthObject {
    pub pose: Pose,
    pub class: String,
    pub visible_fraction: f64,
    pub instance_id: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredEstimate {
    pub pose: Pose,
    pub class: String,
    pub uncertainty: f64,
    pub instance_id: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCounts {
    pub tp_u: usize,
    pub fp_u: usize,
    pub fn_u: usize,
    /// True positives of the unfiltered set.
    pub tp_all: usize,
    pub n_gt: usize,
}

/// One image prepared for repeated classification: the estimate-to-truth
/// association and each associated estimate's MDD are computed once.
///
/// Association happens on the unfiltered estimate set, so filtering only
/// ever removes estimates from fixed pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalImage {
    uncertainty: Vec<f64>,
    /// `(gt index, mdd)` of the associated truth, per estimate.
    matched: Vec<Option<(usize, f64)>>,
    gt_counts_for_fn: Vec<bool>,
}

impl EvalImage {
    pub fn new(
        estimates: &[ScoredEstimate],
        gts: &[GroundTruthObject],
        models: &BTreeMap<String, ModelPoints>,
        theta_v: f64,
    ) -> Result<Self> {
        for e in estimates {
            if !(0.0..=1.0).contains(&e.uncertainty) {
                return Err(Error::InvalidConfig(format!(
                    "uncertainty {} outside [0, 1]",
                    e.uncertainty
                )));
            }
        }
        let matched = associate(estimates, gts, models)?;
        Ok(Self {
            uncertainty: estimates.iter().map(|e| e.uncertainty).collect(),
            matched,
            gt_counts_for_fn: gts.iter().map(|g| g.visible_fraction >= theta_v).collect(),
        })
    }

    pub fn n_estimates(&self) -> usize {
        self.uncertainty.len()
    }

    pub fn n_gt(&self) -> usize {
        self.gt_counts_for_fn.len()
    }

    pub fn uncertainties(&self) -> &[f64] {
        &self.uncertainty
    }

    /// MDD of each estimate to its associated truth.
    pub fn errors(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.matched.iter().map(|m| m.map(|(_, e)| e))
    }

    /// Counts with the filter `u <= u_t`.
    pub fn counts(&self, e_t: f64, u_t: f64) -> ImageCounts {
        let mut covered = vec![false; self.n_gt()];
        let (mut tp_u, mut fp_u, mut tp_all) = (0, 0, 0);
        for (u, m) in self.uncertainty.iter().zip(&self.matched) {
            let tp = matches!(m, Some((_, err)) if *err <= e_t);
            tp_all += tp as usize;
            if *u <= u_t {
                if tp {
                    tp_u += 1;
                    covered[m.unwrap().0] = true;
                } else {
                    fp_u += 1;
                }
            }
        }
        let fn_u = self
            .gt_counts_for_fn
            .iter()
            .zip(&covered)
            .filter(|(&counts, &hit)| counts && !hit)
            .count();
        ImageCounts {
            tp_u,
            fp_u,
            fn_u,
            tp_all,
            n_gt: self.n_gt(),
        }
    }

    /// `(uncertainty, mdd)` for every associated estimate.
    pub fn spearman_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.uncertainty
            .iter()
            .zip(&self.matched)
            .filter_map(|(u, m)| m.map(|(_, e)| (*u, e)))
    }
}

/// Same-class association: shared instance ids first, then greedy smallest
/// MDD, one-to-one. Unassociated estimates get `None`.
fn associate(
    estimates: &[ScoredEstimate],
    gts: &[GroundTruthObject],
    models: &BTreeMap<String, ModelPoints>,
) -> Result<Vec<Option<(usize, f64)>>> {
    let model_of = |class: &str| models.get(class).ok_or_else(|| Error::MissingModel(class.into()));
    let mut out = vec![None; estimates.len()];
    let mut gt_used = vec![false; gts.len()];

    let ids: HashMap<(&str, u64), usize> = gts
        .iter()
        .enumerate()
        .filter_map(|(j, g)| g.instance_id.map(|id| ((g.class.as_str(), id), j)))
        .collect();
    for (i, e) in estimates.iter().enumerate() {
        if let Some(&j) = e.instance_id.and_then(|id| ids.get(&(e.class.as_str(), id))) {
            if !gt_used[j] {
                gt_used[j] = true;
                out[i] = Some((j, mdd(&e.pose, &gts[j].pose, model_of(&e.class)?)));
            }
        }
    }

    let mut candidates = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        if out[i].is_some() {
            continue;
        }
        for (j, g) in gts.iter().enumerate() {
            if !gt_used[j] && g.class == e.class {
                candidates.push((mdd(&e.pose, &g.pose, model_of(&e.class)?), i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (err, i, j) in candidates {
        if out[i].is_none() && !gt_used[j] {
            out[i] = Some((j, err));
            gt_used[j] = true;
        }
    }
    Ok(out)
}

/// Per-image TP/FP/FN for a single error and uncertainty threshold.
pub fn classify_image(
    estimates: &[ScoredEstimate],
    gts: &[GroundTruthObject],
    models: &BTreeMap<String, ModelPoints>,
    e_t: f64,
    theta_v: f64,
    u_t: f64,
) -> Result<ImageCounts> {
    Ok(EvalImage::new(estimates, gts, models, theta_v)?.counts(e_t, u_t))
}

/// Dataset-level scores. `None` means no image contributed a defined term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub ap: Option<f64>,
    pub ar: Option<f64>,
    pub aru: Option<f64>,
}

fn mean(terms: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = terms.fold((0.0, 0usize), |(s, n), t| (s + t, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages per-image ratios. Undefined per-image terms are skipped, except
/// that an image with no filtered estimates and no ground truth counts as
/// perfect precision.
pub fn dataset_scores(counts: &[ImageCounts]) -> Scores {
    let ap = mean(counts.iter().filter_map(|c| {
        let n = c.tp_u + c.fp_u;
        if n > 0 {
            Some(c.tp_u as f64 / n as f64)
        } else if c.n_gt == 0 {
            Some(1.0)
        } else {
            None
        }
    }));
    let ar = mean(counts.iter().filter_map(|c| {
        let n = c.tp_u + c.fn_u;
        (n > 0).then(|| c.tp_u as f64 / n as f64)
    }));
    let aru = mean(
        counts
            .iter()
            .filter(|c| c.tp_all > 0)
            .map(|c| c.tp_u as f64 / c.tp_all as f64),
    );
    Scores { ap, ar, aru }
}

pub fn scores_at(images: &[EvalImage], e_t: f64, u_t: f64) -> Scores {
    let counts: Vec<ImageCounts> = images.iter().map(|im| im.counts(e_t, u_t)).collect();
    dataset_scores(&counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Feasible(f64),
    Infeasible,
}

impl Threshold {
    pub fn value(&self) -> Option<f64> {
        match self {
            Threshold::Feasible(u) => Some(*u),
            Threshold::Infeasible => None,
        }
    }

    /// Filter threshold that realizes this outcome; infeasible rejects all.
    pub fn filter(&self) -> f64 {
        self.value().unwrap_or(f64::NEG_INFINITY)
    }
}

fn meets(ap: Option<f64>, target: f64) -> bool {
    // No filtered estimate anywhere: nothing can be imprecise.
    ap.is_none_or(|ap| ap >= target)
}

/// Largest `u_T` in `{0} ∪ {observed uncertainties}` whose dataset AP at
/// `e_t` reaches `ap_target`.
pub fn threshold_for_target(images: &[EvalImage], e_t: f64, ap_target: f64) -> Result<Threshold> {
    if images.is_empty() {
        return Err(Error::Empty("no images to threshold".into()));
    }
    if !(ap_target > 0.0 && ap_target <= 1.0) {
        return Err(Error::InvalidConfig(format!("ap_target {ap_target} outside (0, 1]")));
    }
    let mut candidates: Vec<f64> = images
        .iter()
        .flat_map(|im| im.uncertainty.iter().copied())
        .chain(std::iter::once(0.0))
        .collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    for u in candidates {
        if meets(scores_at(images, e_t, u).ap, ap_target) {
            return Ok(Threshold::Feasible(u));
        }
    }
    Ok(Threshold::Infeasible)
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) {
        return Err(Error::InvalidConfig(format!(
            "grid needs n >= 2 and hi > lo, got n={n} [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect())
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(0.0, DEFAULT_ET_MAX, DEFAULT_ET_STEPS).expect("valid default grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub e_t: f64,
    pub u_t: Threshold,
    pub ap: Option<f64>,
    pub ar: Option<f64>,
    pub aru: Option<f64>,
    pub ar_star: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCurves {
    pub points: Vec<CurvePoint>,
    pub ap_target: f64,
    pub auc_ar: f64,
    pub auc_ar_star: f64,
    pub spearman_rho: Option<f64>,
    pub spearman_pairs: usize,
    /// Estimates without associated ground truth, left out of the correlation.
    pub unassociated_estimates: usize,
}

impl EvalCurves {
    pub fn infeasible_points(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.u_t == Threshold::Infeasible)
            .map(|p| p.e_t)
            .collect()
    }

    /// `e_t_m,u_T,AP,AR,ARU,AR_star`; undefined scores are empty fields.
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut s = String::from("e_t_m,u_T,AP,AR,ARU,AR_star\n");
        for p in &self.points {
            let u = match p.u_t {
                Threshold::Feasible(u) => u.to_string(),
                Threshold::Infeasible => "INFEASIBLE".to_string(),
            };
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.e_t,
                u,
                opt(p.ap),
                opt(p.ar),
                opt(p.aru),
                opt(p.ar_star)
            ));
        }
        s
    }
}

/// Sweeps `grid`, choosing the AP-target threshold at every error level.
pub fn sweep_curves(images: &[EvalImage], grid: &[f64], ap_target: f64) -> Result<EvalCurves> {
    if grid.len() < 2 {
        return Err(Error::InvalidConfig("error grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("error grid must be strictly ascending".into()));
    }
    let points = grid
        .par_iter()
        .map(|&e_t| {
            let u_t = threshold_for_target(images, e_t, ap_target)?;
            let s = scores_at(images, e_t, u_t.filter());
            let star = scores_at(images, e_t, 1.0);
            Ok(CurvePoint {
                e_t,
                u_t,
                ap: s.ap,
                ar: s.ar,
                aru: s.aru,
                ar_star: star.ar,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ar: Vec<f64> = points.iter().map(|p| p.ar.unwrap_or(0.0)).collect();
    let ar_star: Vec<f64> = points.iter().map(|p| p.ar_star.unwrap_or(0.0)).collect();
    let pairs: Vec<(f64, f64)> = images.iter().flat_map(|im| im.spearman_pairs()).collect();
    let total: usize = images.iter().map(EvalImage::n_estimates).sum();
    Ok(EvalCurves {
        auc_ar: auc(grid, &ar)?,
        auc_ar_star: auc(grid, &ar_star)?,
        spearman_rho: spearman(&pairs),
        spearman_pairs: pairs.len(),
        unassociated_estimates: total - pairs.len(),
        points,
        ap_target,
    })
}

/// Trapezoidal area under `values` over `grid`, as a percentage of the
/// grid range (constant 1 gives 100).
pub fn auc(grid: &[f64], values: &[f64]) -> Result<f64> {
    if grid.len() < 2 || grid.len() != values.len() {
        return Err(Error::InvalidConfig(format!(
            "AUC needs >= 2 matching points, got {} grid and {} values",
            grid.len(),
            values.len()
        )));
    }
    let range = grid[grid.len() - 1] - grid[0];
    if !(range > 0.0) {
        return Err(Error::InvalidConfig("AUC grid has zero range".into()));
    }
    let area: f64 = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| (g[1] - g[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    Ok(area / range * 100.0)
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation of `(a, b)` pairs. `None` when fewer than two
/// pairs are given or either side is constant.
pub fn spearman(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    pearson(&fractional_ranks(&a), &fractional_ranks(&b))
}
