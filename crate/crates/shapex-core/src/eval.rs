//! Saliency-quality metrics against ground truth and the occlusion protocol.
//!
//! The threshold sweep runs over the sorted unique scores. Precision is 1 and
//! recall 0 for an empty prediction set. AUPRC integrates the
//! monotone-interpolated precision-recall curve trapezoidally over recall;
//! AUP and AUR integrate precision and recall over the threshold axis
//! normalized to `[0, 1]`.

use crate::attribution::perturb_linear;
use crate::data::{Dataset, PerturbationMask, SaliencyMap};
use crate::error::{Error, Result};
use crate::model::Classifier;

/// Areas under the saliency-quality curves, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencyMetrics {
    pub auprc: f64,
    pub aup: f64,
    pub aur: f64,
}

/// Precision/recall of thresholded saliency against binary ground truth,
/// swept over the unique scores.
pub fn saliency_metrics(map: &SaliencyMap, gt: &[bool]) -> Result<SaliencyMetrics> {
    if map.len() != gt.len() {
        return Err(Error::Shape(format!(
            "saliency length {} vs ground truth length {}",
            map.len(),
            gt.len()
        )));
    }
    let positives = gt.iter().filter(|&&b| b).count();
    if positives == 0 || positives == gt.len() {
        return Err(Error::DegenerateGroundTruth);
    }

    let mut thresholds: Vec<f64> = map.scores.clone();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    // One (precision, recall) point per threshold, predicting salient where
    // score >= threshold.
    let mut points: Vec<(f64, f64, f64)> = Vec::with_capacity(thresholds.len());
    for &tau in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (t, &g) in gt.iter().enumerate() {
            if map.scores[t] >= tau {
                if g {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        points.push((tau, precision, recall));
    }

    let auprc = auprc_from_points(&points);

    // Threshold-axis areas: precision(tau) and recall(tau) are piecewise
    // constant; for tau in (thresholds[i-1], thresholds[i]] the prediction
    // set is {score >= thresholds[i]}. Above the maximum score the set is
    // empty (precision 1, recall 0).
    let mut aup = 0.0;
    let mut aur = 0.0;
    let mut prev_tau = 0.0f64;
    for &(tau, precision, recall) in &points {
        let width = (tau.min(1.0) - prev_tau).max(0.0);
        aup += width * precision;
        aur += width * recall;
        prev_tau = tau.min(1.0).max(prev_tau);
    }
    if prev_tau < 1.0 {
        aup += (1.0 - prev_tau) * 1.0;
        // Empty predictions: recall 0 contributes nothing.
    }

    Ok(SaliencyMetrics { auprc, aup, aur })
}

/// Trapezoidal area under the monotone-interpolated PR curve.
fn auprc_from_points(points: &[(f64, f64, f64)]) -> f64 {
    // Collect (recall, precision), sort by recall, make precision monotone
    // non-increasing in recall, collapse duplicate recalls.
    let mut pr: Vec<(f64, f64)> = points.iter().map(|&(_, p, r)| (r, p)).collect();
    pr.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = 0.0f64;
    for i in (0..pr.len()).rev() {
        best = best.max(pr[i].1);
        pr[i].1 = best;
    }
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(pr.len() + 1);
    for &(r, p) in &pr {
        if let Some(last) = curve.last_mut() {
            if (last.0 - r).abs() < f64::EPSILON {
                last.1 = last.1.max(p);
                continue;
            }
        }
        curve.push((r, p));
    }
    // Extend the leftmost precision to recall zero.
    if curve.first().map(|&(r, _)| r > 0.0).unwrap_or(false) {
        let p0 = curve[0].1;
        curve.insert(0, (0.0, p0));
    }
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (r0, p0) = w[0];
        let (r1, p1) = w[1];
        area += (r1 - r0) * (p0 + p1) / 2.0;
    }
    area
}

/// Rank-based (Mann-Whitney) AUROC; ties contribute one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores/labels length mismatch".into()));
    }
    let pos = labels.iter().filter(|&&b| b).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateGroundTruth);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical {
            block: "auroc".to_string(),
            msg: "non-finite score".to_string(),
        });
    }
    // Average ranks with tie groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j averaged over the tie group.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Replacement values for occluded timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionBaseline {
    /// Straight line between the anchors of each masked run.
    Linear,
    Zero,
    /// Whole-series mean.
    Mean,
}

/// Which end of the saliency ranking gets masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskOrder {
    /// Mask the lowest-saliency timesteps (the spec'd protocol).
    BottomFirst,
    /// Mask the highest-saliency timesteps (directional sanity checks).
    TopFirst,
}

/// AUROC of the classifier after masking a growing fraction of timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionCurve {
    pub ratios: Vec<f64>,
    pub auroc: Vec<f64>,
}

/// Occlusion protocol: for each ratio, mask `floor(r*T)` timesteps per
/// instance in saliency order (ties by ascending timestep), perturb, and
/// score the classifier over the test set with one-vs-rest AUROC
/// (macro-averaged for more than two classes).
pub fn occlusion(
    test: &Dataset,
    maps: &[SaliencyMap],
    f: &dyn Classifier,
    ratios: &[f64],
    baseline: OcclusionBaseline,
) -> Result<OcclusionCurve> {
    occlusion_with_order(test, maps, f, ratios, baseline, MaskOrder::BottomFirst)
}

pub fn occlusion_with_order(
    test: &Dataset,
    maps: &[SaliencyMap],
    f: &dyn Classifier,
    ratios: &[f64],
    baseline: OcclusionBaseline,
    order: MaskOrder,
) -> Result<OcclusionCurve> {
    if maps.len() != test.len() {
        return Err(Error::Shape(format!(
            "{} maps for {} instances",
            maps.len(),
            test.len()
        )));
    }
    let t_len = test.series_len();
    for (i, map) in maps.iter().enumerate() {
        if map.len() != t_len {
            return Err(Error::Shape(format!(
                "map {} has length {}, expected {}",
                i,
                map.len(),
                t_len
            )));
        }
    }
    let labels: Vec<usize> = test
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| inst.label.ok_or(Error::MissingLabel { index: i }))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(ratios.len());
    for &r in ratios {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Config(format!("ratio {} outside [0,1]", r)));
        }
        let k = (r * t_len as f64).floor() as usize;
        let mut probs_all: Vec<Vec<f64>> = Vec::with_capacity(test.len());
        for (inst, map) in test.instances.iter().zip(maps) {
            let perturbed = if k == 0 {
                inst.values.clone()
            } else {
                let mask = mask_by_rank(map, k, order);
                apply_baseline(&inst.values, &mask, baseline)
            };
            probs_all.push(f.predict_proba(&perturbed)?);
        }
        out.push(macro_ovr_auroc(&probs_all, &labels, test.num_classes)?);
    }
    Ok(OcclusionCurve {
        ratios: ratios.to_vec(),
        auroc: out,
    })
}

/// Mask the `k` lowest-saliency (or highest, for `TopFirst`) timesteps; ties
/// break by ascending timestep index.
fn mask_by_rank(map: &SaliencyMap, k: usize, order: MaskOrder) -> PerturbationMask {
    let t_len = map.len();
    let mut idx: Vec<usize> = (0..t_len).collect();
    idx.sort_by(|&a, &b| match order {
        MaskOrder::BottomFirst => map.scores[a]
            .partial_cmp(&map.scores[b])
            .unwrap()
            .then(a.cmp(&b)),
        MaskOrder::TopFirst => map.scores[b]
            .partial_cmp(&map.scores[a])
            .unwrap()
            .then(a.cmp(&b)),
    });
    let mut bits = vec![true; t_len];
    for &t in idx.iter().take(k.min(t_len)) {
        bits[t] = false;
    }
    PerturbationMask { bits }
}

fn apply_baseline(x: &[f64], mask: &PerturbationMask, baseline: OcclusionBaseline) -> Vec<f64> {
    match baseline {
        OcclusionBaseline::Linear => perturb_linear(x, mask),
        OcclusionBaseline::Zero => x
            .iter()
            .zip(&mask.bits)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect(),
        OcclusionBaseline::Mean => {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter()
                .zip(&mask.bits)
                .map(|(&v, &keep)| if keep { v } else { mean })
                .collect()
        }
    }
}

/// One-vs-rest AUROC per class over class-probability rows, macro-averaged.
fn macro_ovr_auroc(probs: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<f64> {
    if num_classes == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let is_pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return auroc(&scores, &is_pos);
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..num_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let is_pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        if is_pos.iter().all(|&b| !b) || is_pos.iter().all(|&b| b) {
            continue;
        }
        total += auroc(&scores, &is_pos)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::DegenerateGroundTruth);
    }
    Ok(total / counted as f64)
}

/// CSV export for an occlusion curve: `ratio,auroc` rows.
pub fn occlusion_curve_to_csv(curve: &OcclusionCurve) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("ratio,auroc\n");
    for (r, a) in curve.ratios.iter().zip(&curve.auroc) {
        let _ = writeln!(
            out,
            "{},{}",
            crate::jsonfmt::fmt_f64(*r),
            crate::jsonfmt::fmt_f64(*a)
        );
    }
    out
}
