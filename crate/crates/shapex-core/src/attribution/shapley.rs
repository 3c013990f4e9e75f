//! Segment-level Shapley values and the saliency pipeline.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_mask, connected_universe, perturb_linear, segment, Segment, SegmentConfig, SegmentSet};
use crate::data::SaliencyMap;
use crate::error::{Error, Result};
use crate::jsonfmt::fmt_f64;
use crate::model::Classifier;
use crate::sdd::ShapeletBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapleyMode {
    Exact,
    Sampled,
}

/// Per-segment attributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyResult {
    pub phi: Vec<f64>,
    /// Exact when every segment was enumerated exactly.
    pub mode: ShapleyMode,
    /// Permutations drawn per segment (zero for exact segments).
    pub samples_used: Vec<usize>,
    pub value_at_empty: f64,
    pub value_at_full: f64,
}

#[derive(Debug, Clone)]
pub struct ShapleyConfig {
    /// Enumerate exactly when a segment's connected universe has at most this
    /// many members (2^k coalitions); sample otherwise.
    pub k_exact: usize,
    /// Permutations per segment in sampled mode.
    pub num_samples: usize,
    pub seed: u64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Shapley values under an arbitrary coalition value function.
///
/// `value` receives an ascending list of segment indices (the coalition whose
/// segments stay intact). Each segment's coalition space is restricted to its
/// connected universe; exact enumeration applies the standard coalition
/// weights over that universe, and sampling averages marginal contributions
/// over seeded random permutations.
pub fn shapley_values(
    segs: &SegmentSet,
    value: &mut dyn FnMut(&[usize]) -> Result<f64>,
    cfg: &ShapleyConfig,
) -> Result<ShapleyResult> {
    if segs.is_empty() {
        return Err(Error::Config("no segments to attribute".into()));
    }
    let m = segs.len();
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut eval = |coalition: &[usize], cache: &mut HashMap<Vec<usize>, f64>| -> Result<f64> {
        debug_assert!(coalition.windows(2).all(|w| w[0] < w[1]));
        if let Some(&v) = cache.get(coalition) {
            return Ok(v);
        }
        let v = value(coalition)?;
        cache.insert(coalition.to_vec(), v);
        Ok(v)
    };

    let value_at_empty = eval(&[], &mut cache)?;
    let full: Vec<usize> = (0..m).collect();
    let value_at_full = eval(&full, &mut cache)?;

    let mut phi = vec![0.0; m];
    let mut samples_used = vec![0usize; m];
    let mut any_sampled = false;

    for n in 0..m {
        let universe = connected_universe(segs, n);
        let u = universe.len();
        if u <= cfg.k_exact {
            // Exact enumeration over the restricted player set U ∪ {n}.
            let k = u + 1;
            let denom = factorial(k);
            let mut acc = 0.0;
            for mask in 0u64..(1u64 << u) {
                let mut without: Vec<usize> = Vec::with_capacity(u);
                for (bit, &seg_idx) in universe.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        without.push(seg_idx);
                    }
                }
                let mut with = without.clone();
                let pos = with.partition_point(|&s| s < n);
                with.insert(pos, n);
                let s = without.len();
                let weight = factorial(s) * factorial(k - s - 1) / denom;
                let v_with = eval(&with, &mut cache)?;
                let v_without = eval(&without, &mut cache)?;
                acc += weight * (v_with - v_without);
            }
            phi[n] = acc;
        } else {
            // Sampled mode: average marginal contributions over random
            // permutations of the restricted player set.
            any_sampled = true;
            let mut players: Vec<usize> = universe.clone();
            players.push(n);
            players.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(n as u64 + 1);
            let mut acc = 0.0;
            let mut perm = players.clone();
            for _ in 0..cfg.num_samples {
                for i in (1..perm.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                let cut = perm.iter().position(|&p| p == n).expect("n is a player");
                let mut without: Vec<usize> = perm[..cut].to_vec();
                without.sort_unstable();
                let mut with = without.clone();
                let pos = with.partition_point(|&s| s < n);
                with.insert(pos, n);
                let v_with = eval(&with, &mut cache)?;
                let v_without = eval(&without, &mut cache)?;
                acc += v_with - v_without;
            }
            phi[n] = acc / cfg.num_samples as f64;
            samples_used[n] = cfg.num_samples;
        }
    }

    let result = ShapleyResult {
        phi,
        mode: if any_sampled {
            ShapleyMode::Sampled
        } else {
            ShapleyMode::Exact
        },
        samples_used,
        value_at_empty,
        value_at_full,
    };
    if result.phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical {
            block: "shapley".to_string(),
            msg: "non-finite attribution".to_string(),
        });
    }
    Ok(result)
}

/// Shapley values against a classifier: the value of a coalition is the
/// target-class probability after masking everything outside it (linear
/// baseline).
pub fn shapley(
    x: &[f64],
    segs: &SegmentSet,
    f: &dyn Classifier,
    target: usize,
    cfg: &ShapleyConfig,
) -> Result<ShapleyResult> {
    let t_len = x.len();
    let mut value = |coalition: &[usize]| -> Result<f64> {
        let mask = build_mask(t_len, segs, coalition);
        let perturbed = perturb_linear(x, &mask);
        let probs = f.predict_proba(&perturbed)?;
        probs.get(target).copied().ok_or_else(|| {
            Error::Shape(format!(
                "target class {} out of range {}",
                target,
                probs.len()
            ))
        })
    };
    shapley_values(segs, &mut value, cfg)
}

/// Distribute each segment's |phi| uniformly over its interval, sum where
/// segments overlap, then normalize the peak to one.
pub fn to_saliency(res: &ShapleyResult, segs: &SegmentSet, t_len: usize) -> SaliencyMap {
    let mut raw = vec![0.0; t_len];
    for (seg, &phi) in segs.segments.iter().zip(&res.phi) {
        let contribution = phi.abs() / seg.len() as f64;
        for r in raw.iter_mut().take(seg.end).skip(seg.start) {
            *r += contribution;
        }
    }
    let max = raw.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        for r in raw.iter_mut() {
            *r /= max;
        }
    }
    SaliencyMap { scores: raw }
}

/// Equal-length ablation: partition the series into consecutive intervals of
/// `seg_len` (last may be short), treat them as fully connected segments, and
/// run the same attribution.
pub fn equal_length_shapley(
    x: &[f64],
    f: &dyn Classifier,
    target: usize,
    seg_len: usize,
    cfg: &ShapleyConfig,
) -> Result<SaliencyMap> {
    let segs = equal_length_segments(x.len(), seg_len)?;
    let res = shapley(x, &segs, f, target, cfg)?;
    Ok(to_saliency(&res, &segs, x.len()))
}

/// Consecutive `[k*seg_len, min((k+1)*seg_len, T))` intervals, fully
/// connected.
pub fn equal_length_segments(t_len: usize, seg_len: usize) -> Result<SegmentSet> {
    if seg_len == 0 || t_len == 0 {
        return Err(Error::Config("segment and series lengths must be positive".into()));
    }
    let segments: Vec<Segment> = (0..t_len.div_ceil(seg_len))
        .map(|k| Segment {
            shapelet_id: k,
            start: k * seg_len,
            end: ((k + 1) * seg_len).min(t_len),
            peak: k * seg_len,
        })
        .collect();
    Ok(SegmentSet::fully_connected(segments, t_len))
}

#[derive(Debug, Clone, Default)]
pub struct ExplainConfig {
    /// Omega and friends; default derives omega from the bank's shapelet
    /// count.
    pub segment: Option<SegmentConfig>,
    pub shapley: ShapleyConfig,
    /// Attribution target; default is the model's own prediction.
    pub target: Option<usize>,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            k_exact: 12,
            num_samples: 64,
            seed: 7,
        }
    }
}

/// Everything the pipeline produced for one instance.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub saliency: SaliencyMap,
    pub segments: SegmentSet,
    pub shapley: Option<ShapleyResult>,
    pub target: usize,
    /// True when segmentation found nothing and the map is all zeros.
    pub empty_segments: bool,
}

/// Full pipeline for one instance: segment, attribute, distribute saliency.
pub fn explain(
    x: &[f64],
    bank: &ShapeletBank,
    f: &dyn Classifier,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    if bank.hyper.trained_t != 0 && x.len() != bank.hyper.trained_t {
        return Err(Error::Shape(format!(
            "series length {} does not match the bank's trained length {}",
            x.len(),
            bank.hyper.trained_t
        )));
    }
    let target = match cfg.target {
        Some(t) => t,
        None => crate::model::argmax_class(&f.predict_proba(x)?),
    };
    let seg_cfg = cfg
        .segment
        .clone()
        .unwrap_or_else(|| SegmentConfig::for_shapelet_count(bank.hyper.n));
    let segments = segment(x, bank, &seg_cfg)?;
    if segments.is_empty() {
        return Ok(Explanation {
            saliency: SaliencyMap::zeros(x.len()),
            segments,
            shapley: None,
            target,
            empty_segments: true,
        });
    }
    let res = shapley(x, &segments, f, target, &cfg.shapley)?;
    let saliency = to_saliency(&res, &segments, x.len());
    Ok(Explanation {
        saliency,
        segments: segments.clone(),
        shapley: Some(res),
        target,
        empty_segments: false,
    })
}

/// JSON export: target, mode, boundary values, and per-segment
/// `{shapelet_id, start, end, phi, samples_used}`.
pub fn shapley_result_to_json(res: &ShapleyResult, segs: &SegmentSet, target: usize) -> String {
    let mode = match res.mode {
        ShapleyMode::Exact => "exact",
        ShapleyMode::Sampled => "sampled",
    };
    let per_segment: Vec<String> = segs
        .segments
        .iter()
        .zip(res.phi.iter().zip(&res.samples_used))
        .map(|(seg, (&phi, &samples))| {
            format!(
                "{{\"shapelet_id\":{},\"start\":{},\"end\":{},\"phi\":{},\"samples_used\":{}}}",
                seg.shapelet_id,
                seg.start,
                seg.end,
                fmt_f64(phi),
                samples
            )
        })
        .collect();
    format!(
        concat!(
            "{{\"version\":1,\"target\":{},\"mode\":\"{}\",",
            "\"value_at_empty\":{},\"value_at_full\":{},\"segments\":[{}]}}"
        ),
        target,
        mode,
        fmt_f64(res.value_at_empty),
        fmt_f64(res.value_at_full),
        per_segment.join(",")
    )
}
