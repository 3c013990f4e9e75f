//! Inference-time attribution: shapelet-driven segmentation, segment-level
//! perturbation with a linear baseline, and Shapley-value computation with
//! temporally-relational coalition restriction.

mod shapley;

pub use shapley::{
    equal_length_shapley, explain, shapley, shapley_result_to_json, shapley_values, to_saliency,
    ExplainConfig, Explanation, ShapleyConfig, ShapleyMode, ShapleyResult,
};

use crate::data::PerturbationMask;
use crate::error::{Error, Result};
use crate::sdd::{activate, describe, encode_shapelets, ActivationMap, ShapeletBank};

/// One contiguous activated interval for a shapelet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Index of the shapelet that produced this segment (or the partition
    /// index for equal-length segmentation).
    pub shapelet_id: usize,
    /// Interval `[start, end)` in timesteps.
    pub start: usize,
    pub end: usize,
    /// Activation peak inside the interval.
    pub peak: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end
    }
}

/// Segments plus their temporal-connectivity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
    /// Symmetric, true diagonal; true iff intervals overlap or their gap is
    /// at most the gap tolerance.
    pub adjacency: Vec<Vec<bool>>,
    pub series_len: usize,
}

impl SegmentSet {
    /// Build a set and its adjacency from segments.
    pub fn new(segments: Vec<Segment>, series_len: usize, gap_tolerance: usize) -> Self {
        let m = segments.len();
        let mut adjacency = vec![vec![false; m]; m];
        for i in 0..m {
            adjacency[i][i] = true;
            for j in i + 1..m {
                let a = &segments[i];
                let b = &segments[j];
                // Gap between [a.start, a.end) and [b.start, b.end); overlap
                // makes this zero.
                let gap = a.start.max(b.start).saturating_sub(a.end.min(b.end));
                let connected = gap <= gap_tolerance;
                adjacency[i][j] = connected;
                adjacency[j][i] = connected;
            }
        }
        Self {
            segments,
            adjacency,
            series_len,
        }
    }

    /// Fully connected set over the same segments (used by the equal-length
    /// variant).
    pub fn fully_connected(segments: Vec<Segment>, series_len: usize) -> Self {
        let m = segments.len();
        Self {
            segments,
            adjacency: vec![vec![true; m]; m],
            series_len,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Segmentation knobs.
#[derive(Debug, Clone)]
pub struct SegmentConfig {
    /// Activation threshold; must lie strictly between 0 and 1.
    pub omega: f64,
    /// Two segments are connected when their gap is at most this.
    pub gap_tolerance: usize,
    /// Keep every super-threshold run instead of only the run containing the
    /// activation peak.
    pub all_runs: bool,
}

impl SegmentConfig {
    /// Defaults for a bank of `n` shapelets: omega = 1.5/n (above the uniform
    /// softmax level 1/n), zero gap tolerance, peak run only.
    pub fn for_shapelet_count(n: usize) -> Self {
        Self {
            omega: 1.5 / n as f64,
            gap_tolerance: 0,
            all_runs: false,
        }
    }
}

/// Segment a series by shapelet activation: describe + activate, then
/// threshold each shapelet column at omega.
pub fn segment(x: &[f64], bank: &ShapeletBank, cfg: &SegmentConfig) -> Result<SegmentSet> {
    let eff = encode_shapelets(bank)?;
    let a = activate(&describe(x, &eff, &bank.bias));
    segment_activation(&a, cfg)
}

/// Segmentation from a precomputed activation map.
pub fn segment_activation(a: &ActivationMap, cfg: &SegmentConfig) -> Result<SegmentSet> {
    if !(cfg.omega > 0.0 && cfg.omega < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1), got {}",
            cfg.omega
        )));
    }
    let t_len = a.series_len();
    let n = a.num_shapelets();
    let mut segments = Vec::new();
    for ni in 0..n {
        let above: Vec<bool> = (0..t_len).map(|t| a.rows[t][ni] > cfg.omega).collect();
        let peak = a.peak(ni);
        if !above[peak] {
            // Even the peak is below threshold: this shapelet contributes no
            // segment (and no other point can exceed it).
            continue;
        }
        let mut t = 0;
        while t < t_len {
            if !above[t] {
                t += 1;
                continue;
            }
            let start = t;
            while t < t_len && above[t] {
                t += 1;
            }
            let end = t;
            if cfg.all_runs || (peak >= start && peak < end) {
                let seg_peak = if peak >= start && peak < end {
                    peak
                } else {
                    // Peak of this run for secondary runs in all-runs mode.
                    (start..end).fold(start, |best, tt| {
                        if a.rows[tt][ni] > a.rows[best][ni] {
                            tt
                        } else {
                            best
                        }
                    })
                };
                segments.push(Segment {
                    shapelet_id: ni,
                    start,
                    end,
                    peak: seg_peak,
                });
            }
        }
    }
    Ok(SegmentSet::new(segments, t_len, cfg.gap_tolerance))
}

/// Mask for a coalition: keep exactly the union of the chosen segments'
/// intervals; every other timestep is masked, including timesteps outside all
/// segments.
pub fn build_mask(t_len: usize, segs: &SegmentSet, subset: &[usize]) -> PerturbationMask {
    let mut bits = vec![false; t_len];
    for &si in subset {
        let seg = &segs.segments[si];
        for b in bits.iter_mut().take(seg.end).skip(seg.start) {
            *b = true;
        }
    }
    PerturbationMask { bits }
}

/// Replace each masked run with the straight line between its boundary
/// anchors. Runs touching a series edge hold the single available anchor
/// constant; a fully masked series becomes all zeros.
pub fn perturb_linear(x: &[f64], mask: &PerturbationMask) -> Vec<f64> {
    let t_len = x.len();
    assert_eq!(mask.len(), t_len, "mask length must match series length");
    if mask.bits.iter().all(|&b| !b) {
        return vec![0.0; t_len];
    }
    let mut out = x.to_vec();
    let mut t = 0;
    while t < t_len {
        if mask.bits[t] {
            t += 1;
            continue;
        }
        let run_start = t;
        while t < t_len && !mask.bits[t] {
            t += 1;
        }
        let run_end = t - 1; // inclusive
        let left = run_start.checked_sub(1).map(|i| x[i]);
        let right = (run_end + 1 < t_len).then(|| x[run_end + 1]);
        match (left, right) {
            (Some(l), Some(r)) => {
                let t_start = run_start as f64 - 1.0;
                let span = (run_end + 1) as f64 - t_start;
                for (ti, o) in out.iter_mut().enumerate().take(run_end + 1).skip(run_start) {
                    *o = l + (ti as f64 - t_start) / span * (r - l);
                }
            }
            (Some(l), None) => {
                for o in out.iter_mut().take(run_end + 1).skip(run_start) {
                    *o = l;
                }
            }
            (None, Some(r)) => {
                for o in out.iter_mut().take(run_end + 1).skip(run_start) {
                    *o = r;
                }
            }
            (None, None) => unreachable!("fully masked handled above"),
        }
    }
    out
}

/// All segments directly or transitively connected to `n`, excluding `n`
/// itself, in ascending order.
pub fn connected_universe(segs: &SegmentSet, n: usize) -> Vec<usize> {
    let m = segs.len();
    let mut seen = vec![false; m];
    let mut stack = vec![n];
    seen[n] = true;
    while let Some(i) = stack.pop() {
        for j in 0..m {
            if segs.adjacency[i][j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    (0..m).filter(|&j| j != n && seen[j]).collect()
}
