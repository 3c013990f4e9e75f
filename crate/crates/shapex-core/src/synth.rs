//! Motif-insertion benchmark generators with ground-truth saliency.
//!
//! Four variants: MCC (motif count decides the class: one vs two insertions)
//! and MTC (motif type decides it: sine bump vs triangle), each in E mode
//! (motif peak equals the base-signal standard deviation) or H mode (three
//! times it). The base signal is white noise smoothed by a centred
//! moving average and rescaled to unit standard deviation; motifs replace the
//! base signal, and the ground-truth saliency marks exactly the inserted
//! windows.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, TimeSeries};
use crate::error::{Error, Result};
use crate::sdd::sample_standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifShape {
    SineBump,
    Triangle,
}

/// A parametric motif: shape, length, and peak amplitude in units of the
/// base-signal standard deviation.
#[derive(Debug, Clone, Copy)]
pub struct MotifSpec {
    pub shape: MotifShape,
    pub length: usize,
    pub amplitude: f64,
}

impl MotifSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 4 {
            return Err(Error::Config(format!(
                "motif length must be at least 4, got {}",
                self.length
            )));
        }
        if self.amplitude <= 0.0 {
            return Err(Error::Config(format!(
                "motif amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// Which classification rule the dataset encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Motif count: class 0 gets one insertion, class 1 gets two.
    Mcc,
    /// Motif type: class 0 gets a sine bump, class 1 a triangle.
    Mtc,
}

/// Motif amplitude relative to the base signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeMode {
    /// Equal: peak = 1.0 x base std.
    E,
    /// Higher: peak = 3.0 x base std.
    H,
}

impl AmplitudeMode {
    pub fn amplitude(self) -> f64 {
        match self {
            AmplitudeMode::E => 1.0,
            AmplitudeMode::H => 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub variant: Variant,
    pub mode: AmplitudeMode,
    pub series_len: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub motif_len: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Paper-scale shape: T=800, 10000 train, 2000 test, motif length 40.
    pub fn full_scale(variant: Variant, mode: AmplitudeMode, seed: u64) -> Self {
        Self {
            variant,
            mode,
            series_len: 800,
            n_train: 10_000,
            n_test: 2_000,
            motif_len: 40,
            seed,
        }
    }

    fn max_insertions(&self) -> usize {
        match self.variant {
            Variant::Mcc => 2,
            Variant::Mtc => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("need at least one train and test instance".into()));
        }
        let spec = MotifSpec {
            shape: MotifShape::SineBump,
            length: self.motif_len,
            amplitude: self.mode.amplitude(),
        };
        spec.validate()?;
        // Worst case: max_insertions motifs, non-overlapping, each at least
        // motif_len/2 away from both edges.
        let margin = self.motif_len.div_ceil(2);
        let needed = self.max_insertions() * self.motif_len + 2 * margin;
        if needed > self.series_len {
            return Err(Error::Config(format!(
                "cannot fit {} motif(s) of length {} in series of length {}",
                self.max_insertions(),
                self.motif_len,
                self.series_len
            )));
        }
        Ok(())
    }
}

/// Motif waveform of the given shape and length, peaking at `amplitude`.
pub fn motif_waveform(spec: &MotifSpec) -> Vec<f64> {
    let l = spec.length;
    match spec.shape {
        MotifShape::SineBump => (0..l)
            .map(|j| spec.amplitude * (std::f64::consts::PI * j as f64 / (l - 1) as f64).sin())
            .collect(),
        MotifShape::Triangle => {
            // Symmetric ramp peaking at the amplitude (a two-point plateau
            // for even lengths).
            let half = ((l - 1) / 2).max(1) as f64;
            (0..l)
                .map(|j| spec.amplitude * (j.min(l - 1 - j) as f64 / half).min(1.0))
                .collect()
        }
    }
}

/// Generate train and test splits. Deterministic: every instance derives its
/// own ChaCha stream from the config seed.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let name = format!(
        "{}-{}",
        match cfg.variant {
            Variant::Mcc => "mcc",
            Variant::Mtc => "mtc",
        },
        match cfg.mode {
            AmplitudeMode::E => "e",
            AmplitudeMode::H => "h",
        }
    );
    let train = split(cfg, 0, cfg.n_train, &format!("{name}-train"))?;
    let test = split(cfg, cfg.n_train as u64, cfg.n_test, &format!("{name}-test"))?;
    Ok((train, test))
}

fn split(cfg: &SynthConfig, stream_offset: u64, count: usize, name: &str) -> Result<Dataset> {
    let instances: Vec<TimeSeries> = (0..count)
        .map(|i| make_instance(cfg, stream_offset + i as u64, i % 2))
        .collect::<Result<_>>()?;
    Dataset::new(instances, 2, name)
}

fn make_instance(cfg: &SynthConfig, stream: u64, label: usize) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let t_len = cfg.series_len;

    // Smoothed, unit-variance base signal.
    let noise: Vec<f64> = (0..t_len).map(|_| sample_standard_normal(&mut rng)).collect();
    let mut base = vec![0.0; t_len];
    for t in 0..t_len {
        let lo = t.saturating_sub(2);
        let hi = (t + 2).min(t_len - 1);
        base[t] = noise[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    }
    let mean = base.iter().sum::<f64>() / t_len as f64;
    let std = (base.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t_len as f64).sqrt();
    if std > 0.0 {
        for v in base.iter_mut() {
            *v /= std;
        }
    }

    // Choose motifs for this instance's class.
    let amplitude = cfg.mode.amplitude();
    let shapes: Vec<MotifShape> = match (cfg.variant, label) {
        (Variant::Mcc, 0) => vec![MotifShape::SineBump],
        (Variant::Mcc, _) => vec![MotifShape::SineBump, MotifShape::SineBump],
        (Variant::Mtc, 0) => vec![MotifShape::SineBump],
        (Variant::Mtc, _) => vec![MotifShape::Triangle],
    };

    // Non-overlapping positions, at least motif_len/2 from the edges.
    let margin = cfg.motif_len.div_ceil(2);
    let lo = margin;
    let hi = t_len - cfg.motif_len - margin;
    let mut starts: Vec<usize> = Vec::with_capacity(shapes.len());
    let mut attempts = 0;
    while starts.len() < shapes.len() {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(
                "could not place non-overlapping motifs".into(),
            ));
        }
        let s = rng.gen_range(lo..=hi);
        if starts
            .iter()
            .all(|&other| s + cfg.motif_len <= other || other + cfg.motif_len <= s)
        {
            starts.push(s);
        }
    }

    let mut gt = vec![false; t_len];
    for (shape, &start) in shapes.iter().zip(&starts) {
        let wave = motif_waveform(&MotifSpec {
            shape: *shape,
            length: cfg.motif_len,
            amplitude,
        });
        for (j, &w) in wave.iter().enumerate() {
            base[start + j] = w;
            gt[start + j] = true;
        }
    }

    Ok(TimeSeries {
        values: base,
        label: Some(label),
        gt_saliency: Some(gt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_cfg() -> SynthConfig {
        SynthConfig {
            variant: Variant::Mcc,
            mode: AmplitudeMode::H,
            series_len: 200,
            n_train: 60,
            n_test: 24,
            motif_len: 40,
            seed: 7,
        }
    }

    #[test]
    fn full_scale_shapes() {
        let cfg = SynthConfig::full_scale(Variant::Mcc, AmplitudeMode::H, 7);
        let (train, test) = generate(&cfg).unwrap();
        assert_eq!(train.len(), 10_000);
        assert_eq!(test.len(), 2_000);
        assert_eq!(train.series_len(), 800);
        assert_eq!(test.series_len(), 800);
    }

    #[test]
    fn class1_mcc_has_two_motifs_of_ones() {
        let (train, _) = generate(&mini_cfg()).unwrap();
        for inst in &train.instances {
            let ones = inst.gt_saliency.as_ref().unwrap().iter().filter(|&&b| b).count();
            let expect = match inst.label.unwrap() {
                0 => 40,
                _ => 80,
            };
            assert_eq!(ones, expect);
        }
    }

    #[test]
    fn determinism_same_seed_same_data() {
        let (a_train, a_test) = generate(&mini_cfg()).unwrap();
        let (b_train, b_test) = generate(&mini_cfg()).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
    }

    #[test]
    fn classes_are_balanced() {
        let (train, test) = generate(&mini_cfg()).unwrap();
        for ds in [&train, &test] {
            let ones = ds.instances.iter().filter(|i| i.label == Some(1)).count();
            let zeros = ds.len() - ones;
            assert!(ones.abs_diff(zeros) <= 1);
        }
    }

    #[test]
    fn motifs_cannot_fit_is_config_error() {
        let mut cfg = mini_cfg();
        cfg.series_len = 10;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn sine_bump_endpoints_are_zero() {
        let wave = motif_waveform(&MotifSpec {
            shape: MotifShape::SineBump,
            length: 9,
            amplitude: 2.0,
        });
        assert!(wave[0].abs() < 1e-12);
        assert!(wave[8].abs() < 1e-12);
    }

    #[test]
    fn triangle_hand_values() {
        let wave = motif_waveform(&MotifSpec {
            shape: MotifShape::Triangle,
            length: 5,
            amplitude: 2.0,
        });
        for (got, want) in wave.iter().zip([0.0, 1.0, 2.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_equals_amplitude() {
        // The sine bump hits its peak exactly only at odd lengths (the grid
        // then contains the midpoint); the triangle always does.
        for length in [5, 9, 41] {
            let wave = motif_waveform(&MotifSpec {
                shape: MotifShape::SineBump,
                length,
                amplitude: 3.0,
            });
            let max = wave.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!((max - 3.0).abs() < 1e-9, "sine len {length}: {max}");
        }
        for length in [4, 5, 40, 41] {
            let wave = motif_waveform(&MotifSpec {
                shape: MotifShape::Triangle,
                length,
                amplitude: 3.0,
            });
            let max = wave.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!((max - 3.0).abs() < 1e-12, "triangle len {length}: {max}");
        }
    }

    #[test]
    fn mtc_class_decides_shape() {
        let mut cfg = mini_cfg();
        cfg.variant = Variant::Mtc;
        let (train, _) = generate(&cfg).unwrap();
        for inst in train.instances.iter().take(8) {
            let gt = inst.gt_saliency.as_ref().unwrap();
            let start = gt.iter().position(|&b| b).unwrap();
            // The sine bump starts at zero; the triangle also starts at zero
            // but differs at the quarter point.
            let quarter = inst.values[start + cfg.motif_len / 4];
            let j = cfg.motif_len / 4;
            let expected = match inst.label.unwrap() {
                0 => 3.0
                    * (std::f64::consts::PI * j as f64 / (cfg.motif_len - 1) as f64).sin(),
                _ => {
                    let half = ((cfg.motif_len - 1) / 2) as f64;
                    3.0 * (j.min(cfg.motif_len - 1 - j) as f64 / half).min(1.0)
                }
            };
            assert!((quarter - expected).abs() < 1e-9);
        }
    }

    /// Amplitude-mode separation: in H mode motif values stand clear of the
    /// background distribution, in E mode they blend in.
    #[test]
    fn amplitude_modes_have_the_right_tails() {
        for (mode, check) in [(AmplitudeMode::H, true), (AmplitudeMode::E, false)] {
            let mut cfg = mini_cfg();
            cfg.mode = mode;
            let (train, _) = generate(&cfg).unwrap();
            let mut inside_max = 0.0f64;
            let mut outside: Vec<f64> = Vec::new();
            for inst in &train.instances {
                let gt = inst.gt_saliency.as_ref().unwrap();
                for (t, &v) in inst.values.iter().enumerate() {
                    if gt[t] {
                        inside_max = inside_max.max(v.abs());
                    } else {
                        outside.push(v.abs());
                    }
                }
            }
            outside.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pct = |q: f64| outside[(q * (outside.len() - 1) as f64) as usize];
            if check {
                assert!(inside_max > pct(0.99), "H: {} vs {}", inside_max, pct(0.99));
            } else {
                assert!(inside_max <= pct(0.90), "E: {} vs {}", inside_max, pct(0.90));
            }
        }
    }
}
