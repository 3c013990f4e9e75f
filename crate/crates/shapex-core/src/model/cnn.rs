//! Built-in reference classifier: a small two-stage 1D CNN.
//!
//! Stage widths 7 and 5 with 8 and 16 channels, global max *and* mean pooling
//! per channel (concatenated), and a dense head. Mean pooling is part of the
//! head because count-style class structure is invisible to a pure max pool.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{Classifier, ClassifierKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::jsonfmt::{json_f64_array, json_f64_matrix, json_f64_tensor3};
use crate::sdd::sample_standard_normal;

pub const CNN_VERSION: u32 = 1;

const C1: usize = 8;
const K1: usize = 7;
const C2: usize = 16;
const K2: usize = 5;
/// Dense input: one global mean-pool feature per second-stage channel. Mean
/// pooling keeps the head stable under localized perturbations and carries
/// count structure that a global max cannot express.
const FEAT: usize = C2;

/// Reference CNN weights; immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCnn {
    /// `[C1][K1]` (single input channel).
    pub conv1_w: Vec<Vec<f64>>,
    pub conv1_b: Vec<f64>,
    /// `[C2][C1][K2]`
    pub conv2_w: Vec<Vec<Vec<f64>>>,
    pub conv2_b: Vec<f64>,
    /// `[num_classes][FEAT]`
    pub dense_w: Vec<Vec<f64>>,
    pub dense_b: Vec<f64>,
    pub num_classes: usize,
    /// Series length the net was trained on.
    pub input_len: usize,
}

impl ReferenceCnn {
    pub fn zeros(num_classes: usize, input_len: usize) -> Self {
        Self {
            conv1_w: vec![vec![0.0; K1]; C1],
            conv1_b: vec![0.0; C1],
            conv2_w: vec![vec![vec![0.0; K2]; C1]; C2],
            conv2_b: vec![0.0; C2],
            dense_w: vec![vec![0.0; FEAT]; num_classes],
            dense_b: vec![0.0; num_classes],
            num_classes,
            input_len,
        }
    }

    fn init(num_classes: usize, input_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(num_classes, input_len);
        let fill = |m: &mut [Vec<f64>], fan_in: usize, rng: &mut ChaCha8Rng| {
            let std = (2.0 / fan_in as f64).sqrt();
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v = sample_standard_normal(rng) * std;
                }
            }
        };
        fill(&mut net.conv1_w, K1, rng);
        for block in net.conv2_w.iter_mut() {
            fill(block, C1 * K2, rng);
        }
        fill(&mut net.dense_w, FEAT, rng);
        net
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let t_len = x.len();
        // Stage 1: same-padded conv + ReLU.
        let mut h1 = vec![vec![0.0; t_len]; C1];
        for c in 0..C1 {
            for t in 0..t_len {
                let mut acc = self.conv1_b[c];
                let start = t as isize - (K1 / 2) as isize;
                for j in 0..K1 {
                    let idx = start + j as isize;
                    if idx >= 0 && (idx as usize) < t_len {
                        acc += self.conv1_w[c][j] * x[idx as usize];
                    }
                }
                h1[c][t] = acc.max(0.0);
            }
        }
        // Stage 2.
        let mut h2 = vec![vec![0.0; t_len]; C2];
        for c2 in 0..C2 {
            for t in 0..t_len {
                let mut acc = self.conv2_b[c2];
                let start = t as isize - (K2 / 2) as isize;
                for j in 0..K2 {
                    let idx = start + j as isize;
                    if idx >= 0 && (idx as usize) < t_len {
                        let ti = idx as usize;
                        for c1 in 0..C1 {
                            acc += self.conv2_w[c2][c1][j] * h1[c1][ti];
                        }
                    }
                }
                h2[c2][t] = acc.max(0.0);
            }
        }
        // Global mean pooling.
        let mut feat = vec![0.0; FEAT];
        for c2 in 0..C2 {
            let sum: f64 = h2[c2].iter().sum();
            feat[c2] = sum / t_len as f64;
        }
        let logits: Vec<f64> = (0..self.num_classes)
            .map(|c| {
                self.dense_b[c]
                    + self.dense_w[c]
                        .iter()
                        .zip(&feat)
                        .map(|(w, f)| w * f)
                        .sum::<f64>()
            })
            .collect();
        Forward {
            h1,
            h2,
            feat,
            logits,
        }
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for row in &self.conv1_w {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.conv1_b);
        for block in &self.conv2_w {
            for row in block {
                out.extend_from_slice(row);
            }
        }
        out.extend_from_slice(&self.conv2_b);
        for row in &self.dense_w {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.dense_b);
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("parameter vector too short");
        for row in self.conv1_w.iter_mut() {
            for v in row.iter_mut() {
                *v = next();
            }
        }
        for v in self.conv1_b.iter_mut() {
            *v = next();
        }
        for block in self.conv2_w.iter_mut() {
            for row in block.iter_mut() {
                for v in row.iter_mut() {
                    *v = next();
                }
            }
        }
        for v in self.conv2_b.iter_mut() {
            *v = next();
        }
        for row in self.dense_w.iter_mut() {
            for v in row.iter_mut() {
                *v = next();
            }
        }
        for v in self.dense_b.iter_mut() {
            *v = next();
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.flatten_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                block: "reference_cnn".to_string(),
                msg: "non-finite parameter".to_string(),
            });
        }
        Ok(())
    }

    /// Fraction of labelled instances the argmax prediction gets right.
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for (i, inst) in ds.instances.iter().enumerate() {
            let label = inst.label.ok_or(Error::MissingLabel { index: i })?;
            let probs = self.predict_proba(&inst.values)?;
            if super::argmax_class(&probs) == label {
                correct += 1;
            }
            total += 1;
        }
        Ok(correct as f64 / total as f64)
    }

    pub fn to_json(&self) -> String {
        format!(
            concat!(
                "{{\"version\":{},\"num_classes\":{},\"input_len\":{},",
                "\"conv1\":{{\"weight\":{},\"bias\":{}}},",
                "\"conv2\":{{\"weight\":{},\"bias\":{}}},",
                "\"dense\":{{\"weight\":{},\"bias\":{}}}}}"
            ),
            CNN_VERSION,
            self.num_classes,
            self.input_len,
            json_f64_matrix(&self.conv1_w),
            json_f64_array(&self.conv1_b),
            json_f64_tensor3(&self.conv2_w),
            json_f64_array(&self.conv2_b),
            json_f64_matrix(&self.dense_w),
            json_f64_array(&self.dense_b),
        )
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            version: u32,
            num_classes: usize,
            input_len: usize,
            conv1: Linear,
            conv2: Conv2,
            dense: Linear,
        }
        #[derive(Deserialize)]
        struct Linear {
            weight: Vec<Vec<f64>>,
            bias: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Conv2 {
            weight: Vec<Vec<Vec<f64>>>,
            bias: Vec<f64>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.version != CNN_VERSION {
            return Err(Error::Version {
                file: source.to_string(),
                found: doc.version,
                expected: CNN_VERSION,
            });
        }
        let net = Self {
            conv1_w: doc.conv1.weight,
            conv1_b: doc.conv1.bias,
            conv2_w: doc.conv2.weight,
            conv2_b: doc.conv2.bias,
            dense_w: doc.dense.weight,
            dense_b: doc.dense.bias,
            num_classes: doc.num_classes,
            input_len: doc.input_len,
        };
        let ok = net.conv1_w.len() == C1
            && net.conv1_w.iter().all(|r| r.len() == K1)
            && net.conv1_b.len() == C1
            && net.conv2_w.len() == C2
            && net
                .conv2_w
                .iter()
                .all(|b| b.len() == C1 && b.iter().all(|r| r.len() == K2))
            && net.conv2_b.len() == C2
            && net.dense_w.len() == net.num_classes
            && net.dense_w.iter().all(|r| r.len() == FEAT)
            && net.dense_b.len() == net.num_classes;
        if !ok {
            return Err(Error::Shape(format!("{}: bad weight shapes", source)));
        }
        net.check_finite()?;
        Ok(net)
    }
}

struct Forward {
    h1: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    feat: Vec<f64>,
    logits: Vec<f64>,
}

impl Classifier for ReferenceCnn {
    fn kind(&self) -> ClassifierKind {
        ClassifierKind::Builtin
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len {
            return Err(Error::Shape(format!(
                "series length {} does not match trained length {}",
                x.len(),
                self.input_len
            )));
        }
        let fwd = self.forward(x);
        Ok(crate::sdd::softmax(&fwd.logits))
    }

    fn describe(&self) -> String {
        format!(
            "reference-cnn(classes={}, input_len={})",
            self.num_classes, self.input_len
        )
    }
}

#[derive(Debug, Clone)]
pub struct CnnTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Probability of augmenting a training instance with linear structure:
    /// an added random tent and/or short windows replaced by straight lines.
    /// Both are (near-)label-preserving and teach the net that piecewise
    /// linear structure carries no class signal, which keeps it well behaved
    /// on linearly perturbed inputs at attribution time.
    pub linear_augment_prob: f64,
    /// Weight of the neutrality term: synthetic structureless inputs
    /// (constants, lines, random piecewise-linear paths) are pushed toward
    /// the uniform prediction, so perturbation scaffolding carries no class
    /// evidence of its own.
    pub neutral_weight: f64,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            epochs: 110,
            seed: 7,
            linear_augment_prob: 0.7,
            neutral_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CnnTrainOutput {
    pub model: ReferenceCnn,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Mean cross-entropy per instance, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Train the reference CNN with Adam on mean cross-entropy. Deterministic
/// given the seed.
pub fn train_reference(
    train: &Dataset,
    test: Option<&Dataset>,
    config: &CnnTrainConfig,
) -> Result<CnnTrainOutput> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let labels: Vec<usize> = train
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| inst.label.ok_or(Error::MissingLabel { index: i }))
        .collect::<Result<_>>()?;
    let t_len = train.series_len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = ReferenceCnn::init(train.num_classes, t_len, &mut rng);
    let mut params = net.flatten_params();
    let mut adam = AdamState::new(params.len(), config.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut augment_rng = ChaCha8Rng::seed_from_u64(config.seed);
    augment_rng.set_stream(2);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut batch: Vec<(Vec<f64>, Target)> = chunk
                .iter()
                .map(|&i| {
                    let mut x = train.instances[i].values.clone();
                    if config.linear_augment_prob > 0.0
                        && augment_rng.gen_bool(config.linear_augment_prob)
                    {
                        // One transformation per instance keeps the class
                        // signal intact while covering the perturbation
                        // family.
                        match augment_rng.gen_range(0..9u8) {
                            0 => add_random_tent(&mut x, &mut augment_rng),
                            1 | 2 => {
                                for _ in 0..augment_rng.gen_range(1..=2) {
                                    replace_with_random_affine(&mut x, &mut augment_rng);
                                }
                            }
                            3 | 4 => edge_shelf_augment(&mut x, &mut augment_rng),
                            _ => coalition_style_augment(&mut x, &mut augment_rng),
                        }
                    }
                    (x, Target::Class(labels[i]))
                })
                .collect();
            if config.neutral_weight > 0.0 {
                let n_neutral = (chunk.len() / 3).max(1);
                for _ in 0..n_neutral {
                    batch.push((
                        structureless_series(t_len, &mut augment_rng),
                        Target::Uniform {
                            weight: config.neutral_weight,
                        },
                    ));
                }
            }
            let (loss, grads) = batch_grads(&net, &batch)?;
            epoch_loss += loss * chunk.len() as f64;
            adam.update(&mut params, &grads);
            net.set_params(&params);
            net.check_finite()?;
        }
        history.push(epoch_loss / train.len() as f64);
    }

    let train_accuracy = net.accuracy(train)?;
    let test_accuracy = match test {
        Some(ds) => Some(net.accuracy(ds)?),
        None => None,
    };
    Ok(CnnTrainOutput {
        model: net,
        train_accuracy,
        test_accuracy,
        loss_history: history,
    })
}

/// Add a random triangular bump (uniform position, width, signed amplitude).
fn add_random_tent(x: &mut [f64], rng: &mut ChaCha8Rng) {
    let t_len = x.len();
    let width = rng.gen_range(20..=140.min(t_len.saturating_sub(2)).max(21));
    let start = rng.gen_range(0..=t_len - width);
    let amplitude = rng.gen_range(0.5..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let half = (width - 1) as f64 / 2.0;
    for j in 0..width {
        let h = 1.0 - (j as f64 - half).abs() / half;
        x[start + j] += amplitude * h;
    }
}

/// Replace a window with a straight segment between two random levels in
/// [-3, 3]. Placement avoids high-amplitude content so class structure
/// survives; the levels are unrestricted so flat shelves and steep lines of
/// any height are seen as label-neutral.
fn replace_with_random_affine(x: &mut [f64], rng: &mut ChaCha8Rng) {
    let t_len = x.len();
    if t_len < 32 {
        return;
    }
    for _attempt in 0..12 {
        let width = rng.gen_range(20..=120.min(t_len - 2));
        let start = rng.gen_range(0..=t_len - width);
        let peak = x[start..start + width]
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        if peak > 2.8 {
            continue;
        }
        let u = rng.gen_range(-3.0..3.0);
        let v = if rng.gen_bool(0.5) {
            u
        } else {
            rng.gen_range(-3.0..3.0)
        };
        for j in 0..width {
            x[start + j] = u + (v - u) * j as f64 / (width - 1) as f64;
        }
        return;
    }
}

/// Replace a prefix or suffix with a flat shelf at a random level, the way an
/// edge-touching masked run is rebuilt at attribution time (whose level is
/// whatever value anchors it). Skipped when the span holds high-amplitude
/// content, so the class structure stays intact.
fn edge_shelf_augment(x: &mut [f64], rng: &mut ChaCha8Rng) {
    let t_len = x.len();
    if t_len < 32 {
        return;
    }
    for _attempt in 0..8 {
        let span = rng.gen_range(10..=(3 * t_len / 4));
        let prefix = rng.gen_bool(0.5);
        let range = if prefix { 0..span } else { t_len - span..t_len };
        let peak = x[range.clone()].iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if peak > 2.8 {
            continue;
        }
        let level = rng.gen_range(-3.0..3.0);
        for t in range {
            x[t] = level;
        }
        return;
    }
}

/// Rewrite the instance the way attribution-time perturbation will present
/// it: keep every high-amplitude run (dilated), keep a few random background
/// windows, and replace everything else with straight lines. Label-preserving
/// whenever class structure lives in the high-amplitude runs.
fn coalition_style_augment(x: &mut Vec<f64>, rng: &mut ChaCha8Rng) {
    let t_len = x.len();
    if t_len < 16 {
        return;
    }
    let mut keep = vec![false; t_len];
    for t in 0..t_len {
        if x[t].abs() >= 2.0 {
            let lo = t.saturating_sub(4);
            let hi = (t + 5).min(t_len);
            for k in keep.iter_mut().take(hi).skip(lo) {
                *k = true;
            }
        }
    }
    for _ in 0..rng.gen_range(2..=5) {
        let width = if rng.gen_bool(0.7) {
            rng.gen_range(2..=12.min(t_len - 1))
        } else {
            rng.gen_range(13..=40.min(t_len - 1))
        };
        let start = rng.gen_range(0..=t_len - width);
        for k in keep.iter_mut().take(start + width).skip(start) {
            *k = true;
        }
    }
    if keep.iter().all(|&k| !k) || keep.iter().all(|&k| k) {
        return;
    }
    *x = crate::attribution::perturb_linear(x, &crate::data::PerturbationMask { bits: keep });
}

/// Training target: a class label or the uniform distribution (weighted).
#[derive(Debug, Clone, Copy)]
enum Target {
    Class(usize),
    Uniform { weight: f64 },
}

/// A random structureless series: a piecewise-linear path between a few
/// random knots, or a piecewise-constant step profile (the shape the
/// perturbation scaffolding takes around kept windows). These carry no class
/// evidence by construction.
fn structureless_series(t_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let knots = rng.gen_range(2..=5usize);
    let mut pos: Vec<usize> = vec![0, t_len - 1];
    for _ in 0..knots - 2 {
        pos.push(rng.gen_range(1..t_len - 1));
    }
    pos.sort_unstable();
    pos.dedup();
    let levels: Vec<f64> = pos.iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut x = vec![0.0; t_len];
    if rng.gen_bool(0.4) {
        // Step profile: hold each level until the next knot.
        for w in 0..pos.len() - 1 {
            for t in pos[w]..=pos[w + 1] {
                x[t] = levels[w];
            }
        }
    } else {
        for w in 0..pos.len() - 1 {
            let (a, b) = (pos[w], pos[w + 1]);
            let (la, lb) = (levels[w], levels[w + 1]);
            for t in a..=b {
                let frac = if b == a { 0.0 } else { (t - a) as f64 / (b - a) as f64 };
                x[t] = la + frac * (lb - la);
            }
        }
    }
    x
}

/// Mean cross-entropy over the batch plus gradients (flattened).
fn batch_grads(net: &ReferenceCnn, batch: &[(Vec<f64>, Target)]) -> Result<(f64, Vec<f64>)> {
    let k = batch.len() as f64;
    let mut g = ReferenceCnn::zeros(net.num_classes, net.input_len);
    let mut loss = 0.0;
    for (x, target) in batch {
        let target = *target;
        let fwd = net.forward(x);
        let t_len = x.len();
        let probs = crate::sdd::softmax(&fwd.logits);
        let c_count = net.num_classes as f64;
        let (sample_weight, target_dist): (f64, Vec<f64>) = match target {
            Target::Class(y) => {
                loss -= probs[y].max(1e-12).ln();
                let mut dist = vec![0.0; net.num_classes];
                dist[y] = 1.0;
                (1.0, dist)
            }
            Target::Uniform { weight } => {
                let ce: f64 = probs
                    .iter()
                    .map(|p| -(1.0 / c_count) * p.max(1e-12).ln())
                    .sum();
                loss += weight * ce;
                (weight, vec![1.0 / c_count; net.num_classes])
            }
        };

        // Head backward (mean reduction).
        let mut d_feat = vec![0.0; FEAT];
        for c in 0..net.num_classes {
            let d_logit = sample_weight * (probs[c] - target_dist[c]) / k;
            g.dense_b[c] += d_logit;
            for f in 0..FEAT {
                g.dense_w[c][f] += d_logit * fwd.feat[f];
                d_feat[f] += net.dense_w[c][f] * d_logit;
            }
        }

        // Pooling backward into stage-2 activations.
        let mut d_h2 = vec![vec![0.0; t_len]; C2];
        for c2 in 0..C2 {
            let dm = d_feat[c2] / t_len as f64;
            for t in 0..t_len {
                d_h2[c2][t] += dm;
            }
        }

        // Stage 2 backward (ReLU then conv).
        let mut d_h1 = vec![vec![0.0; t_len]; C1];
        for c2 in 0..C2 {
            for t in 0..t_len {
                if fwd.h2[c2][t] <= 0.0 {
                    continue;
                }
                let dz = d_h2[c2][t];
                if dz == 0.0 {
                    continue;
                }
                g.conv2_b[c2] += dz;
                let start = t as isize - (K2 / 2) as isize;
                for j in 0..K2 {
                    let idx = start + j as isize;
                    if idx >= 0 && (idx as usize) < t_len {
                        let ti = idx as usize;
                        for c1 in 0..C1 {
                            g.conv2_w[c2][c1][j] += dz * fwd.h1[c1][ti];
                            d_h1[c1][ti] += net.conv2_w[c2][c1][j] * dz;
                        }
                    }
                }
            }
        }

        // Stage 1 backward.
        for c1 in 0..C1 {
            for t in 0..t_len {
                if fwd.h1[c1][t] <= 0.0 {
                    continue;
                }
                let dz = d_h1[c1][t];
                if dz == 0.0 {
                    continue;
                }
                g.conv1_b[c1] += dz;
                let start = t as isize - (K1 / 2) as isize;
                for j in 0..K1 {
                    let idx = start + j as isize;
                    if idx >= 0 && (idx as usize) < t_len {
                        g.conv1_w[c1][j] += dz * x[idx as usize];
                    }
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numerical {
            block: "reference_cnn".to_string(),
            msg: format!("loss is {}", loss),
        });
    }
    Ok((loss / k, g.flatten_params()))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    lr: f64,
}

impl AdamState {
    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}
