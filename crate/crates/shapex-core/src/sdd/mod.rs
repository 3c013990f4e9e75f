//! Shapelet learning: descriptor/detector layer, patch-attention shapelet
//! encoder, losses, and the trainer.
//!
//! A [`ShapeletBank`] holds `N` learnable shapelets of length `L` plus the
//! encoder and classification-head weights. The *descriptor* convolves the
//! encoded shapelets over an input (same padding), the softmax across the
//! shapelet axis yields an [`ActivationMap`], and the *detector* extracts the
//! best-matching window per shapelet.

mod grad;
mod loss;
mod serial;
mod train;

pub use grad::BankGrads;
pub use loss::{loss_cls, loss_div, loss_match, total_loss, total_loss_with_grads};
pub use serial::{bank_from_json, bank_to_json};
pub use train::{train, TrainConfig, TrainOutput};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// How per-shapelet activations are pooled over time for the class head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Max,
    Mean,
}

/// Shapelet-bank hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeletHyper {
    /// Number of shapelets.
    pub n: usize,
    /// Shapelet length in timesteps.
    pub l: usize,
    /// Patch length for the encoder; must divide `l`.
    pub patch_len: usize,
    /// Attention heads; must divide `d_model`.
    pub num_heads: usize,
    /// Encoder embedding width.
    pub d_model: usize,
    /// Classes of the training task.
    pub num_classes: usize,
    pub pooling: Pooling,
    /// Series length the bank was trained on (0 = unconstrained).
    pub trained_t: usize,
}

impl ShapeletHyper {
    /// Defaults for a series length: N=6, L ≈ T/10 rounded to a multiple of 4
    /// (at least 8), P = L/4, H=2, d_model=16.
    pub fn defaults(series_len: usize, num_classes: usize) -> Self {
        let l0 = ((series_len as f64) / 10.0).round() as usize;
        let l0 = l0.max(8);
        // Round to nearest multiple of 4 so patch_len = L/4 is integral.
        let l = (((l0 + 2) / 4) * 4).max(8);
        Self {
            n: 6,
            l,
            patch_len: l / 4,
            num_heads: 2,
            d_model: 16,
            num_classes,
            pooling: Pooling::Max,
            trained_t: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn num_patches(&self) -> usize {
        self.l / self.patch_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "need at least 2 shapelets, got {}",
                self.n
            )));
        }
        if self.l == 0 {
            return Err(Error::Config("shapelet length must be positive".into()));
        }
        if self.patch_len == 0 || self.l % self.patch_len != 0 {
            return Err(Error::Config(format!(
                "shapelet length {} not divisible by patch length {}",
                self.l, self.patch_len
            )));
        }
        if self.num_heads == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.num_heads
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        Ok(())
    }
}

/// Patch-attention encoder weights. Attention projections carry no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    /// `[d_model][patch_len]`
    pub patch_embed_w: Vec<Vec<f64>>,
    /// `[d_model]`
    pub patch_embed_b: Vec<f64>,
    /// Per head: `[head_dim][d_model]`
    pub w_q: Vec<Vec<Vec<f64>>>,
    pub w_k: Vec<Vec<Vec<f64>>>,
    pub w_v: Vec<Vec<Vec<f64>>>,
    /// `[d_model][d_model]`, applied to the concatenated heads.
    pub w_o: Vec<Vec<f64>>,
    /// `[patch_len][d_model]`
    pub out_map_w: Vec<Vec<f64>>,
    /// `[patch_len]`
    pub out_map_b: Vec<f64>,
}

impl EncoderWeights {
    pub fn zeros(hyper: &ShapeletHyper) -> Self {
        let dk = hyper.head_dim();
        Self {
            patch_embed_w: vec![vec![0.0; hyper.patch_len]; hyper.d_model],
            patch_embed_b: vec![0.0; hyper.d_model],
            w_q: vec![vec![vec![0.0; hyper.d_model]; dk]; hyper.num_heads],
            w_k: vec![vec![vec![0.0; hyper.d_model]; dk]; hyper.num_heads],
            w_v: vec![vec![vec![0.0; hyper.d_model]; dk]; hyper.num_heads],
            w_o: vec![vec![0.0; hyper.d_model]; hyper.d_model],
            out_map_w: vec![vec![0.0; hyper.d_model]; hyper.patch_len],
            out_map_b: vec![0.0; hyper.patch_len],
        }
    }

    fn init_random(hyper: &ShapeletHyper, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Self::zeros(hyper);
        fill_uniform(&mut w.patch_embed_w, hyper.patch_len, rng);
        for h in 0..hyper.num_heads {
            fill_uniform(&mut w.w_q[h], hyper.d_model, rng);
            fill_uniform(&mut w.w_k[h], hyper.d_model, rng);
            fill_uniform(&mut w.w_v[h], hyper.d_model, rng);
        }
        fill_uniform(&mut w.w_o, hyper.d_model, rng);
        fill_uniform(&mut w.out_map_w, hyper.d_model, rng);
        w
    }
}

fn fill_uniform(m: &mut [Vec<f64>], fan_in: usize, rng: &mut ChaCha8Rng) {
    let a = 1.0 / (fan_in as f64).sqrt();
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.gen_range(-a..a);
        }
    }
}

/// Learnable shapelets plus encoder and classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeletBank {
    /// Raw shapelet parameters `[n][l]`; the encoder refines these.
    pub raw_shapelets: Vec<Vec<f64>>,
    /// Convolution bias `[n]`.
    pub bias: Vec<f64>,
    pub encoder: EncoderWeights,
    /// Class head over pooled activations: `[num_classes][n]`.
    pub proj_w: Vec<Vec<f64>>,
    /// `[num_classes]`
    pub proj_b: Vec<f64>,
    pub hyper: ShapeletHyper,
}

impl ShapeletBank {
    /// Zero-weight bank (encoder acts as the identity through the residual).
    pub fn zeros(hyper: ShapeletHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            raw_shapelets: vec![vec![0.0; hyper.l]; hyper.n],
            bias: vec![0.0; hyper.n],
            encoder: EncoderWeights::zeros(&hyper),
            proj_w: vec![vec![0.0; hyper.n]; hyper.num_classes],
            proj_b: vec![0.0; hyper.num_classes],
            hyper,
        })
    }

    /// Seeded initialization: shapelets are random training subsequences plus
    /// Gaussian noise (sigma 0.01); encoder and head get small uniform weights.
    pub fn init(hyper: ShapeletHyper, ds: &Dataset, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let t = ds.series_len();
        if t < hyper.l {
            return Err(Error::Config(format!(
                "shapelet length {} exceeds series length {}",
                hyper.l, t
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bank = Self::zeros(hyper.clone())?;
        for s in bank.raw_shapelets.iter_mut() {
            let inst = rng.gen_range(0..ds.len());
            let start = rng.gen_range(0..=t - hyper.l);
            for (j, v) in s.iter_mut().enumerate() {
                let noise: f64 = sample_standard_normal(&mut rng) * 0.01;
                *v = ds.instances[inst].values[start + j] + noise;
            }
        }
        bank.encoder = EncoderWeights::init_random(&hyper, &mut rng);
        fill_uniform(&mut bank.proj_w, hyper.n, &mut rng);
        Ok(bank)
    }

    /// Check every parameter is finite, naming the offending block.
    pub fn check_finite(&self) -> Result<()> {
        for (name, block) in self.param_blocks() {
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    block: name.to_string(),
                    msg: "non-finite parameter".to_string(),
                });
            }
        }
        Ok(())
    }

    fn param_blocks(&self) -> Vec<(&'static str, Vec<f64>)> {
        let e = &self.encoder;
        vec![
            ("raw_shapelets", flat2(&self.raw_shapelets)),
            ("bias", self.bias.clone()),
            ("encoder.patch_embed", {
                let mut v = flat2(&e.patch_embed_w);
                v.extend_from_slice(&e.patch_embed_b);
                v
            }),
            ("encoder.attention", {
                let mut v = flat3(&e.w_q);
                v.extend(flat3(&e.w_k));
                v.extend(flat3(&e.w_v));
                v.extend(flat2(&e.w_o));
                v
            }),
            ("encoder.out_map", {
                let mut v = flat2(&e.out_map_w);
                v.extend_from_slice(&e.out_map_b);
                v
            }),
            ("projection", {
                let mut v = flat2(&self.proj_w);
                v.extend_from_slice(&self.proj_b);
                v
            }),
        ]
    }

    /// Flatten all learnable parameters in canonical order.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        push2(&mut out, &self.raw_shapelets);
        out.extend_from_slice(&self.bias);
        let e = &self.encoder;
        push2(&mut out, &e.patch_embed_w);
        out.extend_from_slice(&e.patch_embed_b);
        push3(&mut out, &e.w_q);
        push3(&mut out, &e.w_k);
        push3(&mut out, &e.w_v);
        push2(&mut out, &e.w_o);
        push2(&mut out, &e.out_map_w);
        out.extend_from_slice(&e.out_map_b);
        push2(&mut out, &self.proj_w);
        out.extend_from_slice(&self.proj_b);
        out
    }

    /// Inverse of [`ShapeletBank::flatten_params`].
    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        pull2(&mut it, &mut self.raw_shapelets);
        pull1(&mut it, &mut self.bias);
        let e = &mut self.encoder;
        pull2(&mut it, &mut e.patch_embed_w);
        pull1(&mut it, &mut e.patch_embed_b);
        pull3(&mut it, &mut e.w_q);
        pull3(&mut it, &mut e.w_k);
        pull3(&mut it, &mut e.w_v);
        pull2(&mut it, &mut e.w_o);
        pull2(&mut it, &mut e.out_map_w);
        pull1(&mut it, &mut e.out_map_b);
        pull2(&mut it, &mut self.proj_w);
        pull1(&mut it, &mut self.proj_b);
        assert!(it.next().is_none(), "parameter vector too long");
    }
}

fn flat2(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn flat3(t: &[Vec<Vec<f64>>]) -> Vec<f64> {
    t.iter().flat_map(|m| m.iter().flatten()).copied().collect()
}

fn push2(out: &mut Vec<f64>, m: &[Vec<f64>]) {
    for row in m {
        out.extend_from_slice(row);
    }
}

fn push3(out: &mut Vec<f64>, t: &[Vec<Vec<f64>>]) {
    for m in t {
        push2(out, m);
    }
}

fn pull1(it: &mut impl Iterator<Item = f64>, v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = it.next().expect("parameter vector too short");
    }
}

fn pull2(it: &mut impl Iterator<Item = f64>, m: &mut [Vec<f64>]) {
    for row in m.iter_mut() {
        pull1(it, row);
    }
}

fn pull3(it: &mut impl Iterator<Item = f64>, t: &mut [Vec<Vec<f64>>]) {
    for m in t.iter_mut() {
        pull2(it, m);
    }
}

/// Draw from N(0, 1) via Box-Muller so results depend only on the ChaCha stream.
pub(crate) fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Row-stochastic alignment strengths, `rows[t][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub rows: Vec<Vec<f64>>,
}

impl ActivationMap {
    pub fn series_len(&self) -> usize {
        self.rows.len()
    }

    pub fn num_shapelets(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    /// Peak position of shapelet `n` (smallest index on ties).
    pub fn peak(&self, n: usize) -> usize {
        let mut best_t = 0;
        let mut best = f64::NEG_INFINITY;
        for (t, row) in self.rows.iter().enumerate() {
            if row[n] > best {
                best = row[n];
                best_t = t;
            }
        }
        best_t
    }
}

/// Sinusoidal positional encoding for patch index `pos`.
pub(crate) fn positional_encoding(pos: usize, d_model: usize) -> Vec<f64> {
    let mut pe = vec![0.0; d_model];
    for i in 0..d_model {
        let exponent = (2 * (i / 2)) as f64 / d_model as f64;
        let angle = pos as f64 / 10000f64.powf(exponent);
        pe[i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
    }
    pe
}

/// Intermediate encoder state for one shapelet, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    /// Embedded patches `[k][d_model]`.
    pub e: Vec<Vec<f64>>,
    /// Per head `[h][k][head_dim]`.
    pub q: Vec<Vec<Vec<f64>>>,
    pub k: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<Vec<f64>>>,
    /// Attention weights `[h][i][j]`.
    pub alpha: Vec<Vec<Vec<f64>>>,
    /// Concatenated heads `[k][d_model]`.
    pub cat: Vec<Vec<f64>>,
    /// Output-projected context `[k][d_model]`.
    pub att: Vec<Vec<f64>>,
}

pub(crate) fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Encode one raw shapelet; returns the effective shapelet and the cache.
pub(crate) fn encode_one(
    raw: &[f64],
    enc: &EncoderWeights,
    hyper: &ShapeletHyper,
) -> (Vec<f64>, EncoderCache) {
    let p = hyper.patch_len;
    let k_patches = hyper.num_patches();
    let dk = hyper.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut e = Vec::with_capacity(k_patches);
    for kp in 0..k_patches {
        let patch = &raw[kp * p..(kp + 1) * p];
        let mut emb = matvec(&enc.patch_embed_w, patch);
        let pe = positional_encoding(kp, hyper.d_model);
        for i in 0..hyper.d_model {
            emb[i] += enc.patch_embed_b[i] + pe[i];
        }
        e.push(emb);
    }

    let mut q = Vec::with_capacity(hyper.num_heads);
    let mut kk = Vec::with_capacity(hyper.num_heads);
    let mut v = Vec::with_capacity(hyper.num_heads);
    let mut alpha = Vec::with_capacity(hyper.num_heads);
    let mut cat = vec![vec![0.0; hyper.d_model]; k_patches];
    for h in 0..hyper.num_heads {
        let qh: Vec<Vec<f64>> = e.iter().map(|ei| matvec(&enc.w_q[h], ei)).collect();
        let kh: Vec<Vec<f64>> = e.iter().map(|ei| matvec(&enc.w_k[h], ei)).collect();
        let vh: Vec<Vec<f64>> = e.iter().map(|ei| matvec(&enc.w_v[h], ei)).collect();
        let mut ah = Vec::with_capacity(k_patches);
        for i in 0..k_patches {
            let scores: Vec<f64> = (0..k_patches)
                .map(|j| {
                    scale
                        * qh[i]
                            .iter()
                            .zip(&kh[j])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                })
                .collect();
            ah.push(softmax(&scores));
        }
        for i in 0..k_patches {
            for d in 0..dk {
                let mut ctx = 0.0;
                for j in 0..k_patches {
                    ctx += ah[i][j] * vh[j][d];
                }
                cat[i][h * dk + d] = ctx;
            }
        }
        q.push(qh);
        kk.push(kh);
        v.push(vh);
        alpha.push(ah);
    }

    let att: Vec<Vec<f64>> = cat.iter().map(|c| matvec(&enc.w_o, c)).collect();

    let mut eff = raw.to_vec();
    for kp in 0..k_patches {
        let z = matvec(&enc.out_map_w, &att[kp]);
        for r in 0..p {
            eff[kp * p + r] += z[r] + enc.out_map_b[r];
        }
    }

    (
        eff,
        EncoderCache {
            e,
            q,
            k: kk,
            v,
            alpha,
            cat,
            att,
        },
    )
}

/// Effective shapelets: each raw shapelet refined by the patch-attention
/// encoder, with a residual connection back to the raw parameters.
pub fn encode_shapelets(bank: &ShapeletBank) -> Result<Vec<Vec<f64>>> {
    bank.hyper.validate()?;
    Ok(bank
        .raw_shapelets
        .iter()
        .map(|raw| encode_one(raw, &bank.encoder, &bank.hyper).0)
        .collect())
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// Similarity map `I[t][n]`: cross-correlation of each shapelet with the
/// series, zero-padded so the output has exactly `T` rows.
pub fn describe(x: &[f64], shapelets: &[Vec<f64>], bias: &[f64]) -> Vec<Vec<f64>> {
    let t_len = x.len();
    let n = shapelets.len();
    let mut out = vec![vec![0.0; n]; t_len];
    for (ni, s) in shapelets.iter().enumerate() {
        let l = s.len();
        let half = l / 2;
        for t in 0..t_len {
            let mut acc = bias[ni];
            let start = t as isize - half as isize;
            for (j, &w) in s.iter().enumerate() {
                let idx = start + j as isize;
                if idx >= 0 && (idx as usize) < t_len {
                    acc += x[idx as usize] * w;
                }
            }
            out[t][ni] = acc;
        }
    }
    out
}

/// Softmax across the shapelet axis at every timestep.
pub fn activate(similarity: &[Vec<f64>]) -> ActivationMap {
    ActivationMap {
        rows: similarity.iter().map(|row| softmax(row)).collect(),
    }
}

/// Peak position for shapelet `n` and the length-`L` window of `x` centred
/// there, zero-padded where the window leaves the series.
pub fn detect(x: &[f64], a: &ActivationMap, n: usize, l: usize) -> (usize, Vec<f64>) {
    let t_star = a.peak(n);
    (t_star, window_at(x, t_star, l))
}

/// Length-`l` window of `x` starting at `t_star - l/2`, zero-padded.
pub(crate) fn window_at(x: &[f64], t_star: usize, l: usize) -> Vec<f64> {
    let start = t_star as isize - (l / 2) as isize;
    (0..l)
        .map(|j| {
            let idx = start + j as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny_hyper() -> ShapeletHyper {
        ShapeletHyper {
            n: 2,
            l: 8,
            patch_len: 4,
            num_heads: 2,
            d_model: 8,
            num_classes: 2,
            pooling: Pooling::Max,
            trained_t: 0,
        }
    }

    #[test]
    fn zero_encoder_is_identity() {
        let mut bank = ShapeletBank::zeros(tiny_hyper()).unwrap();
        bank.raw_shapelets = vec![
            vec![1.0, -2.0, 3.0, 0.5, -0.5, 2.0, 1.5, -1.0],
            vec![0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0],
        ];
        let eff = encode_shapelets(&bank).unwrap();
        assert_eq!(eff, bank.raw_shapelets);
    }

    #[test]
    fn single_patch_single_head_attends_to_itself() {
        // With P = L and one head, softmax over one key is 1, so the context
        // equals the value projection of the single patch.
        let hyper = ShapeletHyper {
            n: 2,
            l: 4,
            patch_len: 4,
            num_heads: 1,
            d_model: 4,
            num_classes: 2,
            pooling: Pooling::Max,
            trained_t: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut bank = ShapeletBank::zeros(hyper.clone()).unwrap();
        bank.encoder = EncoderWeights::init_random(&hyper, &mut rng);
        for s in bank.raw_shapelets.iter_mut() {
            for v in s.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let raw = bank.raw_shapelets[0].clone();
        let (_, cache) = encode_one(&raw, &bank.encoder, &hyper);
        assert_eq!(cache.alpha[0][0], vec![1.0]);
        let value = matvec(&bank.encoder.w_v[0], &cache.e[0]);
        for (a, b) in cache.cat[0].iter().zip(&value) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Straight-line reimplementation of the encoder used as an oracle.
    fn encode_oracle(raw: &[f64], enc: &EncoderWeights, hy: &ShapeletHyper) -> Vec<f64> {
        let p = hy.patch_len;
        let kp = hy.l / p;
        let dk = hy.d_model / hy.num_heads;
        // Embed.
        let mut e = Vec::new();
        for i in 0..kp {
            let mut emb = vec![0.0; hy.d_model];
            for (d, row) in enc.patch_embed_w.iter().enumerate() {
                for (j, w) in row.iter().enumerate() {
                    emb[d] += w * raw[i * p + j];
                }
                emb[d] += enc.patch_embed_b[d];
                emb[d] += positional_encoding(i, hy.d_model)[d];
            }
            e.push(emb);
        }
        // Attention.
        let mut cat = vec![vec![0.0; hy.d_model]; kp];
        for h in 0..hy.num_heads {
            for i in 0..kp {
                let qi = matvec(&enc.w_q[h], &e[i]);
                let mut scores = vec![0.0; kp];
                for j in 0..kp {
                    let kj = matvec(&enc.w_k[h], &e[j]);
                    scores[j] = qi.iter().zip(&kj).map(|(a, b)| a * b).sum::<f64>()
                        / (dk as f64).sqrt();
                }
                let al = softmax(&scores);
                for j in 0..kp {
                    let vj = matvec(&enc.w_v[h], &e[j]);
                    for d in 0..dk {
                        cat[i][h * dk + d] += al[j] * vj[d];
                    }
                }
            }
        }
        // Output projection, map back, residual.
        let mut eff = raw.to_vec();
        for i in 0..kp {
            let att = matvec(&enc.w_o, &cat[i]);
            let z = matvec(&enc.out_map_w, &att);
            for r in 0..p {
                eff[i * p + r] += z[r] + enc.out_map_b[r];
            }
        }
        eff
    }

    #[test]
    fn encoder_matches_oracle() {
        let hyper = tiny_hyper();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut bank = ShapeletBank::zeros(hyper.clone()).unwrap();
        bank.encoder = EncoderWeights::init_random(&hyper, &mut rng);
        for s in bank.raw_shapelets.iter_mut() {
            for v in s.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        let eff = encode_shapelets(&bank).unwrap();
        for (n, raw) in bank.raw_shapelets.iter().enumerate() {
            let want = encode_oracle(raw, &bank.encoder, &hyper);
            for (a, b) in eff[n].iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "shapelet {n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn describe_zero_signal_returns_bias() {
        let x = vec![0.0; 5];
        let shapelets = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 1.0]];
        let i = describe(&x, &shapelets, &[0.5, -1.0]);
        for row in &i {
            assert_eq!(row, &vec![0.5, -1.0]);
        }
    }

    #[test]
    fn describe_hand_convolution() {
        let x = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        let shapelets = vec![vec![1.0, 1.0, 1.0]];
        let i = describe(&x, &shapelets, &[0.0]);
        let col: Vec<f64> = i.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    fn describe_bruteforce(x: &[f64], shapelets: &[Vec<f64>], bias: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; shapelets.len()]; x.len()];
        for t in 0..x.len() {
            for (n, s) in shapelets.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..s.len() {
                    let idx = t as isize - (s.len() / 2) as isize + j as isize;
                    let xv = if idx >= 0 && (idx as usize) < x.len() {
                        x[idx as usize]
                    } else {
                        0.0
                    };
                    acc += xv * s[j];
                }
                out[t][n] = acc + bias[n];
            }
        }
        out
    }

    proptest! {
        #[test]
        fn describe_matches_bruteforce(
            seed in 0u64..1000,
            t_len in 1usize..256,
            l in 1usize..17,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let n = rng.gen_range(2usize..=8);
            let shapelets: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let bias: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = describe(&x, &shapelets, &bias);
            let want = describe_bruteforce(&x, &shapelets, &bias);
            for (rg, rw) in got.iter().zip(&want) {
                for (a, b) in rg.iter().zip(rw) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn activate_rows_sum_to_one(
            seed in 0u64..1000,
            t_len in 1usize..64,
            n in 2usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sim: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect())
                .collect();
            let a = activate(&sim);
            for row in &a.rows {
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
                // Extreme logit gaps saturate in f64, so only the closed
                // bounds hold over this range.
                for &v in row {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn activate_is_strictly_interior_for_moderate_logits(
            seed in 0u64..1000,
            t_len in 1usize..32,
            n in 2usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sim: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..n).map(|_| rng.gen_range(-15.0..15.0)).collect())
                .collect();
            let a = activate(&sim);
            for row in &a.rows {
                for &v in row {
                    prop_assert!(v > 0.0 && v < 1.0);
                }
            }
        }
    }

    #[test]
    fn activate_equal_logits_are_uniform() {
        for c in [-7.0, 0.0, 123.0] {
            let a = activate(&[vec![c, c]]);
            assert!((a.rows[0][0] - 0.5).abs() < 1e-15);
            assert!((a.rows[0][1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn activate_closed_form() {
        let a = activate(&[vec![3f64.ln(), 0.0]]);
        assert!((a.rows[0][0] - 0.75).abs() < 1e-12);
        assert!((a.rows[0][1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn activate_large_logits_do_not_overflow() {
        let a = activate(&[vec![1000.0, 0.0]]);
        assert!(a.rows[0][0] > 1.0 - 1e-12);
        assert!(a.rows[0][1] < 1e-12);
        assert!(a.rows[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn detect_window_arithmetic() {
        let x: Vec<f64> = (0..100).map(|v| v as f64).collect();
        let mut rows = vec![vec![0.0, 1.0]; 100];
        for (t, row) in rows.iter_mut().enumerate() {
            row[0] = if t == 10 { 1.0 } else { 0.0 };
        }
        let a = ActivationMap { rows };
        let (t_star, win) = detect(&x, &a, 0, 4);
        assert_eq!(t_star, 10);
        assert_eq!(win, vec![8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn detect_pads_at_left_edge() {
        let x = vec![5.0, 6.0, 7.0, 8.0];
        let mut rows = vec![vec![0.0]; 4];
        rows[0][0] = 1.0;
        let a = ActivationMap { rows };
        let (t_star, win) = detect(&x, &a, 0, 4);
        assert_eq!(t_star, 0);
        assert_eq!(win, vec![0.0, 0.0, 5.0, 6.0]);
    }

    #[test]
    fn detect_breaks_ties_to_smallest_index() {
        let mut rows = vec![vec![0.1]; 10];
        rows[3][0] = 0.9;
        rows[7][0] = 0.9;
        let a = ActivationMap { rows };
        let x = vec![0.0; 10];
        let (t_star, _) = detect(&x, &a, 0, 2);
        assert_eq!(t_star, 3);
    }

    #[test]
    fn detect_tie_property_smallest_of_k_maxima() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t_len = rng.gen_range(3usize..40);
            let k = rng.gen_range(1usize..=t_len);
            let mut rows = vec![vec![rng.gen_range(0.0..0.5)]; t_len];
            let mut maxima: Vec<usize> = (0..t_len).collect();
            // Fisher-Yates prefix shuffle to pick k distinct positions.
            for i in 0..k {
                let j = rng.gen_range(i..t_len);
                maxima.swap(i, j);
            }
            let chosen = &mut maxima[..k];
            chosen.sort_unstable();
            for &t in chosen.iter() {
                rows[t][0] = 0.9;
            }
            let a = ActivationMap { rows };
            let (t_star, _) = detect(&vec![0.0; t_len], &a, 0, 2);
            assert_eq!(t_star, chosen[0]);
        }
    }

    #[test]
    fn flatten_set_round_trip() {
        let hyper = tiny_hyper();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bank = ShapeletBank::zeros(hyper.clone()).unwrap();
        bank.encoder = EncoderWeights::init_random(&hyper, &mut rng);
        let flat = bank.flatten_params();
        let mut other = ShapeletBank::zeros(hyper).unwrap();
        other.set_params(&flat);
        assert_eq!(other, bank);
        assert_eq!(other.flatten_params(), flat);
    }

    #[test]
    fn hyper_defaults_are_consistent() {
        let h = ShapeletHyper::defaults(200, 2);
        assert_eq!(h.l, 20);
        assert_eq!(h.patch_len, 5);
        assert_eq!(h.l % h.patch_len, 0);
        h.validate().unwrap();
        let h = ShapeletHyper::defaults(10, 2);
        assert_eq!(h.l, 8);
        h.validate().unwrap();
    }
}
