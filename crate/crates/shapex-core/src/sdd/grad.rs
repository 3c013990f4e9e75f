//! Gradient accumulators and the encoder backward pass.

use super::{EncoderCache, EncoderWeights, ShapeletHyper};
use crate::error::{Error, Result};

/// Gradients for every learnable parameter of a [`super::ShapeletBank`],
/// with the same shapes and flattening order as the bank itself.
#[derive(Debug, Clone)]
pub struct BankGrads {
    pub raw_shapelets: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub patch_embed_w: Vec<Vec<f64>>,
    pub patch_embed_b: Vec<f64>,
    pub w_q: Vec<Vec<Vec<f64>>>,
    pub w_k: Vec<Vec<Vec<f64>>>,
    pub w_v: Vec<Vec<Vec<f64>>>,
    pub w_o: Vec<Vec<f64>>,
    pub out_map_w: Vec<Vec<f64>>,
    pub out_map_b: Vec<f64>,
    pub proj_w: Vec<Vec<f64>>,
    pub proj_b: Vec<f64>,
}

impl BankGrads {
    pub fn zeros(hyper: &ShapeletHyper) -> Self {
        let dk = hyper.head_dim();
        Self {
            raw_shapelets: vec![vec![0.0; hyper.l]; hyper.n],
            bias: vec![0.0; hyper.n],
            patch_embed_w: vec![vec![0.0; hyper.patch_len]; hyper.d_model],
            patch_embed_b: vec![0.0; hyper.d_model],
            w_q: vec![vec![vec![0.0; hyper.d_model]; dk]; hyper.num_heads],
            w_k: vec![vec![vec![0.0; hyper.d_model]; dk]; hyper.num_heads],
            w_v: vec![vec![vec![0.0; hyper.d_model]; dk]; hyper.num_heads],
            w_o: vec![vec![0.0; hyper.d_model]; hyper.d_model],
            out_map_w: vec![vec![0.0; hyper.d_model]; hyper.patch_len],
            out_map_b: vec![0.0; hyper.patch_len],
            proj_w: vec![vec![0.0; hyper.n]; hyper.num_classes],
            proj_b: vec![0.0; hyper.num_classes],
        }
    }

    /// Same canonical order as [`ShapeletBank::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        push2(&mut out, &self.raw_shapelets);
        out.extend_from_slice(&self.bias);
        push2(&mut out, &self.patch_embed_w);
        out.extend_from_slice(&self.patch_embed_b);
        push3(&mut out, &self.w_q);
        push3(&mut out, &self.w_k);
        push3(&mut out, &self.w_v);
        push2(&mut out, &self.w_o);
        push2(&mut out, &self.out_map_w);
        out.extend_from_slice(&self.out_map_b);
        push2(&mut out, &self.proj_w);
        out.extend_from_slice(&self.proj_b);
        out
    }

    /// Error if any block holds a non-finite gradient.
    pub fn check_finite(&self) -> Result<()> {
        let blocks: [(&str, Vec<f64>); 6] = [
            ("raw_shapelets", self.raw_shapelets.iter().flatten().copied().collect()),
            ("bias", self.bias.clone()),
            ("encoder.patch_embed", {
                let mut v: Vec<f64> = self.patch_embed_w.iter().flatten().copied().collect();
                v.extend_from_slice(&self.patch_embed_b);
                v
            }),
            ("encoder.attention", {
                let mut v: Vec<f64> = self.w_q.iter().flat_map(|m| m.iter().flatten()).copied().collect();
                v.extend(self.w_k.iter().flat_map(|m| m.iter().flatten()).copied());
                v.extend(self.w_v.iter().flat_map(|m| m.iter().flatten()).copied());
                v.extend(self.w_o.iter().flatten().copied());
                v
            }),
            ("encoder.out_map", {
                let mut v: Vec<f64> = self.out_map_w.iter().flatten().copied().collect();
                v.extend_from_slice(&self.out_map_b);
                v
            }),
            ("projection", {
                let mut v: Vec<f64> = self.proj_w.iter().flatten().copied().collect();
                v.extend_from_slice(&self.proj_b);
                v
            }),
        ];
        for (name, vals) in blocks {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    block: name.to_string(),
                    msg: "non-finite gradient".to_string(),
                });
            }
        }
        Ok(())
    }
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

/// Backpropagate `d_eff` (gradient at one effective shapelet) through the
/// encoder, accumulating into the encoder parameter grads and the raw
/// shapelet grad.
pub(crate) fn encoder_backward(
    raw: &[f64],
    enc: &EncoderWeights,
    hyper: &ShapeletHyper,
    cache: &EncoderCache,
    d_eff: &[f64],
    g: &mut BankGrads,
    d_raw: &mut [f64],
) {
    let p = hyper.patch_len;
    let k_patches = hyper.num_patches();
    let dm = hyper.d_model;
    let dk = hyper.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    // Residual path.
    for j in 0..hyper.l {
        d_raw[j] += d_eff[j];
    }

    // out_map and output projection, per patch.
    let mut d_cat = vec![vec![0.0; dm]; k_patches];
    for kp in 0..k_patches {
        let dz = &d_eff[kp * p..(kp + 1) * p];
        let mut d_att = vec![0.0; dm];
        for r in 0..p {
            g.out_map_b[r] += dz[r];
            for d in 0..dm {
                g.out_map_w[r][d] += dz[r] * cache.att[kp][d];
                d_att[d] += enc.out_map_w[r][d] * dz[r];
            }
        }
        for d in 0..dm {
            for d2 in 0..dm {
                g.w_o[d][d2] += d_att[d] * cache.cat[kp][d2];
                d_cat[kp][d2] += enc.w_o[d][d2] * d_att[d];
            }
        }
    }

    // Attention heads.
    let mut d_e = vec![vec![0.0; dm]; k_patches];
    for h in 0..hyper.num_heads {
        let alpha = &cache.alpha[h];
        let qh = &cache.q[h];
        let kh = &cache.k[h];
        let vh = &cache.v[h];

        // d_ctx is the slice of d_cat for this head.
        let mut d_v = vec![vec![0.0; dk]; k_patches];
        let mut d_alpha = vec![vec![0.0; k_patches]; k_patches];
        for i in 0..k_patches {
            for j in 0..k_patches {
                let mut acc = 0.0;
                for d in 0..dk {
                    acc += d_cat[i][h * dk + d] * vh[j][d];
                    // dv accumulated below to keep one pass per (i, j).
                }
                d_alpha[i][j] = acc;
                for d in 0..dk {
                    d_v[j][d] += alpha[i][j] * d_cat[i][h * dk + d];
                }
            }
        }

        // Softmax backward per query row.
        let mut d_q = vec![vec![0.0; dk]; k_patches];
        let mut d_k = vec![vec![0.0; dk]; k_patches];
        for i in 0..k_patches {
            let dot: f64 = (0..k_patches).map(|m| d_alpha[i][m] * alpha[i][m]).sum();
            for j in 0..k_patches {
                let d_score = alpha[i][j] * (d_alpha[i][j] - dot);
                for d in 0..dk {
                    d_q[i][d] += d_score * kh[j][d] * scale;
                    d_k[j][d] += d_score * qh[i][d] * scale;
                }
            }
        }

        // Linear projections q = Wq e, k = Wk e, v = Wv e.
        for i in 0..k_patches {
            for d in 0..dk {
                for d2 in 0..dm {
                    g.w_q[h][d][d2] += d_q[i][d] * cache.e[i][d2];
                    g.w_k[h][d][d2] += d_k[i][d] * cache.e[i][d2];
                    g.w_v[h][d][d2] += d_v[i][d] * cache.e[i][d2];
                    d_e[i][d2] += enc.w_q[h][d][d2] * d_q[i][d]
                        + enc.w_k[h][d][d2] * d_k[i][d]
                        + enc.w_v[h][d][d2] * d_v[i][d];
                }
            }
        }
    }

    // Patch embedding.
    for kp in 0..k_patches {
        let patch = &raw[kp * p..(kp + 1) * p];
        for d in 0..dm {
            g.patch_embed_b[d] += d_e[kp][d];
            for r in 0..p {
                g.patch_embed_w[d][r] += d_e[kp][d] * patch[r];
                d_raw[kp * p + r] += enc.patch_embed_w[d][r] * d_e[kp][d];
            }
        }
    }
}
