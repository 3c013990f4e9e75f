//! Composite training loss: classification, shapelet matching, and pairwise
//! diversity, plus the exact gradient computation for every bank parameter.
//!
//! Detected windows and argmax positions are held constant with respect to the
//! gradient (the detector is piecewise constant, so its gradient is zero
//! almost everywhere).

use super::grad::{encoder_backward, BankGrads};
use super::{
    activate, describe, encode_one, softmax, window_at, ActivationMap, Pooling, ShapeletBank,
};
use crate::error::{Error, Result};

/// Probabilities are clamped here before taking logs.
const PROB_CLAMP: f64 = 1e-12;

/// Norms are clamped here before dividing (cosine similarity, match loss).
const NORM_CLAMP: f64 = 1e-12;

/// Pool an activation map over time for the class head. Returns the pooled
/// vector and, for max pooling, the argmax timestep per shapelet (smallest
/// index on ties).
fn pool(a: &ActivationMap, pooling: Pooling) -> (Vec<f64>, Vec<usize>) {
    let n = a.num_shapelets();
    let t_len = a.series_len();
    match pooling {
        Pooling::Max => {
            let mut pooled = vec![f64::NEG_INFINITY; n];
            let mut arg = vec![0usize; n];
            for (t, row) in a.rows.iter().enumerate() {
                for ni in 0..n {
                    if row[ni] > pooled[ni] {
                        pooled[ni] = row[ni];
                        arg[ni] = t;
                    }
                }
            }
            (pooled, arg)
        }
        Pooling::Mean => {
            let mut pooled = vec![0.0; n];
            for row in &a.rows {
                for ni in 0..n {
                    pooled[ni] += row[ni];
                }
            }
            for v in pooled.iter_mut() {
                *v /= t_len as f64;
            }
            (pooled, vec![0; n])
        }
    }
}

/// Summed cross-entropy of the class head over a batch of activation maps.
///
/// For two classes the softmax form reduces exactly to the binary
/// cross-entropy with a sigmoid on the logit difference.
pub fn loss_cls(
    a_batch: &[ActivationMap],
    labels: &[usize],
    proj_w: &[Vec<f64>],
    proj_b: &[f64],
    pooling: Pooling,
) -> Result<f64> {
    if a_batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let c = proj_w.len();
    let mut total = 0.0;
    for (a, &y) in a_batch.iter().zip(labels) {
        if y >= c {
            return Err(Error::Shape(format!("label {} out of range {}", y, c)));
        }
        let (pooled, _) = pool(a, pooling);
        let logits: Vec<f64> = (0..c)
            .map(|ci| {
                proj_b[ci]
                    + proj_w[ci]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
            })
            .collect();
        let probs = softmax(&logits);
        total -= probs[y].max(PROB_CLAMP).ln();
    }
    Ok(total)
}

/// Sum over shapelets of the Euclidean distance to the detected window.
pub fn loss_match(shapelets: &[Vec<f64>], detected: &[Vec<f64>]) -> f64 {
    shapelets
        .iter()
        .zip(detected)
        .map(|(s, d)| {
            s.iter()
                .zip(d)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_CLAMP);
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_CLAMP);
    dot / (na * nb)
}

/// Hinge penalty on pairwise cosine similarity above the margin `delta`.
pub fn loss_div(shapelets: &[Vec<f64>], delta: f64) -> f64 {
    let n = shapelets.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += (cosine(&shapelets[i], &shapelets[j]) - delta).max(0.0);
        }
    }
    total
}

/// Composite loss over a batch: summed cross-entropy, plus the matching loss
/// summed over instances, plus one diversity term.
pub fn total_loss(
    bank: &ShapeletBank,
    xs: &[&[f64]],
    ys: &[usize],
    lambda_match: f64,
    lambda_div: f64,
    delta: f64,
) -> Result<f64> {
    run(bank, xs, ys, lambda_match, lambda_div, delta, false).map(|(l, _)| l)
}

/// Composite loss plus exact gradients for every bank parameter.
pub fn total_loss_with_grads(
    bank: &ShapeletBank,
    xs: &[&[f64]],
    ys: &[usize],
    lambda_match: f64,
    lambda_div: f64,
    delta: f64,
) -> Result<(f64, BankGrads)> {
    let (loss, grads) = run(bank, xs, ys, lambda_match, lambda_div, delta, true)?;
    let grads = grads.expect("gradients requested");
    grads.check_finite()?;
    Ok((loss, grads))
}

fn run(
    bank: &ShapeletBank,
    xs: &[&[f64]],
    ys: &[usize],
    lambda_match: f64,
    lambda_div: f64,
    delta: f64,
    want_grads: bool,
) -> Result<(f64, Option<BankGrads>)> {
    if xs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape("batch/label count mismatch".into()));
    }
    if lambda_match < 0.0 || lambda_div < 0.0 {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    let hyper = &bank.hyper;
    hyper.validate()?;
    let n = hyper.n;
    let c = hyper.num_classes;

    // Encode shapelets once per batch, keeping caches for backprop.
    let mut eff: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut caches = Vec::with_capacity(n);
    for raw in &bank.raw_shapelets {
        let (e, cache) = encode_one(raw, &bank.encoder, hyper);
        eff.push(e);
        caches.push(cache);
    }

    let mut grads = want_grads.then(|| BankGrads::zeros(hyper));
    // Gradient flowing into the effective shapelets, accumulated over the
    // whole batch; pushed through the encoder once at the end.
    let mut d_eff = vec![vec![0.0; hyper.l]; n];

    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        if y >= c {
            return Err(Error::Shape(format!("label {} out of range {}", y, c)));
        }
        let sim = describe(x, &eff, &bank.bias);
        let a = activate(&sim);
        let (pooled, arg) = pool(&a, hyper.pooling);

        // Class head.
        let logits: Vec<f64> = (0..c)
            .map(|ci| {
                bank.proj_b[ci]
                    + bank.proj_w[ci]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
            })
            .collect();
        let probs = softmax(&logits);
        loss -= probs[y].max(PROB_CLAMP).ln();

        // Matching loss on detected windows (windows held constant).
        let mut detected: Vec<Vec<f64>> = Vec::new();
        if lambda_match != 0.0 {
            detected = (0..n)
                .map(|ni| window_at(x, a.peak(ni), hyper.l))
                .collect();
            loss += lambda_match * loss_match(&eff, &detected);
        }

        let Some(g) = grads.as_mut() else { continue };

        // d loss / d logits for summed cross-entropy.
        let clamped = probs[y] <= PROB_CLAMP;
        let mut d_pooled = vec![0.0; n];
        for ci in 0..c {
            let d_logit = if clamped {
                0.0
            } else {
                probs[ci] - if ci == y { 1.0 } else { 0.0 }
            };
            g.proj_b[ci] += d_logit;
            for ni in 0..n {
                g.proj_w[ci][ni] += d_logit * pooled[ni];
                d_pooled[ni] += bank.proj_w[ci][ni] * d_logit;
            }
        }

        // Pooling backward: gradient lands on the pooled rows of A.
        let t_len = x.len();
        let mut d_a_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        match hyper.pooling {
            Pooling::Max => {
                let mut per_row: std::collections::BTreeMap<usize, Vec<f64>> =
                    std::collections::BTreeMap::new();
                for ni in 0..n {
                    per_row.entry(arg[ni]).or_insert_with(|| vec![0.0; n])[ni] += d_pooled[ni];
                }
                d_a_rows.extend(per_row);
            }
            Pooling::Mean => {
                let inv = 1.0 / t_len as f64;
                for t in 0..t_len {
                    d_a_rows.push((t, d_pooled.iter().map(|d| d * inv).collect()));
                }
            }
        }

        // Softmax backward then convolution backward into eff and bias.
        for (t, d_a) in d_a_rows {
            let a_row = &a.rows[t];
            let dot: f64 = d_a.iter().zip(a_row).map(|(d, av)| d * av).sum();
            for ni in 0..n {
                let d_i = a_row[ni] * (d_a[ni] - dot);
                if d_i == 0.0 {
                    continue;
                }
                g.bias[ni] += d_i;
                let start = t as isize - (hyper.l / 2) as isize;
                for j in 0..hyper.l {
                    let idx = start + j as isize;
                    if idx >= 0 && (idx as usize) < t_len {
                        d_eff[ni][j] += d_i * x[idx as usize];
                    }
                }
            }
        }

        // Matching-loss gradient into the effective shapelets.
        if lambda_match != 0.0 {
            for ni in 0..n {
                let diff: Vec<f64> = eff[ni]
                    .iter()
                    .zip(&detected[ni])
                    .map(|(a, b)| a - b)
                    .collect();
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm > NORM_CLAMP {
                    for j in 0..hyper.l {
                        d_eff[ni][j] += lambda_match * diff[j] / norm;
                    }
                }
            }
        }
    }

    // Diversity loss: one term per batch, on the effective shapelets.
    if lambda_div != 0.0 {
        loss += lambda_div * loss_div(&eff, delta);
        if grads.is_some() {
            for i in 0..n {
                for j in i + 1..n {
                    let (si, sj) = (&eff[i], &eff[j]);
                    let dot: f64 = si.iter().zip(sj).map(|(a, b)| a * b).sum();
                    let ni = si.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_CLAMP);
                    let nj = sj.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_CLAMP);
                    let cos = dot / (ni * nj);
                    if cos > delta {
                        for r in 0..hyper.l {
                            d_eff[i][r] += lambda_div * (sj[r] / (ni * nj) - cos * si[r] / (ni * ni));
                            d_eff[j][r] += lambda_div * (si[r] / (ni * nj) - cos * sj[r] / (nj * nj));
                        }
                    }
                }
            }
        }
    }

    if !loss.is_finite() {
        return Err(Error::Numerical {
            block: "total_loss".to_string(),
            msg: format!("loss is {}", loss),
        });
    }

    if let Some(g) = grads.as_mut() {
        let mut d_raw = vec![vec![0.0; hyper.l]; n];
        for ni in 0..n {
            encoder_backward(
                &bank.raw_shapelets[ni],
                &bank.encoder,
                hyper,
                &caches[ni],
                &d_eff[ni],
                g,
                &mut d_raw[ni],
            );
        }
        g.raw_shapelets = d_raw;
    }

    Ok((loss, grads))
}
