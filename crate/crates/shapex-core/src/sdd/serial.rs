//! Versioned JSON serialization for the shapelet bank.
//!
//! The writer is hand-rolled so every float is emitted with 17 significant
//! digits; re-serializing a loaded bank reproduces the file byte for byte.

use serde::Deserialize;

use super::{EncoderWeights, Pooling, ShapeletBank, ShapeletHyper};
use crate::error::{Error, Result};
use crate::jsonfmt::{json_f64_array, json_f64_matrix, json_f64_tensor3};

pub const BANK_VERSION: u32 = 1;

/// Serialize a bank to its versioned JSON document.
pub fn bank_to_json(bank: &ShapeletBank) -> String {
    let h = &bank.hyper;
    let e = &bank.encoder;
    format!(
        concat!(
            "{{\"version\":{},",
            "\"hyper\":{{\"n\":{},\"l\":{},\"patch_len\":{},\"num_heads\":{},\"d_model\":{},",
            "\"num_classes\":{},\"pooling\":\"{}\",\"trained_t\":{}}},",
            "\"raw_shapelets\":{},",
            "\"bias\":{},",
            "\"encoder\":{{",
            "\"patch_embed\":{{\"weight\":{},\"bias\":{}}},",
            "\"attention\":{{\"w_q\":{},\"w_k\":{},\"w_v\":{},\"w_o\":{}}},",
            "\"out_map\":{{\"weight\":{},\"bias\":{}}}}},",
            "\"projection\":{{\"weight\":{},\"bias\":{}}}}}"
        ),
        BANK_VERSION,
        h.n,
        h.l,
        h.patch_len,
        h.num_heads,
        h.d_model,
        h.num_classes,
        match h.pooling {
            Pooling::Max => "max",
            Pooling::Mean => "mean",
        },
        h.trained_t,
        json_f64_matrix(&bank.raw_shapelets),
        json_f64_array(&bank.bias),
        json_f64_matrix(&e.patch_embed_w),
        json_f64_array(&e.patch_embed_b),
        json_f64_tensor3(&e.w_q),
        json_f64_tensor3(&e.w_k),
        json_f64_tensor3(&e.w_v),
        json_f64_matrix(&e.w_o),
        json_f64_matrix(&e.out_map_w),
        json_f64_array(&e.out_map_b),
        json_f64_matrix(&bank.proj_w),
        json_f64_array(&bank.proj_b),
    )
}

#[derive(Deserialize)]
struct BankDoc {
    version: u32,
    hyper: HyperDoc,
    raw_shapelets: Vec<Vec<f64>>,
    bias: Vec<f64>,
    encoder: EncoderDoc,
    projection: LinearDoc,
}

#[derive(Deserialize)]
struct HyperDoc {
    n: usize,
    l: usize,
    patch_len: usize,
    num_heads: usize,
    d_model: usize,
    num_classes: usize,
    pooling: String,
    trained_t: usize,
}

#[derive(Deserialize)]
struct EncoderDoc {
    patch_embed: LinearDoc,
    attention: AttentionDoc,
    out_map: LinearDoc,
}

#[derive(Deserialize)]
struct LinearDoc {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct AttentionDoc {
    w_q: Vec<Vec<Vec<f64>>>,
    w_k: Vec<Vec<Vec<f64>>>,
    w_v: Vec<Vec<Vec<f64>>>,
    w_o: Vec<Vec<f64>>,
}

/// Parse a bank document. `source` names the file in error messages.
pub fn bank_from_json(text: &str, source: &str) -> Result<ShapeletBank> {
    let doc: BankDoc = serde_json::from_str(text)?;
    if doc.version != BANK_VERSION {
        return Err(Error::Version {
            file: source.to_string(),
            found: doc.version,
            expected: BANK_VERSION,
        });
    }
    let pooling = match doc.hyper.pooling.as_str() {
        "max" => Pooling::Max,
        "mean" => Pooling::Mean,
        other => {
            return Err(Error::Config(format!(
                "{}: unknown pooling {:?}",
                source, other
            )))
        }
    };
    let hyper = ShapeletHyper {
        n: doc.hyper.n,
        l: doc.hyper.l,
        patch_len: doc.hyper.patch_len,
        num_heads: doc.hyper.num_heads,
        d_model: doc.hyper.d_model,
        num_classes: doc.hyper.num_classes,
        pooling,
        trained_t: doc.hyper.trained_t,
    };
    hyper.validate()?;
    let bank = ShapeletBank {
        raw_shapelets: doc.raw_shapelets,
        bias: doc.bias,
        encoder: EncoderWeights {
            patch_embed_w: doc.encoder.patch_embed.weight,
            patch_embed_b: doc.encoder.patch_embed.bias,
            w_q: doc.encoder.attention.w_q,
            w_k: doc.encoder.attention.w_k,
            w_v: doc.encoder.attention.w_v,
            w_o: doc.encoder.attention.w_o,
            out_map_w: doc.encoder.out_map.weight,
            out_map_b: doc.encoder.out_map.bias,
        },
        proj_w: doc.projection.weight,
        proj_b: doc.projection.bias,
        hyper,
    };
    check_shapes(&bank, source)?;
    bank.check_finite()?;
    Ok(bank)
}

fn check_shapes(bank: &ShapeletBank, source: &str) -> Result<()> {
    let h = &bank.hyper;
    let dk = h.head_dim();
    let err = |what: &str| Error::Shape(format!("{}: bad {} shape", source, what));
    let m_ok = |m: &[Vec<f64>], rows: usize, cols: usize| {
        m.len() == rows && m.iter().all(|r| r.len() == cols)
    };
    let t_ok = |t: &[Vec<Vec<f64>>], a: usize, b: usize, c: usize| {
        t.len() == a && t.iter().all(|m| m_ok(m, b, c))
    };
    if !m_ok(&bank.raw_shapelets, h.n, h.l) {
        return Err(err("raw_shapelets"));
    }
    if bank.bias.len() != h.n {
        return Err(err("bias"));
    }
    let e = &bank.encoder;
    if !m_ok(&e.patch_embed_w, h.d_model, h.patch_len) || e.patch_embed_b.len() != h.d_model {
        return Err(err("patch_embed"));
    }
    if !t_ok(&e.w_q, h.num_heads, dk, h.d_model)
        || !t_ok(&e.w_k, h.num_heads, dk, h.d_model)
        || !t_ok(&e.w_v, h.num_heads, dk, h.d_model)
        || !m_ok(&e.w_o, h.d_model, h.d_model)
    {
        return Err(err("attention"));
    }
    if !m_ok(&e.out_map_w, h.patch_len, h.d_model) || e.out_map_b.len() != h.patch_len {
        return Err(err("out_map"));
    }
    if !m_ok(&bank.proj_w, h.num_classes, h.n) || bank.proj_b.len() != h.num_classes {
        return Err(err("projection"));
    }
    Ok(())
}
