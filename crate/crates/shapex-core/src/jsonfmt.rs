//! Decimal-text formatting for artifact files.
//!
//! Every float written to disk goes through [`fmt_f64`], which emits 17
//! significant digits. That is enough to reconstruct the exact bit pattern on
//! re-parse, so artifacts round-trip losslessly and reruns with the same seed
//! produce byte-identical files.

/// Format a finite f64 with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    debug_assert!(v.is_finite(), "artifact floats must be finite");
    format!("{:.16e}", v)
}

/// Serialize a slice of floats as a JSON array.
pub fn json_f64_array(vs: &[f64]) -> String {
    let items: Vec<String> = vs.iter().map(|&v| fmt_f64(v)).collect();
    format!("[{}]", items.join(","))
}

/// Serialize a matrix of floats as a JSON array of arrays.
pub fn json_f64_matrix(m: &[Vec<f64>]) -> String {
    let rows: Vec<String> = m.iter().map(|r| json_f64_array(r)).collect();
    format!("[{}]", rows.join(","))
}

/// Serialize a rank-3 tensor of floats as nested JSON arrays.
pub fn json_f64_tensor3(t: &[Vec<Vec<f64>>]) -> String {
    let blocks: Vec<String> = t.iter().map(|m| json_f64_matrix(m)).collect();
    format!("[{}]", blocks.join(","))
}
