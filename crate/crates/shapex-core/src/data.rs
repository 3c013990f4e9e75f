//! Domain types and dataset file formats.
//!
//! A dataset is one instance per line: `label, v_1..v_T[, s_1..s_T]` where the
//! optional trailing block holds binary ground-truth saliency flags. Lines
//! starting with `#` are comments. Values are written with 17 significant
//! digits so that `load(save(ds)) == ds` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::jsonfmt::fmt_f64;

/// A univariate series with an optional class label and optional per-timestep
/// ground-truth saliency.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub label: Option<usize>,
    pub gt_saliency: Option<Vec<bool>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, label: Option<usize>) -> Self {
        Self {
            values,
            label,
            gt_saliency: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A collection of equal-length instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<TimeSeries>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    /// Build a dataset, checking that lengths agree and labels are in range.
    pub fn new(instances: Vec<TimeSeries>, num_classes: usize, name: &str) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let t = instances[0].len();
        for (i, inst) in instances.iter().enumerate() {
            if inst.len() != t {
                return Err(Error::Format {
                    row: i + 1,
                    msg: format!("series length {} differs from {}", inst.len(), t),
                });
            }
            if let Some(label) = inst.label {
                if label >= num_classes {
                    return Err(Error::Format {
                        row: i + 1,
                        msg: format!("label {} out of range for {} classes", label, num_classes),
                    });
                }
            }
            if let Some(gt) = &inst.gt_saliency {
                if gt.len() != t {
                    return Err(Error::Format {
                        row: i + 1,
                        msg: format!("saliency length {} differs from {}", gt.len(), t),
                    });
                }
            }
        }
        Ok(Self {
            instances,
            num_classes,
            name: name.to_string(),
        })
    }

    /// Common series length.
    pub fn series_len(&self) -> usize {
        self.instances[0].len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Binary keep/mask vector; `true` keeps the original value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationMask {
    pub bits: Vec<bool>,
}

impl PerturbationMask {
    pub fn all_kept(t: usize) -> Self {
        Self {
            bits: vec![true; t],
        }
    }

    pub fn all_masked(t: usize) -> Self {
        Self {
            bits: vec![false; t],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Per-timestep importance scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub scores: Vec<f64>,
}

impl SaliencyMap {
    /// Wrap scores, checking the `[0, 1]` contract.
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        for (t, &s) in scores.iter().enumerate() {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(Error::Numerical {
                    block: "saliency".to_string(),
                    msg: format!("score {} at t={} outside [0,1]", s, t),
                });
            }
        }
        Ok(Self { scores })
    }

    pub fn zeros(t: usize) -> Self {
        Self {
            scores: vec![0.0; t],
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// CSV export: header line then one `t,score` row per timestep.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,score\n");
        for (t, &s) in self.scores.iter().enumerate() {
            let _ = writeln!(out, "{},{}", t, fmt_f64(s));
        }
        out
    }

    /// Parse the CSV produced by [`SaliencyMap::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut scores = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let (_, score) = line.split_once(',').ok_or_else(|| Error::Format {
                row: i + 1,
                msg: "expected `t,score`".to_string(),
            })?;
            let v: f64 = score.trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                msg: format!("bad score {:?}", score),
            })?;
            scores.push(v);
        }
        SaliencyMap::new(scores)
    }
}

/// On-disk delimiter for dataset files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    fn delimiter(self) -> char {
        match self {
            Format::Tsv => '\t',
            Format::Csv => ',',
        }
    }

    /// Infer from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }
}

/// Load a dataset from a delimited text file.
///
/// Each data row is `label, v_1..v_T` and, when `with_saliency` is set, a
/// further `T` binary flags. The row layout alone cannot distinguish the two
/// shapes, so the caller states which one the file uses.
pub fn load_dataset(path: &Path, format: Format, with_saliency: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    parse_dataset(&text, format, with_saliency, &name)
}

/// Parse dataset text; see [`load_dataset`].
pub fn parse_dataset(
    text: &str,
    format: Format,
    with_saliency: bool,
    name: &str,
) -> Result<Dataset> {
    let delim = format.delimiter();
    let mut instances: Vec<TimeSeries> = Vec::new();
    let mut expected_t: Option<usize> = None;
    let mut max_label = 0usize;
    let mut row = 0usize;

    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        row += 1;
        let fields: Vec<&str> = line.split(delim).collect();
        if fields.len() < 2 {
            return Err(Error::Format {
                row,
                msg: format!("expected at least a label and one value, got {} fields", fields.len()),
            });
        }
        let label: i64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            row,
            msg: format!("bad label {:?}", fields[0]),
        })?;
        if label < 0 {
            return Err(Error::Parse {
                row,
                msg: format!("negative label {}", label),
            });
        }
        let label = label as usize;

        let t = match (expected_t, with_saliency) {
            (Some(t), _) => t,
            (None, false) => fields.len() - 1,
            (None, true) => {
                let n = fields.len() - 1;
                if n % 2 != 0 {
                    return Err(Error::Format {
                        row,
                        msg: format!("saliency rows need `label + 2T` fields, got {}", fields.len()),
                    });
                }
                n / 2
            }
        };
        let want = if with_saliency { 1 + 2 * t } else { 1 + t };
        if fields.len() != want {
            return Err(Error::Format {
                row,
                msg: format!("expected {} fields, got {}", want, fields.len()),
            });
        }

        let mut values = Vec::with_capacity(t);
        for f in &fields[1..1 + t] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("bad value {:?}", f),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("non-finite value {:?}", f),
                });
            }
            values.push(v);
        }

        let gt_saliency = if with_saliency {
            let mut flags = Vec::with_capacity(t);
            for f in &fields[1 + t..] {
                match f.trim() {
                    "0" => flags.push(false),
                    "1" => flags.push(true),
                    other => {
                        return Err(Error::Parse {
                            row,
                            msg: format!("saliency flag must be 0 or 1, got {:?}", other),
                        })
                    }
                }
            }
            Some(flags)
        } else {
            None
        };

        expected_t = Some(t);
        max_label = max_label.max(label);
        instances.push(TimeSeries {
            values,
            label: Some(label),
            gt_saliency,
        });
    }

    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(instances, max_label + 1, name)
}

/// Serialize a dataset to delimited text (inverse of [`parse_dataset`]).
pub fn dataset_to_text(ds: &Dataset, format: Format) -> Result<String> {
    if ds.instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let delim = format.delimiter();
    let mut out = String::new();
    for inst in &ds.instances {
        let label = inst.label.ok_or(Error::MissingLabel { index: 0 })?;
        let _ = write!(out, "{}", label);
        for &v in &inst.values {
            let _ = write!(out, "{}{}", delim, fmt_f64(v));
        }
        if let Some(gt) = &inst.gt_saliency {
            for &b in gt {
                let _ = write!(out, "{}{}", delim, if b { 1 } else { 0 });
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Write a dataset to disk; round-trips exactly through [`load_dataset`].
pub fn save_dataset(ds: &Dataset, path: &Path, format: Format) -> Result<()> {
    let text = dataset_to_text(ds, format)?;
    fs::write(path, text)?;
    Ok(())
}
