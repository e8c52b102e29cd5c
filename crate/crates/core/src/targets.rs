//! Distillation targets built from cached teacher embeddings.
//!
//! The default target is the image-by-text cosine matrix of the teacher,
//! rescaled per row to `[-1, 1]` with the paired (diagonal) entry pinned to
//! `1.0`. Identity, multi-hot and raw (unscaled) targets exist for ablations.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::labels::{shares_label, MultiHotLabels};
use crate::numerics::cosine_sim_matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    values: Array2<f64>,
    normalized: bool,
}

impl TargetMatrix {
    pub fn new(values: Array2<f64>, normalized: bool) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::shape(format!("target matrix is {:?}", values.dim())));
        }
        Ok(Self { values, normalized })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn transpose(&self) -> Self {
        Self {
            values: self.values.t().to_owned(),
            normalized: self.normalized,
        }
    }

    /// Sub-matrix over `idx` rows and the same `idx` columns.
    pub fn select(&self, idx: &[usize]) -> Self {
        let n = idx.len();
        let values = Array2::from_shape_fn((n, n), |(r, c)| self.values[[idx[r], idx[c]]]);
        Self {
            values,
            normalized: self.normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    #[default]
    Npc,
    Identity,
    Multihot,
    Raw,
}

impl TargetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetMode::Npc => "npc",
            TargetMode::Identity => "identity",
            TargetMode::Multihot => "multihot",
            TargetMode::Raw => "raw",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            TargetMode::Npc => 0,
            TargetMode::Identity => 1,
            TargetMode::Multihot => 2,
            TargetMode::Raw => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => TargetMode::Npc,
            1 => TargetMode::Identity,
            2 => TargetMode::Multihot,
            3 => TargetMode::Raw,
            _ => return None,
        })
    }
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npc" => Ok(TargetMode::Npc),
            "identity" => Ok(TargetMode::Identity),
            "multihot" => Ok(TargetMode::Multihot),
            "raw" => Ok(TargetMode::Raw),
            other => Err(Error::Config(format!(
                "unknown target mode {other:?} (expected npc|identity|multihot|raw)"
            ))),
        }
    }
}

/// Teacher cross-modal cosine matrix: entry (i, j) compares image i with text j.
pub fn compute_similarity(vi: ArrayView2<f64>, vt: ArrayView2<f64>) -> Result<TargetMatrix> {
    if vi.nrows() != vt.nrows() {
        return Err(Error::shape(format!(
            "teacher image rows {} != text rows {}",
            vi.nrows(),
            vt.nrows()
        )));
    }
    let values = cosine_sim_matrix(vi, vt)?;
    TargetMatrix::new(values, false)
}

/// Per-row affine rescale to `[-1, 1]`, then diagonal forced to `1.0`.
///
/// Rows whose max equals their min carry no ordering information and map to
/// all zeros before the diagonal is set.
pub fn npc(t: &TargetMatrix) -> Result<TargetMatrix> {
    let mut values = t.values.clone();
    if !values.is_square() {
        return Err(Error::shape(format!("npc on {:?} matrix", values.dim())));
    }
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if hi > lo {
            let slope = 2.0 / (hi - lo);
            let intercept = -(hi + lo) / (hi - lo);
            row.mapv_inplace(|s| (slope * s + intercept).clamp(-1.0, 1.0));
        } else {
            row.fill(0.0);
        }
        row[i] = 1.0;
    }
    TargetMatrix::new(values, true)
}

pub fn target_identity(n: usize) -> Result<TargetMatrix> {
    if n == 0 {
        return Err(Error::param("identity target needs N >= 1"));
    }
    TargetMatrix::new(Array2::eye(n), true)
}

/// `+1` where two samples share a class, `-1` otherwise, unit diagonal.
pub fn target_multihot(labels: &MultiHotLabels) -> Result<TargetMatrix> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::param("multi-hot target needs N >= 1"));
    }
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j || shares_label(labels.row(i), labels.row(j)) {
            1.0
        } else {
            -1.0
        }
    });
    TargetMatrix::new(values, true)
}

/// Target for one set of aligned rows according to `mode`.
pub fn build_target(
    mode: TargetMode,
    teacher_img: ArrayView2<f64>,
    teacher_txt: ArrayView2<f64>,
    labels: Option<&MultiHotLabels>,
) -> Result<TargetMatrix> {
    match mode {
        TargetMode::Npc => npc(&compute_similarity(teacher_img, teacher_txt)?),
        TargetMode::Raw => compute_similarity(teacher_img, teacher_txt),
        TargetMode::Identity => target_identity(teacher_img.nrows()),
        TargetMode::Multihot => {
            let labels = labels.ok_or_else(|| Error::Config("target mode multihot requires labels".into()))?;
            if labels.len() != teacher_img.nrows() {
                return Err(Error::Alignment(format!(
                    "{} label rows for {} samples",
                    labels.len(),
                    teacher_img.nrows()
                )));
            }
            target_multihot(labels)
        }
    }
}
