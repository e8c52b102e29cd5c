use crate::error::{Error, Result};

/// N samples by L classes, one bit per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiHotLabels {
    classes: usize,
    rows: Vec<Vec<bool>>,
}

impl MultiHotLabels {
    pub fn new(classes: usize, rows: Vec<Vec<bool>>) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != classes) {
            return Err(Error::shape(format!(
                "label row {i} has {} entries, expected {classes}",
                r.len()
            )));
        }
        Ok(Self { classes, rows })
    }

    /// Builds from lists of active class ids per sample.
    pub fn from_active(classes: usize, active: &[Vec<usize>]) -> Result<Self> {
        let mut rows = Vec::with_capacity(active.len());
        for ids in active {
            let mut row = vec![false; classes];
            for &c in ids {
                if c >= classes {
                    return Err(Error::Range(format!("class {c} >= {classes}")));
                }
                row[c] = true;
            }
            rows.push(row);
        }
        Ok(Self { classes, rows })
    }

    /// Parses 0/1 rows, e.g. `[[1,0],[0,1]]`.
    pub fn from_bits(rows: &[&[u8]]) -> Result<Self> {
        let classes = rows.first().map_or(0, |r| r.len());
        let rows = rows.iter().map(|r| r.iter().map(|&b| b != 0).collect()).collect();
        Self::new(classes, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    /// Subset of rows in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            classes: self.classes,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// True when two label rows have at least one class in common.
pub fn shares_label(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).any(|(&x, &y)| x && y)
}
