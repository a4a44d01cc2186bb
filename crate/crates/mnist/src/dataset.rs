//! Labeled image sets and the train/validation/test split.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::MnistError;
use crate::idx::{load_idx, IdxTensor, MAGIC_IMAGES, MAGIC_LABELS};

pub const CLASSES: usize = 10;

/// Images stored one per column, scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub images: DMatrix<f64>,
    pub labels: Vec<u8>,
}

impl Labeled {
    pub fn new(images: DMatrix<f64>, labels: Vec<u8>) -> Result<Self, MnistError> {
        if images.ncols() != labels.len() {
            return Err(MnistError::Shape(format!(
                "{} images but {} labels",
                images.ncols(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| usize::from(**l) >= CLASSES) {
            return Err(MnistError::Shape(format!("label {bad} out of range")));
        }
        Ok(Self { images, labels })
    }

    pub fn from_idx(images: IdxTensor, labels: IdxTensor) -> Result<Self, MnistError> {
        let images = images.expect_magic(MAGIC_IMAGES)?;
        let labels = labels.expect_magic(MAGIC_LABELS)?;
        let pixels = images.item_size();
        let m = DMatrix::from_vec(pixels, images.len(), images.scaled());
        Self::new(m, labels.data)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.images.nrows()
    }

    /// Columns `start..start + count`.
    pub fn slice(&self, start: usize, count: usize) -> Result<Self, MnistError> {
        if start + count > self.len() {
            return Err(MnistError::Shape(format!(
                "rows {start}..{} out of range for {} examples",
                start + count,
                self.len()
            )));
        }
        Ok(Self {
            images: self.images.columns(start, count).into_owned(),
            labels: self.labels[start..start + count].to_vec(),
        })
    }

    /// Examples at the given indices, in order.
    pub fn gather(&self, idx: &[usize]) -> Self {
        Self {
            images: self.images.select_columns(idx),
            labels: idx.iter().map(|i| self.labels[*i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Labeled,
    pub validation: Labeled,
    pub test: Labeled,
}

/// Consecutive blocks: the first `train` examples, then `validation`, then
/// `test`.
pub fn split(all: &Labeled, sizes: SplitSizes) -> Result<Split, MnistError> {
    let need = sizes.train + sizes.validation + sizes.test;
    if need > all.len() {
        return Err(MnistError::Shape(format!(
            "split needs {need} examples, file has {}",
            all.len()
        )));
    }
    Ok(Split {
        train: all.slice(0, sizes.train)?,
        validation: all.slice(sizes.train, sizes.validation)?,
        test: all.slice(sizes.train + sizes.validation, sizes.test)?,
    })
}

pub fn load_labeled(images: &Path, labels: &Path) -> Result<Labeled, MnistError> {
    Labeled::from_idx(load_idx(images)?, load_idx(labels)?)
}
