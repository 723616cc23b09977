//! COCO-format detection documents: the annotation schema the dataset
//! builder emits and the evaluator consumes, plus the results-array format
//! for detections.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CocoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("referential integrity violation: {0}")]
    Integrity(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, w, h]` in pixels, top-left corner plus extent.
    pub bbox: [f64; 4],
    pub area: f64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

/// Top-level annotation document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDocument {
    pub fn from_file(path: &Path) -> Result<Self, CocoError> {
        Ok(serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?)
    }

    pub fn to_file(&self, path: &Path) -> Result<(), CocoError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        use std::io::Write;
        w.flush()?;
        Ok(())
    }

    /// Checks that ids are unique and every annotation references an
    /// existing image and category.
    pub fn check_integrity(&self) -> Result<(), CocoError> {
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if !image_ids.insert(img.id) {
                return Err(CocoError::Integrity(format!("duplicate image id {}", img.id)));
            }
        }
        let mut category_ids = HashSet::new();
        for cat in &self.categories {
            if !category_ids.insert(cat.id) {
                return Err(CocoError::Integrity(format!(
                    "duplicate category id {}",
                    cat.id
                )));
            }
        }
        let mut ann_ids = HashSet::new();
        for ann in &self.annotations {
            if !ann_ids.insert(ann.id) {
                return Err(CocoError::Integrity(format!(
                    "duplicate annotation id {}",
                    ann.id
                )));
            }
            if !image_ids.contains(&ann.image_id) {
                return Err(CocoError::Integrity(format!(
                    "annotation {} references missing image {}",
                    ann.id, ann.image_id
                )));
            }
            if !category_ids.contains(&ann.category_id) {
                return Err(CocoError::Integrity(format!(
                    "annotation {} references missing category {}",
                    ann.id, ann.category_id
                )));
            }
        }
        Ok(())
    }
}

/// One record of a COCO results file (an array of these).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CocoDetRecord {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

pub fn read_results(path: &Path) -> Result<Vec<CocoDetRecord>, CocoError> {
    Ok(serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(path)?,
    ))?)
}

pub fn write_results(records: &[CocoDetRecord], path: &Path) -> Result<(), CocoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, records)?;
    use std::io::Write;
    w.flush()?;
    Ok(())
}
