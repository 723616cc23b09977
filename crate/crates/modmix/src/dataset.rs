//! Dataset building: ingest paired RGB + cloud frames, generate the
//! requested modality images (plain RGB, DHS pseudo-image, CPPM / SFFM
//! mixes), and emit one COCO-format annotation document plus a provenance
//! record.
//!
//! Augmented (flipped / cropped) variants are not materialized; the builder
//! writes only base modality images and records the augmentation policy so
//! downstream trainers can apply it on the fly. Given the same inputs and
//! root seed, a build is byte-identical across runs and worker counts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::{CocoAnnotation, CocoCategory, CocoDocument, CocoImage};
use crate::dhs;
use crate::geometry::{load_cloud, BoundingBox, GeometryError, RgbImage};
use crate::mixing::{self, Label, MixingError, Neighborhood};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("split: {0}")]
    Split(String),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("category configuration: {0}")]
    Categories(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mixing(#[from] MixingError),
    #[error(transparent)]
    Coco(#[from] crate::coco::CocoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

// ---------------------------------------------------------------------------
// Category subgroups
// ---------------------------------------------------------------------------

/// The 16-category subgroup, in reporting order.
pub const SUNRGBD16_NAMES: [&str; 16] = [
    "bed",
    "toilet",
    "night stand",
    "bathtub",
    "chair",
    "dresser",
    "sofa",
    "table",
    "desk",
    "bookshelf",
    "sofa chair",
    "kitchen counter",
    "kitchen cabinet",
    "garbage bin",
    "microwave",
    "sink",
];

/// Named, ordered list of category names. Subgroups nest:
/// sunrgbd10 ⊆ sunrgbd16 ⊆ sunrgbd66 ⊆ sunrgbd79 where configured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySet {
    pub name: String,
    pub categories: Vec<String>,
}

impl CategorySet {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for c in &categories {
            if !seen.insert(c.as_str()) {
                return Err(DatasetError::Categories(format!("duplicate category {c:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            categories,
        })
    }

    pub fn sunrgbd16() -> Self {
        Self {
            name: "sunrgbd16".into(),
            categories: SUNRGBD16_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The first ten categories of the 16-category subgroup.
    pub fn sunrgbd10() -> Self {
        Self {
            name: "sunrgbd10".into(),
            categories: SUNRGBD16_NAMES[..10].iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn contains(&self, category: &str) -> bool {
        self.categories.iter().any(|c| c == category)
    }

    fn is_subset_of(&self, other: &CategorySet) -> bool {
        let names: HashSet<&str> = other.categories.iter().map(String::as_str).collect();
        self.categories.iter().all(|c| names.contains(c.as_str()))
    }
}

/// Loads extra subgroups (e.g. sunrgbd66 / sunrgbd79) from a JSON object
/// mapping subgroup name to category list, and checks the nesting chain
/// against the built-in subgroups.
pub fn load_category_config(path: &Path) -> Result<Vec<CategorySet>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
    let mut sets = Vec::new();
    for (name, categories) in raw {
        sets.push(CategorySet::new(name, categories)?);
    }
    let mut chain: Vec<CategorySet> = vec![CategorySet::sunrgbd10(), CategorySet::sunrgbd16()];
    for name in ["sunrgbd66", "sunrgbd79"] {
        if let Some(s) = sets.iter().find(|s| s.name == name) {
            chain.push(s.clone());
        }
    }
    for pair in chain.windows(2) {
        if !pair[0].is_subset_of(&pair[1]) {
            return Err(DatasetError::Categories(format!(
                "{} is not a subset of {}",
                pair[0].name, pair[1].name
            )));
        }
    }
    Ok(sets)
}

/// Resolves a subgroup by name against the built-ins plus an optional
/// configuration file.
pub fn resolve_subgroup(name: &str, config: &[CategorySet]) -> Result<CategorySet, DatasetError> {
    match name {
        "sunrgbd10" => Ok(CategorySet::sunrgbd10()),
        "sunrgbd16" => Ok(CategorySet::sunrgbd16()),
        other => config
            .iter()
            .find(|s| s.name == other)
            .cloned()
            .ok_or_else(|| {
                DatasetError::Categories(format!(
                    "subgroup {other:?} is not built in and not present in the category config"
                ))
            }),
    }
}

// ---------------------------------------------------------------------------
// Manifest and splits
// ---------------------------------------------------------------------------

/// One manifest line: a frame id and the three files backing the frame.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub id: String,
    pub rgb_path: PathBuf,
    pub cloud_path: PathBuf,
    pub annotation_path: PathBuf,
}

/// Reads a tab-separated manifest: `id<TAB>rgb<TAB>cloud<TAB>annotations`.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<FrameRecord>, DatasetError> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let mut frames = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(DatasetError::Manifest {
                line: line_no,
                reason: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        if !ids.insert(fields[0].to_string()) {
            return Err(DatasetError::Manifest {
                line: line_no,
                reason: format!("duplicate frame id {:?}", fields[0]),
            });
        }
        let resolve = |p: &str| {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        frames.push(FrameRecord {
            id: fields[0].to_string(),
            rgb_path: resolve(fields[1]),
            cloud_path: resolve(fields[2]),
            annotation_path: resolve(fields[3]),
        });
    }
    Ok(frames)
}

/// Frame-id lists per split. An empty `train` list means "every frame not
/// claimed by `val`".
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
}

impl SplitSpec {
    pub fn from_file(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Vec<FrameRecord>,
    pub val: Vec<FrameRecord>,
    /// Manifest frames claimed by neither split.
    pub unlisted: Vec<String>,
    /// Split ids with no matching manifest frame.
    pub missing: Vec<String>,
}

/// Partitions manifest frames according to the split spec. An id claimed by
/// both splits is an error.
pub fn split_manifest(frames: &[FrameRecord], spec: &SplitSpec) -> Result<SplitResult, DatasetError> {
    let train_ids: HashSet<&str> = spec.train.iter().map(String::as_str).collect();
    let val_ids: HashSet<&str> = spec.val.iter().map(String::as_str).collect();
    if let Some(dup) = train_ids.intersection(&val_ids).next() {
        return Err(DatasetError::Split(format!(
            "frame id {dup:?} appears in both train and val"
        )));
    }
    let mut result = SplitResult {
        train: Vec::new(),
        val: Vec::new(),
        unlisted: Vec::new(),
        missing: Vec::new(),
    };
    let manifest_ids: HashSet<&str> = frames.iter().map(|f| f.id.as_str()).collect();
    for id in train_ids.iter().chain(&val_ids) {
        if !manifest_ids.contains(id) {
            result.missing.push((*id).to_string());
        }
    }
    result.missing.sort();
    for frame in frames {
        if train_ids.contains(frame.id.as_str()) {
            result.train.push(frame.clone());
        } else if val_ids.contains(frame.id.as_str()) {
            result.val.push(frame.clone());
        } else if train_ids.is_empty() {
            result.train.push(frame.clone());
        } else {
            result.unlisted.push(frame.id.clone());
        }
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Per-frame annotations
// ---------------------------------------------------------------------------

/// One entry of a per-frame annotation file: a JSON array of
/// `{"category": <name>, "bbox": [x, y, w, h]}` objects.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub category: String,
    pub bbox: [f64; 4],
}

/// A category-resolved box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub category_id: u32,
    pub bbox: BoundingBox,
}

pub fn read_frame_annotations(path: &Path) -> Result<Vec<FrameAnnotation>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Training-time augmentation schedule. The builder records it in the
/// provenance file; it does not materialize augmented images.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentationPolicy {
    pub flip_probability: f64,
    pub resize_target_width: u32,
    pub resize_target_heights: Vec<u32>,
    /// (height, width) of the random training crop.
    pub crop_size: (u32, u32),
    /// (width, height) used at test time; both must be divisible by 32.
    pub test_resize: (u32, u32),
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            resize_target_width: 1333,
            resize_target_heights: (480..=800).step_by(32).collect(),
            crop_size: (384, 600),
            test_resize: (1120, 800),
            seed: crate::seed::DEFAULT_SEED,
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(DatasetError::InvalidPolicy(format!(
                "flip probability {} outside [0, 1]",
                self.flip_probability
            )));
        }
        if self.resize_target_width == 0
            || self.resize_target_heights.is_empty()
            || self.resize_target_heights.contains(&0)
            || self.crop_size.0 == 0
            || self.crop_size.1 == 0
        {
            return Err(DatasetError::InvalidPolicy("dimensions must be positive".into()));
        }
        if !self.test_resize.0.is_multiple_of(32) || !self.test_resize.1.is_multiple_of(32) {
            return Err(DatasetError::InvalidPolicy(format!(
                "test resize {}x{} not divisible by 32",
                self.test_resize.0, self.test_resize.1
            )));
        }
        Ok(())
    }
}

/// Mirrors the image about the vertical axis and maps each box to
/// `x' = width - x - w`. Applying it twice restores the image exactly and
/// the boxes up to one floating-point rounding of `x`.
pub fn horizontal_flip(img: &RgbImage, boxes: &[LabeledBox]) -> (RgbImage, Vec<LabeledBox>) {
    let flipped = image::imageops::flip_horizontal(img);
    let w = f64::from(img.width());
    let boxes = boxes
        .iter()
        .map(|lb| LabeledBox {
            category_id: lb.category_id,
            bbox: BoundingBox {
                x: w - lb.bbox.x - lb.bbox.w,
                ..lb.bbox
            },
        })
        .collect();
    (flipped, boxes)
}

/// Aspect-preserving resize: one scale `min(tw/w, th/h)` applied to both
/// axes (bilinear for RGB) and to every box coordinate. Returns the scale.
pub fn resize_keep_ratio(
    img: &RgbImage,
    boxes: &[LabeledBox],
    target_width: u32,
    target_height: u32,
) -> (RgbImage, Vec<LabeledBox>, f64) {
    let (w, h) = (f64::from(img.width()), f64::from(img.height()));
    let scale = (f64::from(target_width) / w).min(f64::from(target_height) / h);
    let nw = ((w * scale).round() as u32).max(1);
    let nh = ((h * scale).round() as u32).max(1);
    let resized = if (nw, nh) == (img.width(), img.height()) {
        img.clone()
    } else {
        image::imageops::resize(img, nw, nh, image::imageops::FilterType::Triangle)
    };
    let boxes = boxes
        .iter()
        .map(|lb| LabeledBox {
            category_id: lb.category_id,
            bbox: BoundingBox {
                x: lb.bbox.x * scale,
                y: lb.bbox.y * scale,
                w: lb.bbox.w * scale,
                h: lb.bbox.h * scale,
            },
        })
        .collect();
    (resized, boxes, scale)
}

/// Uniform-random crop of `crop_h x crop_w` (clamped to the image size).
/// Boxes are clipped to the window; boxes whose clipped area falls below
/// one square pixel are dropped together with their labels.
pub fn random_crop(
    img: &RgbImage,
    boxes: &[LabeledBox],
    crop_h: u32,
    crop_w: u32,
    rng: &mut impl Rng,
) -> (RgbImage, Vec<LabeledBox>) {
    let cw = crop_w.min(img.width());
    let ch = crop_h.min(img.height());
    let x0 = rng.gen_range(0..=img.width() - cw);
    let y0 = rng.gen_range(0..=img.height() - ch);
    let cropped = image::imageops::crop_imm(img, x0, y0, cw, ch).to_image();
    let window = BoundingBox {
        x: f64::from(x0),
        y: f64::from(y0),
        w: f64::from(cw),
        h: f64::from(ch),
    };
    let boxes = boxes
        .iter()
        .filter_map(|lb| {
            let clipped = lb.bbox.clip_to(&window)?;
            if clipped.area() < 1.0 {
                return None;
            }
            Some(LabeledBox {
                category_id: lb.category_id,
                bbox: BoundingBox {
                    x: clipped.x - window.x,
                    y: clipped.y - window.y,
                    ..clipped
                },
            })
        })
        .collect();
    (cropped, boxes)
}

// ---------------------------------------------------------------------------
// Build plan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CppmPlan {
    pub patch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SffmPlan {
    pub count: usize,
    pub prob_low: f64,
    pub prob_high: f64,
    pub neighborhood: Neighborhood,
}

impl Default for SffmPlan {
    fn default() -> Self {
        Self {
            count: 6,
            prob_low: 0.1,
            prob_high: 0.9,
            neighborhood: Neighborhood::Four,
        }
    }
}

/// Which modality images to emit per frame. Mixes are generated from the
/// aligned RGB / DHS pair even when the sources themselves are not emitted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModalityPlan {
    pub rgb: bool,
    pub dhs: bool,
    pub cppm: Option<CppmPlan>,
    pub sffm: Option<SffmPlan>,
}

impl ModalityPlan {
    fn needs_cloud(&self) -> bool {
        self.dhs || self.cppm.is_some() || self.sffm.is_some()
    }

    pub fn images_per_frame(&self) -> usize {
        usize::from(self.rgb)
            + usize::from(self.dhs)
            + usize::from(self.cppm.is_some())
            + self.sffm.map_or(0, |s| s.count)
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub plan: ModalityPlan,
    pub policy: AugmentationPolicy,
    pub categories: CategorySet,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub frames_built: usize,
    pub images_written: usize,
    pub annotations_written: usize,
    /// Annotations whose category is outside the active set.
    pub annotations_out_of_set: usize,
    pub failures: Vec<FrameFailure>,
}

#[derive(Debug, Clone, Serialize)]
struct ImageProvenance {
    file_name: String,
    source_id: String,
    modality: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    patch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
struct Provenance<'a> {
    seed: u64,
    policy: &'a AugmentationPolicy,
    images: Vec<ImageProvenance>,
}

struct EmittedImage {
    file_name: String,
    width: u32,
    height: u32,
    provenance: ImageProvenance,
}

struct FrameOutput {
    boxes: Vec<LabeledBox>,
    images: Vec<EmittedImage>,
    annotations_out_of_set: usize,
}

/// Builds the dataset under `out_dir`: an `images/` directory, an
/// `annotations.json` COCO document and a `provenance.json` record.
/// Unreadable or misaligned frames are skipped and reported in the summary;
/// frames are processed in parallel but all outputs are assembled in
/// manifest order.
pub fn build_dataset(
    frames: &[FrameRecord],
    cfg: &BuildConfig,
    out_dir: &Path,
) -> Result<BuildSummary, DatasetError> {
    cfg.policy.validate()?;
    if let Some(s) = cfg.sffm_params_invalid() {
        return Err(DatasetError::InvalidPolicy(s));
    }
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let category_ids: HashMap<&str, u32> = cfg
        .categories
        .categories
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i as u32 + 1))
        .collect();

    let results: Vec<Result<FrameOutput, FrameFailure>> = frames
        .par_iter()
        .map(|frame| {
            process_frame(frame, cfg, &category_ids, &images_dir).map_err(|reason| {
                log::warn!(
                    "{}",
                    serde_json::json!({"event": "frame_skipped", "frame": frame.id, "reason": reason})
                );
                FrameFailure {
                    id: frame.id.clone(),
                    reason,
                }
            })
        })
        .collect();

    let mut doc = CocoDocument {
        categories: cfg
            .categories
            .categories
            .iter()
            .enumerate()
            .map(|(i, name)| CocoCategory {
                id: i as u32 + 1,
                name: name.clone(),
            })
            .collect(),
        ..Default::default()
    };
    let mut provenance_images = Vec::new();
    let mut summary = BuildSummary {
        frames_built: 0,
        images_written: 0,
        annotations_written: 0,
        annotations_out_of_set: 0,
        failures: Vec::new(),
    };

    let mut next_image_id = 1u64;
    let mut next_ann_id = 1u64;
    for result in results {
        match result {
            Ok(output) => {
                summary.frames_built += 1;
                summary.annotations_out_of_set += output.annotations_out_of_set;
                for img in output.images {
                    doc.images.push(CocoImage {
                        id: next_image_id,
                        file_name: img.file_name.clone(),
                        width: img.width,
                        height: img.height,
                    });
                    for lb in &output.boxes {
                        doc.annotations.push(CocoAnnotation {
                            id: next_ann_id,
                            image_id: next_image_id,
                            category_id: lb.category_id,
                            bbox: [lb.bbox.x, lb.bbox.y, lb.bbox.w, lb.bbox.h],
                            area: lb.bbox.area(),
                            iscrowd: 0,
                        });
                        next_ann_id += 1;
                    }
                    provenance_images.push(img.provenance);
                    next_image_id += 1;
                    summary.images_written += 1;
                }
            }
            Err(failure) => summary.failures.push(failure),
        }
    }
    summary.annotations_written = doc.annotations.len();

    doc.check_integrity()?;
    doc.to_file(&out_dir.join("annotations.json"))?;
    let provenance = Provenance {
        seed: cfg.policy.seed,
        policy: &cfg.policy,
        images: provenance_images,
    };
    std::fs::write(
        out_dir.join("provenance.json"),
        serde_json::to_vec(&provenance)?,
    )?;
    Ok(summary)
}

impl BuildConfig {
    fn sffm_params_invalid(&self) -> Option<String> {
        let s = self.plan.sffm?;
        if s.count == 0 {
            return Some("sffm count must be >= 1".into());
        }
        if !(s.prob_low > 0.0 && s.prob_low <= s.prob_high && s.prob_high <= 1.0) {
            return Some(format!(
                "sffm probability range [{}, {}] must satisfy 0 < low <= high <= 1",
                s.prob_low, s.prob_high
            ));
        }
        None
    }
}

fn process_frame(
    frame: &FrameRecord,
    cfg: &BuildConfig,
    category_ids: &HashMap<&str, u32>,
    images_dir: &Path,
) -> Result<FrameOutput, String> {
    let rgb = image::open(&frame.rgb_path)
        .map_err(|e| format!("rgb: {e}"))?
        .into_rgb8();

    let raw_annotations =
        read_frame_annotations(&frame.annotation_path).map_err(|e| format!("annotations: {e}"))?;
    let mut boxes = Vec::new();
    let mut out_of_set = 0usize;
    let image_window = BoundingBox {
        x: 0.0,
        y: 0.0,
        w: f64::from(rgb.width()),
        h: f64::from(rgb.height()),
    };
    for ann in &raw_annotations {
        let Some(&category_id) = category_ids.get(ann.category.as_str()) else {
            out_of_set += 1;
            continue;
        };
        let bbox = BoundingBox::new(ann.bbox[0], ann.bbox[1], ann.bbox[2], ann.bbox[3])
            .map_err(|e| format!("annotation bbox: {e}"))?;
        // keep boxes inside the image; drop slivers below one square pixel
        match bbox.clip_to(&image_window) {
            Some(clipped) if clipped.area() >= 1.0 => boxes.push(LabeledBox {
                category_id,
                bbox: clipped,
            }),
            _ => {}
        }
    }

    let mut emitted = Vec::new();
    let mut push_image = |name: String, img: &RgbImage, prov: ImageProvenance| -> Result<(), String> {
        img.save(images_dir.join(&name))
            .map_err(|e| format!("{name}: {e}"))?;
        emitted.push(EmittedImage {
            file_name: name,
            width: img.width(),
            height: img.height(),
            provenance: prov,
        });
        Ok(())
    };
    let prov = |modality: &str| ImageProvenance {
        file_name: format!("{}_{modality}.png", frame.id),
        source_id: frame.id.clone(),
        modality: modality.to_string(),
        patch_size: None,
        p_a: None,
        p_b: None,
        mask_seed: None,
    };

    let (rgb, boxes, dhs_img) = if cfg.plan.needs_cloud() {
        let cloud = load_cloud(&frame.cloud_path).map_err(|e| format!("cloud: {e}"))?;
        let (cw, ch) = (cloud.width() as u32, cloud.height() as u32);
        // mixing needs pixel alignment; same-aspect frames are resampled
        // onto the cloud grid, anything else is rejected
        let (rgb, boxes) = if (rgb.width(), rgb.height()) != (cw, ch) {
            let rgb_aspect = f64::from(rgb.width()) / f64::from(rgb.height());
            let cloud_aspect = f64::from(cw) / f64::from(ch);
            if ((rgb_aspect - cloud_aspect) / cloud_aspect).abs() > 0.01 {
                return Err(format!(
                    "misaligned rgb/cloud dimensions: {}x{} vs {cw}x{ch}",
                    rgb.width(),
                    rgb.height()
                ));
            }
            let sx = f64::from(cw) / f64::from(rgb.width());
            let sy = f64::from(ch) / f64::from(rgb.height());
            let resized =
                image::imageops::resize(&rgb, cw, ch, image::imageops::FilterType::Triangle);
            let boxes = boxes
                .iter()
                .map(|lb| LabeledBox {
                    category_id: lb.category_id,
                    bbox: BoundingBox {
                        x: lb.bbox.x * sx,
                        y: lb.bbox.y * sy,
                        w: lb.bbox.w * sx,
                        h: lb.bbox.h * sy,
                    },
                })
                .collect();
            (resized, boxes)
        } else {
            (rgb, boxes)
        };
        let dhs_img = dhs::encode_dhs(&cloud).to_rgb_image();
        (rgb, boxes, Some(dhs_img))
    } else {
        (rgb, boxes, None)
    };

    if cfg.plan.rgb {
        push_image(format!("{}_rgb.png", frame.id), &rgb, prov("rgb"))?;
    }
    if cfg.plan.dhs {
        let dhs_img = dhs_img.as_ref().expect("cloud loaded for dhs");
        push_image(format!("{}_dhs.png", frame.id), dhs_img, prov("dhs"))?;
    }
    if let Some(cppm) = cfg.plan.cppm {
        let dhs_img = dhs_img.as_ref().expect("cloud loaded for cppm");
        let mask = mixing::cppm_mask(
            rgb.width() as usize,
            rgb.height() as usize,
            cppm.patch_size,
            Label::A,
        );
        let mixed = mixing::apply_mask(&rgb, dhs_img, &mask).map_err(|e| e.to_string())?;
        let mut p = prov("cppm");
        p.patch_size = Some(cppm.patch_size);
        push_image(format!("{}_cppm.png", frame.id), &mixed, p)?;
    }
    if let Some(sffm) = cfg.plan.sffm {
        let dhs_img = dhs_img.as_ref().expect("cloud loaded for sffm");
        let batch_seed = derive_seed(cfg.policy.seed, &format!("{}/sffm", frame.id));
        let samples = mixing::sffm_batch(
            rgb.width() as usize,
            rgb.height() as usize,
            sffm.count,
            sffm.prob_low,
            sffm.prob_high,
            sffm.neighborhood,
            batch_seed,
        );
        for (i, sample) in samples.iter().enumerate() {
            let mixed = mixing::apply_mask(&rgb, dhs_img, &sample.mask).map_err(|e| e.to_string())?;
            let mut p = prov(&format!("sffm{i}"));
            p.p_a = Some(sample.p_a);
            p.p_b = Some(sample.p_b);
            p.mask_seed = Some(sample.seed);
            push_image(format!("{}_sffm{i}.png", frame.id), &mixed, p)?;
        }
    }

    Ok(FrameOutput {
        boxes,
        images: emitted,
        annotations_out_of_set: out_of_set,
    })
}
