//! Inter-modality mixture masks and their application.
//!
//! A [`MixtureMask`] assigns every pixel one of two labels: `A` (the first
//! modality, e.g. RGB) or `B` (the second, e.g. the DHS pseudo-image).
//! [`apply_mask`] then composes one output image by copying, per pixel, the
//! value of whichever input the mask selects; pixels are never blended, so
//! each modality's original signal survives untouched.
//!
//! Two generators are provided:
//!
//! * [`cppm_mask`] is chessboard per-patch mixing: the grid is divided into
//!   square patches and labels alternate per patch, deterministically.
//! * [`sffm_mask`] is stochastic flood-fill mixing: regions are grown by a
//!   flood fill in which each edge to a not-yet-assigned neighbor is
//!   traversed with a per-label probability, yielding organic random
//!   regions whose granularity follows the probabilities (lower p, finer
//!   structure).
//!
//! # Determinism
//!
//! `sffm_mask` is reproducible bit-for-bit from its parameter tuple. The
//! generator is ChaCha8 seeded via `ChaCha8Rng::seed_from_u64(seed)`, and
//! the draw order is fixed: pixels are scanned row-major for unassigned
//! seeds; the first seed's label costs one `gen_bool(0.5)` draw and later
//! seeds alternate without consuming randomness; each edge attempt costs
//! one `gen::<f64>() < p` draw. The fill uses a FIFO frontier and visits
//! neighbors top, right, bottom, left, then (in 8-neighbor mode) the
//! diagonals top-left, top-right, bottom-right, bottom-left.

use std::collections::VecDeque;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::RgbImage;

#[derive(Debug, Error)]
pub enum MixingError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("invalid mixing parameters: {0}")]
    InvalidParams(String),
    #[error("not a mask image: {0}")]
    NotAMask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("png encoding failed: {0}")]
    Png(String),
}

/// Which modality supplies a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    /// First modality (RGB by convention). Encoded as bit 0 in mask PNGs.
    A = 0,
    /// Second modality (DHS by convention). Encoded as bit 1.
    B = 1,
}

impl Label {
    pub fn opposite(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }
}

/// Pixel connectivity for the flood fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// Top, right, bottom, left.
    #[default]
    Four,
    /// The four axis neighbors plus the four diagonals.
    Eight,
}

impl Neighborhood {
    fn offsets(self) -> &'static [(i64, i64)] {
        const FOUR: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
        const EIGHT: [(i64, i64); 8] = [
            (-1, 0),
            (0, 1),
            (1, 0),
            (0, -1),
            (-1, -1),
            (-1, 1),
            (1, 1),
            (1, -1),
        ];
        match self {
            Neighborhood::Four => &FOUR,
            Neighborhood::Eight => &EIGHT,
        }
    }
}

/// Per-pixel binary modality selection field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixtureMask {
    width: usize,
    height: usize,
    cells: Vec<Label>,
}

impl MixtureMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Label] {
        &self.cells
    }

    pub fn label(&self, row: usize, col: usize) -> Label {
        self.cells[row * self.width + col]
    }

    /// Fraction of pixels labeled `A`.
    pub fn a_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        let a = self.cells.iter().filter(|l| **l == Label::A).count();
        a as f64 / self.cells.len() as f64
    }
}

/// Generation parameters, as carried by CLI and dataset configuration.
#[derive(Debug, Clone, Copy)]
pub struct MixingParams {
    pub mode: MixMode,
    pub patch_size: usize,
    pub p_a: f64,
    pub p_b: f64,
    pub neighborhood: Neighborhood,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixMode {
    Cppm,
    Sffm,
}

impl MixingParams {
    pub fn validate(&self) -> Result<(), MixingError> {
        if self.patch_size == 0 {
            return Err(MixingError::InvalidParams("patch_size must be >= 1".into()));
        }
        for (name, p) in [("p_a", self.p_a), ("p_b", self.p_b)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(MixingError::InvalidParams(format!(
                    "{name} must lie in (0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Chessboard per-patch mask. Pixel `(r, c)` belongs to patch
/// `(r / patch_size, c / patch_size)`; patches whose row+col index is even
/// get `origin_label`. Deterministic, no randomness involved.
pub fn cppm_mask(width: usize, height: usize, patch_size: usize, origin_label: Label) -> MixtureMask {
    assert!(patch_size >= 1, "patch_size must be >= 1");
    let mut cells = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let even = ((r / patch_size) + (c / patch_size)).is_multiple_of(2);
            cells.push(if even { origin_label } else { origin_label.opposite() });
        }
    }
    MixtureMask {
        width,
        height,
        cells,
    }
}

/// Stochastic flood-fill mask. See the module docs for the exact seeding
/// and draw-order contract. Panics if a probability is outside (0, 1].
pub fn sffm_mask(
    width: usize,
    height: usize,
    p_a: f64,
    p_b: f64,
    neighborhood: Neighborhood,
    seed: u64,
) -> MixtureMask {
    assert!(p_a > 0.0 && p_a <= 1.0, "p_a must lie in (0, 1]");
    assert!(p_b > 0.0 && p_b <= 1.0, "p_b must lie in (0, 1]");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = width * height;
    let mut cells: Vec<Option<Label>> = vec![None; n];
    let mut frontier = VecDeque::new();
    let mut prev_seed_label: Option<Label> = None;
    let offsets = neighborhood.offsets();

    for start in 0..n {
        if cells[start].is_some() {
            continue;
        }
        let label = match prev_seed_label {
            None => {
                if rng.gen_bool(0.5) {
                    Label::A
                } else {
                    Label::B
                }
            }
            Some(prev) => prev.opposite(),
        };
        prev_seed_label = Some(label);
        let p = match label {
            Label::A => p_a,
            Label::B => p_b,
        };

        cells[start] = Some(label);
        frontier.push_back(start);
        while let Some(cur) = frontier.pop_front() {
            let (r, c) = ((cur / width) as i64, (cur % width) as i64);
            for (dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= height as i64 || nc >= width as i64 {
                    continue;
                }
                let ni = nr as usize * width + nc as usize;
                if cells[ni].is_none() && rng.gen::<f64>() < p {
                    cells[ni] = Some(label);
                    frontier.push_back(ni);
                }
            }
        }
    }

    MixtureMask {
        width,
        height,
        cells: cells.into_iter().map(|l| l.expect("fill is total")).collect(),
    }
}

/// One mask of an SFFM batch together with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct SffmSample {
    pub p_a: f64,
    pub p_b: f64,
    pub seed: u64,
    pub mask: MixtureMask,
}

/// Draws `count` probability pairs uniformly from `[prob_low, prob_high]`
/// and emits one seeded mask per pair. For each sample, in order, the batch
/// generator draws `p_a`, `p_b`, then a fresh 64-bit mask seed from a
/// ChaCha8 stream seeded with `seed`; the whole batch is deterministic.
pub fn sffm_batch(
    width: usize,
    height: usize,
    count: usize,
    prob_low: f64,
    prob_high: f64,
    neighborhood: Neighborhood,
    seed: u64,
) -> Vec<SffmSample> {
    assert!(count >= 1, "count must be >= 1");
    assert!(
        prob_low > 0.0 && prob_low <= prob_high && prob_high <= 1.0,
        "need 0 < prob_low <= prob_high <= 1"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let p_a = rng.gen_range(prob_low..=prob_high);
        let p_b = rng.gen_range(prob_low..=prob_high);
        let mask_seed = rng.gen::<u64>();
        out.push(SffmSample {
            p_a,
            p_b,
            seed: mask_seed,
            mask: sffm_mask(width, height, p_a, p_b, neighborhood, mask_seed),
        });
    }
    out
}

/// Composes one image from two pixel-aligned inputs: each output pixel is a
/// bit-exact copy of `img_a`'s pixel where the mask says `A` and of
/// `img_b`'s pixel where it says `B`. Never interpolates.
pub fn apply_mask(
    img_a: &RgbImage,
    img_b: &RgbImage,
    mask: &MixtureMask,
) -> Result<RgbImage, MixingError> {
    let (w, h) = (img_a.width(), img_a.height());
    if img_b.width() != w || img_b.height() != h {
        return Err(MixingError::DimensionMismatch(
            w,
            h,
            img_b.width(),
            img_b.height(),
        ));
    }
    if mask.width != w as usize || mask.height != h as usize {
        return Err(MixingError::DimensionMismatch(
            w,
            h,
            mask.width as u32,
            mask.height as u32,
        ));
    }
    let mut out = RgbImage::new(w, h);
    for (i, px) in out.pixels_mut().enumerate() {
        let (r, c) = (i / w as usize, i % w as usize);
        *px = match mask.cells[i] {
            Label::A => *img_a.get_pixel(c as u32, r as u32),
            Label::B => *img_b.get_pixel(c as u32, r as u32),
        };
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Mask statistics
// ---------------------------------------------------------------------------

/// Summary of one mask: A-fraction plus connected-region structure under
/// 4-connectivity (regions are maximal same-label components).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MaskStats {
    pub a_fraction: f64,
    pub region_count: usize,
    pub mean_region_size: f64,
}

pub fn mask_stats(mask: &MixtureMask) -> MaskStats {
    let (w, h) = (mask.width, mask.height);
    let n = w * h;
    let mut seen = vec![false; n];
    let mut regions = 0usize;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        regions += 1;
        let label = mask.cells[start];
        seen[start] = true;
        stack.push(start);
        while let Some(cur) = stack.pop() {
            let (r, c) = (cur / w, cur % w);
            let mut visit = |ni: usize| {
                if !seen[ni] && mask.cells[ni] == label {
                    seen[ni] = true;
                    stack.push(ni);
                }
            };
            if r > 0 {
                visit(cur - w);
            }
            if r + 1 < h {
                visit(cur + w);
            }
            if c > 0 {
                visit(cur - 1);
            }
            if c + 1 < w {
                visit(cur + 1);
            }
        }
    }
    MaskStats {
        a_fraction: mask.a_fraction(),
        region_count: regions,
        mean_region_size: if regions == 0 { 0.0 } else { n as f64 / regions as f64 },
    }
}

// ---------------------------------------------------------------------------
// Mask PNG I/O
// ---------------------------------------------------------------------------

/// Writes the mask as a 1-bit grayscale PNG: label `A` is bit 0 (black),
/// `B` is bit 1 (white). Rows are packed most-significant-bit first.
pub fn save_mask_png(mask: &MixtureMask, path: &Path) -> Result<(), MixingError> {
    let (w, h) = (mask.width, mask.height);
    let row_bytes = w.div_ceil(8);
    let mut packed = vec![0u8; row_bytes * h];
    for r in 0..h {
        for c in 0..w {
            if mask.cells[r * w + c] == Label::B {
                packed[r * row_bytes + c / 8] |= 0x80 >> (c % 8);
            }
        }
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let mut writer = enc.write_header().map_err(|e| MixingError::Png(e.to_string()))?;
    writer
        .write_image_data(&packed)
        .map_err(|e| MixingError::Png(e.to_string()))?;
    Ok(())
}

/// Reads a mask PNG. Accepts any grayscale/RGB encoding whose pixels decode
/// to exactly 0 (label `A`) or 255 (label `B`); anything else is rejected
/// as not a mask.
pub fn load_mask_png(path: &Path) -> Result<MixtureMask, MixingError> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut cells = Vec::with_capacity(w * h);
    for px in img.pixels() {
        match px.0[0] {
            0 => cells.push(Label::A),
            255 => cells.push(Label::B),
            other => {
                return Err(MixingError::NotAMask(format!(
                    "{}: pixel value {other} is neither 0 nor 255",
                    path.display()
                )))
            }
        }
    }
    Ok(MixtureMask {
        width: w,
        height: h,
        cells,
    })
}
