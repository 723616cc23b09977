//! Core spatial types shared by the encoder and the dataset pipeline:
//! organized point clouds, RGB images, bounding boxes.
//!
//! An organized point cloud keeps the sensor's 2D grid layout: one optional
//! 3D point per pixel, with rows acting as scanlines. Missing measurements
//! are explicit absences rather than sentinel coordinates, so downstream
//! min-max normalization never sees fabricated zeros. The vertical (up)
//! direction is the +z axis by convention; loaders orient their output
//! accordingly.
//!
//! All types here are immutable value objects after construction and are
//! safe to share across threads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// RGB image carrier used throughout the crate: 8 bits per channel,
/// row-major.
pub type RgbImage = image::RgbImage;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid size mismatch: expected {expected} points, got {actual}")]
    GridSize { expected: usize, actual: usize },
    #[error("non-finite coordinate in present point at grid index {index}")]
    NonFinitePoint { index: usize },
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },
    #[error("malformed cloud data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

// ---------------------------------------------------------------------------
// Bounding boxes
// ---------------------------------------------------------------------------

/// Axis-aligned box in continuous pixel coordinates: top-left corner plus
/// extent. Areas are `w * h`, without the legacy "+1" pixel correction,
/// matching the COCO-style annotations the pipeline emits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Validates that the extent is positive and all coordinates are finite.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let reason = if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            Some("coordinates must be finite")
        } else if w <= 0.0 || h <= 0.0 {
            Some("extent must be positive")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(GeometryError::InvalidBox { x, y, w, h, reason }),
            None => Ok(Self { x, y, w, h }),
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersects with a window (another box); returns `None` when the
    /// overlap is empty.
    pub fn clip_to(&self, window: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(window.x);
        let y0 = self.y.max(window.y);
        let x1 = (self.x + self.w).min(window.x + window.w);
        let y1 = (self.y + self.h).min(window.y + window.h);
        if x1 > x0 && y1 > y0 {
            Some(BoundingBox {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
            })
        } else {
            None
        }
    }
}

/// Intersection-over-union of two boxes. Zero when disjoint, one iff
/// identical; symmetric and invariant under common translation and scaling.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter / union
}

// ---------------------------------------------------------------------------
// Organized point clouds
// ---------------------------------------------------------------------------

/// Sensor-grid-aligned point cloud. `points` is row-major with one entry
/// per pixel; `None` marks pixels where the sensor returned no measurement.
/// Rows are scanlines, traversed left to right; the up axis is +z.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedPointCloud {
    width: usize,
    height: usize,
    points: Vec<Option<[f64; 3]>>,
}

impl OrganizedPointCloud {
    pub fn new(
        width: usize,
        height: usize,
        points: Vec<Option<[f64; 3]>>,
    ) -> Result<Self, GeometryError> {
        if points.len() != width * height {
            return Err(GeometryError::GridSize {
                expected: width * height,
                actual: points.len(),
            });
        }
        for (index, p) in points.iter().enumerate() {
            if let Some(c) = p {
                if !c.iter().all(|v| v.is_finite()) {
                    return Err(GeometryError::NonFinitePoint { index });
                }
            }
        }
        Ok(Self {
            width,
            height,
            points,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[Option<[f64; 3]>] {
        &self.points
    }

    pub fn point(&self, row: usize, col: usize) -> Option<[f64; 3]> {
        self.points[row * self.width + col]
    }

    /// One scanline (grid row).
    pub fn row(&self, row: usize) -> &[Option<[f64; 3]>] {
        &self.points[row * self.width..(row + 1) * self.width]
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    // -- OPC1 container -----------------------------------------------------

    /// Reads the `OPC1` container: 4-byte magic `b"OPC1"`, u32-LE width,
    /// u32-LE height, then `width * height` row-major records of three
    /// f64-LE coordinates. A record whose three values are all NaN is a
    /// missing point.
    pub fn read_opc1<R: Read>(mut reader: R) -> Result<Self, GeometryError> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != b"OPC1" {
            return Err(GeometryError::Malformed("bad magic, expected OPC1".into()));
        }
        let mut dims = [0u8; 8];
        reader.read_exact(&mut dims)?;
        let width = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
        let count = width
            .checked_mul(height)
            .ok_or_else(|| GeometryError::Malformed("dimension overflow".into()))?;

        let mut points = Vec::with_capacity(count);
        let mut rec = [0u8; 24];
        for index in 0..count {
            reader.read_exact(&mut rec)?;
            let x = f64::from_le_bytes(rec[0..8].try_into().unwrap());
            let y = f64::from_le_bytes(rec[8..16].try_into().unwrap());
            let z = f64::from_le_bytes(rec[16..24].try_into().unwrap());
            if x.is_nan() && y.is_nan() && z.is_nan() {
                points.push(None);
            } else if x.is_finite() && y.is_finite() && z.is_finite() {
                points.push(Some([x, y, z]));
            } else {
                return Err(GeometryError::Malformed(format!(
                    "record {index} mixes finite and non-finite coordinates"
                )));
            }
        }
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing)? != 0 {
            return Err(GeometryError::Malformed("trailing data after grid".into()));
        }
        Self::new(width, height, points)
    }

    pub fn write_opc1<W: Write>(&self, mut writer: W) -> Result<(), GeometryError> {
        writer.write_all(b"OPC1")?;
        writer.write_all(&(self.width as u32).to_le_bytes())?;
        writer.write_all(&(self.height as u32).to_le_bytes())?;
        for p in &self.points {
            let [x, y, z] = p.unwrap_or([f64::NAN, f64::NAN, f64::NAN]);
            writer.write_all(&x.to_le_bytes())?;
            writer.write_all(&y.to_le_bytes())?;
            writer.write_all(&z.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn from_opc1_file(path: &Path) -> Result<Self, GeometryError> {
        Self::read_opc1(BufReader::new(File::open(path)?))
    }

    pub fn to_opc1_file(&self, path: &Path) -> Result<(), GeometryError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_opc1(&mut w)?;
        w.flush()?;
        Ok(())
    }

    // -- depth-map alternative ----------------------------------------------

    /// Back-projects a 16-bit depth image (millimeters, 0 = missing) through
    /// pinhole intrinsics. Camera coordinates (x right, y down, z forward)
    /// are remapped to the cloud convention (x right, y forward, z up), so
    /// the up axis lands on +z.
    pub fn from_depth_map(
        depth: &image::ImageBuffer<image::Luma<u16>, Vec<u16>>,
        intrinsics: &Intrinsics,
    ) -> Result<Self, GeometryError> {
        let (width, height) = (depth.width() as usize, depth.height() as usize);
        let mut points = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                let d = depth.get_pixel(u as u32, v as u32).0[0];
                if d == 0 {
                    points.push(None);
                    continue;
                }
                let z_cam = f64::from(d) / 1000.0;
                let x_cam = (u as f64 - intrinsics.cx) * z_cam / intrinsics.fx;
                let y_cam = (v as f64 - intrinsics.cy) * z_cam / intrinsics.fy;
                points.push(Some([x_cam, z_cam, -y_cam]));
            }
        }
        Self::new(width, height, points)
    }

    pub fn from_depth_file(
        depth_path: &Path,
        intrinsics_path: &Path,
    ) -> Result<Self, GeometryError> {
        let img = image::open(depth_path)?.into_luma16();
        let text = std::fs::read_to_string(intrinsics_path)?;
        let intr = Intrinsics::parse(&text)?;
        Self::from_depth_map(&img, &intr)
    }
}

/// Pinhole intrinsics extracted from a row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Parses nine whitespace-separated numbers:
    /// `fx 0 cx  0 fy cy  0 0 1`.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeometryError::Malformed(format!("intrinsics: {e}")))?;
        if vals.len() != 9 {
            return Err(GeometryError::Malformed(format!(
                "intrinsics: expected 9 matrix entries, got {}",
                vals.len()
            )));
        }
        let (fx, fy) = (vals[0], vals[4]);
        if fx <= 0.0 || fy <= 0.0 || !fx.is_finite() || !fy.is_finite() {
            return Err(GeometryError::Malformed(
                "intrinsics: focal lengths must be positive".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx: vals[2],
            cy: vals[5],
        })
    }
}

/// Loads a cloud from disk, dispatching on the file extension: `.opc` /
/// `.opc1` is the OPC1 container; `.png` is a 16-bit depth map whose
/// intrinsics sidecar sits next to it with the extension replaced by
/// `intr.txt` (`scan.png` -> `scan.intr.txt`).
pub fn load_cloud(path: &Path) -> Result<OrganizedPointCloud, GeometryError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("opc") | Some("opc1") => OrganizedPointCloud::from_opc1_file(path),
        Some("png") => {
            let sidecar = path.with_extension("intr.txt");
            OrganizedPointCloud::from_depth_file(path, &sidecar)
        }
        _ => Err(GeometryError::Malformed(format!(
            "unsupported cloud file extension: {}",
            path.display()
        ))),
    }
}
