//! DHS pseudo-image encoding: turn an organized point cloud into a
//! three-channel image of Depth, Height and Signed angle, each normalized
//! to `[0, 1]`.
//!
//! Channel definitions, per pixel `k` of scanline `i` (a grid row):
//!
//! * **D**: distance from the sensor origin to the point. The default is
//!   the Euclidean range `|X_ik|`; [`DepthMode::Axial`] instead uses the
//!   magnitude of the coordinate along the sensor viewing axis, which is +y
//!   under the depth-map loader's convention.
//! * **H**: the coordinate along the up axis (+z).
//! * **S**: with `d1 = X_{i,k+1} - X_{i,k}` and `d0 = X_{i,k} - X_{i,k-1}`,
//!   the angle of `d1` against the +z axis (0..180 degrees), signed by
//!   `sgn(d1 . d0)`: positive when consecutive difference vectors share
//!   orientation, negative otherwise, zero when they are perpendicular.
//!   Defined only where all three points are present and both difference
//!   vectors are nonzero; everywhere else the pixel is invalid.
//!
//! D and H are normalized per image by min-max (a constant channel maps to
//! 0.5); S has the intrinsic bound [-180, 180] and uses that fixed range so
//! its sign semantics stay stable across images. A pseudo-image pixel is
//! valid iff all three raw channels were computable there; invalid pixels
//! are zero in every channel.

use crate::geometry::OrganizedPointCloud;

/// How the D channel measures distance from the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthMode {
    /// Euclidean range from the sensor origin.
    #[default]
    Range,
    /// Magnitude of the coordinate along the sensor viewing axis (+y under
    /// the depth-map back-projection convention).
    Axial,
}

/// Channel normalization modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Affine map of the valid values so min -> 0 and max -> 1; a constant
    /// channel maps to 0.5.
    MinMax,
    /// Affine map of `[lo, hi]` onto `[0, 1]`, clamped.
    FixedRange { lo: f64, hi: f64 },
}

/// Options for [`encode_dhs_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EncodeOptions {
    pub depth_mode: DepthMode,
}

/// Unnormalized single channel with an explicit validity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannel {
    pub width: usize,
    pub height: usize,
    /// Row-major values; unspecified (zero) where `valid` is false.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RawChannel {
    fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }
}

/// Encoded three-channel pseudo-image. Channel values are in `[0, 1]`;
/// a pixel is valid iff all three channels were computable there, and
/// invalid pixels carry zero in every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoImage {
    pub width: usize,
    pub height: usize,
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PseudoImage {
    /// Renders to an 8-bit RGB image with channel order (D, H, S) and
    /// `value = round(v * 255)`.
    pub fn to_rgb_image(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            *px = image::Rgb([
                (self.d[i] * 255.0).round() as u8,
                (self.h[i] * 255.0).round() as u8,
                (self.s[i] * 255.0).round() as u8,
            ]);
        }
        img
    }

    /// Validity as a 1-channel image: 255 where valid, 0 elsewhere.
    pub fn validity_image(&self) -> image::GrayImage {
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            *px = image::Luma([if self.valid[i] { 255 } else { 0 }]);
        }
        img
    }
}

/// Per-pixel distance from the sensor origin; valid exactly where the point
/// is present.
pub fn depth_channel(cloud: &OrganizedPointCloud, mode: DepthMode) -> RawChannel {
    let mut ch = RawChannel::empty(cloud.width(), cloud.height());
    for (i, p) in cloud.points().iter().enumerate() {
        if let Some([x, y, z]) = p {
            ch.values[i] = match mode {
                DepthMode::Range => (x * x + y * y + z * z).sqrt(),
                DepthMode::Axial => y.abs(),
            };
            ch.valid[i] = true;
        }
    }
    ch
}

/// Per-pixel coordinate along the up axis (+z); valid exactly where the
/// point is present. Heights may be negative before normalization.
pub fn height_channel(cloud: &OrganizedPointCloud) -> RawChannel {
    let mut ch = RawChannel::empty(cloud.width(), cloud.height());
    for (i, p) in cloud.points().iter().enumerate() {
        if let Some([_, _, z]) = p {
            ch.values[i] = *z;
            ch.valid[i] = true;
        }
    }
    ch
}

/// Signed angle channel, in degrees within [-180, 180]. A pixel is valid
/// only when its left and right neighbors on the scanline are present and
/// both difference vectors are nonzero.
pub fn signed_angle_channel(cloud: &OrganizedPointCloud) -> RawChannel {
    let (w, h) = (cloud.width(), cloud.height());
    let mut ch = RawChannel::empty(w, h);
    if w < 3 {
        return ch;
    }
    for r in 0..h {
        let row = cloud.row(r);
        for k in 1..w - 1 {
            let (prev, cur, next) = match (row[k - 1], row[k], row[k + 1]) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => continue,
            };
            let d1 = sub(next, cur);
            let d0 = sub(cur, prev);
            let n1 = norm(d1);
            if n1 == 0.0 || norm(d0) == 0.0 {
                continue;
            }
            let angle = (d1[2] / n1).clamp(-1.0, 1.0).acos().to_degrees();
            let orient = dot(d1, d0);
            let idx = r * w + k;
            ch.values[idx] = if orient > 0.0 {
                angle
            } else if orient < 0.0 {
                -angle
            } else {
                0.0
            };
            ch.valid[idx] = true;
        }
    }
    ch
}

/// Normalizes a raw channel into `[0, 1]`. Invalid pixels come out as zero
/// and stay invalid.
pub fn normalize_channel(raw: &RawChannel, mode: Normalization) -> RawChannel {
    let mut out = RawChannel::empty(raw.width, raw.height);
    out.valid.copy_from_slice(&raw.valid);
    match mode {
        Normalization::MinMax => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (v, ok) in raw.values.iter().zip(&raw.valid) {
                if *ok {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
            }
            if lo > hi {
                return out; // all invalid
            }
            let span = hi - lo;
            for i in 0..raw.values.len() {
                if raw.valid[i] {
                    out.values[i] = if span == 0.0 {
                        0.5
                    } else {
                        (raw.values[i] - lo) / span
                    };
                }
            }
        }
        Normalization::FixedRange { lo, hi } => {
            debug_assert!(hi > lo);
            for i in 0..raw.values.len() {
                if raw.valid[i] {
                    out.values[i] = ((raw.values[i] - lo) / (hi - lo)).clamp(0.0, 1.0);
                }
            }
        }
    }
    out
}

/// Encodes with the default options (Euclidean range depth).
pub fn encode_dhs(cloud: &OrganizedPointCloud) -> PseudoImage {
    encode_dhs_with(cloud, &EncodeOptions::default())
}

/// Full DHS encoding: D and H per-image min-max normalized, S mapped from
/// its fixed [-180, 180] range. An all-invalid cloud yields an all-zero
/// image with empty validity.
pub fn encode_dhs_with(cloud: &OrganizedPointCloud, opts: &EncodeOptions) -> PseudoImage {
    let d_raw = depth_channel(cloud, opts.depth_mode);
    let h_raw = height_channel(cloud);
    let s_raw = signed_angle_channel(cloud);

    let d = normalize_channel(&d_raw, Normalization::MinMax);
    let h = normalize_channel(&h_raw, Normalization::MinMax);
    let s = normalize_channel(
        &s_raw,
        Normalization::FixedRange {
            lo: -180.0,
            hi: 180.0,
        },
    );

    let n = cloud.width() * cloud.height();
    let mut out = PseudoImage {
        width: cloud.width(),
        height: cloud.height(),
        d: vec![0.0; n],
        h: vec![0.0; n],
        s: vec![0.0; n],
        valid: vec![false; n],
    };
    for i in 0..n {
        if d_raw.valid[i] && h_raw.valid[i] && s_raw.valid[i] {
            out.d[i] = d.values[i];
            out.h[i] = h.values[i];
            out.s[i] = s.values[i];
            out.valid[i] = true;
        }
    }
    out
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
