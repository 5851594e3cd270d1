//! Subject masks and the shot metrics computed from them.
//!
//! Pixel coordinates put the origin at the centre of the top-left pixel, with
//! x growing rightward and y growing downward. Column `i` has centre `x = i`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::simenv::WorldState;
use crate::{Error, Result};

/// Fixed camera parameters: image size and horizontal field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub width_px: u32,
    pub height_px: u32,
    /// Horizontal field of view in radians.
    pub fov_h: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width_px: 120,
            height_px: 90,
            fov_h: 1.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(width_px: u32, height_px: u32, fov_h: f64) -> Result<Self> {
        let cam = Self {
            width_px,
            height_px,
            fov_h,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Config(format!(
                "camera resolution must be positive, got {}x{}",
                self.width_px, self.height_px
            )));
        }
        if !(self.fov_h > 0.0 && self.fov_h < std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "horizontal field of view must lie in (0, pi), got {}",
                self.fov_h
            )));
        }
        Ok(())
    }

    /// Image midpoint `w / 2` used by the offset-angle formula.
    pub fn midpoint_px(&self) -> f64 {
        f64::from(self.width_px) / 2.0
    }

    pub fn vertical_midpoint_px(&self) -> f64 {
        f64::from(self.height_px) / 2.0
    }

    /// Pinhole focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        self.midpoint_px() / (self.fov_h / 2.0).tan()
    }

    /// Pixel onto which the optical axis projects.
    ///
    /// This is the centre pixel `(w / 2, h / 2)` rounded down, so even-sized
    /// frames put the axis exactly on the midpoint and odd-sized frames on
    /// the middle pixel.
    pub fn principal_point(&self) -> (f64, f64) {
        (
            f64::from(self.width_px / 2),
            f64::from(self.height_px / 2),
        )
    }

    pub fn total_pixels(&self) -> usize {
        self.width_px as usize * self.height_px as usize
    }
}

/// Row-major binary image: `true` marks subject pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width_px: u32,
    height_px: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width_px: u32, height_px: u32) -> Self {
        Self {
            width_px,
            height_px,
            bits: vec![false; width_px as usize * height_px as usize],
        }
    }

    pub fn from_bits(width_px: u32, height_px: u32, bits: Vec<bool>) -> Result<Self> {
        let expected = width_px as usize * height_px as usize;
        if bits.len() != expected {
            return Err(Error::shape(expected, bits.len()));
        }
        Ok(Self {
            width_px,
            height_px,
            bits,
        })
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }

    pub fn total_pixels(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let idx = self.index(x, y);
        self.bits[idx] = value;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Clears every set pixel for which `drop` returns true.
    pub fn retain_pixels(&mut self, mut keep: impl FnMut() -> bool) {
        for bit in self.bits.iter_mut().filter(|b| **b) {
            *bit = keep();
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width_px && y < self.height_px,
            "pixel ({x}, {y}) outside {}x{} mask",
            self.width_px,
            self.height_px
        );
        y as usize * self.width_px as usize + x as usize
    }

    /// Plain-text dump: a `W H` header line, then one line of `0`/`1` per row.
    pub fn to_pbm(&self) -> String {
        let mut out = String::with_capacity(self.bits.len() * 2 + 16);
        let _ = writeln!(out, "{} {}", self.width_px, self.height_px);
        for row in self.bits.chunks(self.width_px.max(1) as usize) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_pbm(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("mask dump", "missing header"))?;
        let dims: Vec<u32> = header
            .split_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse("mask dump", e))?;
        let [w, h] = dims[..] else {
            return Err(Error::parse("mask dump", format!("bad header {header:?}")));
        };
        let mut bits = Vec::with_capacity(w as usize * h as usize);
        for line in lines {
            for tok in line.split_whitespace() {
                match tok {
                    "0" => bits.push(false),
                    "1" => bits.push(true),
                    other => {
                        return Err(Error::parse("mask dump", format!("bad pixel {other:?}")))
                    }
                }
            }
        }
        Self::from_bits(w, h, bits)
    }
}

/// Raw geometric moments up to first order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m00: f64,
    pub m10: f64,
    pub m01: f64,
}

impl Moments {
    /// Mass centre `(m10 / m00, m01 / m00)`; `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        (self.m00 > 0.0).then(|| (self.m10 / self.m00, self.m01 / self.m00))
    }
}

impl std::ops::Add for Moments {
    type Output = Moments;

    fn add(self, rhs: Moments) -> Moments {
        Moments {
            m00: self.m00 + rhs.m00,
            m10: self.m10 + rhs.m10,
            m01: self.m01 + rhs.m01,
        }
    }
}

pub fn compute_moments(mask: &BinaryMask) -> Moments {
    let w = mask.width_px as usize;
    let mut m00 = 0u64;
    let mut m10 = 0u64;
    let mut m01 = 0u64;
    if w > 0 {
        for (y, row) in mask.bits.chunks(w).enumerate() {
            let mut row_count = 0u64;
            for (x, _) in row.iter().enumerate().filter(|(_, &b)| b) {
                row_count += 1;
                m10 += x as u64;
            }
            m00 += row_count;
            m01 += row_count * y as u64;
        }
    }
    // Integer sums stay exact well below 2^53 for any practical frame.
    Moments {
        m00: m00 as f64,
        m10: m10 as f64,
        m01: m01 as f64,
    }
}

/// Fraction of the frame covered by the subject.
pub fn area_percentage(moments: &Moments, mask: &BinaryMask) -> f64 {
    moments.m00 / mask.total_pixels() as f64
}

/// Angle between the optical axis and the subject centroid, linear in the
/// pixel offset from the image midpoint.
pub fn camera_offset_angle(centroid_x: f64, cam: &CameraIntrinsics) -> f64 {
    let midpoint = cam.midpoint_px();
    let pixel_offset = centroid_x - midpoint;
    pixel_offset * ((cam.fov_h / 2.0) / midpoint)
}

/// Bearing of the subject relative to the robot heading.
pub fn subject_offset_angle(camera_offset: f64, pan: f64) -> f64 {
    camera_offset + pan
}

/// Everything the controllers and rewards read from one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotMetrics {
    pub area_frac: f64,
    /// Centroid in pixels, absent when the subject is not visible.
    pub centroid: Option<(f64, f64)>,
    pub pixel_offset: Option<f64>,
    pub camera_offset: Option<f64>,
    pub subject_offset: Option<f64>,
}

impl ShotMetrics {
    pub fn from_moments(moments: &Moments, mask: &BinaryMask, cam: &CameraIntrinsics, pan: f64) -> Self {
        let area_frac = area_percentage(moments, mask);
        let centroid = moments.centroid();
        let pixel_offset = centroid.map(|(x, _)| x - cam.midpoint_px());
        let camera_offset = centroid.map(|(x, _)| camera_offset_angle(x, cam));
        let subject_offset = camera_offset.map(|a| subject_offset_angle(a, pan));
        Self {
            area_frac,
            centroid,
            pixel_offset,
            camera_offset,
            subject_offset,
        }
    }

    pub fn measure(mask: &BinaryMask, cam: &CameraIntrinsics, pan: f64) -> Self {
        Self::from_moments(&compute_moments(mask), mask, cam, pan)
    }

    pub fn subject_visible(&self) -> bool {
        self.centroid.is_some()
    }

    pub fn centroid_x(&self) -> Option<f64> {
        self.centroid.map(|c| c.0)
    }

    pub fn centroid_y(&self) -> Option<f64> {
        self.centroid.map(|c| c.1)
    }
}

/// Target and upper bound for the normalised distance metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaParams {
    expected: f64,
    maximum: f64,
}

impl DeltaParams {
    pub fn new(expected: f64, maximum: f64) -> Result<Self> {
        if !(expected > 0.0 && expected < maximum && maximum.is_finite()) {
            return Err(Error::InputDomain(format!(
                "delta metric needs 0 < expected < maximum, got expected={expected}, maximum={maximum}"
            )));
        }
        Ok(Self { expected, maximum })
    }

    pub fn expected(&self) -> f64 {
        self.expected
    }

    pub fn maximum(&self) -> f64 {
        self.maximum
    }
}

/// Normalised relative error between an actual and a desired shot value.
///
/// Positive below the target, negative at or above it, zero exactly on it,
/// and `1` / `-1` at the ends of `[0, maximum]`.
pub fn delta_metric(actual: f64, params: &DeltaParams) -> Result<f64> {
    if !(0.0..=params.maximum).contains(&actual) {
        return Err(Error::InputDomain(format!(
            "delta metric input {actual} outside [0, {}]",
            params.maximum
        )));
    }
    let diff = (actual - params.expected).abs();
    Ok(if actual < params.expected {
        diff / params.expected
    } else {
        diff / (params.expected - params.maximum)
    })
}

/// Subject disk as seen by the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedDisk {
    /// Horizontal offset of the disk centre from the principal point, pixels.
    pub offset_x: f64,
    /// Vertical offset (downward positive) from the principal point, pixels.
    pub offset_y: f64,
    pub radius_px: f64,
}

/// Pinhole projection of the spherical subject, or `None` when its centre is
/// not in front of the camera.
pub fn project_subject(world: &WorldState, cam: &CameraIntrinsics) -> Option<ProjectedDisk> {
    let yaw = world.robot_heading + world.pan;
    let (sin_yaw, cos_yaw) = yaw.sin_cos();
    let (sin_tilt, cos_tilt) = world.tilt.sin_cos();

    let dx = world.subject_x - world.robot_x;
    let dy = world.subject_y - world.robot_y;
    let dz = world.subject_z - world.camera_height;

    // Ground-plane angles grow clockwise (from +x toward +y, +y to the robot's
    // right), so the camera's right axis is the heading rotated by +90 degrees.
    let along = dx * cos_yaw + dy * sin_yaw;
    let lateral = -dx * sin_yaw + dy * cos_yaw;
    let depth = along * cos_tilt + dz * sin_tilt;
    let up = -along * sin_tilt + dz * cos_tilt;

    if depth <= 0.0 {
        return None;
    }
    let focal = cam.focal_px();
    Some(ProjectedDisk {
        offset_x: focal * lateral / depth,
        offset_y: -focal * up / depth,
        radius_px: focal * world.subject_radius / depth,
    })
}

/// Synthesises the subject mask that colour thresholding would produce.
pub fn render_mask(world: &WorldState, cam: &CameraIntrinsics) -> BinaryMask {
    let mut mask = BinaryMask::new(cam.width_px, cam.height_px);
    if let Some(disk) = project_subject(world, cam) {
        rasterize_disk(&mut mask, cam.principal_point(), &disk);
    }
    mask
}

fn rasterize_disk(mask: &mut BinaryMask, principal: (f64, f64), disk: &ProjectedDisk) {
    let (cx, cy) = principal;
    let r = disk.radius_px;
    if !(r.is_finite() && disk.offset_x.is_finite() && disk.offset_y.is_finite()) {
        return;
    }
    let w = f64::from(mask.width_px);
    let h = f64::from(mask.height_px);
    let x_lo = (cx + disk.offset_x - r).floor().max(0.0);
    let x_hi = (cx + disk.offset_x + r).ceil().min(w - 1.0);
    let y_lo = (cy + disk.offset_y - r).floor().max(0.0);
    let y_hi = (cy + disk.offset_y + r).ceil().min(h - 1.0);
    if x_lo > x_hi || y_lo > y_hi {
        return;
    }
    let r2 = r * r;
    for y in y_lo as u32..=y_hi as u32 {
        // Offsets are formed relative to the principal point first so that
        // mirrored geometry rasterizes to exactly mirrored pixels.
        let ey = (f64::from(y) - cy) - disk.offset_y;
        for x in x_lo as u32..=x_hi as u32 {
            let ex = (f64::from(x) - cx) - disk.offset_x;
            if ex * ex + ey * ey <= r2 {
                mask.set(x, y, true);
            }
        }
    }
}
