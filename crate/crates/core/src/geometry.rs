//! Rigid poses, action chunks and per-embodiment normalisation.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Smallest standard deviation used when normalising. Zero-variance
/// dimensions (a constant gripper, a fixed goal) are divided by this instead.
pub const STD_FLOOR: f64 = 1e-6;

/// Which embodiment a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Data-rich embodiment (the demonstrator; the circle pusher).
    Source,
    /// Deployment embodiment (the robot; the triangle pusher).
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" | "human" | "circle" => Ok(Domain::Source),
            "target" | "robot" | "triangle" => Ok(Domain::Target),
            other => Err(Error::parse("domain", format!("unknown domain {other:?}"))),
        }
    }
}

/// Unit quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        Quaternion { w, x, y, z }.normalized()
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::contract("rotation axis must be non-zero and finite"));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Yaw (z), pitch (y), roll (x) applied as `Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Self {
        let (sy, cy) = (0.5 * yaw).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sr, cr) = (0.5 * roll).sin_cos();
        Quaternion {
            w: cr * cp * cy + sr * sp * sy,
            x: sr * cp * cy - cr * sp * sy,
            y: cr * sp * cy + sr * cp * sy,
            z: cr * cp * sy - sr * sp * cy,
        }
    }

    /// Inverse of [`Quaternion::from_yaw_pitch_roll`]; returns `[yaw, pitch, roll]`.
    pub fn to_yaw_pitch_roll(self) -> [f64; 3] {
        let Quaternion { w, x, y, z } = self;
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        [yaw, pitch, roll]
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::contract("quaternion must be non-zero and finite"));
        }
        Ok(Quaternion {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        })
    }

    pub fn conjugate(self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self ⊗ rhs`, renormalised.
    pub fn mul(self, rhs: Quaternion) -> Self {
        let (a, b) = (self, rhs);
        let q = Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        };
        // Products of unit quaternions drift by rounding only.
        q.normalized().unwrap_or(Quaternion::IDENTITY)
    }

    pub fn rotate(self, v: [f64; 3]) -> [f64; 3] {
        // v' = v + 2w(q×v) + 2 q×(q×v)
        let q = [self.x, self.y, self.z];
        let t = scale3(cross(q, v), 2.0);
        add3(add3(v, scale3(t, self.w)), cross(q, t))
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }
}

/// Rigid transform in SE(3): `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3 {
    pub translation: [f64; 3],
    pub rotation: Quaternion,
}

impl Pose3 {
    pub const IDENTITY: Pose3 = Pose3 {
        translation: [0.0; 3],
        rotation: Quaternion::IDENTITY,
    };

    pub fn new(translation: [f64; 3], rotation: Quaternion) -> Self {
        Self { translation, rotation }
    }

    pub fn from_translation(translation: [f64; 3]) -> Self {
        Self::new(translation, Quaternion::IDENTITY)
    }

    /// `self ∘ rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Pose3) -> Pose3 {
        Pose3 {
            translation: add3(self.rotation.rotate(rhs.translation), self.translation),
            rotation: self.rotation.mul(rhs.rotation),
        }
    }

    pub fn inverse(&self) -> Pose3 {
        let r_inv = self.rotation.conjugate();
        Pose3 {
            translation: scale3(r_inv.rotate(self.translation), -1.0),
            rotation: r_inv,
        }
    }

    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        add3(self.rotation.rotate(p), self.translation)
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// A length-`T` trajectory of `d`-dimensional actions, stored `T x d`.
///
/// The `normalized` flag records whether values are in raw units or in
/// z-scored units of some [`NormStats`]; the two are never mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedAction {
    values: DenseMatrix,
    normalized: bool,
}

impl ChunkedAction {
    pub fn new(values: DenseMatrix, normalized: bool) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::contract("action chunk needs horizon ≥ 1 and dim ≥ 1"));
        }
        if !values.all_finite() {
            return Err(Error::NonFinite("action chunk".into()));
        }
        Ok(Self { values, normalized })
    }

    pub fn raw(values: DenseMatrix) -> Result<Self> {
        Self::new(values, false)
    }

    pub fn from_points(points: &[Vec<f64>], normalized: bool) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(points)?, normalized)
    }

    pub fn horizon(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    /// Keeps only the listed dimensions, in order.
    pub fn select_dims(&self, dims: &[usize]) -> Result<Self> {
        if let Some(&bad) = dims.iter().find(|&&d| d >= self.dim()) {
            return Err(Error::shape(format!("dimension {bad} out of range {}", self.dim())));
        }
        let values = DenseMatrix::from_fn(self.horizon(), dims.len(), |t, k| self.values.get(t, dims[k]));
        Self::new(values, self.normalized)
    }

    pub fn normalize(&self, stats: &NormStats) -> Result<Self> {
        if self.normalized {
            return Err(Error::contract("chunk is already normalized"));
        }
        stats.check_dim(self.dim())?;
        let values = DenseMatrix::from_fn(self.horizon(), self.dim(), |t, k| {
            (self.values.get(t, k) - stats.mean[k]) / stats.std[k]
        });
        Self::new(values, true)
    }

    pub fn denormalize(&self, stats: &NormStats) -> Result<Self> {
        if !self.normalized {
            return Err(Error::contract("chunk is already in raw units"));
        }
        stats.check_dim(self.dim())?;
        let values = DenseMatrix::from_fn(self.horizon(), self.dim(), |t, k| {
            self.values.get(t, k) * stats.std[k] + stats.mean[k]
        });
        Self::new(values, false)
    }
}

/// Expresses future hand positions in the anchor frame at the prediction step.
///
/// Entry `i` is `anchor⁻¹ ∘ device_frames[i]` applied to the translation of
/// `hand_positions[i]` (hand positions are measured in their device frame).
pub fn chunk_in_reference_frame(
    hand_positions: &[Pose3],
    device_frames: &[Pose3],
    anchor: &Pose3,
) -> Result<ChunkedAction> {
    if hand_positions.is_empty() {
        return Err(Error::contract("chunk needs at least one future position"));
    }
    if hand_positions.len() != device_frames.len() {
        return Err(Error::contract(format!(
            "{} hand positions but {} device frames",
            hand_positions.len(),
            device_frames.len()
        )));
    }
    let anchor_inv = anchor.inverse();
    let rows: Vec<Vec<f64>> = hand_positions
        .iter()
        .zip(device_frames)
        .map(|(p, frame)| anchor_inv.compose(frame).transform_point(p.translation).to_vec())
        .collect();
    ChunkedAction::from_points(&rows, false)
}

/// Piecewise-linear resampling of a chunk to `target_len` steps.
///
/// Columns listed in `angle_dims` are treated as angles: each segment
/// interpolates along the shorter arc and results are wrapped to `(−π, π]`.
/// Endpoints are reproduced exactly.
pub fn resample_chunk(samples: &ChunkedAction, target_len: usize, angle_dims: &[usize]) -> Result<ChunkedAction> {
    let m = samples.horizon();
    if m < 2 {
        return Err(Error::contract("resampling needs at least two samples"));
    }
    if target_len < m {
        return Err(Error::contract(format!(
            "target length {target_len} is shorter than the {m} samples"
        )));
    }
    let d = samples.dim();
    let src = samples.values();
    let is_angle: Vec<bool> = (0..d).map(|k| angle_dims.contains(&k)).collect();
    let mut out = DenseMatrix::zeros(target_len, d);
    for t in 0..target_len {
        // Position along the sample index axis, exact at both ends.
        let s = if t + 1 == target_len {
            (m - 1) as f64
        } else {
            t as f64 * (m - 1) as f64 / (target_len - 1) as f64
        };
        let i0 = (s.floor() as usize).min(m - 2);
        let frac = s - i0 as f64;
        for k in 0..d {
            let a = src.get(i0, k);
            let b = src.get(i0 + 1, k);
            let v = if frac == 0.0 {
                a
            } else if frac == 1.0 {
                b
            } else if is_angle[k] {
                wrap_angle(a + frac * wrap_angle(b - a))
            } else {
                a + frac * (b - a)
            };
            out.set(t, k, v);
        }
    }
    ChunkedAction::new(out, samples.is_normalized())
}

/// Resamples a pose sequence into an `xyz + yaw/pitch/roll` chunk.
pub fn resample_poses(samples: &[Pose3], target_len: usize) -> Result<ChunkedAction> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|p| {
            let [yaw, pitch, roll] = p.rotation.to_yaw_pitch_roll();
            vec![p.translation[0], p.translation[1], p.translation[2], yaw, pitch, roll]
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::contract("resampling needs at least two samples"));
    }
    resample_chunk(&ChunkedAction::from_points(&rows, false)?, target_len, &[3, 4, 5])
}

/// Per-dimension mean and population standard deviation of one embodiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub domain: Domain,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits statistics over a stream of equal-length rows.
    pub fn fit<'a>(domain: Domain, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut rows_seen: Vec<&[f64]> = Vec::new();
        for r in rows {
            if count == 0 {
                sum = vec![0.0; r.len()];
            } else if r.len() != sum.len() {
                return Err(Error::shape(format!(
                    "row of length {} among rows of {}",
                    r.len(),
                    sum.len()
                )));
            }
            for (s, &v) in sum.iter_mut().zip(r) {
                *s += v;
            }
            rows_seen.push(r);
            count += 1;
        }
        if count == 0 {
            return Err(Error::contract("cannot fit normalisation statistics on empty data"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut var = vec![0.0; mean.len()];
        for r in &rows_seen {
            for ((acc, &v), &mu) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { domain, mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::shape(format!("stats of dim {} applied to dim {d}", self.dim())));
        }
        Ok(())
    }

    pub fn normalize_in_place(&self, x: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        for ((v, mu), sd) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - mu) / sd;
        }
        Ok(())
    }

    pub fn denormalize_in_place(&self, x: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        for ((v, mu), sd) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * sd + mu;
        }
        Ok(())
    }

    /// Statistics for `T`-step chunks whose per-step dimension these stats describe.
    pub fn tiled(&self, horizon: usize) -> NormStats {
        NormStats {
            domain: self.domain,
            mean: self.mean.iter().copied().cycle().take(self.dim() * horizon).collect(),
            std: self.std.iter().copied().cycle().take(self.dim() * horizon).collect(),
        }
    }
}
