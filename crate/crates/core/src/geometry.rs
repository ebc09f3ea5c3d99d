//! SE(2) poses, planar points and seeded random streams.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(TAU);
    // rem_euclid can round up to TAU itself for tiny negative inputs,
    // which this branch also maps to 0
    if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dist_sq(self, other: Point2) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Bearing of the point seen from the origin.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, theta: f64) -> Point2 {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Rigid planar transform. `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = other.translation().rotate(self.theta);
        Pose2::new(self.x + t.x, self.y + t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let t = Point2::new(-self.x, -self.y).rotate(-self.theta);
        Pose2::new(t.x, t.y, -self.theta)
    }

    /// `self⁻¹ ∘ other`: the pose of `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let d = (other.translation() - self.translation()).rotate(-self.theta);
        Pose2::new(d.x, d.y, other.theta - self.theta)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn apply(&self, p: Point2) -> Point2 {
        p.rotate(self.theta) + self.translation()
    }

    /// Maps a point from the parent frame into this pose's local frame.
    pub fn apply_inverse(&self, p: Point2) -> Point2 {
        (p - self.translation()).rotate(-self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

pub fn se2_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn se2_between(a: &Pose2, b: &Pose2) -> Pose2 {
    a.between(b)
}

pub fn se2_apply(p: &Pose2, q: Point2) -> Point2 {
    p.apply(q)
}

/// Seed for a deterministic random stream.
///
/// Subsystems never share a generator; they derive child seeds with
/// [`RngSeed::derive`] so that adding draws in one place does not shift
/// another subsystem's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Child seed for a labelled sub-stream.
    pub fn derive(self, label: &str) -> RngSeed {
        let mut h = self.0 ^ 0x243f_6a88_85a3_08d3;
        for b in label.bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        RngSeed(splitmix64(h))
    }

    /// Child seed for the `index`-th item of a family (agent, scan, trial).
    pub fn nth(self, index: u64) -> RngSeed {
        RngSeed(splitmix64(splitmix64(self.0) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Closed-form least-squares rigid alignment: returns `T` minimising
/// `Σ ‖dst_i − T·src_i‖²`. Requires equal, non-empty inputs.
pub fn fit_rigid(src: &[Point2], dst: &[Point2]) -> Option<Pose2> {
    if src.is_empty() || src.len() != dst.len() {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Point2::ORIGIN, |a, &p| a + p) * (1.0 / n);
    let cd = dst.iter().fold(Point2::ORIGIN, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&s, &d) in src.iter().zip(dst) {
        let a = s - cs;
        let b = d - cd;
        sxx += a.x * b.x + a.y * b.y;
        sxy += a.x * b.y - a.y * b.x;
    }
    let theta = if sxx == 0.0 && sxy == 0.0 { 0.0 } else { sxy.atan2(sxx) };
    let t = cd - cs.rotate(theta);
    Some(Pose2::new(t.x, t.y, theta))
}
