//! Desk-scale forest world: Poisson tree placement, a 2D laser range
//! finder with occlusion, first-order vehicle kinematics and drifting
//! odometry.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point2, Pose2, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self { min: Point2::new(xmin, ymin), max: Point2::new(xmax, ymax) }
    }

    /// `w × h` rectangle with its lower-left corner at the origin.
    pub fn sized(w: f64, h: f64) -> Self {
        Self::new(0.0, 0.0, w, h)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn expanded(&self, margin: f64) -> Rect {
        Rect::new(self.min.x - margin, self.min.y - margin, self.max.x + margin, self.max.y + margin)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0) || !self.min.is_finite() || !self.max.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tree {
    pub center: Point2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub density: f64,
    pub region: Rect,
    pub seed: RngSeed,
    pub trees: Vec<Tree>,
}

pub const DEFAULT_RADIUS_RANGE: (f64, f64) = (0.1, 0.3);

/// Samples a Poisson forest. Tree discs never overlap: candidates closer
/// than `2·max_radius` to an accepted tree are redrawn.
pub fn generate_forest(
    density: f64,
    region: Rect,
    radius_range: (f64, f64),
    seed: RngSeed,
) -> Result<Forest> {
    if !(density >= 0.0) || !density.is_finite() {
        return Err(Error::Config(format!("density must be ≥ 0, got {density}")));
    }
    if region.is_degenerate() {
        return Err(Error::Config("degenerate forest region".into()));
    }
    let (rmin, rmax) = radius_range;
    if !(rmin > 0.0 && rmax >= rmin) {
        return Err(Error::Config(format!("bad radius range {rmin}..{rmax}")));
    }
    let mut rng = seed.rng();
    let mean = density * region.area();
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let min_sep_sq = (2.0 * rmax) * (2.0 * rmax);
    let max_attempts = 1000 * count;
    let mut trees: Vec<Tree> = Vec::with_capacity(count);
    let mut attempts = 0;
    while trees.len() < count {
        if attempts >= max_attempts {
            return Err(Error::ForestTooDense { count, attempts });
        }
        attempts += 1;
        let c = Point2::new(
            rng.random_range(region.min.x..region.max.x),
            rng.random_range(region.min.y..region.max.y),
        );
        let radius = if rmax > rmin { rng.random_range(rmin..rmax) } else { rmin };
        if trees.iter().all(|t| t.center.dist_sq(c) >= min_sep_sq) {
            trees.push(Tree { center: c, radius });
        }
    }
    Ok(Forest { density, region, seed, trees })
}

impl Forest {
    pub fn empty(region: Rect) -> Self {
        Forest { density: 0.0, region, seed: RngSeed(0), trees: Vec::new() }
    }

    /// Drops every tree whose surface is closer than `clearance` to `p`.
    pub fn clear_around(mut self, p: Point2, clearance: f64) -> Self {
        self.trees.retain(|t| t.center.dist(p) - t.radius >= clearance);
        self
    }

    pub fn is_inside_tree(&self, p: Point2) -> bool {
        self.trees.iter().any(|t| t.center.dist_sq(p) < t.radius * t.radius)
    }

    /// Distance from `p` to the nearest tree surface (∞ for an empty forest).
    pub fn clearance(&self, p: Point2) -> f64 {
        self.trees.iter().map(|t| t.center.dist(p) - t.radius).fold(f64::INFINITY, f64::min)
    }

    /// Text form: a header line `density xmin ymin xmax ymax seed`, then
    /// one `x y radius` line per tree, six decimals.
    pub fn to_text(&self) -> String {
        let r = &self.region;
        let mut s = format!(
            "{:.6} {:.6} {:.6} {:.6} {:.6} {}\n",
            self.density, r.min.x, r.min.y, r.max.x, r.max.y, self.seed.0
        );
        for t in &self.trees {
            let _ = writeln!(s, "{:.6} {:.6} {:.6}", t.center.x, t.center.y, t.radius);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Forest> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty forest file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(Error::Parse(format!("forest header needs 6 fields: {header:?}")));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let density = f(h[0])?;
        let region = Rect::new(f(h[1])?, f(h[2])?, f(h[3])?, f(h[4])?);
        let seed = RngSeed(h[5].parse().map_err(|e| Error::Parse(format!("seed: {e}")))?);
        let mut trees = Vec::new();
        for line in lines {
            let v: Vec<&str> = line.split_whitespace().collect();
            if v.len() != 3 {
                return Err(Error::Parse(format!("tree line needs 3 fields: {line:?}")));
            }
            trees.push(Tree { center: Point2::new(f(v[0])?, f(v[1])?), radius: f(v[2])? });
        }
        Ok(Forest { density, region, seed, trees })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub max_range: f64,
    pub fov: f64,
    pub angular_resolution: f64,
    pub range_noise_sigma: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_range: 30.0,
            fov: 1.5 * PI,
            angular_resolution: 0.25_f64.to_radians(),
            range_noise_sigma: 0.01,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::Config("sensor max_range must be > 0".into()));
        }
        if !(self.fov > 0.0 && self.fov <= TAU + 1e-12) {
            return Err(Error::Config("sensor fov must be in (0, 2π]".into()));
        }
        if !(self.angular_resolution > 0.0) {
            return Err(Error::Config("angular resolution must be > 0".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::Config("range noise sigma must be ≥ 0".into()));
        }
        Ok(())
    }

    fn full_circle(&self) -> bool {
        self.fov >= TAU - 1e-9
    }

    pub fn beam_count(&self) -> usize {
        let steps = self.fov / self.angular_resolution;
        if self.full_circle() {
            steps.round() as usize
        } else {
            (steps + 1e-9).floor() as usize + 1
        }
    }

    pub fn bearing(&self, k: usize) -> f64 {
        if self.full_circle() {
            -PI + k as f64 * self.angular_resolution
        } else {
            -0.5 * self.fov + k as f64 * self.angular_resolution
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    /// Sensor-frame bearing in radians.
    pub bearing: f64,
    /// `None` is the no-return sentinel: nothing within range along the ray.
    pub range: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub beams: Vec<Beam>,
    pub max_range: f64,
    pub angular_resolution: f64,
    /// Ground truth, for evaluation only.
    pub pose_truth: Pose2,
}

/// Distance along a unit ray to the first intersection with a circle, if
/// the ray starts outside it.
pub fn ray_circle(origin: Point2, dir: Point2, center: Point2, radius: f64) -> Option<f64> {
    let f = origin - center;
    let b = f.dot(dir);
    let c = f.dot(f) - radius * radius;
    if c < 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Noise-free hit distance per beam, `None` for misses. Trees are visited by
/// angular footprint, so each tree only tests the beams it can intersect.
fn cast_beams(forest: &Forest, pose: &Pose2, model: &SensorModel) -> Vec<Option<f64>> {
    let n = model.beam_count();
    let mut hits: Vec<Option<f64>> = vec![None; n];
    let origin = pose.translation();
    let base = model.bearing(0);
    for tree in &forest.trees {
        let rel = tree.center - origin;
        let d = rel.norm();
        if d - tree.radius > model.max_range {
            continue;
        }
        let half = (tree.radius / d).min(1.0).asin();
        let phi = normalize_angle(rel.angle() - pose.theta);
        for wrap in [-TAU, 0.0, TAU] {
            let lo = ((phi + wrap - half - base) / model.angular_resolution).floor() - 1.0;
            let hi = ((phi + wrap + half - base) / model.angular_resolution).ceil() + 1.0;
            if hi < 0.0 || lo > (n - 1) as f64 {
                continue;
            }
            let lo = lo.max(0.0) as usize;
            let hi = (hi as usize).min(n - 1);
            for (k, slot) in hits.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let a = pose.theta + model.bearing(k);
                let dir = Point2::new(a.cos(), a.sin());
                if let Some(t) = ray_circle(origin, dir, tree.center, tree.radius) {
                    if t <= model.max_range && slot.is_none_or(|cur| t < cur) {
                        *slot = Some(t);
                    }
                }
            }
        }
    }
    hits
}

/// Simulates one scan: nearest ray–circle hit per beam plus i.i.d. Gaussian
/// range noise, clamped to `[0, max_range]`.
pub fn simulate_scan(forest: &Forest, pose: Pose2, model: &SensorModel, seed: RngSeed) -> Result<Scan> {
    model.validate()?;
    if forest.is_inside_tree(pose.translation()) {
        return Err(Error::PoseInsideTree(pose.translation()));
    }
    let hits = cast_beams(forest, &pose, model);
    let mut rng = seed.rng();
    let noise = Normal::new(0.0, model.range_noise_sigma.max(f64::MIN_POSITIVE))
        .expect("sigma validated");
    let beams = hits
        .into_iter()
        .enumerate()
        .map(|(k, hit)| {
            let range = hit.map(|t| {
                let r = if model.range_noise_sigma > 0.0 { t + noise.sample(&mut rng) } else { t };
                r.clamp(0.0, model.max_range)
            });
            Beam { bearing: model.bearing(k), range }
        })
        .collect();
    Ok(Scan {
        beams,
        max_range: model.max_range,
        angular_resolution: model.angular_resolution,
        pose_truth: pose,
    })
}

impl Scan {
    /// Line-oriented record: `scan <id> <x> <y> <theta> <max_range> <res> <n>`
    /// followed by `n` lines `<bearing> <range>`, where a missing return is
    /// written as `-`.
    pub fn write_record(&self, id: usize, out: &mut String) {
        let p = &self.pose_truth;
        let _ = writeln!(
            out,
            "scan {id} {:.9} {:.9} {:.9} {:.6} {:.12} {}",
            p.x,
            p.y,
            p.theta,
            self.max_range,
            self.angular_resolution,
            self.beams.len()
        );
        for b in &self.beams {
            match b.range {
                Some(r) => {
                    let _ = writeln!(out, "{:.9} {:.9}", b.bearing, r);
                }
                None => {
                    let _ = writeln!(out, "{:.9} -", b.bearing);
                }
            }
        }
    }

    pub fn read_log(text: &str) -> Result<Vec<(usize, Scan)>> {
        let perr = |m: String| Error::Parse(m);
        let f = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut out = Vec::new();
        while let Some(h) = lines.next() {
            let v: Vec<&str> = h.split_whitespace().collect();
            if v.len() != 8 || v[0] != "scan" {
                return Err(perr(format!("bad scan header {h:?}")));
            }
            let id: usize = v[1].parse().map_err(|e| perr(format!("scan id: {e}")))?;
            let pose = Pose2::new(f(v[2])?, f(v[3])?, f(v[4])?);
            let max_range = f(v[5])?;
            let res = f(v[6])?;
            let n: usize = v[7].parse().map_err(|e| perr(format!("beam count: {e}")))?;
            let mut beams = Vec::with_capacity(n);
            for _ in 0..n {
                let l = lines.next().ok_or_else(|| perr("truncated scan record".into()))?;
                let b: Vec<&str> = l.split_whitespace().collect();
                if b.len() != 2 {
                    return Err(perr(format!("bad beam line {l:?}")));
                }
                let range = if b[1] == "-" { None } else { Some(f(b[1])?) };
                beams.push(Beam { bearing: f(b[0])?, range });
            }
            out.push((id, Scan { beams, max_range, angular_resolution: res, pose_truth: pose }));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub pose: Pose2,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub speed: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self { v_max: 2.0, a_max: 0.4, yaw_rate_max: 1.0 }
    }
}

/// Kinematic heading-and-speed update. Speed ramps toward the clamped
/// setpoint at `a_max` and the travelled distance is integrated exactly
/// over the ramp; heading turns at most `yaw_rate_max·dt` and motion follows
/// the mid-step heading.
pub fn step_vehicle(state: VehicleState, cmd: Command, dt: f64, limits: &VehicleLimits) -> VehicleState {
    debug_assert!(dt > 0.0);
    let heading_err = normalize_angle(cmd.heading - state.pose.theta);
    let max_turn = limits.yaw_rate_max * dt;
    let turn = heading_err.clamp(-max_turn, max_turn);

    let target = cmd.speed.clamp(0.0, limits.v_max);
    let v0 = state.speed;
    let dv = target - v0;
    let (v1, dist) = if dv == 0.0 {
        (v0, v0 * dt)
    } else {
        let accel = limits.a_max * dv.signum();
        let t_reach = dv.abs() / limits.a_max;
        if t_reach >= dt {
            let v1 = v0 + accel * dt;
            (v1, 0.5 * (v0 + v1) * dt)
        } else {
            (target, 0.5 * (v0 + target) * t_reach + target * (dt - t_reach))
        }
    };
    let mid = state.pose.theta + 0.5 * turn;
    let pose = Pose2::new(
        state.pose.x + dist * mid.cos(),
        state.pose.y + dist * mid.sin(),
        state.pose.theta + turn,
    );
    VehicleState { pose, speed: v1 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    /// Per-step standard deviation on each translation axis, meters.
    pub translation_sigma: f64,
    /// Per-step standard deviation on heading, radians.
    pub rotation_sigma: f64,
    /// Constant perturbation per meter travelled.
    pub bias_per_meter: Pose2,
}

impl DriftModel {
    pub const NONE: DriftModel = DriftModel {
        translation_sigma: 0.0,
        rotation_sigma: 0.0,
        bias_per_meter: Pose2::IDENTITY,
    };
}

pub fn corrupt_odometry(true_increment: &Pose2, drift: &DriftModel, seed: RngSeed) -> Pose2 {
    let len = true_increment.translation().norm();
    let b = &drift.bias_per_meter;
    let (mut nx, mut ny, mut nt) = (0.0, 0.0, 0.0);
    if drift.translation_sigma > 0.0 || drift.rotation_sigma > 0.0 {
        let mut rng = seed.rng();
        let std: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
        nx = drift.translation_sigma * std.sample(&mut rng);
        ny = drift.translation_sigma * std.sample(&mut rng);
        nt = drift.rotation_sigma * std.sample(&mut rng);
    }
    Pose2::new(
        true_increment.x + nx + b.x * len,
        true_increment.y + ny + b.y * len,
        true_increment.theta + nt + b.theta * len,
    )
}
