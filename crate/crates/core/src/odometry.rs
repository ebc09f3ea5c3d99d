//! Frame-to-frame point-to-point ICP for incremental motion estimates.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Point2, Pose2};
use crate::sim::Scan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    pub convergence_tol: f64,
    /// Correspondence gate of the first stage, meters.
    pub correspondence_cutoff: f64,
    /// After a stage converges the gate is halved until it reaches this
    /// floor; equal to `correspondence_cutoff` for a single stage.
    pub min_cutoff: f64,
    pub min_inlier_fraction: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            convergence_tol: 1e-4,
            correspondence_cutoff: 1.0,
            min_cutoff: 0.1,
            min_inlier_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps current-frame points onto the previous frame.
    pub transform: Pose2,
    /// Mean inlier distance at the returned transform under the first-stage
    /// gate, meters.
    pub mean_residual: f64,
    pub inlier_fraction: f64,
    /// Iterations over all stages.
    pub iterations: usize,
    /// False when the iteration cap of some stage was hit first.
    pub converged: bool,
    /// Truncated cost `Σ min(d², cutoff²) / n` of the last stage, before
    /// each of its iterations and at the end; non-increasing.
    pub cost_history: Vec<f64>,
}

impl IcpResult {
    pub fn is_reliable(&self, cfg: &IcpConfig) -> bool {
        self.inlier_fraction >= cfg.min_inlier_fraction
    }
}

/// Sensor-frame Cartesian points of all beams with a return.
pub fn scan_to_points(scan: &Scan) -> Vec<Point2> {
    scan.beams
        .iter()
        .filter_map(|b| b.range.map(|r| Point2::new(r * b.bearing.cos(), r * b.bearing.sin())))
        .collect()
}

/// Uniform bucket grid for fixed-radius nearest-neighbour queries.
struct BucketIndex<'a> {
    points: &'a [Point2],
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> BucketIndex<'a> {
    fn new(points: &'a [Point2], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Self { points, cell, buckets }
    }

    fn key(p: Point2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Nearest point within the cell size; ties go to the lower index.
    fn nearest(&self, q: Point2) -> Option<(usize, f64)> {
        let (kx, ky) = Self::key(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.buckets.get(&(kx + dx, ky + dy)) else { continue };
                for &i in bucket {
                    let d2 = self.points[i].dist_sq(q);
                    let better = match best {
                        None => true,
                        Some((j, b)) => d2 < b || (d2 == b && i < j),
                    };
                    if better {
                        best = Some((i, d2));
                    }
                }
            }
        }
        best.filter(|&(_, d2)| d2 <= self.cell * self.cell)
    }
}

struct Matching {
    pairs: Vec<(usize, usize)>,
    sum_dist: f64,
    truncated_cost: f64,
}

fn match_points(index: &BucketIndex, curr: &[Point2], t: &Pose2, cutoff: f64) -> Matching {
    let mut pairs = Vec::new();
    let mut sum_dist = 0.0;
    let mut cost = 0.0;
    for (j, &p) in curr.iter().enumerate() {
        match index.nearest(t.apply(p)) {
            Some((i, d2)) => {
                pairs.push((i, j));
                sum_dist += d2.sqrt();
                cost += d2;
            }
            None => cost += cutoff * cutoff,
        }
    }
    Matching { pairs, sum_dist, truncated_cost: cost / curr.len() as f64 }
}

/// Aligns `points_curr` onto `points_prev` starting from `initial_guess`.
///
/// Point-to-point ICP run coarse to fine: each stage iterates to
/// convergence with a fixed correspondence gate, then the gate is halved
/// down to `min_cutoff`. Tight late gates remove the bias that unequal beam
/// sampling of curved trunks puts on wide-gate nearest neighbours.
pub fn icp_align(
    points_prev: &[Point2],
    points_curr: &[Point2],
    initial_guess: Pose2,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    if points_prev.is_empty() || points_curr.is_empty() {
        return Err(Error::DegenerateGeometry("ICP needs non-empty point sets"));
    }
    let mut t = initial_guess;
    let mut iterations = 0;
    let mut converged = true;
    let mut history = Vec::new();
    let mut cutoff = cfg.correspondence_cutoff;
    loop {
        let index = BucketIndex::new(points_prev, cutoff);
        let mut m = match_points(&index, points_curr, &t, cutoff);
        history.clear();
        let mut stage_converged = false;
        for _ in 0..cfg.max_iterations {
            if m.pairs.len() < 3 {
                return Err(Error::DegenerateGeometry("fewer than 3 ICP correspondences"));
            }
            history.push(m.truncated_cost);
            iterations += 1;
            let src: Vec<Point2> = m.pairs.iter().map(|&(_, j)| t.apply(points_curr[j])).collect();
            let dst: Vec<Point2> = m.pairs.iter().map(|&(i, _)| points_prev[i]).collect();
            let delta = fit_rigid(&src, &dst).expect("non-empty matched sets");
            t = delta.compose(&t);
            m = match_points(&index, points_curr, &t, cutoff);
            if delta.translation().norm() < cfg.convergence_tol && delta.theta.abs() < cfg.convergence_tol {
                stage_converged = true;
                break;
            }
        }
        if m.pairs.len() < 3 {
            return Err(Error::DegenerateGeometry("fewer than 3 ICP correspondences"));
        }
        history.push(m.truncated_cost);
        converged &= stage_converged;
        if cutoff <= cfg.min_cutoff {
            break;
        }
        cutoff = (0.5 * cutoff).max(cfg.min_cutoff);
    }
    let index = BucketIndex::new(points_prev, cfg.correspondence_cutoff);
    let m = match_points(&index, points_curr, &t, cfg.correspondence_cutoff);
    if m.pairs.is_empty() {
        return Err(Error::DegenerateGeometry("fewer than 3 ICP correspondences"));
    }
    Ok(IcpResult {
        transform: t,
        mean_residual: m.sum_dist / m.pairs.len() as f64,
        inlier_fraction: m.pairs.len() as f64 / points_curr.len() as f64,
        iterations,
        converged,
        cost_history: history,
    })
}

/// Left-composes increments starting from the identity.
pub fn integrate_odometry(chain: &[Pose2]) -> Vec<Pose2> {
    let mut out = Vec::with_capacity(chain.len() + 1);
    let mut cur = Pose2::IDENTITY;
    out.push(cur);
    for inc in chain {
        cur = cur.compose(inc);
        out.push(cur);
    }
    out
}
