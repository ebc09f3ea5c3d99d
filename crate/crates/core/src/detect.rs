//! Tree trunk detection: DP-means over beam endpoints, Taubin algebraic
//! circle fit refined by Levenberg-Marquardt, and acceptance gating.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::odometry::scan_to_points;
use crate::sim::Scan;

/// Circle estimate. `residual` is the mean squared geometric error
/// `mean((‖p − c‖ − r)²)` in m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: Point2,
    pub radius: f64,
    pub residual: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeDetection {
    pub circle: CircleFit,
    pub arc_coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpMeansConfig {
    /// Distance beyond which a point opens a new cluster, meters.
    pub penalty_lambda: f64,
    pub max_iterations: usize,
}

impl Default for DpMeansConfig {
    fn default() -> Self {
        Self { penalty_lambda: 0.8, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceGate {
    /// Taubin residual below which LM refinement is attempted.
    pub refine_residual: f64,
    pub max_residual: f64,
    pub min_radius: f64,
    pub min_arc_coverage: f64,
    pub min_points: usize,
    pub lm_max_iterations: usize,
    pub lm_tol: f64,
}

impl Default for AcceptanceGate {
    fn default() -> Self {
        Self {
            refine_residual: 0.06,
            max_residual: 0.015,
            min_radius: 0.1,
            min_arc_coverage: 0.30,
            min_points: 3,
            lm_max_iterations: 50,
            lm_tol: 1e-12,
        }
    }
}

fn mean_of(points: &[Point2], idx: impl Iterator<Item = usize>) -> Point2 {
    let (mut s, mut n) = (Point2::ORIGIN, 0usize);
    for i in idx {
        s = s + points[i];
        n += 1;
    }
    s * (1.0 / n as f64)
}

/// DP-means objective: within-cluster squared distances plus `λ²` per cluster.
pub fn dp_means_objective(points: &[Point2], clusters: &[Vec<usize>], lambda: f64) -> f64 {
    clusters
        .iter()
        .map(|c| {
            let mu = mean_of(points, c.iter().copied());
            c.iter().map(|&i| points[i].dist_sq(mu)).sum::<f64>()
        })
        .sum::<f64>()
        + lambda * lambda * clusters.len() as f64
}

/// DP-means clustering.
///
/// Points are visited in input (beam) order; the first point seeds the
/// first cluster. Lloyd-style passes run until the partition is stable,
/// then single-point moves (to another cluster or a fresh singleton) are
/// applied while any of them lowers the objective, so the result is locally
/// optimal under one-point changes. Clusters are returned ordered by their
/// smallest member index.
pub fn dp_means(points: &[Point2], cfg: &DpMeansConfig) -> Vec<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let lambda_sq = cfg.penalty_lambda * cfg.penalty_lambda;
    let mut centers = vec![points[0]];
    let mut assign = vec![usize::MAX; n];

    for _ in 0..cfg.max_iterations.max(1) {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let (mut best, mut best_d2) = (0, f64::INFINITY);
            for (c, &mu) in centers.iter().enumerate() {
                let d2 = p.dist_sq(mu);
                if d2 < best_d2 {
                    best = c;
                    best_d2 = d2;
                }
            }
            if best_d2 > lambda_sq {
                centers.push(p);
                best = centers.len() - 1;
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        // recompute means, drop empty clusters, keep label order
        let mut sums = vec![(Point2::ORIGIN, 0usize); centers.len()];
        for (i, &c) in assign.iter().enumerate() {
            sums[c].0 = sums[c].0 + points[i];
            sums[c].1 += 1;
        }
        let mut relabel = vec![usize::MAX; centers.len()];
        centers.clear();
        for (c, &(s, k)) in sums.iter().enumerate() {
            if k > 0 {
                relabel[c] = centers.len();
                centers.push(s * (1.0 / k as f64));
            }
        }
        for a in assign.iter_mut() {
            let r = relabel[*a];
            changed |= r != *a;
            *a = r;
        }
        if !changed {
            break;
        }
    }

    refine_single_moves(points, &mut assign, lambda_sq);

    let mut slot = vec![usize::MAX; assign.iter().max().map_or(0, |m| m + 1)];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &c) in assign.iter().enumerate() {
        if slot[c] == usize::MAX {
            slot[c] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[c]].push(i);
    }
    clusters
}

/// Hartigan-style improvement with exact objective deltas.
fn refine_single_moves(points: &[Point2], assign: &mut [usize], lambda_sq: f64) {
    let k0 = assign.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![Point2::ORIGIN; k0];
    let mut count = vec![0usize; k0];
    for (i, &c) in assign.iter().enumerate() {
        sum[c] = sum[c] + points[i];
        count[c] += 1;
    }
    let scale = lambda_sq.max(f64::MIN_POSITIVE);
    for _ in 0..1000 {
        let mut moved = false;
        for (i, &p) in points.iter().enumerate() {
            let a = assign[i];
            let na = count[a] as f64;
            let remove_gain = if count[a] > 1 {
                let mu = sum[a] * (1.0 / na);
                na / (na - 1.0) * p.dist_sq(mu)
            } else {
                lambda_sq
            };
            // best destination: existing cluster or a new singleton
            let mut best: Option<usize> = None;
            let mut best_cost = if count[a] > 1 { lambda_sq } else { f64::INFINITY };
            for b in 0..sum.len() {
                if b == a || count[b] == 0 {
                    continue;
                }
                let nb = count[b] as f64;
                let mu = sum[b] * (1.0 / nb);
                let c = nb / (nb + 1.0) * p.dist_sq(mu);
                if c < best_cost {
                    best_cost = c;
                    best = Some(b);
                }
            }
            if best_cost - remove_gain < -1e-12 * scale {
                let b = match best {
                    Some(b) => b,
                    None => {
                        sum.push(Point2::ORIGIN);
                        count.push(0);
                        sum.len() - 1
                    }
                };
                sum[a] = sum[a] - p;
                count[a] -= 1;
                sum[b] = sum[b] + p;
                count[b] += 1;
                assign[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

fn geometric_mse(points: &[Point2], center: Point2, radius: f64) -> f64 {
    points.iter().map(|p| (p.dist(center) - radius).powi(2)).sum::<f64>() / points.len() as f64
}

/// Taubin algebraic circle fit (Newton iteration on the characteristic
/// polynomial, after centring the data).
pub fn taubin_fit(points: &[Point2]) -> Result<CircleFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry("circle fit needs at least 3 points"));
    }
    let mean = mean_of(points, 0..n);
    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.x - mean.x;
        let y = p.y - mean.y;
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    let nf = n as f64;
    mxx /= nf;
    myy /= nf;
    mxy /= nf;
    mxz /= nf;
    myz /= nf;
    mzz /= nf;

    let mz = mxx + myy;
    if mz <= 1e-24 {
        return Err(Error::DegenerateGeometry("coincident points"));
    }
    let cov_xy = mxx * myy - mxy * mxy;
    // smallest eigenvalue of the scatter matrix relative to its trace
    let disc = ((mxx - myy).powi(2) + 4.0 * mxy * mxy).sqrt();
    let lambda_min = 0.5 * (mz - disc);
    if lambda_min <= 1e-12 * mz {
        return Err(Error::DegenerateGeometry("collinear points"));
    }
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;
    let a22 = a2 + a2;
    let a33 = a3 + a3 + a3;

    let (mut x, mut y) = (0.0f64, a0);
    for _ in 0..100 {
        let dy = a1 + x * (a22 + a33 * x);
        let xnew = x - y / dy;
        if xnew == x || !xnew.is_finite() {
            break;
        }
        let ynew = a0 + xnew * (a1 + xnew * (a2 + xnew * a3));
        if ynew.abs() >= y.abs() {
            break;
        }
        x = xnew;
        y = ynew;
    }
    let det = x * x - x * mz + cov_xy;
    if det.abs() < 1e-300 {
        return Err(Error::DegenerateGeometry("singular Taubin system"));
    }
    let cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let radius = (cx * cx + cy * cy + mz).sqrt();
    let center = Point2::new(cx + mean.x, cy + mean.y);
    if !center.is_finite() || !radius.is_finite() || radius <= 0.0 {
        return Err(Error::DegenerateGeometry("non-finite circle"));
    }
    Ok(CircleFit { center, radius, residual: geometric_mse(points, center, radius), n_points: n })
}

/// Geometric circle fit: Levenberg-Marquardt on `Σ (‖p − c‖ − r)²`
/// starting from `init`. Steps that do not lower the cost are rejected, so
/// the result is never worse than the initial guess.
pub fn lm_refine_circle(points: &[Point2], init: &CircleFit, max_iterations: usize, tol: f64) -> CircleFit {
    let cost_of = |c: Point2, r: f64| points.iter().map(|p| (p.dist(c) - r).powi(2)).sum::<f64>();
    let (mut c, mut r) = (init.center, init.radius);
    let mut cost = cost_of(c, r);
    let mut lambda = 1e-3;
    for _ in 0..max_iterations {
        if cost == 0.0 {
            break;
        }
        // normal equations JᵀJ δ = −Jᵀe with e_i = ‖p_i − c‖ − r
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jte = [0.0f64; 3];
        for p in points {
            let d = p.dist(c);
            if d == 0.0 {
                continue;
            }
            let j = [-(p.x - c.x) / d, -(p.y - c.y) / d, -1.0];
            let e = d - r;
            for a in 0..3 {
                jte[a] += j[a] * e;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = nalgebra::Matrix3::from_fn(|a, b| jtj[a][b]);
            for a in 0..3 {
                m[(a, a)] += lambda * jtj[a][a].max(1e-12);
            }
            let rhs = nalgebra::Vector3::new(-jte[0], -jte[1], -jte[2]);
            let Some(step) = m.lu().solve(&rhs) else {
                lambda *= 10.0;
                continue;
            };
            let nc = Point2::new(c.x + step[0], c.y + step[1]);
            let nr = r + step[2];
            let ncost = cost_of(nc, nr);
            if ncost < cost && nr > 0.0 {
                let rel = (cost - ncost) / cost;
                c = nc;
                r = nr;
                cost = ncost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < tol || step.norm() < tol {
                    return finish(points, c, r);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    finish(points, c, r)
}

fn finish(points: &[Point2], center: Point2, radius: f64) -> CircleFit {
    CircleFit { center, radius, residual: geometric_mse(points, center, radius), n_points: points.len() }
}

/// Fraction of the circle's circumference covered by the returns.
///
/// Each sensor-frame point covers an angular interval about the fitted
/// centre of half-width `range·angular_resolution / radius`, one beam step
/// projected on the trunk; the union of these intervals is measured on the
/// circle.
pub fn arc_coverage(points: &[Point2], circle: &CircleFit, angular_resolution: f64) -> f64 {
    if points.is_empty() || circle.radius <= 0.0 {
        return 0.0;
    }
    // intervals on [0, 2π), split where they wrap
    let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 4);
    for p in points {
        let half = p.norm() * angular_resolution / circle.radius;
        if half >= std::f64::consts::PI {
            return 1.0;
        }
        let a = (*p - circle.center).angle().rem_euclid(TAU);
        let (lo, hi) = (a - half, a + half);
        if lo < 0.0 {
            intervals.push((lo + TAU, TAU));
            intervals.push((0.0, hi));
        } else if hi > TAU {
            intervals.push((lo, TAU));
            intervals.push((0.0, hi - TAU));
        } else {
            intervals.push((lo, hi));
        }
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut covered = 0.0;
    let (mut lo, mut hi) = intervals[0];
    for &(a, b) in &intervals[1..] {
        if a <= hi {
            hi = hi.max(b);
        } else {
            covered += hi - lo;
            lo = a;
            hi = b;
        }
    }
    covered += hi - lo;
    (covered / TAU).clamp(0.0, 1.0)
}

/// Runs clustering, fitting and gating on one scan. Detections are in the
/// sensor frame.
pub fn detect_trees(scan: &Scan, dp_cfg: &DpMeansConfig, gate: &AcceptanceGate) -> Vec<TreeDetection> {
    let points = scan_to_points(scan);
    let mut out = Vec::new();
    for cluster in dp_means(&points, dp_cfg) {
        if cluster.len() < gate.min_points.max(3) {
            continue;
        }
        let pts: Vec<Point2> = cluster.iter().map(|&i| points[i]).collect();
        let Ok(init) = taubin_fit(&pts) else { continue };
        if init.residual >= gate.refine_residual {
            continue;
        }
        let fit = lm_refine_circle(&pts, &init, gate.lm_max_iterations, gate.lm_tol);
        if fit.residual >= gate.max_residual || fit.radius <= gate.min_radius {
            continue;
        }
        let coverage = arc_coverage(&pts, &fit, scan.angular_resolution);
        if coverage > gate.min_arc_coverage {
            out.push(TreeDetection { circle: fit, arc_coverage: coverage });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ring(c: Point2, r: f64, n: usize, span: f64) -> Vec<Point2> {
        (0..n)
            .map(|k| {
                let a = span * k as f64 / n as f64;
                Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect()
    }

    #[test]
    fn dp_means_empty_and_separated() {
        assert!(dp_means(&[], &DpMeansConfig::default()).is_empty());
        let mut pts = ring(Point2::new(0.0, 0.0), 0.2, 10, TAU);
        pts.extend(ring(Point2::new(10.0, 0.0), 0.2, 10, TAU));
        let cfg = DpMeansConfig { penalty_lambda: 1.0, max_iterations: 50 };
        let cl = dp_means(&pts, &cfg);
        assert_eq!(cl, vec![(0..10).collect::<Vec<_>>(), (10..20).collect::<Vec<_>>()]);
    }

    #[test]
    fn dp_means_covers_every_point_within_lambda() {
        let pts: Vec<Point2> = (0..60).map(|i| Point2::new((i as f64 * 0.37).sin() * 4.0, i as f64 * 0.11)).collect();
        let cfg = DpMeansConfig::default();
        let cl = dp_means(&pts, &cfg);
        let mut seen = vec![false; pts.len()];
        for c in &cl {
            let mu = mean_of(&pts, c.iter().copied());
            for &i in c {
                assert!(!seen[i]);
                seen[i] = true;
                assert!(pts[i].dist(mu) <= cfg.penalty_lambda + 1e-12);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn taubin_exact_circle() {
        let c = Point2::new(2.0, 3.0);
        let pts = ring(c, 0.5, 8, TAU);
        let f = taubin_fit(&pts).unwrap();
        assert!(f.center.dist(c) < 1e-9);
        assert!((f.radius - 0.5).abs() < 1e-9);
        assert!(f.residual < 1e-9);
    }

    #[test]
    fn taubin_rejects_collinear_and_coincident() {
        let line: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(taubin_fit(&line), Err(Error::DegenerateGeometry(_))));
        let same = vec![Point2::new(1.0, 1.0); 4];
        assert!(matches!(taubin_fit(&same), Err(Error::DegenerateGeometry(_))));
        assert!(taubin_fit(&line[..2]).is_err());
    }

    #[test]
    fn lm_keeps_exact_fit() {
        let c = Point2::new(-1.0, 0.5);
        let pts = ring(c, 0.3, 12, PI);
        let init = CircleFit { center: c, radius: 0.3, residual: 0.0, n_points: pts.len() };
        let f = lm_refine_circle(&pts, &init, 50, 1e-12);
        assert!(f.center.dist(c) < 1e-12 && (f.radius - 0.3).abs() < 1e-12);
    }

    #[test]
    fn lm_recovers_from_perturbation() {
        let c = Point2::new(4.0, -2.0);
        let pts = ring(c, 0.25, 20, 1.2 * PI);
        let init = CircleFit { center: Point2::new(4.05, -1.97), radius: 0.2, residual: 1.0, n_points: 20 };
        let f = lm_refine_circle(&pts, &init, 100, 1e-15);
        assert!(f.center.dist(c) < 1e-8, "{:?}", f);
        assert!((f.radius - 0.25).abs() < 1e-8);
    }

    #[test]
    fn coverage_examples() {
        let circle = CircleFit { center: Point2::new(0.0, 10.0), radius: 1.0, residual: 0.0, n_points: 0 };
        let res = 0.25f64.to_radians();
        let full = ring(circle.center, 1.0, 720, TAU);
        assert!((arc_coverage(&full, &circle, res) - 1.0).abs() < 1e-12);
        let half = ring(circle.center, 1.0, 181, PI + 1e-9);
        let h = arc_coverage(&half, &circle, res);
        assert!((h - 0.5).abs() < 0.05, "{h}");
        let one = [Point2::new(0.0, 9.0)];
        let expected = 2.0 * 9.0 * res / 1.0 / TAU;
        assert!((arc_coverage(&one, &circle, res) - expected).abs() < 1e-12);
    }

    #[test]
    fn coverage_handles_wraparound() {
        let circle = CircleFit { center: Point2::new(5.0, 0.0), radius: 0.5, residual: 0.0, n_points: 0 };
        // points straddling angle 0 about the centre
        let pts: Vec<Point2> = (-10..=10)
            .map(|k| {
                let a = k as f64 * 0.05;
                circle.center + Point2::new(0.5 * a.cos(), 0.5 * a.sin())
            })
            .collect();
        let c = arc_coverage(&pts, &circle, 0.25f64.to_radians());
        let arc = 20.0 * 0.05;
        assert!(c > arc / TAU && c < (arc + 0.1) / TAU, "{c}");
    }
}
