//! Frontier exploration: frontier extraction, the heading-aware frontier
//! cost, hysteretic frontier selection, grid A* and the closed-loop mission
//! simulator.

mod astar;
mod mission;

pub use astar::{astar_masked, astar_plan, inflate, path_length, traversable};
pub use mission::{
    run_mission, AgentSetup, MissionConfig, MissionLog, PlannerKind, SubmapRecord,
};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point2, Pose2};
use crate::sim::Rect;
use crate::submap::{Cell, CellState, OccupancyGrid2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frontier {
    pub cell: Cell,
    pub position: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    /// Weight of travel distance against heading change.
    pub lambda: f64,
    /// A challenger replaces the active frontier only below this fraction of
    /// the active cost.
    pub switch_margin: f64,
    pub safety_radius: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { lambda: 0.5, switch_margin: 0.8, safety_radius: 0.4 }
    }
}

fn in_region(grid: &OccupancyGrid2D, region: &Rect, c: Cell) -> bool {
    region.contains(grid.cell_center(c))
}

fn neighbours4(grid: &OccupancyGrid2D, (x, y): Cell) -> impl Iterator<Item = Cell> + '_ {
    let (w, h) = (grid.width as i64, grid.height as i64);
    [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].into_iter().filter_map(move |(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        (nx >= 0 && ny >= 0 && nx < w && ny < h).then_some((nx as usize, ny as usize))
    })
}

/// FREE cells of the region with at least one UNKNOWN 4-neighbour in the
/// region, in row-major cell order.
pub fn extract_frontiers(grid: &OccupancyGrid2D, region: &Rect) -> Vec<Frontier> {
    grid.cells()
        .filter(|&c| grid.state(c) == CellState::Free && in_region(grid, region, c))
        .filter(|&c| {
            neighbours4(grid, c).any(|n| grid.state(n) == CellState::Unknown && in_region(grid, region, n))
        })
        .map(|c| Frontier { cell: c, position: grid.cell_center(c) })
        .collect()
}

/// `J = |heading error| + λ · distance`.
pub fn frontier_cost(frontier: Point2, pose: &Pose2, lambda: f64) -> f64 {
    let d = frontier - pose.translation();
    let j_theta = if d.norm() == 0.0 { 0.0 } else { normalize_angle(d.angle() - pose.theta).abs() };
    j_theta + lambda * d.norm()
}

/// Groups frontier cells into 8-connected clusters, each represented by the
/// member closest to the cluster centroid. Clusters smaller than `min_size`
/// are dropped. Output follows the order of each cluster's first cell.
pub fn cluster_frontiers(frontiers: &[Frontier], min_size: usize) -> Vec<Frontier> {
    use std::collections::HashMap;
    let index: HashMap<Cell, usize> = frontiers.iter().enumerate().map(|(k, f)| (f.cell, k)).collect();
    let mut seen = vec![false; frontiers.len()];
    let mut out = Vec::new();
    for start in 0..frontiers.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut members = vec![start];
        let mut k = 0;
        while k < members.len() {
            let (x, y) = frontiers[members[k]].cell;
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    if let Some(&j) = index.get(&(nx as usize, ny as usize)) {
                        if !seen[j] {
                            seen[j] = true;
                            members.push(j);
                        }
                    }
                }
            }
            k += 1;
        }
        if members.len() < min_size {
            continue;
        }
        let n = members.len() as f64;
        let c = members.iter().fold(Point2::ORIGIN, |a, &m| a + frontiers[m].position) * (1.0 / n);
        members.sort_unstable();
        let rep = *members
            .iter()
            .min_by(|&&a, &&b| frontiers[a].position.dist_sq(c).total_cmp(&frontiers[b].position.dist_sq(c)))
            .unwrap();
        out.push(frontiers[rep]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub frontier: Frontier,
    pub cost: f64,
    pub switched: bool,
}

/// Lowest-cost frontier (ties to the earlier entry). With an active frontier
/// the choice only changes if the best cost is below `switch_margin` times
/// the active cost.
pub fn select_frontier(
    frontiers: &[Frontier],
    pose: &Pose2,
    cfg: &PlannerConfig,
    active: Option<&Frontier>,
) -> Result<Selection> {
    let mut best: Option<(Frontier, f64)> = None;
    for f in frontiers {
        let j = frontier_cost(f.position, pose, cfg.lambda);
        if best.is_none_or(|(_, b)| j < b) {
            best = Some((*f, j));
        }
    }
    let (bf, bj) = best.ok_or(Error::NoFrontiers)?;
    match active {
        None => Ok(Selection { frontier: bf, cost: bj, switched: true }),
        Some(a) => {
            let ja = frontier_cost(a.position, pose, cfg.lambda);
            if bj < cfg.switch_margin * ja {
                Ok(Selection { frontier: bf, cost: bj, switched: true })
            } else {
                Ok(Selection { frontier: *a, cost: ja, switched: false })
            }
        }
    }
}

/// Closest frontier by Euclidean distance (ties to the earlier entry).
pub fn closest_frontier(frontiers: &[Frontier], pose: &Pose2) -> Result<Frontier> {
    let p = pose.translation();
    let mut best: Option<(Frontier, f64)> = None;
    for f in frontiers {
        let d = f.position.dist(p);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((*f, d));
        }
    }
    best.map(|b| b.0).ok_or(Error::NoFrontiers)
}

/// Fraction of region cells that are no longer UNKNOWN.
pub fn coverage(grid: &OccupancyGrid2D, region: &Rect) -> f64 {
    let mut total = 0usize;
    let mut known = 0usize;
    for c in grid.cells() {
        if in_region(grid, region, c) {
            total += 1;
            if grid.state(c) != CellState::Unknown {
                known += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        known as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::submap::OccupancyParams;
    use std::f64::consts::PI;

    fn grid(n: usize) -> OccupancyGrid2D {
        OccupancyGrid2D::new(Point2::ORIGIN, n, n, OccupancyParams { resolution: 1.0, ..Default::default() })
    }

    #[test]
    fn unknown_and_free_grids_have_no_frontiers() {
        let mut g = grid(6);
        let r = Rect::new(0.0, 0.0, 6.0, 6.0);
        assert!(extract_frontiers(&g, &r).is_empty());
        for c in g.cells().collect::<Vec<_>>() {
            g.set_state(c, CellState::Free);
        }
        assert!(extract_frontiers(&g, &r).is_empty());
        assert_eq!(coverage(&g, &r), 1.0);
    }

    #[test]
    fn straight_boundary() {
        let mut g = grid(6);
        for c in g.cells().collect::<Vec<_>>() {
            if c.0 < 3 {
                g.set_state(c, CellState::Free);
            }
        }
        let f = extract_frontiers(&g, &Rect::new(0.0, 0.0, 6.0, 6.0));
        assert_eq!(f.iter().map(|f| f.cell).collect::<Vec<_>>(), (0..6).map(|y| (2, y)).collect::<Vec<_>>());
        // unknown half outside the region does not count
        assert!(extract_frontiers(&g, &Rect::new(0.0, 0.0, 3.0, 6.0)).is_empty());
        let cl = cluster_frontiers(&f, 1);
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].cell, (2, 2));
    }

    #[test]
    fn cost_arithmetic() {
        let p = Pose2::IDENTITY;
        assert!((frontier_cost(Point2::new(10.0, 0.0), &p, 0.5) - 5.0).abs() < 1e-12);
        assert!((frontier_cost(Point2::new(-1.0, 0.0), &p, 0.5) - (PI + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn hysteresis_keeps_active() {
        let pose = Pose2::IDENTITY;
        let cfg = PlannerConfig { lambda: 1.0, ..Default::default() };
        let active = Frontier { cell: (0, 0), position: Point2::new(10.0, 0.0) };
        let challenger = Frontier { cell: (1, 0), position: Point2::new(9.9, 0.0) };
        let s = select_frontier(&[challenger], &pose, &cfg, Some(&active)).unwrap();
        assert_eq!(s.frontier, active);
        assert!(!s.switched);
        let close = Frontier { cell: (2, 0), position: Point2::new(7.0, 0.0) };
        assert_eq!(select_frontier(&[challenger, close], &pose, &cfg, Some(&active)).unwrap().frontier, close);
        assert!(matches!(select_frontier(&[], &pose, &cfg, None), Err(Error::NoFrontiers)));
        assert_eq!(select_frontier(&[challenger], &pose, &cfg, None).unwrap().frontier, challenger);
    }
}
