//! Log-odds 2D occupancy grid.

use crate::geometry::{Point2, Pose2};
use crate::sim::Scan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyParams {
    pub resolution: f64,
    pub hit: f32,
    pub miss: f32,
    pub clamp_min: f32,
    pub clamp_max: f32,
    pub occupied_threshold: f32,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        Self {
            resolution: 0.15,
            hit: 0.85,
            miss: -0.40,
            clamp_min: -4.0,
            clamp_max: 4.0,
            occupied_threshold: 0.5,
        }
    }
}

/// Fixed-extent grid; `origin` is the world position of the lower-left
/// corner of cell (0, 0). A cell is UNKNOWN until first updated, OCCUPIED
/// when its log-odds exceed the threshold and FREE otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid2D {
    pub params: OccupancyParams,
    pub origin: Point2,
    pub width: usize,
    pub height: usize,
    log_odds: Vec<f32>,
    observed: Vec<bool>,
}

pub type Cell = (usize, usize);

impl OccupancyGrid2D {
    pub fn new(origin: Point2, width: usize, height: usize, params: OccupancyParams) -> Self {
        Self {
            params,
            origin,
            width,
            height,
            log_odds: vec![0.0; width * height],
            observed: vec![false; width * height],
        }
    }

    /// Grid covering `[min, max]` at the given parameters.
    pub fn covering(min: Point2, max: Point2, params: OccupancyParams) -> Self {
        let w = ((max.x - min.x) / params.resolution).ceil().max(1.0) as usize;
        let h = ((max.y - min.y) / params.resolution).ceil().max(1.0) as usize;
        Self::new(min, w, h, params)
    }

    pub fn empty() -> Self {
        Self::new(Point2::ORIGIN, 0, 0, OccupancyParams::default())
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    fn idx(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn cell_of(&self, p: Point2) -> Option<Cell> {
        let fx = ((p.x - self.origin.x) / self.params.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.params.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_center(&self, c: Cell) -> Point2 {
        Point2::new(
            self.origin.x + (c.0 as f64 + 0.5) * self.params.resolution,
            self.origin.y + (c.1 as f64 + 0.5) * self.params.resolution,
        )
    }

    pub fn state(&self, c: Cell) -> CellState {
        let i = self.idx(c);
        if !self.observed[i] {
            CellState::Unknown
        } else if self.log_odds[i] > self.params.occupied_threshold {
            CellState::Occupied
        } else {
            CellState::Free
        }
    }

    pub fn log_odds(&self, c: Cell) -> f32 {
        self.log_odds[self.idx(c)]
    }

    pub fn set_state(&mut self, c: Cell, s: CellState) {
        let i = self.idx(c);
        match s {
            CellState::Unknown => {
                self.observed[i] = false;
                self.log_odds[i] = 0.0;
            }
            CellState::Free => {
                self.observed[i] = true;
                self.log_odds[i] = self.params.clamp_min;
            }
            CellState::Occupied => {
                self.observed[i] = true;
                self.log_odds[i] = self.params.clamp_max;
            }
        }
    }

    fn bump(&mut self, c: Cell, delta: f32) {
        let i = self.idx(c);
        self.observed[i] = true;
        self.log_odds[i] = (self.log_odds[i] + delta).clamp(self.params.clamp_min, self.params.clamp_max);
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| (x, y)))
    }

    pub fn count(&self, s: CellState) -> usize {
        self.cells().filter(|&c| self.state(c) == s).count()
    }

    /// Integrates one ray: cells strictly between `from` and `to` get a miss,
    /// the cell containing `to` a hit when `hit` is set (a miss otherwise).
    pub fn integrate_ray(&mut self, from: Point2, to: Point2, hit: bool) {
        let end_cell = self.cell_of(to);
        let miss = self.params.miss;
        let mut last = None;
        for c in traverse(self, from, to) {
            if Some(c) == end_cell {
                last = Some(c);
                break;
            }
            self.bump(c, miss);
        }
        if let Some(c) = last.or(end_cell) {
            self.bump(c, if hit { self.params.hit } else { miss });
        }
    }

    /// Applies a scan taken at `sensor_pose` (grid frame). Returns carve free
    /// space up to the endpoint and mark it occupied; missing returns carve
    /// free space out to `max_range`.
    pub fn update_occupancy(&mut self, scan: &Scan, sensor_pose: &Pose2) {
        let from = sensor_pose.translation();
        for b in &scan.beams {
            let (r, hit) = match b.range {
                Some(r) => (r, true),
                None => (scan.max_range, false),
            };
            let a = sensor_pose.theta + b.bearing;
            let to = from + Point2::new(r * a.cos(), r * a.sin());
            self.integrate_ray(from, to, hit);
        }
    }
}

/// Cells visited by the segment `from → to`, clipped to the grid, in order
/// (Amanatides–Woo traversal).
fn traverse(grid: &OccupancyGrid2D, from: Point2, to: Point2) -> Vec<Cell> {
    let res = grid.params.resolution;
    // grid-frame coordinates in cell units
    let mut p0 = Point2::new((from.x - grid.origin.x) / res, (from.y - grid.origin.y) / res);
    let p1 = Point2::new((to.x - grid.origin.x) / res, (to.y - grid.origin.y) / res);
    let (w, h) = (grid.width as f64, grid.height as f64);
    let d = p1 - p0;
    // Liang–Barsky clip against [0,w]×[0,h]
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, p0.x), (d.x, w - p0.x), (-d.y, p0.y), (d.y, h - p0.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return Vec::new();
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return Vec::new();
    }
    let end = p0 + d * t1;
    p0 = p0 + d * t0;
    let clampc = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
    let (mut x, mut y) = (clampc(p0.x, grid.width), clampc(p0.y, grid.height));
    let (ex, ey) = (clampc(end.x, grid.width), clampc(end.y, grid.height));
    let mut out = vec![(x, y)];
    let step_x: i64 = if d.x > 0.0 { 1 } else { -1 };
    let step_y: i64 = if d.y > 0.0 { 1 } else { -1 };
    let inv = |v: f64| if v == 0.0 { f64::INFINITY } else { 1.0 / v.abs() };
    let (dtx, dty) = (inv(d.x), inv(d.y));
    let next_bound = |pos: f64, cell: usize, step: i64| {
        if step > 0 {
            cell as f64 + 1.0 - pos
        } else {
            pos - cell as f64
        }
    };
    let mut tmax_x = if d.x == 0.0 { f64::INFINITY } else { next_bound(p0.x, x, step_x) * dtx };
    let mut tmax_y = if d.y == 0.0 { f64::INFINITY } else { next_bound(p0.y, y, step_y) * dty };
    let max_steps = grid.width + grid.height + 2;
    for _ in 0..max_steps {
        if (x, y) == (ex, ey) {
            break;
        }
        if tmax_x < tmax_y {
            let nx = x as i64 + step_x;
            if nx < 0 || nx >= grid.width as i64 {
                break;
            }
            x = nx as usize;
            tmax_x += dtx;
        } else {
            let ny = y as i64 + step_y;
            if ny < 0 || ny >= grid.height as i64 {
                break;
            }
            y = ny as usize;
            tmax_y += dty;
        }
        out.push((x, y));
    }
    out
}
