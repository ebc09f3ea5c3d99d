//! 8-connected A* on the occupancy grid with inflated obstacles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::submap::{Cell, CellState, OccupancyGrid2D};

/// Cells within `radius` of an OCCUPIED cell, row-major.
pub fn inflate(grid: &OccupancyGrid2D, radius: f64) -> Vec<bool> {
    let (w, h) = (grid.width, grid.height);
    let mut blocked = vec![false; w * h];
    let r = (radius / grid.resolution()).ceil() as i64;
    let r2 = (radius / grid.resolution()).powi(2);
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dx| (-r..=r).map(move |dy| (dx, dy)))
        .filter(|&(dx, dy)| (dx * dx + dy * dy) as f64 <= r2 + 1e-9)
        .collect();
    for c in grid.cells() {
        if grid.state(c) != CellState::Occupied {
            continue;
        }
        for &(dx, dy) in &offsets {
            let (x, y) = (c.0 as i64 + dx, c.1 as i64 + dy);
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                blocked[y as usize * w + x as usize] = true;
            }
        }
    }
    blocked
}

/// FREE and outside the inflated obstacles.
pub fn traversable(grid: &OccupancyGrid2D, blocked: &[bool], c: Cell) -> bool {
    grid.state(c) == CellState::Free && !blocked[c.1 * grid.width + c.0]
}

#[derive(PartialEq)]
struct Node {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on f, then larger g, then lower index
        o.f.total_cmp(&self.f).then(self.g.total_cmp(&o.g)).then(o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy)
}

/// Shortest 8-connected path from `start` to `goal` in cell units after
/// inflating OCCUPIED cells by `safety_radius`. UNKNOWN cells are not
/// traversable.
pub fn astar_plan(grid: &OccupancyGrid2D, start: Cell, goal: Cell, safety_radius: f64) -> Result<Vec<Cell>> {
    let blocked = inflate(grid, safety_radius);
    astar_masked(grid, start, goal, &blocked, false, 0)
}

/// A* against a precomputed inflation mask. Diagonal steps cost √2 and may
/// not cut the corner of a non-traversable cell. The start cell is always
/// allowed so that a vehicle inside an inflation margin can still leave it;
/// the goal must be traversable. With `allow_unknown`, UNKNOWN cells count
/// as free. FREE cells within `escape` cells (Chebyshev) of the start ignore
/// the inflation mask.
pub fn astar_masked(
    grid: &OccupancyGrid2D,
    start: Cell,
    goal: Cell,
    blocked: &[bool],
    allow_unknown: bool,
    escape: usize,
) -> Result<Vec<Cell>> {
    let w = grid.width;
    let n = w * grid.height;
    if start.0 >= grid.width || start.1 >= grid.height || goal.0 >= grid.width || goal.1 >= grid.height {
        return Err(Error::NoPath);
    }
    let passable = |c: Cell| {
        !blocked[c.1 * w + c.0]
            && match grid.state(c) {
                CellState::Free => true,
                CellState::Unknown => allow_unknown,
                CellState::Occupied => false,
            }
    };
    if !passable(goal) {
        return Err(Error::NoPath);
    }
    let near_start = |c: Cell| c.0.abs_diff(start.0).max(c.1.abs_diff(start.1)) <= escape;
    let ok = |c: Cell| {
        c == start || passable(c) || (near_start(c) && grid.state(c) == CellState::Free)
    };
    let idx = |c: Cell| c.1 * w + c.0;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[idx(start)] = 0.0;
    heap.push(Node { f: octile(start, goal), g: 0.0, idx: idx(start) });
    while let Some(Node { g: gc, idx: ci, .. }) = heap.pop() {
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        let c = (ci % w, ci / w);
        if c == goal {
            let mut path = vec![c];
            let mut k = ci;
            while parent[k] != usize::MAX {
                k = parent[k];
                path.push((k % w, k / w));
            }
            path.reverse();
            return Ok(path);
        }
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (c.0 as i64 + dx, c.1 as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= grid.height as i64 {
                    continue;
                }
                let nc = (nx as usize, ny as usize);
                if !ok(nc) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && !(ok((nx as usize, c.1)) && ok((c.0, ny as usize))) {
                    continue;
                }
                let ng = gc + if diagonal { SQRT_2 } else { 1.0 };
                let ni = idx(nc);
                if ng < g[ni] {
                    g[ni] = ng;
                    parent[ni] = ci;
                    heap.push(Node { f: ng + octile(nc, goal), g: ng, idx: ni });
                }
            }
        }
    }
    Err(Error::NoPath)
}

/// Path length in cell units.
pub fn path_length(path: &[Cell]) -> f64 {
    path.windows(2)
        .map(|w| if w[0].0 != w[1].0 && w[0].1 != w[1].1 { SQRT_2 } else { 1.0 })
        .sum()
}
