//! GLARE pair-geometry histograms and the rotation-invariant GLAROT
//! shifted-L1 distance used to pick loop-closure candidates.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::submap::SubmapId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlareConfig {
    pub n_rho: usize,
    pub n_theta: usize,
    pub rho_max: f64,
    /// Blur standard deviation in bin units; zero disables the blur.
    pub blur_sigma: f64,
}

impl Default for GlareConfig {
    fn default() -> Self {
        Self { n_rho: 120, n_theta: 12, rho_max: 30.0, blur_sigma: 0.1 }
    }
}

/// `n_rho × n_theta` histogram stored row-major by ρ bin.
#[derive(Debug, Clone, PartialEq)]
pub struct GlareDescriptor {
    pub n_rho: usize,
    pub n_theta: usize,
    pub rho_max: f64,
    data: Vec<f64>,
}

const KERNEL_HALF: i64 = 2;

impl GlareDescriptor {
    pub fn zeros(n_rho: usize, n_theta: usize, rho_max: f64) -> Self {
        Self { n_rho, n_theta, rho_max, data: vec![0.0; n_rho * n_theta] }
    }

    pub fn from_data(n_rho: usize, n_theta: usize, rho_max: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rho * n_theta {
            return Err(Error::DimensionMismatch((n_rho, n_theta), (data.len(), 1)));
        }
        Ok(Self { n_rho, n_theta, rho_max, data })
    }

    pub fn get(&self, i_rho: usize, j_theta: usize) -> f64 {
        self.data[i_rho * self.n_theta + j_theta]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Copy scaled to unit L1 mass; an all-zero descriptor stays zero.
    pub fn normalized(&self) -> Self {
        let s = self.sum();
        let mut out = self.clone();
        if s > 0.0 {
            out.data.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n_rho {
            let row: Vec<String> = (0..self.n_theta).map(|j| format!("{}", self.get(i, j))).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    fn add_pair(&mut self, rho_bin: usize, theta_bin: usize, sigma: f64) {
        if sigma <= 0.0 {
            self.data[rho_bin * self.n_theta + theta_bin] += 1.0;
            return;
        }
        let mut cells = Vec::with_capacity(25);
        let mut total = 0.0;
        for di in -KERNEL_HALF..=KERNEL_HALF {
            let i = rho_bin as i64 + di;
            if i < 0 || i >= self.n_rho as i64 {
                continue;
            }
            for dj in -KERNEL_HALF..=KERNEL_HALF {
                let j = (theta_bin as i64 + dj).rem_euclid(self.n_theta as i64);
                let w = (-((di * di + dj * dj) as f64) / (2.0 * sigma * sigma)).exp();
                cells.push((i as usize * self.n_theta + j as usize, w));
                total += w;
            }
        }
        for (idx, w) in cells {
            self.data[idx] += w / total;
        }
    }
}

/// Bin indices for one pair, or `None` when farther apart than `rho_max`.
pub fn pair_bins(a: Point2, b: Point2, cfg: &GlareConfig) -> Option<(usize, usize)> {
    let d = b - a;
    let rho = d.norm();
    if rho > cfg.rho_max {
        return None;
    }
    let theta = d.y.atan2(d.x).rem_euclid(PI);
    let i = ((rho / cfg.rho_max * cfg.n_rho as f64).floor() as usize).min(cfg.n_rho - 1);
    let j = ((theta / PI * cfg.n_theta as f64).floor() as usize).min(cfg.n_theta - 1);
    Some((i, j))
}

pub fn build_glare(points: &[Point2], cfg: &GlareConfig) -> GlareDescriptor {
    let mut g = GlareDescriptor::zeros(cfg.n_rho, cfg.n_theta, cfg.rho_max);
    for (k, &a) in points.iter().enumerate() {
        for &b in &points[k + 1..] {
            if let Some((i, j)) = pair_bins(a, b, cfg) {
                g.add_pair(i, j, cfg.blur_sigma);
            }
        }
    }
    g
}

/// `min_k Σ |G_t[i][j] − G_s[i][(j+k) mod N_θ]|`.
pub fn glarot_distance(gs: &GlareDescriptor, gt: &GlareDescriptor) -> Result<f64> {
    if (gs.n_rho, gs.n_theta) != (gt.n_rho, gt.n_theta) {
        return Err(Error::DimensionMismatch((gs.n_rho, gs.n_theta), (gt.n_rho, gt.n_theta)));
    }
    let nt = gs.n_theta;
    let mut best = f64::INFINITY;
    for k in 0..nt {
        let mut acc = 0.0;
        for i in 0..gs.n_rho {
            let rs = &gs.data[i * nt..(i + 1) * nt];
            let rt = &gt.data[i * nt..(i + 1) * nt];
            for j in 0..nt {
                acc += (rt[j] - rs[(j + k) % nt]).abs();
            }
        }
        best = best.min(acc);
    }
    Ok(if nt == 0 { 0.0 } else { best })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub s: SubmapId,
    pub t: SubmapId,
    pub distance: f64,
}

/// All unordered pairs with distance below `epsilon`, ordered by position in
/// `descriptors`. With `skip_consecutive`, same-agent neighbours in sequence
/// are left out.
pub fn find_candidates(
    descriptors: &[(SubmapId, GlareDescriptor)],
    epsilon: f64,
    skip_consecutive: bool,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for (a, (sa, ga)) in descriptors.iter().enumerate() {
        for (sb, gb) in &descriptors[a + 1..] {
            if sa == sb {
                continue;
            }
            if skip_consecutive && sa.agent == sb.agent && sa.seq.abs_diff(sb.seq) == 1 {
                continue;
            }
            let d = glarot_distance(ga, gb)?;
            if d < epsilon {
                out.push(Candidate { s: *sa, t: *sb, distance: d });
            }
        }
    }
    Ok(out)
}

pub fn candidates_csv(cands: &[Candidate]) -> String {
    let mut s = String::from("s,t,distance\n");
    for c in cands {
        let _ = writeln!(s, "{},{},{:.6}", c.s, c.t, c.distance);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb() -> GlareConfig {
        GlareConfig { blur_sigma: 0.0, ..GlareConfig::default() }
    }

    #[test]
    fn too_few_trees_give_zero() {
        assert_eq!(build_glare(&[], &nb()).sum(), 0.0);
        assert_eq!(build_glare(&[Point2::new(1.0, 2.0)], &GlareConfig::default()).sum(), 0.0);
    }

    #[test]
    fn single_pair_unblurred() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(5.0 * 0.6f64.cos(), 5.0 * 0.6f64.sin());
        let g = build_glare(&[a, b], &nb());
        assert_eq!(g.sum(), 1.0);
        // 5 m in 0.25 m bins, 0.6 rad in π/12 bins
        assert_eq!(g.get(20, 2), 1.0);
    }

    #[test]
    fn far_pairs_are_dropped() {
        let g = build_glare(&[Point2::new(0.0, 0.0), Point2::new(31.0, 0.0)], &nb());
        assert_eq!(g.sum(), 0.0);
    }

    #[test]
    fn blurred_mass_is_one_per_pair() {
        let cfg = GlareConfig { blur_sigma: 1.0, ..GlareConfig::default() };
        let pts = [Point2::new(0.0, 0.0), Point2::new(0.05, 0.0), Point2::new(3.0, 1.0)];
        let g = build_glare(&pts, &cfg);
        assert!((g.sum() - 3.0).abs() < 1e-12);
        // the 0.05 m pair sits at the ρ edge and spreads across θ = 0 wraparound
        assert!(g.get(0, 11) > 0.0 && g.get(1, 0) > 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = GlareDescriptor::zeros(4, 3, 1.0);
        let b = GlareDescriptor::zeros(4, 4, 1.0);
        assert!(matches!(glarot_distance(&a, &b), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn candidates_respect_threshold_and_flags() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(2.0, 1.0), Point2::new(-1.0, 4.0)];
        let g = build_glare(&pts, &GlareConfig::default());
        let other = build_glare(&[Point2::new(0.0, 0.0), Point2::new(9.0, 0.0)], &GlareConfig::default());
        let set = vec![
            (SubmapId::new(0, 0), g.clone()),
            (SubmapId::new(0, 1), g.clone()),
            (SubmapId::new(1, 0), g),
            (SubmapId::new(1, 1), other),
        ];
        assert!(find_candidates(&set[..1], 1.0, false).unwrap().is_empty());
        let all = find_candidates(&set, 1e-9, false).unwrap();
        assert_eq!(all.len(), 3);
        let skip = find_candidates(&set, 1e-9, true).unwrap();
        assert_eq!(skip.len(), 2);
        assert!(skip.iter().all(|c| c.distance == 0.0));
    }
}
