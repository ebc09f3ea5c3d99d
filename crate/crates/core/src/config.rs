//! Line-oriented `key = value` configuration with command-line overrides.
//!
//! Blank lines and `#` comments are ignored. Later assignments win, so
//! overrides are simply applied after the file.

use std::str::FromStr;

use crate::clear::Assignment;
use crate::error::{Error, Result};
use crate::eval::SlamEvalConfig;
use crate::explore::{MissionConfig, PlannerKind};
use crate::pipeline::PipelineConfig;
use crate::sim::Rect;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    /// Number of seeds (or trials) an experiment runs.
    pub seeds: u64,
    pub density: f64,
    pub region: (f64, f64),
    pub agents: usize,
    pub densities: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub corrupt_min: f64,
    pub corrupt_max: f64,
    /// Range noise of the density sweep in `detect-eval`.
    pub sigma: f64,
    /// Mission length of `slam-eval`, seconds.
    pub eval_duration: f64,
    pub mission: MissionConfig,
    pub pipeline: PipelineConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 10,
            density: 0.2,
            region: (20.0, 20.0),
            agents: 1,
            densities: vec![0.05, 0.1, 0.2, 0.4],
            sigmas: vec![0.01, 0.03, 0.05, 0.08],
            epsilons: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6],
            corrupt_min: 0.05,
            corrupt_max: 0.20,
            sigma: 0.05,
            eval_duration: 300.0,
            mission: MissionConfig { drift: SlamEvalConfig::default().drift, ..MissionConfig::default() },
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Every key accepted by [`Settings::set`].
pub const KEYS: &[&str] = &[
    "seed",
    "seeds",
    "density",
    "region",
    "agents",
    "densities",
    "sigmas",
    "epsilons",
    "corrupt_min",
    "corrupt_max",
    "sigma",
    "eval_duration",
    "planner",
    "duration",
    "dt",
    "scan_period",
    "max_range",
    "fov_deg",
    "angular_resolution_deg",
    "range_noise_sigma",
    "v_max",
    "a_max",
    "yaw_rate_max",
    "resolution",
    "mapping_range",
    "detection_range",
    "drift_translation_sigma",
    "drift_rotation_sigma",
    "drift_bias_per_meter",
    "submap_period",
    "tau_cull",
    "dp_lambda",
    "residual_max",
    "min_radius",
    "min_arc_coverage",
    "lambda",
    "switch_margin",
    "safety_radius",
    "glarot_epsilon",
    "normalize_descriptors",
    "n_rho",
    "n_theta",
    "rho_max",
    "blur_sigma",
    "cg_epsilon",
    "cg_tau",
    "eigen_threshold",
    "assignment",
    "clear_refine",
    "odom_sigma_xy",
    "odom_sigma_theta",
    "observation_sigma",
    "lm_max_iterations",
    "lm_rel_tol",
    "lm_gradient_tol",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// `WxH` in meters, e.g. `20x20`.
pub fn parse_region(value: &str) -> Result<(f64, f64)> {
    let (w, h) = value.split_once(['x', 'X']).ok_or_else(|| Error::Config(format!("region must be WxH, got {value:?}")))?;
    let w: f64 = parse("region", w.trim())?;
    let h: f64 = parse("region", h.trim())?;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Config(format!("region must be positive, got {value:?}")));
    }
    Ok((w, h))
}

impl Settings {
    pub fn region_rect(&self) -> Rect {
        Rect::sized(self.region.0, self.region.1)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.mission;
        let p = &mut self.pipeline;
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "seeds" => self.seeds = parse(key, v)?,
            "density" => self.density = parse(key, v)?,
            "region" => self.region = parse_region(v)?,
            "agents" => {
                self.agents = parse(key, v)?;
                if !(1..=2).contains(&self.agents) {
                    return Err(Error::Config("agents must be 1 or 2".into()));
                }
            }
            "densities" => self.densities = parse_list(key, v)?,
            "sigmas" => self.sigmas = parse_list(key, v)?,
            "epsilons" => self.epsilons = parse_list(key, v)?,
            "corrupt_min" => self.corrupt_min = parse(key, v)?,
            "corrupt_max" => self.corrupt_max = parse(key, v)?,
            "sigma" => self.sigma = parse(key, v)?,
            "eval_duration" => self.eval_duration = parse(key, v)?,
            "planner" => {
                m.planner = match v {
                    "proposed" => PlannerKind::Proposed,
                    "baseline" => PlannerKind::Baseline,
                    _ => return Err(Error::Config(format!("planner must be proposed or baseline, got {v:?}"))),
                }
            }
            "duration" => m.duration_cap = parse(key, v)?,
            "dt" => m.dt = parse(key, v)?,
            "scan_period" => m.scan_period = parse(key, v)?,
            "max_range" => m.sensor.max_range = parse(key, v)?,
            "fov_deg" => m.sensor.fov = parse::<f64>(key, v)?.to_radians(),
            "angular_resolution_deg" => m.sensor.angular_resolution = parse::<f64>(key, v)?.to_radians(),
            "range_noise_sigma" => m.sensor.range_noise_sigma = parse(key, v)?,
            "v_max" => m.limits.v_max = parse(key, v)?,
            "a_max" => m.limits.a_max = parse(key, v)?,
            "yaw_rate_max" => m.limits.yaw_rate_max = parse(key, v)?,
            "resolution" => m.occupancy.resolution = parse(key, v)?,
            "mapping_range" => m.mapping_range = parse(key, v)?,
            "detection_range" => m.detection_range = parse(key, v)?,
            "drift_translation_sigma" => m.drift.translation_sigma = parse(key, v)?,
            "drift_rotation_sigma" => m.drift.rotation_sigma = parse(key, v)?,
            "drift_bias_per_meter" => m.drift.bias_per_meter.theta = parse(key, v)?,
            "submap_period" => m.submap_period = parse(key, v)?,
            "tau_cull" => m.tau_cull = parse(key, v)?,
            "dp_lambda" => m.dp_means.penalty_lambda = parse(key, v)?,
            "residual_max" => m.gate.max_residual = parse(key, v)?,
            "min_radius" => m.gate.min_radius = parse(key, v)?,
            "min_arc_coverage" => m.gate.min_arc_coverage = parse(key, v)?,
            "lambda" => m.planner_cfg.lambda = parse(key, v)?,
            "switch_margin" => m.planner_cfg.switch_margin = parse(key, v)?,
            "safety_radius" => m.planner_cfg.safety_radius = parse(key, v)?,
            "glarot_epsilon" => p.glarot_epsilon = parse(key, v)?,
            "normalize_descriptors" => p.normalize_descriptors = parse(key, v)?,
            "n_rho" => p.glare.n_rho = parse(key, v)?,
            "n_theta" => p.glare.n_theta = parse(key, v)?,
            "rho_max" => p.glare.rho_max = parse(key, v)?,
            "blur_sigma" => p.glare.blur_sigma = parse(key, v)?,
            "cg_epsilon" => p.cg.epsilon = parse(key, v)?,
            "cg_tau" => p.cg.tau = parse(key, v)?,
            "eigen_threshold" => p.clear.eigen_threshold = parse(key, v)?,
            "assignment" => {
                p.clear.assignment = match v {
                    "greedy" => Assignment::Greedy,
                    "hungarian" => Assignment::Hungarian,
                    _ => return Err(Error::Config(format!("assignment must be greedy or hungarian, got {v:?}"))),
                }
            }
            "clear_refine" => p.clear.refine = parse(key, v)?,
            "odom_sigma_xy" => p.noise.odom_sigma_xy = parse(key, v)?,
            "odom_sigma_theta" => p.noise.odom_sigma_theta = parse(key, v)?,
            "observation_sigma" => p.noise.observation_sigma = parse(key, v)?,
            "lm_max_iterations" => p.lm.max_iterations = parse(key, v)?,
            "lm_rel_tol" => p.lm.rel_cost_tol = parse(key, v)?,
            "lm_gradient_tol" => p.lm.gradient_tol = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in a config text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override must be key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    /// Every key with its current value, in [`KEYS`] order; feeding the
    /// result back through [`Settings::apply_text`] reproduces the settings.
    pub fn to_text(&self) -> String {
        let m = &self.mission;
        let p = &self.pipeline;
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let planner = match m.planner {
            PlannerKind::Baseline => "baseline",
            _ => "proposed",
        };
        let assignment = match p.clear.assignment {
            Assignment::Greedy => "greedy",
            Assignment::Hungarian => "hungarian",
        };
        let values: Vec<String> = vec![
            self.seed.to_string(),
            self.seeds.to_string(),
            self.density.to_string(),
            format!("{}x{}", self.region.0, self.region.1),
            self.agents.to_string(),
            list(&self.densities),
            list(&self.sigmas),
            list(&self.epsilons),
            self.corrupt_min.to_string(),
            self.corrupt_max.to_string(),
            self.sigma.to_string(),
            self.eval_duration.to_string(),
            planner.to_string(),
            m.duration_cap.to_string(),
            m.dt.to_string(),
            m.scan_period.to_string(),
            m.sensor.max_range.to_string(),
            m.sensor.fov.to_degrees().to_string(),
            m.sensor.angular_resolution.to_degrees().to_string(),
            m.sensor.range_noise_sigma.to_string(),
            m.limits.v_max.to_string(),
            m.limits.a_max.to_string(),
            m.limits.yaw_rate_max.to_string(),
            m.occupancy.resolution.to_string(),
            m.mapping_range.to_string(),
            m.detection_range.to_string(),
            m.drift.translation_sigma.to_string(),
            m.drift.rotation_sigma.to_string(),
            m.drift.bias_per_meter.theta.to_string(),
            m.submap_period.to_string(),
            m.tau_cull.to_string(),
            m.dp_means.penalty_lambda.to_string(),
            m.gate.max_residual.to_string(),
            m.gate.min_radius.to_string(),
            m.gate.min_arc_coverage.to_string(),
            m.planner_cfg.lambda.to_string(),
            m.planner_cfg.switch_margin.to_string(),
            m.planner_cfg.safety_radius.to_string(),
            p.glarot_epsilon.to_string(),
            p.normalize_descriptors.to_string(),
            p.glare.n_rho.to_string(),
            p.glare.n_theta.to_string(),
            p.glare.rho_max.to_string(),
            p.glare.blur_sigma.to_string(),
            p.cg.epsilon.to_string(),
            p.cg.tau.to_string(),
            p.clear.eigen_threshold.to_string(),
            assignment.to_string(),
            p.clear.refine.to_string(),
            p.noise.odom_sigma_xy.to_string(),
            p.noise.odom_sigma_theta.to_string(),
            p.noise.observation_sigma.to_string(),
            p.lm.max_iterations.to_string(),
            p.lm.rel_cost_tol.to_string(),
            p.lm.gradient_tol.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut s = Settings::default();
        s.apply_text("# comment\nseed = 7\n\ncg_epsilon = 0.2  # trailing\nregion = 30x10\n").unwrap();
        s.apply_override("seed=9").unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.pipeline.cg.epsilon, 0.2);
        assert_eq!(s.region, (30.0, 10.0));
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let mut s = Settings::default();
        assert!(matches!(s.set("nope", "1"), Err(Error::Config(_))));
        assert!(s.set("seed", "x").is_err());
        assert!(s.apply_text("seed 3").is_err());
        assert!(s.set("region", "20").is_err());
        assert!(s.set("planner", "random").is_err());
    }

    #[test]
    fn text_round_trip_covers_every_key() {
        let mut s = Settings::default();
        s.apply_text("planner = baseline\nassignment = hungarian\nsigmas = 0.02,0.04\n").unwrap();
        let text = s.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        let mut back = Settings::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, s);
    }
}
