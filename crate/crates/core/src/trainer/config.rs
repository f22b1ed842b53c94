use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::critic::{Context, NoiseSchedule, CONTEXT_NAMES};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::policygrad::{PgConfig, PgMode};
use crate::renderer::{Camera, ParamGroup};
use crate::rewards::{RewardKind, RewardSpec};
use crate::sds::{SdsConfig, WeightMode};

/// Full description of a training run. Every key has a default; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Built-in target name (`disc`, `stripes`, `checker`).
    pub context: String,
    /// Per-pixel std of the critic's image prior around the target.
    pub prior_std: f64,
    pub schedule: ScheduleConfig,
    pub camera: CameraConfig,
    pub background: Vec3,
    pub init: InitConfig,
    pub sds: SdsSection,
    /// Differentiable rewards followed along their pathwise gradient.
    pub guidance: Vec<RewardSpec>,
    pub pg: PgSection,
    pub optimizer: OptimizerConfig,
    /// Write a canonical-view snapshot every this many iterations (0 = never).
    pub snapshot_every: usize,
    /// Record wall-clock columns in the metrics file; off keeps the file
    /// byte-reproducible.
    pub record_timing: bool,
    pub metrics_file: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub azimuth_min: f64,
    pub azimuth_max: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub width: usize,
    pub height: usize,
    /// World units per pixel.
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub n_gaussians: usize,
    pub position_std: f64,
    pub log_scale: f64,
    pub opacity_logit: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdsSection {
    pub enabled: bool,
    /// The SDS term is dropped from this iteration on.
    pub stop_after: Option<usize>,
    pub t_min_frac: f64,
    pub t_max_frac: f64,
    pub weight_mode: WeightMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgSection {
    pub enabled: bool,
    pub reward: RewardKind,
    pub mode: PgMode,
    /// Defaults to half the schedule length.
    pub t_start: Option<usize>,
    pub gamma: f64,
    pub baseline_decay: f64,
    pub pg_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr_position: f64,
    pub lr_log_scale: f64,
    pub lr_rotation: f64,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1500,
            seed: 0,
            context: "disc".into(),
            prior_std: 0.05,
            schedule: ScheduleConfig::default(),
            camera: CameraConfig::default(),
            background: [1.0, 1.0, 1.0],
            init: InitConfig::default(),
            sds: SdsSection::default(),
            guidance: Vec::new(),
            pg: PgSection::default(),
            optimizer: OptimizerConfig::default(),
            snapshot_every: 0,
            record_timing: false,
            metrics_file: "metrics.csv".into(),
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 50,
            beta_start: 1e-4,
            beta_end: 0.05,
        }
    }
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            azimuth_min: 0.0,
            azimuth_max: TAU,
            elevation_min: -PI / 6.0,
            elevation_max: PI / 6.0,
            width: 64,
            height: 64,
            scale: 1.0 / 32.0,
        }
    }
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            n_gaussians: 64,
            position_std: 0.3,
            log_scale: 0.05f64.ln(),
            opacity_logit: -2.0,
        }
    }
}

impl Default for SdsSection {
    fn default() -> Self {
        let base = SdsConfig::default();
        SdsSection {
            enabled: true,
            stop_after: None,
            t_min_frac: base.t_min_frac,
            t_max_frac: base.t_max_frac,
            weight_mode: base.weight_mode,
        }
    }
}

impl Default for PgSection {
    fn default() -> Self {
        let base = PgConfig::for_steps(ScheduleConfig::default().steps);
        PgSection {
            enabled: false,
            reward: RewardKind::Compression,
            mode: base.mode,
            t_start: None,
            gamma: base.gamma,
            baseline_decay: base.baseline_decay,
            pg_weight: 1e2,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr_position: 2e-3,
            lr_log_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_color: 1e-2,
            lr_opacity: 5e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl SdsSection {
    pub fn config(&self) -> SdsConfig {
        SdsConfig {
            t_min_frac: self.t_min_frac,
            t_max_frac: self.t_max_frac,
            weight_mode: self.weight_mode,
        }
    }

    /// Whether the term contributes at iteration `iter`.
    pub fn active(&self, iter: usize) -> bool {
        self.enabled && self.stop_after.is_none_or(|s| iter < s)
    }
}

impl PgSection {
    pub fn config(&self, steps: usize) -> PgConfig {
        PgConfig {
            mode: self.mode,
            t_start: self.t_start.unwrap_or(steps / 2),
            gamma: self.gamma,
            baseline_decay: self.baseline_decay,
            pg_weight: self.pg_weight,
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Position => self.lr_position,
            ParamGroup::LogScale => self.lr_log_scale,
            ParamGroup::Rotation => self.lr_rotation,
            ParamGroup::Color => self.lr_color,
            ParamGroup::Opacity => self.lr_opacity,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        // serde_json messages already carry the key and the line/column
        let config: TrainConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.schedule.steps, self.schedule.beta_start, self.schedule.beta_end)
    }

    pub fn context(&self) -> Result<Context> {
        Context::named(&self.context, self.camera.width, self.camera.height, self.prior_std)
    }

    /// Front view used for snapshots and target comparisons.
    pub fn canonical_camera(&self) -> Camera {
        Camera::new(0.0, 0.0, self.camera.width, self.camera.height, self.camera.scale)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sds.enabled || !self.guidance.is_empty() || self.pg.enabled) {
            return Err(invalid("at least one of sds, guidance or pg must be enabled"));
        }
        if let Some(s) = self.sds.stop_after {
            if s > self.iterations {
                return Err(invalid(format!(
                    "sds.stop_after {s} exceeds iterations {}",
                    self.iterations
                )));
            }
        }
        if !CONTEXT_NAMES.contains(&self.context.as_str()) {
            return Err(invalid(format!(
                "unknown context `{}` (expected one of {})",
                self.context,
                CONTEXT_NAMES.join(", ")
            )));
        }
        if !(self.prior_std.is_finite() && self.prior_std >= 0.0) {
            return Err(invalid(format!("prior_std {} must be >= 0", self.prior_std)));
        }
        let schedule = self.noise_schedule()?;
        let c = &self.camera;
        if !(c.azimuth_min.is_finite() && c.azimuth_max.is_finite() && c.azimuth_min <= c.azimuth_max) {
            return Err(invalid("camera azimuth range must be finite with min <= max"));
        }
        if c.elevation_min.is_nan() || c.elevation_max.is_nan() || c.elevation_min > c.elevation_max {
            return Err(invalid("camera elevation range must have min <= max"));
        }
        Camera::new(0.0, c.elevation_min, c.width, c.height, c.scale).validate()?;
        Camera::new(0.0, c.elevation_max, c.width, c.height, c.scale).validate()?;
        if !self.background.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(invalid("background components must lie in [0, 1]"));
        }
        let init = &self.init;
        if !(init.position_std.is_finite() && init.position_std >= 0.0) {
            return Err(invalid("init.position_std must be >= 0"));
        }
        if !(init.log_scale.is_finite() && init.opacity_logit.is_finite()) {
            return Err(invalid("init.log_scale and init.opacity_logit must be finite"));
        }
        self.sds.config().validate()?;
        for spec in &self.guidance {
            spec.validate_guidance()?;
        }
        self.pg.config(schedule.steps()).validate(schedule.steps())?;
        let o = &self.optimizer;
        for group in ParamGroup::ALL {
            let lr = o.lr(group);
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(invalid(format!("learning rate for {} must be >= 0", group.name())));
            }
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err(invalid("optimizer betas must lie in [0, 1)"));
        }
        if !(o.eps.is_finite() && o.eps > 0.0) {
            return Err(invalid("optimizer eps must be positive"));
        }
        if self.metrics_file.is_empty() {
            return Err(invalid("metrics_file must not be empty"));
        }
        Ok(())
    }
}
